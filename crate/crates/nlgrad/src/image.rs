//! Flat binary image sets.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `NLIM` |
//! | 4     | format version (1) |
//! | 4     | sample count `n` |
//! | 4     | pixels per sample `p` |
//! | 4     | class count `k` |
//! | n·p   | pixel bytes, row-major |
//! | n     | labels, each below `k` |
//!
//! Pixels are scaled to `[0, 1]` on load.

use std::path::Path;

use nlgrad_core::problems::ClassificationData;
use nlgrad_core::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NLIM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

fn bad(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line: 0, message: message.into() }
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

pub fn decode_image_set(bytes: &[u8], path: &Path) -> Result<ClassificationData> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad(path, "not an image set (bad magic)"));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(bad(path, format!("unsupported image set version {version}")));
    }
    let n = u32_at(bytes, 8) as usize;
    let p = u32_at(bytes, 12) as usize;
    let k = u32_at(bytes, 16) as usize;
    if n == 0 || p == 0 || k < 2 {
        return Err(bad(path, format!("degenerate header: {n} samples, {p} pixels, {k} classes")));
    }
    let want = n
        .checked_mul(p)
        .and_then(|np| np.checked_add(n + HEADER_LEN))
        .ok_or_else(|| bad(path, "header sizes overflow"))?;
    if bytes.len() != want {
        return Err(bad(path, format!("expected {want} bytes, found {}", bytes.len())));
    }
    let pixels = &bytes[HEADER_LEN..HEADER_LEN + n * p];
    let labels: Vec<usize> = bytes[HEADER_LEN + n * p..].iter().map(|&l| l as usize).collect();
    if let Some(l) = labels.iter().find(|&&l| l >= k) {
        return Err(bad(path, format!("label {l} out of range for {k} classes")));
    }
    let inputs = Tensor::matrix(n, p, pixels.iter().map(|&b| f64::from(b) / 255.0).collect())?;
    Ok(ClassificationData::new(inputs, labels, k)?)
}

pub fn encode_image_set(pixels: &[u8], pixels_per_sample: usize, labels: &[u8], n_classes: usize) -> Result<Vec<u8>> {
    if pixels_per_sample == 0 || pixels.len() != labels.len() * pixels_per_sample {
        return Err(Error::invalid("pixel buffer does not match sample count"));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + pixels.len() + labels.len());
    out.extend_from_slice(MAGIC);
    for v in [VERSION, labels.len() as u32, pixels_per_sample as u32, n_classes as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(pixels);
    out.extend_from_slice(labels);
    Ok(out)
}

pub fn read_image_set(path: &Path) -> Result<ClassificationData> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image_set(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let bytes = encode_image_set(&[0, 255, 51, 102], 2, &[1, 0], 2).unwrap();
        let d = decode_image_set(&bytes, Path::new("mem")).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.inputs.data(), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(d.labels, vec![1, 0]);
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = encode_image_set(&[1, 2, 3, 4], 2, &[1, 0], 2).unwrap();
        assert!(decode_image_set(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        bytes[HEADER_LEN + 4] = 7;
        assert!(decode_image_set(&bytes, Path::new("x")).is_err());
        bytes[0] = b'X';
        assert!(decode_image_set(&bytes, Path::new("x")).is_err());
    }
}
