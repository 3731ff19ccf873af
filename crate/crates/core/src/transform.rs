//! Componentwise gradient transforms.
//!
//! The signed-power map `h_ν(x) = sign(x)·|x|^ν` interpolates between the raw
//! gradient (`ν = 1`) and its sign (`ν = 0`). Magnitude clipping and the pure
//! sign are provided as the comparison cases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlSpec {
    nu: f64,
    epsilon_floor: f64,
}

impl NlSpec {
    pub fn new(nu: f64) -> Result<Self> {
        Self::with_floor(nu, 0.0)
    }

    /// Below `epsilon_floor` the map is linear through `h_ν(floor)`, which
    /// stops tiny noise gradients from being blown up as `ν → 0`.
    pub fn with_floor(nu: f64, epsilon_floor: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::param(alloc::format!("nu must lie in [0, 1], got {nu}")));
        }
        if !(epsilon_floor >= 0.0) || !epsilon_floor.is_finite() {
            return Err(Error::param(alloc::format!(
                "epsilon_floor must be finite and >= 0, got {epsilon_floor}"
            )));
        }
        Ok(Self { nu, epsilon_floor })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn epsilon_floor(&self) -> f64 {
        self.epsilon_floor
    }

    /// Scalar form of the transform.
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        if self.epsilon_floor > 0.0 && libm::fabs(x) < self.epsilon_floor {
            return power_sign(self.epsilon_floor, self.nu) * (x / self.epsilon_floor);
        }
        power_sign(x, self.nu)
    }
}

/// `sign(x)·|x|^ν` with `h(0) = 0` for every `ν`, including `ν = 0`.
#[inline]
pub fn power_sign(x: f64, nu: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if nu == 1.0 {
        return x;
    }
    let mag = if nu == 0.0 { 1.0 } else { libm::pow(libm::fabs(x), nu) };
    if x < 0.0 {
        -mag
    } else {
        mag
    }
}

#[inline]
pub fn sign(x: f64) -> f64 {
    power_sign(x, 0.0)
}

pub fn apply_power_sign(g: &Tensor, spec: &NlSpec) -> Tensor {
    g.elementwise(|x| spec.apply(x))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    threshold: f64,
}

impl ClipSpec {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(Error::param(alloc::format!(
                "clip threshold must be > 0, got {threshold}"
            )));
        }
        Ok(Self { threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        if libm::fabs(x) > self.threshold {
            if x < 0.0 {
                -self.threshold
            } else {
                self.threshold
            }
        } else {
            x
        }
    }
}

/// Sign-preserving magnitude clip, `sign(x)·min(|x|, t)`, per entry.
pub fn apply_clip(g: &Tensor, spec: &ClipSpec) -> Tensor {
    g.elementwise(|x| spec.apply(x))
}

pub fn apply_sign(g: &Tensor) -> Tensor {
    g.elementwise(sign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn square_root_example() {
        let s = NlSpec::new(0.5).unwrap();
        assert!((s.apply(0.04) - 0.2).abs() < 1e-15);
        assert!((s.apply(-0.04) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn nu_one_is_identity() {
        let g = Tensor::vector(vec![0.3, -1e-9, 7.5, 0.0, -123.0]);
        assert_eq!(apply_power_sign(&g, &NlSpec::new(1.0).unwrap()), g);
    }

    #[test]
    fn nu_zero_is_sign() {
        let g = Tensor::vector(vec![-3.0, 0.0, 7.0]);
        let h = apply_power_sign(&g, &NlSpec::new(0.0).unwrap());
        assert_eq!(h.data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_maps_to_zero() {
        for nu in [0.0, 0.3, 1.0] {
            assert_eq!(power_sign(0.0, nu), 0.0);
        }
    }

    #[test]
    fn nu_out_of_range() {
        assert!(NlSpec::new(1.5).is_err());
        assert!(NlSpec::new(-0.1).is_err());
        assert!(NlSpec::new(f64::NAN).is_err());
    }

    #[test]
    fn floor_is_linear_below_threshold() {
        let s = NlSpec::with_floor(0.5, 0.01).unwrap();
        let at_floor = s.apply(0.01);
        assert!((at_floor - 0.1).abs() < 1e-15);
        assert!((s.apply(0.005) - 0.05).abs() < 1e-15);
        assert!((s.apply(-0.0025) + 0.025).abs() < 1e-15);
        assert!((s.apply(0.04) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn clip_examples() {
        let c = ClipSpec::new(1.0).unwrap();
        let g = Tensor::vector(vec![0.5, 2.0, -3.0]);
        assert_eq!(apply_clip(&g, &c).data(), &[0.5, 1.0, -1.0]);

        let huge = ClipSpec::new(1e300).unwrap();
        assert_eq!(apply_clip(&g, &huge), g);

        let small = Tensor::vector(vec![0.1, -0.05, 0.0]);
        assert_eq!(apply_clip(&small, &ClipSpec::new(0.1).unwrap()), small);
    }

    #[test]
    fn clip_threshold_positive() {
        assert!(ClipSpec::new(0.0).is_err());
        assert!(ClipSpec::new(-1.0).is_err());
    }
}
