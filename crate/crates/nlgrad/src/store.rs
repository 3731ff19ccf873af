//! Append-only JSON-lines store of run records, search results and grids.
//!
//! Every line is an envelope `{"schema", "key", "type", "body"}` where `key`
//! is the SHA-256 of the compact JSON of the tagged item. Storing an item
//! whose key is already present is a no-op, so identical records are kept
//! once. A trailing line without its newline (an interrupted append) is
//! ignored by readers.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nlgrad_core::search::{Grid, SearchResult};
use nlgrad_core::train::RunRecord;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_MAJOR: u32 = 1;
pub const SCHEMA_MINOR: u32 = 0;
pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum StoredItem {
    Run(Box<RunRecord>),
    Search(Box<SearchResult>),
    Grid(Box<Grid>),
}

impl From<RunRecord> for StoredItem {
    fn from(r: RunRecord) -> Self {
        StoredItem::Run(Box::new(r))
    }
}

impl From<SearchResult> for StoredItem {
    fn from(r: SearchResult) -> Self {
        StoredItem::Search(Box::new(r))
    }
}

impl From<Grid> for StoredItem {
    fn from(g: Grid) -> Self {
        StoredItem::Grid(Box::new(g))
    }
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    schema: String,
    key: &'a str,
    #[serde(flatten)]
    item: &'a StoredItem,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    schema: String,
    key: String,
    #[serde(flatten)]
    item: StoredItem,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub item: StoredItem,
}

/// Hex SHA-256 of the item's compact JSON encoding.
pub fn content_key(item: &StoredItem) -> Result<String> {
    let bytes = serde_json::to_vec(item).map_err(|e| Error::invalid(format!("encoding record: {e}")))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn check_schema(found: &str) -> Result<()> {
    let major = found.split('.').next().and_then(|m| m.parse::<u32>().ok());
    if major == Some(SCHEMA_MAJOR) {
        Ok(())
    } else {
        Err(Error::Schema { found: found.to_string(), supported: SCHEMA_MAJOR })
    }
}

/// Parse one stored line.
pub fn decode_line(line: &str) -> std::result::Result<Entry, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let schema = value.get("schema").and_then(|s| s.as_str()).ok_or("missing schema field")?;
    check_schema(schema).map_err(|e| e.to_string())?;
    let env: EnvelopeIn = serde_json::from_value(value).map_err(|e| e.to_string())?;
    debug_assert!(!env.schema.is_empty());
    Ok(Entry { key: env.key, item: env.item })
}

/// Encode one line (without the trailing newline).
pub fn encode_line(item: &StoredItem) -> Result<(String, String)> {
    let key = content_key(item)?;
    let env = EnvelopeOut { schema: format!("{SCHEMA_MAJOR}.{SCHEMA_MINOR}"), key: &key, item };
    let line = serde_json::to_string(&env).map_err(|e| Error::invalid(format!("encoding record: {e}")))?;
    Ok((key, line))
}

/// Directory-backed store. Appends go through `&mut self`, so a single
/// handle is the single writer.
#[derive(Debug)]
pub struct RecordStore {
    dir: PathBuf,
    keys: HashSet<String>,
}

impl RecordStore {
    /// Open (creating if needed) the store in `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut store = Self { dir, keys: HashSet::new() };
        store.keys = store.entries()?.into_iter().map(|e| e.key).collect();
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self) -> PathBuf {
        self.dir.join(RECORDS_FILE)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.keys.contains(key)
    }

    /// Append `item` unless an identical item is stored; returns its key.
    pub fn append(&mut self, item: &StoredItem) -> Result<String> {
        let (key, line) = encode_line(item)?;
        if self.keys.contains(&key) {
            return Ok(key);
        }
        let path = self.path();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        f.write_all(format!("{line}\n").as_bytes()).map_err(|e| Error::io(&path, e))?;
        f.flush().map_err(|e| Error::io(&path, e))?;
        self.keys.insert(key.clone());
        Ok(key)
    }

    /// Every complete entry in append order.
    pub fn entries(&self) -> Result<Vec<Entry>> {
        let path = self.path();
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let mut reader = BufReader::new(file);
        let mut out = Vec::new();
        let mut buf = String::new();
        let mut line_no = 0;
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf).map_err(|e| Error::io(&path, e))?;
            line_no += 1;
            if n == 0 || !buf.ends_with('\n') {
                break;
            }
            let line = buf.trim_end();
            if line.is_empty() {
                continue;
            }
            match decode_line(line) {
                Ok(entry) => out.push(entry),
                Err(message) => {
                    if let Some(found) = schema_of(line).filter(|s| check_schema(s).is_err()) {
                        return Err(Error::Schema { found, supported: SCHEMA_MAJOR });
                    }
                    return Err(Error::Parse { path, line: line_no, message });
                }
            }
        }
        Ok(out)
    }

    pub fn get(&self, key: &str) -> Result<Option<StoredItem>> {
        Ok(self.entries()?.into_iter().find(|e| e.key == key).map(|e| e.item))
    }

    pub fn runs(&self) -> Result<Vec<RunRecord>> {
        Ok(self
            .entries()?
            .into_iter()
            .filter_map(|e| match e.item {
                StoredItem::Run(r) => Some(*r),
                _ => None,
            })
            .collect())
    }

    pub fn grids(&self) -> Result<Vec<(String, Grid)>> {
        Ok(self
            .entries()?
            .into_iter()
            .filter_map(|e| match e.item {
                StoredItem::Grid(g) => Some((e.key, *g)),
                _ => None,
            })
            .collect())
    }
}

fn schema_of(line: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(line).ok()?;
    v.get("schema")?.as_str().map(str::to_string)
}

/// Store every record and return the keys in input order.
pub fn write_records(store: &mut RecordStore, records: &[RunRecord]) -> Result<Vec<String>> {
    records.iter().map(|r| store.append(&StoredItem::Run(Box::new(r.clone())))).collect()
}
