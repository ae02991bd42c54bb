//! Flat binary dataset cache.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "RCDSET01"
//! n        u32      feature dimension
//! L        u32      class count
//! count    u32      examples
//! features count * n f32, row-major
//! labels   count u8
//! ```
//!
//! Features pass through `f32`, so a cached dataset is the source of truth
//! for every command that reads it.

use std::path::Path;

use regionclf_core::Dataset;

use crate::error::{Error, Result};
use crate::fsutil;

pub const MAGIC: &[u8; 8] = b"RCDSET01";
const HEADER: usize = 8 + 12;

pub fn encode(data: &Dataset) -> Result<Vec<u8>> {
    if data.class_count() > 256 {
        return Err(Error::usage(
            "the cache stores labels as bytes (at most 256 classes)",
        ));
    }
    let mut out = Vec::with_capacity(HEADER + data.features().len() * 4 + data.len());
    out.extend_from_slice(MAGIC);
    for v in [data.feature_dim(), data.class_count(), data.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &f in data.features() {
        out.extend_from_slice(&(f as f32).to_le_bytes());
    }
    out.extend(data.labels().iter().map(|&l| l as u8));
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Dataset> {
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(Error::format(path, "not a dataset cache (bad magic)"));
    }
    let word = |i: usize| {
        let at = 8 + 4 * i;
        u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as usize
    };
    let (n, l, count) = (word(0), word(1), word(2));
    let expected = HEADER + count * n * 4 + count;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("cache is {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    let feat_end = HEADER + count * n * 4;
    let features = bytes[HEADER..feat_end]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let labels = bytes[feat_end..].iter().map(|&b| usize::from(b)).collect();
    Dataset::new(features, labels, n, l).map_err(|e| Error::format(path, e.to_string()))
}

pub fn save(path: &Path, data: &Dataset) -> Result<()> {
    fsutil::write_atomic(path, &encode(data)?)
}

pub fn load(path: &Path) -> Result<Dataset> {
    decode(&fsutil::read(path)?, path)
}
