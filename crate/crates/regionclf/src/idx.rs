//! The IDX container used by the MNIST distribution.
//!
//! A file is a big-endian `u32` magic (2051 for images, 2049 for labels),
//! big-endian `u32` dimensions (count, then rows and cols for images) and
//! the raw bytes, row-major. Gzip-compressed files are recognized by their
//! magic bytes and decompressed transparently. Pixels map to `b / 255`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use regionclf_core::Dataset;

use crate::error::{Error, Result};
use crate::fsutil;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
pub const MNIST_CLASSES: usize = 10;

/// Raw image bytes as stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn feature_dim(&self) -> usize {
        self.rows * self.cols
    }

    /// Pixels scaled to `[0, 1]` by `b / 255`.
    pub fn features(&self) -> Vec<f64> {
        self.pixels.iter().map(|&b| f64::from(b) / 255.0).collect()
    }
}

/// File contents, gunzipped if they start with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fsutil::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format(path, format!("bad gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, "truncated header"))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let magic = be_u32(bytes, 0, path)?;
    if magic == expected {
        return Ok(());
    }
    let hint = match magic {
        IMAGE_MAGIC => " (this is an image file)",
        LABEL_MAGIC => " (this is a label file)",
        _ => "",
    };
    Err(Error::format(
        path,
        format!("expected IDX magic {expected}, found {magic}{hint}"),
    ))
}

fn body<'a>(bytes: &'a [u8], header: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    let have = bytes.len().saturating_sub(header);
    if have < len {
        return Err(Error::format(
            path,
            format!("truncated: header declares {len} data bytes, file has {have}"),
        ));
    }
    if have > len {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after the declared data", have - len),
        ));
    }
    Ok(&bytes[header..])
}

pub fn parse_images(bytes: &[u8], path: &Path) -> Result<IdxImages> {
    check_magic(bytes, IMAGE_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(path, "declared size overflows"))?;
    let pixels = body(bytes, 16, len, path)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_labels(bytes: &[u8], path: &Path, class_count: Option<usize>) -> Result<Vec<usize>> {
    check_magic(bytes, LABEL_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let data = body(bytes, 8, count, path)?;
    let labels: Vec<usize> = data.iter().map(|&b| usize::from(b)).collect();
    if let Some(l) = class_count {
        if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &v)| v >= l) {
            return Err(Error::format(
                path,
                format!("label {bad} at index {i} is outside 0..{l}"),
            ));
        }
    }
    Ok(labels)
}

pub fn load_idx_images(path: &Path) -> Result<IdxImages> {
    parse_images(&read_maybe_gz(path)?, path)
}

/// Labels, checked against `class_count` when given.
pub fn load_idx_labels(path: &Path, class_count: Option<usize>) -> Result<Vec<usize>> {
    parse_labels(&read_maybe_gz(path)?, path, class_count)
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGE_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_images(w: &mut impl Write, images: &IdxImages) -> std::io::Result<()> {
    w.write_all(&encode_images(images))
}

pub fn write_labels(w: &mut impl Write, labels: &[u8]) -> std::io::Result<()> {
    w.write_all(&encode_labels(labels))
}

/// Converts a dataset back to IDX bytes. Every feature must be a multiple
/// of 1/255 (as loaded features are); `rows * cols` must equal the feature
/// dimension.
pub fn dataset_to_idx(data: &Dataset, rows: usize, cols: usize) -> Result<(IdxImages, Vec<u8>)> {
    if rows * cols != data.feature_dim() {
        return Err(Error::usage(format!(
            "{rows}x{cols} images do not match feature dimension {}",
            data.feature_dim()
        )));
    }
    let mut pixels = Vec::with_capacity(data.features().len());
    for &f in data.features() {
        let b = (f * 255.0).round();
        if !(0.0..=255.0).contains(&b) || f64::from(b as u8) / 255.0 != f {
            return Err(Error::Runtime(format!("feature {f} is not a pixel value")));
        }
        pixels.push(b as u8);
    }
    let labels = data
        .labels()
        .iter()
        .map(|&l| {
            u8::try_from(l).map_err(|_| Error::Runtime(format!("label {l} does not fit a byte")))
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok((
        IdxImages {
            count: data.len(),
            rows,
            cols,
            pixels,
        },
        labels,
    ))
}

/// Image and label file pair as a dataset.
pub fn load_dataset(images: &Path, labels: &Path, class_count: usize) -> Result<Dataset> {
    let imgs = load_idx_images(images)?;
    let labs = load_idx_labels(labels, Some(class_count))?;
    if imgs.count != labs.len() {
        return Err(Error::format(
            labels,
            format!("{} labels for {} images", labs.len(), imgs.count),
        ));
    }
    Ok(Dataset::new(
        imgs.features(),
        labs,
        imgs.feature_dim(),
        class_count,
    )?)
}

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Path of an MNIST file in `dir`, uncompressed or with `.gz`.
pub fn find_mnist_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    let candidates = [
        dir.join(stem),
        dir.join(format!("{stem}.gz")),
        dir.join(stem.replacen("-idx", ".idx", 1)),
        dir.join(format!("{}.gz", stem.replacen("-idx", ".idx", 1))),
    ];
    candidates
        .iter()
        .find(|p| p.is_file())
        .cloned()
        .ok_or_else(|| {
            Error::Runtime(format!(
                "{} not found in {} (also tried .gz); download the four MNIST files there or pass --url",
                stem,
                dir.display()
            ))
        })
}

/// MNIST training pool (60,000) and test set (10,000) from `dir`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let paths = MNIST_FILES
        .iter()
        .map(|s| find_mnist_file(dir, s))
        .collect::<Result<Vec<_>>>()?;
    let pool = load_dataset(&paths[0], &paths[1], MNIST_CLASSES)?;
    let test = load_dataset(&paths[2], &paths[3], MNIST_CLASSES)?;
    Ok((pool, test))
}
