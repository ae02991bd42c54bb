//! Network checkpoints.
//!
//! Layout, integers little-endian:
//!
//! ```text
//! magic       8 bytes  "RCNETCKP"
//! version     u32      = 1
//! layers      u32
//! per layer   u8 kind (0 dense, 1 relu, 2 softmax); dense adds u32 in, u32 out
//! L           u32      class count
//! seed        u64      training seed
//! epochs      u32
//! mode        u16 length + UTF-8 bytes ("standard", "adversarial", "distilled")
//! params      u64 count, then count f32 values (per dense layer: weights
//!             row-major out x in, then bias)
//! ```
//!
//! Parameters are stored as `f32`; networks are rounded to `f32` before
//! saving so a loaded checkpoint equals the saved network exactly.

use std::path::Path;

use regionclf_core::{LayerSpec, Network};

use crate::error::{Error, Result};
use crate::fsutil;

pub const MAGIC: &[u8; 8] = b"RCNETCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    pub seed: u64,
    pub epochs: u32,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub metadata: Metadata,
}

pub fn encode(net: &Network, meta: &Metadata) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.specs().len() as u32).to_le_bytes());
    for spec in net.specs() {
        match *spec {
            LayerSpec::Dense { in_dim, out_dim } => {
                out.push(0);
                out.extend_from_slice(&(in_dim as u32).to_le_bytes());
                out.extend_from_slice(&(out_dim as u32).to_le_bytes());
            }
            LayerSpec::Relu => out.push(1),
            LayerSpec::SoftmaxOutput => out.push(2),
        }
    }
    out.extend_from_slice(&(net.class_count() as u32).to_le_bytes());
    out.extend_from_slice(&meta.seed.to_le_bytes());
    out.extend_from_slice(&meta.epochs.to_le_bytes());
    out.extend_from_slice(&(meta.mode.len() as u16).to_le_bytes());
    out.extend_from_slice(meta.mode.as_bytes());
    let params = net.flat_parameters();
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.at..end];
                self.at = end;
                Ok(s)
            }
            None => Err(Error::format(self.path, "checkpoint is truncated")),
        }
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
    fn u64(&mut self) -> Result<u64> {
        let mut a = [0; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader { bytes, at: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::format(path, "not a network checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("checkpoint version {version}, this build reads version {VERSION}"),
        ));
    }
    let layers = r.u32()? as usize;
    let mut specs = Vec::with_capacity(layers);
    for _ in 0..layers {
        specs.push(match r.u8()? {
            0 => LayerSpec::Dense {
                in_dim: r.u32()? as usize,
                out_dim: r.u32()? as usize,
            },
            1 => LayerSpec::Relu,
            2 => LayerSpec::SoftmaxOutput,
            k => return Err(Error::format(path, format!("unknown layer kind {k}"))),
        });
    }
    let class_count = r.u32()? as usize;
    let seed = r.u64()?;
    let epochs = r.u32()?;
    let mode_len = r.u16()? as usize;
    let mode = String::from_utf8(r.take(mode_len)?.to_vec())
        .map_err(|_| Error::format(path, "mode is not UTF-8"))?;
    let count = r.u64()? as usize;
    let raw = r.take(
        count
            .checked_mul(4)
            .ok_or_else(|| Error::format(path, "bad size"))?,
    )?;
    if r.at != bytes.len() {
        return Err(Error::format(path, "trailing bytes after parameters"));
    }
    let flat: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let network =
        Network::from_flat(specs, &flat).map_err(|e| Error::format(path, e.to_string()))?;
    if network.class_count() != class_count {
        return Err(Error::format(
            path,
            format!(
                "header says {class_count} classes, layers give {}",
                network.class_count()
            ),
        ));
    }
    Ok(Checkpoint {
        network,
        metadata: Metadata { seed, epochs, mode },
    })
}

pub fn save(path: &Path, net: &Network, meta: &Metadata) -> Result<()> {
    fsutil::write_atomic(path, &encode(net, meta))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&fsutil::read(path)?, path)
}
