//! File formats, parallel drivers and the command-line tool around
//! `regionclf-core`.
//!
//! - [`idx`]: the MNIST IDX container, plain or gzipped.
//! - [`cache`]: the flat binary dataset cache written by `prepare`.
//! - [`checkpoint`]: network checkpoints.
//! - [`records`]: outcome, histogram and report CSVs.
//! - [`manifest`]: per-command run manifests and config resolution.
//! - [`parallel`]: rayon versions of the campaign and region loops.
//! - [`cli`]: the `regionclf` subcommands.

pub mod cache;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod fsutil;
pub mod idx;
pub mod manifest;
pub mod parallel;
pub mod records;

pub use error::{Error, Result};
