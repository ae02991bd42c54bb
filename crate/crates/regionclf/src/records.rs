//! CSV outputs: attack outcomes, label histograms and reports.
//!
//! An outcomes CSV has one row per attack run with columns
//! `example_id, attack_name, target, success, l0, l2, linf, iterations,
//! seed` (`target` empty for untargeted runs). The adversarial vectors live
//! in a binary side file next to it (`<csv>.adv`):
//!
//! ```text
//! magic  8 bytes "RCADV001"
//! n      u32 LE  feature dimension
//! rows   u64 LE
//! per row: u32 LE example_id, u32 LE true label, n f64 LE
//! ```
//!
//! Floats in CSVs are written in Rust's shortest round-trip form, so the
//! files reproduce the in-memory values exactly.

use std::path::{Path, PathBuf};

use regionclf_core::attacks::{AttackOutcome, Noise};
use regionclf_core::evaluation::{EvalReport, OutcomeRecord};
use regionclf_core::VoteCounts;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

const ADV_MAGIC: &[u8; 8] = b"RCADV001";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub example_id: usize,
    pub attack_name: String,
    pub target: Option<usize>,
    pub success: bool,
    pub l0: usize,
    pub l2: f64,
    pub linf: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl From<&OutcomeRecord> for OutcomeRow {
    fn from(r: &OutcomeRecord) -> Self {
        OutcomeRow {
            example_id: r.example_id,
            attack_name: r.attack_name.clone(),
            target: r.target(),
            success: r.outcome.success,
            l0: r.outcome.noise.l0,
            l2: r.outcome.noise.l2,
            linf: r.outcome.noise.linf,
            iterations: r.outcome.iterations,
            seed: r.seed,
        }
    }
}

pub fn adv_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".adv");
    PathBuf::from(s)
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Runtime(format!("csv buffer: {e}")))
}

/// Header-only CSV for an empty row set.
fn csv_header<T: Serialize + Default>() -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(T::default())?;
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Runtime(format!("csv buffer: {e}")))?;
    let first_line = bytes.iter().position(|&b| b == b'\n').map_or(0, |i| i + 1);
    Ok(bytes[..first_line].to_vec())
}

impl Default for OutcomeRow {
    fn default() -> Self {
        OutcomeRow {
            example_id: 0,
            attack_name: String::new(),
            target: None,
            success: false,
            l0: 0,
            l2: 0.0,
            linf: 0.0,
            iterations: 0,
            seed: 0,
        }
    }
}

pub fn encode_outcomes(records: &[OutcomeRecord]) -> Result<(Vec<u8>, Vec<u8>)> {
    let csv = if records.is_empty() {
        csv_header::<OutcomeRow>()?
    } else {
        csv_bytes(records.iter().map(OutcomeRow::from))?
    };
    let n = records.first().map_or(0, |r| r.outcome.adversarial.len());
    let mut adv = Vec::with_capacity(20 + records.len() * (8 + 8 * n));
    adv.extend_from_slice(ADV_MAGIC);
    adv.extend_from_slice(&(n as u32).to_le_bytes());
    adv.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        if r.outcome.adversarial.len() != n {
            return Err(Error::Runtime(
                "adversarial vectors differ in length".into(),
            ));
        }
        adv.extend_from_slice(&(r.example_id as u32).to_le_bytes());
        adv.extend_from_slice(&(r.true_label as u32).to_le_bytes());
        for v in &r.outcome.adversarial {
            adv.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok((csv, adv))
}

/// Writes the CSV and its side file, each atomically.
pub fn write_outcomes(csv: &Path, records: &[OutcomeRecord]) -> Result<()> {
    let (table, adv) = encode_outcomes(records)?;
    fsutil::write_atomic(&adv_path(csv), &adv)?;
    fsutil::write_atomic(csv, &table)
}

pub fn read_outcome_rows(csv: &Path) -> Result<Vec<OutcomeRow>> {
    let bytes = fsutil::read(csv)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    r.deserialize()
        .collect::<std::result::Result<Vec<OutcomeRow>, _>>()
        .map_err(|e| Error::format(csv, e.to_string()))
}

/// Outcomes written by [`write_outcomes`].
pub fn read_outcomes(csv: &Path) -> Result<Vec<OutcomeRecord>> {
    let rows = read_outcome_rows(csv)?;
    let side = adv_path(csv);
    let bytes = fsutil::read(&side)?;
    if bytes.len() < 20 || &bytes[..8] != ADV_MAGIC {
        return Err(Error::format(&side, "not an adversarial side file"));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let row_len = 8 + 8 * n;
    if count != rows.len() || bytes.len() != 20 + count * row_len {
        return Err(Error::format(
            &side,
            format!("side file holds {count} rows, CSV has {}", rows.len()),
        ));
    }
    let mut out = Vec::with_capacity(count);
    for (i, row) in rows.into_iter().enumerate() {
        let chunk = &bytes[20 + i * row_len..20 + (i + 1) * row_len];
        let id = u32::from_le_bytes(chunk[0..4].try_into().expect("4 bytes")) as usize;
        let label = u32::from_le_bytes(chunk[4..8].try_into().expect("4 bytes")) as usize;
        if id != row.example_id {
            return Err(Error::format(
                &side,
                format!(
                    "row {i}: side file example {id}, CSV example {}",
                    row.example_id
                ),
            ));
        }
        let adversarial = chunk[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push(OutcomeRecord {
            example_id: id,
            attack_name: row.attack_name,
            true_label: label,
            seed: row.seed,
            outcome: AttackOutcome {
                adversarial,
                success: row.success,
                target: row.target,
                noise: Noise {
                    l0: row.l0,
                    l2: row.l2,
                    linf: row.linf,
                },
                iterations: row.iterations,
            },
        });
    }
    Ok(out)
}

/// One class count of one measured point. `item` numbers the measured
/// points of a run; `source` is `benign` or the attack that produced the
/// point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub item: usize,
    pub source: String,
    pub example_id: usize,
    pub target: Option<usize>,
    pub true_label: usize,
    pub class: usize,
    pub count: usize,
    pub r: f64,
    pub m: usize,
    pub seed: u64,
}

/// What a histogram was measured around.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredPoint {
    pub item: usize,
    pub source: String,
    pub example_id: usize,
    pub target: Option<usize>,
    pub true_label: usize,
}

pub fn histogram_rows(
    point: &MeasuredPoint,
    votes: &VoteCounts,
    r: f64,
    seed: u64,
) -> Vec<HistogramRow> {
    let m = votes.total();
    votes
        .counts
        .iter()
        .enumerate()
        .map(|(class, &count)| HistogramRow {
            item: point.item,
            source: point.source.clone(),
            example_id: point.example_id,
            target: point.target,
            true_label: point.true_label,
            class,
            count,
            r,
            m,
            seed,
        })
        .collect()
}

pub fn write_histograms(path: &Path, rows: &[HistogramRow]) -> Result<()> {
    fsutil::write_atomic(path, &csv_bytes(rows)?)
}

pub fn read_histograms(path: &Path) -> Result<Vec<HistogramRow>> {
    let bytes = fsutil::read(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    r.deserialize()
        .collect::<std::result::Result<Vec<HistogramRow>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

/// One report line; `grid` and `value` name the swept parameter, empty
/// outside sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub classifier: String,
    pub attack: String,
    pub grid: String,
    pub value: Option<f64>,
    pub successes: usize,
    pub attempts: usize,
    pub success_rate: f64,
    pub avg_l0: Option<f64>,
    pub avg_l2: Option<f64>,
    pub avg_linf: Option<f64>,
    pub n_examples: usize,
    pub n_targets: usize,
    pub config_digest: String,
}

impl ReportRow {
    pub fn new(report: &EvalReport, grid: &str, value: Option<f64>) -> Self {
        ReportRow {
            classifier: report.classifier_name.clone(),
            attack: report.attack_name.clone(),
            grid: grid.into(),
            value,
            successes: report.successes,
            attempts: report.attempts,
            success_rate: report.success_rate,
            avg_l0: report.avg_noise.map(|a| a.l0),
            avg_l2: report.avg_noise.map(|a| a.l2),
            avg_linf: report.avg_noise.map(|a| a.linf),
            n_examples: report.n_examples,
            n_targets: report.n_targets,
            config_digest: report.config_digest.clone(),
        }
    }
}

pub fn write_reports(path: &Path, rows: &[ReportRow]) -> Result<()> {
    fsutil::write_atomic(path, &csv_bytes(rows)?)
}

pub fn read_reports(path: &Path) -> Result<Vec<ReportRow>> {
    let bytes = fsutil::read(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    r.deserialize()
        .collect::<std::result::Result<Vec<ReportRow>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Accuracy table line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub classifier: String,
    pub accuracy: f64,
    pub examples: usize,
}

pub fn write_accuracy(path: &Path, rows: &[AccuracyRow]) -> Result<()> {
    fsutil::write_atomic(path, &csv_bytes(rows)?)
}

pub fn read_accuracy(path: &Path) -> Result<Vec<AccuracyRow>> {
    let bytes = fsutil::read(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    r.deserialize()
        .collect::<std::result::Result<Vec<AccuracyRow>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}
