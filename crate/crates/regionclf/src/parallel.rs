//! Multi-threaded versions of the core campaign and region loops.
//!
//! Each work item is a pure function of its inputs and results are
//! collected in input order, so the output does not depend on the thread
//! count.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use regionclf_core::attacks::{noise_of, Noise, TargetedAttack, UntargetedAttack};
use regionclf_core::evaluation::{
    adapted_candidate, judge_candidate, report_from, targeted_record, untargeted_record, Benign,
    EvalReport, Judge, OutcomeRecord,
};
use regionclf_core::region::{learn_radius_with, PointClassifier, RadiusSearch};
use regionclf_core::{Dataset, Network, RegionClassifier};

use crate::error::{Error, Result};

/// Runs `f` inside a pool of `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn targeted_records(
    attack: &(dyn TargetedAttack + Sync),
    net: &Network,
    benign: &Benign,
    targets: &[usize],
    seed: u64,
) -> Result<Vec<OutcomeRecord>> {
    targets
        .par_iter()
        .map(|&t| Ok(targeted_record(attack, net, benign, t, seed)?))
        .collect()
}

pub fn untargeted_records(
    attack: &(dyn UntargetedAttack + Sync),
    net: &Network,
    benign: &[Benign],
    seed: u64,
) -> Result<Vec<OutcomeRecord>> {
    benign
        .par_iter()
        .map(|b| Ok(untargeted_record(attack, net, b, seed)?))
        .collect()
}

pub fn judge_records(judge: &(dyn Judge + Sync), records: &[OutcomeRecord]) -> Result<Vec<bool>> {
    records
        .par_iter()
        .map(|r| Ok(judge_candidate(judge, r, &r.outcome.adversarial)?))
        .collect()
}

pub fn evaluate(
    judge: &(dyn Judge + Sync),
    records: &[OutcomeRecord],
    digest: &str,
) -> Result<EvalReport> {
    let verdicts = judge_records(judge, records)?;
    let noises: Vec<Noise> = records.iter().map(|r| r.outcome.noise).collect();
    let name = records
        .first()
        .map(|r| r.attack_name.clone())
        .unwrap_or_default();
    Ok(report_from(
        &judge.name(),
        &name,
        records,
        &verdicts,
        &noises,
        digest,
    )?)
}

/// Same rules as the core alpha sweep.
pub fn alpha_sweep(
    judge: &(dyn Judge + Sync),
    records: &[OutcomeRecord],
    benign: &[Benign],
    alphas: &[f64],
    digest: &str,
) -> Result<Vec<(f64, EvalReport)>> {
    if !alphas.contains(&0.0) {
        return Err(Error::usage("the alpha grid must include 0"));
    }
    let name = records
        .first()
        .map(|r| r.attack_name.clone())
        .unwrap_or_default();
    alphas
        .iter()
        .map(|&alpha| {
            let judged: Vec<(bool, Noise)> = records
                .par_iter()
                .map(|r| {
                    let b = benign
                        .iter()
                        .find(|b| b.id == r.example_id)
                        .ok_or_else(|| {
                            Error::Runtime(format!("unknown example {}", r.example_id))
                        })?;
                    Ok(match adapted_candidate(r, &b.features, alpha)? {
                        Some(adv) => (
                            judge_candidate(judge, r, &adv)?,
                            noise_of(&b.features, &adv)?,
                        ),
                        None => (false, Noise::default()),
                    })
                })
                .collect::<Result<_>>()?;
            let (verdicts, noises): (Vec<bool>, Vec<Noise>) = judged.into_iter().unzip();
            let report = report_from(
                &judge.name(),
                &format!("{name}@alpha={alpha}"),
                records,
                &verdicts,
                &noises,
                digest,
            )?;
            Ok((alpha, report))
        })
        .collect()
}

/// Accuracy of `judge` on `data`, example `i` queried as `(stream, i)`.
pub fn judge_accuracy(judge: &(dyn Judge + Sync), data: &Dataset, stream: u64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Core(regionclf_core::Error::Empty("dataset")));
    }
    let correct: Vec<bool> = (0..data.len())
        .into_par_iter()
        .map(|i| Ok(judge.label(data.row(i), stream, i)? == data.label(i)))
        .collect::<Result<_>>()?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / data.len() as f64)
}

/// Region accuracy with the per-example seeds of
/// [`RegionClassifier::accuracy`].
pub fn region_accuracy<C: PointClassifier + Sync>(
    rc: &RegionClassifier<C>,
    data: &Dataset,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Core(regionclf_core::Error::Empty("dataset")));
    }
    let correct: Vec<bool> = (0..data.len())
        .into_par_iter()
        .map(|i| Ok(rc.classify_seeded(data.row(i), rc.example_seed(i))? == data.label(i)))
        .collect::<Result<_>>()?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / data.len() as f64)
}

/// Parallel radius search; returns exactly what the sequential search in
/// the core crate returns for the same arguments.
pub fn learn_radius(
    base: &Network,
    validation: &Dataset,
    m: usize,
    r0: f64,
    step: f64,
    seed: u64,
) -> Result<RadiusSearch> {
    Ok(learn_radius_with(
        base,
        validation,
        r0,
        step,
        |r, allowed| {
            let rc = RegionClassifier::new(base, r, m, seed)?;
            let wrong = AtomicUsize::new(0);
            (0..validation.len()).into_par_iter().try_for_each(
                |i| -> regionclf_core::Result<()> {
                    // Once over budget the verdict is fixed; skip the rest.
                    if wrong.load(Ordering::Relaxed) > allowed {
                        return Ok(());
                    }
                    let label = rc.classify_seeded(validation.row(i), rc.example_seed(i))?;
                    if label != validation.label(i) {
                        wrong.fetch_add(1, Ordering::Relaxed);
                    }
                    Ok(())
                },
            )?;
            Ok(wrong.load(Ordering::Relaxed) <= allowed)
        },
    )?)
}
