//! Attack campaigns and their reports.
//!
//! Adversarial examples are always generated against the point-based
//! network. A [`Judge`] then decides which of them fool the classifier under
//! test, so the region classifier is evaluated by transfer. Reports are a
//! pure fold over judged [`OutcomeRecord`]s.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::attacks::{
    adapt, combine, min_noise_success, noise_of, AttackOutcome, CwConfig, CwL2, Noise, NoiseMetric,
    TargetedAttack, UntargetedAttack,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::region::{PointClassifier, RegionClassifier};
use crate::rng::{derive_seed, name_stream};

/// A test example the point-based network classifies correctly.
#[derive(Debug, Clone, PartialEq)]
pub struct Benign {
    /// Row index in the test set it came from.
    pub id: usize,
    pub features: Vec<f64>,
    pub label: usize,
}

/// The first `count` examples of `data`, in order, that `net` gets right.
pub fn select_benign(net: &Network, data: &Dataset, count: usize) -> Result<Vec<Benign>> {
    let preds = net.predict_batch(data.features(), data.len())?;
    let picked: Vec<Benign> = preds
        .iter()
        .enumerate()
        .filter(|&(i, &p)| p == data.label(i))
        .take(count)
        .map(|(i, _)| Benign {
            id: i,
            features: data.row(i).to_vec(),
            label: data.label(i),
        })
        .collect();
    if picked.len() < count {
        return Err(Error::Capacity {
            requested: count,
            available: picked.len(),
        });
    }
    Ok(picked)
}

/// One attack run on one benign example.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRecord {
    pub example_id: usize,
    pub attack_name: String,
    pub true_label: usize,
    /// Run seed the record was produced under.
    pub seed: u64,
    /// `success` is judged against the point-based network.
    pub outcome: AttackOutcome,
}

impl OutcomeRecord {
    pub fn target(&self) -> Option<usize> {
        self.outcome.target
    }
}

pub fn targeted_record(
    attack: &dyn TargetedAttack,
    net: &Network,
    benign: &Benign,
    target: usize,
    seed: u64,
) -> Result<OutcomeRecord> {
    Ok(OutcomeRecord {
        example_id: benign.id,
        attack_name: attack.name(),
        true_label: benign.label,
        seed,
        outcome: attack.attack(net, &benign.features, target)?,
    })
}

pub fn untargeted_record(
    attack: &dyn UntargetedAttack,
    net: &Network,
    benign: &Benign,
    seed: u64,
) -> Result<OutcomeRecord> {
    Ok(OutcomeRecord {
        example_id: benign.id,
        attack_name: attack.name(),
        true_label: benign.label,
        seed,
        outcome: attack.attack_untargeted(net, &benign.features, benign.label)?,
    })
}

/// `(benign index, target)` for every target other than the true label, in
/// example-major order.
pub fn targeted_jobs(benign: &[Benign], class_count: usize) -> Vec<(usize, usize)> {
    let mut jobs = Vec::with_capacity(benign.len() * class_count.saturating_sub(1));
    for (i, b) in benign.iter().enumerate() {
        for t in (0..class_count).filter(|&t| t != b.label) {
            jobs.push((i, t));
        }
    }
    jobs
}

pub fn targeted_campaign(
    attack: &dyn TargetedAttack,
    net: &Network,
    benign: &[Benign],
    seed: u64,
) -> Result<Vec<OutcomeRecord>> {
    targeted_jobs(benign, net.class_count())
        .into_iter()
        .map(|(i, t)| targeted_record(attack, net, &benign[i], t, seed))
        .collect()
}

pub fn untargeted_campaign(
    attack: &dyn UntargetedAttack,
    net: &Network,
    benign: &[Benign],
    seed: u64,
) -> Result<Vec<OutcomeRecord>> {
    benign
        .iter()
        .map(|b| untargeted_record(attack, net, b, seed))
        .collect()
}

/// Untargeted records from a targeted campaign: per example, the
/// smallest-noise targeted success under `metric`.
pub fn untargeted_from_records(
    targeted: &[OutcomeRecord],
    benign: &[Benign],
    name: &str,
    metric: NoiseMetric,
) -> Result<Vec<OutcomeRecord>> {
    let mut out = Vec::with_capacity(benign.len());
    for b in benign {
        let group: Vec<&OutcomeRecord> = targeted.iter().filter(|r| r.example_id == b.id).collect();
        if group.is_empty() {
            return Err(Error::param(format!(
                "no targeted records for example {}",
                b.id
            )));
        }
        let outcomes: Vec<AttackOutcome> = group.iter().map(|r| r.outcome.clone()).collect();
        let outcome = combine(&b.features, None, &outcomes, metric);
        out.push(OutcomeRecord {
            example_id: b.id,
            attack_name: name.into(),
            true_label: b.label,
            seed: group[0].seed,
            outcome,
        });
    }
    Ok(out)
}

/// Per `(example, target)` key, the smallest-noise success among the
/// constituent campaigns. Every campaign must cover the same keys.
pub fn combine_records(
    campaigns: &[&[OutcomeRecord]],
    benign: &[Benign],
    name: &str,
    metric: NoiseMetric,
) -> Result<Vec<OutcomeRecord>> {
    let first = campaigns
        .first()
        .ok_or(Error::Empty("combined attack variant set"))?;
    let features: BTreeMap<usize, &Benign> = benign.iter().map(|b| (b.id, b)).collect();
    let mut out = Vec::with_capacity(first.len());
    for (i, head) in first.iter().enumerate() {
        let mut outcomes = Vec::with_capacity(campaigns.len());
        for c in campaigns {
            let r = c
                .get(i)
                .ok_or_else(|| Error::param("campaigns differ in length"))?;
            if r.example_id != head.example_id || r.target() != head.target() {
                return Err(Error::param("campaigns are not aligned"));
            }
            outcomes.push(r.outcome.clone());
        }
        let b = features
            .get(&head.example_id)
            .ok_or_else(|| Error::param(format!("unknown example {}", head.example_id)))?;
        out.push(OutcomeRecord {
            example_id: head.example_id,
            attack_name: name.into(),
            true_label: head.true_label,
            seed: head.seed,
            outcome: combine(&b.features, head.target(), &outcomes, metric),
        });
    }
    Ok(out)
}

/// The classifier under test.
pub trait Judge {
    fn name(&self) -> String;
    /// Label of `x`. `stream` and `example_id` identify the query so a
    /// randomized judge can draw a reproducible sample.
    fn label(&self, x: &[f64], stream: u64, example_id: usize) -> Result<usize>;
}

#[derive(Debug, Clone, Copy)]
pub struct PointJudge<'a> {
    pub name: &'a str,
    pub net: &'a Network,
}

impl Judge for PointJudge<'_> {
    fn name(&self) -> String {
        self.name.into()
    }
    fn label(&self, x: &[f64], _stream: u64, _example_id: usize) -> Result<usize> {
        self.net.predict(x)
    }
}

/// Region classifier judge. The query for `(stream, example_id)` samples
/// with `derive_seed(rc.seed, derive_seed(stream, example_id))`.
#[derive(Debug, Clone, Copy)]
pub struct RegionJudge<'a, C = Network> {
    pub name: &'a str,
    pub rc: &'a RegionClassifier<C>,
}

impl<C: PointClassifier> RegionJudge<'_, C> {
    pub fn seed_for(&self, stream: u64, example_id: usize) -> u64 {
        derive_seed(self.rc.seed, derive_seed(stream, example_id as u64))
    }
}

impl<C: PointClassifier> Judge for RegionJudge<'_, C> {
    fn name(&self) -> String {
        self.name.into()
    }
    fn label(&self, x: &[f64], stream: u64, example_id: usize) -> Result<usize> {
        self.rc
            .classify_seeded(x, self.seed_for(stream, example_id))
    }
}

/// Whether `adversarial`, generated for `record`, fools `judge`.
pub fn judge_candidate(
    judge: &dyn Judge,
    record: &OutcomeRecord,
    adversarial: &[f64],
) -> Result<bool> {
    if !record.outcome.success {
        return Ok(false);
    }
    let label = judge.label(
        adversarial,
        name_stream(&record.attack_name),
        record.example_id,
    )?;
    Ok(match record.target() {
        Some(t) => label == t,
        None => label != record.true_label,
    })
}

pub fn judge_records(judge: &dyn Judge, records: &[OutcomeRecord]) -> Result<Vec<bool>> {
    records
        .iter()
        .map(|r| judge_candidate(judge, r, &r.outcome.adversarial))
        .collect()
}

/// Mean noise over successes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AvgNoise {
    pub l0: f64,
    pub l2: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classifier_name: String,
    pub attack_name: String,
    pub successes: usize,
    pub attempts: usize,
    pub success_rate: f64,
    /// Absent when nothing succeeded.
    pub avg_noise: Option<AvgNoise>,
    pub n_examples: usize,
    /// Targets per example; 1 for untargeted campaigns.
    pub n_targets: usize,
    pub config_digest: String,
}

/// Folds judged outcomes into a report. `noises[i]` is the noise of the
/// candidate judged in `verdicts[i]`.
pub fn report_from(
    classifier_name: &str,
    attack_name: &str,
    records: &[OutcomeRecord],
    verdicts: &[bool],
    noises: &[Noise],
    config_digest: &str,
) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Empty("campaign"));
    }
    Error::check_dim(records.len(), verdicts.len())?;
    Error::check_dim(records.len(), noises.len())?;
    let mut examples: Vec<usize> = records.iter().map(|r| r.example_id).collect();
    examples.sort_unstable();
    examples.dedup();
    let targeted = records.iter().any(|r| r.target().is_some());
    let n_targets = if targeted {
        records.len() / examples.len()
    } else {
        1
    };

    let mut sum = AvgNoise::default();
    let mut successes = 0;
    for (noise, &ok) in noises.iter().zip(verdicts) {
        if ok {
            successes += 1;
            sum.l0 += noise.l0 as f64;
            sum.l2 += noise.l2;
            sum.linf += noise.linf;
        }
    }
    let avg_noise = (successes > 0).then(|| {
        let n = successes as f64;
        AvgNoise {
            l0: sum.l0 / n,
            l2: sum.l2 / n,
            linf: sum.linf / n,
        }
    });
    Ok(EvalReport {
        classifier_name: classifier_name.into(),
        attack_name: attack_name.into(),
        successes,
        attempts: records.len(),
        success_rate: successes as f64 / records.len() as f64,
        avg_noise,
        n_examples: examples.len(),
        n_targets,
        config_digest: config_digest.into(),
    })
}

/// Judges stored records and reports on them.
pub fn evaluate(
    judge: &dyn Judge,
    records: &[OutcomeRecord],
    config_digest: &str,
) -> Result<EvalReport> {
    let verdicts = judge_records(judge, records)?;
    let noises: Vec<Noise> = records.iter().map(|r| r.outcome.noise).collect();
    let name = records
        .first()
        .map(|r| r.attack_name.clone())
        .unwrap_or_default();
    report_from(
        &judge.name(),
        &name,
        records,
        &verdicts,
        &noises,
        config_digest,
    )
}

/// One k of a confidence sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidencePoint {
    pub confidence: f64,
    pub records: Vec<OutcomeRecord>,
    pub report: EvalReport,
}

/// CW-L2 attack at confidence `k`. The k = 0 attack keeps the plain name
/// so its records are interchangeable with an ordinary CW-L2 campaign.
pub fn cw_l2_at(base: &CwConfig, k: f64) -> NamedCwL2 {
    NamedCwL2 {
        inner: CwL2 {
            config: base.with_confidence(k),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NamedCwL2 {
    pub inner: CwL2,
}

impl TargetedAttack for NamedCwL2 {
    fn name(&self) -> String {
        let k = self.inner.config.confidence;
        if k == 0.0 {
            self.inner.name()
        } else {
            format!("{}-k{}", self.inner.name(), k)
        }
    }
    fn attack(&self, net: &Network, x: &[f64], target: usize) -> Result<AttackOutcome> {
        self.inner.attack(net, x, target)
    }
}

/// One targeted CW-L2 campaign per confidence value, each judged by
/// `judge`.
pub fn confidence_sweep(
    net: &Network,
    judge: &dyn Judge,
    benign: &[Benign],
    k_grid: &[f64],
    base: &CwConfig,
    seed: u64,
    config_digest: &str,
) -> Result<Vec<ConfidencePoint>> {
    if k_grid.is_empty() {
        return Err(Error::Empty("confidence grid"));
    }
    k_grid
        .iter()
        .map(|&k| {
            let records = targeted_campaign(&cw_l2_at(base, k), net, benign, seed)?;
            let report = evaluate(judge, &records, config_digest)?;
            Ok(ConfidencePoint {
                confidence: k,
                records,
                report,
            })
        })
        .collect()
}

/// Adapted candidate for a record: `None` if the base attack failed.
pub fn adapted_candidate(
    record: &OutcomeRecord,
    original: &[f64],
    alpha: f64,
) -> Result<Option<Vec<f64>>> {
    if !record.outcome.success {
        return Ok(None);
    }
    adapt(&record.outcome, original, alpha).map(Some)
}

/// Per `alpha`, stretches every successful base outcome by `1 + alpha`
/// and judges the result.
pub fn alpha_sweep(
    judge: &dyn Judge,
    records: &[OutcomeRecord],
    benign: &[Benign],
    alphas: &[f64],
    config_digest: &str,
) -> Result<Vec<(f64, EvalReport)>> {
    if !alphas.contains(&0.0) {
        return Err(Error::param("alpha grid must include 0"));
    }
    let originals: BTreeMap<usize, &Benign> = benign.iter().map(|b| (b.id, b)).collect();
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut verdicts = Vec::with_capacity(records.len());
        let mut noises = Vec::with_capacity(records.len());
        for r in records {
            let b = originals
                .get(&r.example_id)
                .ok_or_else(|| Error::param(format!("unknown example {}", r.example_id)))?;
            match adapted_candidate(r, &b.features, alpha)? {
                Some(adv) => {
                    verdicts.push(judge_candidate(judge, r, &adv)?);
                    noises.push(noise_of(&b.features, &adv)?);
                }
                None => {
                    verdicts.push(false);
                    noises.push(Noise::default());
                }
            }
        }
        let name = records
            .first()
            .map(|r| r.attack_name.clone())
            .unwrap_or_default();
        let report = report_from(
            &judge.name(),
            &format!("{name}@alpha={alpha}"),
            records,
            &verdicts,
            &noises,
            config_digest,
        )?;
        out.push((alpha, report));
    }
    Ok(out)
}

/// Stream used when judges classify benign test examples.
pub fn benign_stream() -> u64 {
    name_stream("benign")
}

/// Accuracy of each judge on `test`; example `i` is queried as
/// `(benign_stream(), i)`.
pub fn accuracy_table(judges: &[&dyn Judge], test: &Dataset) -> Result<Vec<(String, f64)>> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    judges
        .iter()
        .map(|j| {
            let mut correct = 0;
            for (i, (x, label)) in test.iter().enumerate() {
                if j.label(x, benign_stream(), i)? == label {
                    correct += 1;
                }
            }
            Ok((j.name(), correct as f64 / test.len() as f64))
        })
        .collect()
}

/// Index of the smallest-noise success among `records`, for callers that
/// need the selection rule directly.
pub fn min_noise_record(records: &[OutcomeRecord], metric: NoiseMetric) -> Option<usize> {
    let outcomes: Vec<AttackOutcome> = records.iter().map(|r| r.outcome.clone()).collect();
    min_noise_success(&outcomes, metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{Fgsm, Igsm};
    use crate::dataset::synth_blobs;
    use crate::network::LayerSpec;
    use crate::training::{train_standard, TrainConfig};
    use alloc::boxed::Box;
    use alloc::vec;

    struct Never;

    impl TargetedAttack for Never {
        fn name(&self) -> String {
            "never".into()
        }
        fn attack(&self, _: &Network, x: &[f64], t: usize) -> Result<AttackOutcome> {
            Ok(AttackOutcome::failure(x, Some(t), 0))
        }
    }

    fn setup() -> (Network, Vec<Benign>) {
        let data = synth_blobs(3, 30, 4, 0.6, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 8,
            learning_rate: 0.1,
            seed: 4,
            ..TrainConfig::default()
        };
        let net = train_standard(&data, &LayerSpec::mlp(&[4, 8, 3]), &cfg).unwrap();
        let benign = select_benign(&net, &data, 6).unwrap();
        (net, benign)
    }

    #[test]
    fn benign_selection_is_correct_and_ordered() {
        let (net, benign) = setup();
        assert!(benign.windows(2).all(|w| w[0].id < w[1].id));
        for b in &benign {
            assert_eq!(net.predict(&b.features).unwrap(), b.label);
        }
    }

    #[test]
    fn failing_attack_reports_no_noise() {
        let (net, benign) = setup();
        let records = targeted_campaign(&Never, &net, &benign, 0).unwrap();
        assert_eq!(records.len(), benign.len() * 2);
        let report = evaluate(
            &PointJudge {
                name: "point",
                net: &net,
            },
            &records,
            "d",
        )
        .unwrap();
        assert_eq!(report.success_rate, 0.0);
        assert_eq!(report.avg_noise, None);
        assert_eq!((report.n_examples, report.n_targets), (6, 2));
    }

    #[test]
    fn report_is_a_fold_over_records() {
        let (net, benign) = setup();
        let records = targeted_campaign(&Igsm::default(), &net, &benign, 1).unwrap();
        let judge = PointJudge {
            name: "point",
            net: &net,
        };
        let report = evaluate(&judge, &records, "d").unwrap();
        let ok: Vec<&OutcomeRecord> = records
            .iter()
            .filter(|r| {
                r.outcome.success
                    && net.predict(&r.outcome.adversarial).unwrap() == r.target().unwrap()
            })
            .collect();
        assert_eq!(report.successes, ok.len());
        assert_eq!(report.success_rate, ok.len() as f64 / records.len() as f64);
        if !ok.is_empty() {
            let mean = ok.iter().map(|r| r.outcome.noise.l2).sum::<f64>() / ok.len() as f64;
            assert!((report.avg_noise.unwrap().l2 - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn untargeted_picks_minimum_and_dominates() {
        let (net, benign) = setup();
        let records = targeted_campaign(&Igsm::default(), &net, &benign, 1).unwrap();
        let unt = untargeted_from_records(&records, &benign, "u-igsm", NoiseMetric::Linf).unwrap();
        let judge = PointJudge {
            name: "point",
            net: &net,
        };
        let t_sr = evaluate(&judge, &records, "").unwrap().success_rate;
        let u_sr = evaluate(&judge, &unt, "").unwrap().success_rate;
        assert!(u_sr >= t_sr);
        for u in &unt {
            let best = records
                .iter()
                .filter(|r| r.example_id == u.example_id && r.outcome.success)
                .map(|r| r.outcome.noise.linf)
                .fold(f64::INFINITY, f64::min);
            if u.outcome.success {
                assert_eq!(u.outcome.noise.linf, best);
            } else {
                assert!(best.is_infinite());
            }
        }
    }

    #[test]
    fn combined_records_never_exceed_constituents() {
        let (net, benign) = setup();
        let a = targeted_campaign(
            &Fgsm::new(crate::attacks::default_eps_grid()),
            &net,
            &benign,
            1,
        )
        .unwrap();
        let b = targeted_campaign(&Igsm::default(), &net, &benign, 1).unwrap();
        let c = combine_records(&[&a, &b], &benign, "t-ca-linf", NoiseMetric::Linf).unwrap();
        for i in 0..c.len() {
            if a[i].outcome.success && b[i].outcome.success {
                assert!(
                    c[i].outcome.noise.linf <= a[i].outcome.noise.linf.min(b[i].outcome.noise.linf)
                );
            }
            assert_eq!(
                c[i].outcome.success,
                a[i].outcome.success || b[i].outcome.success
            );
        }
        assert!(combine_records(&[&a, &b[1..]], &benign, "x", NoiseMetric::Linf).is_err());
    }

    #[test]
    fn alpha_zero_is_plain_transfer() {
        let (net, benign) = setup();
        let records = targeted_campaign(&Igsm::default(), &net, &benign, 1).unwrap();
        let rc = RegionClassifier::new(net.clone(), 0.1, 50, 9).unwrap();
        let judge = RegionJudge {
            name: "region",
            rc: &rc,
        };
        let plain = evaluate(&judge, &records, "d").unwrap();
        let sweep = alpha_sweep(&judge, &records, &benign, &[0.0, 1.0], "d").unwrap();
        assert_eq!(sweep[0].1.successes, plain.successes);
        assert_eq!(sweep[0].1.avg_noise, plain.avg_noise);
        assert!(alpha_sweep(&judge, &records, &benign, &[1.0], "d").is_err());
    }

    #[test]
    fn adapted_noise_scales_before_clipping() {
        let (net, benign) = setup();
        let records = targeted_campaign(&Igsm::default(), &net, &benign, 1).unwrap();
        for r in records.iter().filter(|r| r.outcome.success) {
            let x = &benign
                .iter()
                .find(|b| b.id == r.example_id)
                .unwrap()
                .features;
            let raw = crate::attacks::adapt_unclipped(&r.outcome.adversarial, x, 1.5);
            for ((a, o), xi) in raw.iter().zip(&r.outcome.adversarial).zip(x) {
                let expect = 2.5 * (o - xi);
                assert!(((a - xi) - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn confidence_zero_matches_plain_campaign() {
        let (net, benign) = setup();
        let cfg = CwConfig {
            inner_iterations: 50,
            binary_search_steps: 3,
            ..CwConfig::default()
        };
        let judge = PointJudge {
            name: "point",
            net: &net,
        };
        let sweep =
            confidence_sweep(&net, &judge, &benign[..2], &[0.0, 1.0], &cfg, 0, "d").unwrap();
        let plain = targeted_campaign(&CwL2 { config: cfg }, &net, &benign[..2], 0).unwrap();
        assert_eq!(sweep[0].records, plain);
        assert_eq!(sweep[0].report, evaluate(&judge, &plain, "d").unwrap());
        assert_eq!(sweep[1].records[0].attack_name, "t-cw-l2-k1");
    }

    #[test]
    fn accuracy_table_rows() {
        let (net, _) = setup();
        let test = Dataset::from_examples(
            &[crate::dataset::Example {
                features: vec![0.5; 4],
                label: net.predict(&[0.5; 4]).unwrap(),
            }],
            4,
            3,
        )
        .unwrap();
        let rc = RegionClassifier::new(net.clone(), 0.0, 10, 0).unwrap();
        let judges: Vec<Box<dyn Judge>> = vec![
            Box::new(PointJudge {
                name: "point",
                net: &net,
            }),
            Box::new(RegionJudge {
                name: "region",
                rc: &rc,
            }),
        ];
        let refs: Vec<&dyn Judge> = judges.iter().map(|j| j.as_ref()).collect();
        let table = accuracy_table(&refs, &test).unwrap();
        assert_eq!(table, vec![("point".into(), 1.0), ("region".into(), 1.0)]);
        assert!(accuracy_table(&refs, &Dataset::empty(4, 3)).is_err());
    }
}
