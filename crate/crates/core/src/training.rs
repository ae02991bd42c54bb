//! Mini-batch SGD training for the three baseline classifiers: standard,
//! adversarially trained (DeepFool twins) and distilled.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::attacks::deepfool;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::network::{softmax_with_temperature, LayerSpec, Network};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainMode {
    Standard,
    /// One DeepFool twin per training example, generated against a standard
    /// net trained with the same config.
    Adversarial {
        deepfool_max_iters: usize,
        overshoot: f64,
    },
    /// Teacher and student both trained with a temperature-`temperature`
    /// softmax; the student learns the teacher's softened outputs.
    Distilled {
        temperature: f64,
    },
}

impl TrainMode {
    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::Standard => "standard",
            TrainMode::Adversarial { .. } => "adversarial",
            TrainMode::Distilled { .. } => "distilled",
        }
    }

    pub fn adversarial() -> Self {
        TrainMode::Adversarial {
            deepfool_max_iters: 50,
            overshoot: 0.02,
        }
    }

    pub fn distilled() -> Self {
        TrainMode::Distilled { temperature: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
            mode: TrainMode::Standard,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::param("epochs and batch size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param(
                "learning rate must be finite and non-negative",
            ));
        }
        match self.mode {
            TrainMode::Distilled { temperature }
                if !(temperature > 0.0 && temperature.is_finite()) =>
            {
                Err(Error::param("distillation temperature must be positive"))
            }
            TrainMode::Adversarial { overshoot, .. } if !(overshoot >= 0.0) => {
                Err(Error::param("overshoot must be non-negative"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub network: Network,
    /// Per-epoch log of the final phase (the student, or the net trained on
    /// the augmented set).
    pub log: Vec<EpochLog>,
    /// Adversarial mode: twins added to the training set.
    pub twins: usize,
    /// Adversarial mode: examples on which DeepFool found no twin.
    pub twins_skipped: usize,
}

/// Fraction of `data` that `net` labels correctly.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    Error::check_dim(net.input_dim(), data.feature_dim())?;
    let preds = net.predict_batch(data.features(), data.len())?;
    let correct = preds
        .iter()
        .zip(data.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Trains according to `cfg.mode`. `validation`, when given, is scored
/// after every epoch of the final phase.
pub fn train(
    data: &Dataset,
    arch: &[LayerSpec],
    cfg: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<Trained> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    match cfg.mode {
        TrainMode::Standard => {
            let (network, log) = sgd(data, arch, cfg, Targets::Hard, validation)?;
            Ok(Trained {
                network,
                log,
                twins: 0,
                twins_skipped: 0,
            })
        }
        TrainMode::Adversarial {
            deepfool_max_iters,
            overshoot,
        } => {
            let (base, _) = sgd(data, arch, cfg, Targets::Hard, None)?;
            let mut twins = Vec::new();
            let mut skipped = 0;
            for (x, label) in data.iter() {
                let out = deepfool(&base, x, deepfool_max_iters, overshoot)?;
                if out.success {
                    twins.push((out.adversarial, label));
                } else {
                    skipped += 1;
                }
            }
            let count = twins.len();
            let mut features = Vec::with_capacity(count * data.feature_dim());
            let mut labels = Vec::with_capacity(count);
            for (adv, label) in twins {
                features.extend_from_slice(&adv);
                labels.push(label);
            }
            let extra = Dataset::new(features, labels, data.feature_dim(), data.class_count())?;
            let union = data.concat(&extra)?;
            let (network, log) = sgd(&union, arch, cfg, Targets::Hard, validation)?;
            Ok(Trained {
                network,
                log,
                twins: count,
                twins_skipped: skipped,
            })
        }
        TrainMode::Distilled { temperature } => {
            let (teacher, _) = sgd(data, arch, cfg, Targets::HardAt(temperature), None)?;
            let soft = soft_labels(&teacher, data, temperature)?;
            let (network, log) = sgd(
                data,
                arch,
                cfg,
                Targets::Soft(&soft, temperature),
                validation,
            )?;
            Ok(Trained {
                network,
                log,
                twins: 0,
                twins_skipped: 0,
            })
        }
    }
}

pub fn train_standard(data: &Dataset, arch: &[LayerSpec], cfg: &TrainConfig) -> Result<Network> {
    expect_mode(cfg, "standard")?;
    Ok(train(data, arch, cfg, None)?.network)
}

pub fn train_adversarial(data: &Dataset, arch: &[LayerSpec], cfg: &TrainConfig) -> Result<Network> {
    expect_mode(cfg, "adversarial")?;
    Ok(train(data, arch, cfg, None)?.network)
}

pub fn train_distilled(data: &Dataset, arch: &[LayerSpec], cfg: &TrainConfig) -> Result<Network> {
    expect_mode(cfg, "distilled")?;
    Ok(train(data, arch, cfg, None)?.network)
}

fn expect_mode(cfg: &TrainConfig, name: &str) -> Result<()> {
    if cfg.mode.name() == name {
        Ok(())
    } else {
        Err(Error::param(alloc::format!(
            "expected {name} mode, got {}",
            cfg.mode.name()
        )))
    }
}

/// Teacher probabilities at `temperature`, `len x class_count` row-major.
pub fn soft_labels(teacher: &Network, data: &Dataset, temperature: f64) -> Result<Vec<f64>> {
    let logits = teacher.logits_batch(data.features(), data.len())?;
    let l = teacher.class_count();
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(l) {
        out.extend(softmax_with_temperature(row, temperature)?);
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum Targets<'a> {
    Hard,
    /// One-hot labels through a temperature softmax.
    HardAt(f64),
    /// Row-major soft labels through a temperature softmax.
    Soft(&'a [f64], f64),
}

/// Plain SGD from a fresh `Network::init(arch, cfg.seed)`. Epoch `e`
/// shuffles with the stream `derive_seed(cfg.seed, e)`.
///
/// With a temperature `T` the logit gradient `(p - q) / T` is applied with
/// step `T * learning_rate`, which keeps the step size comparable to the
/// `T = 1` case.
fn sgd(
    data: &Dataset,
    arch: &[LayerSpec],
    cfg: &TrainConfig,
    targets: Targets<'_>,
    validation: Option<&Dataset>,
) -> Result<(Network, Vec<EpochLog>)> {
    let mut net = Network::init(arch.to_vec(), cfg.seed)?;
    Error::check_dim(net.input_dim(), data.feature_dim())?;
    if net.class_count() != data.class_count() {
        return Err(Error::Architecture(alloc::format!(
            "network has {} outputs, data has {} classes",
            net.class_count(),
            data.class_count()
        )));
    }
    let n = data.feature_dim();
    let l = data.class_count();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut xs = Vec::with_capacity(cfg.batch_size * n);
    let mut qs = Vec::with_capacity(cfg.batch_size * l);

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_from_seed(derive_seed(cfg.seed, epoch as u64)));
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grad, temperature) = match targets {
                Targets::Hard => {
                    let batch: Vec<(&[f64], usize)> = chunk
                        .iter()
                        .map(|&i| (data.row(i), data.label(i)))
                        .collect();
                    let (loss, grad) = net.param_gradient(&batch)?;
                    (loss, grad, 1.0)
                }
                Targets::HardAt(t) | Targets::Soft(_, t) => {
                    xs.clear();
                    qs.clear();
                    for &i in chunk {
                        xs.extend_from_slice(data.row(i));
                        match targets {
                            Targets::Soft(soft, _) => {
                                qs.extend_from_slice(&soft[i * l..(i + 1) * l])
                            }
                            _ => {
                                let start = qs.len();
                                qs.resize(start + l, 0.0);
                                qs[start + data.label(i)] = 1.0;
                            }
                        }
                    }
                    let (loss, grad) = net.param_gradient_soft(&xs, &qs, chunk.len(), t)?;
                    (loss, grad, t)
                }
            };
            if !loss.is_finite() || !grad.max_abs().is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    last_good_epoch: epoch.checked_sub(1).filter(|&e| e > 0),
                    loss,
                });
            }
            net.sgd_step(&grad, cfg.learning_rate * temperature);
            total += loss;
            batches += 1;
        }
        // Parameters past f32 range leave every logit huge; the loss then
        // rounds to a finite value, so the loss check alone misses it.
        let limit = f32::MAX as f64;
        let blown = net
            .dense_layers()
            .iter()
            .any(|p| p.weights.iter().chain(&p.bias).any(|v| !(v.abs() <= limit)));
        if blown {
            return Err(Error::Diverged {
                epoch,
                last_good_epoch: epoch.checked_sub(1).filter(|&e| e > 0),
                loss: total / batches as f64,
            });
        }
        let validation_accuracy = match validation {
            Some(v) if !v.is_empty() => Some(accuracy(&net, v)?),
            _ => None,
        };
        log.push(EpochLog {
            epoch,
            loss: total / batches as f64,
            validation_accuracy,
        });
    }
    Ok((net, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_blobs;
    use crate::network::DenseParams;
    use alloc::vec;

    fn blobs2() -> Dataset {
        synth_blobs(2, 40, 4, 0.8, 1).unwrap()
    }

    fn quick(mode: TrainMode) -> TrainConfig {
        TrainConfig {
            epochs: 50,
            batch_size: 8,
            learning_rate: 0.1,
            seed: 3,
            mode,
        }
    }

    #[test]
    fn separable_blobs_reach_full_train_accuracy() {
        let data = blobs2();
        let net = train_standard(
            &data,
            &LayerSpec::mlp(&[4, 8, 2]),
            &quick(TrainMode::Standard),
        )
        .unwrap();
        assert_eq!(accuracy(&net, &data).unwrap(), 1.0);
    }

    #[test]
    fn zero_learning_rate_leaves_init_untouched() {
        let data = blobs2();
        let arch = LayerSpec::mlp(&[4, 8, 2]);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 2,
            ..quick(TrainMode::Standard)
        };
        let net = train_standard(&data, &arch, &cfg).unwrap();
        assert_eq!(net, Network::init(arch, cfg.seed).unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let data = synth_blobs(3, 20, 5, 0.5, 9).unwrap();
        let arch = LayerSpec::mlp(&[5, 6, 3]);
        let cfg = TrainConfig {
            epochs: 3,
            ..quick(TrainMode::Standard)
        };
        let a = train_standard(&data, &arch, &cfg).unwrap();
        let b = train_standard(&data, &arch, &cfg).unwrap();
        assert_eq!(a.flat_parameters(), b.flat_parameters());
    }

    #[test]
    fn adversarial_without_deepfool_matches_standard() {
        let data = blobs2();
        let arch = LayerSpec::mlp(&[4, 8, 2]);
        let std_net = train_standard(&data, &arch, &quick(TrainMode::Standard)).unwrap();
        let mode = TrainMode::Adversarial {
            deepfool_max_iters: 0,
            overshoot: 0.02,
        };
        let trained = train(&data, &arch, &quick(mode), None).unwrap();
        assert_eq!(trained.twins, 0);
        assert_eq!(trained.network, std_net);
    }

    #[test]
    fn adversarial_training_keeps_benign_accuracy() {
        let data = blobs2();
        let arch = LayerSpec::mlp(&[4, 8, 2]);
        let trained = train(&data, &arch, &quick(TrainMode::adversarial()), None).unwrap();
        assert!(trained.twins + trained.twins_skipped == data.len());
        assert!(trained.twins > 0);
        assert!(accuracy(&trained.network, &data).unwrap() >= 0.95);
    }

    #[test]
    fn distillation_at_unit_and_high_temperature() {
        let data = synth_blobs(3, 40, 5, 0.7, 4).unwrap();
        let arch = LayerSpec::mlp(&[5, 10, 3]);
        let base = accuracy(
            &train_standard(&data, &arch, &quick(TrainMode::Standard)).unwrap(),
            &data,
        )
        .unwrap();
        for t in [1.0, 100.0] {
            let net = train_distilled(
                &data,
                &arch,
                &quick(TrainMode::Distilled { temperature: t }),
            )
            .unwrap();
            let acc = accuracy(&net, &data).unwrap();
            assert!(acc >= base - 0.02, "T={t}: {acc} vs {base}");
        }
    }

    #[test]
    fn soft_labels_are_distributions() {
        let data = synth_blobs(4, 10, 3, 0.5, 2).unwrap();
        let net = Network::init(LayerSpec::mlp(&[3, 5, 4]), 1).unwrap();
        for t in [1.0, 7.0, 100.0] {
            let soft = soft_labels(&net, &data, t).unwrap();
            for row in soft.chunks_exact(4) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mode_mismatch_and_bad_config() {
        let data = blobs2();
        let arch = LayerSpec::mlp(&[4, 8, 2]);
        assert!(train_distilled(&data, &arch, &quick(TrainMode::Standard)).is_err());
        let cfg = quick(TrainMode::Distilled { temperature: 0.0 });
        assert!(train(&data, &arch, &cfg, None).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let data = blobs2();
        let cfg = TrainConfig {
            learning_rate: f64::MAX,
            epochs: 3,
            ..quick(TrainMode::Standard)
        };
        match train(&data, &LayerSpec::mlp(&[4, 8, 2]), &cfg, None) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn parameter_blowup_is_divergence() {
        let data = blobs2();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 3,
            ..quick(TrainMode::Standard)
        };
        match train(&data, &LayerSpec::mlp(&[4, 8, 2]), &cfg, None) {
            Err(Error::Diverged {
                epoch: 1,
                last_good_epoch: None,
                loss,
            }) => assert!(loss.is_finite()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn accuracy_contracts() {
        let mut p = DenseParams::zeros(2, 3);
        p.bias = vec![1.0, 0.0, 0.0];
        let net = Network::new(
            vec![
                LayerSpec::Dense {
                    in_dim: 2,
                    out_dim: 3,
                },
                LayerSpec::SoftmaxOutput,
            ],
            vec![p],
        )
        .unwrap();
        let zeros = Dataset::new(vec![0.5; 20], vec![0; 10], 2, 3).unwrap();
        assert_eq!(accuracy(&net, &zeros).unwrap(), 1.0);
        assert!(accuracy(&net, &Dataset::empty(2, 3)).is_err());

        let data = synth_blobs(10, 10, 6, 0.5, 5).unwrap();
        let net = Network::init(LayerSpec::mlp(&[6, 9, 10]), 2).unwrap();
        let recount = data
            .iter()
            .filter(|(x, l)| net.predict(x).unwrap() == *l)
            .count();
        assert_eq!(accuracy(&net, &data).unwrap(), recount as f64 / 100.0);
    }

    #[test]
    fn random_nets_are_near_chance() {
        let data = synth_blobs(10, 100, 8, 0.5, 6).unwrap();
        let mean = (0..20)
            .map(|s| {
                accuracy(
                    &Network::init(LayerSpec::mlp(&[8, 16, 10]), s).unwrap(),
                    &data,
                )
                .unwrap()
            })
            .sum::<f64>()
            / 20.0;
        assert!((mean - 0.1).abs() <= 0.05, "mean accuracy {mean}");
    }
}
