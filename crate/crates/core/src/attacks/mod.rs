//! Evasion attacks against a differentiable [`Network`].
//!
//! Targeted attacks implement [`TargetedAttack`]; untargeted ones implement
//! [`UntargetedAttack`]. [`FromTargeted`] turns any targeted attack into an
//! untargeted one by running every wrong target and keeping the smallest
//! success. [`Combined`] and [`CombinedUntargeted`] take the smallest
//! success over several attacks. [`adapt`] stretches a found perturbation.
//!
//! Every outcome is re-checked against the network before it is returned:
//! `success` is never taken from the optimizer's bookkeeping.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::network::Network;

mod cw;
mod deepfool;
mod gradient_sign;
mod jsma;

pub use cw::{
    t_cw_l0, t_cw_l0_report, t_cw_l2, t_cw_linf, t_cw_linf_report, CwConfig, CwL0, CwL0Report,
    CwL2, CwLinf, CwLinfReport,
};
pub use deepfool::{deepfool, deepfool_run, DeepFool, DeepFoolRun};
pub use gradient_sign::{default_eps_grid, t_fgsm, t_igsm, t_igsm_observed, Fgsm, Igsm};
pub use jsma::{t_jsma, Jsma};

/// Coordinates that differ by at most this much count as unchanged in L0.
pub const L0_THRESHOLD: f64 = 1e-9;

/// L0, L2 and L-infinity size of a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Noise {
    pub l0: usize,
    pub l2: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseMetric {
    L0,
    L2,
    Linf,
}

impl NoiseMetric {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMetric::L0 => "l0",
            NoiseMetric::L2 => "l2",
            NoiseMetric::Linf => "linf",
        }
    }
}

impl core::str::FromStr for NoiseMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l0" => Ok(NoiseMetric::L0),
            "l2" => Ok(NoiseMetric::L2),
            "linf" | "l-inf" | "li" => Ok(NoiseMetric::Linf),
            other => Err(Error::param(format!("unknown noise metric {other:?}"))),
        }
    }
}

impl Noise {
    pub fn get(&self, metric: NoiseMetric) -> f64 {
        match metric {
            NoiseMetric::L0 => self.l0 as f64,
            NoiseMetric::L2 => self.l2,
            NoiseMetric::Linf => self.linf,
        }
    }
}

/// Norms of `adversarial - original`.
pub fn noise_of(original: &[f64], adversarial: &[f64]) -> Result<Noise> {
    Error::check_dim(original.len(), adversarial.len())?;
    let mut noise = Noise::default();
    let mut sq = 0.0;
    for (a, b) in original.iter().zip(adversarial) {
        let d = (b - a).abs();
        if d > L0_THRESHOLD {
            noise.l0 += 1;
        }
        sq += d * d;
        noise.linf = noise.linf.max(d);
    }
    noise.l2 = libm::sqrt(sq);
    Ok(noise)
}

/// Result of one attack on one example.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    /// The candidate; equal to the benign input on failure.
    pub adversarial: Vec<f64>,
    pub success: bool,
    pub target: Option<usize>,
    pub noise: Noise,
    /// Gradient evaluations or optimizer steps spent, attack-specific.
    pub iterations: usize,
}

impl AttackOutcome {
    /// Outcome for a targeted candidate; success means the network predicts
    /// `target`.
    pub fn targeted(
        net: &Network,
        original: &[f64],
        adversarial: Vec<f64>,
        target: usize,
        iterations: usize,
    ) -> Result<Self> {
        let success = net.predict(&adversarial)? == target;
        Ok(AttackOutcome {
            noise: noise_of(original, &adversarial)?,
            adversarial,
            success,
            target: Some(target),
            iterations,
        })
    }

    /// Outcome for an untargeted candidate; success means the network does
    /// not predict `true_label`.
    pub fn untargeted(
        net: &Network,
        original: &[f64],
        adversarial: Vec<f64>,
        true_label: usize,
        iterations: usize,
    ) -> Result<Self> {
        let success = net.predict(&adversarial)? != true_label;
        Ok(AttackOutcome {
            noise: noise_of(original, &adversarial)?,
            adversarial,
            success,
            target: None,
            iterations,
        })
    }

    pub fn failure(original: &[f64], target: Option<usize>, iterations: usize) -> Self {
        AttackOutcome {
            adversarial: original.to_vec(),
            success: false,
            target,
            noise: Noise::default(),
            iterations,
        }
    }
}

pub trait TargetedAttack {
    fn name(&self) -> String;
    fn attack(&self, net: &Network, x: &[f64], target: usize) -> Result<AttackOutcome>;
}

pub trait UntargetedAttack {
    fn name(&self) -> String;
    fn attack_untargeted(
        &self,
        net: &Network,
        x: &[f64],
        true_label: usize,
    ) -> Result<AttackOutcome>;
}

impl<T: TargetedAttack + ?Sized> TargetedAttack for &T {
    fn name(&self) -> String {
        (**self).name()
    }
    fn attack(&self, net: &Network, x: &[f64], target: usize) -> Result<AttackOutcome> {
        (**self).attack(net, x, target)
    }
}

impl<T: TargetedAttack + ?Sized> TargetedAttack for Box<T> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn attack(&self, net: &Network, x: &[f64], target: usize) -> Result<AttackOutcome> {
        (**self).attack(net, x, target)
    }
}

impl<T: UntargetedAttack + ?Sized> UntargetedAttack for Box<T> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn attack_untargeted(
        &self,
        net: &Network,
        x: &[f64],
        true_label: usize,
    ) -> Result<AttackOutcome> {
        (**self).attack_untargeted(net, x, true_label)
    }
}

/// Index of the successful outcome with the smallest noise under `metric`;
/// the earliest one wins ties.
pub fn min_noise_success(outcomes: &[AttackOutcome], metric: NoiseMetric) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if !o.success {
            continue;
        }
        match best {
            Some(b) if outcomes[b].noise.get(metric) <= o.noise.get(metric) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Result of [`untargeted_from_targeted`]: the selected outcome plus every
/// per-target run, in target order.
#[derive(Debug, Clone, PartialEq)]
pub struct UntargetedRun {
    pub outcome: AttackOutcome,
    pub per_target: Vec<AttackOutcome>,
}

/// Runs `attack` for every target other than `true_label` and keeps the
/// success with the smallest noise under `metric`.
pub fn untargeted_from_targeted(
    attack: &dyn TargetedAttack,
    net: &Network,
    x: &[f64],
    true_label: usize,
    metric: NoiseMetric,
) -> Result<UntargetedRun> {
    if true_label >= net.class_count() {
        return Err(Error::LabelRange {
            label: true_label,
            class_count: net.class_count(),
        });
    }
    let per_target = (0..net.class_count())
        .filter(|&t| t != true_label)
        .map(|t| attack.attack(net, x, t))
        .collect::<Result<Vec<_>>>()?;
    let outcome = untargeted_from_outcomes(net, x, true_label, &per_target, metric)?;
    Ok(UntargetedRun {
        outcome,
        per_target,
    })
}

/// The untargeted selection over already computed per-target outcomes.
pub fn untargeted_from_outcomes(
    net: &Network,
    x: &[f64],
    true_label: usize,
    per_target: &[AttackOutcome],
    metric: NoiseMetric,
) -> Result<AttackOutcome> {
    let iterations = per_target.iter().map(|o| o.iterations).sum();
    match min_noise_success(per_target, metric) {
        Some(i) => AttackOutcome::untargeted(
            net,
            x,
            per_target[i].adversarial.clone(),
            true_label,
            iterations,
        ),
        None => Ok(AttackOutcome::failure(x, None, iterations)),
    }
}

/// A targeted attack turned untargeted.
#[derive(Debug, Clone)]
pub struct FromTargeted<A> {
    pub attack: A,
    pub metric: NoiseMetric,
}

impl<A: TargetedAttack> UntargetedAttack for FromTargeted<A> {
    fn name(&self) -> String {
        let inner = self.attack.name();
        match inner.strip_prefix("t-") {
            Some(rest) => format!("u-{rest}"),
            None => format!("u-{inner}"),
        }
    }

    fn attack_untargeted(
        &self,
        net: &Network,
        x: &[f64],
        true_label: usize,
    ) -> Result<AttackOutcome> {
        Ok(untargeted_from_targeted(&self.attack, net, x, true_label, self.metric)?.outcome)
    }
}

/// Smallest-noise success among several targeted attacks.
pub struct Combined {
    pub name: String,
    pub variants: Vec<Box<dyn TargetedAttack + Send + Sync>>,
    pub metric: NoiseMetric,
}

impl core::fmt::Debug for Combined {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let names: Vec<String> = self.variants.iter().map(|v| v.name()).collect();
        f.debug_struct("Combined")
            .field("name", &self.name)
            .field("variants", &names)
            .field("metric", &self.metric)
            .finish()
    }
}

/// Outcome of a combined attack together with what each constituent found.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedRun {
    pub outcome: AttackOutcome,
    pub constituents: Vec<AttackOutcome>,
}

/// Picks the smallest-noise success from constituent outcomes.
pub fn combine(
    x: &[f64],
    target: Option<usize>,
    constituents: &[AttackOutcome],
    metric: NoiseMetric,
) -> AttackOutcome {
    let iterations = constituents.iter().map(|o| o.iterations).sum();
    match min_noise_success(constituents, metric) {
        Some(i) => AttackOutcome {
            iterations,
            target,
            ..constituents[i].clone()
        },
        None => AttackOutcome::failure(x, target, iterations),
    }
}

impl Combined {
    pub fn run(&self, net: &Network, x: &[f64], target: usize) -> Result<CombinedRun> {
        if self.variants.is_empty() {
            return Err(Error::Empty("combined attack variant set"));
        }
        let constituents = self
            .variants
            .iter()
            .map(|v| v.attack(net, x, target))
            .collect::<Result<Vec<_>>>()?;
        Ok(CombinedRun {
            outcome: combine(x, Some(target), &constituents, self.metric),
            constituents,
        })
    }
}

impl TargetedAttack for Combined {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn attack(&self, net: &Network, x: &[f64], target: usize) -> Result<AttackOutcome> {
        Ok(self.run(net, x, target)?.outcome)
    }
}

/// Smallest-noise success among several untargeted attacks.
pub struct CombinedUntargeted {
    pub name: String,
    pub variants: Vec<Box<dyn UntargetedAttack + Send + Sync>>,
    pub metric: NoiseMetric,
}

impl core::fmt::Debug for CombinedUntargeted {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let names: Vec<String> = self.variants.iter().map(|v| v.name()).collect();
        f.debug_struct("CombinedUntargeted")
            .field("name", &self.name)
            .field("variants", &names)
            .field("metric", &self.metric)
            .finish()
    }
}

impl CombinedUntargeted {
    pub fn run(&self, net: &Network, x: &[f64], true_label: usize) -> Result<CombinedRun> {
        if self.variants.is_empty() {
            return Err(Error::Empty("combined attack variant set"));
        }
        let constituents = self
            .variants
            .iter()
            .map(|v| v.attack_untargeted(net, x, true_label))
            .collect::<Result<Vec<_>>>()?;
        Ok(CombinedRun {
            outcome: combine(x, None, &constituents, self.metric),
            constituents,
        })
    }
}

impl UntargetedAttack for CombinedUntargeted {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn attack_untargeted(
        &self,
        net: &Network,
        x: &[f64],
        true_label: usize,
    ) -> Result<AttackOutcome> {
        Ok(self.run(net, x, true_label)?.outcome)
    }
}

/// `clip(x + (1 + alpha) * delta)` for the perturbation `delta` of a
/// successful outcome, computed as `x' + alpha * delta` so `alpha = 0` gives
/// back `x'` bit for bit.
pub fn adapt(outcome: &AttackOutcome, original: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !outcome.success {
        return Err(Error::param("only successful outcomes can be adapted"));
    }
    if !(alpha >= 0.0) {
        return Err(Error::param("alpha must be non-negative"));
    }
    Error::check_dim(original.len(), outcome.adversarial.len())?;
    Ok(adapt_unclipped(&outcome.adversarial, original, alpha)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect())
}

/// `x + (1 + alpha) * (adversarial - x)` before clipping.
pub fn adapt_unclipped(adversarial: &[f64], original: &[f64], alpha: f64) -> Vec<f64> {
    adversarial
        .iter()
        .zip(original)
        .map(|(&a, &x)| if alpha == 0.0 { a } else { a + alpha * (a - x) })
        .collect()
}

pub(crate) fn clip_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{DenseParams, LayerSpec};
    use alloc::vec;

    #[test]
    fn noise_basics() {
        let x = [0.1, 0.2, 0.3];
        assert_eq!(noise_of(&x, &x).unwrap(), Noise::default());
        let n = noise_of(&x, &[0.1, 0.7, 0.3]).unwrap();
        assert_eq!(n.l0, 1);
        assert!((n.l2 - 0.5).abs() < 1e-15);
        assert!((n.linf - 0.5).abs() < 1e-15);
        assert!(noise_of(&x, &[0.0]).is_err());
        // Below the L0 threshold.
        assert_eq!(noise_of(&[0.5], &[0.5 + 1e-12]).unwrap().l0, 0);
    }

    #[test]
    fn l2_matches_independent_sum() {
        use crate::rng::rng_from_seed;
        use rand::Rng;
        let mut rng = rng_from_seed(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..50);
            let a: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let mut sq = 0.0;
            for i in (0..n).rev() {
                sq += (a[i] - b[i]) * (a[i] - b[i]);
            }
            let l2 = noise_of(&a, &b).unwrap().l2;
            assert!((l2 * l2 - sq).abs() <= 1e-12 * sq);
        }
    }

    #[test]
    fn adapt_alpha_zero_is_identity_and_clips() {
        let x = vec![0.2, 0.9, 0.5];
        let outcome = AttackOutcome {
            adversarial: vec![0.1, 1.0, 0.5 + 1e-3],
            success: true,
            target: Some(1),
            noise: Noise::default(),
            iterations: 1,
        };
        assert_eq!(adapt(&outcome, &x, 0.0).unwrap(), outcome.adversarial);
        let far = adapt(&outcome, &x, 4.0).unwrap();
        assert_eq!(far[0], 0.0);
        assert_eq!(far[1], 1.0);
        let raw = adapt_unclipped(&outcome.adversarial, &x, 1.5);
        let want = 2.5 * noise_of(&x, &outcome.adversarial).unwrap().l2;
        let got = libm::sqrt(
            raw.iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>(),
        );
        assert!((got - want).abs() < 1e-12);

        let failed = AttackOutcome::failure(&x, Some(1), 0);
        assert!(adapt(&failed, &x, 1.0).is_err());
    }

    fn outcome(success: bool, l2: f64) -> AttackOutcome {
        AttackOutcome {
            adversarial: vec![0.0],
            success,
            target: Some(1),
            noise: Noise {
                l0: 1,
                l2,
                linf: l2,
            },
            iterations: 1,
        }
    }

    #[test]
    fn min_noise_selection() {
        let outs = [
            outcome(false, 0.1),
            outcome(true, 0.5),
            outcome(true, 0.3),
            outcome(true, 0.3),
        ];
        assert_eq!(min_noise_success(&outs, NoiseMetric::L2), Some(2));
        assert_eq!(min_noise_success(&outs[..1], NoiseMetric::L2), None);
        let c = combine(&[0.0], Some(1), &outs, NoiseMetric::L2);
        assert!(c.success);
        assert_eq!(c.noise.l2, 0.3);
        assert_eq!(c.iterations, 4);
    }

    #[derive(Debug)]
    struct AlwaysFails;
    impl TargetedAttack for AlwaysFails {
        fn name(&self) -> String {
            "t-never".into()
        }
        fn attack(&self, _: &Network, x: &[f64], t: usize) -> Result<AttackOutcome> {
            Ok(AttackOutcome::failure(x, Some(t), 1))
        }
    }

    #[test]
    fn untargeted_total_failure() {
        let net = Network::zeros(LayerSpec::mlp(&[2, 10])).unwrap();
        let run =
            untargeted_from_targeted(&AlwaysFails, &net, &[0.5, 0.5], 0, NoiseMetric::L2).unwrap();
        assert!(!run.outcome.success);
        assert_eq!(run.per_target.len(), 9);
        let named = FromTargeted {
            attack: AlwaysFails,
            metric: NoiseMetric::L2,
        };
        assert_eq!(named.name(), "u-never");
        assert!(
            untargeted_from_targeted(&AlwaysFails, &net, &[0.5, 0.5], 10, NoiseMetric::L2).is_err()
        );
    }

    #[test]
    fn single_variant_combination_is_that_variant() {
        let mut p = DenseParams::zeros(2, 2);
        p.weights = vec![-1.0, 0.0, 1.0, 0.0];
        let net = Network::new(
            vec![
                LayerSpec::Dense {
                    in_dim: 2,
                    out_dim: 2,
                },
                LayerSpec::SoftmaxOutput,
            ],
            vec![p],
        )
        .unwrap();
        let fgsm = Fgsm::new(default_eps_grid());
        let combined = Combined {
            name: "t-ca-linf".into(),
            variants: vec![Box::new(fgsm.clone())],
            metric: NoiseMetric::Linf,
        };
        let x = [0.2, 0.5];
        assert_eq!(
            combined.attack(&net, &x, 1).unwrap(),
            fgsm.attack(&net, &x, 1).unwrap()
        );
        let empty = Combined {
            name: "empty".into(),
            variants: vec![],
            metric: NoiseMetric::L2,
        };
        assert!(empty.attack(&net, &x, 1).is_err());
    }
}
