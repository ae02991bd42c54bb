//! Carlini-Wagner attacks in the L2, L0 and L-infinity norms.
//!
//! All three share one solver. It optimizes `w` with Adam under the change
//! of variables `x' = (tanh(w) + 1) / 2`, minimizing `D(x') + c * f(x')` with
//! `f(x') = max(max_{i != t} Z_i(x') - Z_t(x'), -k)`. `D` is the squared L2
//! distance or the thresholded L-infinity penalty `sum_i (|d_i| - tau)^+`.
//!
//! `tanh` cannot hit `x` exactly, so coordinates of `x'` within
//! [`SNAP`] of `x` are snapped back onto it; without that every coordinate
//! would count as changed under L0.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{clip_unit, AttackOutcome, TargetedAttack, L0_THRESHOLD};
use crate::error::{Error, Result};
use crate::network::{argmax, Network};

/// Coordinates of the candidate this close to the original are set equal
/// to it.
pub const SNAP: f64 = 1e-6;

const BOX_SHRINK: f64 = 0.999_999;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// The L0 attack first pins every coordinate that moved less than this.
const L0_UNCHANGED: f64 = 1e-4;
/// L-infinity shrink factor for tau.
const TAU_DECAY: f64 = 0.9;
/// L-infinity search stops once tau falls below one pixel quantum.
const TAU_MIN: f64 = 1.0 / 256.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwConfig {
    /// Margin `k` the target logit must keep over every other logit.
    pub confidence: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub binary_search_steps: usize,
    pub inner_iterations: usize,
    pub inner_learning_rate: f64,
    /// Stop a solve once the loss stalls, checked ten times per solve.
    pub abort_early: bool,
}

impl Default for CwConfig {
    fn default() -> Self {
        CwConfig {
            confidence: 0.0,
            c_min: 1e-3,
            c_max: 1e10,
            binary_search_steps: 9,
            inner_iterations: 1000,
            inner_learning_rate: 1e-2,
            abort_early: true,
        }
    }
}

impl CwConfig {
    pub fn with_confidence(mut self, k: f64) -> Self {
        self.confidence = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.confidence >= 0.0 && self.confidence.is_finite()) {
            return Err(Error::param("confidence must be finite and non-negative"));
        }
        if !(self.c_min > 0.0 && self.c_min < self.c_max) {
            return Err(Error::param("need 0 < c_min < c_max"));
        }
        if self.binary_search_steps == 0 || self.inner_iterations == 0 {
            return Err(Error::param(
                "search steps and inner iterations must be positive",
            ));
        }
        if !(self.inner_learning_rate > 0.0) {
            return Err(Error::param("inner learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Penalty {
    L2,
    Linf(f64),
}

struct Problem<'a> {
    net: &'a Network,
    x: &'a [f64],
    target: usize,
    confidence: f64,
    penalty: Penalty,
    /// `false` pins the coordinate to `x`.
    free: &'a [bool],
    iterations: usize,
    learning_rate: f64,
    abort_early: bool,
    /// Return as soon as any iterate succeeds.
    stop_on_success: bool,
}

struct Solve {
    /// Best success and its distance: squared L2, or L-infinity for the
    /// thresholded penalty.
    best: Option<(Vec<f64>, f64)>,
    steps: usize,
    finite: bool,
}

fn to_w(v: f64) -> f64 {
    libm::atanh((2.0 * v - 1.0) * BOX_SHRINK)
}

/// Largest other logit and its class.
fn runner_up(logits: &[f64], target: usize) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (i, &z) in logits.iter().enumerate() {
        if i != target && (best.0 == usize::MAX || z > best.1) {
            best = (i, z);
        }
    }
    best
}

impl Problem<'_> {
    fn solve(&self, start: &[f64], c: f64) -> Result<Solve> {
        let n = self.x.len();
        let mut w: Vec<f64> = start.iter().map(|&v| to_w(clip_unit(v))).collect();
        let mut m = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut xs = vec![0.0; n];
        let mut dxdw = vec![0.0; n];
        let mut coeffs = vec![0.0; self.net.class_count()];
        let mut out = Solve {
            best: None,
            steps: 0,
            finite: true,
        };
        let check_every = (self.iterations / 10).max(1);
        let mut prev_loss = f64::INFINITY;

        for step in 0..self.iterations {
            for i in 0..n {
                if self.free[i] {
                    let th = libm::tanh(w[i]);
                    let p = clip_unit(0.5 * th + 0.5);
                    xs[i] = if (p - self.x[i]).abs() <= SNAP {
                        self.x[i]
                    } else {
                        p
                    };
                    dxdw[i] = 0.5 * (1.0 - th * th);
                } else {
                    xs[i] = self.x[i];
                    dxdw[i] = 0.0;
                }
            }
            let trace = self.net.forward(&xs)?;
            let (j, other) = runner_up(&trace.logits, self.target);
            let raw = other - trace.logits[self.target];
            let f = raw.max(-self.confidence);

            let mut dist = 0.0;
            let mut linf: f64 = 0.0;
            for (a, b) in xs.iter().zip(self.x) {
                let d = (a - b).abs();
                linf = linf.max(d);
                dist += match self.penalty {
                    Penalty::L2 => d * d,
                    Penalty::Linf(tau) => (d - tau).max(0.0),
                };
            }
            let loss = dist + c * f;
            if !loss.is_finite() {
                out.finite = false;
                break;
            }

            let hit = argmax(&trace.logits) == self.target && -raw >= self.confidence;
            if hit {
                let (score, admissible) = match self.penalty {
                    Penalty::L2 => (dist, true),
                    Penalty::Linf(tau) => (linf, linf <= tau),
                };
                if admissible && out.best.as_ref().is_none_or(|(_, s)| score < *s) {
                    out.best = Some((xs.clone(), score));
                }
            }
            if self.stop_on_success && out.best.is_some() {
                break;
            }
            if self.abort_early && step % check_every == 0 {
                if loss > prev_loss * 0.9999 {
                    break;
                }
                prev_loss = loss;
            }

            let mut grad: Vec<f64> = match self.penalty {
                Penalty::L2 => xs.iter().zip(self.x).map(|(a, b)| 2.0 * (a - b)).collect(),
                Penalty::Linf(tau) => xs
                    .iter()
                    .zip(self.x)
                    .map(|(a, b)| {
                        let d = a - b;
                        if d.abs() > tau {
                            d.signum()
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            };
            if raw > -self.confidence {
                coeffs.iter_mut().for_each(|v| *v = 0.0);
                coeffs[j] = c;
                coeffs[self.target] = -c;
                let gf = self.net.logit_combination_gradient(&trace, &coeffs);
                for (g, h) in grad.iter_mut().zip(&gf) {
                    *g += h;
                }
            }

            out.steps += 1;
            let t = out.steps as i32;
            let lr = self.learning_rate * libm::sqrt(1.0 - libm::pow(ADAM_BETA2, t as f64))
                / (1.0 - libm::pow(ADAM_BETA1, t as f64));
            for i in 0..n {
                if !self.free[i] {
                    continue;
                }
                let g = grad[i] * dxdw[i];
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                w[i] -= lr * m[i] / (libm::sqrt(v[i]) + ADAM_EPS);
            }
        }
        Ok(out)
    }
}

fn check_inputs(net: &Network, x: &[f64], target: usize, cfg: &CwConfig) -> Result<()> {
    cfg.validate()?;
    Error::check_dim(net.input_dim(), x.len())?;
    if target >= net.class_count() {
        return Err(Error::LabelRange {
            label: target,
            class_count: net.class_count(),
        });
    }
    Ok(())
}

fn problem<'a>(
    net: &'a Network,
    x: &'a [f64],
    target: usize,
    cfg: &CwConfig,
    penalty: Penalty,
    free: &'a [bool],
) -> Problem<'a> {
    Problem {
        net,
        x,
        target,
        confidence: cfg.confidence,
        penalty,
        free,
        iterations: cfg.inner_iterations,
        learning_rate: cfg.inner_learning_rate,
        abort_early: cfg.abort_early,
        stop_on_success: false,
    }
}

/// Targeted CW-L2. The constant `c` starts at `c_min` and grows tenfold
/// until some solve succeeds; from then on it bisects between the largest
/// failing and smallest succeeding value. The smallest-L2 success over all
/// rounds is returned.
pub fn t_cw_l2(net: &Network, x: &[f64], target: usize, cfg: &CwConfig) -> Result<AttackOutcome> {
    check_inputs(net, x, target, cfg)?;
    let free = vec![true; x.len()];
    let prob = problem(net, x, target, cfg, Penalty::L2, &free);

    let (mut lower, mut upper) = (0.0, cfg.c_max);
    let mut c = cfg.c_min;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut steps = 0;
    for _ in 0..cfg.binary_search_steps {
        let solve = prob.solve(x, c)?;
        steps += solve.steps;
        let succeeded = solve.best.is_some();
        if let Some((cand, d)) = solve.best {
            if best.as_ref().is_none_or(|(_, b)| d < *b) {
                best = Some((cand, d));
            }
        }
        if succeeded && solve.finite {
            upper = upper.min(c);
            c = 0.5 * (lower + upper);
        } else {
            lower = lower.max(c);
            c = if upper < cfg.c_max {
                0.5 * (lower + upper)
            } else {
                (c * 10.0).min(cfg.c_max)
            };
        }
    }
    finish(net, x, target, best.map(|b| b.0), steps)
}

fn finish(
    net: &Network,
    x: &[f64],
    target: usize,
    candidate: Option<Vec<f64>>,
    steps: usize,
) -> Result<AttackOutcome> {
    match candidate {
        Some(adv) => {
            let out = AttackOutcome::targeted(net, x, adv, target, steps)?;
            if out.success {
                Ok(out)
            } else {
                Ok(AttackOutcome::failure(x, Some(target), steps))
            }
        }
        None => Ok(AttackOutcome::failure(x, Some(target), steps)),
    }
}

/// Details of a CW-L0 run.
#[derive(Debug, Clone, PartialEq)]
pub struct CwL0Report {
    pub outcome: AttackOutcome,
    /// L0 of the first, unrestricted success.
    pub first_round_l0: Option<usize>,
    /// Successful restricted solves.
    pub rounds: usize,
    /// Coordinates pinned to `x` in the solve that produced the outcome.
    pub pinned: Vec<bool>,
}

/// Solves with `c` doubling from `c` until success or `c_max`. Returns the
/// success and the `c` that produced it.
fn doubling_solve(
    prob: &Problem<'_>,
    start: &[f64],
    mut c: f64,
    c_max: f64,
    steps: &mut usize,
) -> Result<Option<(Vec<f64>, f64)>> {
    while c <= c_max {
        let solve = prob.solve(start, c)?;
        *steps += solve.steps;
        if let Some((cand, _)) = solve.best {
            return Ok(Some((cand, c)));
        }
        c *= 2.0;
    }
    Ok(None)
}

/// Targeted CW-L0. Repeats a restricted L2 solve, each time pinning more
/// coordinates to `x`: first all that barely moved, then the ones with the
/// smallest `|g_i * d_i|`, where `g` is the gradient of the logit margin
/// `max_{i != t} Z_i - Z_t` at the success. The last success before a solve
/// fails is returned.
pub fn t_cw_l0(net: &Network, x: &[f64], target: usize, cfg: &CwConfig) -> Result<AttackOutcome> {
    Ok(t_cw_l0_report(net, x, target, cfg)?.outcome)
}

pub fn t_cw_l0_report(
    net: &Network,
    x: &[f64],
    target: usize,
    cfg: &CwConfig,
) -> Result<CwL0Report> {
    check_inputs(net, x, target, cfg)?;
    let n = x.len();
    let mut free = vec![true; n];
    let mut steps = 0;
    let mut c = cfg.c_min;
    let mut start = x.to_vec();
    let mut last: Option<(Vec<f64>, Vec<bool>)> = None;
    let mut first_round_l0 = None;
    let mut rounds = 0;

    loop {
        let prob = problem(net, x, target, cfg, Penalty::L2, &free);
        let Some((adv, used_c)) = doubling_solve(&prob, &start, c, cfg.c_max, &mut steps)? else {
            break;
        };
        if net.predict(&adv)? != target {
            break;
        }
        rounds += 1;
        c = used_c;
        let changed: Vec<usize> = (0..n)
            .filter(|&i| (adv[i] - x[i]).abs() > L0_THRESHOLD)
            .collect();
        if first_round_l0.is_none() {
            first_round_l0 = Some(changed.len());
        }
        last = Some((adv.clone(), free.clone()));

        for i in 0..n {
            if (adv[i] - x[i]).abs() < L0_UNCHANGED {
                free[i] = false;
            }
        }
        let trace = net.forward(&adv)?;
        let (j, _) = runner_up(&trace.logits, target);
        let mut coeffs = vec![0.0; net.class_count()];
        coeffs[j] = 1.0;
        coeffs[target] = -1.0;
        let g = net.logit_combination_gradient(&trace, &coeffs);
        let mut order: Vec<(f64, usize)> = (0..n)
            .filter(|&i| free[i])
            .map(|i| ((g[i] * (adv[i] - x[i])).abs(), i))
            .collect();
        if order.is_empty() {
            break;
        }
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // Pin several coordinates per round while their contribution is
        // negligible, at least one.
        let batch = (0.3 * libm::sqrt(changed.len() as f64)).max(1.0);
        let mut pinned = 0;
        for (score, i) in order {
            free[i] = false;
            pinned += 1;
            if score > 0.01 || pinned as f64 >= batch {
                break;
            }
        }
        start = adv;
        for i in 0..n {
            if !free[i] {
                start[i] = x[i];
            }
        }
    }

    Ok(match last {
        Some((adv, free_then)) => CwL0Report {
            outcome: finish(net, x, target, Some(adv), steps)?,
            first_round_l0,
            rounds,
            pinned: free_then.iter().map(|f| !f).collect(),
        },
        None => CwL0Report {
            outcome: AttackOutcome::failure(x, Some(target), steps),
            first_round_l0: None,
            rounds: 0,
            pinned: vec![false; n],
        },
    })
}

/// Details of a CW-L-infinity run.
#[derive(Debug, Clone, PartialEq)]
pub struct CwLinfReport {
    pub outcome: AttackOutcome,
    /// Every tau whose solve found a success with all `|d_i| <= tau`, in
    /// order.
    pub accepted_taus: Vec<f64>,
}

/// Targeted CW-L-infinity. Starting from `tau = 1`, finds a success whose
/// perturbation stays within `tau` (doubling `c` as needed), then sets
/// `tau` to 0.9 times the smaller of `tau` and the achieved L-infinity
/// noise and repeats, until a solve fails or `tau` drops below 1/256.
pub fn t_cw_linf(net: &Network, x: &[f64], target: usize, cfg: &CwConfig) -> Result<AttackOutcome> {
    Ok(t_cw_linf_report(net, x, target, cfg)?.outcome)
}

pub fn t_cw_linf_report(
    net: &Network,
    x: &[f64],
    target: usize,
    cfg: &CwConfig,
) -> Result<CwLinfReport> {
    check_inputs(net, x, target, cfg)?;
    let free = vec![true; x.len()];
    let mut tau = 1.0;
    let mut c = cfg.c_min;
    let mut steps = 0;
    let mut start = x.to_vec();
    let mut best: Option<Vec<f64>> = None;
    let mut accepted_taus = Vec::new();

    while tau >= TAU_MIN {
        let mut prob = problem(net, x, target, cfg, Penalty::Linf(tau), &free);
        prob.stop_on_success = true;
        let Some((adv, used_c)) = doubling_solve(&prob, &start, c, cfg.c_max, &mut steps)? else {
            break;
        };
        c = used_c;
        accepted_taus.push(tau);
        let achieved = adv
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        tau = TAU_DECAY * tau.min(achieved);
        start = adv.clone();
        best = Some(adv);
        if achieved == 0.0 {
            break;
        }
    }
    Ok(CwLinfReport {
        outcome: finish(net, x, target, best, steps)?,
        accepted_taus,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CwL2 {
    pub config: CwConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CwL0 {
    pub config: CwConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CwLinf {
    pub config: CwConfig,
}

impl TargetedAttack for CwL2 {
    fn name(&self) -> String {
        "t-cw-l2".into()
    }
    fn attack(&self, net: &Network, x: &[f64], target: usize) -> Result<AttackOutcome> {
        t_cw_l2(net, x, target, &self.config)
    }
}

impl TargetedAttack for CwL0 {
    fn name(&self) -> String {
        "t-cw-l0".into()
    }
    fn attack(&self, net: &Network, x: &[f64], target: usize) -> Result<AttackOutcome> {
        t_cw_l0(net, x, target, &self.config)
    }
}

impl TargetedAttack for CwLinf {
    fn name(&self) -> String {
        "t-cw-linf".into()
    }
    fn attack(&self, net: &Network, x: &[f64], target: usize) -> Result<AttackOutcome> {
        t_cw_linf(net, x, target, &self.config)
    }
}
