//! Targeted fast and iterative gradient sign methods.
//!
//! Both step against the sign of the gradient of the training loss at the
//! target label and search a grid of L-infinity budgets in ascending order,
//! returning the first budget that succeeds.

use alloc::string::String;
use alloc::vec::Vec;

use super::{clip_unit, AttackOutcome, TargetedAttack};
use crate::error::{Error, Result};
use crate::network::Network;

/// `k / 256` for `k = 1..=256`.
pub fn default_eps_grid() -> Vec<f64> {
    (1..=256).map(|k| k as f64 / 256.0).collect()
}

fn check_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() {
        return Err(Error::Empty("epsilon grid"));
    }
    if eps_grid.iter().any(|e| !(*e >= 0.0)) || eps_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param(
            "epsilon grid must be non-negative and ascending",
        ));
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// T-FGSM: `x' = clip(x - eps * sign(grad_x J(x, t)))` for the smallest
/// succeeding `eps` in `eps_grid`.
pub fn t_fgsm(net: &Network, x: &[f64], target: usize, eps_grid: &[f64]) -> Result<AttackOutcome> {
    check_grid(eps_grid)?;
    let grad = net.input_gradient(x, target)?;
    let direction: Vec<f64> = grad.iter().map(|&g| sign(g)).collect();
    for (i, &eps) in eps_grid.iter().enumerate() {
        let candidate: Vec<f64> = x
            .iter()
            .zip(&direction)
            .map(|(&v, &s)| clip_unit(v - eps * s))
            .collect();
        if net.predict(&candidate)? == target {
            return AttackOutcome::targeted(net, x, candidate, target, i + 1);
        }
    }
    Ok(AttackOutcome::failure(x, Some(target), eps_grid.len()))
}

/// Clamps `v` into `[center - eps, center + eps]` so that `|v - center| <=
/// eps` holds exactly in floating point, not just before rounding.
fn clamp_ball(v: f64, center: f64, eps: f64) -> f64 {
    let mut out = v.clamp(center - eps, center + eps);
    while out - center > eps {
        out = out.next_down();
    }
    while center - out > eps {
        out = out.next_up();
    }
    out
}

/// T-IGSM; see [`t_igsm_observed`].
pub fn t_igsm(
    net: &Network,
    x: &[f64],
    target: usize,
    eps_grid: &[f64],
    step: f64,
    max_iters: usize,
) -> Result<AttackOutcome> {
    t_igsm_observed(net, x, target, eps_grid, step, max_iters, |_, _| {})
}

/// T-IGSM. For each `eps` in ascending order, starting from `x`, repeat
/// `x' <- clip_[0,1](clip_{x,eps}(x' - step * sign(grad_x J(x', t))))` up to
/// `max_iters` times, stopping as soon as the prediction is `target`.
/// `observe(eps, iterate)` sees every iterate.
pub fn t_igsm_observed(
    net: &Network,
    x: &[f64],
    target: usize,
    eps_grid: &[f64],
    step: f64,
    max_iters: usize,
    mut observe: impl FnMut(f64, &[f64]),
) -> Result<AttackOutcome> {
    check_grid(eps_grid)?;
    if !(step > 0.0) {
        return Err(Error::param("step must be positive"));
    }
    if net.predict(x)? == target {
        return AttackOutcome::targeted(net, x, x.to_vec(), target, 0);
    }
    let mut iterations = 0;
    for &eps in eps_grid {
        let mut current = x.to_vec();
        for _ in 0..max_iters {
            let grad = net.input_gradient(&current, target)?;
            iterations += 1;
            let mut moved = false;
            for ((c, &g), &center) in current.iter_mut().zip(&grad).zip(x) {
                let next = clamp_ball(clip_unit(*c - step * sign(g)), center, eps);
                moved |= next != *c;
                *c = next;
            }
            observe(eps, &current);
            if net.predict(&current)? == target {
                return AttackOutcome::targeted(net, x, current, target, iterations);
            }
            if !moved {
                break;
            }
        }
    }
    Ok(AttackOutcome::failure(x, Some(target), iterations))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fgsm {
    pub eps_grid: Vec<f64>,
}

impl Fgsm {
    pub fn new(eps_grid: Vec<f64>) -> Self {
        Fgsm { eps_grid }
    }
}

impl TargetedAttack for Fgsm {
    fn name(&self) -> String {
        "t-fgsm".into()
    }
    fn attack(&self, net: &Network, x: &[f64], target: usize) -> Result<AttackOutcome> {
        t_fgsm(net, x, target, &self.eps_grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Igsm {
    pub eps_grid: Vec<f64>,
    pub step: f64,
    pub max_iters: usize,
}

impl Default for Igsm {
    fn default() -> Self {
        Igsm {
            eps_grid: default_eps_grid(),
            step: 1.0 / 256.0,
            max_iters: 100,
        }
    }
}

impl TargetedAttack for Igsm {
    fn name(&self) -> String {
        "t-igsm".into()
    }
    fn attack(&self, net: &Network, x: &[f64], target: usize) -> Result<AttackOutcome> {
        t_igsm(net, x, target, &self.eps_grid, self.step, self.max_iters)
    }
}
