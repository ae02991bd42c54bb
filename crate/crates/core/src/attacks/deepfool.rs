//! DeepFool, the untargeted linearized-boundary attack.
//!
//! At the current point with original class `k0`, every other class `k`
//! defines `f_k = Z_k - Z_k0` and `w_k = grad Z_k - grad Z_k0`. The closest
//! linearized boundary is `l = argmin_k |f_k| / ||w_k||`, and the step is
//! `r = |f_l| / ||w_l||^2 * w_l`. Steps accumulate in `r_total` and the
//! iterate is `clip(x + (1 + overshoot) * r_total)`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{clip_unit, AttackOutcome, UntargetedAttack};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::network::{argmax, Network};

pub fn deepfool(
    net: &Network,
    x: &[f64],
    max_iters: usize,
    overshoot: f64,
) -> Result<AttackOutcome> {
    Ok(deepfool_run(net, x, max_iters, overshoot)?.outcome)
}

/// A DeepFool run with its last iterate, kept even when the label did not
/// change (a step that lands exactly on a boundary keeps the tie-broken
/// label).
#[derive(Debug, Clone, PartialEq)]
pub struct DeepFoolRun {
    pub outcome: AttackOutcome,
    pub last_iterate: Vec<f64>,
}

pub fn deepfool_run(
    net: &Network,
    x: &[f64],
    max_iters: usize,
    overshoot: f64,
) -> Result<DeepFoolRun> {
    if !(overshoot >= 0.0) {
        return Err(Error::param("overshoot must be non-negative"));
    }
    let n = net.input_dim();
    let l = net.class_count();
    let original = net.predict(x)?;
    let mut r_total = vec![0.0; n];
    let mut current = x.to_vec();
    let mut iterations = 0;

    while iterations < max_iters {
        let trace = net.forward(&current)?;
        if argmax(&trace.logits) != original {
            break;
        }
        let jac = net.logit_jacobian_from_trace(&trace);
        let base_row = &jac[original * n..(original + 1) * n];

        let mut best: Option<(f64, usize, f64, f64)> = None;
        for k in (0..l).filter(|&k| k != original) {
            let row = &jac[k * n..(k + 1) * n];
            let w_sq: f64 = row
                .iter()
                .zip(base_row)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if !(w_sq > 0.0) {
                continue;
            }
            let f = trace.logits[k] - trace.logits[original];
            let dist = f.abs() / libm::sqrt(w_sq);
            if best.is_none_or(|(d, ..)| dist < d) {
                best = Some((dist, k, f, w_sq));
            }
        }
        let Some((_, k, f, w_sq)) = best else {
            return Ok(DeepFoolRun {
                outcome: AttackOutcome::failure(x, None, iterations),
                last_iterate: current,
            });
        };
        let scale = f.abs() / w_sq;
        let row = &jac[k * n..(k + 1) * n];
        for ((r, a), b) in r_total.iter_mut().zip(row).zip(base_row) {
            *r += scale * (a - b);
        }
        for ((c, &xi), &r) in current.iter_mut().zip(x).zip(&r_total) {
            *c = clip_unit(xi + (1.0 + overshoot) * r);
        }
        iterations += 1;
    }

    let out = AttackOutcome::untargeted(net, x, current.clone(), original, iterations)?;
    let outcome = if out.success {
        out
    } else {
        AttackOutcome::failure(x, None, iterations)
    };
    Ok(DeepFoolRun {
        outcome,
        last_iterate: current,
    })
}

/// Distance from `x` to the hyperplane `w . y + b = 0`.
#[allow(dead_code)]
pub(crate) fn plane_distance(w: &[f64], b: f64, x: &[f64]) -> f64 {
    (dot(w, x) + b).abs() / libm::sqrt(dot(w, w))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepFool {
    pub max_iters: usize,
    pub overshoot: f64,
}

impl Default for DeepFool {
    fn default() -> Self {
        DeepFool {
            max_iters: 50,
            overshoot: 0.02,
        }
    }
}

impl UntargetedAttack for DeepFool {
    fn name(&self) -> String {
        "deepfool".into()
    }

    /// DeepFool moves away from the network's own prediction; for benign
    /// inputs that is `true_label`, and success is judged against it.
    fn attack_untargeted(
        &self,
        net: &Network,
        x: &[f64],
        true_label: usize,
    ) -> Result<AttackOutcome> {
        let out = deepfool(net, x, self.max_iters, self.overshoot)?;
        if out.success {
            AttackOutcome::untargeted(net, x, out.adversarial, true_label, out.iterations)
        } else {
            Ok(out)
        }
    }
}
