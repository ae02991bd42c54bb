//! Targeted Jacobian saliency map attack, logit variant.
//!
//! Each round takes the logit Jacobian at the current point and scores every
//! admissible move of one or two still-unmodified features to a bound of the
//! box (0 or 1). For a move with feature changes `d_p`,
//!
//! ```text
//! gain   = sum_p d_p * dZ_t/dx_p            (must be > 0)
//! others = sum_p d_p * sum_{i != t} dZ_i/dx_p   (must be <= 0)
//! ```
//!
//! and the score is `gain * |others|`, ties broken by `gain - others`, then
//! in favour of single-feature moves, then by the lowest feature index.
//! The winning features are saturated and leave the search domain.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{noise_of, AttackOutcome, TargetedAttack, L0_THRESHOLD};
use crate::error::Result;
use crate::network::Network;

#[derive(Debug, Clone, Copy)]
struct Move {
    feature: usize,
    to: f64,
    gain: f64,
    others: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Score {
    product: f64,
    spread: f64,
}

fn score(gain: f64, others: f64) -> Option<Score> {
    (gain > 0.0 && others <= 0.0).then(|| Score {
        product: gain * -others,
        spread: gain - others,
    })
}

/// T-JSMA with an L0 budget of `max_l0` changed features.
pub fn t_jsma(net: &Network, x: &[f64], target: usize, max_l0: usize) -> Result<AttackOutcome> {
    let n = net.input_dim();
    let l = net.class_count();
    let mut current = x.to_vec();
    let mut searchable = vec![true; n];
    let mut rounds = 0;

    loop {
        let trace = net.forward(&current)?;
        if crate::network::argmax(&trace.logits) == target {
            return AttackOutcome::targeted(net, x, current, target, rounds);
        }
        let changed = noise_of(x, &current)?.l0;
        if changed >= max_l0 {
            break;
        }
        let jac = net.logit_jacobian_from_trace(&trace);
        rounds += 1;

        let mut moves = Vec::with_capacity(2 * n);
        for p in (0..n).filter(|&p| searchable[p]) {
            let alpha = jac[target * n + p];
            let beta: f64 = (0..l)
                .filter(|&i| i != target)
                .map(|i| jac[i * n + p])
                .sum();
            for to in [0.0, 1.0] {
                let d = to - current[p];
                if d.abs() > L0_THRESHOLD {
                    moves.push(Move {
                        feature: p,
                        to,
                        gain: alpha * d,
                        others: beta * d,
                    });
                }
            }
        }

        let mut best: Option<(Score, Move, Option<Move>)> = None;
        for m in &moves {
            if let Some(s) = score(m.gain, m.others) {
                if best.as_ref().is_none_or(|(b, _, _)| s > *b) {
                    best = Some((s, *m, None));
                }
            }
        }
        if changed + 2 <= max_l0 {
            for (i, a) in moves.iter().enumerate() {
                for b in &moves[i + 1..] {
                    if a.feature == b.feature {
                        continue;
                    }
                    if let Some(s) = score(a.gain + b.gain, a.others + b.others) {
                        if best.as_ref().is_none_or(|(bs, _, _)| s > *bs) {
                            best = Some((s, *a, Some(*b)));
                        }
                    }
                }
            }
        }

        let Some((_, first, second)) = best else {
            break;
        };
        for m in core::iter::once(first).chain(second) {
            current[m.feature] = m.to;
            searchable[m.feature] = false;
        }
    }
    let mut out = AttackOutcome::targeted(net, x, current, target, rounds)?;
    if !out.success {
        out = AttackOutcome::failure(x, Some(target), rounds);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Jsma {
    pub max_l0: usize,
}

impl Default for Jsma {
    /// 112 features, about 14% of a 28x28 image.
    fn default() -> Self {
        Jsma { max_l0: 112 }
    }
}

impl TargetedAttack for Jsma {
    fn name(&self) -> String {
        "t-jsma".into()
    }
    fn attack(&self, net: &Network, x: &[f64], target: usize) -> Result<AttackOutcome> {
        t_jsma(net, x, target, self.max_l0)
    }
}
