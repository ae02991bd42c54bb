//! Vote fractions against the exact share of the clipped box on each side
//! of an axis-aligned boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regionclf_core::network::DenseParams;
use regionclf_core::region::vote_counts;
use regionclf_core::{LayerSpec, Network};

/// Class 1 iff `y_0 > c`.
fn threshold_net(c: f64) -> Network {
    Network::new(
        vec![
            LayerSpec::Dense {
                in_dim: 2,
                out_dim: 2,
            },
            LayerSpec::SoftmaxOutput,
        ],
        vec![DenseParams {
            in_dim: 2,
            out_dim: 2,
            weights: vec![0.0, 0.0, 1.0, 0.0],
            bias: vec![0.0, -c],
        }],
    )
    .unwrap()
}

#[test]
fn vote_share_matches_the_interval_length() {
    const M: usize = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..40 {
        let x: [f64; 2] = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let r: f64 = rng.gen_range(0.05..0.6);
        let c: f64 = rng.gen_range(0.0..1.0);
        let (lo, hi) = ((x[0] - r).max(0.0), (x[0] + r).min(1.0));
        let p = ((hi - c.max(lo)).max(0.0) / (hi - lo)).min(1.0);
        let votes = vote_counts(&threshold_net(c), &x, r, M, case).unwrap();
        let share = votes.counts[1] as f64 / M as f64;
        let sigma = (p * (1.0 - p) / M as f64).sqrt();
        assert!(
            (share - p).abs() <= 5.0 * sigma + 1e-12,
            "case {case}: share {share} vs exact {p}"
        );
    }
}
