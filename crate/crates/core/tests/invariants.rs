//! Property tests over random small networks and points.

use approx::assert_relative_eq;
use proptest::prelude::*;
use regionclf_core::attacks::{
    adapt, adapt_unclipped, deepfool, default_eps_grid, min_noise_success, noise_of, CwConfig,
    CwL2, CwLinf, Fgsm, Igsm, Jsma, TargetedAttack,
};
use regionclf_core::region::{sample_hypercube, vote_counts};
use regionclf_core::{AttackOutcome, LayerSpec, Network, NoiseMetric, RegionClassifier};

fn net(seed: u64, n: usize, l: usize) -> Network {
    Network::init(LayerSpec::mlp(&[n, 8, l]), seed).unwrap()
}

fn unit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hypercube_samples_stay_in_the_clipped_box(x in unit_vec(5), r in 0.0f64..0.7, m in 1usize..40, seed in any::<u64>()) {
        let s = sample_hypercube(&x, r, m, seed).unwrap();
        prop_assert_eq!(s.len(), m * x.len());
        for row in s.chunks(x.len()) {
            for (v, c) in row.iter().zip(&x) {
                prop_assert!(*v >= (c - r).max(0.0) && *v <= (c + r).min(1.0));
            }
        }
        prop_assert_eq!(sample_hypercube(&x, r, m, seed).unwrap(), s);
    }

    #[test]
    fn votes_sum_to_m(seed in any::<u64>(), x in unit_vec(4), r in 0.0f64..0.5, m in 1usize..600) {
        let net = net(seed, 4, 3);
        let votes = vote_counts(&net, &x, r, m, seed ^ 1).unwrap();
        prop_assert_eq!(votes.total(), m);
        prop_assert_eq!(votes.counts.len(), 3);
    }

    #[test]
    fn zero_radius_is_the_point_classifier(seed in any::<u64>(), x in unit_vec(6), m in 1usize..50) {
        let net = net(seed, 6, 4);
        let rc = RegionClassifier::new(&net, 0.0, m, seed).unwrap();
        let p = net.predict(&x).unwrap();
        prop_assert_eq!(rc.classify(&x).unwrap(), p);
        prop_assert_eq!(rc.vote(&x).unwrap().counts[p], m);
    }

    #[test]
    fn noise_norms_are_ordered(a in unit_vec(9), b in unit_vec(9)) {
        let n = noise_of(&a, &b).unwrap();
        prop_assert_eq!(n.l0, a.iter().zip(&b).filter(|(x, y)| x != y).count());
        prop_assert!(n.linf <= n.l2 + 1e-12);
        prop_assert!(n.l2 <= (n.l0 as f64).sqrt() * n.linf + 1e-12);
        let back = noise_of(&b, &a).unwrap();
        prop_assert_eq!(back.l0, n.l0);
        assert_relative_eq!(back.l2, n.l2, max_relative = 1e-12);
        prop_assert_eq!(noise_of(&a, &a).unwrap().l2, 0.0);
    }

    #[test]
    fn adapting_by_zero_is_the_identity(x in unit_vec(7), adv in unit_vec(7), alpha in 0.0f64..6.0) {
        let outcome = AttackOutcome {
            noise: noise_of(&x, &adv).unwrap(),
            adversarial: adv.clone(),
            success: true,
            target: Some(0),
            iterations: 1,
        };
        prop_assert_eq!(adapt(&outcome, &x, 0.0).unwrap(), adv.clone());
        let moved = adapt(&outcome, &x, alpha).unwrap();
        prop_assert!(moved.iter().all(|v| (0.0..=1.0).contains(v)));
        for ((u, a), o) in adapt_unclipped(&adv, &x, alpha).iter().zip(&adv).zip(&x) {
            assert_relative_eq!(u - o, (1.0 + alpha) * (a - o), epsilon = 1e-12);
        }
    }

    #[test]
    fn min_noise_pick_is_minimal(l2s in prop::collection::vec((0.0f64..5.0, any::<bool>()), 1..8)) {
        let outcomes: Vec<AttackOutcome> = l2s
            .iter()
            .map(|&(l2, success)| {
                let mut o = AttackOutcome::failure(&[0.0], None, 0);
                o.success = success;
                o.noise.l2 = l2;
                o
            })
            .collect();
        match min_noise_success(&outcomes, NoiseMetric::L2) {
            None => prop_assert!(l2s.iter().all(|&(_, s)| !s)),
            Some(i) => {
                prop_assert!(outcomes[i].success);
                for (j, o) in outcomes.iter().enumerate() {
                    if o.success {
                        prop_assert!(o.noise.l2 > outcomes[i].noise.l2 || (o.noise.l2 == outcomes[i].noise.l2 && j >= i));
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn attack_outcomes_are_consistent(seed in any::<u64>(), x in unit_vec(6), target in 0usize..3) {
        let net = net(seed, 6, 3);
        let quick = CwConfig { binary_search_steps: 4, inner_iterations: 100, ..CwConfig::default() };
        let attacks: Vec<Box<dyn TargetedAttack>> = vec![
            Box::new(Fgsm::new(default_eps_grid())),
            Box::new(Igsm::default()),
            Box::new(Jsma { max_l0: 6 }),
            Box::new(CwL2 { config: quick }),
            Box::new(CwLinf { config: quick }),
        ];
        for a in &attacks {
            let o = a.attack(&net, &x, target).unwrap();
            prop_assert!(o.adversarial.iter().all(|v| (0.0..=1.0).contains(v)), "{} left the box", a.name());
            prop_assert_eq!(o.target, Some(target));
            if o.success {
                prop_assert_eq!(net.predict(&o.adversarial).unwrap(), target);
                prop_assert_eq!(o.noise, noise_of(&x, &o.adversarial).unwrap());
            } else {
                prop_assert_eq!(&o.adversarial, &x);
                prop_assert_eq!(o.noise.l0, 0);
            }
        }
        let df = deepfool(&net, &x, 50, 0.02).unwrap();
        prop_assert!(df.adversarial.iter().all(|v| (0.0..=1.0).contains(v)));
        if df.success {
            prop_assert_ne!(net.predict(&df.adversarial).unwrap(), net.predict(&x).unwrap());
        }
    }
}
