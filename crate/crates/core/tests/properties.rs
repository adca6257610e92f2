//! Property tests for the spec-level invariants.

use proptest::prelude::*;
use umrl_core::env::{point_nav_2d, rollout, velocity_bot_1d, Action, Cmp, FnPolicy, Trajectory};
use umrl_core::eval::aggregate;
use umrl_core::numerics::dist::CategoricalDist;
use umrl_core::numerics::RngSeed;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Softmax stays normalized for logits up to magnitude 50.
    #[test]
    fn softmax_normalized(logits in prop::collection::vec(-50.0f64..50.0, 1..8)) {
        let d = CategoricalDist::new(logits);
        let sum: f64 = d.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
    }

    /// Categorical entropy lies in [0, ln K] and is maximized at uniform.
    #[test]
    fn entropy_bounds(logits in prop::collection::vec(-50.0f64..50.0, 2..8)) {
        let k = logits.len();
        let d = CategoricalDist::new(logits);
        let h = d.entropy();
        prop_assert!(h >= -1e-12);
        prop_assert!(h <= (k as f64).ln() + 1e-12);
        let uniform = CategoricalDist::new(vec![0.0; k]);
        prop_assert!((uniform.entropy() - (k as f64).ln()).abs() < 1e-12);
        prop_assert!(h <= uniform.entropy() + 1e-12);
    }

    /// Point navigation states stay inside [−2, 2]² for any action sequence.
    #[test]
    fn point_nav_states_bounded(actions in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..60)) {
        let cmp = point_nav_2d();
        let mut rng = RngSeed::new(0).rng();
        let mut s = cmp.initial_state(&mut rng);
        for (ax, ay) in actions {
            s = cmp.step(&s, &Action::Continuous(vec![ax, ay]), &mut rng);
            prop_assert!(s.iter().all(|&x| (-2.0..=2.0).contains(&x)));
        }
    }

    /// Velocity stays within |v| ≤ 2 + 1e-9 for any admissible force sequence.
    #[test]
    fn velocity_bot_velocity_bounded(forces in prop::collection::vec(-3.0f64..3.0, 1..120)) {
        let cmp = velocity_bot_1d();
        let mut rng = RngSeed::new(0).rng();
        let mut s = cmp.initial_state(&mut rng);
        for f in forces {
            s = cmp.step(&s, &Action::Continuous(vec![f]), &mut rng);
            prop_assert!(s[1].abs() <= 2.0 + 1e-9);
        }
    }

    /// Reward-to-go matches the O(T²) naive double loop.
    #[test]
    fn discounted_returns_match_naive(
        rewards in prop::collection::vec(-3.0f64..3.0, 1..40),
        gamma in 0.0f64..=1.0,
    ) {
        let n = rewards.len();
        let traj = Trajectory {
            states: vec![vec![0.0]; n + 1],
            actions: vec![Action::Discrete(0); n],
            log_probs: vec![0.0; n],
            entropies: vec![0.0; n],
            rewards: Some(rewards.clone()),
        };
        let fast = umrl_core::env::discounted_returns(&traj, gamma).unwrap();
        for t in 0..n {
            let mut naive = 0.0;
            for k in t..n {
                naive += gamma.powi((k - t) as i32) * rewards[k];
            }
            prop_assert!((fast[t] - naive).abs() < 1e-12);
        }
    }

    /// Curve aggregation is permutation-invariant.
    #[test]
    fn aggregate_permutation_invariant(
        curves in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 2..10),
        seed in 0u64..1000,
    ) {
        let (mean_a, se_a) = aggregate(&curves).unwrap();
        let mut shuffled = curves.clone();
        // Fisher-Yates with the crate's own deterministic stream.
        let mut rng = RngSeed::new(seed).rng();
        for i in (1..shuffled.len()).rev() {
            let j = rng.below(i + 1);
            shuffled.swap(i, j);
        }
        let (mean_b, se_b) = aggregate(&shuffled).unwrap();
        for (a, b) in mean_a.iter().zip(&mean_b) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in se_a.iter().zip(&se_b) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

/// Fixed-horizon invariant: rollouts never terminate early.
#[test]
fn rollouts_have_exact_horizon() {
    for cmp in [point_nav_2d(), velocity_bot_1d()] {
        let dim = match cmp.action_kind() {
            umrl_core::env::ActionKind::Continuous { dim, .. } => dim,
            _ => unreachable!(),
        };
        let policy = FnPolicy(move |_: &[f64]| Action::Continuous(vec![0.3; dim]));
        let traj = rollout(&cmp, &policy, None, &mut RngSeed::new(1).rng()).unwrap();
        assert_eq!(traj.len(), cmp.horizon());
        assert_eq!(traj.states.len(), cmp.horizon() + 1);
    }
}
