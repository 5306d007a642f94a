use proptest::prelude::*;
use rarl_core::ambiguity::AmbiguitySet;
use rarl_core::generate::{generate_mdp, GeneratorSpec};
use rarl_core::mdp::{gain_bias, Policy, QTable};
use rarl_core::nac::{mirror_descent_update, UpdateSign};
use rarl_core::planning::{contraction_diagnostic, robust_optimal_control_exact, robust_policy_eval_exact, PlanningTolerance};
use rarl_core::qlearning::{run_qlearning, QLearnConfig};

fn spec(n: usize, m: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        num_states: n,
        num_actions: m,
        concentration: 1.0,
        min_row_mass: 0.5 / n as f64,
        seed,
        attach_metric: true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mirror_update_keeps_a_positive_simplex(
        q in prop::collection::vec(-20.0f64..20.0, 12),
        eta in 0.0f64..5.0,
        shift in prop::collection::vec(-50.0f64..50.0, 4),
    ) {
        let pi = Policy::uniform(4, 3);
        let table = QTable::from_fn(4, 3, |s, a| q[s * 3 + a]);
        let moved = QTable::from_fn(4, 3, |s, a| q[s * 3 + a] + shift[s]);
        let a = mirror_descent_update(&pi, &table, eta, UpdateSign::Maximize).unwrap();
        let b = mirror_descent_update(&pi, &moved, eta, UpdateSign::Maximize).unwrap();
        for s in 0..4 {
            prop_assert!((a.row(s).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for x in 0..3 {
                prop_assert!(a.prob(s, x) > 0.0);
                prop_assert!((a.prob(s, x) - b.prob(s, x)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_radius_oracles_match_nominal(seed in 0u64..1000, n in 2usize..6, m in 1usize..4) {
        let mdp = generate_mdp(&spec(n, m, seed)).unwrap();
        let tol = PlanningTolerance::default();
        let policy = Policy::uniform(n, m);
        let nominal = gain_bias(&mdp, &policy, mdp.kernel(), 0).unwrap();
        let eval = robust_policy_eval_exact(&mdp, &policy, &AmbiguitySet::tv(0.0).unwrap(), &tol).unwrap();
        prop_assert!((eval.gain - nominal.gain).abs() <= 1e-8);
        for (a, b) in eval.bias.0.iter().zip(&nominal.bias.0) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn diagnostics_never_expand(seed in 0u64..1000, radius in 0.0f64..0.5) {
        let mdp = generate_mdp(&spec(4, 3, seed)).unwrap();
        let set = AmbiguitySet::contamination(radius).unwrap();
        let q1 = QTable::from_fn(4, 3, |s, a| ((seed as usize + 7 * s + 3 * a) % 11) as f64 * 0.3);
        let q2 = QTable::from_fn(4, 3, |s, a| ((seed as usize + 5 * s + a) % 7) as f64 * -0.4);
        let report = contraction_diagnostic(&mdp, &set, &q1, &q2, 30, None).unwrap();
        prop_assert!(report.nonexpansive);
        prop_assert!(report.ratios.iter().all(|&r| (0.0..=1.0 + 1e-12).contains(&r)));
        prop_assert!(report.gamma_emp < 0.999);
    }
}

#[test]
fn learners_share_the_anchor_convention() {
    let mdp = generate_mdp(&GeneratorSpec::benchmark(3)).unwrap();
    let set = AmbiguitySet::tv(0.1).unwrap();
    let star = robust_optimal_control_exact(&mdp, &set, &PlanningTolerance::default()).unwrap();
    let cfg = QLearnConfig {
        iterations: 3_000,
        seed: 5,
        ..Default::default()
    };
    let (q, trace) = run_qlearning(&mdp, &set, &cfg, Some(&star.q)).unwrap();
    assert_eq!(q.get(0, 0), 0.0);
    assert_eq!(star.q.get(0, 0), 0.0);
    let errs: Vec<f64> = trace.snapshots.iter().map(|s| s.span_err.unwrap()).collect();
    assert!(errs.last().unwrap() < errs.first().unwrap());
}
