use cmdp_core::exact::{costs_of_policy, expected_under_init, policy_iteration};
use cmdp_core::oracle::{check_complementary_slackness, solve_lp, OracleError, MAX_ORACLE_PAIRS};
use cmdp_core::random::{random_instance, random_policy, RandomSpec};
use cmdp_core::rng::{rng_stream, Purpose};
use cmdp_core::TabularCmdp;

fn spec(n: usize, a: usize, k: usize) -> RandomSpec {
    RandomSpec { n_states: n, max_actions: a, n_constraints: k, discount: 0.9, slack: 0.02 }
}

#[test]
fn lp_optimum_below_every_feasible_policy() {
    for seed in 0..10 {
        let inst = random_instance(seed, &spec(5, 3, 2));
        let sol = solve_lp(&inst.cmdp).unwrap();
        let mut rng = rng_stream(seed, 0, Purpose::Custom(2));
        for _ in 0..50 {
            let p = random_policy(&mut rng, inst.cmdp.action_counts());
            let (c, d) = costs_of_policy(&inst.cmdp, &p).unwrap();
            if d.iter().zip(inst.cmdp.thresholds()).all(|(d, q)| d <= q) {
                assert!(sol.c_star <= c + 1e-10);
            }
        }
        let (c, _) = costs_of_policy(&inst.cmdp, &inst.slater_policy).unwrap();
        assert!(sol.c_star <= c + 1e-10);
    }
}

#[test]
fn extracted_policy_reproduces_optimum() {
    for seed in 0..20 {
        let inst = random_instance(seed, &spec(6, 3, 2));
        let sol = solve_lp(&inst.cmdp).unwrap();
        let (c, d) = costs_of_policy(&inst.cmdp, &sol.policy_star).unwrap();
        assert!((c - sol.c_star).abs() <= 1e-8, "seed {seed}: {c} vs {}", sol.c_star);
        for (k, (dk, qk)) in d.iter().zip(inst.cmdp.thresholds()).enumerate() {
            assert!(dk - qk <= 1e-8, "constraint {k}");
        }
        assert!(sol.dual_slacks.iter().all(|&s| s >= -1e-8));
        assert!(sol.nu_star.flow_residual(&inst.cmdp) <= 1e-8);
        assert!(check_complementary_slackness(&sol, &sol.multipliers));
    }
}

#[test]
fn slack_thresholds_match_policy_iteration() {
    for seed in 0..10 {
        let inst = random_instance(seed, &spec(6, 4, 2));
        let loose = inst.cmdp.with_thresholds(vec![1e6, 1e6]).unwrap();
        let sol = solve_lp(&loose).unwrap();
        let (_, tables) = policy_iteration(&loose, |s, a| loose.cost(s, a)).unwrap();
        let best = expected_under_init(&loose, &tables.v);
        assert!((sol.c_star - best).abs() <= 1e-8, "{} vs {best}", sol.c_star);
        assert!(sol.multipliers.iter().all(|&l| l.abs() < 1e-12));
    }
}

/// Dual function `g(λ) = min_π E[V^λ]`, by exact policy iteration on `c^λ`.
fn dual_value(cmdp: &TabularCmdp, lambda: f64) -> f64 {
    let (_, t) = policy_iteration(cmdp, |s, a| cmdp.lagrangian_cost(s, a, &[lambda])).unwrap();
    expected_under_init(cmdp, &t.v)
}

#[test]
fn lp_matches_dual_grid_on_small_instances() {
    for seed in 0..8 {
        let inst = random_instance(seed, &RandomSpec { n_states: 4, max_actions: 2, n_constraints: 1, discount: 0.8, slack: 0.01 });
        let sol = solve_lp(&inst.cmdp).unwrap();
        let lam_star = sol.multipliers[0];
        // strong duality at the LP multiplier
        assert!((dual_value(&inst.cmdp, lam_star) - sol.c_star).abs() <= 1e-8);
        // weak duality and near-attainment on a fine grid
        let hi = 2.0 * lam_star + 1.0;
        let steps = 2000;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=steps {
            let l = hi * i as f64 / steps as f64;
            let g = dual_value(&inst.cmdp, l);
            assert!(g <= sol.c_star + 1e-9);
            best = best.max(g);
        }
        // the dual function has slope at most max|d - q| ≤ 1
        assert!(sol.c_star - best <= hi / steps as f64 + 1e-9, "gap {}", sol.c_star - best);
    }
}

#[test]
fn infeasible_and_oversized_instances_are_rejected() {
    let inst = random_instance(3, &spec(4, 2, 1));
    let impossible = inst.cmdp.with_thresholds(vec![-0.5]).unwrap();
    assert!(matches!(solve_lp(&impossible), Err(OracleError::Infeasible(_))));

    // 1 state with more actions than the guard allows
    let na = MAX_ORACLE_PAIRS + 1;
    let big = TabularCmdp::new_unchecked(cmdp_core::CmdpParts {
        kernel: vec![vec![vec![1.0]; na]],
        cost: vec![vec![1.0; na]],
        aux_costs: vec![vec![vec![]; na]],
        thresholds: vec![],
        discount: 0.5,
        init_dist: vec![1.0],
        cost_lower_bound: 0.0,
    })
    .unwrap();
    assert!(matches!(solve_lp(&big), Err(OracleError::TooLarge { .. })));
}
