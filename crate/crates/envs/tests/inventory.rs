use cmdp_core::evaluator::TabularProblem;
use cmdp_core::exact::costs_of_policy;
use cmdp_core::monte_carlo::{estimate_constraints, MCConfig};
use cmdp_core::primal_dual::{run, DualDomain, EvaluatorKind, SolverConfig, StepSchedule};
use cmdp_core::random::random_policy;
use cmdp_core::rng::{rng_stream, Purpose};
use cmdp_core::weakly_coupled::{product_mdp, run_decomposed, solve_relaxed_lp, DecomposablePolicy};
use cmdp_envs::inventory::{
    build_tabular, decompose, product_cmdp, run_experiment, InventoryConfig, InventoryExperiment, ProductEnv,
};

#[test]
fn joint_model_is_the_product_of_the_parts() {
    let cfg = InventoryConfig::reduced();
    let joint = build_tabular(&cfg).unwrap();
    let wc = decompose(&cfg).unwrap();
    let pm = product_mdp(&wc).unwrap();
    assert_eq!(joint.n_states(), pm.cmdp.n_states());
    assert_eq!(joint.action_counts(), pm.cmdp.action_counts());
    assert_eq!(joint.init_dist(), pm.cmdp.init_dist());
    assert_eq!(joint.thresholds(), pm.cmdp.thresholds());
    for s in 0..joint.n_states() {
        for a in 0..joint.n_actions(s) {
            assert!((joint.cost(s, a) - pm.cmdp.cost(s, a)).abs() < 1e-12);
            assert!((joint.aux(s, a)[0] - pm.cmdp.aux(s, a)[0]).abs() < 1e-12);
            for (p, q) in joint.kernel_row(s, a).iter().zip(pm.cmdp.kernel_row(s, a)) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn block_lp_matches_joint_lp_on_reduced_instance() {
    let cfg = InventoryConfig::reduced();
    let joint = cmdp_core::solve_lp(&build_tabular(&cfg).unwrap()).unwrap();
    let block = solve_relaxed_lp(&decompose(&cfg).unwrap()).unwrap();
    assert!((joint.c_star - block.c_star).abs() < 1e-9);
}

#[test]
fn simulator_agrees_with_expected_cost_model() {
    let cfg = InventoryConfig::reduced();
    let mut rng = rng_stream(4, 0, Purpose::Custom(1));
    for product in 0..cfg.n_products() {
        let sub = product_cmdp(&cfg, product).unwrap();
        let env = ProductEnv::new(&cfg, product, &sub);
        for trial in 0..10 {
            let pol = random_policy(&mut rng, sub.action_counts());
            let (c, d) = costs_of_policy(&sub, &pol).unwrap();
            let mc = MCConfig::new(20_000, MCConfig::default_horizon(cfg.discount, 1e-10), 100 + trial);
            let est = estimate_constraints(&env, &pol, &mc).unwrap();
            let zc = (est.objective.mean - c) / est.objective.se;
            let zd = (est.constraints[0].mean - d[0]) / est.constraints[0].se;
            assert!(zc.abs() < 3.0 && zd.abs() < 3.0, "product {product}, trial {trial}: z = ({zc}, {zd})");
        }
    }
}

#[test]
fn decomposed_and_joint_runs_coincide() {
    let cfg = InventoryConfig::reduced();
    let joint = build_tabular(&cfg).unwrap();
    let wc = decompose(&cfg).unwrap();
    let schedule = StepSchedule::constant(0.2);
    let domain = DualDomain { radius: 20.0, slack: 1.0 };
    let t = 100;
    let dec = run_decomposed(
        &wc,
        &SolverConfig {
            schedule,
            iterations: t,
            initial_policy: DecomposablePolicy::uniform(&wc),
            initial_lambda: vec![0.0],
            domain,
            evaluator: EvaluatorKind::Exact,
            seed: 3,
        },
    )
    .unwrap();
    let full = run(
        &TabularProblem::new(&joint),
        &SolverConfig {
            schedule,
            iterations: t,
            initial_policy: cmdp_core::StationaryPolicy::uniform(joint.action_counts()),
            initial_lambda: vec![0.0],
            domain,
            evaluator: EvaluatorKind::Exact,
            seed: 3,
        },
    )
    .unwrap();
    for (a, b) in dec.trail.iter().zip(&full.trail) {
        assert!((a.objective - b.objective).abs() < 1e-8);
        assert!((a.constraint_vals[0] - b.constraint_vals[0]).abs() < 1e-8);
        assert!((a.lambda[0] - b.lambda[0]).abs() < 1e-8);
    }
}

#[test]
fn sampled_experiment_is_reproducible() {
    let exp = InventoryExperiment {
        config: InventoryConfig::reduced(),
        schedule: StepSchedule::inverse_sqrt(0.2),
        iterations: 15,
        evaluator: EvaluatorKind::MonteCarlo(MCConfig::new(50, 20, 0)),
        seed: 9,
        dual_slack: 1.0,
    };
    let a = run_experiment(&exp).unwrap();
    let b = run_experiment(&exp).unwrap();
    assert_eq!(a.summary, b.summary);
    assert_eq!(a.trail().len(), 15);
    let c = run_experiment(&InventoryExperiment { seed: 10, ..exp }).unwrap();
    assert_ne!(a.summary.final_avg_cost, c.summary.final_avg_cost);
    let s = &a.summary;
    assert!((s.final_avg_cost_unnormalized - s.final_avg_cost * 4.0).abs() < 1e-12);
}

#[test]
fn exact_experiment_approaches_the_lp_value() {
    let cfg = InventoryConfig::reduced();
    let c_star = solve_relaxed_lp(&decompose(&cfg).unwrap()).unwrap().c_star;
    let exp = InventoryExperiment {
        config: cfg,
        schedule: StepSchedule::constant(0.2),
        iterations: 2000,
        evaluator: EvaluatorKind::Exact,
        seed: 0,
        dual_slack: 1.0,
    };
    let r = run_experiment(&exp).unwrap();
    assert!((r.summary.final_avg_cost - c_star).abs() < 0.05, "{} vs {c_star}", r.summary.final_avg_cost);
    assert!(r.summary.averaged_violation < 0.05);
}
