use cmdp_core::evaluator::TabularProblem;
use cmdp_core::exact::{costs_of_policy, evaluate_policy_exact, expected_under_init, policy_iteration};
use cmdp_core::primal_dual::{run, DualDomain, EvaluatorKind, PrimalDualProblem, SolverConfig, StepSchedule};
use cmdp_core::random::{random_instance, random_policy, RandomSpec};
use cmdp_core::rng::{rng_stream, Purpose};
use cmdp_core::weakly_coupled::{
    aggregated_subgradient, product_mdp, run_decomposed, tabular_decomposition, DecomposablePolicy, WeaklyCoupledCmdp,
};
use cmdp_core::StationaryPolicy;

const K: usize = 2;

/// `n` random subproblems; the link budget sits `slack` above the total link
/// cost of their strictly feasible reference policies.
fn coupled(seed: u64, n: usize, slack: f64) -> WeaklyCoupledCmdp {
    let spec = RandomSpec { n_states: 3, max_actions: 2, n_constraints: K, discount: 0.8, slack: 0.0 };
    let insts: Vec<_> = (0..n).map(|i| random_instance(seed * 100 + i as u64, &spec)).collect();
    let mut q = vec![slack; K];
    for inst in &insts {
        let (_, b) = costs_of_policy(&inst.cmdp, &inst.slater_policy).unwrap();
        q.iter_mut().zip(b).for_each(|(q, b)| *q += b);
    }
    WeaklyCoupledCmdp::new(insts.into_iter().map(|i| i.cmdp).collect(), q).unwrap()
}

fn random_parts(problem: &WeaklyCoupledCmdp, seed: u64) -> DecomposablePolicy {
    let mut rng = rng_stream(seed, 0, Purpose::Custom(3));
    DecomposablePolicy {
        parts: problem.subproblems().iter().map(|s| random_policy(&mut rng, s.action_counts())).collect(),
    }
}

fn config<P>(initial_policy: P, schedule: StepSchedule, t: usize) -> SolverConfig<P> {
    SolverConfig {
        schedule,
        iterations: t,
        initial_policy,
        initial_lambda: vec![0.0; K],
        domain: DualDomain { radius: 5.0, slack: 0.5 },
        evaluator: EvaluatorKind::Exact,
        seed: 0,
    }
}

#[test]
fn joint_q_is_sum_of_sub_q() {
    for seed in 0..5 {
        let wc = coupled(seed, 2, 0.1);
        let pm = product_mdp(&wc).unwrap();
        let pol = random_parts(&wc, seed);
        let lambda = [0.4, 1.7];
        let joint = evaluate_policy_exact(&pm.cmdp, &pm.joint_policy(&wc, &pol), &lambda).unwrap();
        let subs: Vec<_> = wc
            .subproblems()
            .iter()
            .zip(&pol.parts)
            .map(|(s, p)| evaluate_policy_exact(s, p, &lambda).unwrap())
            .collect();
        let shift: f64 = lambda.iter().zip(wc.thresholds()).map(|(l, q)| l * q).sum();
        for js in 0..pm.cmdp.n_states() {
            let parts = pm.decode_state(js);
            for ja in 0..pm.cmdp.n_actions(js) {
                let acts = pm.decode_action(&wc, &parts, ja);
                let sum: f64 = subs.iter().zip(parts.iter().zip(&acts)).map(|(t, (&s, &a))| t.q[s][a]).sum();
                assert!((joint.q[js][ja] - (sum - shift)).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn aggregated_subgradient_matches_joint() {
    for seed in 0..5 {
        let wc = coupled(seed, 3, 0.1);
        let pm = product_mdp(&wc).unwrap();
        let pol = random_parts(&wc, seed + 50);
        let g = aggregated_subgradient(&wc, &pol).unwrap();
        let (_, d) = costs_of_policy(&pm.cmdp, &pm.joint_policy(&wc, &pol)).unwrap();
        for k in 0..K {
            assert!((g[k] - (d[k] - wc.thresholds()[k])).abs() < 1e-10);
        }
    }
}

#[test]
fn single_subproblem_matches_plain_run() {
    let wc = coupled(7, 1, 0.05);
    let plain = wc.subproblems()[0].with_thresholds(wc.thresholds().to_vec()).unwrap();
    let t = 200;
    let schedule = StepSchedule::constant(0.5);
    let dec = run_decomposed(&wc, &config(DecomposablePolicy::uniform(&wc), schedule, t)).unwrap();
    let single = run(
        &TabularProblem::new(&plain),
        &config(StationaryPolicy::uniform(plain.action_counts()), schedule, t),
    )
    .unwrap();
    for (a, b) in dec.trail.iter().zip(&single.trail) {
        assert!((a.objective - b.objective).abs() < 1e-10);
        assert!(a.lambda.iter().zip(&b.lambda).all(|(x, y)| (x - y).abs() < 1e-10));
    }
}

#[test]
fn decomposed_run_tracks_joint_run() {
    let wc = coupled(8, 2, 0.05);
    let pm = product_mdp(&wc).unwrap();
    let t = 150;
    let schedule = StepSchedule::inverse_sqrt(1.0);
    let start = DecomposablePolicy::uniform(&wc);
    let dec = run_decomposed(&wc, &config(start.clone(), schedule, t)).unwrap();
    let joint = run(&TabularProblem::new(&pm.cmdp), &config(pm.joint_policy(&wc, &start), schedule, t)).unwrap();
    for (a, b) in dec.trail.iter().zip(&joint.trail) {
        assert!((a.objective - b.objective).abs() < 1e-8, "m = {}", a.m);
        for k in 0..K {
            assert!((a.lambda[k] - b.lambda[k]).abs() < 1e-8);
            assert!((a.constraint_vals[k] - b.constraint_vals[k]).abs() < 1e-8);
        }
    }
    // the joint iterates stay in product form
    for (p, q) in dec.iterates.iter().zip(&joint.iterates) {
        let prod = pm.joint_policy(&wc, p);
        for (r1, r2) in prod.rows().iter().zip(q.rows()) {
            assert!(r1.iter().zip(r2).all(|(x, y)| (x - y).abs() < 1e-8));
        }
    }
}

#[test]
fn zero_step_leaves_policy_unchanged() {
    let wc = coupled(9, 3, 0.1);
    let problem = tabular_decomposition(&wc);
    let pol = random_parts(&wc, 1);
    let ev = problem.evaluate(&pol, &[1.0, 2.0], &EvaluatorKind::Exact, 0).unwrap();
    let next = problem.improve(&pol, &ev.q, 0.0);
    for (a, b) in next.parts.iter().zip(&pol.parts) {
        for (ra, rb) in a.rows().iter().zip(b.rows()) {
            assert!(ra.iter().zip(rb).all(|(x, y)| (x - y).abs() < 1e-15));
        }
    }
}

#[test]
fn doubling_link_costs_doubles_aggregate() {
    let wc = coupled(10, 3, 0.1);
    let doubled = wc.scale_links(2.0).unwrap();
    let pol = random_parts(&wc, 2);
    let g1 = aggregated_subgradient(&wc, &pol).unwrap();
    let g2 = aggregated_subgradient(&doubled, &pol).unwrap();
    for k in 0..K {
        let b1 = g1[k] + wc.thresholds()[k];
        let b2 = g2[k] + doubled.thresholds()[k];
        assert!((b2 - 2.0 * b1).abs() < 1e-12);
    }
}

#[test]
fn work_grows_linearly_with_subproblems() {
    let measure = |n: usize| {
        let spec = RandomSpec { n_states: 4, max_actions: 3, n_constraints: K, discount: 0.8, slack: 0.0 };
        let sub = random_instance(3, &spec).cmdp;
        let wc = WeaklyCoupledCmdp::new(vec![sub; n], vec![n as f64; K]).unwrap();
        let problem = tabular_decomposition(&wc);
        run(&problem, &config(DecomposablePolicy::uniform(&wc), StepSchedule::constant(0.2), 20)).unwrap();
        problem.work_units() as f64
    };
    let (w2, w4, w8) = (measure(2), measure(4), measure(8));
    assert!((w4 / w2 / 2.0 - 1.0).abs() <= 0.3);
    assert!((w8 / w4 / 2.0 - 1.0).abs() <= 0.3);
}

#[test]
fn identical_subproblems_get_identical_policies() {
    let spec = RandomSpec { n_states: 4, max_actions: 3, n_constraints: K, discount: 0.8, slack: 0.0 };
    let inst = random_instance(4, &spec);
    let (_, b) = costs_of_policy(&inst.cmdp, &inst.slater_policy).unwrap();
    let q: Vec<f64> = b.iter().map(|x| 3.0 * x + 0.05).collect();
    let wc = WeaklyCoupledCmdp::new(vec![inst.cmdp.clone(), inst.cmdp.clone(), inst.cmdp], q).unwrap();
    let out = run_decomposed(&wc, &config(DecomposablePolicy::uniform(&wc), StepSchedule::constant(0.3), 300)).unwrap();
    let parts = &out.last_policy.parts;
    assert_eq!(parts[0], parts[1]);
    assert_eq!(parts[1], parts[2]);
}

#[test]
fn vacuous_links_let_each_part_reach_its_optimum() {
    let wc = coupled(11, 3, 1e3);
    let t = 2000;
    let eta = 0.5;
    let out = run_decomposed(&wc, &config(DecomposablePolicy::uniform(&wc), StepSchedule::constant(eta), t)).unwrap();
    assert!(out.trail.iter().all(|r| r.lambda.iter().all(|&l| l == 0.0)));
    for (sub, p) in wc.subproblems().iter().zip(&out.last_policy.parts) {
        let (_, tables) = policy_iteration(sub, |s, a| sub.cost(s, a)).unwrap();
        let best = expected_under_init(sub, &tables.v);
        let (c, _) = costs_of_policy(sub, p).unwrap();
        let max_a = *sub.action_counts().iter().max().unwrap() as f64;
        // mirror-descent last-iterate rate: log|A| / ((1 - γ) η T)
        let envelope = max_a.ln() / ((1.0 - sub.discount()) * eta * t as f64);
        assert!((-1e-12..envelope).contains(&(c - best)), "{c} vs {best}");
    }
}
