use cmdp_core::exact::{
    costs_of_policy, evaluate_policy_exact, kl_divergence, mixing_to_stationary, occupation_exact,
    performance_difference, state_occupation, weighted_kl, InducesOccupation,
};
use cmdp_core::model::{CmdpParts, MixingPolicy, OccupationMeasure, StationaryPolicy, TabularCmdp};
use cmdp_core::random::{random_instance, random_policy, RandomSpec};
use cmdp_core::rng::{rng_stream, Purpose};
use proptest::prelude::*;

fn spec(n: usize, a: usize, k: usize, g: f64) -> RandomSpec {
    RandomSpec { n_states: n, max_actions: a, n_constraints: k, discount: g, slack: 0.1 }
}

/// Occupation measure by summing `(1-γ) γ^t P(s_t = s, a_t = a)` until
/// `γ^t < 1e-12`.
fn occupation_by_power_series(cmdp: &TabularCmdp, pol: &StationaryPolicy) -> Vec<Vec<f64>> {
    let n = cmdp.n_states();
    let g = cmdp.discount();
    let mut dist = cmdp.init_dist().to_vec();
    let mut out: Vec<Vec<f64>> = (0..n).map(|s| vec![0.0; cmdp.n_actions(s)]).collect();
    let mut w = 1.0 - g;
    let mut disc = 1.0;
    while disc >= 1e-12 {
        let mut next = vec![0.0; n];
        for s in 0..n {
            for a in 0..cmdp.n_actions(s) {
                let m = dist[s] * pol.prob(s, a);
                out[s][a] += w * m;
                for (sp, p) in cmdp.kernel_row(s, a).iter().enumerate() {
                    next[sp] += m * p;
                }
            }
        }
        dist = next;
        w *= g;
        disc *= g;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn performance_difference_identity(seed in any::<u64>(), n in 1usize..=8, a in 1usize..=4, g in 0.3f64..0.97, lam in 0.0f64..3.0) {
        let inst = random_instance(seed, &spec(n, a, 2, g));
        let mut rng = rng_stream(seed, 1, Purpose::Custom(1));
        let p1 = random_policy(&mut rng, inst.cmdp.action_counts());
        let p2 = random_policy(&mut rng, inst.cmdp.action_counts());
        let lambda = [lam, 0.5 * lam];
        let (lhs, rhs) = performance_difference(&inst.cmdp, &lambda, &p1, &p2).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8, "lhs={lhs} rhs={rhs}");
        let (l0, r0) = performance_difference(&inst.cmdp, &lambda, &p1, &p1).unwrap();
        prop_assert!(l0.abs() < 1e-12 && r0.abs() < 1e-10);
    }

    #[test]
    fn bellman_consistency_and_flow(seed in any::<u64>(), n in 1usize..=8, a in 1usize..=4, g in 0.1f64..0.99) {
        let inst = random_instance(seed, &spec(n, a, 1, g));
        let mut rng = rng_stream(seed, 2, Purpose::Custom(1));
        let pol = random_policy(&mut rng, inst.cmdp.action_counts());
        let t = evaluate_policy_exact(&inst.cmdp, &pol, &[0.7]).unwrap();
        for s in 0..n {
            let avg: f64 = pol.row(s).iter().zip(&t.q[s]).map(|(p, q)| p * q).sum();
            prop_assert!((avg - t.v[s]).abs() <= 1e-10);
        }
        let nu = occupation_exact(&inst.cmdp, &pol).unwrap();
        prop_assert!(nu.flow_residual(&inst.cmdp) <= 1e-10);
        prop_assert!((nu.total() - 1.0).abs() <= 1e-10);
        prop_assert!(nu.rows().iter().flatten().all(|&x| x >= 0.0));
    }

    #[test]
    fn mixing_to_stationary_preserves_occupation(seed in any::<u64>(), n in 1usize..=6, a in 1usize..=4, m in 1usize..=4) {
        let inst = random_instance(seed, &spec(n, a, 1, 0.9));
        let mut rng = rng_stream(seed, 3, Purpose::Custom(1));
        let members: Vec<StationaryPolicy> = (0..m).map(|_| random_policy(&mut rng, inst.cmdp.action_counts())).collect();
        let mut w: Vec<f64> = (0..m).map(|i| 1.0 + i as f64).collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= z);
        let mix = MixingPolicy::new(members, w).unwrap();
        let avg = mix.occupation(&inst.cmdp).unwrap();
        let st = mixing_to_stationary(&inst.cmdp, &mix).unwrap();
        let nu = occupation_exact(&inst.cmdp, &st).unwrap();
        for (r1, r2) in avg.rows().iter().zip(nu.rows()) {
            for (x, y) in r1.iter().zip(r2) {
                prop_assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn mixing_costs_are_linear_in_weights(seed in any::<u64>(), w in 0.0f64..=1.0) {
        let inst = random_instance(seed, &spec(3, 3, 2, 0.8));
        let mut rng = rng_stream(seed, 4, Purpose::Custom(1));
        let p = random_policy(&mut rng, inst.cmdp.action_counts());
        let q = random_policy(&mut rng, inst.cmdp.action_counts());
        let mix = MixingPolicy::new(vec![p.clone(), q.clone()], vec![w, 1.0 - w]).unwrap();
        let (cm, dm) = costs_of_policy(&inst.cmdp, &mix).unwrap();
        let (cp, dp) = costs_of_policy(&inst.cmdp, &p).unwrap();
        let (cq, dq) = costs_of_policy(&inst.cmdp, &q).unwrap();
        prop_assert!((cm - (w * cp + (1.0 - w) * cq)).abs() <= 1e-10);
        for k in 0..2 {
            prop_assert!((dm[k] - (w * dp[k] + (1.0 - w) * dq[k])).abs() <= 1e-10);
        }
    }

    #[test]
    fn weighted_kl_matches_direct_average(seed in any::<u64>()) {
        let inst = random_instance(seed, &spec(4, 3, 0, 0.85));
        let mut rng = rng_stream(seed, 5, Purpose::Custom(1));
        let anchor = random_policy(&mut rng, inst.cmdp.action_counts());
        let p1 = random_policy(&mut rng, inst.cmdp.action_counts());
        let p2 = random_policy(&mut rng, inst.cmdp.action_counts());
        let nu_s = state_occupation(&inst.cmdp, &anchor).unwrap();
        let mut direct = 0.0;
        for s in 0..4 {
            let mut kl = 0.0;
            for a in 0..inst.cmdp.n_actions(s) {
                kl += p1.prob(s, a) * (p1.prob(s, a) / p2.prob(s, a)).ln();
            }
            direct += nu_s[s] * kl;
        }
        let got = weighted_kl(&inst.cmdp, &anchor, &p1, &p2).unwrap();
        prop_assert!((got - direct).abs() <= 1e-12);
        prop_assert!(got >= 0.0);
        prop_assert_eq!(weighted_kl(&inst.cmdp, &anchor, &p1, &p1).unwrap(), 0.0);
    }

    #[test]
    fn constant_cost_gives_constant_value(seed in any::<u64>()) {
        let inst = random_instance(seed, &spec(5, 3, 1, 0.9));
        let mut parts = inst.cmdp.to_parts();
        parts.cost.iter_mut().flatten().for_each(|c| *c = 3.0);
        let cmdp = TabularCmdp::new(parts).unwrap();
        let mut rng = rng_stream(seed, 6, Purpose::Custom(1));
        let pol = random_policy(&mut rng, cmdp.action_counts());
        let (c, _) = costs_of_policy(&cmdp, &pol).unwrap();
        prop_assert!((c - 3.0).abs() < 1e-12);
    }
}

#[test]
fn occupation_matches_power_series_on_random_instances() {
    for seed in 0..10 {
        let inst = random_instance(seed, &spec(5, 3, 1, 0.9));
        let mut rng = rng_stream(seed, 7, Purpose::Custom(1));
        let pol = random_policy(&mut rng, inst.cmdp.action_counts());
        let nu = occupation_exact(&inst.cmdp, &pol).unwrap();
        let series = occupation_by_power_series(&inst.cmdp, &pol);
        for (r1, r2) in nu.rows().iter().zip(&series) {
            for (x, y) in r1.iter().zip(r2) {
                assert!((x - y).abs() < 1e-10, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn self_mixture_equals_member() {
    let inst = random_instance(11, &spec(4, 3, 2, 0.9));
    let p = StationaryPolicy::uniform(inst.cmdp.action_counts());
    let mix = MixingPolicy::new(vec![p.clone(), p.clone()], vec![0.5, 0.5]).unwrap();
    let (c1, d1) = costs_of_policy(&inst.cmdp, &mix).unwrap();
    let (c2, d2) = costs_of_policy(&inst.cmdp, &p).unwrap();
    assert!((c1 - c2).abs() < 1e-14);
    assert!(d1.iter().zip(&d2).all(|(x, y)| (x - y).abs() < 1e-14));
    let single = mixing_to_stationary(&inst.cmdp, &MixingPolicy::single(p.clone())).unwrap();
    let a = occupation_exact(&inst.cmdp, &single).unwrap();
    let b = occupation_exact(&inst.cmdp, &p).unwrap();
    for (r1, r2) in a.rows().iter().zip(b.rows()) {
        for (x, y) in r1.iter().zip(r2) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

/// Two deterministic policies on a two-state chain, mixed half and half.
#[test]
fn two_point_mixture_hand_computed() {
    // state 0: action 0 stays, action 1 moves to 1; state 1: single action back to 0
    let g: f64 = 0.5;
    let cmdp = TabularCmdp::new(CmdpParts {
        kernel: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
        cost: vec![vec![0.0, 1.0], vec![2.0]],
        aux_costs: vec![vec![vec![], vec![]], vec![vec![]]],
        thresholds: vec![],
        discount: g,
        init_dist: vec![1.0, 0.0],
        cost_lower_bound: -1.0,
    })
    .unwrap();
    let stay = StationaryPolicy::deterministic(&[2, 1], &[0, 0]);
    let go = StationaryPolicy::deterministic(&[2, 1], &[1, 0]);
    // "stay": ν(0,0) = 1. "go": alternates 0,1,0,1 → ν_s(0) = 1/(1+γ), ν_s(1) = γ/(1+γ)
    let nu_go0 = 1.0 / (1.0 + g);
    let nu_go1 = g / (1.0 + g);
    let avg = [0.5 * 1.0, 0.5 * nu_go0, 0.5 * nu_go1];
    let mix = MixingPolicy::new(vec![stay, go], vec![0.5, 0.5]).unwrap();
    let st = mixing_to_stationary(&cmdp, &mix).unwrap();
    let p_stay = avg[0] / (avg[0] + avg[1]);
    assert!((st.prob(0, 0) - p_stay).abs() < 1e-12);
    assert!((st.prob(1, 0) - 1.0).abs() < 1e-12);
    let nu = occupation_exact(&cmdp, &st).unwrap();
    let want = OccupationMeasure::from_rows(vec![vec![avg[0], avg[1]], vec![avg[2]]]);
    for (r1, r2) in nu.rows().iter().zip(want.rows()) {
        for (x, y) in r1.iter().zip(r2) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn kl_sentinel_on_support_mismatch() {
    assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_infinite());
    assert_eq!(kl_divergence(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
}

#[test]
fn zero_mass_states_get_uniform_rows() {
    // state 2 is never reached from state 0
    let cmdp = TabularCmdp::new(CmdpParts {
        kernel: vec![vec![vec![1.0, 0.0, 0.0]], vec![vec![0.0, 1.0, 0.0]], vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]],
        cost: vec![vec![1.0], vec![1.0], vec![1.0, 2.0]],
        aux_costs: vec![vec![vec![]], vec![vec![]], vec![vec![], vec![]]],
        thresholds: vec![],
        discount: 0.9,
        init_dist: vec![1.0, 0.0, 0.0],
        cost_lower_bound: 0.0,
    })
    .unwrap();
    let p = StationaryPolicy::deterministic(&[1, 1, 2], &[0, 0, 1]);
    let st = mixing_to_stationary(&cmdp, &MixingPolicy::single(p)).unwrap();
    assert_eq!(st.row(2), &[0.5, 0.5]);
}
