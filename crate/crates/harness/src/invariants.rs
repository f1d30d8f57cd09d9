//! Randomized property suites, runnable outside the unit tests so the
//! harness can report them as one criterion.

use cmdp_core::exact::{costs_of_policy, evaluate_policy_exact, kl_divergence, occupation_exact};
use cmdp_core::primal_dual::{project_lambda, softmax_row, DualDomain};
use cmdp_core::random::{random_instance, random_policy, RandomSpec};
use cmdp_core::rng::{derive_seed, rng_stream, Purpose, Stream};
use cmdp_core::weakly_coupled::{product_mdp, DecomposablePolicy, WeaklyCoupledCmdp};
use cmdp_core::{mixing_to_stationary, performance_difference, MixingPolicy, OccupationMeasure};
use cmdp_envs::queue::transport::{assignment_value, max_weight_assignment};
use rand::Rng;

use crate::config::InvariantsSection;
use crate::report::Check;
use crate::HarnessError;

fn random_spec(rng: &mut Stream, max_states: usize, max_actions: usize, max_k: usize) -> RandomSpec {
    RandomSpec {
        n_states: rng.random_range(1..=max_states),
        max_actions: rng.random_range(1..=max_actions),
        n_constraints: rng.random_range(1..=max_k),
        discount: rng.random_range(0.3..0.97),
        slack: 0.1,
    }
}

/// Largest `|lhs - rhs|` of the performance-difference identity.
pub fn performance_difference_error(draws: usize, seed: u64) -> Result<f64, HarnessError> {
    let mut worst: f64 = 0.0;
    for d in 0..draws {
        let mut rng = rng_stream(seed, d as u64, Purpose::Custom(0x1d0));
        let spec = random_spec(&mut rng, 8, 4, 2);
        let inst = random_instance(rng.random(), &spec);
        let p1 = random_policy(&mut rng, inst.cmdp.action_counts());
        let p2 = random_policy(&mut rng, inst.cmdp.action_counts());
        let lambda: Vec<f64> = (0..spec.n_constraints).map(|_| rng.random_range(0.0..3.0)).collect();
        let (lhs, rhs) = performance_difference(&inst.cmdp, &lambda, &p1, &p2)?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Largest entrywise gap between a mixture's occupation measure and that of
/// its stationary equivalent.
pub fn mixing_occupation_error(draws: usize, seed: u64) -> Result<f64, HarnessError> {
    let mut worst: f64 = 0.0;
    for d in 0..draws {
        let mut rng = rng_stream(seed, d as u64, Purpose::Custom(0x1d1));
        let spec = random_spec(&mut rng, 6, 4, 1);
        let inst = random_instance(rng.random(), &spec);
        let members: Vec<_> = (0..rng.random_range(1..=4)).map(|_| random_policy(&mut rng, inst.cmdp.action_counts())).collect();
        let mut w: Vec<f64> = members.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= z);
        let measures = members.iter().map(|p| occupation_exact(&inst.cmdp, p)).collect::<Result<Vec<_>, _>>()?;
        let mixed = OccupationMeasure::average(&measures, &w);
        let st = mixing_to_stationary(&inst.cmdp, &MixingPolicy::new(members, w)?)?;
        let direct = occupation_exact(&inst.cmdp, &st)?;
        for (r1, r2) in mixed.rows().iter().zip(direct.rows()) {
            for (a, b) in r1.iter().zip(r2) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(worst)
}

/// Largest amount by which the softmax update's objective
/// `η⟨q, π⟩ + KL(π ‖ p)` exceeds the best point of a simplex grid
/// (negative when the update wins everywhere, as it should).
pub fn softmax_grid_excess(draws: usize, seed: u64) -> f64 {
    let objective = |pi: &[f64], p: &[f64], q: &[f64], eta: f64| -> f64 {
        eta * pi.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() + kl_divergence(pi, p)
    };
    let steps = 100;
    let mut worst = f64::NEG_INFINITY;
    for d in 0..draws {
        let mut rng = rng_stream(seed, d as u64, Purpose::Custom(0x1d2));
        let mut p: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let eta = rng.random_range(0.01..2.0);
        let star = objective(&softmax_row(&p, &q, eta), &p, &q, eta);
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=steps - i {
                let pi = [i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
                best = best.min(objective(&pi, &p, &q, eta));
            }
        }
        worst = worst.max(star - best);
    }
    worst
}

/// Largest change from projecting an already projected multiplier, and
/// whether every projection lands in the domain.
pub fn projection_idempotence(draws: usize, seed: u64) -> (f64, bool) {
    let mut worst: f64 = 0.0;
    let mut inside = true;
    for d in 0..draws {
        let mut rng = rng_stream(seed, d as u64, Purpose::Custom(0x1d3));
        let k = rng.random_range(1..=5);
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(-10.0..10.0)).collect();
        let dom = DualDomain { radius: rng.random_range(0.1..5.0), slack: 0.1 };
        let once = project_lambda(&v, &dom);
        let twice = project_lambda(&once, &dom);
        inside &= dom.contains(&once);
        for (a, b) in once.iter().zip(&twice) {
            worst = worst.max((a - b).abs());
        }
    }
    (worst, inside)
}

/// Largest gap between joint Lagrangian action values of a product MDP and
/// the sum of subproblem values (minus `λᵀq`).
pub fn sub_q_additivity_error(draws: usize, seed: u64) -> Result<f64, HarnessError> {
    let mut worst: f64 = 0.0;
    for d in 0..draws {
        let mut rng = rng_stream(seed, d as u64, Purpose::Custom(0x1d4));
        let k = rng.random_range(1..=2);
        let n = rng.random_range(1..=3);
        let spec = RandomSpec { n_states: 3, max_actions: 2, n_constraints: k, discount: 0.8, slack: 0.0 };
        let insts: Vec<_> = (0..n).map(|_| random_instance(rng.random(), &spec)).collect();
        let mut q = vec![0.1; k];
        for inst in &insts {
            let (_, b) = costs_of_policy(&inst.cmdp, &inst.slater_policy)?;
            q.iter_mut().zip(b).for_each(|(q, b)| *q += b);
        }
        let wc = WeaklyCoupledCmdp::new(insts.into_iter().map(|i| i.cmdp).collect(), q)?;
        let pm = product_mdp(&wc)?;
        let pol = DecomposablePolicy {
            parts: wc.subproblems().iter().map(|s| random_policy(&mut rng, s.action_counts())).collect(),
        };
        let lambda: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..3.0)).collect();
        let joint = evaluate_policy_exact(&pm.cmdp, &pm.joint_policy(&wc, &pol), &lambda)?;
        let subs = wc
            .subproblems()
            .iter()
            .zip(&pol.parts)
            .map(|(s, p)| evaluate_policy_exact(s, p, &lambda))
            .collect::<Result<Vec<_>, _>>()?;
        let shift: f64 = lambda.iter().zip(wc.thresholds()).map(|(l, q)| l * q).sum();
        for js in 0..pm.cmdp.n_states() {
            let parts = pm.decode_state(js);
            for ja in 0..pm.cmdp.n_actions(js) {
                let acts = pm.decode_action(&wc, &parts, ja);
                let sum: f64 = subs.iter().zip(parts.iter().zip(&acts)).map(|(t, (&s, &a))| t.q[s][a]).sum();
                worst = worst.max((joint.q[js][ja] - (sum - shift)).abs());
            }
        }
    }
    Ok(worst)
}

/// Rows of a class assignment with entries `≤ cols[j]` (0 where
/// incompatible) and sum `≤ budget`.
fn enumerate_rows(budget: u32, cols: &[u32], compatible: &[bool]) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for (j, &c) in cols.iter().enumerate() {
        let limit = if compatible[j] { c } else { 0 };
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<u32>| {
                let used: u32 = prefix.iter().sum();
                (0..=limit.min(budget - used)).map(move |x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    out
}

/// Exhaustive optimum of a 3×3 integer transportation problem.
pub fn brute_force_transport(w: &[Vec<f64>], compatible: &[Vec<bool>], rows: &[u32], cols: &[u32]) -> f64 {
    let options: Vec<Vec<Vec<u32>>> = (0..3).map(|i| enumerate_rows(rows[i], cols, &compatible[i])).collect();
    let mut best = 0.0f64;
    for a in &options[0] {
        for b in &options[1] {
            for c in &options[2] {
                if (0..3).all(|j| a[j] + b[j] + c[j] <= cols[j]) {
                    best = best.max(assignment_value(w, &vec![a.clone(), b.clone(), c.clone()]));
                }
            }
        }
    }
    best
}

/// Largest objective shortfall of the transportation solver against
/// exhaustive search on random 3×3 instances with budgets ≤ 4.
pub fn transport_gap(instances: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for d in 0..instances {
        let mut rng = rng_stream(seed, d as u64, Purpose::Custom(0x1d5));
        let w: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random_range(-3.0..5.0)).collect()).collect();
        let compatible: Vec<Vec<bool>> = (0..3).map(|_| (0..3).map(|_| rng.random_bool(0.8)).collect()).collect();
        let rows: Vec<u32> = (0..3).map(|_| rng.random_range(0..=4)).collect();
        let cols: Vec<u32> = (0..3).map(|_| rng.random_range(0..=4)).collect();
        let u = max_weight_assignment(&w, &compatible, &rows, &cols);
        let feasible = (0..3).all(|i| u[i].iter().sum::<u32>() <= rows[i] && (0..3).all(|j| compatible[i][j] || u[i][j] == 0))
            && (0..3).all(|j| (0..3).map(|i| u[i][j]).sum::<u32>() <= cols[j]);
        let gap = if feasible { brute_force_transport(&w, &compatible, &rows, &cols) - assignment_value(&w, &u) } else { f64::INFINITY };
        worst = worst.max(gap.abs());
    }
    worst
}

/// Every suite with its tolerance.
pub fn run_invariants(section: &InvariantsSection, seed: u64) -> Result<Vec<Check>, HarnessError> {
    let n = section.draws;
    let s = |i| derive_seed(seed, i);
    let (proj, inside) = projection_idempotence(n, s(3));
    Ok(vec![
        Check::at_most("performance-difference identity", performance_difference_error(n, s(0))?, 1e-8),
        Check::at_most("mixing-to-stationary occupation", mixing_occupation_error(n, s(1))?, 1e-10),
        Check::at_most("softmax update vs simplex grid", softmax_grid_excess(n, s(2)), 1e-12),
        Check::at_most("projection idempotence", proj, 1e-15),
        Check::holds("projection lands in domain", inside),
        Check::at_most("sub-Q additivity on product MDPs", sub_q_additivity_error(n, s(4))?, 1e-8),
        Check::at_most("transportation solver vs exhaustive search", transport_gap(section.transport_instances, s(5)), 1e-9),
    ])
}
