//! Seeded random CMDP instances with a known strictly feasible policy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exact::costs_of_policy;
use crate::model::{CmdpParts, StationaryPolicy, TabularCmdp};
use crate::rng::{rng_stream, Purpose, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub n_states: usize,
    /// Each state gets between 1 and `max_actions` actions (2..= when
    /// `max_actions ≥ 2`, so every instance has a real choice somewhere).
    pub max_actions: usize,
    pub n_constraints: usize,
    pub discount: f64,
    /// Thresholds sit this far above the constraint values of the built-in
    /// strictly feasible policy.
    pub slack: f64,
}

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub cmdp: TabularCmdp,
    /// Deterministic policy with `D_k < q_k` for every `k`.
    pub slater_policy: StationaryPolicy,
}

fn simplex_row(rng: &mut Stream, n: usize, sparse: bool) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if sparse && u < 0.3 {
                0.0
            } else {
                -(1.0 - u).ln()
            }
        })
        .collect();
    if row.iter().sum::<f64>() == 0.0 {
        row[rng.random_range(0..n)] = 1.0;
    }
    let z: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= z);
    // make the row sum exactly one within the validation tolerance
    let err = 1.0 - row.iter().sum::<f64>();
    let i = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap();
    row[i] += err;
    row
}

/// Draws an instance. Costs lie in `[0, 1)`, auxiliary costs in `[0, 1)`,
/// the lower bound is `-1`; kernels are random with ~30% zeros.
pub fn random_instance(seed: u64, spec: &RandomSpec) -> RandomInstance {
    let mut rng = rng_stream(seed, 0, Purpose::Custom(0x7a11));
    let n = spec.n_states;
    let counts: Vec<usize> = (0..n)
        .map(|s| {
            if spec.max_actions <= 1 {
                1
            } else if s == 0 {
                spec.max_actions
            } else {
                rng.random_range(2..=spec.max_actions)
            }
        })
        .collect();
    let kernel = counts.iter().map(|&na| (0..na).map(|_| simplex_row(&mut rng, n, true)).collect()).collect();
    let cost = counts.iter().map(|&na| (0..na).map(|_| rng.random::<f64>()).collect()).collect();
    let aux_costs = counts
        .iter()
        .map(|&na| (0..na).map(|_| (0..spec.n_constraints).map(|_| rng.random::<f64>()).collect()).collect())
        .collect();
    let init_dist = simplex_row(&mut rng, n, false);
    let base = TabularCmdp::new(CmdpParts {
        kernel,
        cost,
        aux_costs,
        thresholds: vec![0.0; spec.n_constraints],
        discount: spec.discount,
        init_dist,
        cost_lower_bound: -1.0,
    })
    .expect("random instance is valid");
    let choice: Vec<usize> = counts.iter().map(|&na| rng.random_range(0..na)).collect();
    let slater_policy = StationaryPolicy::deterministic(&counts, &choice);
    let (_, d) = costs_of_policy(&base, &slater_policy).expect("evaluable");
    let q = d.iter().map(|x| x + spec.slack).collect();
    RandomInstance { cmdp: base.with_thresholds(q).expect("same K"), slater_policy }
}

/// A random full-support policy.
pub fn random_policy(rng: &mut Stream, action_counts: &[usize]) -> StationaryPolicy {
    let rows = action_counts
        .iter()
        .map(|&na| {
            let mut r = simplex_row(rng, na, false);
            r.iter_mut().for_each(|x| *x = x.max(1e-3));
            let z: f64 = r.iter().sum();
            r.iter().map(|x| x / z).collect()
        })
        .collect();
    StationaryPolicy::new(rows).expect("normalized")
}
