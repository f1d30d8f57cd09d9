//! Myopic benchmark assignments: the integer transportation problem
//!
//! `max Σ ω_ij U_ij  s.t.  Σ_j U_ij ≤ X_i,  Σ_i U_ij ≤ free_j,  U ∈ ℕ`,
//!
//! solved exactly by successive shortest augmenting paths on the bipartite
//! flow network (source → class → pool → sink). Each augmentation follows a
//! cheapest residual path (Bellman–Ford, since costs `-ω` are signed); the
//! flow-cost curve is convex, so stopping at the first path of nonnegative
//! cost yields the optimum. Integral capacities keep every flow integral.
//! Only pairs with `ω_ij > 0` and a compatible pool carry arcs: an assignment
//! at nonpositive weight never helps.

use super::config::QueueConfig;
use super::dynamics::{Assignment, QueueState};

/// Weights of the modified cμ-rule: `ω_ij = h_i - r_ij`.
pub fn cmu_weights(cfg: &QueueConfig) -> Vec<Vec<f64>> {
    (0..cfg.n_classes())
        .map(|i| (0..cfg.n_pools()).map(|j| cfg.holding[i] - cfg.routing_costs[i][j]).collect())
        .collect()
}

/// Weights of the modified max-pressure rule: `ω_ij = h_i X_i - r_ij`.
pub fn max_pressure_weights(cfg: &QueueConfig, state: &QueueState) -> Vec<Vec<f64>> {
    (0..cfg.n_classes())
        .map(|i| {
            (0..cfg.n_pools())
                .map(|j| cfg.holding[i] * state.queues[i] as f64 - cfg.routing_costs[i][j])
                .collect()
        })
        .collect()
}

struct Arc {
    to: usize,
    cap: u32,
    cost: f64,
}

struct Network {
    arcs: Vec<Arc>,
    out: Vec<Vec<usize>>,
}

impl Network {
    fn new(n: usize) -> Self {
        Self { arcs: Vec::new(), out: vec![Vec::new(); n] }
    }
    /// Adds `from → to` and its zero-capacity reverse; returns the forward id.
    fn add(&mut self, from: usize, to: usize, cap: u32, cost: f64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { to, cap, cost });
        self.out[from].push(id);
        self.arcs.push(Arc { to: from, cap: 0, cost: -cost });
        self.out[to].push(id + 1);
        id
    }
    /// Cheapest residual path from `s` to `t` as (cost, arcs in order).
    fn shortest_path(&self, s: usize, t: usize) -> Option<(f64, Vec<usize>)> {
        let n = self.out.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut via: Vec<Option<usize>> = vec![None; n];
        dist[s] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &id in &self.out[u] {
                    let a = &self.arcs[id];
                    if a.cap > 0 && dist[u] + a.cost < dist[a.to] - 1e-12 {
                        dist[a.to] = dist[u] + a.cost;
                        via[a.to] = Some(id);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[t] == f64::INFINITY {
            return None;
        }
        let mut path = Vec::new();
        let mut v = t;
        while v != s {
            let id = via[v].expect("reachable vertex has a predecessor");
            path.push(id);
            v = self.arcs[id ^ 1].to;
        }
        path.reverse();
        Some((dist[t], path))
    }
}

/// Optimal `U` for weights `ω` under row budgets `X_i` and column budgets
/// `free_j`. Incompatible pairs (`μ_ij = 0`) are excluded.
pub fn max_weight_assignment(
    weights: &[Vec<f64>],
    compatible: &[Vec<bool>],
    row_budgets: &[u32],
    col_budgets: &[u32],
) -> Assignment {
    let (ni, nj) = (row_budgets.len(), col_budgets.len());
    let (src, sink) = (ni + nj, ni + nj + 1);
    let mut net = Network::new(ni + nj + 2);
    for (i, &b) in row_budgets.iter().enumerate() {
        net.add(src, i, b, 0.0);
    }
    for (j, &b) in col_budgets.iter().enumerate() {
        net.add(ni + j, sink, b, 0.0);
    }
    let mut pair_arcs = Vec::new();
    for i in 0..ni {
        for j in 0..nj {
            if compatible[i][j] && weights[i][j] > 0.0 && row_budgets[i] > 0 && col_budgets[j] > 0 {
                pair_arcs.push((i, j, net.add(i, ni + j, row_budgets[i].min(col_budgets[j]), -weights[i][j])));
            }
        }
    }
    while let Some((cost, path)) = net.shortest_path(src, sink) {
        if cost >= -1e-12 {
            break;
        }
        let push = path.iter().map(|&id| net.arcs[id].cap).min().expect("nonempty path");
        for &id in &path {
            net.arcs[id].cap -= push;
            net.arcs[id ^ 1].cap += push;
        }
    }
    let mut u = vec![vec![0; nj]; ni];
    for (i, j, id) in pair_arcs {
        u[i][j] = net.arcs[id ^ 1].cap;
    }
    u
}

/// `Σ ω_ij U_ij`.
pub fn assignment_value(weights: &[Vec<f64>], u: &Assignment) -> f64 {
    weights.iter().zip(u).map(|(w, r)| w.iter().zip(r).map(|(w, &x)| w * x as f64).sum::<f64>()).sum()
}

/// The benchmark assignment for `state`: budgets are the queues and the free
/// servers of each pool.
pub fn benchmark_assignment(cfg: &QueueConfig, state: &QueueState, weights: &[Vec<f64>]) -> Assignment {
    let compatible: Vec<Vec<bool>> = cfg.service_probs.iter().map(|row| row.iter().map(|&m| m > 0.0).collect()).collect();
    max_weight_assignment(weights, &compatible, &state.queues, &state.free_capacity(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::config::CostRegime;

    #[test]
    fn nonpositive_weights_assign_nothing() {
        let w = vec![vec![0.0, -1.0], vec![-2.0, -0.5]];
        let c = vec![vec![true; 2]; 2];
        assert_eq!(max_weight_assignment(&w, &c, &[3, 3], &[3, 3]), vec![vec![0, 0], vec![0, 0]]);
    }

    #[test]
    fn single_pair_takes_the_smaller_budget() {
        let c = vec![vec![true]];
        assert_eq!(max_weight_assignment(&[vec![1.5]], &c, &[7], &[4]), vec![vec![4]]);
        assert_eq!(max_weight_assignment(&[vec![1.5]], &c, &[2], &[4]), vec![vec![2]]);
    }

    #[test]
    fn rerouting_beats_greedy() {
        // greedy would give class 0 to pool 0 (weight 5) and leave class 1
        // (only compatible with pool 0) idle: total 5 versus 4 + 3 = 7
        let w = vec![vec![5.0, 4.0], vec![3.0, 0.0]];
        let c = vec![vec![true, true], vec![true, false]];
        let u = max_weight_assignment(&w, &c, &[1, 1], &[1, 1]);
        assert_eq!(u, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn cmu_never_overflows_class_two_under_large_costs() {
        let cfg = QueueConfig::standard(CostRegime::Large, 0.99);
        let w = cmu_weights(&cfg);
        assert!((w[1][0] + 1.0).abs() < 1e-12 && (w[1][2] + 1.0).abs() < 1e-12);
        let mut state = QueueState::initial(&cfg);
        state.queues = vec![0, 500, 0];
        state.in_service = vec![vec![0; 3]; 3];
        let u = benchmark_assignment(&cfg, &state, &w);
        assert_eq!(u[1], vec![0, 50, 0]);
    }

    #[test]
    fn max_pressure_overflows_long_queues() {
        let cfg = QueueConfig::standard(CostRegime::Large, 0.99);
        let mut state = QueueState::initial(&cfg);
        state.queues = vec![0, 500, 0];
        state.in_service = vec![vec![0; 3]; 3];
        let u = benchmark_assignment(&cfg, &state, &max_pressure_weights(&cfg, &state));
        assert_eq!(u[1], vec![40, 50, 60]);
    }
}
