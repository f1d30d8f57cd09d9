//! Turning independently chosen per-class requests into an assignment that
//! respects the pool capacities.
//!
//! Pool by pool, the primary class is admitted first (up to the free
//! capacity); the remaining servers go to a uniformly random subset of the
//! other requesting customers. Anyone not admitted stays in their queue.

use rand::seq::index;
use rand::Rng;

use super::config::QueueConfig;
use super::dynamics::{Assignment, QueueState};

/// Admits `requests[i][j]` customers of class `i` to pool `j` as far as the
/// free servers allow. Each row of `requests` must not exceed `X_i`.
pub fn feasibility_modification(
    cfg: &QueueConfig,
    state: &QueueState,
    requests: &Assignment,
    rng: &mut impl Rng,
) -> Assignment {
    let free = state.free_capacity(cfg);
    let mut out = requests.clone();
    for (j, &cap) in free.iter().enumerate() {
        let total: u32 = requests.iter().map(|r| r[j]).sum();
        if total <= cap {
            continue;
        }
        let primary = cfg.primary_class(j);
        let first = primary.map_or(0, |p| requests[p][j].min(cap));
        let left = cap - first;
        // the other customers, as a flat list of class labels
        let others: Vec<usize> = (0..cfg.n_classes())
            .filter(|&i| Some(i) != primary)
            .flat_map(|i| std::iter::repeat_n(i, requests[i][j] as usize))
            .collect();
        for row in out.iter_mut() {
            row[j] = 0;
        }
        if let Some(p) = primary {
            out[p][j] = first;
        }
        for k in index::sample(rng, others.len(), left as usize) {
            out[others[k]][j] += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::config::CostRegime;
    use crate::queue::dynamics::check_assignment;
    use cmdp_core::rng::{rng_stream, Purpose};

    fn empty_state(cfg: &QueueConfig, queues: Vec<u32>) -> QueueState {
        QueueState { queues, in_service: vec![vec![0; cfg.n_pools()]; cfg.n_classes()] }
    }

    #[test]
    fn requests_within_capacity_pass_unchanged() {
        let cfg = QueueConfig::scaled(CostRegime::Large);
        let s = QueueState::initial(&cfg);
        let req = vec![vec![2, 0, 0], vec![0, 1, 1], vec![0, 1, 1]];
        let mut rng = rng_stream(0, 0, Purpose::Admission);
        assert_eq!(feasibility_modification(&cfg, &s, &req, &mut rng), req);
    }

    #[test]
    fn primary_first_then_uniform_overflow() {
        let mut cfg = QueueConfig::standard(CostRegime::Large, 0.9);
        cfg.pool_sizes = vec![20, 50, 60];
        let s = empty_state(&cfg, vec![15, 5, 5]);
        let req = vec![vec![15, 0, 0], vec![5, 0, 0], vec![5, 0, 0]];
        let mut from_two = 0;
        let trials = 20_000;
        for t in 0..trials {
            let mut rng = rng_stream(3, t, Purpose::Admission);
            let u = feasibility_modification(&cfg, &s, &req, &mut rng);
            assert_eq!(u[0][0], 15);
            assert_eq!(u[1][0] + u[2][0], 5);
            check_assignment(&cfg, &s, &u).unwrap();
            from_two += u[1][0];
        }
        // hypergeometric: 5 draws from 10 customers, 5 of them class 2
        let mean = from_two as f64 / trials as f64;
        let se = (5.0 * 0.5 * 0.5 * 5.0 / 9.0 / trials as f64).sqrt();
        assert!((mean - 2.5).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn full_pool_returns_everyone() {
        let cfg = QueueConfig::scaled(CostRegime::Large);
        let mut s = QueueState::initial(&cfg);
        s.in_service[0][0] = 4;
        let req = vec![vec![3, 0, 0], vec![2, 0, 0], vec![1, 0, 0]];
        let mut rng = rng_stream(0, 0, Purpose::Admission);
        let u = feasibility_modification(&cfg, &s, &req, &mut rng);
        assert!(u.iter().all(|r| r[0] == 0));
    }

    #[test]
    fn primary_overload_is_capped() {
        let cfg = QueueConfig::scaled(CostRegime::Large);
        let s = empty_state(&cfg, vec![9, 9, 9]);
        let req = vec![vec![9, 0, 0], vec![3, 0, 0], vec![0, 0, 0]];
        let mut rng = rng_stream(0, 0, Purpose::Admission);
        let u = feasibility_modification(&cfg, &s, &req, &mut rng);
        assert_eq!((u[0][0], u[1][0]), (4, 0));
    }
}
