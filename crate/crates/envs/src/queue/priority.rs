//! Priority-rule actions: an ordered list of pools, implicitly ending with
//! "wait". Customers fill the pools greedily in that order; whoever does not
//! fit stays in the queue.

use serde::{Deserialize, Serialize};

use super::config::QueueConfig;

/// Pools in decreasing preference; the terminal wait option is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PriorityAction {
    pub pools: Vec<usize>,
}

impl PriorityAction {
    pub fn new(pools: Vec<usize>) -> Self {
        Self { pools }
    }

    /// Whether any pool other than `primary` may receive customers.
    pub fn overflows_beyond(&self, primary: usize) -> bool {
        self.pools.iter().any(|&p| p != primary)
    }

    /// 1-based display form ending with the wait marker, e.g. `(1,2,-1)`.
    pub fn label(&self) -> String {
        let mut parts: Vec<String> = self.pools.iter().map(|p| (p + 1).to_string()).collect();
        parts.push("-1".into());
        format!("({})", parts.join(","))
    }
}

/// All ordered selections of `items` of length `k`, in lexicographic order of
/// positions.
fn arrangements(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (pos, &x) in items.iter().enumerate() {
        let rest: Vec<usize> = items.iter().enumerate().filter(|&(p, _)| p != pos).map(|(_, &y)| y).collect();
        for mut tail in arrangements(&rest, k - 1) {
            tail.insert(0, x);
            out.push(tail);
        }
    }
    out
}

/// Rules for `class`: its primary pool first, followed by every ordered
/// selection of the other compatible pools. Shorter lists come first; for
/// three pools this is `(p,-1), (p,a,-1), (p,b,-1), (p,a,b,-1), (p,b,a,-1)`,
/// where `a, b` are the two other pools, nearest-to-primary first.
pub fn action_set(cfg: &QueueConfig, class: usize) -> Vec<PriorityAction> {
    let primary = class;
    let j = cfg.n_pools();
    // other pools ordered by cyclic distance from the primary pool, so that
    // class 2 of three sees 1 then 3, and class 3 sees 2 then 1
    let mut others: Vec<usize> = (0..j).filter(|&p| p != primary && cfg.service_probs[class][p] > 0.0).collect();
    others.sort_by_key(|&p| {
        let d = primary.abs_diff(p);
        (d, if p < primary { 0 } else { 1 })
    });
    let mut out = Vec::new();
    for k in 0..=others.len() {
        for tail in arrangements(&others, k) {
            let mut pools = vec![primary];
            pools.extend(tail);
            out.push(PriorityAction::new(pools));
        }
    }
    out
}

/// Greedy execution of `action` for one class with `waiting` customers and
/// per-pool residual capacities. Returns the number sent to each pool.
pub fn apply_priority(waiting: u32, action: &PriorityAction, residual: &[u32]) -> Vec<u32> {
    let mut u = vec![0; residual.len()];
    let mut left = waiting;
    for &p in &action.pools {
        if left == 0 {
            break;
        }
        let take = left.min(residual[p]);
        u[p] += take;
        left -= take;
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::config::{CostRegime, QueueConfig};

    fn labels(set: &[PriorityAction]) -> Vec<String> {
        set.iter().map(PriorityAction::label).collect()
    }

    #[test]
    fn three_pool_action_sets() {
        let cfg = QueueConfig::scaled(CostRegime::Large);
        assert_eq!(labels(&action_set(&cfg, 0)), ["(1,-1)", "(1,2,-1)", "(1,3,-1)", "(1,2,3,-1)", "(1,3,2,-1)"]);
        assert_eq!(labels(&action_set(&cfg, 1)), ["(2,-1)", "(2,1,-1)", "(2,3,-1)", "(2,1,3,-1)", "(2,3,1,-1)"]);
        assert_eq!(labels(&action_set(&cfg, 2)), ["(3,-1)", "(3,2,-1)", "(3,1,-1)", "(3,2,1,-1)", "(3,1,2,-1)"]);
    }

    #[test]
    fn incompatible_pools_never_appear() {
        let mut cfg = QueueConfig::scaled(CostRegime::Large);
        cfg.service_probs[0][2] = 0.0;
        let set = action_set(&cfg, 0);
        assert_eq!(labels(&set), ["(1,-1)", "(1,2,-1)"]);
        for a in &set {
            let u = apply_priority(100, a, &[1, 1, 1]);
            assert_eq!(u[2], 0);
        }
    }

    #[test]
    fn greedy_fill_examples() {
        let primary_only = PriorityAction::new(vec![0]);
        assert_eq!(apply_priority(5, &primary_only, &[3, 9, 9]), vec![3, 0, 0]);
        let two = PriorityAction::new(vec![0, 1]);
        assert_eq!(apply_priority(5, &two, &[3, 10, 9]), vec![3, 2, 0]);
        let all = PriorityAction::new(vec![0, 2, 1]);
        assert_eq!(apply_priority(7, &all, &[0, 0, 0]), vec![0, 0, 0]);
        assert_eq!(apply_priority(7, &all, &[1, 2, 3]), vec![1, 2, 3]);
        assert_eq!(apply_priority(0, &all, &[1, 2, 3]), vec![0, 0, 0]);
    }

    #[test]
    fn overflow_detection() {
        assert!(!PriorityAction::new(vec![1]).overflows_beyond(1));
        assert!(PriorityAction::new(vec![1, 0]).overflows_beyond(1));
    }
}
