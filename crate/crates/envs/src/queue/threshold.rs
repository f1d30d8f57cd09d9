//! Where a trained class policy starts overflowing.
//!
//! For a class slice with fixed occupancy, the threshold is the longest queue
//! the most probable rule still serves without sending anyone to a
//! non-primary pool: overflow begins at one customer more. A rule that
//! overflows as soon as the primary pool is full therefore has threshold
//! `N_i - Z_ii`, and threshold 0 once the primary pool is full.

use serde::{Deserialize, Serialize};

use super::config::QueueConfig;
use super::priority::{apply_priority, PriorityAction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    /// Value of the varied occupancy entry.
    pub occupancy: u32,
    /// `None` when no queue length up to the scan limit overflows.
    pub threshold: Option<u32>,
}

/// Scans queue lengths `0..=max_queue` for each `Z_{class, pool}` in
/// `range`, the other occupancy entries held at `fixed`. `choose` returns
/// the index into `actions` the policy picks at a slice `(X, Z_1..Z_J)`.
pub fn threshold_scan(
    cfg: &QueueConfig,
    class: usize,
    actions: &[PriorityAction],
    choose: impl Fn(&[u32]) -> usize,
    varied_pool: usize,
    fixed: &[u32],
    range: std::ops::RangeInclusive<u32>,
    max_queue: u32,
) -> Vec<ThresholdPoint> {
    range
        .map(|z| {
            let mut occ = fixed.to_vec();
            occ[varied_pool] = z;
            let residual: Vec<u32> = cfg.pool_sizes.iter().zip(&occ).map(|(n, z)| n.saturating_sub(*z)).collect();
            let threshold = (1..=max_queue)
                .find(|&x| {
                    let slice: Vec<u32> = std::iter::once(x).chain(occ.iter().copied()).collect();
                    let u = apply_priority(x, &actions[choose(&slice)], &residual);
                    u.iter().enumerate().any(|(j, &n)| j != class && n > 0)
                })
                .map(|x| x - 1);
            ThresholdPoint { occupancy: z, threshold }
        })
        .collect()
}

/// Whether the finite part of the curve never increases, with "never
/// overflows" treated as infinitely large.
pub fn is_non_increasing(points: &[ThresholdPoint]) -> bool {
    let value = |p: &ThresholdPoint| p.threshold.map_or(f64::INFINITY, f64::from);
    points.windows(2).all(|w| value(&w[1]) <= value(&w[0]))
}

/// CSV `occupancy,threshold` with `inf` for curves that never overflow.
pub fn threshold_csv(points: &[ThresholdPoint]) -> String {
    let mut out = String::from("occupancy,threshold\n");
    for p in points {
        let t = p.threshold.map_or_else(|| "inf".to_string(), |t| t.to_string());
        out.push_str(&format!("{},{t}\n", p.occupancy));
    }
    out
}
