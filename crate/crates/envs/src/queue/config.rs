//! System parameters of the multi-class multi-pool queue.

use serde::{Deserialize, Serialize};

use super::QueueError;

/// Which routing-cost matrix a preset uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostRegime {
    /// Overflow is expensive: `r = [[0,2,2],[3,0,3],[1,1,0]]`.
    Large,
    /// Overflow is cheap: a tenth of the large costs.
    Small,
}

impl CostRegime {
    pub fn routing_costs(self) -> Vec<Vec<f64>> {
        let large = vec![vec![0.0, 2.0, 2.0], vec![3.0, 0.0, 3.0], vec![1.0, 1.0, 0.0]];
        match self {
            CostRegime::Large => large,
            CostRegime::Small => large.iter().map(|row| row.iter().map(|r| r / 10.0).collect()).collect(),
        }
    }
}

/// `I` customer classes routed to `J` server pools. Pool `j` is the primary
/// pool of class `j` (for `j < I`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueConfig {
    /// Poisson arrival rate `θ_i` per period.
    pub arrival_rates: Vec<f64>,
    /// Per-period completion probability `μ_ij`; 0 marks an incompatible pair.
    pub service_probs: Vec<Vec<f64>>,
    /// Servers `N_j` per pool.
    pub pool_sizes: Vec<u32>,
    /// Holding cost `h_i` per waiting customer per period.
    pub holding: Vec<f64>,
    /// One-off routing cost `r_ij` per customer sent from class `i` to pool `j`.
    pub routing_costs: Vec<Vec<f64>>,
    pub discount: f64,
    /// Simulation length used for every discounted estimate.
    pub horizon: usize,
    /// Starting queue lengths `X_i(0)`.
    pub init_queues: Vec<u32>,
    /// Starting occupancy `Z_ij(0)`.
    pub init_in_service: Vec<Vec<u32>>,
}

/// Horizon with `γ^H ≈ 1e-4` for the discount factors used in the study.
pub fn standard_horizon(discount: f64) -> usize {
    match discount {
        g if (g - 0.9).abs() < 1e-12 => 100,
        g if (g - 0.95).abs() < 1e-12 => 150,
        g if (g - 0.99).abs() < 1e-12 => 800,
        g => (1e-4f64.ln() / g.ln()).ceil() as usize,
    }
}

impl QueueConfig {
    /// Three classes and three pools: `θ = (12, 16, 20)`, `h = (3, 2, 1)`,
    /// `N = (40, 50, 60)`, starting from 50 waiting customers per class and
    /// `Z = diag(20, 30, 40)`.
    pub fn standard(regime: CostRegime, discount: f64) -> Self {
        Self {
            arrival_rates: vec![12.0, 16.0, 20.0],
            service_probs: vec![vec![0.3, 0.25, 0.2], vec![0.15, 0.3, 0.2], vec![0.25, 0.1, 0.4]],
            pool_sizes: vec![40, 50, 60],
            holding: vec![3.0, 2.0, 1.0],
            routing_costs: regime.routing_costs(),
            discount,
            horizon: standard_horizon(discount),
            init_queues: vec![50, 50, 50],
            init_in_service: vec![vec![20, 0, 0], vec![0, 30, 0], vec![0, 0, 40]],
        }
    }

    /// The standard system shrunk tenfold (`N = (4, 5, 6)`,
    /// `θ = (1.2, 1.6, 2.0)`, initial state scaled alike), at `γ = 0.9`.
    /// Traffic intensities are unchanged.
    pub fn scaled(regime: CostRegime) -> Self {
        Self {
            arrival_rates: vec![1.2, 1.6, 2.0],
            pool_sizes: vec![4, 5, 6],
            init_queues: vec![5, 5, 5],
            init_in_service: vec![vec![2, 0, 0], vec![0, 3, 0], vec![0, 0, 4]],
            ..Self::standard(regime, 0.9)
        }
    }

    pub fn n_classes(&self) -> usize {
        self.arrival_rates.len()
    }
    pub fn n_pools(&self) -> usize {
        self.pool_sizes.len()
    }

    /// Class whose primary pool is `pool`, if any.
    pub fn primary_class(&self, pool: usize) -> Option<usize> {
        (pool < self.n_classes()).then_some(pool)
    }

    /// Nominal intensity `ρ_i = θ_i / (N_i μ_ii)` of each class on its
    /// primary pool.
    pub fn traffic_intensities(&self) -> Vec<f64> {
        (0..self.n_classes())
            .map(|i| self.arrival_rates[i] / (self.pool_sizes[i] as f64 * self.service_probs[i][i]))
            .collect()
    }

    pub fn validate(&self) -> Result<(), QueueError> {
        let bad = |m: String| Err(QueueError::Config(m));
        let (ni, nj) = (self.n_classes(), self.n_pools());
        if ni == 0 || nj == 0 {
            return bad("at least one class and one pool are required".into());
        }
        if ni > nj {
            return bad(format!("{ni} classes but only {nj} pools; every class needs a primary pool"));
        }
        if self.arrival_rates.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return bad("arrival rates must be positive and finite".into());
        }
        if self.pool_sizes.contains(&0) {
            return bad("every pool needs at least one server".into());
        }
        for (name, m) in [("service_probs", &self.service_probs), ("routing_costs", &self.routing_costs)] {
            if m.len() != ni || m.iter().any(|row| row.len() != nj) {
                return bad(format!("{name} must be {ni}×{nj}"));
            }
        }
        if self.service_probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("service probabilities must lie in [0, 1]".into());
        }
        if (0..ni).any(|i| self.service_probs[i][i] <= 0.0) {
            return bad("every class must be served by its primary pool".into());
        }
        if self.routing_costs.iter().flatten().any(|r| !r.is_finite()) || self.holding.iter().any(|h| !h.is_finite()) {
            return bad("costs must be finite".into());
        }
        if self.holding.len() != ni {
            return bad(format!("holding has {} entries for {ni} classes", self.holding.len()));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad(format!("discount {} outside (0, 1)", self.discount));
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.init_queues.len() != ni || self.init_in_service.len() != ni {
            return bad("initial state has the wrong number of classes".into());
        }
        if self.init_in_service.iter().any(|row| row.len() != nj) {
            return bad("initial occupancy rows must have one entry per pool".into());
        }
        for j in 0..nj {
            let used: u32 = self.init_in_service.iter().map(|row| row[j]).sum();
            if used > self.pool_sizes[j] {
                return bad(format!("initial occupancy {used} exceeds pool {j} size {}", self.pool_sizes[j]));
            }
            for i in 0..ni {
                if self.init_in_service[i][j] > 0 && self.service_probs[i][j] == 0.0 {
                    return bad(format!("class {i} starts in incompatible pool {j}"));
                }
            }
        }
        Ok(())
    }
}
