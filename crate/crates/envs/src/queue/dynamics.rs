//! State, assignments and one-period transitions.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::config::QueueConfig;
use super::QueueError;

/// Queue lengths `X_i` and occupancy `Z_ij` at the start of a period.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueueState {
    pub queues: Vec<u32>,
    pub in_service: Vec<Vec<u32>>,
}

/// `U[i][j]`: class-`i` customers sent to pool `j` this period.
pub type Assignment = Vec<Vec<u32>>;

impl QueueState {
    pub fn initial(cfg: &QueueConfig) -> Self {
        Self { queues: cfg.init_queues.clone(), in_service: cfg.init_in_service.clone() }
    }

    /// Servers in pool `j` not occupied at the start of the period.
    pub fn free_capacity(&self, cfg: &QueueConfig) -> Vec<u32> {
        (0..cfg.n_pools())
            .map(|j| cfg.pool_sizes[j].saturating_sub(self.in_service.iter().map(|row| row[j]).sum()))
            .collect()
    }

    /// Capacity `Σ_i Z_ij ≤ N_j` and compatibility; nonnegativity is
    /// structural.
    pub fn check(&self, cfg: &QueueConfig) -> Result<(), QueueError> {
        for j in 0..cfg.n_pools() {
            let used: u32 = self.in_service.iter().map(|row| row[j]).sum();
            if used > cfg.pool_sizes[j] {
                return Err(QueueError::Capacity { pool: j, used, size: cfg.pool_sizes[j] });
            }
        }
        Ok(())
    }

    /// Class `i`'s slice `(X_i, Z_i1, …, Z_iJ)`.
    pub fn class_slice(&self, class: usize) -> Vec<u32> {
        std::iter::once(self.queues[class]).chain(self.in_service[class].iter().copied()).collect()
    }
}

pub fn zero_assignment(cfg: &QueueConfig) -> Assignment {
    vec![vec![0; cfg.n_pools()]; cfg.n_classes()]
}

/// Checks `Σ_j U_ij ≤ X_i`, `Σ_i (Z_ij + U_ij) ≤ N_j` and that nobody is sent
/// to an incompatible pool.
pub fn check_assignment(cfg: &QueueConfig, state: &QueueState, u: &Assignment) -> Result<(), QueueError> {
    if u.len() != cfg.n_classes() || u.iter().any(|row| row.len() != cfg.n_pools()) {
        return Err(QueueError::Shape("assignment".into()));
    }
    for (i, row) in u.iter().enumerate() {
        let sent: u32 = row.iter().sum();
        if sent > state.queues[i] {
            return Err(QueueError::Overdrawn { class: i, sent, waiting: state.queues[i] });
        }
        for (j, &x) in row.iter().enumerate() {
            if x > 0 && cfg.service_probs[i][j] == 0.0 {
                return Err(QueueError::Incompatible { class: i, pool: j });
            }
        }
    }
    for j in 0..cfg.n_pools() {
        let used: u32 = (0..cfg.n_classes()).map(|i| state.in_service[i][j] + u[i][j]).sum();
        if used > cfg.pool_sizes[j] {
            return Err(QueueError::Capacity { pool: j, used, size: cfg.pool_sizes[j] });
        }
    }
    Ok(())
}

/// Period cost `Σ_i h_i X_i + Σ_ij r_ij U_ij`, holding charged on the queue
/// at the start of the period.
pub fn period_cost(cfg: &QueueConfig, state: &QueueState, u: &Assignment) -> f64 {
    let mut c = 0.0;
    for i in 0..cfg.n_classes() {
        c += cfg.holding[i] * state.queues[i] as f64;
        for j in 0..cfg.n_pools() {
            c += cfg.routing_costs[i][j] * u[i][j] as f64;
        }
    }
    c
}

/// One Poisson draw; the rate is validated positive.
pub(crate) fn poisson(rate: f64, rng: &mut impl Rng) -> u32 {
    Poisson::new(rate).expect("positive rate").sample(rng) as u32
}

/// Completions among `n` customers served with probability `p` each.
pub(crate) fn binomial(n: u32, p: f64, rng: &mut impl Rng) -> u32 {
    if n == 0 || p == 0.0 {
        return 0;
    }
    Binomial::new(n as u64, p).expect("probability in [0, 1]").sample(rng) as u32
}

/// `X' = X + A - Σ_j U`, `Z' = Z + U - R` with `A_i ~ Poisson(θ_i)` drawn from
/// `arrivals` and `R_ij ~ Binomial(Z_ij + U_ij, μ_ij)` from `services`.
pub fn transition(
    cfg: &QueueConfig,
    state: &QueueState,
    u: &Assignment,
    arrivals: &mut impl Rng,
    services: &mut impl Rng,
) -> Result<QueueState, QueueError> {
    check_assignment(cfg, state, u)?;
    let mut next = state.clone();
    for i in 0..cfg.n_classes() {
        let a = poisson(cfg.arrival_rates[i], arrivals);
        next.queues[i] = state.queues[i] + a - u[i].iter().sum::<u32>();
        for j in 0..cfg.n_pools() {
            let busy = state.in_service[i][j] + u[i][j];
            next.in_service[i][j] = busy - binomial(busy, cfg.service_probs[i][j], services);
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::config::CostRegime;
    use cmdp_core::rng::{rng_stream, Purpose};

    fn cfg() -> QueueConfig {
        QueueConfig::scaled(CostRegime::Large)
    }

    #[test]
    fn everyone_in_service_leaves_when_service_is_certain() {
        let mut c = cfg();
        c.service_probs = vec![vec![1.0; 3]; 3];
        c.arrival_rates = vec![1e-300; 3];
        let s = QueueState::initial(&c);
        let mut a = rng_stream(1, 0, Purpose::Arrival);
        let mut r = rng_stream(1, 0, Purpose::Service);
        let next = transition(&c, &s, &zero_assignment(&c), &mut a, &mut r).unwrap();
        assert!(next.in_service.iter().flatten().all(|&z| z == 0));
        assert_eq!(next.queues, s.queues);
    }

    #[test]
    fn rejects_infeasible_assignments() {
        let c = cfg();
        let s = QueueState::initial(&c);
        let mut u = zero_assignment(&c);
        u[0][0] = 3; // pool 0 has 2 busy of 4
        assert!(matches!(check_assignment(&c, &s, &u), Err(QueueError::Capacity { pool: 0, .. })));
        u[0][0] = 2;
        assert!(check_assignment(&c, &s, &u).is_ok());
        u[0][1] = 4; // only 5 waiting
        assert!(matches!(check_assignment(&c, &s, &u), Err(QueueError::Overdrawn { class: 0, .. })));
        let mut incompatible = c.clone();
        incompatible.service_probs[0][1] = 0.0;
        let mut v = zero_assignment(&c);
        v[0][1] = 1;
        assert!(matches!(check_assignment(&incompatible, &s, &v), Err(QueueError::Incompatible { .. })));
    }

    #[test]
    fn cost_charges_queue_and_routing() {
        let c = cfg();
        let s = QueueState::initial(&c);
        let mut u = zero_assignment(&c);
        u[1][0] = 2;
        // 3·5 + 2·5 + 1·5 + 3·2
        assert_eq!(period_cost(&c, &s, &u), 36.0);
        assert_eq!(s.free_capacity(&c), vec![2, 2, 2]);
        assert_eq!(s.class_slice(2), vec![5, 0, 0, 4]);
    }
}
