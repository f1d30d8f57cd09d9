//! Per-class subproblems of the Lagrangian decomposition and the softmax
//! policies trained on them.
//!
//! Subproblem `i` sees only its own slice `(X_i, Z_i1, …, Z_iJ)`, chooses a
//! priority rule, and executes it greedily against the servers its own class
//! leaves free (`N_j - Z_ij`): other classes are accounted for through the
//! multipliers on the link costs `b^i = (Z_ij + U_ij)_j`, whose sum over
//! classes must stay within `(N_1, …, N_J)` in expectation.
//!
//! Policies are log-linear in the quadratic features. A mirror-descent step
//! `π' ∝ π exp(-η Q)` with `Q(s, a) ≈ ⟨φ(s), θ^a⟩` simply adds `η θ^a` to the
//! accumulated weights of action `a`, so the policy stays in closed form.

use std::sync::Mutex;

use cmdp_core::monte_carlo::{estimate_constraints, estimate_q, ActionSampler, Environment, MCConfig, Transition};
use cmdp_core::primal_dual::{Evaluation, EvaluatorKind, PrimalDualProblem, SolverError};
use cmdp_core::rng::{derive_seed, rng_stream, Purpose, Stream};
use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::config::QueueConfig;
use super::dynamics::{binomial, poisson};
use super::priority::{action_set, apply_priority, PriorityAction};
use super::vfa::{feature_dim, quadratic_features, ridge_fit, RIDGE};

/// `π(a | s) ∝ exp(-⟨φ(s), W^a⟩)`; all-zero weights give the uniform policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSoftmaxPolicy {
    pub weights: Vec<Vec<f64>>,
}

fn slice_features(slice: &[u32]) -> Vec<f64> {
    let s: Vec<f64> = slice.iter().map(|&x| x as f64).collect();
    quadratic_features(&s)
}

impl LinearSoftmaxPolicy {
    pub fn uniform(n_actions: usize, slice_len: usize) -> Self {
        Self { weights: vec![vec![0.0; feature_dim(slice_len)]; n_actions] }
    }

    pub fn n_actions(&self) -> usize {
        self.weights.len()
    }

    fn logits(&self, slice: &[u32]) -> Vec<f64> {
        let f = slice_features(slice);
        self.weights.iter().map(|w| -w.iter().zip(&f).map(|(w, f)| w * f).sum::<f64>()).collect()
    }

    pub fn probabilities(&self, slice: &[u32]) -> Vec<f64> {
        let logits = self.logits(slice);
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = e.iter().sum();
        e.iter().map(|x| x / z).collect()
    }

    /// Most probable action; ties go to the lowest index.
    pub fn most_probable(&self, slice: &[u32]) -> usize {
        let logits = self.logits(slice);
        let mut best = 0;
        for (a, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = a;
            }
        }
        best
    }

    pub fn sample(&self, slice: &[u32], rng: &mut impl Rng) -> usize {
        let p = self.probabilities(slice);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, &x) in p.iter().enumerate() {
            acc += x;
            if u < acc {
                return a;
            }
        }
        p.len() - 1
    }

    /// Mirror-descent step with fitted action values `θ^a`.
    pub fn improved(&self, theta: &[Vec<f64>], eta: f64) -> Self {
        Self {
            weights: self
                .weights
                .iter()
                .zip(theta)
                .map(|(w, t)| w.iter().zip(t).map(|(w, t)| w + eta * t).collect())
                .collect(),
        }
    }

    fn is_valid(&self, n_actions: usize, dim: usize) -> bool {
        self.weights.len() == n_actions && self.weights.iter().all(|w| w.len() == dim && w.iter().all(|x| x.is_finite()))
    }
}

impl ActionSampler<Vec<u32>> for LinearSoftmaxPolicy {
    fn sample_action(&self, state: &Vec<u32>, rng: &mut Stream) -> usize {
        self.sample(state, rng)
    }
}

/// Single-class, multi-pool simulator over slices `(X, Z_1, …, Z_J)`.
#[derive(Debug, Clone)]
pub struct ClassEnv<'a> {
    cfg: &'a QueueConfig,
    class: usize,
    actions: Vec<PriorityAction>,
    zeros: Vec<f64>,
    cost_floor: f64,
}

impl<'a> ClassEnv<'a> {
    pub fn new(cfg: &'a QueueConfig, class: usize) -> Self {
        let min_route: f64 = cfg.routing_costs[class]
            .iter()
            .zip(&cfg.pool_sizes)
            .map(|(r, &n)| r.min(0.0) * n as f64)
            .sum();
        Self {
            cfg,
            class,
            actions: action_set(cfg, class),
            zeros: vec![0.0; cfg.n_pools()],
            cost_floor: min_route.min(0.0) - 1.0,
        }
    }

    pub fn actions(&self) -> &[PriorityAction] {
        &self.actions
    }
    pub fn class(&self) -> usize {
        self.class
    }
    pub fn slice_len(&self) -> usize {
        self.cfg.n_pools() + 1
    }

    /// Servers of each pool not held by this class.
    pub fn residual(&self, slice: &[u32]) -> Vec<u32> {
        self.cfg.pool_sizes.iter().zip(&slice[1..]).map(|(n, z)| n.saturating_sub(*z)).collect()
    }
}

impl Environment for ClassEnv<'_> {
    type State = Vec<u32>;

    fn discount(&self) -> f64 {
        self.cfg.discount
    }
    fn thresholds(&self) -> &[f64] {
        &self.zeros
    }
    fn cost_lower_bound(&self) -> f64 {
        self.cost_floor
    }
    fn sample_initial(&self, _rng: &mut Stream) -> Vec<u32> {
        std::iter::once(self.cfg.init_queues[self.class])
            .chain(self.cfg.init_in_service[self.class].iter().copied())
            .collect()
    }
    fn n_actions(&self, _state: &Vec<u32>) -> usize {
        self.actions.len()
    }
    fn step(&self, state: &Vec<u32>, action: usize, rng: &mut Stream, aux: &mut [f64]) -> Transition<Vec<u32>> {
        let (cfg, i) = (self.cfg, self.class);
        let x = state[0];
        let u = apply_priority(x, &self.actions[action], &self.residual(state));
        // Arrivals and services come from per-step child streams, so every
        // step consumes exactly two draws of the path stream whatever the
        // action. Rollouts that share a path stream but differ in actions
        // then see identical arrivals throughout (common random numbers).
        let mut arrivals = Stream::seed_from_u64(rng.next_u64());
        let service_seed = rng.next_u64();
        let mut cost = cfg.holding[i] * x as f64;
        let mut next = Vec::with_capacity(state.len());
        next.push(x + poisson(cfg.arrival_rates[i], &mut arrivals) - u.iter().sum::<u32>());
        for j in 0..cfg.n_pools() {
            cost += cfg.routing_costs[i][j] * u[j] as f64;
            let busy = state[1 + j] + u[j];
            aux[j] = busy as f64;
            let mut services = Stream::seed_from_u64(service_seed);
            services.set_stream(j as u64);
            next.push(busy - binomial(busy, cfg.service_probs[i][j], &mut services));
        }
        Transition { next, cost }
    }
}

/// How each action-value regression is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VfaConfig {
    /// Number of sampled states `M`.
    pub n_states: usize,
    /// Steps simulated before the first state of each trajectory is kept.
    pub burn_in: usize,
    /// Steps between kept states.
    pub stride: usize,
    /// States kept per trajectory before restarting from the initial state.
    pub states_per_chain: usize,
    /// Rollouts averaged per (state, action) target.
    pub q_replications: usize,
    pub ridge: f64,
}

impl Default for VfaConfig {
    fn default() -> Self {
        Self { n_states: 1000, burn_in: 10, stride: 2, states_per_chain: 10, q_replications: 1, ridge: RIDGE }
    }
}

/// Fitted `θ^a` for every action of one class, with in-sample errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassQ {
    pub theta: Vec<Vec<f64>>,
    pub rmse: Vec<f64>,
}

/// On-policy states: trajectories from the initial state, kept after
/// `burn_in` steps and then every `stride` steps.
pub fn sample_states(env: &ClassEnv, policy: &LinearSoftmaxPolicy, vfa: &VfaConfig, seed: u64) -> Vec<Vec<u32>> {
    let mut out = Vec::with_capacity(vfa.n_states);
    let mut aux = vec![0.0; env.cfg.n_pools()];
    let per_chain = vfa.states_per_chain.max(1);
    let stride = vfa.stride.max(1);
    let mut chain = 0;
    while out.len() < vfa.n_states {
        let mut rng = rng_stream(seed, chain, Purpose::StateSample);
        let mut s = env.sample_initial(&mut rng);
        for t in 0..vfa.burn_in + stride * (per_chain - 1) + 1 {
            if t >= vfa.burn_in && (t - vfa.burn_in) % stride == 0 && out.len() < vfa.n_states {
                out.push(s.clone());
            }
            let a = policy.sample(&s, &mut rng);
            s = env.step(&s, a, &mut rng, &mut aux).next;
        }
        chain += 1;
    }
    out
}

/// Subproblem of one class, evaluated by simulation and regression.
pub struct ClassProblem<'a> {
    env: ClassEnv<'a>,
    vfa: VfaConfig,
    zeros: Vec<f64>,
    fits: Mutex<Vec<Vec<f64>>>,
}

impl<'a> ClassProblem<'a> {
    pub fn new(cfg: &'a QueueConfig, class: usize, vfa: VfaConfig) -> Self {
        Self { env: ClassEnv::new(cfg, class), vfa, zeros: vec![0.0; cfg.n_pools()], fits: Mutex::new(Vec::new()) }
    }

    pub fn env(&self) -> &ClassEnv<'a> {
        &self.env
    }

    pub fn initial_policy(&self) -> LinearSoftmaxPolicy {
        LinearSoftmaxPolicy::uniform(self.env.actions.len(), self.env.slice_len())
    }

    /// In-sample RMSE per action of every fit so far, in order.
    pub fn fit_history(&self) -> Vec<Vec<f64>> {
        self.fits.lock().expect("fit log").clone()
    }

    /// Regression of the Lagrangian action values on the quadratic features,
    /// one fit per action. All actions share the sampled states and the
    /// rollout streams (common random numbers), so the fitted differences
    /// between actions are far less noisy than the fits themselves.
    pub fn fit_q(
        &self,
        policy: &LinearSoftmaxPolicy,
        lambda: &[f64],
        horizon: usize,
        seed: u64,
    ) -> Result<(ClassQ, f64, f64), SolverError> {
        let states = sample_states(&self.env, policy, &self.vfa, derive_seed(seed, 1));
        let features: Vec<Vec<f64>> = states.iter().map(|s| slice_features(s)).collect();
        let mc = MCConfig::new(self.vfa.q_replications, horizon, derive_seed(seed, 2));
        let mut out = ClassQ { theta: Vec::new(), rmse: Vec::new() };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for a in 0..self.env.actions.len() {
            let queries: Vec<(Vec<u32>, usize)> = states.iter().map(|s| (s.clone(), a)).collect();
            let est = estimate_q(&self.env, policy, lambda, &queries, &mc).map_err(eval_error)?;
            let targets: Vec<f64> = est.iter().map(|e| e.mean).collect();
            for &y in &targets {
                lo = lo.min(y);
                hi = hi.max(y);
            }
            let fit = ridge_fit(&features, &targets, self.vfa.ridge);
            out.theta.push(fit.weights);
            out.rmse.push(fit.rmse);
        }
        self.fits.lock().expect("fit log").push(out.rmse.clone());
        Ok((out, lo, hi))
    }
}

fn eval_error(e: impl std::fmt::Display) -> SolverError {
    SolverError::Evaluation { iteration: 0, message: e.to_string() }
}

impl PrimalDualProblem for ClassProblem<'_> {
    type Policy = LinearSoftmaxPolicy;
    type QTable = ClassQ;

    fn thresholds(&self) -> &[f64] {
        &self.zeros
    }

    fn check_initial(&self, policy: &LinearSoftmaxPolicy) -> Result<(), SolverError> {
        if !policy.is_valid(self.env.actions.len(), feature_dim(self.env.slice_len())) {
            return Err(SolverError::Config(format!(
                "class {} policy needs {} finite weight vectors of length {}",
                self.env.class,
                self.env.actions.len(),
                feature_dim(self.env.slice_len())
            )));
        }
        Ok(())
    }

    /// Needs a Monte Carlo evaluator: its replications estimate the class's
    /// cost and link costs from the initial state, and its horizon truncates
    /// every rollout.
    fn evaluate(
        &self,
        policy: &LinearSoftmaxPolicy,
        lambda: &[f64],
        evaluator: &EvaluatorKind,
        seed: u64,
    ) -> Result<Evaluation<ClassQ>, SolverError> {
        let EvaluatorKind::MonteCarlo(mc) = evaluator else {
            return Err(SolverError::Config("queue subproblems are evaluated by simulation only".into()));
        };
        let costs =
            estimate_constraints(&self.env, policy, &MCConfig { seed: derive_seed(seed, 0), ..*mc }).map_err(eval_error)?;
        let (q, q_min, q_max) = self.fit_q(policy, lambda, mc.horizon, seed)?;
        Ok(Evaluation {
            q,
            objective: costs.objective.mean,
            constraints: costs.constraints.iter().map(|e| e.mean).collect(),
            se_objective: costs.objective.se,
            se_constraints: costs.constraints.iter().map(|e| e.se).collect(),
            q_min,
            q_max,
        })
    }

    fn improve(&self, policy: &LinearSoftmaxPolicy, q: &ClassQ, eta: f64) -> LinearSoftmaxPolicy {
        policy.improved(&q.theta, eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::config::CostRegime;

    #[test]
    fn zero_weights_are_uniform() {
        let p = LinearSoftmaxPolicy::uniform(5, 4);
        assert!(p.probabilities(&[3, 1, 0, 2]).iter().all(|x| (x - 0.2).abs() < 1e-15));
        assert_eq!(p.most_probable(&[3, 1, 0, 2]), 0);
    }

    #[test]
    fn improvement_favours_cheaper_actions() {
        let p = LinearSoftmaxPolicy::uniform(2, 2);
        // Q(s, 0) = 1, Q(s, 1) = 3 everywhere
        let theta = vec![vec![1.0, 0.0, 0.0, 0.0, 0.0], vec![3.0, 0.0, 0.0, 0.0, 0.0]];
        let q = p.improved(&theta, 0.5);
        let probs = q.probabilities(&[4, 2]);
        assert!((probs[0] / probs[1] - 1f64.exp()).abs() < 1e-12);
        assert_eq!(q.most_probable(&[4, 2]), 0);
    }

    #[test]
    fn class_env_respects_own_capacity_and_reports_link_costs() {
        let cfg = QueueConfig::scaled(CostRegime::Large);
        let env = ClassEnv::new(&cfg, 0);
        let mut rng = rng_stream(0, 0, Purpose::Custom(0));
        let mut aux = vec![0.0; 3];
        let s = vec![9, 1, 0, 0];
        // (1,2,3,-1): 3 to pool 1, 5 to pool 2, 1 to pool 3
        let tr = env.step(&s, 3, &mut rng, &mut aux);
        assert_eq!(aux, vec![4.0, 5.0, 1.0]);
        assert_eq!(tr.cost, 3.0 * 9.0 + 2.0 * 5.0 + 2.0 * 1.0);
        assert!(tr.next[1] <= 4 && tr.next[2] <= 5 && tr.next[3] <= 1);
    }

    #[test]
    fn sampled_states_are_reproducible() {
        let cfg = QueueConfig::scaled(CostRegime::Large);
        let env = ClassEnv::new(&cfg, 1);
        let p = LinearSoftmaxPolicy::uniform(5, 4);
        let vfa = VfaConfig { n_states: 37, ..VfaConfig::default() };
        let a = sample_states(&env, &p, &vfa, 4);
        assert_eq!(a.len(), 37);
        assert_eq!(a, sample_states(&env, &p, &vfa, 4));
        assert_ne!(a, sample_states(&env, &p, &vfa, 5));
    }
}
