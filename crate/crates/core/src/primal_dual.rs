//! The primal-dual solver: KL-regularized policy iteration on the Lagrangian
//! cost interleaved with projected dual subgradient ascent, returning the
//! step-size-weighted average of the iterates.
//!
//! The solver is generic over [`PrimalDualProblem`], which supplies policy
//! evaluation (exact or sampled) and the per-state softmax update for its own
//! policy representation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MixingPolicy, ModelError, StationaryPolicy};
use crate::monte_carlo::MCConfig;
use crate::rng::derive_seed;

/// Smallest probability kept after a softmax step.
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("evaluation failed at iteration {iteration}: {message}")]
    Evaluation { iteration: usize, message: String },
    #[error("policy error: {0}")]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Constant,
    InverseSqrt,
}

/// `η_m = base` or `η_m = base / √(m+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub kind: StepKind,
    pub base: f64,
}

impl StepSchedule {
    pub fn constant(base: f64) -> Self {
        Self { kind: StepKind::Constant, base }
    }
    pub fn inverse_sqrt(base: f64) -> Self {
        Self { kind: StepKind::InverseSqrt, base }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.base > 0.0 && self.base.is_finite() {
            Ok(())
        } else {
            Err(SolverError::Config(format!("step base must be positive, got {}", self.base)))
        }
    }

    pub fn eta(&self, m: usize) -> f64 {
        match self.kind {
            StepKind::Constant => self.base,
            StepKind::InverseSqrt => self.base / ((m + 1) as f64).sqrt(),
        }
    }

    /// `(Σ_{m<T} η_m, Σ_{m<T} η_m²)`.
    pub fn partial_sums(&self, t: usize) -> (f64, f64) {
        (0..t).fold((0.0, 0.0), |(s1, s2), m| {
            let e = self.eta(m);
            (s1 + e, s2 + e * e)
        })
    }
}

/// `Λ = {λ ≥ 0 : ‖λ‖ ≤ radius}` with `radius = M + r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualDomain {
    pub radius: f64,
    pub slack: f64,
}

impl DualDomain {
    /// Domain for a multiplier-norm bound `m_bound` and slack `r`.
    pub fn new(m_bound: f64, slack: f64) -> Result<Self, SolverError> {
        if !(slack > 0.0) || !(m_bound >= 0.0) || !m_bound.is_finite() {
            return Err(SolverError::Config(format!(
                "need M ≥ 0 and r > 0, got M={m_bound}, r={slack}"
            )));
        }
        Ok(Self { radius: m_bound + slack, slack })
    }

    pub fn contains(&self, lambda: &[f64]) -> bool {
        lambda.iter().all(|&l| l >= 0.0) && norm(lambda) <= self.radius + 1e-12
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean projection onto the nonnegative part of the ball: clip negative
/// entries, then shrink radially if outside.
pub fn project_lambda(v: &[f64], domain: &DualDomain) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    let n = norm(&out);
    if n > domain.radius {
        let f = domain.radius / n;
        out.iter_mut().for_each(|x| *x *= f);
    }
    out
}

/// Multiplier vector with its domain and the last unprojected step.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub domain: DualDomain,
    pub pre_projection: Vec<f64>,
}

impl DualState {
    pub fn new(lambda: Vec<f64>, domain: DualDomain) -> Result<Self, SolverError> {
        if !domain.contains(&lambda) {
            return Err(SolverError::Config(format!("initial lambda {lambda:?} is outside the dual domain")));
        }
        Ok(Self { pre_projection: lambda.clone(), lambda, domain })
    }
}

/// `λ' = Proj(λ + η g)`.
pub fn dual_update(state: &DualState, subgrad: &[f64], eta: f64) -> DualState {
    let pre: Vec<f64> = state.lambda.iter().zip(subgrad).map(|(l, g)| l + eta * g).collect();
    DualState { lambda: project_lambda(&pre, &state.domain), domain: state.domain, pre_projection: pre }
}

/// One state's softmax step: `p'(a) ∝ p(a) exp(-η q(a))`, computed in log
/// space with max subtraction and floored at [`PROB_FLOOR`].
pub fn softmax_row(p: &[f64], q: &[f64], eta: f64) -> Vec<f64> {
    let logits: Vec<f64> = p.iter().zip(q).map(|(&pi, &qa)| pi.max(PROB_FLOOR).ln() - eta * qa).collect();
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - mx).exp().max(PROB_FLOOR)).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    out
}

/// Per-state multiplicative-weights update of a stationary policy.
pub fn policy_update(q: &[Vec<f64>], policy: &StationaryPolicy, eta: f64) -> StationaryPolicy {
    let rows = policy.rows().iter().zip(q).map(|(p, qs)| softmax_row(p, qs, eta)).collect();
    StationaryPolicy::new(rows).expect("softmax rows are distributions")
}

/// `‖[D - q]⁺‖₂`.
pub fn violation_norm(d: &[f64], q: &[f64]) -> f64 {
    d.iter().zip(q).map(|(d, q)| (d - q).max(0.0).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Error, PartialEq)]
pub enum SlaterError {
    #[error("constraint {k} is not strictly satisfied (D_k - q_k = {gap})")]
    NotStrict { k: usize, gap: f64 },
    #[error("no constraints")]
    NoConstraints,
}

/// `-(C - c̃) / max_k (D_k - q_k)` for a strictly feasible policy.
pub fn slater_lambda_bound(c_tilde: f64, costs: (f64, &[f64]), q: &[f64]) -> Result<f64, SlaterError> {
    let (c, d) = costs;
    if d.is_empty() {
        return Err(SlaterError::NoConstraints);
    }
    let mut worst = f64::NEG_INFINITY;
    for (k, (dk, qk)) in d.iter().zip(q).enumerate() {
        let gap = dk - qk;
        if !(gap < 0.0) {
            return Err(SlaterError::NotStrict { k, gap });
        }
        worst = worst.max(gap);
    }
    Ok(-(c - c_tilde) / worst)
}

/// How policies are evaluated inside the loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvaluatorKind {
    Exact,
    /// The configuration's seed is replaced per iteration by one derived from
    /// the solver seed.
    MonteCarlo(MCConfig),
}

/// Everything the loop needs from one evaluation of `(π, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<Q> {
    /// Lagrangian action values (any per-state constant shift is harmless).
    pub q: Q,
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub se_objective: f64,
    pub se_constraints: Vec<f64>,
    /// Smallest and largest entry of the full Lagrangian action values
    /// (including any constant dropped from `q`), for the bound checks.
    pub q_min: f64,
    pub q_max: f64,
}

impl<Q> Evaluation<Q> {
    pub fn q_sup(&self) -> f64 {
        self.q_min.abs().max(self.q_max.abs())
    }
}

/// A problem the primal-dual loop can drive.
pub trait PrimalDualProblem: Sync {
    type Policy: Clone + Send + Sync;
    type QTable: Send + Sync;

    fn thresholds(&self) -> &[f64];
    /// Rejects initial policies the loop cannot start from (e.g. not full support).
    fn check_initial(&self, policy: &Self::Policy) -> Result<(), SolverError>;
    fn evaluate(
        &self,
        policy: &Self::Policy,
        lambda: &[f64],
        evaluator: &EvaluatorKind,
        seed: u64,
    ) -> Result<Evaluation<Self::QTable>, SolverError>;
    fn improve(&self, policy: &Self::Policy, q: &Self::QTable, eta: f64) -> Self::Policy;
}

#[derive(Debug, Clone)]
pub struct SolverConfig<P> {
    pub schedule: StepSchedule,
    pub iterations: usize,
    pub initial_policy: P,
    pub initial_lambda: Vec<f64>,
    pub domain: DualDomain,
    pub evaluator: EvaluatorKind,
    pub seed: u64,
}

/// One row of the solver trail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub m: usize,
    pub eta: f64,
    pub lambda: Vec<f64>,
    /// `C(π_m)`.
    pub objective: f64,
    /// `D(π_m)`.
    pub constraint_vals: Vec<f64>,
    /// `Σ_{t≤m} η̃_t C(π_t)`: the objective of the averaged policy so far.
    pub running_avg_objective: f64,
    /// `‖[Σ_{t≤m} η̃_t D(π_t) - q]⁺‖`: violation of the averaged policy.
    pub running_violation: f64,
    /// `Σ_{t≤m} η̃_t ‖[D(π_t) - q]⁺‖`: weighted mean of per-iterate violations.
    pub mean_iterate_violation: f64,
    pub se_objective: f64,
    pub se_constraints: Vec<f64>,
    /// `‖D(π_m) - q‖`.
    pub subgrad_norm: f64,
    pub q_sup: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput<P> {
    /// Iterates `π_0 … π_{T-1}` that make up the averaged policy.
    pub iterates: Vec<P>,
    /// `η̃_m = η_m / Σ η`.
    pub weights: Vec<f64>,
    /// `Σ η̃_m λ_m`.
    pub lambda_bar: Vec<f64>,
    pub trail: Vec<IterationRecord>,
    /// `π_T`, the policy after the last update.
    pub last_policy: P,
    pub last_lambda: Vec<f64>,
}

impl<P> RunOutput<P> {
    pub fn final_record(&self) -> &IterationRecord {
        self.trail.last().expect("trail is never empty")
    }
    pub fn max_subgrad_norm(&self) -> f64 {
        self.trail.iter().map(|r| r.subgrad_norm).fold(0.0, f64::max)
    }
    pub fn max_q_sup(&self) -> f64 {
        self.trail.iter().map(|r| r.q_sup).fold(0.0, f64::max)
    }
}

impl RunOutput<StationaryPolicy> {
    pub fn mixing_policy(&self) -> MixingPolicy {
        MixingPolicy::new(self.iterates.clone(), self.weights.clone()).expect("normalized weights")
    }
}

/// Runs `T = config.iterations` rounds. Round `m` evaluates `(π_m, λ_m)`,
/// records it, and forms `π_{m+1}`, `λ_{m+1}` with step `η_m`.
pub fn run<P: PrimalDualProblem>(
    problem: &P,
    config: &SolverConfig<P::Policy>,
) -> Result<RunOutput<P::Policy>, SolverError> {
    config.schedule.validate()?;
    if config.iterations == 0 {
        return Err(SolverError::Config("iterations must be positive".into()));
    }
    let q = problem.thresholds().to_vec();
    if config.initial_lambda.len() != q.len() {
        return Err(SolverError::Config(format!(
            "initial lambda has {} entries, problem has {} constraints",
            config.initial_lambda.len(),
            q.len()
        )));
    }
    problem.check_initial(&config.initial_policy)?;
    let mut dual = DualState::new(config.initial_lambda.clone(), config.domain)?;
    let mut policy = config.initial_policy.clone();

    let t_max = config.iterations;
    let mut iterates = Vec::with_capacity(t_max);
    let mut etas = Vec::with_capacity(t_max);
    let mut trail = Vec::with_capacity(t_max);
    let mut lambda_sum = vec![0.0; q.len()];
    let mut eta_sum = 0.0;
    let mut obj_sum = 0.0;
    let mut d_sum = vec![0.0; q.len()];
    let mut viol_sum = 0.0;

    for m in 0..t_max {
        let eta = config.schedule.eta(m);
        let seed = derive_seed(config.seed, m as u64);
        let ev = problem.evaluate(&policy, &dual.lambda, &config.evaluator, seed).map_err(|e| match e {
            SolverError::Evaluation { message, .. } => SolverError::Evaluation { iteration: m, message },
            other => SolverError::Evaluation { iteration: m, message: other.to_string() },
        })?;
        let subgrad: Vec<f64> = ev.constraints.iter().zip(&q).map(|(d, q)| d - q).collect();

        eta_sum += eta;
        obj_sum += eta * ev.objective;
        for (acc, d) in d_sum.iter_mut().zip(&ev.constraints) {
            *acc += eta * d;
        }
        for (acc, l) in lambda_sum.iter_mut().zip(&dual.lambda) {
            *acc += eta * l;
        }
        viol_sum += eta * violation_norm(&ev.constraints, &q);
        let avg_d: Vec<f64> = d_sum.iter().map(|x| x / eta_sum).collect();

        trail.push(IterationRecord {
            m,
            eta,
            lambda: dual.lambda.clone(),
            objective: ev.objective,
            constraint_vals: ev.constraints.clone(),
            running_avg_objective: obj_sum / eta_sum,
            running_violation: violation_norm(&avg_d, &q),
            mean_iterate_violation: viol_sum / eta_sum,
            se_objective: ev.se_objective,
            se_constraints: ev.se_constraints.clone(),
            subgrad_norm: norm(&subgrad),
            q_sup: ev.q_sup(),
        });

        let next = problem.improve(&policy, &ev.q, eta);
        iterates.push(std::mem::replace(&mut policy, next));
        etas.push(eta);
        dual = dual_update(&dual, &subgrad, eta);
    }

    let weights: Vec<f64> = etas.iter().map(|e| e / eta_sum).collect();
    Ok(RunOutput {
        iterates,
        weights,
        lambda_bar: lambda_sum.iter().map(|x| x / eta_sum).collect(),
        trail,
        last_policy: policy,
        last_lambda: dual.lambda,
    })
}

/// CSV with header `m,eta,lambda_1..K,objective,D_1..K,running_avg_objective,
/// running_violation,se_objective`. Floats use the shortest round-trip form,
/// so identical runs give identical bytes.
pub fn trail_to_csv(trail: &[IterationRecord]) -> String {
    let k = trail.first().map_or(0, |r| r.lambda.len());
    let mut out = String::from("m,eta");
    for i in 1..=k {
        let _ = write!(out, ",lambda_{i}");
    }
    out.push_str(",objective");
    for i in 1..=k {
        let _ = write!(out, ",D_{i}");
    }
    out.push_str(",running_avg_objective,running_violation,se_objective\n");
    for r in trail {
        let _ = write!(out, "{},{:?}", r.m, r.eta);
        for l in &r.lambda {
            let _ = write!(out, ",{l:?}");
        }
        let _ = write!(out, ",{:?}", r.objective);
        for d in &r.constraint_vals {
            let _ = write!(out, ",{d:?}");
        }
        let _ = writeln!(out, ",{:?},{:?},{:?}", r.running_avg_objective, r.running_violation, r.se_objective);
    }
    out
}

/// Constants entering the convergence bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremConstants {
    /// Bound on `‖∂_λ L‖` and `sup |Q|` along the run.
    pub g: f64,
    /// `Σ_{m<T} η_m ≥ κ1 √T` (decreasing steps only).
    pub kappa1: f64,
    /// `Σ_{m<T} η_m² ≤ κ2 log T` (decreasing steps only).
    pub kappa2: f64,
    /// `Φ^{π*}(π* ‖ π_0)`.
    pub phi0: f64,
    pub lambda_star_norm: f64,
    pub lambda0_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremBounds {
    pub violation: f64,
    pub gap_upper: f64,
    pub gap_lower: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("decreasing-step bounds need positive kappa1 and kappa2")]
    MissingKappa,
    #[error("decreasing-step bounds need T ≥ 2 (log T > 0)")]
    DegenerateHorizon,
    #[error("constants must be nonnegative and finite")]
    BadConstants,
}

/// `(κ1, κ2)` for a schedule over a grid of horizons:
/// `κ1 = min_T Σ η / √T`, `κ2 = max_T Σ η² / log T`.
pub fn schedule_kappas(schedule: &StepSchedule, horizons: &[usize]) -> (f64, f64) {
    let mut k1 = f64::INFINITY;
    let mut k2: f64 = 0.0;
    for &t in horizons.iter().filter(|&&t| t >= 2) {
        let (s1, s2) = schedule.partial_sums(t);
        k1 = k1.min(s1 / (t as f64).sqrt());
        k2 = k2.max(s2 / (t as f64).ln());
    }
    (k1, k2)
}

/// Right-hand sides of the violation and optimality-gap bounds after `t`
/// rounds with dual slack `r`.
pub fn theorem1_bounds(
    c: &TheoremConstants,
    schedule: &StepSchedule,
    t: usize,
    r: f64,
    discount: f64,
) -> Result<TheoremBounds, BoundsError> {
    let vals = [c.g, c.phi0, c.lambda_star_norm, c.lambda0_norm];
    if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(r > 0.0) {
        return Err(BoundsError::BadConstants);
    }
    let g2 = c.g * c.g;
    let one_m = 1.0 - discount;
    let tf = t as f64;
    let l0 = c.lambda0_norm * c.lambda0_norm / 2.0;
    match schedule.kind {
        StepKind::Constant => {
            let eta = schedule.base;
            let violation = (g2 + c.phi0 / one_m) / (2.0 * r * tf * eta)
                + (0.5 + 1.0 / (8.0 * one_m)) * g2 * eta / (2.0 * r);
            let gap_upper = (c.phi0 / one_m + l0) / (tf * eta) + 5.0 * g2 * eta / (8.0 * one_m);
            Ok(TheoremBounds { violation, gap_upper, gap_lower: -c.lambda_star_norm * violation })
        }
        StepKind::InverseSqrt => {
            if !(c.kappa1 > 0.0 && c.kappa2 > 0.0) || !c.kappa1.is_finite() || !c.kappa2.is_finite() {
                return Err(BoundsError::MissingKappa);
            }
            if t < 2 {
                return Err(BoundsError::DegenerateHorizon);
            }
            let log_t = tf.ln();
            let denom = one_m * c.kappa1 * tf.sqrt();
            let violation = (g2 * (1.0 + 0.625 * c.kappa2 * log_t) + c.phi0) / (2.0 * r * denom);
            let gap_upper = (0.625 * g2 * c.kappa2 * log_t + c.phi0 + l0) / denom;
            Ok(TheoremBounds { violation, gap_upper, gap_lower: -c.lambda_star_norm * violation })
        }
    }
}
