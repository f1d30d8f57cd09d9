//! Sampling-based estimates of Q-values and discounted costs through a
//! generative environment.
//!
//! Every estimate is `(1-γ) Σ_{t<H} γ^t cost_t` averaged over independent
//! replications. Each query owns one random stream; replications run in
//! order on that stream, so results are bit-identical regardless of how the
//! queries are spread across worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{StationaryPolicy, TabularCmdp};
use crate::rng::{derive_seed, rng_stream, Purpose, Stream};

/// One sampled transition; auxiliary costs are written to a caller buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub next: S,
    pub cost: f64,
}

/// A simulator that can be started anywhere.
pub trait Environment: Sync {
    type State: Clone + Send + Sync;

    fn discount(&self) -> f64;
    fn thresholds(&self) -> &[f64];
    fn n_constraints(&self) -> usize {
        self.thresholds().len()
    }
    /// Strict lower bound on every cost the environment can emit.
    fn cost_lower_bound(&self) -> f64;
    fn sample_initial(&self, rng: &mut Stream) -> Self::State;
    fn n_actions(&self, state: &Self::State) -> usize;
    /// Samples one step, writing `d_1..d_K` into `aux`.
    fn step(
        &self,
        state: &Self::State,
        action: usize,
        rng: &mut Stream,
        aux: &mut [f64],
    ) -> Transition<Self::State>;
}

/// A (possibly randomized) decision rule over an environment's states.
pub trait ActionSampler<S>: Sync {
    fn sample_action(&self, state: &S, rng: &mut Stream) -> usize;
}

/// Stationary policy with per-state cumulative tables for fast sampling.
#[derive(Debug, Clone)]
pub struct TabularSampler {
    cumulative: Vec<Vec<f64>>,
}

impl TabularSampler {
    pub fn new(policy: &StationaryPolicy) -> Self {
        let cumulative = policy
            .rows()
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Self { cumulative }
    }
}

/// Index of the first cumulative entry exceeding `u` (last index as fallback
/// for rows that sum to slightly less than one).
pub fn sample_cumulative(cumulative: &[f64], u: f64) -> usize {
    let i = cumulative.partition_point(|&c| c <= u);
    i.min(cumulative.len() - 1)
}

impl ActionSampler<usize> for TabularSampler {
    fn sample_action(&self, state: &usize, rng: &mut Stream) -> usize {
        let u: f64 = rng.random();
        sample_cumulative(&self.cumulative[*state], u)
    }
}

impl ActionSampler<usize> for StationaryPolicy {
    fn sample_action(&self, state: &usize, rng: &mut Stream) -> usize {
        let u: f64 = rng.random();
        let row = self.row(*state);
        let mut acc = 0.0;
        for (a, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        row.len() - 1
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum McError {
    #[error("replications must be positive")]
    NoReplications,
    #[error("horizon must be positive")]
    NoHorizon,
    #[error("truncation bias bound {bound:e} exceeds tolerance {tol:e}")]
    TruncationBias { bound: f64, tol: f64 },
    #[error("antithetic sampling is not supported by these estimators")]
    AntitheticUnsupported,
    #[error("lambda has {got} entries, environment has {expected} constraints")]
    LambdaLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub replications: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Reserved for antithetic pairing. Environments draw through opaque
    /// streams, so the estimators reject `true` instead of silently ignoring it.
    #[serde(default)]
    pub antithetic: bool,
}

impl MCConfig {
    pub fn new(replications: usize, horizon: usize, seed: u64) -> Self {
        Self { replications, horizon, seed, antithetic: false }
    }

    /// Horizon at which `γ^H` drops to `target` (1e-4 by default).
    pub fn default_horizon(discount: f64, target: f64) -> usize {
        (target.ln() / discount.ln()).ceil().max(1.0) as usize
    }

    /// Bound on `|truncated - full|` for per-step costs with absolute value
    /// at most `cost_range`: the tail `(1-γ) Σ_{t≥H} γ^t |c|` is at most
    /// `γ^H · cost_range`.
    pub fn truncation_bias_bound(&self, discount: f64, cost_range: f64) -> f64 {
        discount.powi(self.horizon as i32) * cost_range
    }

    fn check_basic(&self) -> Result<(), McError> {
        if self.replications == 0 {
            return Err(McError::NoReplications);
        }
        if self.horizon == 0 {
            return Err(McError::NoHorizon);
        }
        if self.antithetic {
            return Err(McError::AntitheticUnsupported);
        }
        Ok(())
    }

    pub fn validate(&self, discount: f64, cost_range: f64, tol: f64) -> Result<(), McError> {
        self.check_basic()?;
        let bound = self.truncation_bias_bound(discount, cost_range);
        if bound > tol {
            return Err(McError::TruncationBias { bound, tol });
        }
        Ok(())
    }

    /// The same configuration with a seed derived for outer iteration `m`.
    pub fn for_iteration(&self, m: usize) -> Self {
        Self { seed: derive_seed(self.seed, m as u64), ..*self }
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// Running mean / variance (Welford), folded in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }
    pub fn count(&self) -> usize {
        self.n
    }
    pub fn estimate(&self) -> Estimate {
        let se = if self.n > 1 {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean: self.mean, se }
    }
}

/// Discounted, normalized cost of one path of length `horizon` starting
/// with the forced `first` action (if any), then following `policy`.
/// Adds the per-component totals `(c, d_1..d_K)` into `totals`.
fn rollout<E: Environment, P: ActionSampler<E::State> + ?Sized>(
    env: &E,
    policy: &P,
    start: E::State,
    first: Option<usize>,
    horizon: usize,
    rng: &mut Stream,
    totals: &mut [f64],
) {
    let g = env.discount();
    let mut disc = 1.0 - g;
    let mut s = start;
    let mut aux = vec![0.0; env.n_constraints()];
    for t in 0..horizon {
        let a = match (t, first) {
            (0, Some(a)) => a,
            _ => policy.sample_action(&s, rng),
        };
        let tr = env.step(&s, a, rng, &mut aux);
        totals[0] += disc * tr.cost;
        for (k, d) in aux.iter().enumerate() {
            totals[1 + k] += disc * d;
        }
        disc *= g;
        s = tr.next;
    }
}

/// Q-value estimates of the Lagrangian cost `c + λ·(d - q)` at each query.
pub fn estimate_q<E, P>(
    env: &E,
    policy: &P,
    lambda: &[f64],
    queries: &[(E::State, usize)],
    cfg: &MCConfig,
) -> Result<Vec<Estimate>, McError>
where
    E: Environment,
    P: ActionSampler<E::State> + ?Sized,
{
    cfg.check_basic()?;
    let k = env.n_constraints();
    if lambda.len() != k {
        return Err(McError::LambdaLength { expected: k, got: lambda.len() });
    }
    let shift: f64 = lambda.iter().zip(env.thresholds()).map(|(l, q)| l * q).sum();
    // (1-γ) Σ_{t<H} γ^t = 1 - γ^H: the threshold term is deterministic
    let shift = shift * (1.0 - env.discount().powi(cfg.horizon as i32));
    let out = queries
        .par_iter()
        .enumerate()
        .map(|(i, (s, a))| {
            let mut rng = rng_stream(cfg.seed, i as u64, Purpose::QRollout);
            let mut acc = Welford::default();
            let mut totals = vec![0.0; 1 + k];
            for _ in 0..cfg.replications {
                totals.iter_mut().for_each(|x| *x = 0.0);
                rollout(env, policy, s.clone(), Some(*a), cfg.horizon, &mut rng, &mut totals);
                let lag = totals[0] + lambda.iter().zip(&totals[1..]).map(|(l, d)| l * d).sum::<f64>();
                acc.push(lag - shift);
            }
            acc.estimate()
        })
        .collect();
    Ok(out)
}

/// Estimates of the objective and each constraint value from `μ0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimates {
    pub objective: Estimate,
    pub constraints: Vec<Estimate>,
}

/// Discounted objective `C` and constraint values `D_k` from `μ0`. The
/// replications are split into `chunks` independent streams (one per chunk)
/// so they can run on several workers; the fold over chunks is ordered.
pub fn estimate_constraints<E, P>(env: &E, policy: &P, cfg: &MCConfig) -> Result<CostEstimates, McError>
where
    E: Environment,
    P: ActionSampler<E::State> + ?Sized,
{
    cfg.check_basic()?;
    let k = env.n_constraints();
    const CHUNK: usize = 64;
    let n_chunks = cfg.replications.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<Vec<f64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_stream(cfg.seed, c as u64, Purpose::ConstraintRollout);
            let reps = CHUNK.min(cfg.replications - c * CHUNK);
            (0..reps)
                .map(|_| {
                    let mut totals = vec![0.0; 1 + k];
                    let s0 = env.sample_initial(&mut rng);
                    rollout(env, policy, s0, None, cfg.horizon, &mut rng, &mut totals);
                    totals
                })
                .collect()
        })
        .collect();
    let mut acc = vec![Welford::default(); 1 + k];
    for totals in per_chunk.iter().flatten() {
        for (w, &x) in acc.iter_mut().zip(totals) {
            w.push(x);
        }
    }
    Ok(CostEstimates {
        objective: acc[0].estimate(),
        constraints: acc[1..].iter().map(Welford::estimate).collect(),
    })
}

/// A tabular CMDP as a generative environment over state indices.
#[derive(Debug, Clone)]
pub struct TabularEnv<'a> {
    cmdp: &'a TabularCmdp,
    init_cumulative: Vec<f64>,
    kernel_cumulative: Vec<Vec<f64>>,
}

impl<'a> TabularEnv<'a> {
    pub fn new(cmdp: &'a TabularCmdp) -> Self {
        let cum = |row: &[f64]| {
            let mut acc = 0.0;
            row.iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect::<Vec<f64>>()
        };
        let kernel_cumulative = (0..cmdp.n_states())
            .flat_map(|s| (0..cmdp.n_actions(s)).map(move |a| (s, a)))
            .map(|(s, a)| cum(cmdp.kernel_row(s, a)))
            .collect();
        Self { cmdp, init_cumulative: cum(cmdp.init_dist()), kernel_cumulative }
    }

    pub fn cmdp(&self) -> &TabularCmdp {
        self.cmdp
    }
}

impl Environment for TabularEnv<'_> {
    type State = usize;

    fn discount(&self) -> f64 {
        self.cmdp.discount()
    }
    fn thresholds(&self) -> &[f64] {
        self.cmdp.thresholds()
    }
    fn cost_lower_bound(&self) -> f64 {
        self.cmdp.cost_lower_bound()
    }
    fn sample_initial(&self, rng: &mut Stream) -> usize {
        sample_cumulative(&self.init_cumulative, rng.random())
    }
    fn n_actions(&self, state: &usize) -> usize {
        self.cmdp.n_actions(*state)
    }
    fn step(&self, state: &usize, action: usize, rng: &mut Stream, aux: &mut [f64]) -> Transition<usize> {
        let p = self.cmdp.pair(*state, action);
        let next = sample_cumulative(&self.kernel_cumulative[p], rng.random());
        aux.copy_from_slice(self.cmdp.aux(*state, action));
        Transition { next, cost: self.cmdp.cost(*state, action) }
    }
}

/// All state-action pairs of a tabular environment, in flat pair order.
pub fn all_pairs(cmdp: &TabularCmdp) -> Vec<(usize, usize)> {
    (0..cmdp.n_states())
        .flat_map(|s| (0..cmdp.n_actions(s)).map(move |a| (s, a)))
        .collect()
}
