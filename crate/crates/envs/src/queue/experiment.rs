//! Training the decomposed primal-dual policy and comparing it with the
//! myopic benchmarks on the full system.

use cmdp_core::monte_carlo::{MCConfig, Welford};
use cmdp_core::primal_dual::{run, DualDomain, EvaluatorKind, IterationRecord, RunOutput, SolverConfig, StepSchedule};
use cmdp_core::rng::{rng_stream, Purpose, Stream};
use cmdp_core::weakly_coupled::{DecomposablePolicy, DecomposedProblem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::admission::feasibility_modification;
use super::config::{CostRegime, QueueConfig};
use super::dynamics::{check_assignment, period_cost, transition, zero_assignment, Assignment, QueueState};
use super::policy::{ClassProblem, LinearSoftmaxPolicy, VfaConfig};
use super::priority::{action_set, apply_priority, PriorityAction};
use super::transport::{benchmark_assignment, cmu_weights, max_pressure_weights};
use super::QueueError;

/// A scheduling rule for the full system. Returned assignments are checked
/// against the hard constraints before they are applied.
pub trait SchedulingPolicy: Sync {
    fn name(&self) -> String;
    fn assign(&self, cfg: &QueueConfig, state: &QueueState, actions: &mut Stream, admission: &mut Stream) -> Assignment;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    /// `ω_ij = h_i - r_ij`.
    ModifiedCMu,
    /// `ω_ij = h_i X_i - r_ij`.
    ModifiedMaxPressure,
}

impl SchedulingPolicy for Benchmark {
    fn name(&self) -> String {
        match self {
            Benchmark::ModifiedCMu => "modified-cmu".into(),
            Benchmark::ModifiedMaxPressure => "modified-max-pressure".into(),
        }
    }
    fn assign(&self, cfg: &QueueConfig, state: &QueueState, _: &mut Stream, _: &mut Stream) -> Assignment {
        let w = match self {
            Benchmark::ModifiedCMu => cmu_weights(cfg),
            Benchmark::ModifiedMaxPressure => max_pressure_weights(cfg, state),
        };
        benchmark_assignment(cfg, state, &w)
    }
}

/// Per-class priority policies run side by side: each class draws a rule
/// from its own policy, requests servers greedily from what is free in the
/// whole system, and conflicts are settled by [`feasibility_modification`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityPolicy {
    pub classes: Vec<LinearSoftmaxPolicy>,
    pub actions: Vec<Vec<PriorityAction>>,
}

impl PriorityPolicy {
    pub fn new(cfg: &QueueConfig, classes: Vec<LinearSoftmaxPolicy>) -> Self {
        Self { actions: (0..cfg.n_classes()).map(|i| action_set(cfg, i)).collect(), classes }
    }

    /// Requests before admission control.
    pub fn requests(&self, cfg: &QueueConfig, state: &QueueState, rng: &mut Stream) -> Assignment {
        let free = state.free_capacity(cfg);
        (0..cfg.n_classes())
            .map(|i| {
                let a = self.classes[i].sample(&state.class_slice(i), rng);
                apply_priority(state.queues[i], &self.actions[i][a], &free)
            })
            .collect()
    }
}

impl SchedulingPolicy for PriorityPolicy {
    fn name(&self) -> String {
        "primal-dual".into()
    }
    fn assign(&self, cfg: &QueueConfig, state: &QueueState, actions: &mut Stream, admission: &mut Stream) -> Assignment {
        let req = self.requests(cfg, state, actions);
        feasibility_modification(cfg, state, &req, admission)
    }
}

/// Discounted cost of a policy on the full system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub policy: String,
    /// `(1-γ) Σ_{t<H} γ^t c_t`, averaged over replications.
    pub mean: f64,
    pub se: f64,
    pub replications: usize,
    /// Steps whose proposed assignment broke a hard constraint (the step
    /// then assigns nobody).
    pub violations: usize,
    pub steps: usize,
}

/// `replications` independent paths of `cfg.horizon` periods from the
/// initial state. Replication `r` draws arrivals, services, action choices
/// and admissions from its own streams, so different policies evaluated
/// with the same seed face the same arrival stream.
pub fn evaluate_policy<P: SchedulingPolicy + ?Sized>(
    cfg: &QueueConfig,
    policy: &P,
    replications: usize,
    seed: u64,
) -> PolicyEvaluation {
    let g = cfg.discount;
    let results: Vec<(f64, usize)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let r = r as u64;
            let mut arrivals = rng_stream(seed, r, Purpose::Arrival);
            let mut services = rng_stream(seed, r, Purpose::Service);
            let mut choices = rng_stream(seed, r, Purpose::ActionChoice);
            let mut admission = rng_stream(seed, r, Purpose::Admission);
            let mut state = QueueState::initial(cfg);
            let mut total = 0.0;
            let mut disc = 1.0 - g;
            let mut violations = 0;
            for _ in 0..cfg.horizon {
                let mut u = policy.assign(cfg, &state, &mut choices, &mut admission);
                if check_assignment(cfg, &state, &u).is_err() {
                    violations += 1;
                    u = zero_assignment(cfg);
                }
                total += disc * period_cost(cfg, &state, &u);
                disc *= g;
                state = transition(cfg, &state, &u, &mut arrivals, &mut services).expect("checked assignment");
                debug_assert!(state.check(cfg).is_ok());
            }
            (total, violations)
        })
        .collect();
    let mut acc = Welford::default();
    let mut violations = 0;
    for (x, v) in &results {
        acc.push(*x);
        violations += v;
    }
    let e = acc.estimate();
    PolicyEvaluation {
        policy: policy.name(),
        mean: e.mean,
        se: e.se,
        replications,
        violations,
        steps: replications * cfg.horizon,
    }
}

/// Training and evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueExperiment {
    pub config: QueueConfig,
    pub vfa: VfaConfig,
    pub iterations: usize,
    /// Constant primal and dual step.
    pub step: f64,
    pub initial_lambda: Vec<f64>,
    /// Radius of the ball the multipliers are projected onto.
    pub dual_radius: f64,
    /// Replications per iteration for each class's cost and link-cost
    /// estimates (the dual subgradient).
    pub training_replications: usize,
    /// Replications for the final comparison on the full system.
    pub evaluation_replications: usize,
    pub seed: u64,
}

impl QueueExperiment {
    /// Full-size study: 30 iterations at step 0.1 from `λ = (10, 10, 10)`,
    /// 1000 regression states, 500 evaluation replications.
    pub fn standard(regime: CostRegime, discount: f64, seed: u64) -> Self {
        Self {
            config: QueueConfig::standard(regime, discount),
            vfa: VfaConfig::default(),
            iterations: 30,
            step: 0.1,
            initial_lambda: vec![10.0; 3],
            dual_radius: 51.0,
            training_replications: 200,
            evaluation_replications: 500,
            seed,
        }
    }

    /// The tenfold smaller system: 10 iterations, 200 evaluation
    /// replications.
    pub fn scaled(regime: CostRegime, seed: u64) -> Self {
        Self {
            config: QueueConfig::scaled(regime),
            vfa: VfaConfig { q_replications: 2, ..VfaConfig::default() },
            iterations: 10,
            evaluation_replications: 200,
            ..Self::standard(regime, 0.9, seed)
        }
    }

    pub fn validate(&self) -> Result<(), QueueError> {
        self.config.validate()?;
        let bad = |m: &str| Err(QueueError::Config(m.into()));
        if self.initial_lambda.len() != self.config.n_pools() {
            return bad("initial_lambda needs one entry per pool");
        }
        if self.iterations == 0 || self.training_replications == 0 || self.evaluation_replications == 0 {
            return bad("iterations and replication counts must be positive");
        }
        if self.vfa.n_states < super::vfa::feature_dim(self.config.n_pools() + 1) {
            return bad("the regression needs at least as many states as features");
        }
        if !(self.step > 0.0) {
            return bad("step must be positive");
        }
        Ok(())
    }
}

/// Outcome of [`train`].
#[derive(Debug, Clone)]
pub struct QueueTraining {
    pub output: RunOutput<DecomposablePolicy<LinearSoftmaxPolicy>>,
    /// In-sample regression RMSE per iteration, class and action.
    pub fit_rmse: Vec<Vec<Vec<f64>>>,
}

impl QueueTraining {
    pub fn trail(&self) -> &[IterationRecord] {
        &self.output.trail
    }
    /// The deployed policy: the last iterate.
    pub fn final_policy(&self, cfg: &QueueConfig) -> PriorityPolicy {
        PriorityPolicy::new(cfg, self.output.last_policy.parts.clone())
    }
}

/// Decomposed primal-dual training, one subproblem per class, with the
/// pool capacities as link thresholds.
pub fn train(exp: &QueueExperiment) -> Result<QueueTraining, QueueError> {
    exp.validate()?;
    let cfg = &exp.config;
    let subs: Vec<ClassProblem> = (0..cfg.n_classes()).map(|i| ClassProblem::new(cfg, i, exp.vfa)).collect();
    let initial = DecomposablePolicy { parts: subs.iter().map(ClassProblem::initial_policy).collect() };
    let thresholds = cfg.pool_sizes.iter().map(|&n| n as f64).collect();
    let problem = DecomposedProblem::new(subs, thresholds);
    let output = run(
        &problem,
        &SolverConfig {
            schedule: StepSchedule::constant(exp.step),
            iterations: exp.iterations,
            initial_policy: initial,
            initial_lambda: exp.initial_lambda.clone(),
            domain: DualDomain { radius: exp.dual_radius, slack: 1.0 },
            evaluator: EvaluatorKind::MonteCarlo(MCConfig::new(exp.training_replications, cfg.horizon, exp.seed)),
            seed: exp.seed,
        },
    )?;
    let histories: Vec<Vec<Vec<f64>>> = problem.subs().iter().map(ClassProblem::fit_history).collect();
    let fit_rmse = (0..exp.iterations).map(|m| histories.iter().map(|h| h[m].clone()).collect()).collect();
    Ok(QueueTraining { output, fit_rmse })
}

/// Everything one study produces.
#[derive(Debug, Clone)]
pub struct QueueReport {
    pub training: QueueTraining,
    /// Benchmarks first, then the trained policy; all on the same streams.
    pub evaluations: Vec<PolicyEvaluation>,
}

impl QueueReport {
    pub fn evaluation(&self, name: &str) -> Option<&PolicyEvaluation> {
        self.evaluations.iter().find(|e| e.policy == name)
    }
}

/// Trains, then evaluates the modified cμ-rule, the modified max-pressure
/// rule and the trained policy on the full system.
pub fn run_queue_experiment(exp: &QueueExperiment) -> Result<QueueReport, QueueError> {
    let training = train(exp)?;
    let cfg = &exp.config;
    let eval_seed = cmdp_core::rng::derive_seed(exp.seed, u64::MAX);
    let reps = exp.evaluation_replications;
    let trained = training.final_policy(cfg);
    let policies: [&dyn SchedulingPolicy; 3] = [&Benchmark::ModifiedCMu, &Benchmark::ModifiedMaxPressure, &trained];
    let evaluations = policies.iter().map(|p| evaluate_policy(cfg, *p, reps, eval_seed)).collect();
    Ok(QueueReport { training, evaluations })
}

/// CSV `policy,discount,mean,se,replications,violations`.
pub fn evaluations_csv(discount: f64, evals: &[PolicyEvaluation]) -> String {
    let mut out = String::from("policy,discount,mean,se,replications,violations\n");
    for e in evals {
        out.push_str(&format!("{},{:?},{:?},{:?},{},{}\n", e.policy, discount, e.mean, e.se, e.replications, e.violations));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmarks_never_violate_constraints() {
        let cfg = QueueConfig::scaled(CostRegime::Large);
        for b in [Benchmark::ModifiedCMu, Benchmark::ModifiedMaxPressure] {
            let e = evaluate_policy(&cfg, &b, 20, 1);
            assert_eq!(e.violations, 0);
            assert!(e.mean > 0.0 && e.se > 0.0);
        }
    }

    #[test]
    fn evaluation_is_reproducible() {
        let cfg = QueueConfig::scaled(CostRegime::Small);
        let p = PriorityPolicy::new(&cfg, (0..3).map(|_| LinearSoftmaxPolicy::uniform(5, 4)).collect());
        let a = evaluate_policy(&cfg, &p, 10, 3);
        assert_eq!(a, evaluate_policy(&cfg, &p, 10, 3));
        assert_ne!(a.mean, evaluate_policy(&cfg, &p, 10, 4).mean);
        assert_eq!(a.violations, 0);
    }
}
