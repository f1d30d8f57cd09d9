//! Multi-product newsvendor with a shared warehouse budget.
//!
//! Each product `i` carries an integer inventory level `s_i` (negative values
//! are backlog) truncated to `[lower, upper]`. In every period the planner
//! orders `a_i ≥ 0` units, delivered at once, then demand `w_i ~ F_i` is
//! realized. Costs are holding `h_i` per unit left over and backlog `b_i` per
//! unit owed; demand that would push the backlog below `lower` is lost at no
//! cost. Stock on hand after ordering, `[s_i + a_i]⁺`, uses `v_i` units of a
//! shared resource; the discounted resource use is capped by `q`.
//!
//! Products only interact through that budget, so the problem is a weakly
//! coupled CMDP with one subproblem per product.

use cmdp_core::evaluator::TabularProblem;
use cmdp_core::exact::costs_of_policy;
use cmdp_core::model::{CmdpParts, ModelError, StationaryPolicy, TabularCmdp};
use cmdp_core::monte_carlo::{sample_cumulative, Environment, Transition};
use cmdp_core::primal_dual::{
    run, slater_lambda_bound, DualDomain, EvaluatorKind, IterationRecord, RunOutput, SolverConfig, SolverError,
    StepSchedule,
};
use cmdp_core::rng::Stream;
use cmdp_core::weakly_coupled::{CoupledError, DecomposablePolicy, DecomposedProblem, WeaklyCoupledCmdp};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Strict lower bound on every per-period cost (all costs are nonnegative).
const COST_FLOOR: f64 = -1.0;

/// Largest joint state-action count [`build_tabular`] will enumerate.
pub const MAX_JOINT_PAIRS: usize = 100_000;

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("invalid inventory configuration: {0}")]
    Config(String),
    #[error("product {product}: order {order} at level {level} exceeds the feasible range 0..={max}")]
    InfeasibleAction { product: usize, level: i64, order: i64, max: i64 },
    #[error("product {product}: level {level} outside [{lower}, {upper}]")]
    OutOfBounds { product: usize, level: i64, lower: i64, upper: i64 },
    #[error("joint instance has {pairs} state-action pairs, limit is {limit}")]
    TooLarge { pairs: usize, limit: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Coupled(#[from] CoupledError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryConfig {
    /// `demand_pmfs[i][w]` is the probability that product `i` sees demand `w`.
    pub demand_pmfs: Vec<Vec<f64>>,
    pub holding: Vec<f64>,
    pub backlog: Vec<f64>,
    pub resource: Vec<f64>,
    pub budget: f64,
    pub discount: f64,
    /// Inclusive `(lower, upper)` bounds on each inventory level.
    pub state_bounds: (i64, i64),
    /// Optional per-product cap on a single order, on top of the implicit
    /// cap `upper - s` that keeps post-order stock within bounds.
    #[serde(default)]
    pub max_order: Option<Vec<i64>>,
    /// Starting levels (deterministic).
    #[serde(default)]
    pub initial_levels: Option<Vec<i64>>,
}

fn uniform_pmf(lo: usize, hi: usize) -> Vec<f64> {
    let mut p = vec![0.0; hi + 1];
    let mass = 1.0 / (hi - lo + 1) as f64;
    p[lo..=hi].iter_mut().for_each(|x| *x = mass);
    p
}

impl InventoryConfig {
    /// Two products, demand uniform on `{1, …, 10}`, levels in `[-10, 10]`,
    /// `h = (1, 2)`, `b = (2, 3)`, `v = (1.5, 1)`, `q = 10`, `γ = 0.75`,
    /// starting from zero stock.
    pub fn reference() -> Self {
        Self {
            demand_pmfs: vec![uniform_pmf(1, 10), uniform_pmf(1, 10)],
            holding: vec![1.0, 2.0],
            backlog: vec![2.0, 3.0],
            resource: vec![1.5, 1.0],
            budget: 10.0,
            discount: 0.75,
            state_bounds: (-10, 10),
            max_order: None,
            initial_levels: None,
        }
    }

    /// The reference instance shrunk to levels in `[-3, 3]` and demand
    /// uniform on `{0, 1, 2}`, small enough for an explicit joint model.
    pub fn reduced() -> Self {
        Self {
            demand_pmfs: vec![uniform_pmf(0, 2), uniform_pmf(0, 2)],
            state_bounds: (-3, 3),
            ..Self::reference()
        }
    }

    pub fn n_products(&self) -> usize {
        self.demand_pmfs.len()
    }

    pub fn n_levels(&self) -> usize {
        (self.state_bounds.1 - self.state_bounds.0 + 1) as usize
    }

    pub fn initial_levels(&self) -> Vec<i64> {
        self.initial_levels.clone().unwrap_or_else(|| vec![0; self.n_products()])
    }

    pub fn validate(&self) -> Result<(), InventoryError> {
        let bad = |m: String| Err(InventoryError::Config(m));
        let n = self.n_products();
        if n == 0 {
            return bad("at least one product is required".into());
        }
        for (name, v) in [("holding", &self.holding), ("backlog", &self.backlog), ("resource", &self.resource)] {
            if v.len() != n {
                return bad(format!("{name} has {} entries for {n} products", v.len()));
            }
            if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return bad(format!("{name} costs must be positive"));
            }
        }
        for (i, p) in self.demand_pmfs.iter().enumerate() {
            if p.iter().any(|x| !(*x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad(format!("demand pmf of product {i} is not a distribution"));
            }
        }
        let (lo, hi) = self.state_bounds;
        if lo >= hi {
            return bad(format!("state bounds ({lo}, {hi}) are empty"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad(format!("discount {} outside (0, 1)", self.discount));
        }
        if !(self.budget > 0.0) {
            return bad("budget must be positive".into());
        }
        if let Some(m) = &self.max_order {
            if m.len() != n || m.iter().any(|&x| x < 0) {
                return bad("max_order needs one nonnegative cap per product".into());
            }
        }
        let init = self.initial_levels();
        if init.len() != n {
            return bad("initial_levels needs one entry per product".into());
        }
        for (i, &s) in init.iter().enumerate() {
            self.check_level(i, s)?;
        }
        Ok(())
    }

    fn check_level(&self, product: usize, level: i64) -> Result<(), InventoryError> {
        let (lower, upper) = self.state_bounds;
        if level < lower || level > upper {
            return Err(InventoryError::OutOfBounds { product, level, lower, upper });
        }
        Ok(())
    }

    /// Largest feasible order for product `i` at `level`.
    pub fn max_feasible_order(&self, product: usize, level: i64) -> i64 {
        let room = self.state_bounds.1 - level;
        match &self.max_order {
            Some(caps) => room.min(caps[product]),
            None => room,
        }
    }

    fn check_action(&self, product: usize, level: i64, order: i64) -> Result<(), InventoryError> {
        self.check_level(product, level)?;
        let max = self.max_feasible_order(product, level);
        if order < 0 || order > max {
            return Err(InventoryError::InfeasibleAction { product, level, order, max });
        }
        Ok(())
    }
}

/// Next level of one product: `max(s + a - w, lower)`.
pub fn transition(cfg: &InventoryConfig, product: usize, level: i64, order: i64, demand: i64) -> Result<i64, InventoryError> {
    cfg.check_action(product, level, order)?;
    Ok(next_level(cfg.state_bounds.0, level, order, demand))
}

fn next_level(lower: i64, level: i64, order: i64, demand: i64) -> i64 {
    (level + order - demand).max(lower)
}

/// Realized cost of one product: holding on leftover stock, backlog on units
/// owed after the period. Units beyond the backlog floor are lost uncharged.
fn product_cost(cfg: &InventoryConfig, product: usize, level: i64, order: i64, demand: i64) -> f64 {
    let net = level + order - demand;
    let held = net.max(0);
    let owed = (-net.max(cfg.state_bounds.0)).max(0);
    cfg.holding[product] * held as f64 + cfg.backlog[product] * owed as f64
}

/// Resource use of one product after ordering: `v_i [s_i + a_i]⁺`.
fn product_resource(cfg: &InventoryConfig, product: usize, level: i64, order: i64) -> f64 {
    cfg.resource[product] * (level + order).max(0) as f64
}

/// Realized period cost and budget usage for all products.
pub fn step_costs(cfg: &InventoryConfig, levels: &[i64], orders: &[i64], demands: &[i64]) -> Result<(f64, f64), InventoryError> {
    let n = cfg.n_products();
    if levels.len() != n || orders.len() != n || demands.len() != n {
        return Err(InventoryError::Config(format!("expected {n} entries per vector")));
    }
    let mut c = 0.0;
    let mut d = 0.0;
    for i in 0..n {
        cfg.check_action(i, levels[i], orders[i])?;
        c += product_cost(cfg, i, levels[i], orders[i], demands[i]);
        d += product_resource(cfg, i, levels[i], orders[i]);
    }
    Ok((c, d))
}

/// One product as a CMDP over level indices `s - lower`, with action index
/// equal to the order size, expected one-period costs, and the product's
/// resource use as its single auxiliary cost. Thresholds are zero: the
/// budget is shared and lives on the coupled problem.
pub fn product_cmdp(cfg: &InventoryConfig, product: usize) -> Result<TabularCmdp, InventoryError> {
    cfg.validate()?;
    let (lower, upper) = cfg.state_bounds;
    let n = cfg.n_levels();
    let pmf = &cfg.demand_pmfs[product];
    let mut kernel = Vec::with_capacity(n);
    let mut cost = Vec::with_capacity(n);
    let mut aux = Vec::with_capacity(n);
    for level in lower..=upper {
        let max = cfg.max_feasible_order(product, level);
        let mut kr = Vec::new();
        let mut cr = Vec::new();
        let mut ar = Vec::new();
        for order in 0..=max {
            let mut row = vec![0.0; n];
            let mut c = 0.0;
            for (w, &p) in pmf.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let w = w as i64;
                row[(next_level(lower, level, order, w) - lower) as usize] += p;
                c += p * product_cost(cfg, product, level, order, w);
            }
            kr.push(row);
            cr.push(c);
            ar.push(vec![product_resource(cfg, product, level, order)]);
        }
        kernel.push(kr);
        cost.push(cr);
        aux.push(ar);
    }
    let mut init = vec![0.0; n];
    init[(cfg.initial_levels()[product] - lower) as usize] = 1.0;
    Ok(TabularCmdp::new(CmdpParts {
        kernel,
        cost,
        aux_costs: aux,
        thresholds: vec![0.0],
        discount: cfg.discount,
        init_dist: init,
        cost_lower_bound: COST_FLOOR,
    })?)
}

/// The instance as a weakly coupled CMDP: one subproblem per product, the
/// budget as the single linking threshold.
pub fn decompose(cfg: &InventoryConfig) -> Result<WeaklyCoupledCmdp, InventoryError> {
    let subs = (0..cfg.n_products()).map(|i| product_cmdp(cfg, i)).collect::<Result<Vec<_>, _>>()?;
    Ok(WeaklyCoupledCmdp::new(subs, vec![cfg.budget])?)
}

/// The full joint CMDP, enumerated directly. States are level vectors in
/// mixed radix with the last product fastest; actions likewise over order
/// vectors. Expected costs and the product kernel are integrated exactly
/// over the demand pmfs.
pub fn build_tabular(cfg: &InventoryConfig) -> Result<TabularCmdp, InventoryError> {
    cfg.validate()?;
    let n_prod = cfg.n_products();
    let (lower, _) = cfg.state_bounds;
    let levels = cfg.n_levels();
    let n_states = levels.pow(n_prod as u32);
    let decode = |mut js: usize| -> Vec<i64> {
        let mut out = vec![0; n_prod];
        for i in (0..n_prod).rev() {
            out[i] = (js % levels) as i64 + lower;
            js /= levels;
        }
        out
    };
    let pairs: usize = (0..n_states)
        .map(|js| decode(js).iter().enumerate().map(|(i, &s)| (cfg.max_feasible_order(i, s) + 1) as usize).product::<usize>())
        .sum();
    if pairs > MAX_JOINT_PAIRS {
        return Err(InventoryError::TooLarge { pairs, limit: MAX_JOINT_PAIRS });
    }
    // per-product next-level distributions and expected costs, by (level, order)
    let product_tables: Vec<(Vec<Vec<Vec<(usize, f64)>>>, Vec<Vec<f64>>)> = (0..n_prod)
        .map(|i| {
            let mut nexts = Vec::new();
            let mut costs = Vec::new();
            for level in cfg.state_bounds.0..=cfg.state_bounds.1 {
                let mut nr = Vec::new();
                let mut cr = Vec::new();
                for order in 0..=cfg.max_feasible_order(i, level) {
                    let mut dist = vec![0.0; levels];
                    let mut c = 0.0;
                    for (w, &p) in cfg.demand_pmfs[i].iter().enumerate() {
                        dist[(next_level(lower, level, order, w as i64) - lower) as usize] += p;
                        c += p * product_cost(cfg, i, level, order, w as i64);
                    }
                    nr.push(dist.into_iter().enumerate().filter(|(_, p)| *p > 0.0).collect());
                    cr.push(c);
                }
                nexts.push(nr);
                costs.push(cr);
            }
            (nexts, costs)
        })
        .collect();

    let mut kernel = Vec::with_capacity(n_states);
    let mut cost = Vec::with_capacity(n_states);
    let mut aux = Vec::with_capacity(n_states);
    for js in 0..n_states {
        let s = decode(js);
        let counts: Vec<usize> = s.iter().enumerate().map(|(i, &l)| (cfg.max_feasible_order(i, l) + 1) as usize).collect();
        let n_actions: usize = counts.iter().product();
        let mut kr = Vec::with_capacity(n_actions);
        let mut cr = Vec::with_capacity(n_actions);
        let mut ar = Vec::with_capacity(n_actions);
        for ja in 0..n_actions {
            let mut orders = vec![0usize; n_prod];
            let mut rest = ja;
            for i in (0..n_prod).rev() {
                orders[i] = rest % counts[i];
                rest /= counts[i];
            }
            let mut row = vec![0.0; n_states];
            // product kernel: accumulate over the joint next states
            let mut partial: Vec<(usize, f64)> = vec![(0, 1.0)];
            let mut c = 0.0;
            let mut d = 0.0;
            for i in 0..n_prod {
                let li = (s[i] - lower) as usize;
                let (nexts, costs) = &product_tables[i];
                c += costs[li][orders[i]];
                d += product_resource(cfg, i, s[i], orders[i] as i64);
                partial = partial
                    .iter()
                    .flat_map(|&(idx, p)| nexts[li][orders[i]].iter().map(move |&(n, q)| (idx * levels + n, p * q)))
                    .collect();
            }
            for (idx, p) in partial {
                row[idx] += p;
            }
            kr.push(row);
            cr.push(c);
            ar.push(vec![d]);
        }
        kernel.push(kr);
        cost.push(cr);
        aux.push(ar);
    }
    let init_levels = cfg.initial_levels();
    let init_index = init_levels.iter().fold(0usize, |acc, &l| acc * levels + (l - lower) as usize);
    let mut init = vec![0.0; n_states];
    init[init_index] = 1.0;
    Ok(TabularCmdp::new(CmdpParts {
        kernel,
        cost,
        aux_costs: aux,
        thresholds: vec![cfg.budget],
        discount: cfg.discount,
        init_dist: init,
        cost_lower_bound: COST_FLOOR,
    })?)
}

/// Generative model of one product over level indices that draws demand and
/// reports the realized (not expected) period cost.
#[derive(Debug, Clone)]
pub struct ProductEnv<'a> {
    cmdp: &'a TabularCmdp,
    cfg: &'a InventoryConfig,
    product: usize,
    demand_cumulative: Vec<f64>,
    init_index: usize,
}

impl<'a> ProductEnv<'a> {
    /// `cmdp` must be [`product_cmdp`] of the same product (possibly with
    /// other thresholds); it supplies the discount and threshold view.
    pub fn new(cfg: &'a InventoryConfig, product: usize, cmdp: &'a TabularCmdp) -> Self {
        let mut acc = 0.0;
        let demand_cumulative = cfg.demand_pmfs[product]
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let init_index = (cfg.initial_levels()[product] - cfg.state_bounds.0) as usize;
        Self { cmdp, cfg, product, demand_cumulative, init_index }
    }
}

impl Environment for ProductEnv<'_> {
    type State = usize;

    fn discount(&self) -> f64 {
        self.cfg.discount
    }
    fn thresholds(&self) -> &[f64] {
        self.cmdp.thresholds()
    }
    fn cost_lower_bound(&self) -> f64 {
        COST_FLOOR
    }
    fn sample_initial(&self, _rng: &mut Stream) -> usize {
        self.init_index
    }
    fn n_actions(&self, state: &usize) -> usize {
        self.cmdp.n_actions(*state)
    }
    fn step(&self, state: &usize, action: usize, rng: &mut Stream, aux: &mut [f64]) -> Transition<usize> {
        let lower = self.cfg.state_bounds.0;
        let level = *state as i64 + lower;
        let order = action as i64;
        let demand = sample_cumulative(&self.demand_cumulative, rng.random()) as i64;
        aux[0] = product_resource(self.cfg, self.product, level, order);
        let cost = product_cost(self.cfg, self.product, level, order, demand);
        Transition { next: (next_level(lower, level, order, demand) - lower) as usize, cost }
    }
}

/// Dual radius `M + r` with `M` from the never-order policy: it uses no
/// resource, so `(C(never) - 0) / q` bounds the optimal multiplier.
pub fn never_order_radius(problem: &WeaklyCoupledCmdp, slack: f64) -> Result<f64, InventoryError> {
    let mut c = 0.0;
    let mut d = 0.0;
    for sub in problem.subproblems() {
        let never = StationaryPolicy::deterministic(sub.action_counts(), &vec![0; sub.n_states()]);
        let (ci, di) = costs_of_policy(sub, &never).map_err(|e| InventoryError::Config(e.to_string()))?;
        c += ci;
        d += di[0];
    }
    let m = slater_lambda_bound(0.0, (c, &[d]), problem.thresholds())
        .map_err(|e| InventoryError::Config(e.to_string()))?;
    Ok(m + slack)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InventoryExperiment {
    pub config: InventoryConfig,
    pub schedule: StepSchedule,
    pub iterations: usize,
    pub evaluator: EvaluatorKind,
    pub seed: u64,
    /// `r` in the dual radius `M + r`.
    #[serde(default = "default_slack")]
    pub dual_slack: f64,
}

fn default_slack() -> f64 {
    1.0
}

impl InventoryExperiment {
    /// 500 iterations, Monte Carlo evaluation with 400 replications over 40
    /// periods, and the given step schedule (base step 0.2).
    pub fn reference(schedule: StepSchedule, seed: u64) -> Self {
        Self {
            config: InventoryConfig::reference(),
            schedule,
            iterations: 500,
            evaluator: EvaluatorKind::MonteCarlo(cmdp_core::monte_carlo::MCConfig::new(400, 40, seed)),
            seed,
            dual_slack: 1.0,
        }
    }
}

/// Headline numbers of an inventory run. `*_unnormalized` values are the
/// normalized ones divided by `1 - γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventorySummary {
    pub iterations: usize,
    pub seed: u64,
    pub dual_radius: f64,
    pub final_avg_cost: f64,
    pub final_avg_cost_unnormalized: f64,
    /// `‖[D(π̄_T) - q]⁺‖` of the averaged policy.
    pub averaged_violation: f64,
    /// `Σ η̃_m ‖[D(π_m) - q]⁺‖`.
    pub mean_iterate_violation: f64,
    pub last_objective_unnormalized: f64,
    pub last_lambda: Vec<f64>,
}

pub struct InventoryReport {
    pub output: RunOutput<DecomposablePolicy>,
    pub summary: InventorySummary,
}

impl InventoryReport {
    pub fn trail(&self) -> &[IterationRecord] {
        &self.output.trail
    }
}

/// Runs the decomposed primal-dual loop from the uniform policy with
/// `λ_0 = 0`. Sampled evaluation uses each product's realized-cost simulator.
pub fn run_experiment(exp: &InventoryExperiment) -> Result<InventoryReport, InventoryError> {
    let problem = decompose(&exp.config)?;
    let radius = never_order_radius(&problem, exp.dual_slack)?;
    let subs: Vec<_> = problem
        .subproblems()
        .iter()
        .enumerate()
        .map(|(i, sub)| TabularProblem::with_env(sub, ProductEnv::new(&exp.config, i, sub)))
        .collect();
    let decomposed = DecomposedProblem::new(subs, problem.thresholds().to_vec());
    let config = SolverConfig {
        schedule: exp.schedule,
        iterations: exp.iterations,
        initial_policy: DecomposablePolicy::uniform(&problem),
        initial_lambda: vec![0.0; problem.n_constraints()],
        domain: DualDomain { radius, slack: exp.dual_slack },
        evaluator: exp.evaluator,
        seed: exp.seed,
    };
    let output = run(&decomposed, &config)?;
    let scale = 1.0 / (1.0 - exp.config.discount);
    let last = output.final_record();
    let summary = InventorySummary {
        iterations: exp.iterations,
        seed: exp.seed,
        dual_radius: radius,
        final_avg_cost: last.running_avg_objective,
        final_avg_cost_unnormalized: last.running_avg_objective * scale,
        averaged_violation: last.running_violation,
        mean_iterate_violation: last.mean_iterate_violation,
        last_objective_unnormalized: last.objective * scale,
        last_lambda: output.last_lambda.clone(),
    };
    Ok(InventoryReport { output, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_examples() {
        let cfg = InventoryConfig::reference();
        assert_eq!(transition(&cfg, 0, 0, 5, 3).unwrap(), 2);
        assert_eq!(transition(&cfg, 0, -8, 0, 5).unwrap(), -10);
        assert_eq!(transition(&cfg, 0, 10, 0, 0).unwrap(), 10);
        assert!(matches!(transition(&cfg, 0, 4, 7, 0), Err(InventoryError::InfeasibleAction { .. })));
        assert!(matches!(transition(&cfg, 1, 11, 0, 0), Err(InventoryError::OutOfBounds { .. })));
    }

    #[test]
    fn step_cost_examples() {
        let cfg = InventoryConfig::reference();
        let (c, d) = step_costs(&cfg, &[2, -1], &[3, 1], &[1, 4]).unwrap();
        assert_eq!((c, d), (16.0, 7.5));
        let (c, _) = step_costs(&cfg, &[3, 0], &[2, 4], &[5, 4]).unwrap();
        assert_eq!(c, 0.0);
        let (_, d) = step_costs(&cfg, &[-5, -2], &[3, 2], &[0, 0]).unwrap();
        assert_eq!(d, 0.0);
        // a backlog of 8 plus demand 5 leaves 10 owed; 3 units are lost
        let (c, _) = step_costs(&cfg, &[-8, 0], &[0, 0], &[5, 0]).unwrap();
        assert_eq!(c, 2.0 * 10.0);
    }

    #[test]
    fn resource_use_ignores_demand() {
        let cfg = InventoryConfig::reference();
        let (_, d1) = step_costs(&cfg, &[1, 2], &[2, 3], &[1, 1]).unwrap();
        let (_, d2) = step_costs(&cfg, &[1, 2], &[2, 3], &[9, 10]).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn tiny_instance_by_hand() {
        let cfg = InventoryConfig {
            demand_pmfs: vec![vec![0.5, 0.5]],
            holding: vec![1.0],
            backlog: vec![2.0],
            resource: vec![1.0],
            budget: 1.0,
            discount: 0.5,
            state_bounds: (-1, 1),
            max_order: None,
            initial_levels: None,
        };
        let m = build_tabular(&cfg).unwrap();
        assert_eq!(m.n_states(), 3);
        assert_eq!(m.action_counts(), &[3, 2, 1]);
        // level -1, order 0: demand 0 keeps -1, demand 1 is lost at the floor
        assert_eq!(m.kernel_row(0, 0), &[1.0, 0.0, 0.0]);
        assert_eq!(m.cost(0, 0), 2.0);
        // level 0, order 1: stock 1 → {1, 0}; holding cost 1 or 0
        assert_eq!(m.kernel_row(1, 1), &[0.0, 0.5, 0.5]);
        assert_eq!(m.cost(1, 1), 0.5);
        assert_eq!(m.aux(1, 1), &[1.0]);
        // level 1, order 0: → {1, 0}
        assert_eq!(m.kernel_row(2, 0), &[0.0, 0.5, 0.5]);
        assert!(m.validate().is_empty());
        assert_eq!(m.init_dist(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn reference_decomposition_shapes() {
        let wc = decompose(&InventoryConfig::reference()).unwrap();
        assert_eq!(wc.n_subproblems(), 2);
        let sub = &wc.subproblems()[0];
        assert_eq!(sub.n_states(), 21);
        assert_eq!(sub.n_pairs(), 231);
        for s in 0..sub.n_states() {
            for a in 0..sub.n_actions(s) {
                assert!((sub.kernel_row(s, a).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn joint_guard() {
        let mut cfg = InventoryConfig::reference();
        cfg.demand_pmfs.push(uniform_pmf(1, 10));
        cfg.holding.push(1.0);
        cfg.backlog.push(1.0);
        cfg.resource.push(1.0);
        assert!(matches!(build_tabular(&cfg), Err(InventoryError::TooLarge { .. })));
    }

    #[test]
    fn never_order_is_a_slater_point() {
        let wc = decompose(&InventoryConfig::reference()).unwrap();
        for sub in wc.subproblems() {
            let never = StationaryPolicy::deterministic(sub.action_counts(), &vec![0; sub.n_states()]);
            let (_, d) = costs_of_policy(sub, &never).unwrap();
            assert_eq!(d, vec![0.0]);
        }
        assert!(never_order_radius(&wc, 1.0).unwrap() > 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = InventoryConfig::reference();
        cfg.holding[0] = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = InventoryConfig::reference();
        cfg.state_bounds = (3, 3);
        assert!(cfg.validate().is_err());
        let mut cfg = InventoryConfig::reference();
        cfg.demand_pmfs[1][3] += 0.1;
        assert!(cfg.validate().is_err());
    }
}
