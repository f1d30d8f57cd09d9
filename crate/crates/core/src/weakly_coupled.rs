//! Weakly coupled CMDPs: independent sub-MDPs whose only interaction is a set
//! of expected resource constraints `Σ_i B^i(π^i) ≤ q`.
//!
//! Under a product-form policy the Lagrangian action values split as
//! `Q((s¹..s^I),(a¹..a^I)) = Σ_i Q^i(s^i,a^i) - λᵀq`, where `Q^i` uses the
//! sub-level cost `c^i + λᵀb^i`. The constant is the same for every action and
//! drops out of the softmax, so every primal step decomposes per subproblem.
//!
//! A subproblem is stored as a [`TabularCmdp`] whose auxiliary costs are its
//! link costs `b^i` and whose thresholds are all zero; its Lagrangian cost is
//! then exactly `c^i + λᵀb^i`.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::stationary_from_occupation;
use crate::model::{CmdpDocument, CmdpParts, ModelError, OccupationMeasure, StationaryPolicy, TabularCmdp};
use crate::oracle::OracleError;
use crate::primal_dual::{Evaluation, EvaluatorKind, PrimalDualProblem, SolverError};
use crate::rng::derive_seed;
use crate::simplex::LinearProgram;

/// Joint-state cap for explicit product construction (oracle use only).
pub const MAX_PRODUCT_STATES: usize = 10_000;
/// Joint-pair cap; the dense product kernel has `pairs × states` entries.
pub const MAX_PRODUCT_KERNEL: usize = 50_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum CoupledError {
    #[error("subproblem {index}: {source}")]
    Sub { index: usize, source: ModelError },
    #[error("subproblem {index} disagrees with the others: {what}")]
    Inconsistent { index: usize, what: String },
    #[error("no subproblems")]
    Empty,
    #[error("product has {0} joint states/entries, above the construction cap")]
    ProductTooLarge(usize),
    #[error("schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeaklyCoupledCmdp {
    subproblems: Vec<TabularCmdp>,
    thresholds: Vec<f64>,
    discount: f64,
}

impl WeaklyCoupledCmdp {
    /// `subproblems[i]` carries `b^i` as its auxiliary costs; its thresholds
    /// are replaced by zeros.
    pub fn new(subproblems: Vec<TabularCmdp>, thresholds: Vec<f64>) -> Result<Self, CoupledError> {
        let first = subproblems.first().ok_or(CoupledError::Empty)?;
        let discount = first.discount();
        let k = thresholds.len();
        let mut subs = Vec::with_capacity(subproblems.len());
        for (index, sub) in subproblems.into_iter().enumerate() {
            if sub.n_constraints() != k {
                return Err(CoupledError::Inconsistent {
                    index,
                    what: format!("{} link costs, expected {k}", sub.n_constraints()),
                });
            }
            if sub.discount() != discount {
                return Err(CoupledError::Inconsistent { index, what: "discount".into() });
            }
            let report = sub.validate();
            if !report.is_empty() {
                return Err(CoupledError::Sub { index, source: ModelError::Invalid(report) });
            }
            subs.push(sub.with_thresholds(vec![0.0; k]).map_err(|source| CoupledError::Sub { index, source })?);
        }
        Ok(Self { subproblems: subs, thresholds, discount })
    }

    pub fn subproblems(&self) -> &[TabularCmdp] {
        &self.subproblems
    }
    pub fn n_subproblems(&self) -> usize {
        self.subproblems.len()
    }
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
    pub fn n_constraints(&self) -> usize {
        self.thresholds.len()
    }
    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// The same problem with every link cost scaled by `factor`.
    pub fn scale_links(&self, factor: f64) -> Result<Self, CoupledError> {
        let subs = self
            .subproblems
            .iter()
            .map(|s| {
                let mut p = s.to_parts();
                for row in p.aux_costs.iter_mut().flatten() {
                    row.iter_mut().for_each(|x| *x *= factor);
                }
                TabularCmdp::new_unchecked(p).expect("shape unchanged")
            })
            .collect();
        Ok(Self { subproblems: subs, thresholds: self.thresholds.clone(), discount: self.discount })
    }
}

/// A product-form policy `Π_i π^i(a^i | s^i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposablePolicy<P = StationaryPolicy> {
    pub parts: Vec<P>,
}

impl DecomposablePolicy<StationaryPolicy> {
    pub fn uniform(problem: &WeaklyCoupledCmdp) -> Self {
        Self {
            parts: problem.subproblems.iter().map(|s| StationaryPolicy::uniform(s.action_counts())).collect(),
        }
    }
}

/// Drives the primal-dual loop on independent subproblems that share only
/// the multipliers. Each subproblem is itself a [`PrimalDualProblem`] whose
/// thresholds are zero and whose constraint values are its link costs `B^i`.
pub struct DecomposedProblem<S> {
    subs: Vec<S>,
    thresholds: Vec<f64>,
    work: AtomicU64,
}

impl<S> DecomposedProblem<S> {
    pub fn new(subs: Vec<S>, thresholds: Vec<f64>) -> Self {
        Self { subs, thresholds, work: AtomicU64::new(0) }
    }
    pub fn subs(&self) -> &[S] {
        &self.subs
    }
    /// Units of work done so far: one per subproblem evaluation plus one per
    /// subproblem update (each of comparable size for identical subproblems).
    pub fn work_units(&self) -> u64 {
        self.work.load(Ordering::Relaxed)
    }
    pub fn reset_work(&self) {
        self.work.store(0, Ordering::Relaxed);
    }
}

impl<S> PrimalDualProblem for DecomposedProblem<S>
where
    S: PrimalDualProblem + Send + Sync,
{
    type Policy = DecomposablePolicy<S::Policy>;
    type QTable = Vec<S::QTable>;

    fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    fn check_initial(&self, policy: &Self::Policy) -> Result<(), SolverError> {
        if policy.parts.len() != self.subs.len() {
            return Err(SolverError::Config(format!(
                "policy has {} parts, problem has {} subproblems",
                policy.parts.len(),
                self.subs.len()
            )));
        }
        for (i, (s, p)) in self.subs.iter().zip(&policy.parts).enumerate() {
            s.check_initial(p).map_err(|e| SolverError::Config(format!("subproblem {i}: {e}")))?;
        }
        Ok(())
    }

    fn evaluate(
        &self,
        policy: &Self::Policy,
        lambda: &[f64],
        evaluator: &EvaluatorKind,
        seed: u64,
    ) -> Result<Evaluation<Self::QTable>, SolverError> {
        let evals: Vec<Evaluation<S::QTable>> = self
            .subs
            .par_iter()
            .zip(&policy.parts)
            .enumerate()
            .map(|(i, (s, p))| {
                self.work.fetch_add(1, Ordering::Relaxed);
                s.evaluate(p, lambda, evaluator, derive_seed(seed, i as u64)).map_err(|e| SolverError::Evaluation {
                    iteration: 0,
                    message: format!("subproblem {i}: {e}"),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(aggregate(evals, lambda, &self.thresholds))
    }

    fn improve(&self, policy: &Self::Policy, q: &Self::QTable, eta: f64) -> Self::Policy {
        let parts = self
            .subs
            .par_iter()
            .zip(&policy.parts)
            .zip(q)
            .map(|((s, p), qi)| {
                self.work.fetch_add(1, Ordering::Relaxed);
                s.improve(p, qi, eta)
            })
            .collect();
        DecomposablePolicy { parts }
    }
}

/// Joint evaluation from per-subproblem ones: objective `Σ C^i`, constraint
/// values `Σ B^i`, and the joint `Q` range `Σ_i range(Q^i) - λᵀq`.
fn aggregate<Q>(evals: Vec<Evaluation<Q>>, lambda: &[f64], q: &[f64]) -> Evaluation<Vec<Q>> {
    let k = q.len();
    let shift: f64 = lambda.iter().zip(q).map(|(l, q)| l * q).sum();
    let mut out = Evaluation {
        q: Vec::with_capacity(evals.len()),
        objective: 0.0,
        constraints: vec![0.0; k],
        se_objective: 0.0,
        se_constraints: vec![0.0; k],
        q_min: -shift,
        q_max: -shift,
    };
    let mut var_obj = 0.0;
    let mut var_d = vec![0.0; k];
    for e in evals {
        out.objective += e.objective;
        var_obj += e.se_objective * e.se_objective;
        for j in 0..k {
            out.constraints[j] += e.constraints[j];
            var_d[j] += e.se_constraints[j] * e.se_constraints[j];
        }
        out.q_min += e.q_min;
        out.q_max += e.q_max;
        out.q.push(e.q);
    }
    out.se_objective = var_obj.sqrt();
    out.se_constraints = var_d.iter().map(|v| v.sqrt()).collect();
    out
}

/// Per-subproblem softmax steps with the sub-level Q tables.
pub fn decomposed_policy_update(
    policy: &DecomposablePolicy,
    sub_q: &[Vec<Vec<f64>>],
    eta: f64,
) -> DecomposablePolicy {
    DecomposablePolicy {
        parts: policy
            .parts
            .iter()
            .zip(sub_q)
            .map(|(p, q)| crate::primal_dual::policy_update(q, p, eta))
            .collect(),
    }
}

/// `Σ_i B^i(π^i) - q`, with `B^i` evaluated exactly.
pub fn aggregated_subgradient(
    problem: &WeaklyCoupledCmdp,
    policy: &DecomposablePolicy,
) -> Result<Vec<f64>, crate::exact::EvalError> {
    let mut g: Vec<f64> = problem.thresholds.iter().map(|q| -q).collect();
    for (sub, p) in problem.subproblems.iter().zip(&policy.parts) {
        let (_, b) = crate::exact::costs_of_policy(sub, p)?;
        for (gk, bk) in g.iter_mut().zip(b) {
            *gk += bk;
        }
    }
    Ok(g)
}

/// The decomposed solver over exact-evaluated tabular subproblems.
pub fn tabular_decomposition(problem: &WeaklyCoupledCmdp) -> DecomposedProblem<crate::evaluator::TabularProblem<'_>> {
    DecomposedProblem::new(
        problem.subproblems.iter().map(crate::evaluator::TabularProblem::new).collect(),
        problem.thresholds.clone(),
    )
}

/// The primal-dual loop on a tabular weakly coupled problem, every step
/// decomposed per subproblem.
pub fn run_decomposed(
    problem: &WeaklyCoupledCmdp,
    config: &crate::primal_dual::SolverConfig<DecomposablePolicy>,
) -> Result<crate::primal_dual::RunOutput<DecomposablePolicy>, SolverError> {
    crate::primal_dual::run(&tabular_decomposition(problem), config)
}

/// Explicit product CMDP of a weakly coupled problem, with index maps.
#[derive(Debug, Clone)]
pub struct ProductMdp {
    pub cmdp: TabularCmdp,
    sub_states: Vec<usize>,
}

impl ProductMdp {
    /// Sub-state tuple of a joint state (last subproblem varies fastest).
    pub fn decode_state(&self, mut joint: usize) -> Vec<usize> {
        let mut out = vec![0; self.sub_states.len()];
        for i in (0..self.sub_states.len()).rev() {
            out[i] = joint % self.sub_states[i];
            joint /= self.sub_states[i];
        }
        out
    }

    pub fn encode_state(&self, parts: &[usize]) -> usize {
        parts.iter().zip(&self.sub_states).fold(0, |acc, (&s, &n)| acc * n + s)
    }

    /// Sub-action tuple of joint action `a` at a joint state with sub-states `s`.
    pub fn decode_action(&self, problem: &WeaklyCoupledCmdp, s: &[usize], mut a: usize) -> Vec<usize> {
        let mut out = vec![0; s.len()];
        for i in (0..s.len()).rev() {
            let n = problem.subproblems[i].n_actions(s[i]);
            out[i] = a % n;
            a /= n;
        }
        out
    }

    /// The joint stationary policy equal to the product of `policy`'s parts.
    pub fn joint_policy(&self, problem: &WeaklyCoupledCmdp, policy: &DecomposablePolicy) -> StationaryPolicy {
        let rows = (0..self.cmdp.n_states())
            .map(|js| {
                let s = self.decode_state(js);
                (0..self.cmdp.n_actions(js))
                    .map(|ja| {
                        let a = self.decode_action(problem, &s, ja);
                        (0..s.len()).map(|i| policy.parts[i].prob(s[i], a[i])).product()
                    })
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>();
        // products of normalized rows are normalized up to roundoff
        let rows = rows
            .into_iter()
            .map(|r| {
                let z: f64 = r.iter().sum();
                r.into_iter().map(|x| x / z).collect()
            })
            .collect();
        StationaryPolicy::new(rows).expect("product of distributions")
    }
}

/// Builds the explicit product CMDP (oracle / test use; capped).
pub fn product_mdp(problem: &WeaklyCoupledCmdp) -> Result<ProductMdp, CoupledError> {
    let sub_states: Vec<usize> = problem.subproblems.iter().map(|s| s.n_states()).collect();
    let n: usize = sub_states.iter().try_fold(1usize, |acc, &x| acc.checked_mul(x)).unwrap_or(usize::MAX);
    if n > MAX_PRODUCT_STATES {
        return Err(CoupledError::ProductTooLarge(n));
    }
    let k = problem.n_constraints();
    let mut pm = ProductMdp {
        cmdp: TabularCmdp::new_unchecked(CmdpParts {
            kernel: vec![vec![vec![1.0]]],
            cost: vec![vec![0.0]],
            aux_costs: vec![vec![vec![0.0; k]]],
            thresholds: problem.thresholds.clone(),
            discount: problem.discount,
            init_dist: vec![1.0],
            cost_lower_bound: -1.0,
        })
        .expect("placeholder"),
        sub_states,
    };
    let mut pairs = 0usize;
    for js in 0..n {
        let s = pm.decode_state(js);
        pairs += s.iter().enumerate().map(|(i, &si)| problem.subproblems[i].n_actions(si)).product::<usize>();
    }
    if pairs.saturating_mul(n) > MAX_PRODUCT_KERNEL {
        return Err(CoupledError::ProductTooLarge(pairs * n));
    }
    let mut kernel = Vec::with_capacity(n);
    let mut cost = Vec::with_capacity(n);
    let mut aux = Vec::with_capacity(n);
    let mut init = vec![0.0; n];
    for (js, mass) in init.iter_mut().enumerate() {
        let s = pm.decode_state(js);
        *mass = s.iter().enumerate().map(|(i, &si)| problem.subproblems[i].init_dist()[si]).product();
        let na: usize = s.iter().enumerate().map(|(i, &si)| problem.subproblems[i].n_actions(si)).product();
        let mut k_rows = Vec::with_capacity(na);
        let mut c_row = Vec::with_capacity(na);
        let mut d_row = Vec::with_capacity(na);
        for ja in 0..na {
            let a = pm.decode_action(problem, &s, ja);
            let mut c = 0.0;
            let mut d = vec![0.0; k];
            for (i, sub) in problem.subproblems.iter().enumerate() {
                c += sub.cost(s[i], a[i]);
                for (dk, b) in d.iter_mut().zip(sub.aux(s[i], a[i])) {
                    *dk += b;
                }
            }
            let mut row = vec![0.0; n];
            for (jt, p) in row.iter_mut().enumerate() {
                let t = pm.decode_state(jt);
                *p = (0..s.len()).map(|i| problem.subproblems[i].kernel_row(s[i], a[i])[t[i]]).product();
            }
            k_rows.push(row);
            c_row.push(c);
            d_row.push(d);
        }
        kernel.push(k_rows);
        cost.push(c_row);
        aux.push(d_row);
    }
    let w: f64 = problem.subproblems.iter().map(|s| s.cost_lower_bound()).sum();
    pm.cmdp = TabularCmdp::new_unchecked(CmdpParts {
        kernel,
        cost,
        aux_costs: aux,
        thresholds: problem.thresholds.clone(),
        discount: problem.discount,
        init_dist: init,
        cost_lower_bound: w,
    })
    .expect("consistent shapes");
    Ok(pm)
}

/// Optimum of the occupation-measure LP written over the subproblem
/// marginals: one block of flow equations per subproblem and the shared
/// linking rows `Σ_i Σ b^i ν^i ≤ q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecomposedOracleSolution {
    pub c_star: f64,
    pub parts: Vec<OccupationMeasure>,
    pub policies: Vec<StationaryPolicy>,
    pub dual_slacks: Vec<f64>,
    pub multipliers: Vec<f64>,
}

/// Solves the block LP. For product-form policies the joint LP only sees
/// the marginals, so this equals the joint optimum while staying small.
pub fn solve_relaxed_lp(problem: &WeaklyCoupledCmdp) -> Result<DecomposedOracleSolution, OracleError> {
    let g = problem.discount;
    let offsets: Vec<usize> = problem
        .subproblems
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.n_pairs();
            Some(o)
        })
        .collect();
    let n_vars: usize = problem.subproblems.iter().map(|s| s.n_pairs()).sum();
    let n_rows: usize = problem.subproblems.iter().map(|s| s.n_states()).sum();
    let mut lp = LinearProgram {
        c: vec![0.0; n_vars],
        a_eq: Vec::with_capacity(n_rows),
        b_eq: Vec::with_capacity(n_rows),
        a_ub: vec![vec![0.0; n_vars]; problem.n_constraints()],
        b_ub: problem.thresholds.clone(),
    };
    for (sub, &off) in problem.subproblems.iter().zip(&offsets) {
        let first_row = lp.a_eq.len();
        for s in 0..sub.n_states() {
            lp.a_eq.push(vec![0.0; n_vars]);
            lp.b_eq.push((1.0 - g) * sub.init_dist()[s]);
        }
        for s in 0..sub.n_states() {
            for a in 0..sub.n_actions(s) {
                let j = off + sub.pair(s, a);
                lp.c[j] = sub.cost(s, a);
                lp.a_eq[first_row + s][j] += 1.0;
                for (sp, &p) in sub.kernel_row(s, a).iter().enumerate() {
                    lp.a_eq[first_row + sp][j] -= g * p;
                }
                for (k, &b) in sub.aux(s, a).iter().enumerate() {
                    lp.a_ub[k][j] = b;
                }
            }
        }
    }
    let sol = lp.solve()?;
    let parts: Vec<OccupationMeasure> = problem
        .subproblems
        .iter()
        .zip(&offsets)
        .map(|(sub, &off)| {
            OccupationMeasure::from_rows(
                (0..sub.n_states())
                    .map(|s| (0..sub.n_actions(s)).map(|a| sol.x[off + sub.pair(s, a)]).collect())
                    .collect(),
            )
        })
        .collect();
    let mut c_star = 0.0;
    let mut used = vec![0.0; problem.n_constraints()];
    for (sub, nu) in problem.subproblems.iter().zip(&parts) {
        c_star += nu.integrate(|s, a| sub.cost(s, a));
        for (k, u) in used.iter_mut().enumerate() {
            *u += nu.integrate(|s, a| sub.aux(s, a)[k]);
        }
    }
    Ok(DecomposedOracleSolution {
        c_star,
        policies: parts.iter().map(stationary_from_occupation).collect(),
        parts,
        dual_slacks: problem.thresholds.iter().zip(&used).map(|(q, u)| q - u).collect(),
        multipliers: sol.ub_multipliers,
    })
}

// ---------------------------------------------------------------------------
// JSON wire format "wc-cmdp-v1"

pub const WC_SCHEMA: &str = "wc-cmdp-v1";

/// One subproblem: an unconstrained `cmdp-v1` document plus link costs
/// `link_costs[s][a][k]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubproblemDocument {
    pub mdp: CmdpDocument,
    pub link_costs: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeaklyCoupledDocument {
    pub schema: String,
    pub discount: f64,
    pub thresholds: Vec<f64>,
    pub subproblems: Vec<SubproblemDocument>,
}

impl WeaklyCoupledCmdp {
    pub fn to_document(&self) -> WeaklyCoupledDocument {
        let subproblems = self
            .subproblems
            .iter()
            .map(|sub| {
                let mut parts = sub.to_parts();
                let link_costs = std::mem::take(&mut parts.aux_costs);
                parts.aux_costs = link_costs.iter().map(|r| r.iter().map(|_| Vec::new()).collect()).collect();
                parts.thresholds = Vec::new();
                let bare = TabularCmdp::new_unchecked(parts).expect("shape unchanged");
                SubproblemDocument { mdp: CmdpDocument::from(&bare), link_costs }
            })
            .collect();
        WeaklyCoupledDocument {
            schema: WC_SCHEMA.into(),
            discount: self.discount,
            thresholds: self.thresholds.clone(),
            subproblems,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CoupledError> {
        let doc: WeaklyCoupledDocument =
            serde_json::from_str(text).map_err(|e| CoupledError::Schema(e.to_string()))?;
        if doc.schema != WC_SCHEMA {
            return Err(CoupledError::Schema(format!("expected {WC_SCHEMA}, got {}", doc.schema)));
        }
        let k = doc.thresholds.len();
        let mut subs = Vec::with_capacity(doc.subproblems.len());
        for (index, sd) in doc.subproblems.into_iter().enumerate() {
            let bare = TabularCmdp::try_from(sd.mdp).map_err(|source| CoupledError::Sub { index, source })?;
            if bare.discount() != doc.discount {
                return Err(CoupledError::Inconsistent { index, what: "discount".into() });
            }
            let mut parts = bare.to_parts();
            if sd.link_costs.len() != parts.cost.len()
                || sd.link_costs.iter().zip(&parts.cost).any(|(l, c)| l.len() != c.len())
            {
                return Err(CoupledError::Schema(format!("subproblem {index}: link cost table shape")));
            }
            parts.aux_costs = sd.link_costs;
            parts.thresholds = vec![0.0; k];
            subs.push(TabularCmdp::new(parts).map_err(|source| CoupledError::Sub { index, source })?);
        }
        Self::new(subs, doc.thresholds)
    }
}
