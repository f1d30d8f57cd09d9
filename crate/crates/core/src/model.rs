//! Finite constrained MDPs and the policy / measure types built on them.
//!
//! State-action pairs are stored flat and row-major: state `s` owns the pair
//! indices `offset(s) .. offset(s) + n_actions(s)`. Action sets may differ in
//! size between states (inventory problems only allow orders up to a cap).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for simplex-membership checks of probability rows.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cmdp violates {} invariant(s), first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
    #[error("policy row {state} is not a distribution (sum={sum})")]
    PolicyRow { state: usize, sum: f64 },
    #[error("mixing weights are not a distribution (sum={0})")]
    MixingWeights(f64),
    #[error("mixing policy needs at least one member")]
    EmptyMixture,
    #[error("schema error: {0}")]
    Schema(String),
}

/// One failed invariant of a [`TabularCmdp`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    EmptyActionSet { state: usize },
    KernelRowSum { state: usize, action: usize, sum: f64 },
    NegativeProbability { state: usize, action: usize, next: usize },
    InitDistSum { sum: f64 },
    NegativeInitMass { state: usize },
    CostNotAboveBound { state: usize, action: usize, value: f64 },
    AuxNotAboveBound { state: usize, action: usize, k: usize, value: f64 },
    Discount { value: f64 },
    NonFinite { what: &'static str },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EmptyActionSet { state } => write!(f, "state {state} has no actions"),
            Violation::KernelRowSum { state, action, sum } => {
                write!(f, "kernel row (s={state}, a={action}) sums to {sum}")
            }
            Violation::NegativeProbability { state, action, next } => {
                write!(f, "kernel entry (s={state}, a={action}) -> {next} is negative")
            }
            Violation::InitDistSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Violation::NegativeInitMass { state } => {
                write!(f, "initial distribution is negative at {state}")
            }
            Violation::CostNotAboveBound { state, action, value } => write!(
                f,
                "cost c(s={state}, a={action}) = {value} is not strictly above the lower bound"
            ),
            Violation::AuxNotAboveBound { state, action, k, value } => write!(
                f,
                "aux cost d_{k}(s={state}, a={action}) = {value} is not strictly above the lower bound"
            ),
            Violation::Discount { value } => write!(f, "discount {value} not in (0, 1)"),
            Violation::NonFinite { what } => write!(f, "non-finite entry in {what}"),
        }
    }
}

/// Raw ingredients of a CMDP, indexed `[state][action]...`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdpParts {
    /// `kernel[s][a][s']`
    pub kernel: Vec<Vec<Vec<f64>>>,
    /// `cost[s][a]`
    pub cost: Vec<Vec<f64>>,
    /// `aux_costs[s][a][k]`
    pub aux_costs: Vec<Vec<Vec<f64>>>,
    pub thresholds: Vec<f64>,
    pub discount: f64,
    pub init_dist: Vec<f64>,
    pub cost_lower_bound: f64,
}

/// A finite CMDP: kernel, cost, auxiliary costs, thresholds, discount,
/// initial distribution and a strict lower bound on every cost entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCmdp {
    n_states: usize,
    n_constraints: usize,
    action_counts: Vec<usize>,
    offsets: Vec<usize>,
    kernel: Vec<f64>,
    cost: Vec<f64>,
    aux: Vec<f64>,
    thresholds: Vec<f64>,
    discount: f64,
    init_dist: Vec<f64>,
    cost_lower_bound: f64,
}

impl TabularCmdp {
    /// Builds and validates; any violated invariant is an error.
    pub fn new(parts: CmdpParts) -> Result<Self, ModelError> {
        let cmdp = Self::new_unchecked(parts)?;
        let report = cmdp.validate();
        if report.is_empty() {
            Ok(cmdp)
        } else {
            Err(ModelError::Invalid(report))
        }
    }

    /// Checks shapes only. Use [`TabularCmdp::validate`] for the rest.
    pub fn new_unchecked(parts: CmdpParts) -> Result<Self, ModelError> {
        let n_states = parts.kernel.len();
        if n_states == 0 {
            return Err(ModelError::Shape("no states".into()));
        }
        let n_constraints = parts.thresholds.len();
        if parts.cost.len() != n_states || parts.aux_costs.len() != n_states {
            return Err(ModelError::Shape("cost/aux tables must have one row per state".into()));
        }
        if parts.init_dist.len() != n_states {
            return Err(ModelError::Shape("init_dist length != n_states".into()));
        }
        let action_counts: Vec<usize> = parts.kernel.iter().map(Vec::len).collect();
        let mut offsets = Vec::with_capacity(n_states + 1);
        let mut acc = 0;
        for &n in &action_counts {
            offsets.push(acc);
            acc += n;
        }
        offsets.push(acc);
        let n_pairs = acc;
        let mut kernel = Vec::with_capacity(n_pairs * n_states);
        let mut cost = Vec::with_capacity(n_pairs);
        let mut aux = Vec::with_capacity(n_pairs * n_constraints);
        for s in 0..n_states {
            if parts.cost[s].len() != action_counts[s] || parts.aux_costs[s].len() != action_counts[s]
            {
                return Err(ModelError::Shape(format!("state {s}: action count mismatch")));
            }
            for a in 0..action_counts[s] {
                let row = &parts.kernel[s][a];
                if row.len() != n_states {
                    return Err(ModelError::Shape(format!("kernel row ({s},{a}) has wrong length")));
                }
                kernel.extend_from_slice(row);
                cost.push(parts.cost[s][a]);
                let d = &parts.aux_costs[s][a];
                if d.len() != n_constraints {
                    return Err(ModelError::Shape(format!("aux costs ({s},{a}) need {n_constraints} entries")));
                }
                aux.extend_from_slice(d);
            }
        }
        Ok(Self {
            n_states,
            n_constraints,
            action_counts,
            offsets,
            kernel,
            cost,
            aux,
            thresholds: parts.thresholds,
            discount: parts.discount,
            init_dist: parts.init_dist,
            cost_lower_bound: parts.cost_lower_bound,
        })
    }

    /// Lists every violated invariant; empty iff the CMDP is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.discount > 0.0 && self.discount < 1.0) {
            out.push(Violation::Discount { value: self.discount });
        }
        let w = self.cost_lower_bound;
        if !w.is_finite() {
            out.push(Violation::NonFinite { what: "cost_lower_bound" });
        }
        if self.thresholds.iter().any(|q| !q.is_finite()) {
            out.push(Violation::NonFinite { what: "thresholds" });
        }
        for s in 0..self.n_states {
            if self.action_counts[s] == 0 {
                out.push(Violation::EmptyActionSet { state: s });
            }
            for a in 0..self.action_counts[s] {
                let row = self.kernel_row(s, a);
                let mut sum = 0.0;
                for (next, &p) in row.iter().enumerate() {
                    if !p.is_finite() {
                        out.push(Violation::NonFinite { what: "kernel" });
                    } else if p < 0.0 {
                        out.push(Violation::NegativeProbability { state: s, action: a, next });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    out.push(Violation::KernelRowSum { state: s, action: a, sum });
                }
                let c = self.cost(s, a);
                if !(c > w) {
                    out.push(Violation::CostNotAboveBound { state: s, action: a, value: c });
                }
                for (k, &d) in self.aux(s, a).iter().enumerate() {
                    if !(d > w) {
                        out.push(Violation::AuxNotAboveBound { state: s, action: a, k, value: d });
                    }
                }
            }
        }
        let mut sum = 0.0;
        for (s, &m) in self.init_dist.iter().enumerate() {
            if m < 0.0 {
                out.push(Violation::NegativeInitMass { state: s });
            }
            sum += m;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            out.push(Violation::InitDistSum { sum });
        }
        out
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_pairs(&self) -> usize {
        self.offsets[self.n_states]
    }
    pub fn n_actions(&self, s: usize) -> usize {
        self.action_counts[s]
    }
    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }
    pub fn max_actions(&self) -> usize {
        self.action_counts.iter().copied().max().unwrap_or(0)
    }
    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }
    /// Flat index of the pair `(s, a)`.
    pub fn pair(&self, s: usize, a: usize) -> usize {
        debug_assert!(a < self.action_counts[s]);
        self.offsets[s] + a
    }
    pub fn kernel_row(&self, s: usize, a: usize) -> &[f64] {
        let p = self.pair(s, a);
        &self.kernel[p * self.n_states..(p + 1) * self.n_states]
    }
    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.cost[self.pair(s, a)]
    }
    pub fn aux(&self, s: usize, a: usize) -> &[f64] {
        let p = self.pair(s, a);
        &self.aux[p * self.n_constraints..(p + 1) * self.n_constraints]
    }
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
    pub fn discount(&self) -> f64 {
        self.discount
    }
    pub fn init_dist(&self) -> &[f64] {
        &self.init_dist
    }
    pub fn cost_lower_bound(&self) -> f64 {
        self.cost_lower_bound
    }

    /// Modified cost `c(s,a) + Σ_k λ_k (d_k(s,a) - q_k)`.
    pub fn lagrangian_cost(&self, s: usize, a: usize, lambda: &[f64]) -> f64 {
        let d = self.aux(s, a);
        let mut c = self.cost(s, a);
        for k in 0..self.n_constraints {
            c += lambda[k] * (d[k] - self.thresholds[k]);
        }
        c
    }

    /// Same process with different thresholds.
    pub fn with_thresholds(&self, thresholds: Vec<f64>) -> Result<Self, ModelError> {
        if thresholds.len() != self.n_constraints {
            return Err(ModelError::Shape("threshold count must not change".into()));
        }
        let mut out = self.clone();
        out.thresholds = thresholds;
        Ok(out)
    }

    /// Same process with the cost table replaced.
    pub fn with_cost(&self, cost: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let mut parts = self.to_parts();
        parts.cost = cost;
        Self::new_unchecked(parts)
    }

    pub fn to_parts(&self) -> CmdpParts {
        let mut kernel = Vec::with_capacity(self.n_states);
        let mut cost = Vec::with_capacity(self.n_states);
        let mut aux = Vec::with_capacity(self.n_states);
        for s in 0..self.n_states {
            let na = self.action_counts[s];
            kernel.push((0..na).map(|a| self.kernel_row(s, a).to_vec()).collect());
            cost.push((0..na).map(|a| self.cost(s, a)).collect());
            aux.push((0..na).map(|a| self.aux(s, a).to_vec()).collect());
        }
        CmdpParts {
            kernel,
            cost,
            aux_costs: aux,
            thresholds: self.thresholds.clone(),
            discount: self.discount,
            init_dist: self.init_dist.clone(),
            cost_lower_bound: self.cost_lower_bound,
        }
    }
}

/// Per-state action distributions `π(a|s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    probs: Vec<Vec<f64>>,
}

impl StationaryPolicy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        for (s, row) in probs.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.is_empty() || row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(ModelError::PolicyRow { state: s, sum });
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(action_counts: &[usize]) -> Self {
        Self {
            probs: action_counts.iter().map(|&n| vec![1.0 / n as f64; n]).collect(),
        }
    }

    pub fn deterministic(action_counts: &[usize], choice: &[usize]) -> Self {
        let probs = action_counts
            .iter()
            .zip(choice)
            .map(|(&n, &c)| {
                let mut row = vec![0.0; n];
                row[c] = 1.0;
                row
            })
            .collect();
        Self { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }
    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.probs
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().flatten().all(|&p| p > 0.0)
    }

    pub fn matches(&self, cmdp: &TabularCmdp) -> bool {
        self.probs.len() == cmdp.n_states()
            && self
                .probs
                .iter()
                .zip(cmdp.action_counts())
                .all(|(row, &n)| row.len() == n)
    }

    /// Most probable action per state (lowest index on ties).
    pub fn greedy_actions(&self) -> Vec<usize> {
        self.probs
            .iter()
            .map(|row| {
                let mut best = 0;
                for (a, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect()
    }
}

/// A distribution over stationary policies drawn once at time zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingPolicy {
    members: Vec<StationaryPolicy>,
    weights: Vec<f64>,
}

impl MixingPolicy {
    pub fn new(members: Vec<StationaryPolicy>, weights: Vec<f64>) -> Result<Self, ModelError> {
        if members.is_empty() {
            return Err(ModelError::EmptyMixture);
        }
        if members.len() != weights.len() {
            return Err(ModelError::Shape("one weight per member".into()));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::MixingWeights(sum));
        }
        Ok(Self { members, weights })
    }

    pub fn single(policy: StationaryPolicy) -> Self {
        Self { members: vec![policy], weights: vec![1.0] }
    }

    pub fn members(&self) -> &[StationaryPolicy] {
        &self.members
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Discounted state-action visitation distribution `ν(s,a)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationMeasure {
    mass: Vec<Vec<f64>>,
}

impl OccupationMeasure {
    pub fn from_rows(mass: Vec<Vec<f64>>) -> Self {
        Self { mass }
    }
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.mass
    }
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.mass[s][a]
    }
    pub fn state_mass(&self, s: usize) -> f64 {
        self.mass[s].iter().sum()
    }
    pub fn total(&self) -> f64 {
        self.mass.iter().flatten().sum()
    }

    /// `Σ ν(s,a) f(s,a)`.
    pub fn integrate(&self, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for (s, row) in self.mass.iter().enumerate() {
            for (a, &m) in row.iter().enumerate() {
                if m != 0.0 {
                    acc += m * f(s, a);
                }
            }
        }
        acc
    }

    /// Largest residual of the discounted flow equations
    /// `Σ_a ν(s',a) - γ Σ_{s,a} P(s'|s,a) ν(s,a) = (1-γ) μ0(s')`.
    pub fn flow_residual(&self, cmdp: &TabularCmdp) -> f64 {
        let n = cmdp.n_states();
        let g = cmdp.discount();
        let mut lhs: Vec<f64> = (0..n).map(|s| self.state_mass(s)).collect();
        for s in 0..n {
            for a in 0..cmdp.n_actions(s) {
                let m = self.mass[s][a];
                if m == 0.0 {
                    continue;
                }
                for (sp, &p) in cmdp.kernel_row(s, a).iter().enumerate() {
                    lhs[sp] -= g * p * m;
                }
            }
        }
        lhs.iter()
            .zip(cmdp.init_dist())
            .map(|(l, mu)| (l - (1.0 - g) * mu).abs())
            .fold(0.0, f64::max)
    }

    /// Weighted average of several measures on the same pair layout.
    pub fn average(measures: &[OccupationMeasure], weights: &[f64]) -> Self {
        let mut mass: Vec<Vec<f64>> = measures[0].mass.iter().map(|r| vec![0.0; r.len()]).collect();
        for (m, &w) in measures.iter().zip(weights) {
            for (acc, row) in mass.iter_mut().zip(&m.mass) {
                for (x, &y) in acc.iter_mut().zip(row) {
                    *x += w * y;
                }
            }
        }
        Self { mass }
    }
}

/// State values `V(s)` and action values `Q(s,a)` of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// JSON wire format "cmdp-v1"

pub const CMDP_SCHEMA: &str = "cmdp-v1";

/// Serialized form of a [`TabularCmdp`]. Tables are nested arrays indexed
/// `[state][action]`, `[state][action][next_state]` and `[state][action][k]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmdpDocument {
    pub schema: String,
    pub n_states: usize,
    pub actions_per_state: Vec<usize>,
    pub kernel: Vec<Vec<Vec<f64>>>,
    pub cost: Vec<Vec<f64>>,
    pub aux_costs: Vec<Vec<Vec<f64>>>,
    pub thresholds: Vec<f64>,
    pub discount: f64,
    pub init_dist: Vec<f64>,
    pub cost_lower_bound: f64,
}

impl From<&TabularCmdp> for CmdpDocument {
    fn from(c: &TabularCmdp) -> Self {
        let parts = c.to_parts();
        Self {
            schema: CMDP_SCHEMA.to_string(),
            n_states: c.n_states(),
            actions_per_state: c.action_counts().to_vec(),
            kernel: parts.kernel,
            cost: parts.cost,
            aux_costs: parts.aux_costs,
            thresholds: parts.thresholds,
            discount: parts.discount,
            init_dist: parts.init_dist,
            cost_lower_bound: parts.cost_lower_bound,
        }
    }
}

impl TryFrom<CmdpDocument> for TabularCmdp {
    type Error = ModelError;

    fn try_from(doc: CmdpDocument) -> Result<Self, ModelError> {
        if doc.schema != CMDP_SCHEMA {
            return Err(ModelError::Schema(format!("expected {CMDP_SCHEMA}, got {}", doc.schema)));
        }
        if doc.kernel.len() != doc.n_states
            || doc.actions_per_state.len() != doc.n_states
            || doc.kernel.iter().zip(&doc.actions_per_state).any(|(k, &n)| k.len() != n)
        {
            return Err(ModelError::Schema("n_states/actions_per_state disagree with kernel".into()));
        }
        TabularCmdp::new(CmdpParts {
            kernel: doc.kernel,
            cost: doc.cost,
            aux_costs: doc.aux_costs,
            thresholds: doc.thresholds,
            discount: doc.discount,
            init_dist: doc.init_dist,
            cost_lower_bound: doc.cost_lower_bound,
        })
    }
}

impl TabularCmdp {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CmdpDocument::from(self)).expect("cmdp serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: CmdpDocument =
            serde_json::from_str(text).map_err(|e| ModelError::Schema(e.to_string()))?;
        Self::try_from(doc)
    }
}
