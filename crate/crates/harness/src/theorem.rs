//! Measured violation and optimality gap of exact primal-dual runs against
//! the convergence bounds.
//!
//! For a fixed schedule the first `T` iterates do not depend on the total
//! number of rounds, so a single run to the largest horizon yields every
//! grid point: the record after round `T - 1` is the averaged policy `π̄_T`.

use cmdp_core::evaluator::TabularProblem;
use cmdp_core::exact::{costs_of_policy, weighted_kl};
use cmdp_core::primal_dual::{
    run, schedule_kappas, slater_lambda_bound, theorem1_bounds, DualDomain, EvaluatorKind, SolverConfig,
    StepKind, StepSchedule, TheoremConstants,
};
use cmdp_core::random::{random_instance, RandomSpec};
use cmdp_core::rng::{rng_stream, Purpose};
use cmdp_core::{solve_lp, StationaryPolicy, TabularCmdp};
use rand::Rng;
use serde::Serialize;

use crate::config::TheoremSection;
use crate::HarnessError;

/// A small instance with a strictly feasible reference policy.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub cmdp: TabularCmdp,
    pub slater_policy: StationaryPolicy,
}

/// Random fixtures with sizes drawn up to the configured limits, plus an
/// optional copy of the first one whose constraints can never bind.
pub fn fixtures(section: &TheoremSection, seed: u64) -> Vec<Fixture> {
    let mut rng = rng_stream(seed, 0, Purpose::Custom(0x7e0));
    let mut out: Vec<Fixture> = (0..section.fixtures)
        .map(|i| {
            let spec = RandomSpec {
                n_states: rng.random_range(2..=section.max_states),
                max_actions: rng.random_range(2..=section.max_actions.max(2)),
                n_constraints: rng.random_range(1..=section.max_constraints),
                discount: section.discount,
                slack: section.slack,
            };
            let inst = random_instance(rng.random(), &spec);
            Fixture {
                name: format!("random-{i} (S={}, A≤{}, K={})", spec.n_states, spec.max_actions, spec.n_constraints),
                cmdp: inst.cmdp,
                slater_policy: inst.slater_policy,
            }
        })
        .collect();
    if section.vacuous_fixture {
        if let Some(first) = out.first().cloned() {
            // auxiliary costs lie in [0, 1), so a threshold of 2 never binds
            let k = first.cmdp.n_constraints();
            out.push(Fixture {
                name: "vacuous".into(),
                cmdp: first.cmdp.with_thresholds(vec![2.0; k]).expect("same constraint count"),
                slater_policy: first.slater_policy,
            });
        }
    }
    out
}

/// Allowance for floating-point roundoff when a bound is tight (for example
/// a gap bound of exactly zero met by an LP value computed another way).
pub const ROUNDOFF: f64 = 1e-10;

/// One inequality at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub fixture: String,
    pub schedule: StepKind,
    pub horizon: usize,
    pub quantity: &'static str,
    pub measured: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Runs the exact primal-dual loop from the uniform policy with `λ_0 = 0`
/// and compares, at every horizon, the averaged policy's violation and gap
/// with the bounds computed from the run's own constants.
pub fn theorem_check(
    fixture: &Fixture,
    schedule: StepSchedule,
    horizons: &[usize],
    dual_slack: f64,
) -> Result<Vec<BoundRow>, HarnessError> {
    let cmdp = &fixture.cmdp;
    let oracle = solve_lp(cmdp)?;
    let (c_slater, d_slater) = costs_of_policy(cmdp, &fixture.slater_policy)?;
    let m_bound = slater_lambda_bound(cmdp.cost_lower_bound(), (c_slater, &d_slater), cmdp.thresholds())
        .map_err(|e| HarnessError::Check(e.to_string()))?;
    let domain = DualDomain::new(m_bound, dual_slack)?;
    let start = StationaryPolicy::uniform(cmdp.action_counts());
    let lambda0 = vec![0.0; cmdp.n_constraints()];
    let t_max = horizons.iter().copied().max().unwrap_or(0);
    let out = run(
        &TabularProblem::new(cmdp),
        &SolverConfig {
            schedule,
            iterations: t_max,
            initial_policy: start.clone(),
            initial_lambda: lambda0.clone(),
            domain,
            evaluator: EvaluatorKind::Exact,
            seed: 0,
        },
    )?;
    let phi0 = weighted_kl(cmdp, &oracle.policy_star, &oracle.policy_star, &start)?;
    let (kappa1, kappa2) = schedule_kappas(&schedule, horizons);
    let mut rows = Vec::new();
    for &t in horizons {
        let record = &out.trail[t - 1];
        let g = out.trail[..t].iter().map(|r| r.subgrad_norm.max(r.q_sup)).fold(0.0, f64::max);
        let constants = TheoremConstants {
            g,
            kappa1,
            kappa2,
            phi0,
            lambda_star_norm: oracle.multiplier_norm(),
            lambda0_norm: cmdp_core::primal_dual::norm(&lambda0),
        };
        let bounds = theorem1_bounds(&constants, &schedule, t, dual_slack, cmdp.discount())
            .map_err(|e| HarnessError::Check(e.to_string()))?;
        let gap = record.running_avg_objective - oracle.c_star;
        let row = |quantity, measured: f64, bound: f64, holds| BoundRow {
            fixture: fixture.name.clone(),
            schedule: schedule.kind,
            horizon: t,
            quantity,
            measured,
            bound,
            holds,
        };
        rows.push(row("violation", record.running_violation, bounds.violation, record.running_violation <= bounds.violation + ROUNDOFF));
        rows.push(row("gap-upper", gap, bounds.gap_upper, gap <= bounds.gap_upper + ROUNDOFF));
        rows.push(row("gap-lower", gap, bounds.gap_lower, gap >= bounds.gap_lower - ROUNDOFF));
    }
    Ok(rows)
}

/// CSV `fixture,schedule,T,quantity,measured,bound,holds`.
pub fn bounds_csv(rows: &[BoundRow]) -> String {
    let mut out = String::from("fixture,schedule,T,quantity,measured,bound,holds\n");
    for r in rows {
        let kind = match r.schedule {
            StepKind::Constant => "constant",
            StepKind::InverseSqrt => "inverse-sqrt",
        };
        out.push_str(&format!(
            "\"{}\",{kind},{},{},{:?},{:?},{}\n",
            r.fixture, r.horizon, r.quantity, r.measured, r.bound, r.holds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section() -> TheoremSection {
        TheoremSection {
            fixtures: 1,
            max_states: 4,
            max_actions: 2,
            max_constraints: 1,
            discount: 0.8,
            slack: 0.05,
            horizons: vec![100, 1000],
            schedules: vec![StepKind::InverseSqrt],
            step: 1.0,
            dual_slack: 1.0,
            vacuous_fixture: true,
        }
    }

    #[test]
    fn bounds_hold_on_a_small_fixture() {
        let fx = fixtures(&section(), 1);
        assert_eq!(fx.len(), 2);
        for f in &fx {
            let rows = theorem_check(f, StepSchedule::inverse_sqrt(1.0), &[100, 1000], 1.0).unwrap();
            assert_eq!(rows.len(), 6);
            assert!(rows.iter().all(|r| r.holds), "{rows:?}");
        }
    }

    #[test]
    fn vacuous_constraints_are_never_violated() {
        let fx = fixtures(&section(), 2);
        let rows = theorem_check(&fx[1], StepSchedule::constant(0.5), &[100], 1.0).unwrap();
        let v = rows.iter().find(|r| r.quantity == "violation").unwrap();
        assert_eq!(v.measured, 0.0);
        assert!(v.holds);
    }

    #[test]
    fn fixtures_respect_size_limits() {
        let s = TheoremSection { fixtures: 20, max_states: 6, max_actions: 3, max_constraints: 2, ..section() };
        for f in fixtures(&s, 3) {
            assert!((2..=6).contains(&f.cmdp.n_states()));
            assert!((2..=3).contains(&f.cmdp.max_actions()));
            assert!((1..=2).contains(&f.cmdp.n_constraints()));
        }
    }
}
