//! One function per experiment kind: build the models, run, compare, and
//! collect artifacts.

use cmdp_core::evaluator::TabularProblem;
use cmdp_core::primal_dual::{
    run, slater_lambda_bound, trail_to_csv, DualDomain, IterationRecord, SolverConfig, StepKind, StepSchedule,
};
use cmdp_core::random::{random_instance, RandomSpec};
use cmdp_core::rng::derive_seed;
use cmdp_core::weakly_coupled::{run_decomposed, solve_relaxed_lp, DecomposablePolicy};
use cmdp_core::{costs_of_policy, solve_lp, StationaryPolicy};
use cmdp_envs::inventory::{build_tabular, decompose, run_experiment, InventoryExperiment, InventorySummary};
use cmdp_envs::queue::experiment::{evaluations_csv, PolicyEvaluation};
use cmdp_envs::queue::threshold::{is_non_increasing, threshold_csv, threshold_scan, ThresholdPoint};
use cmdp_envs::queue::{run_queue_experiment, CostRegime, QueueExperiment};
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind, QueueScale, QueueSection};
use crate::rates::{rate_csv, rate_regression, RateFit};
use crate::report::{Artifact, Check, Report};
use crate::theorem::{bounds_csv, fixtures, theorem_check, ROUNDOFF};
use crate::HarnessError;

pub fn schedule_name(kind: StepKind) -> &'static str {
    match kind {
        StepKind::Constant => "constant",
        StepKind::InverseSqrt => "inverse-sqrt",
    }
}

fn regime_name(r: CostRegime) -> &'static str {
    match r {
        CostRegime::Large => "large",
        CostRegime::Small => "small",
    }
}

/// Runs whatever experiment `cfg` describes.
pub fn execute(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::OracleCheck => oracle_check(cfg),
        ExperimentKind::Inventory => inventory(cfg),
        ExperimentKind::RandomCmdp => random_cmdp(cfg),
        ExperimentKind::TheoremCheck => theorem(cfg),
        ExperimentKind::DecompositionCheck => decomposition(cfg),
        ExperimentKind::Invariants => invariants(cfg),
        ExperimentKind::Queue => queue(cfg),
    }
}

fn report(cfg: &ExperimentConfig, checks: Vec<Check>, summary: serde_json::Value, artifacts: Vec<Artifact>) -> Report {
    Report { experiment: cfg.experiment, seed: cfg.seed, checks, summary, artifacts }
}

fn oracle_check(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let sec = cfg.oracle()?;
    let model = sec.model();
    let sol = solve_relaxed_lp(&decompose(&model)?)?;
    let scale = 1.0 / (1.0 - model.discount);
    let unnormalized = sol.c_star * scale;
    let checks = vec![Check::within(
        "optimal cost (unnormalized)",
        unnormalized,
        sec.expected - sec.tolerance,
        sec.expected + sec.tolerance,
    )];
    let summary = json!({
        "c_star": sol.c_star,
        "c_star_unnormalized": unnormalized,
        "multipliers": sol.multipliers,
        "dual_slacks": sol.dual_slacks,
        "expected_unnormalized": sec.expected,
    });
    let artifacts = vec![Artifact::new("oracle.json", serde_json::to_string_pretty(&sol).expect("serializes"))];
    Ok(report(cfg, checks, summary, artifacts))
}

/// Per-iteration plot data on both cost scales.
fn costs_csv(trail: &[IterationRecord], scale: f64) -> String {
    let mut out = String::from(
        "m,running_avg_cost,running_avg_cost_unnormalized,objective_unnormalized,running_violation,running_violation_unnormalized,constraint,constraint_unnormalized\n",
    );
    for r in trail {
        let d = r.constraint_vals.first().copied().unwrap_or(0.0);
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            r.m,
            r.running_avg_objective,
            r.running_avg_objective * scale,
            r.objective * scale,
            r.running_violation,
            r.running_violation * scale,
            d,
            d * scale
        ));
    }
    out
}

#[derive(Serialize)]
struct InventoryRun {
    schedule: &'static str,
    summary: InventorySummary,
    averaged_violation_unnormalized: f64,
    rate: Option<RateFit>,
    rate_error: Option<String>,
}

fn inventory(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let sec = cfg.inventory()?;
    let model = sec.model();
    let scale = 1.0 / (1.0 - model.discount);
    let c_star = solve_relaxed_lp(&decompose(&model)?)?.c_star;
    let mut runs = Vec::new();
    let mut artifacts = Vec::new();
    let mut checks = Vec::new();
    for &kind in &sec.schedules {
        for k in 0..sec.runs {
            let seed = cfg.seed + k as u64;
            let exp = InventoryExperiment {
                config: model.clone(),
                schedule: StepSchedule { kind, base: sec.step },
                iterations: sec.iterations,
                evaluator: sec.evaluator.build(),
                seed,
                dual_slack: sec.dual_slack,
            };
            let rep = run_experiment(&exp)?;
            let tag = format!("{}_seed{seed}", schedule_name(kind));
            let trail_csv = trail_to_csv(rep.trail());
            if artifacts.is_empty() {
                artifacts.push(Artifact::new("trail.csv", trail_csv.clone()));
            }
            artifacts.push(Artifact::new(format!("trail_{tag}.csv"), trail_csv));
            artifacts.push(Artifact::new(format!("costs_{tag}.csv"), costs_csv(rep.trail(), scale)));
            artifacts.push(Artifact::new(format!("rate_{tag}.csv"), rate_csv(rep.trail(), kind, scale)));
            let rate = rate_regression(rep.trail(), kind);
            if let Some(acc) = &sec.acceptance {
                let s = &rep.summary;
                if kind == StepKind::Constant {
                    checks.push(Check::within(
                        format!("{tag}: final averaged cost (unnormalized)"),
                        s.final_avg_cost_unnormalized,
                        acc.cost[0],
                        acc.cost[1],
                    ));
                    checks.push(Check::within(
                        format!("{tag}: violation of the averaged policy"),
                        s.averaged_violation,
                        acc.violation[0],
                        acc.violation[1],
                    ));
                }
                let r2 = rate.as_ref().map_or(f64::NAN, |f| f.r_squared);
                checks.push(Check::at_least(format!("{tag}: rate regression R²"), r2, acc.min_r2));
            }
            runs.push(InventoryRun {
                schedule: schedule_name(kind),
                averaged_violation_unnormalized: rep.summary.averaged_violation * scale,
                summary: rep.summary,
                rate_error: rate.as_ref().err().map(|e| e.to_string()),
                rate: rate.ok(),
            });
        }
    }
    let summary = json!({
        "lp_optimum": c_star,
        "lp_optimum_unnormalized": c_star * scale,
        "runs": runs,
    });
    Ok(report(cfg, checks, summary, artifacts))
}

fn random_cmdp(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let sec = cfg.random()?;
    let spec = RandomSpec {
        n_states: sec.n_states,
        max_actions: sec.max_actions,
        n_constraints: sec.n_constraints,
        discount: sec.discount,
        slack: sec.slack,
    };
    let inst = random_instance(cfg.seed, &spec);
    let cmdp = &inst.cmdp;
    let oracle = solve_lp(cmdp)?;
    let (c, d) = costs_of_policy(cmdp, &inst.slater_policy)?;
    let m_bound = slater_lambda_bound(cmdp.cost_lower_bound(), (c, &d), cmdp.thresholds())
        .map_err(|e| HarnessError::Check(e.to_string()))?;
    let out = run(
        &TabularProblem::new(cmdp),
        &SolverConfig {
            schedule: StepSchedule { kind: sec.schedule, base: sec.step },
            iterations: sec.iterations,
            initial_policy: StationaryPolicy::uniform(cmdp.action_counts()),
            initial_lambda: vec![0.0; cmdp.n_constraints()],
            domain: DualDomain::new(m_bound, sec.dual_slack)?,
            evaluator: sec.evaluator.build(),
            seed: derive_seed(cfg.seed, 1),
        },
    )?;
    let last = out.final_record();
    let summary = json!({
        "c_star": oracle.c_star,
        "final_avg_cost": last.running_avg_objective,
        "gap": last.running_avg_objective - oracle.c_star,
        "averaged_violation": last.running_violation,
        "lambda_bar": out.lambda_bar,
        "multipliers": oracle.multipliers,
        "dual_radius": m_bound + sec.dual_slack,
    });
    let artifacts = vec![
        Artifact::new("trail.csv", trail_to_csv(&out.trail)),
        Artifact::new("instance.json", cmdp.to_json()),
    ];
    Ok(report(cfg, Vec::new(), summary, artifacts))
}

fn theorem(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let sec = cfg.theorem()?;
    let mut rows = Vec::new();
    for fx in fixtures(sec, cfg.seed) {
        for &kind in &sec.schedules {
            rows.extend(theorem_check(&fx, StepSchedule { kind, base: sec.step }, &sec.horizons, sec.dual_slack)?);
        }
    }
    let checks = rows
        .iter()
        .map(|r| {
            let name = format!("{} {} T={} {}", r.fixture, schedule_name(r.schedule), r.horizon, r.quantity);
            if r.quantity == "gap-lower" {
                Check::at_least(name, r.measured, r.bound - ROUNDOFF)
            } else {
                Check::at_most(name, r.measured, r.bound + ROUNDOFF)
            }
        })
        .collect();
    let summary = json!({ "rows": rows });
    Ok(report(cfg, checks, summary, vec![Artifact::new("theorem.csv", bounds_csv(&rows))]))
}

fn decomposition(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let sec = cfg.decomposition()?;
    let model = sec.model();
    let joint = build_tabular(&model)?;
    let wc = decompose(&model)?;
    let k = wc.n_constraints();
    let schedule = StepSchedule { kind: sec.schedule, base: sec.step };
    let domain = DualDomain { radius: sec.dual_radius, slack: sec.dual_slack };
    let evaluator = cmdp_core::primal_dual::EvaluatorKind::Exact;
    let lambda0 = vec![0.0; k];
    let dec = run_decomposed(
        &wc,
        &SolverConfig {
            schedule,
            iterations: sec.iterations,
            initial_policy: DecomposablePolicy::uniform(&wc),
            initial_lambda: lambda0.clone(),
            domain,
            evaluator,
            seed: cfg.seed,
        },
    )?;
    let full = run(
        &TabularProblem::new(&joint),
        &SolverConfig {
            schedule,
            iterations: sec.iterations,
            initial_policy: StationaryPolicy::uniform(joint.action_counts()),
            initial_lambda: lambda0,
            domain,
            evaluator,
            seed: cfg.seed,
        },
    )?;
    let mut worst: f64 = 0.0;
    for (a, b) in dec.trail.iter().zip(&full.trail) {
        worst = worst.max((a.objective - b.objective).abs());
        worst = worst.max((a.running_avg_objective - b.running_avg_objective).abs());
        for (x, y) in a.lambda.iter().zip(&b.lambda).chain(a.constraint_vals.iter().zip(&b.constraint_vals)) {
            worst = worst.max((x - y).abs());
        }
    }
    let checks = vec![
        Check::at_most("largest per-iteration trail difference", worst, sec.tolerance),
        Check::holds("trails have equal length", dec.trail.len() == full.trail.len()),
    ];
    let summary = json!({
        "max_abs_difference": worst,
        "joint_states": joint.n_states(),
        "joint_pairs": joint.n_pairs(),
        "final_avg_cost": dec.final_record().running_avg_objective,
    });
    let artifacts = vec![
        Artifact::new("trail_decomposed.csv", trail_to_csv(&dec.trail)),
        Artifact::new("trail_joint.csv", trail_to_csv(&full.trail)),
    ];
    Ok(report(cfg, checks, summary, artifacts))
}

fn invariants(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let checks = crate::invariants::run_invariants(cfg.invariants()?, cfg.seed)?;
    let summary = json!({ "suites": checks.len() });
    Ok(report(cfg, checks, summary, Vec::new()))
}

fn queue_experiment(sec: &QueueSection, regime: CostRegime, discount: f64, seed: u64) -> QueueExperiment {
    let mut exp = match sec.scale {
        QueueScale::Scaled => QueueExperiment::scaled(regime, seed),
        QueueScale::Standard => QueueExperiment::standard(regime, discount, seed),
    };
    if let Some(v) = sec.iterations {
        exp.iterations = v;
    }
    if let Some(v) = sec.step {
        exp.step = v;
    }
    if let Some(v) = sec.training_replications {
        exp.training_replications = v;
    }
    if let Some(v) = sec.evaluation_replications {
        exp.evaluation_replications = v;
    }
    if let Some(v) = sec.states {
        exp.vfa.n_states = v;
    }
    if let Some(v) = sec.q_replications {
        exp.vfa.q_replications = v;
    }
    exp
}

#[derive(Serialize)]
struct QueueRun {
    regime: &'static str,
    discount: f64,
    evaluations: Vec<PolicyEvaluation>,
    final_lambda: Vec<f64>,
    /// Per iteration, per class: in-sample RMSE of each action's fit.
    fit_rmse: Vec<Vec<Vec<f64>>>,
    thresholds: Vec<Vec<ThresholdPoint>>,
}

fn combined_se(a: &PolicyEvaluation, b: &PolicyEvaluation) -> f64 {
    (a.se * a.se + b.se * b.se).sqrt()
}

fn queue(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    let sec = cfg.queue()?;
    if sec.scale == QueueScale::Standard && !sec.allow_long_running {
        return Err(HarnessError::Gated(
            "the full-size queue study runs for hours; set `allow_long_running = true` in [queue]".into(),
        ));
    }
    let discounts = match sec.scale {
        QueueScale::Scaled => vec![0.9],
        QueueScale::Standard => sec.discounts.clone(),
    };
    let mut checks = Vec::new();
    let mut runs = Vec::new();
    let mut artifacts = Vec::new();
    let mut table = String::from("regime,policy,discount,mean,se,replications,violations\n");
    for &regime in &sec.regimes {
        for &g in &discounts {
            let exp = queue_experiment(sec, regime, g, cfg.seed);
            let rep = run_queue_experiment(&exp)?;
            let tag = format!("{}_g{g}", regime_name(regime));
            for line in evaluations_csv(g, &rep.evaluations).lines().skip(1) {
                table.push_str(&format!("{},{line}\n", regime_name(regime)));
            }
            artifacts.push(Artifact::new(format!("trail_{tag}.csv"), trail_to_csv(rep.training.trail())));
            let find = |name: &str| rep.evaluation(name).expect("all three policies are evaluated");
            let (pd, mp, cmu) = (find("primal-dual"), find("modified-max-pressure"), find("modified-cmu"));
            let violations: usize = rep.evaluations.iter().map(|e| e.violations).sum();
            let policy = rep.training.final_policy(&exp.config);
            let mut curves = Vec::new();
            for t in &sec.thresholds {
                let acts = &policy.actions[t.class];
                let pts = threshold_scan(
                    &exp.config,
                    t.class,
                    acts,
                    |s| policy.classes[t.class].most_probable(s),
                    t.varied_pool,
                    &t.fixed,
                    t.range[0]..=t.range[1],
                    t.max_queue,
                );
                artifacts.push(Artifact::new(
                    format!("threshold_{tag}_class{}_pool{}.csv", t.class + 1, t.varied_pool + 1),
                    threshold_csv(&pts),
                ));
                if sec.scale == QueueScale::Scaled {
                    checks.push(Check::holds(
                        format!("{tag}: class {} threshold non-increasing in Z{}{}", t.class + 1, t.class + 1, t.varied_pool + 1),
                        is_non_increasing(&pts),
                    ));
                }
                curves.push(pts);
            }
            match sec.scale {
                QueueScale::Scaled => {
                    checks.push(Check::at_most(
                        format!("{tag}: primal-dual mean minus max-pressure mean"),
                        pd.mean - mp.mean,
                        2.0 * combined_se(pd, mp),
                    ));
                    checks.push(Check::at_most(format!("{tag}: hard-constraint violations"), violations as f64, 0.0));
                }
                QueueScale::Standard if (g - 0.99).abs() < 1e-12 => {
                    checks.push(Check::at_most(format!("{tag}: primal-dual minus max-pressure"), pd.mean - mp.mean, 0.0));
                    checks.push(Check::at_most(format!("{tag}: primal-dual minus cmu"), pd.mean - cmu.mean, 0.0));
                }
                QueueScale::Standard => {}
            }
            runs.push(QueueRun {
                regime: regime_name(regime),
                discount: g,
                evaluations: rep.evaluations.clone(),
                final_lambda: rep.training.output.last_lambda.clone(),
                fit_rmse: rep.training.fit_rmse.clone(),
                thresholds: curves,
            });
        }
    }
    artifacts.push(Artifact::new("queue_summary.csv", table));
    Ok(report(cfg, checks, json!({ "runs": runs }), artifacts))
}
