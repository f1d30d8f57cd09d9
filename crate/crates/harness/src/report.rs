//! Pass/fail checks and the artifacts an experiment leaves behind.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentKind;

/// A measured quantity compared against an allowed range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub passed: bool,
}

impl Check {
    pub fn within(name: impl Into<String>, measured: f64, lower: f64, upper: f64) -> Self {
        Self::bounded(name, measured, Some(lower), Some(upper))
    }
    pub fn at_most(name: impl Into<String>, measured: f64, upper: f64) -> Self {
        Self::bounded(name, measured, None, Some(upper))
    }
    pub fn at_least(name: impl Into<String>, measured: f64, lower: f64) -> Self {
        Self::bounded(name, measured, Some(lower), None)
    }
    /// A yes/no property, recorded as measured 1 (holds) or 0.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }

    fn bounded(name: impl Into<String>, measured: f64, lower: Option<f64>, upper: Option<f64>) -> Self {
        // NaN never passes
        let passed = lower.is_none_or(|lo| measured >= lo) && upper.is_none_or(|hi| measured <= hi) && !measured.is_nan();
        Self { name: name.into(), measured, lower, upper, passed }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {:.6}", self.name, self.measured)?;
        match (self.lower, self.upper) {
            (Some(lo), Some(hi)) => write!(f, " (allowed [{lo}, {hi}])"),
            (Some(lo), None) => write!(f, " (allowed ≥ {lo})"),
            (None, Some(hi)) => write!(f, " (allowed ≤ {hi:.6})"),
            (None, None) => Ok(()),
        }
    }
}

/// A named file produced by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    pub fn new(name: impl Into<String>, contents: impl Into<String>) -> Self {
        Self { name: name.into(), contents: contents.into() }
    }
}

/// Outcome of one experiment. Everything written to disk depends only on the
/// configuration and seed, never on timing.
#[derive(Debug, Clone)]
pub struct Report {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub summary: serde_json::Value,
    pub artifacts: Vec<Artifact>,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    experiment: ExperimentKind,
    seed: u64,
    passed: bool,
    checks: &'a [Check],
    results: &'a serde_json::Value,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn summary_json(&self) -> String {
        let file = SummaryFile {
            experiment: self.experiment,
            seed: self.seed,
            passed: self.passed(),
            checks: &self.checks,
            results: &self.summary,
        };
        serde_json::to_string_pretty(&file).expect("summary serializes")
    }

    /// Writes every artifact plus `summary.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for a in &self.artifacts {
            std::fs::write(dir.join(&a.name), &a.contents)?;
        }
        std::fs::write(dir.join("summary.json"), self.summary_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_are_inclusive_and_nan_fails() {
        assert!(Check::within("x", 1.0, 1.0, 2.0).passed);
        assert!(!Check::within("x", 2.5, 1.0, 2.0).passed);
        assert!(Check::at_most("x", -4.0, 0.0).passed);
        assert!(!Check::at_least("x", f64::NAN, 0.0).passed);
        assert!(!Check::holds("x", false).passed);
    }

    #[test]
    fn display_names_the_verdict() {
        let s = Check::at_most("violation", 0.5, 0.4).to_string();
        assert!(s.starts_with("FAIL violation"), "{s}");
    }

    #[test]
    fn writes_artifacts_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let r = Report {
            experiment: ExperimentKind::Invariants,
            seed: 4,
            checks: vec![Check::holds("ok", true)],
            summary: serde_json::json!({"value": 1}),
            artifacts: vec![Artifact::new("a.csv", "x\n1\n")],
        };
        r.write_to(dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("a.csv")).unwrap(), "x\n1\n");
        let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(s["passed"], true);
        assert_eq!(s["results"]["value"], 1);
    }
}
