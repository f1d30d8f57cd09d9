use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn harness(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmdp-harness"))
        .args(args)
        .current_dir(dir)
        .env_remove("CMDP_PD_WORKERS")
        .output()
        .expect("binary runs")
}

const RANDOM: &str = "experiment = \"random-cmdp\"\nseed = 9\n\n[random]\nn_states = 5\nmax_actions = 3\nn_constraints = 2\ndiscount = 0.8\nslack = 0.1\nschedule = \"constant\"\nstep = 0.5\niterations = 120\nevaluator = { kind = \"monte-carlo\", replications = 20, horizon = 15 }\n";

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("random.toml"), RANDOM).unwrap();
    for (out, workers) in [("a", "1"), ("b", "3")] {
        let o = harness(&["run", "--config", "random.toml", "--out", out, "--workers", workers], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["trail.csv", "summary.json", "instance.json"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs between runs");
    }
}

#[test]
fn trail_has_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("random.toml"), RANDOM).unwrap();
    let o = harness(&["run", "--config", "random.toml", "--out", "o"], dir.path());
    assert!(o.status.success());
    let trail = fs::read_to_string(dir.path().join("o/trail.csv")).unwrap();
    let mut lines = trail.lines();
    assert!(lines.next().unwrap().starts_with("m,eta,lambda_1,lambda_2,objective,D_1,D_2,"));
    assert_eq!(lines.count(), 120);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "random-cmdp");
    assert_eq!(summary["seed"], 9);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("random.toml"), RANDOM).unwrap();
    harness(&["run", "--config", "random.toml", "--out", "a"], dir.path());
    let o = harness(&["run", "--config", "random.toml", "--out", "b", "--seed", "10"], dir.path());
    assert!(o.status.success());
    let a = fs::read(dir.path().join("a/trail.csv")).unwrap();
    let b = fs::read(dir.path().join("b/trail.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = harness(&["run", "--config", "nope.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nope.toml") && err.contains("Usage"), "{err}");
}

#[test]
fn missing_required_argument_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(harness(&["run"], dir.path()).status.code(), Some(2));
}

#[test]
fn malformed_and_mismatched_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "experiment = \"random-cmdp\"\n").unwrap();
    assert_eq!(harness(&["run", "--config", "bad.toml"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("random.toml"), RANDOM).unwrap();
    let o = harness(&["inventory", "--config", "random.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("expects"));
}

#[test]
fn full_queue_study_is_gated() {
    let dir = tempfile::tempdir().unwrap();
    let o = harness(&["queue-full"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gated"));
}

#[test]
fn failed_checks_set_exit_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "experiment = \"oracle-check\"\nseed = 0\n[oracle]\ninstance = \"reduced\"\nexpected = 1e6\ntolerance = 1.0\n";
    fs::write(dir.path().join("oracle.toml"), cfg).unwrap();
    let o = harness(&["oracle-check", "--config", "oracle.toml", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("FAIL"));
    assert!(dir.path().join("o/oracle.json").exists());
}

#[test]
fn presets_can_be_printed() {
    let dir = tempfile::tempdir().unwrap();
    let o = harness(&["show-preset", "queue-scaled"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("experiment = \"queue\""));
    assert_eq!(harness(&["show-preset", "nothing"], dir.path()).status.code(), Some(2));
}
