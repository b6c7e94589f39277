use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn roadsense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadsense")).args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const MINIMAL: &str = r#"
sensors = 2
walk_length = 2
support_size = 6
epsilon = 0.1
budget = 12
seeds = [0]
algorithms = ["d2fas", "full-gp-centralized"]

[network]
kind = "grid"
size = 3

[kernel]
length_scale = 0.5
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn minimal_config_runs_and_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), MINIMAL);
    let out = roadsense(&["run", "--config", &config]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(dir.path().join("exp.metrics.csv")).unwrap();
    let mut lines = table.lines();
    assert!(lines.next().unwrap().starts_with("round,algorithm"));
    assert!(lines.count() >= 2);
}

#[test]
fn explicit_output_path_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), MINIMAL);
    let target = dir.path().join("sub").join("m.csv");
    let out = roadsense(&["run", "--config", &config, "--out", target.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(fs::metadata(&target).unwrap().len() > 0);
}

#[test]
fn zero_epsilon_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &MINIMAL.replace("epsilon = 0.1", "epsilon = 0.0"));
    let out = roadsense(&["run", "--config", &config]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("epsilon"));
}

#[test]
fn unknown_algorithm_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &MINIMAL.replace("\"d2fas\",", "\"magic\","));
    let out = roadsense(&["run", "--config", &config]);
    assert!(!out.status.success());
    let msg = stderr(&out);
    assert!(msg.contains("magic"));
    for name in ["d2fas", "full-gp-centralized", "sod-centralized"] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn every_problem_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("epsilon = 0.1", "epsilon = -1.0\ncolour = 3").replace("sensors = 2", "sensors = 0");
    let config = write_config(dir.path(), &text);
    let out = roadsense(&["run", "--config", &config]);
    assert!(!out.status.success());
    let msg = stderr(&out);
    assert!(msg.contains("epsilon") && msg.contains("colour") && msg.contains("sensors"), "{msg}");
}

#[test]
fn missing_config_fails() {
    let out = roadsense(&["run", "--config", "/nonexistent/exp.toml"]);
    assert!(!out.status.success());
}

#[test]
fn gen_network_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = roadsense(&["gen-network", "--kind", "random", "--size", "50", "--seed", "4", "--out", p.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn generated_network_feeds_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.csv");
    let out = roadsense(&["gen-network", "--kind", "grid", "--size", "3", "--out", net.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = MINIMAL.replace("kind = \"grid\"\nsize = 3", "path = \"net.csv\"");
    let config = write_config(dir.path(), &text);
    let out = roadsense(&["run", "--config", &config]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn unknown_network_kind_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = roadsense(&["gen-network", "--kind", "hex", "--size", "5", "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!out.status.success());
}

fn verify(suite: &str, trials: &str) -> serde_json::Value {
    let out = roadsense(&["verify", "--suite", suite, "--trials", trials, "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn verify_equivalence_passes_every_trial() {
    let r = verify("equivalence", "100");
    assert_eq!(r["passed"], 100);
    assert_eq!(r["all_passed"], true);
}

#[test]
fn verify_bound_and_kernel_pass() {
    let r = verify("bound", "50");
    assert_eq!(r["failed"], 0);
    assert_eq!(r["passed"].as_u64().unwrap() + r["skipped"].as_u64().unwrap(), 50);
    let r = verify("kernel", "100");
    assert_eq!(r["passed"], 100);
}

#[test]
fn verify_rejects_zero_trials_and_unknown_suites() {
    assert!(!roadsense(&["verify", "--suite", "kernel", "--trials", "0"]).status.success());
    assert!(!roadsense(&["verify", "--suite", "nope", "--trials", "1"]).status.success());
}

#[test]
fn bench_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{MINIMAL}\n[bench]\nsensor_counts = [1, 2]\nobservations = 20\nrepetitions = 1\n");
    let config = write_config(dir.path(), &text);
    let out = roadsense(&["bench", "--config", &config]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(dir.path().join("exp.bench.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}
