use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_learnchan"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const BIANCHINI: &str = r#"
name = "tiny"

[data]
source = "bianchini"
k = 0
n_train = 300
n_validation = 100
seed = 1

[network]
hidden = [8]
hidden_transfer = "tanh"
output_transfer = "logistic"

[channel]
algorithm = "rbp"

[train]
epochs = 3
batch_size = 10
learning_rate = 0.1
seed = 5
"#;

fn epoch_lines(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| l.contains("\"kind\":\"epoch\""))
        .map(str::to_owned)
        .collect()
}

#[test]
fn missing_config_exits_2() {
    let o = run(&["train", "--config", "/nonexistent/x.toml", "--quiet"]);
    assert_eq!(code(&o), 2);
    let o = run(&["ode", "--config", "/nonexistent/x.toml"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["train"])), 2);
    assert_eq!(code(&run(&["verify", "--only", "11"])), 2);
}

#[test]
fn unknown_system_is_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = fs::read_to_string(configs().join("chain-L4-arbp.toml")).unwrap().replace("\"chain\"", "\"spiral\"");
    fs::write(&cfg, text).unwrap();
    let o = run(&["ode", "--config", path(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema error"));
}

#[test]
fn chain_l4_report_has_three_tracking_invariants() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["ode", "--config", path(&configs().join("chain-L4-arbp.toml")), "--out", path(out.path()), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    let tracking = report["report"]["invariants"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|i| i["class"] == "tracking")
        .count();
    assert_eq!(tracking, 3);
    assert_eq!(report["report"]["verdict"], "converged");
    let csv = fs::read_to_string(out.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("# {"));
    assert!(csv.lines().nth(1).unwrap().starts_with("t,a1,a2,a3,a4,c1,c2,c3"));
}

#[test]
fn sweep_of_ten_writes_ten_reports() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "ode",
        "--config",
        path(&configs().join("chain-L3-asrbp.toml")),
        "--out",
        path(out.path()),
        "--sweep",
        "10",
        "--quiet",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let reports = (0..10).filter(|i| out.path().join(format!("run-{i:03}/report.json")).exists()).count();
    assert_eq!(reports, 10);
    let sweep: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep.as_array().unwrap().len(), 10);
}

#[test]
fn seed_override_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, BIANCHINI).unwrap();
    let train = |seed: &str, out: &Path| {
        let o = run(&["train", "--config", path(&cfg), "--out", path(out), "--seed", seed, "--quiet"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        epoch_lines(out)
    };
    let a = train("7", &dir.path().join("a"));
    let b = train("7", &dir.path().join("b"));
    let c = train("8", &dir.path().join("c"));
    assert_eq!(a.len(), 3);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let resolved = fs::read_to_string(dir.path().join("a/config.resolved.toml")).unwrap();
    assert!(resolved.starts_with("# seed = 7"));
    // Defaults are echoed, not left implicit.
    assert!(resolved.contains("momentum = 0.0"));
    assert!(resolved.contains("architecture = \"conjoined\""));
}

#[test]
fn mnist_config_trains_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m.toml");
    let data = configs().join("../data/mnist5k");
    let text = fs::read_to_string(configs().join("mnist-conjoined-srbp.toml"))
        .unwrap()
        .replace("../data/mnist5k", path(&data))
        .replace("epochs = 30", "epochs = 1")
        .replace("[data]\n", "[data]\nlimit = 500\n");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("run");
    let o = run(&["train", "--config", path(&cfg), "--out", path(&out), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(epoch_lines(&out).len(), 1);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"]["status"], "completed");
}

#[test]
fn data_command_exports_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("d.toml");
    fs::write(&cfg, "[data]\nsource = \"bianchini\"\nk = 1\nn_train = 50\nn_validation = 10\nseed = 3\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["data", "--config", path(&cfg), "--out", path(&out), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("train.csv")).unwrap().lines().count(), 50);
    assert_eq!(fs::read_to_string(out.join("validation.csv")).unwrap().lines().count(), 10);
}

#[test]
fn verify_runs_selected_rows() {
    let o = run(&["verify", "--configs", path(&configs()), "--only", "1,9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
}
