use std::fs;
use std::path::Path;
use std::process::Command;

const DUALITY: &str = r#"
schema = 1
scenario = "duality-check"
d = 2
seed = 7
t = 0.5
a = [[0, 1], [1, 0]]
r0 = [0.8, 0.2]
b0 = [1, 0]

[measure]
family = "atomic"
atoms = [{ weight = 1.0, matrix = [[0, 1], [1, 0]] }]
"#;

fn dicekit(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dicekit"))
        .args(args)
        .current_dir(dir)
        .env_remove("DICEKIT_OUT")
        .env_remove("CI")
        .output()
        .expect("binary runs");
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    (out.status.code().unwrap_or(-1), stderr)
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn duality_scenario_writes_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DUALITY);
    let (code, stderr) = dicekit(
        &["duality-check", "--config", &cfg, "--out", "run", "--paths", "4000"],
        dir.path(),
    );
    assert_eq!(code, 0, "{stderr}");
    let text = fs::read_to_string(dir.path().join("run/result.jsonl")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1);
    let record: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(record["scenario"], "duality-check");
    assert_eq!(record["verdict"], "pass");
    assert_eq!(record["config"]["paths"], 4000);
    assert_eq!(record["config_hash"].as_str().unwrap().len(), 64);
    assert!(record.get("started").is_none());
}

#[test]
fn same_seed_same_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DUALITY);
    for out in ["a", "b"] {
        let (code, stderr) =
            dicekit(&["duality-check", "--config", &cfg, "--out", out, "--paths", "500"], dir.path());
        assert_eq!(code, 0, "{stderr}");
    }
    let a = fs::read(dir.path().join("a/result.jsonl")).unwrap();
    let b = fs::read(dir.path().join("b/result.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &DUALITY.replace("t = 0.5", "t = 0.5\nhorizon = 2.0"));
    let (code, stderr) = dicekit(&["duality-check", "--config", &cfg], dir.path());
    assert_eq!(code, 3);
    assert!(stderr.contains("horizon"), "{stderr}");
}

#[test]
fn non_doubly_stochastic_duality_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let text = DUALITY.replace("[[0, 1], [1, 0]] }]", "[[0.5, 0.5], [0.0, 1.0]] }]");
    let cfg = write_config(dir.path(), &text);
    let (code, stderr) = dicekit(&["duality-check", "--config", &cfg, "--out", "run"], dir.path());
    assert_eq!(code, 3, "{stderr}");
    assert!(stderr.to_lowercase().contains("doubly stochastic"), "{stderr}");
}

#[test]
fn coalescent_scenario_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
schema = 1
scenario = "coalescent"
d = 2
seed = 3
t = 5.0
x0 = [1, 2, 1, 2]
a = [[0, 0.5], [0.5, 0]]

[coalescence]
rho = [[1.0, 0.0], [0.0, 1.0]]
"#;
    let cfg = write_config(dir.path(), text);
    let (code, stderr) = dicekit(&["coalescent", "--config", &cfg, "--out", "run"], dir.path());
    assert_eq!(code, 0, "{stderr}");
    let csv = fs::read_to_string(dir.path().join("run/trajectory.csv")).unwrap();
    assert!(csv.starts_with("time,partition"), "{csv}");
    assert!(csv.lines().count() >= 2);
}
