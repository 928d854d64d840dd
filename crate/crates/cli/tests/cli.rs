//! Exit codes and output files of the `drcons` binary.

use std::path::Path;
use std::process::Command;

const SCALAR: &str = r#"
id = "scalar"
kind = "known"
seeds = [0, 1]

[system]
generator = "matrices"
a = [[A]]
b = [[1.0]]
c = [[1.0]]
k = [[K]]

[disturbance]
kind = "sinusoid"
w_max = 0.5
e_max = 0.05

[loss]
kind = "lqr"

[params]
horizons = [200]
m = 3
h = 8
"#;

fn drcons(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_drcons")).args(args).output().unwrap()
}

fn scenario(dir: &Path, a: f64, k: f64) -> String {
    let path = dir.join(format!("s{a}.toml"));
    std::fs::write(&path, SCALAR.replace("[[A]]", &format!("[[{a}]]")).replace("[[K]]", &format!("[[{k}]]"))).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let file = scenario(dir.path(), 0.9, -0.5);
    let out = dir.path().join("res");
    let o = drcons(&["run", &file, "--out", out.to_str().unwrap(), "--jobs", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    assert!(csv.starts_with("scenario,kind,seed,horizon,"));
    assert_eq!(csv.lines().count(), 3);
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(side["scenario"]["params"]["m"], 3);
    assert_eq!(side["rows"], 2);
}

#[test]
fn seed_flag_and_json_format() {
    let dir = tempfile::tempdir().unwrap();
    let file = scenario(dir.path(), 0.9, -0.5);
    let out = dir.path().join("res");
    let o = drcons(&["run", &file, "--out", out.to_str().unwrap(), "--seed", "7", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!out.with_extension("csv").exists());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    let rows = doc["results"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["seed"], 7);
}

#[test]
fn failed_cell_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = scenario(dir.path(), 1.5, 0.0);
    let out = dir.path().join("res");
    let o = drcons(&["run", &file, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains(",failed,")));
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("broken.toml");
    std::fs::write(&file, "id = \"x\"\nkind = \"known\"\nbogus = 1\n").unwrap();
    assert_eq!(drcons(&["run", file.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(drcons(&["acceptance", "--only", "11"]).status.code(), Some(2));
}

#[test]
fn diag_prints_records() {
    let o = drcons(&["diag", "gradcheck", "--trials", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("trial,seed,value,bound,passed"));
    assert_eq!(text.lines().count(), 4);
}
