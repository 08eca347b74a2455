use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_emitter-entanglement");

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

const ATOM: &str = r#"
schema_version = 1
name = "atom"

[model]
kind = "two_level_ensemble"
atoms = 1
rabi = 1.0

[geometry]
modes = 3
chi = "random"

[witness]
order = 2
"#;

#[test]
fn run_writes_results_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "atom.toml", ATOM);
    let out = dir.path().join("out");
    let (code, err) = run(&["run", file.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(code, 0, "{err}");
    let results: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    // an absent bipartition list means every bipartition of the three modes
    assert_eq!(results["entanglement"].as_array().unwrap().len(), 3);
    assert_eq!(results["seed"], 5);
    assert!(out.join("moments.csv").exists());
}

#[test]
fn same_seed_gives_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "atom.toml", ATOM);
    let read = |sub: &str, seed: &str| {
        let out = dir.path().join(sub);
        let (code, err) = run(&["run", file.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert_eq!(code, 0, "{err}");
        std::fs::read(out.join("results.json")).unwrap()
    };
    assert_eq!(read("a", "11"), read("b", "11"));
    assert_ne!(read("a", "11"), read("c", "12"));
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &ATOM.replace("rabi = 1.0", "rabi = 1.0\nspeed = 3"));
    let (code, err) = run(&["run", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("speed"), "{err}");

    let missing = dir.path().join("missing.toml");
    assert_eq!(run(&["run", missing.to_str().unwrap()]).0, 1);
    assert_eq!(run(&["fly"]).0, 1);

    let version = write(dir.path(), "v.toml", &ATOM.replace("schema_version = 1", "schema_version = 9"));
    assert_eq!(run(&["run", version.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).0, 1);
}

#[test]
fn truncation_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "kerr.toml",
        r#"
schema_version = 1
name = "overdriven"

[model]
kind = "kerr_mode"
n_max = 4
kerr = 0.0
drive = 2.0

[geometry]
modes = 2

[witness]
order = 2
"#,
    );
    let (code, err) = run(&["run", file.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "sweep.toml",
        r#"
schema_version = 1
name = "drive"

[model]
kind = "kerr_mode"
n_max = 10
kerr = 10.0
drive = 0.1

[geometry]
modes = 2

[witness]
order = 2

[sweep]
parameter = "drive"
start = 0.05
stop = 0.4
points = 4
"#,
    );
    let out = dir.path().join("out");
    let (code, err) = run(&["sweep", file.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(code, 0, "{err}");
    let mut reader = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let drive = headers.iter().position(|h| h == "drive").unwrap();
    let values: Vec<f64> = reader.records().map(|r| r.unwrap()[drive].parse().unwrap()).collect();
    assert_eq!(values.len(), 4);
    assert!(values.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(std::fs::read_to_string(out.join("squeezing_minor.dat")).unwrap().lines().count(), 4);
}

#[test]
fn failed_sweep_points_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "sweep.toml",
        r#"
schema_version = 1
name = "overdrive"

[model]
kind = "kerr_mode"
n_max = 5
kerr = 0.0
drive = 0.1

[geometry]
modes = 2

[witness]
order = 2

[sweep]
parameter = "drive"
values = [0.05, 3.0]
"#,
    );
    let out = dir.path().join("out");
    let (code, _) = run(&["sweep", file.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    let rows: Vec<csv::StringRecord> =
        csv::Reader::from_path(out.join("sweep.csv")).unwrap().records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][3], "ok");
    assert_ne!(&rows[1][3], "ok");
}
