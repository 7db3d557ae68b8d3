use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nldiff(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nldiff"))
        .args(args)
        .env("NDL_OUT", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
run_id = "small"
[model]
variant = "single_factor"
alpha = 1.0
m = { expr = "1 + x^2/100" }
[grid]
R = 4.0
M = 41
[time]
T = 5.0
snapshots = [1.0]
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn moments_prints_heavy_tail_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = nldiff(&["moments", "--kernel", "heavy_tail"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert_eq!(line.lines().count(), 1);
    assert!(line.contains("A 2.31") && line.contains("B 2.36") && line.contains("C 0.61"), "{line}");
}

#[test]
fn simulate_writes_under_the_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = nldiff(&["simulate", "--config", &cfg], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("small simulate: 1 run(s) to t=5: mass drift"));
    for f in ["t1.csv", "t5.csv", "run.json"] {
        assert!(out.join("small").join(f).exists(), "{f}");
    }
    // --out wins over the environment
    let other = dir.path().join("other");
    let o = nldiff(&["--out", other.to_str().unwrap(), "--quiet", "simulate", "-c", &cfg], &out);
    assert!(o.status.success());
    assert!(stdout(&o).is_empty());
    assert!(other.join("small/t5.csv").exists());
}

#[test]
fn json_summary_is_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = nldiff(&["--json-summary", "predict", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["command"], "predict");
    assert_eq!(v["runs"][0]["regime"], "AlphaOne");
    assert!(v["runs"][0]["residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn unstable_step_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("T = 5.0", "T = 5.0\ndt = 50.0"));
    let o = nldiff(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stab"), "{}", stderr(&o));
}

#[test]
fn config_errors_carry_line_context() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("M = 41", "M = \"many\""));
    let o = nldiff(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 9"), "{}", stderr(&o));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let kernel = dir.path().join("cauchy.toml");
    fs::write(&kernel, "expr = \"1/(1+z^2)\"\n").unwrap();
    let name = format!("custom:{}", kernel.display());
    let o = nldiff(&["moments", "--kernel", &name], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn presets_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let o = nldiff(&["preset", "--list"], dir.path());
    assert!(o.status.success());
    let names = stdout(&o);
    for n in ["fig1-left", "fig3-right", "fig8", "limit-two-factor", "strat-check"] {
        assert!(names.lines().any(|l| l == n), "{n}");
    }
    let o = nldiff(&["preset", "nope"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nldiff(&["fly"], dir.path()).status.code(), Some(2));
}
