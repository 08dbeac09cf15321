use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

use plap_cli::parse_config;

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(format!("{name}.toml"))
}

fn plap(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_plap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// A preset with `edit` applied to its text, written into `dir`.
fn edited(dir: &Path, name: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let text = edit(fs::read_to_string(preset(name)).unwrap());
    let path = dir.join(format!("{name}-edited.toml"));
    fs::write(&path, text).unwrap();
    path
}

fn find(dir: &Path, suffix: &str) -> Option<PathBuf> {
    fs::read_dir(dir)
        .ok()?
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with(suffix))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn poisson_solve_succeeds_with_small_residual() {
    let out = tempfile::tempdir().unwrap();
    let o = plap(&["solve", "--config", s(&preset("poisson_interval")), "--out", s(out.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(find(out.path(), "-summary.json").unwrap()).unwrap()).unwrap();
    for stage in summary["stages"].as_array().unwrap() {
        assert!(stage["residual"].as_f64().unwrap() <= 1e-9);
        assert_eq!(stage["status"], "converged");
    }
    let stages = fs::read_to_string(find(out.path(), "-stages.csv").unwrap()).unwrap();
    assert_eq!(stages.lines().count(), 7);
    let solution = fs::read_to_string(find(out.path(), "-solution.csv").unwrap()).unwrap();
    assert_eq!(solution.lines().next(), Some("x0,u"));
    assert_eq!(solution.lines().count(), 102);
    assert!(find(out.path(), "-FAILED").is_none());
}

#[test]
fn small_p_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "poisson_interval", |t| t.replace("p = 2.0", "p = 0.5"));
    let o = plap(&["solve", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("physics.p: p must exceed 1"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "poisson_interval", |t| t.replace("steps = 6", "steps = 6\nstep = 7"));
    let o = plap(&["solve", "--config", s(&cfg)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn default_certify_preset_passes() {
    let out = tempfile::tempdir().unwrap();
    let o = plap(&["certify", "--config", s(&preset("certify_hardy")), "--out", s(out.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(find(out.path(), "-certify.csv").unwrap()).unwrap();
    assert!(table.lines().skip(1).all(|l| l.contains("no_violation")));
    let ids: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert!(ids.contains(&"hardy") && ids.contains(&"monotonicity") && ids.contains(&"power_mean"));
}

#[test]
fn planted_constant_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "certify_hardy", |t| {
        t.replace("constant_scale = 1.0", "constant_scale = 1.5")
    });
    let out = dir.path().join("out");
    let o = plap(&["certify", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let table = fs::read_to_string(find(&out, "-certify.csv").unwrap()).unwrap();
    assert!(table.contains(",violation,"));
    assert!(find(&out, "-FAILED").is_some());
}

#[test]
fn hardy_constant_above_probe_infimum_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "certify_hardy", |t| {
        t.replace("constant_scale = 1.0", "constant_scale = 10.0\nchecks = [\"hardy\"]")
    });
    let out = dir.path().join("out");
    let o = plap(&["certify", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let table = fs::read_to_string(find(&out, "-certify.csv").unwrap()).unwrap();
    let row = table.lines().nth(1).unwrap();
    assert!(row.starts_with("hardy,") && row.contains(",violation,"), "{row}");
}

#[test]
fn admissibility_gate_and_override() {
    let dir = tempfile::tempdir().unwrap();
    // W = 1 with V = 0 breaks the embedding inequality.
    let cfg = edited(dir.path(), "poisson_interval", |t| t.replace("value = 0.5", "value = 1.0"));
    let out = dir.path().join("gate");
    let o = plap(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(find(&out, "-FAILED").is_some());
    assert!(find(&out, "-admissibility.csv").is_some());
    assert!(find(&out, "-stages.csv").is_none());

    let out = dir.path().join("override");
    let o = plap(&["solve", "--config", s(&cfg), "--out", s(&out), "--override-admissibility"]);
    assert_eq!(code(&o), 0);
    assert!(find(&out, "-stages.csv").is_some());
}

#[test]
fn iteration_cap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "interval_tabulated", |t| t.replace("steps = 5", "steps = 5\nmax_iter = 2"));
    let out = dir.path().join("out");
    let o = plap(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(find(&out, "-FAILED").is_some());
    // An unconverged first stage may also overshoot the a-priori energy bound.
    let summary = fs::read_to_string(find(&out, "-summary.json").unwrap()).unwrap();
    assert!(summary.contains("\"max_iter\"") || summary.contains("\"solver_failure\""));
}

#[test]
fn emitted_config_round_trips() {
    let out = tempfile::tempdir().unwrap();
    let o = plap(&["eigen", "--config", s(&preset("eigen_strip")), "--out", s(out.path()), "--seed", "7"]);
    assert_eq!(code(&o), 0);
    let echoed = fs::read_to_string(find(out.path(), "-config.toml").unwrap()).unwrap();
    let cfg = parse_config(&echoed).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    assert!(find(out.path(), &format!("{}-config.toml", cfg.hash())).is_some());
}

#[test]
fn eigen_sweep_has_one_row_per_length() {
    let out = tempfile::tempdir().unwrap();
    let o = plap(&["eigen", "--config", s(&preset("eigen_strip")), "--out", s(out.path())]);
    assert_eq!(code(&o), 0);
    let table = fs::read_to_string(find(out.path(), "-eigen.csv").unwrap()).unwrap();
    let mut lines = table.lines();
    assert!(lines.next().unwrap().starts_with("l,lambda,"));
    let lambdas: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(lambdas.len(), 4);
    assert!(lambdas.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    for dir in [&a, &b] {
        let o = plap(&["solve", "--config", s(&preset("interval_tabulated")), "--out", s(dir)]);
        assert_eq!(code(&o), 0);
    }
    let mut n = 0;
    for entry in fs::read_dir(&a).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap();
        if name.to_string_lossy().ends_with("-provenance.json") {
            continue;
        }
        assert_eq!(fs::read(&p).unwrap(), fs::read(b.join(name)).unwrap(), "{name:?}");
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn sweep_fans_out_and_reports_max_exit_code() {
    let out = tempfile::tempdir().unwrap();
    let o = plap(&[
        "certify",
        "--config",
        s(&preset("certify_hardy")),
        "--out",
        s(out.path()),
        "--sweep",
        "certify.constant_scale=[1.0,10.0]",
        "--sweep",
        "certify.checks=[[\"hardy\"]]",
    ]);
    assert_eq!(code(&o), 2);
    let index = fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = index.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0,sweep-0,1.0,") && rows[1].ends_with(",0"));
    assert!(rows[2].ends_with(",2"));
    assert!(find(&out.path().join("sweep-0"), "-certify.csv").is_some());
    assert!(find(&out.path().join("sweep-1"), "-FAILED").is_some());
}
