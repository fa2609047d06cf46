use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[system]
fiber_offset = "const"
offset = 0.25

[grids]
n_base = 128
n_fiber = 129

[perturbation]
kind = "fiber-translation"
range = { base = 2.0, k_min = 4, k_max = 10 }
"#;

fn skewstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skewstab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn run_verb(verb: &str, body: &str) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), body);
    let out = dir.path().join("out");
    let o = skewstab(&[verb, "--config", &cfg, "--out", out.to_str().unwrap()]);
    (o, dir)
}

#[test]
fn missing_config_exits_2() {
    let o = skewstab(&["check", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_2() {
    let (o, _d) = run_verb("check", "[system\nzeta = 1");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_zeta_exits_3_and_names_the_key() {
    let (o, _d) = run_verb("check", "[system]\nzeta = 1.5\n");
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("zeta"));
}

#[test]
fn unknown_verb_is_a_usage_error() {
    let o = skewstab(&["plot", "--config", "x.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_passes_on_doubling_affine() {
    let (o, d) = run_verb("check", SMALL);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(d.path().join("out/check.csv")).unwrap();
    assert!(csv.starts_with("section,name,value,pass\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
    let report = fs::read_to_string(d.path().join("out/report.txt")).unwrap();
    assert!(report.contains("n_fiber = 129"));
}

#[test]
fn failed_inequality_exits_1() {
    let body = format!("{SMALL}\n").replace("offset = 0.25", "offset = 0.25\neps_rho = 0.5");
    let (o, _d) = run_verb("check", &body);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL] smallness of eps and L"));
}

#[test]
fn fixpoint_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = skewstab(&["fixpoint", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "9"]);
        assert_eq!(o.status.code(), Some(0));
        outputs.push((
            fs::read(out.join("fixpoint.csv")).unwrap(),
            fs::read_to_string(out.join("report.txt")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0);
    assert_eq!(
        outputs[0].1.replace(dir.path().join("a").to_str().unwrap(), ""),
        outputs[1].1.replace(dir.path().join("b").to_str().unwrap(), "")
    );
    let csv = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert!(csv.starts_with("iteration,residual,holder_estimate,mass\n"));
}

#[test]
fn sweep_writes_seven_rows_and_plot_data() {
    let (o, d) = run_verb("sweep", SMALL);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(d.path().join("out/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "delta,R,measured_gap,certified_N,certified_closed,operator_gap,operator_bound,holder_delta,converged"
    );
    assert_eq!(lines.count(), 7);
    let plot = fs::read_to_string(d.path().join("out/sweep_plot.dat")).unwrap();
    assert!(plot.starts_with('#'));
    assert_eq!(plot.lines().count(), 8);
    let report = String::from_utf8_lossy(&o.stdout);
    let slope: f64 = report
        .split("log-log slope ")
        .nth(1)
        .and_then(|s| s.split(';').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope - 1.0).abs() < 0.05, "{slope}");
}

#[test]
fn rate_writes_margin_table() {
    let body = SMALL.replace("[perturbation]", "[solver]\npairs = 2\nn_steps = 6\n\n[perturbation]");
    let (o, d) = run_verb("rate", &body);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(d.path().join("out/rate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 6);
}
