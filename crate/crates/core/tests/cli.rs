use std::path::Path;
use std::process::{Command, Output};

fn bin(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transport-inverse"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

const SMALL: &str = r#"{
  "geometry": {"a": 0.0, "b": 1.0, "n_x": 20},
  "time": {"t_f": 3.0, "n_t": 30},
  "quadrature": {"n_q": 8}
}"#;

#[test]
fn verify_single_kappa_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(dir.path(), &["verify", "--kappa", "0.5", "--n-x", "40", "--n-t", "40", "--n-q", "16"]);
    assert!(out.status.code().is_some_and(|c| c <= 1));
    let csv = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "kappa,psi_0,psi_05,psi_1,eps_rel");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("exact,"));
}

#[test]
fn solve_writes_trace_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = bin(dir.path(), &["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("k,t,si_iters,psi_left,psi_right"));
    assert_eq!(trace.lines().count(), 1 + 31);
    let psi = std::fs::read_to_string(dir.path().join("psi.csv")).unwrap();
    assert_eq!(psi.lines().count(), 1 + 31 * 21);
}

#[test]
fn pipeline_on_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, SMALL).unwrap();
    let c = cfg.to_str().unwrap();
    let out = bin(dir.path(), &["gen-data", "--config", c, "--problem", "p1", "--n", "8"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = bin(dir.path(), &["train", "--config", c, "--problem", "p1", "--max-epochs", "200"]);
    // 200 epochs cannot reach the loss target
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.path().join("p1_model.json").exists());
    let loss = std::fs::read_to_string(dir.path().join("p1_loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 201);
    let out = bin(dir.path(), &["eval", "--problem", "p1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let scatter = std::fs::read_to_string(dir.path().join("p1_scatter.csv")).unwrap();
    assert_eq!(scatter.lines().next(), Some("expected,estimated"));
    assert_eq!(scatter.lines().count(), 9);

    let model = dir.path().join("p1_model.json");
    let m = model.to_str().unwrap();
    let out = bin(dir.path(), &["estimate", "--model", m, "--readings", "0.4,0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let k: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!(k.is_finite());
    let out = bin(dir.path(), &["estimate", "--model", m, "--readings", "0.4"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(dir.path(), &["gen-data", "--problem", "p3"]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"geometry": {"a": 0.0, "b": 1.0, "n_x": 20}, "colour": 1}"#).unwrap();
    let out = bin(dir.path(), &["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = bin(dir.path(), &["eval", "--problem", "p1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn odd_quadrature_order_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("odd.json");
    std::fs::write(&cfg, r#"{"quadrature": {"n_q": 7}}"#).unwrap();
    let out = bin(dir.path(), &["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
