//! End-to-end tests of the `curvwork` binary: config parsing, output
//! format, reproducibility, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvwork"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn data_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| l.starts_with(|c: char| c.is_ascii_digit() || c == '-'))
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn curvature_map_matches_closed_form_node() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "map.json",
        r#"{
            "command": "curvature-map",
            "model": {
                "mode": "coherent", "gamma": 1.0, "p": 1.0, "beta": 1.0,
                "omega": {"min": -1.0, "max": 1.0, "count": 3},
                "g": {"min": 0.5, "max": 1.5, "count": 3}
            }
        }"#,
    );
    let out = run(&["--config", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(dir.path().join("run_curvature.csv")).unwrap();
    assert!(text.starts_with("# tool: curvwork"), "metadata header first");
    assert!(text.contains("# command: curvature-map"));
    let hash_line = text.lines().find(|l| l.starts_with("# config-sha256: ")).unwrap();
    assert_eq!(hash_line.len(), "# config-sha256: ".len() + 64);
    assert!(text.contains(
        "omega[energy],g[energy],a_omega[1],a_g[1],curv_fd[1/energy],curv_coh[1/energy],curv_pop[1/energy]"
    ));

    // Node (ω, g) = (0, 1), γ = 1, p = 1: density = p·g(g²+γ²)/D² with
    // D = 2ω² + g² + γ²/2 = 3/2, i.e. 2/(9/4) = 0.8889.
    let rows = data_rows(&text);
    let node = rows
        .iter()
        .find(|r| r[0].abs() < 1e-12 && (r[1] - 1.0).abs() < 1e-12)
        .expect("grid contains (0, 1)");
    assert!((node[5] - 8.0 / 9.0).abs() < 1e-12, "closed form {}", node[5]);
    assert!((node[4] - 8.0 / 9.0).abs() < 1e-6, "finite difference {}", node[4]);
    // The population companion is finite when a baseline temperature is set.
    assert!(node[6].is_finite());

    // Companion plot script emitted by default.
    assert!(dir.path().join("run_curvature.gp").exists());
}

#[test]
fn identical_config_and_seed_reproduce_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
        "command": "sde-ensemble",
        "connection": {"type": "constant", "components": [0.6, 0.8]},
        "numeric": {"noise": 0.25, "samples": 500, "dt": 0.01, "t_final": 0.3, "seed": 42},
        "output": {"prefix": "bench"}
    }"#;
    let cfg = write_config(dir.path(), "ens.json", body);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert!(run(&["--config", &cfg, "--out", out_a.to_str().unwrap()], dir.path())
        .status
        .success());
    assert!(run(&["--config", &cfg, "--out", out_b.to_str().unwrap()], dir.path())
        .status
        .success());
    for name in ["bench_ensemble.csv", "bench_ensemble_hist.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} must be byte-identical");
    }
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
        "command": "sde-ensemble",
        "connection": {"type": "constant", "components": [1.0, 0.0]},
        "numeric": {"noise": 0.2, "samples": 400, "dt": 0.01, "t_final": 0.2, "seed": 1}
    }"#;
    let cfg = write_config(dir.path(), "ens.json", body);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert!(run(&["--config", &cfg, "--out", out_a.to_str().unwrap()], dir.path())
        .status
        .success());
    assert!(run(
        &["--config", &cfg, "--out", out_b.to_str().unwrap(), "--seed", "2"],
        dir.path()
    )
    .status
    .success());
    let a = std::fs::read_to_string(out_a.join("run_ensemble.csv")).unwrap();
    let b = std::fs::read_to_string(out_b.join("run_ensemble.csv")).unwrap();
    assert!(b.contains("# seed: 2"));
    assert_ne!(data_rows(&a)[0][4], data_rows(&b)[0][4], "means should differ across seeds");
}

#[test]
fn config_errors_exit_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        "{\n  \"command\": \"cycle-work\",\n  \"modle\": {}\n}\n",
    );
    let out = run(&["--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line"), "error should carry a location: {err}");

    // Stochastic commands must be seeded.
    let cfg2 = write_config(
        dir.path(),
        "unseeded.json",
        r#"{
            "command": "sde-ensemble",
            "connection": {"type": "constant", "components": [1.0, 0.0]},
            "numeric": {"noise": 0.2}
        }"#,
    );
    let out2 = run(&["--config", &cfg2], dir.path());
    assert_eq!(out2.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out2.stderr).contains("seed"));

    // No config at all.
    let out3 = run(&[], dir.path());
    assert_eq!(out3.status.code(), Some(1));
}

#[test]
fn unreachable_tolerance_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "tight.json",
        r#"{
            "command": "cycle-work",
            "model": {"mode": "coherent", "gamma": 1.0, "p": 1.0},
            "protocol": {"shape": "polyline", "vertices": [[0.5, 0.2], [1.5, 1.0]], "closed": false},
            "numeric": {"nodes": 64, "tolerance": 1e-30}
        }"#,
    );
    let out = run(&["--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn selfcheck_passes_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["selfcheck"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("stationary-state"));
    assert!(text.contains("probes passed"));
}

#[test]
fn thread_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
        "command": "sde-ensemble",
        "connection": {"type": "constant", "components": [0.3, 0.4]},
        "numeric": {"noise": 0.25, "samples": 600, "dt": 0.01, "t_final": 0.2, "seed": 5}
    }"#;
    let cfg = write_config(dir.path(), "ens.json", body);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert!(run(
        &["--config", &cfg, "--out", out_a.to_str().unwrap(), "--threads", "1"],
        dir.path()
    )
    .status
    .success());
    assert!(run(
        &["--config", &cfg, "--out", out_b.to_str().unwrap(), "--threads", "4"],
        dir.path()
    )
    .status
    .success());
    let a = std::fs::read(out_a.join("run_ensemble.csv")).unwrap();
    let b = std::fs::read(out_b.join("run_ensemble.csv")).unwrap();
    assert_eq!(a, b, "results must not depend on the thread count");
}
