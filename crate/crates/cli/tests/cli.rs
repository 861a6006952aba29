use std::path::Path;
use std::process::{Command, Output};

use taplab_cli::config::{GridConfig, MeasureConfig, PrefixConfig, RunConfig, TaskConfig};
use taplab_cli::output::body;

fn taplab(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_taplab"))
        .arg("--config")
        .arg(&path)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value_of(csv: &str, quantity: &str) -> f64 {
    let line = body(csv)
        .lines()
        .find(|l| l.starts_with(&format!("{quantity},")))
        .unwrap_or_else(|| panic!("no {quantity} row in {csv}"));
    line.rsplit(',').next().unwrap().parse().unwrap()
}

#[test]
fn config_round_trips() {
    let cfg = RunConfig {
        measure: Some(MeasureConfig::Prefix(PrefixConfig {
            u: vec![0.3, 0.6],
            q: vec![0.2, 0.5],
            tail: vec![(0.5, 0.4), (0.9, 0.6)],
        })),
        grid: Some(GridConfig {
            half_width: 18.5,
            points: 1601,
            quad_nodes: 48,
        }),
        task: TaskConfig {
            name: Some("optimize-prefix".into()),
            u: Some(vec![Some(0.3), None]),
            thetas: Some(vec![0.1, 0.35]),
            ..Default::default()
        },
        out: Some("run.csv".into()),
        ..Default::default()
    };
    let text = cfg.to_json();
    let back = RunConfig::from_json(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_json(), text);
    let atoms = RunConfig::from_json(
        r#"{"xi":{"coeffs":[[2,1.0],[4,0.5]]},"measure":{"atoms":[[0,0.5],[0.7,0.5]]}}"#,
    )
    .unwrap();
    assert_eq!(RunConfig::from_json(&atoms.to_json()).unwrap(), atoms);
}

#[test]
fn hash_ignores_output_path_only() {
    let a = RunConfig::default();
    let b = RunConfig {
        out: Some("x.csv".into()),
        ..a.clone()
    };
    assert_eq!(a.hash(), b.hash());
    let mut c = a.clone();
    c.mc.seed = 1;
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let e = RunConfig::from_json(
        r#"{"xi":{"coeffs":[[2,1.0]]},"mc":{"paths":10,"dt":0.001,"seed":0,"sead":1}}"#,
    )
    .unwrap_err();
    assert!(e.path.starts_with("mc"), "{e}");
    assert!(e.message.contains("sead"), "{e}");
    let e = RunConfig::from_json(r#"{"xi":{"coeffs":[[2,1.0]]},"extra":true}"#).unwrap_err();
    assert!(e.message.contains("extra"), "{e}");
    let dir = tempfile::tempdir().unwrap();
    let o = taplab(
        dir.path(),
        r#"{"xi":{"coeffs":[[2,"x"]]}}"#,
        &["--task", "parisi-solve"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("xi.coeffs"));
}

#[test]
fn parisi_solve_replica_symmetric_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = taplab(
        dir.path(),
        r#"{"xi":{"coeffs":[[2,0.25]]},"measure":{"atoms":[[0,1]]},"task":{"name":"parisi-solve"}}"#,
        &[],
    );
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!((value_of(&out, "parisi_value") - 0.8181471805599453).abs() < 1e-8);
    let header = out.lines().next().unwrap();
    let meta: serde_json::Value = serde_json::from_str(header.strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(meta["task"], "parisi-solve");
    assert_eq!(meta["seed"], 0);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    assert!(meta["tolerances"].is_object() && meta["grid"]["points"] == 4001);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let o = taplab(
        dir.path(),
        r#"{"xi":{"coeffs":[[2,1.0]]}}"#,
        &[
            "--task",
            "parisi-solve",
            "--seed",
            "9",
            "--grid-points",
            "801",
            "--quad-nodes",
            "32",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let meta: serde_json::Value =
        serde_json::from_str(text.lines().next().unwrap().strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["grid"]["points"], 801);
    assert_eq!(meta["grid"]["quad_nodes"], 32);
    assert!((value_of(&text, "parisi_value") - (std::f64::consts::LN_2 + 0.5)).abs() < 1e-8);
}

#[test]
fn lambda_curve_endpoint_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = taplab(
        dir.path(),
        r#"{"xi":{"coeffs":[[2,0.64]]},"task":{"name":"lambda-curve","thetas":[1.0],"starts":2}}"#,
        &[],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = stdout(&o);
    let row = body(&out).lines().nth(1).unwrap();
    let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - (std::f64::consts::LN_2 + 0.32)).abs() < 1e-8, "{row}");
}

#[test]
fn freeconv_semicircle_edge() {
    let dir = tempfile::tempdir().unwrap();
    let o = taplab(
        dir.path(),
        r#"{"xi":{"coeffs":[[2,1.0]]},"task":{"name":"freeconv","t":4.0,"xs":[0.0]}}"#,
        &[],
    );
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!((value_of(&out, "left_edge") + 4.0).abs() < 1e-10);
    assert!((value_of(&out, "log_potential") - (2f64.ln() - 0.5)).abs() < 1e-6);
}

#[test]
fn exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let o = taplab(
        dir.path(),
        r#"{"xi":{"coeffs":[[2,1.0]]}}"#,
        &["--task", "no-such-task"],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = taplab(
        dir.path(),
        r#"{"xi":{"coeffs":[[2,1.0]]}}"#,
        &["--task", "tap-eval"],
    );
    assert_eq!(o.status.code(), Some(2), "missing mu is a config error");
    let o = Command::new(env!("CARGO_BIN_EXE_taplab"))
        .args([
            "--config",
            "/nonexistent/taplab.json",
            "--task",
            "parisi-solve",
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
    // Unreachable energy level: the nested bisection reports non-convergence.
    let o = taplab(
        dir.path(),
        r#"{"xi":{"coeffs":[[2,2.25]]},"task":{"name":"stationary-uq","f":100}}"#,
        &[],
    );
    assert_eq!(o.status.code(), Some(3));
    // Euler bias at dt = 0.01 is visible at 2e5 paths.
    let cfg = r#"{"xi":{"coeffs":[[2,1.0],[4,1.0]]},"measure":{"atoms":[[0,0.4],[0.45,0.6]]},"mc":{"paths":200000,"dt":0.01,"seed":3},"task":{"name":"sde-sim","scheme":"euler"}}"#;
    let o = taplab(dir.path(), cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains(",false"));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"xi":{"coeffs":[[2,1.0],[4,1.0]]},"measure":{"atoms":[[0,0.4],[0.45,0.3],[0.8,0.3]]},"mc":{"paths":20000,"dt":0.001,"seed":5},"task":{"name":"sde-sim"}}"#;
    let a = taplab(dir.path(), cfg, &[]);
    let b = taplab(dir.path(), cfg, &[]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    let c = taplab(dir.path(), cfg, &["--seed", "6"]);
    assert_ne!(body(&stdout(&a)), body(&stdout(&c)));
}

#[test]
fn tap_eval_reports_gradient_per_spin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"xi":{"coeffs":[[2,1.0],[4,1.0]]},"measure":{"atoms":[[0.2275,0.6],[0.8,0.4]]},"task":{"name":"tap-eval","mu":[0.5,-0.4,0.7,0.1]}}"#;
    let o = taplab(dir.path(), cfg, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = stdout(&o);
    assert_eq!(
        body(&out)
            .lines()
            .filter(|l| l.starts_with("gradient,"))
            .count(),
        4
    );
    assert!((value_of(&out, "q") - 0.2275).abs() < 1e-12);
}
