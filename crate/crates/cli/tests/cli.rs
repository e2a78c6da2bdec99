use std::path::Path;
use std::process::{Command, Output};

use divflow_cli::{run, run_with_threads, ExperimentConfig, ExperimentKind};
use serde_json::Value;
use tempfile::TempDir;

fn divflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn cfg(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).unwrap()
}

#[test]
fn zoo_list_is_stable_and_complete() {
    let out = divflow(&["zoo", "list"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let ids: Vec<&str> = text
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(
        ids,
        [
            "torus",
            "cylinder",
            "revolution:1/(1+x^2)",
            "hyperbolic",
            "warp:ex2",
            "warp:ex3",
            "warp:ex4"
        ]
    );
    let json = divflow(&["zoo", "list", "--format", "json"]);
    let v: Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 7);
    assert_eq!(v[6]["fields"], serde_json::json!(["zero", "Z", "Ubar"]));
}

#[test]
fn passing_volume_report() {
    let dir = TempDir::new().unwrap();
    let c = write(
        &dir,
        "v.json",
        r#"{"manifold": "warp:ex4", "truncation": {"r0": 1, "levels": 7},
            "expect": {"value": {"value": 39.47841760435743}}, "tolerances": {"value": 1e-3}}"#,
    );
    let out = divflow(&["integrate", "volume", "--config", &c, "--seed", "42"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = stdout_json(&out);
    assert_eq!(r["tool"], "divflow");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["seed"], 42);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(r["tolerances"]["value"], 1e-3);
    assert_eq!(r["passed"], true);
    let est = &r["details"];
    for key in ["value", "stderr", "nodes", "truncation_trace"] {
        assert!(est.get(key).is_some(), "missing {key}");
    }
    assert_eq!(est["truncation_trace"].as_array().unwrap().len(), 8);
}

#[test]
fn failed_check_exits_one() {
    let dir = TempDir::new().unwrap();
    let c = write(
        &dir,
        "c.json",
        r#"{"region": {"kind": "ball", "radius": 1}, "expect": {"value": {"value": 1.0}}}"#,
    );
    let out = divflow(&[
        "integrate",
        "volume",
        "--manifold",
        "hyperbolic",
        "--config",
        &c,
    ]);
    assert_eq!(out.status.code(), Some(1));
    let r = stdout_json(&out);
    assert_eq!(r["passed"], false);
    assert_eq!(r["checks"][0]["passed"], false);
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let config = |name: &str, body: &str| write(&dir, name, body);
    let cases: Vec<(Vec<String>, &str)> = vec![
        (
            vec![
                "integrate".into(),
                "volume".into(),
                "--manifold".into(),
                "sphere".into(),
            ],
            "unknown manifold",
        ),
        (
            vec!["integrate".into(), "volume".into()],
            "needs a manifold",
        ),
        (
            vec![
                "verify".into(),
                "fiber-lemma".into(),
                "--manifold".into(),
                "torus".into(),
                "--field".into(),
                "W".into(),
            ],
            "unknown field",
        ),
        (
            vec![
                "diagnose".into(),
                "karp".into(),
                "--manifold".into(),
                "torus".into(),
                "--field".into(),
                "wave".into(),
            ],
            "no radial layout",
        ),
        (
            vec![
                "integrate".into(),
                "volume".into(),
                "--config".into(),
                config("bad.json", "{ not json"),
            ],
            "malformed",
        ),
        (
            vec![
                "integrate".into(),
                "volume".into(),
                "--config".into(),
                config(
                    "kind.json",
                    r#"{"experiment": "karp", "manifold": "torus"}"#,
                ),
            ],
            "not `volume`",
        ),
        (
            vec![
                "integrate".into(),
                "volume".into(),
                "--config".into(),
                config(
                    "tol.json",
                    r#"{"manifold": "torus", "tolerances": {"speed": 1.0}}"#,
                ),
            ],
            "tolerance `speed`",
        ),
        (
            vec![
                "integrate".into(),
                "volume".into(),
                "--config".into(),
                config(
                    "neg.json",
                    r#"{"manifold": "torus", "expect": {"value": {"min": 0}}, "tolerances": {"value": -1}}"#,
                ),
            ],
            "must be positive",
        ),
        (
            vec![
                "integrate".into(),
                "volume".into(),
                "--config".into(),
                config(
                    "q.json",
                    r#"{"manifold": "torus", "expect": {"mass": {"min": 0}}}"#,
                ),
            ],
            "no quantity `mass`",
        ),
        (
            vec![
                "potential".into(),
                "monotone".into(),
                "--format".into(),
                "csv".into(),
            ],
            "no CSV form",
        ),
        (vec!["verify".into(), "nonsense".into()], "invalid value"),
        (
            vec![
                "integrate".into(),
                "volume".into(),
                "--config".into(),
                "/nonexistent/c.json".into(),
            ],
            "cannot read",
        ),
    ];
    for (args, needle) in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = divflow(&args);
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {err}");
        assert!(err.contains(needle), "{args:?}: {err}");
    }
}

#[test]
fn karp_csv_columns() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("karp.csv");
    let c = write(
        &dir,
        "k.json",
        r#"{"manifold": "warp:ex2", "field": "Zbar", "radii": [1, 2]}"#,
    );
    let out = divflow(&[
        "diagnose",
        "karp",
        "--config",
        &c,
        "--format",
        "csv",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(out_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "r,mass,normalized,stderr");
    assert_eq!(lines.len(), 3);
    let first: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(first[0], 1.0);
    assert!((first[2] - first[1]).abs() < 1e-12);
}

#[test]
fn trajectory_csv_columns() {
    let dir = TempDir::new().unwrap();
    let c = write(&dir, "p.json", r#"{"samples": 2, "horizon": 1.0}"#);
    let out = divflow(&[
        "verify",
        "path-integral",
        "--manifold",
        "warp:ex4",
        "--field",
        "Z",
        "--format",
        "csv",
        "--config",
        &c,
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "t,x_1,x_2,x_3,v_1,v_2,v_3,speed_drift"
    );
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert_eq!(last[0], 1.0);
    assert!(last[7] < 1e-8);
}

#[test]
fn config_outputs_are_written() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.json");
    let table = dir.path().join("t.csv");
    let c = write(
        &dir,
        "d.json",
        &format!(
            r#"{{"manifold": "warp:ex3", "field": "Ubar", "radii": [1, 2, 4],
                "output": {{"report": "{}", "csv": "{}"}}}}"#,
            report.display(),
            table.display()
        ),
    );
    let out = divflow(&["diagnose", "decay", "--config", &c]);
    assert_eq!(out.status.code(), Some(0));
    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(on_disk, stdout_json(&out));
    let csv = std::fs::read_to_string(&table).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "inner,outer,sup,samples");
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn config_hash_ignores_formatting_but_not_content() {
    let a = cfg(r#"{"manifold": "torus", "seed": 3}"#);
    let b = cfg("{\n  \"seed\": 3,\n  \"manifold\": \"torus\"\n}");
    let c = cfg(r#"{"manifold": "torus", "seed": 4}"#);
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn seed_override_is_recorded() {
    let dir = TempDir::new().unwrap();
    let c = write(&dir, "m.json", r#"{"samples": 100, "seed": 1}"#);
    let a = stdout_json(&divflow(&["potential", "monotone", "--config", &c]));
    let b = stdout_json(&divflow(&[
        "potential",
        "monotone",
        "--config",
        &c,
        "--seed",
        "9",
    ]));
    assert_eq!(a["seed"], 1);
    assert_eq!(b["seed"], 9);
    assert_ne!(a["config_hash"], b["config_hash"]);
    assert_ne!(a["quantities"]["min_value"], b["quantities"]["min_value"]);
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let mut c = cfg(r#"{"manifold": "warp:ex2", "field": "Zbar", "samples": 64, "seed": 11}"#);
    for kind in [
        ExperimentKind::FiberLemma,
        ExperimentKind::PathIntegral,
        ExperimentKind::PotentialLaplacian,
    ] {
        c.experiment = Some(kind);
        let one = run_with_threads(&c, 1).unwrap().report.to_json();
        let many = run_with_threads(&c, 5).unwrap().report.to_json();
        assert_eq!(one, many, "{}", kind.name());
    }
}

#[test]
fn karp_evidence_notes() {
    let mut c = cfg(
        r#"{"experiment": "karp", "manifold": "warp:ex2", "field": "Zbar", "radii": [1, 2, 4]}"#,
    );
    let r = run(&c).unwrap().report;
    assert!(r
        .notes
        .iter()
        .any(|n| n == "liminf evidence: bounded away from 0"));
    c.manifold = Some("revolution:1/(1+x^2)".into());
    c.field = Some("W".into());
    c.radii = Some(vec![10.0, 100.0]);
    let r = run(&c).unwrap().report;
    assert!(r.notes.iter().any(|n| n == "liminf evidence: tends to 0"));
}

#[test]
fn numerical_failure_is_a_failed_check() {
    // the hyperboloid chart exhausts its step budget long before t = 100
    let c = cfg(
        r#"{"experiment": "path-integral", "manifold": "hyperbolic", "field": "conformal",
                    "samples": 3, "horizon": 100, "flow": {"max_steps": 500}}"#,
    );
    let out = run(&c).unwrap();
    assert!(!out.report.passed);
    assert_eq!(out.exit_code(), 1);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            let c = ExperimentConfig::load(&p).unwrap();
            assert!(c.experiment.is_some(), "{}", p.display());
            n += 1;
        }
    }
    assert!(n >= 30);
}
