use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn tchain(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tchain"))
        .args(args)
        .env("TCHAIN_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas")
}

fn load(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_schema(instance: &Value, schema: &str) {
    let schema = load(&schema_dir().join(schema));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

#[test]
fn dirichlet_feedback_extinguishes_before_bound() {
    let dir = tempfile::tempdir().unwrap();
    let o = tchain(
        &[
            "simulate",
            "--layout",
            "equidistant:1",
            "--L",
            "10",
            "--c",
            "2",
            "--stride",
            "20",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = load(&dir.path().join("report.json"));
    assert_schema(&report, "simulate_report.schema.json");
    let tau = report["tau"].as_f64().unwrap();
    assert_eq!(report["extinction_bound"].as_f64(), Some(1.0));
    assert!(report["extinction_time"].as_f64().unwrap() <= 1.0 + tau);
    assert_eq!(report["envelope"]["passed"], Value::Bool(true));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,ω,value"));
}

#[test]
fn autonomous_wave_leaves_by_l_over_c() {
    let dir = tempfile::tempdir().unwrap();
    let o = tchain(
        &[
            "simulate",
            "--layout",
            "midpoint",
            "--control",
            "none",
            "--out",
            "json",
            "--h",
            "0.02",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let report = load(&dir.path().join("report.json"));
    assert_eq!(report["extinction_bound"].as_f64(), Some(5.0));
    assert!(report["extinction_time"].as_f64().unwrap() <= 5.0);
    assert_schema(&load(&dir.path().join("trajectory.json")), "trajectory.schema.json");
}

#[test]
fn neumann_feedback_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = tchain(
        &["simulate", "--bc", "neumann", "--L", "4", "--T", "2", "--h", "0.02"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = load(&dir.path().join("report.json"));
    assert_schema(&report, "simulate_report.schema.json");
    assert_eq!(report["subdomain_envelope"]["passed"], Value::Bool(true));
    assert_eq!(report["decay"]["variant"], "neumann");
}

#[test]
fn bad_layout_file_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let layout = dir.path().join("layout.txt");
    std::fs::write(&layout, "0\n2\n1.5\n4\n").unwrap();
    let o = tchain(
        &["simulate", "--layout", layout.to_str().unwrap(), "--L", "4"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("line 3") && err.contains("not strictly increasing"),
        "{err}"
    );
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tchain(&["simulate", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(tchain(&["ocp", "--alpha", "-1"], dir.path()).status.code(), Some(2));
    assert_eq!(
        tchain(&["sweep", "--lengths", "2,4"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(tchain(&["simulate", "--h", "0.3"], dir.path()).status.code(), Some(2));
}

#[test]
fn validate_passes_by_default_and_fails_when_coarse() {
    let dir = tempfile::tempdir().unwrap();
    let o = tchain(&["validate"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = load(&dir.path().join("validate.json"));
    assert_schema(&report, "validate_report.schema.json");
    assert_eq!(report["passed"], Value::Bool(true));

    let o = tchain(&["validate", "--h", "0.2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let report = load(&dir.path().join("validate.json"));
    let oracle = report["suites"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["name"] == "oracle_equivalence")
        .unwrap();
    assert_eq!(oracle["passed"], Value::Bool(false));
    assert!(oracle["measured"].as_f64().unwrap() > oracle["tolerance"].as_f64().unwrap());
}

#[test]
fn ocp_outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["ocp", "--L", "3", "--h", "0.05", "--T", "1.5"];
    assert!(tchain(&args, a.path()).status.success());
    assert!(tchain(&args, b.path()).status.success());
    // summary.json embeds the output paths, so only the CSVs are compared bytewise.
    for name in ["state.csv", "adjoint.csv", "control.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let summary = load(&a.path().join("summary.json"));
    assert_schema(&summary, "ocp_summary.schema.json");
    assert!(summary["residual"].as_f64().unwrap() <= 1e-8);
    let control = std::fs::read_to_string(a.path().join("control.csv")).unwrap();
    assert_eq!(control.lines().next(), Some("t,channel,value"));
}

#[test]
fn sweep_small_and_mu_zero() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sweep", "--lengths", "1,2,3", "--h", "0.05", "--T", "1", "--mu", "0"];
    let o = tchain(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("L,scenario,state_norm,costate_norm"));
    assert_eq!(csv.lines().count(), 7);
    let summary = load(&dir.path().join("sweep.json"));
    assert_schema(&summary, "sweep_summary.schema.json");
    // L = 2 with gap 1 is the midpoint layout.
    let c = &summary["classification"]["coincidence"];
    assert!(c
        .as_array()
        .unwrap()
        .iter()
        .any(|x| x["L"] == 2.0 && x["passed"] == Value::Bool(true)));

    let again = tempfile::tempdir().unwrap();
    assert!(tchain(&args, again.path()).status.success());
    assert_eq!(csv, std::fs::read_to_string(again.path().join("sweep.csv")).unwrap());
}

#[test]
fn check_emits_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let o = tchain(
        &[
            "check",
            "--layout",
            "equidistant:7",
            "--L",
            "21",
            "--M",
            "7.38905609893065",
            "--k",
            "2",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let report = load(&dir.path().join("check.json"));
    assert_schema(&report, "check_report.schema.json");
    assert_eq!(report["criteria_agree"], Value::Bool(true));
    assert!((report["certificate"]["t_star"].as_f64().unwrap() - 1.5).abs() < 1e-12);

    let o = tchain(
        &[
            "check",
            "--layout",
            "equidistant:1",
            "--M",
            "7.38905609893065",
            "--k",
            "2",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let report = load(&dir.path().join("check.json"));
    assert!(report["certificate"].is_null());
    assert!(report["certificate_error"].as_str().unwrap().contains("no gap"));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("layout.txt"), "# three cells\n0\n1\n2\n3\n").unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "[layout]\nscenario = \"layout.txt\"\nL = 3.0\nc = 1.0\n[solver]\nh = 0.05\nT = 2.0\n[experiment]\nx0 = \"bump:0.5,0.6\"\n",
    )
    .unwrap();
    let cfg = dir.path().join("run.toml");
    let o = tchain(&["simulate", "--config", cfg.to_str().unwrap(), "--T", "4"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = load(&dir.path().join("report.json"));
    assert_eq!(report["T"].as_f64(), Some(4.0));
    assert_eq!(report["h"].as_f64(), Some(0.05));
    assert_eq!(report["layout"]["access_points"].as_array().unwrap().len(), 4);
    assert_schema(&report["layout"], "layout.schema.json");
}

#[test]
fn field_file_initial_data() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x0.json");
    let values: Vec<f64> = (0..=40)
        .map(|j| if (10..20).contains(&j) { 1.0 } else { 0.0 })
        .collect();
    let field = serde_json::json!({ "h": 0.1, "values": values });
    assert_schema(&field, "field.schema.json");
    std::fs::write(&path, field.to_string()).unwrap();
    let o = tchain(
        &[
            "simulate",
            "--L",
            "4",
            "--h",
            "0.1",
            "--x0",
            path.to_str().unwrap(),
            "--out",
            "json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tr = load(&dir.path().join("trajectory.json"));
    assert_eq!(tr["fields"][0].as_array().unwrap().len(), 41);
}
