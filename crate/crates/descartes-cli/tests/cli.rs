//! End-to-end checks of the command-line front door: spec parsing, output
//! determinism, the exit-status contract, and format stability.

use std::path::Path;
use std::process::{Command, Output};

use descartes_cli::plan::{self, SpecFile};
use descartes_cli::report;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_descartes"))
}

fn write_spec(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SLEIGH_SPEC: &str = r#"
[system]
catalog = "chaplygin_sleigh"

[lambda]
preset = "inertial"

[integrator]
method = "rk45"
t_end = 5.0
output_dt = 0.05
"#;

#[test]
fn verify_reports_are_deterministic_and_pass() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "sleigh.toml", SLEIGH_SPEC);
    let run = || {
        bin()
            .args(["verify", "--spec"])
            .arg(&spec)
            .args(["--seed", "7"])
            .output()
            .unwrap()
    };
    let a = run();
    let b = run();
    run_ok(&a);
    assert_eq!(a.stdout, b.stdout, "reports must be byte-identical");
    let report: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let map = report.as_object().unwrap();
    assert!(map.contains_key("constraint_drift"));
    assert!(map.contains_key("lagrange_residual"));
    assert!(map.contains_key("multiplier_equation"));
    for (name, check) in map {
        assert_eq!(check["pass"], true, "check {name} should pass");
    }
}

#[test]
fn inadmissible_preset_fails_the_exit_contract() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "bad.toml",
        r#"
[system]
catalog = "chaplygin_sleigh"
params = { eps = 1.0 }

[lambda]
preset = "uniform_bad"

[integrator]
t_end = 1.0
output_dt = 0.05
"#,
    );
    let out = bin()
        .args(["verify", "--spec"])
        .arg(&spec)
        .args(["--seed", "7"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "failed checks exit with 1");
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let failed = report
        .as_object()
        .unwrap()
        .values()
        .any(|c| c["pass"] == false);
    assert!(failed, "report must record the failure");
}

#[test]
fn simulate_writes_the_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "skate.toml",
        r#"
[system]
catalog = "skate"

[integrator]
method = "rk4"
dt = 1e-3
t_end = 1.0
stride = 1
"#,
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["simulate", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&out_dir)
        .arg("--emit-plot-data")
        .output()
        .unwrap();
    run_ok(&out);
    let csv = std::fs::read_to_string(out_dir.join("trajectory_0.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1002, "header + 1001 samples at dt=1e-3");
    assert!(lines[0].starts_with("t,x1,x2,x3,v1,v2,v3"));
    assert!(lines[0].contains("monitor:"), "catalog monitors exported");
    assert!(!csv.contains('\r'), "LF newlines only");
    // 17-significant-digit round trip: re-parse and re-format every field.
    for field in lines[500].split(',') {
        let v: f64 = field.parse().unwrap();
        assert_eq!(report::fmt_f64(v), field);
    }
    assert!(out_dir.join("plot_0.csv").exists());
    let plot = std::fs::read_to_string(out_dir.join("plot_0.csv")).unwrap();
    assert!(plot.starts_with("t,series,value\n"));
}

#[test]
fn misspelled_system_reports_the_nearest_name() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "typo.toml",
        "[system]\ncatalog = \"skatee\"\n",
    );
    let out = bin()
        .args(["verify", "--spec"])
        .arg(&spec)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "hard errors exit with 2");
    let err: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("machine-readable error record");
    let msg = err["error"].as_str().unwrap();
    assert!(msg.contains("system.catalog"), "error carries its path: {msg}");
    assert!(msg.contains("skate"), "nearest catalog name suggested: {msg}");
}

#[test]
fn bad_expressions_are_reported_in_one_pass_with_paths() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "multi.toml",
        r#"
[system]
dim = 2
constraints = 1
forms = [["x1", "*bad*"], ["1", "0"]]
initial = [1.0, 0.0]

[lambda]
expressions = ["also )bad("]
"#,
    );
    let out = bin()
        .args(["simulate", "--spec"])
        .arg(&spec)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    let msg = err["error"].as_str().unwrap();
    assert!(msg.contains("system.forms[0][1]"), "{msg}");
    assert!(msg.contains("lambda.expressions[0]"), "{msg}");
}

#[test]
fn inline_definition_matches_the_catalog_system() {
    let dir = tempfile::tempdir().unwrap();
    let catalog_spec = write_spec(
        dir.path(),
        "catalog.toml",
        "[system]\ncatalog = \"gantmacher\"\n",
    );
    let inline_spec = write_spec(
        dir.path(),
        "inline.toml",
        r#"
[system]
dim = 4
constraints = 2
forms = [
  ["x1", "x2", "0", "0"],
  ["0", "0", "x1", "-x2"],
  ["-x2", "x1", "0", "0"],
  ["0", "0", "x2", "x1"],
]
potential = "72 - 9.81*x3"
guards = { circle = "x1^2 + x2^2" }
initial = [1.0, 0.0, 0.0, 0.0]

[lambda]
expressions = [
  "2*(x1^2 + x2^2)",
  "sqrt(2*(72 - 9.81*x3)/(x1^2 + x2^2) - 4)*(x1^2 + x2^2)",
]
"#,
    );
    let a = plan::parse_spec(&catalog_spec).unwrap();
    let b = plan::parse_spec(&inline_spec).unwrap();
    assert_eq!(a.system.dim(), b.system.dim());
    assert_eq!(a.system.constraint_count(), b.system.constraint_count());
    assert_eq!(a.initial, b.initial);
    for p in [
        [1.0, 0.0, 0.0, 0.0],
        [0.8, 0.5, 0.3, -0.2],
        [1.1, -0.4, 0.6, 0.9],
    ] {
        let va = a.system.velocity(&p).unwrap();
        let vb = b.system.velocity(&p).unwrap();
        for k in 0..4 {
            assert!((va[k] - vb[k]).abs() < 1e-12, "fields differ at {p:?}");
        }
    }
}

#[test]
fn run_specs_round_trip_through_serialization() {
    let original: SpecFile = toml::from_str(
        r#"
[system]
catalog = "suslov"
params = { i1 = 2.5 }

[lambda]
preset = "kharlamova"

[integrator]
method = "rk4"
dt = 0.001
t_end = 2.0
stride = 10

[initial]
states = [[0.4, 0.2, 1.0]]
grid = { count = 4, radius = 0.05, seed = 11 }

[monitors]
extra = "x1 + v2"

[output]
dir = "out"
formats = ["csv", "json"]

[tolerances]
constraint_drift = 1e-10
"#,
    )
    .unwrap();
    let text = toml::to_string(&original).unwrap();
    let reparsed: SpecFile = toml::from_str(&text).unwrap();
    assert_eq!(original, reparsed);
}

#[test]
fn zero_circular_family_emits_the_zero_potential() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "bert.toml",
        r#"
[inverse]
b = 0.0
psi = "0"
h_of_r = "0"
"#,
    );
    let out = bin()
        .args(["inverse", "--route", "bertrand", "--spec"])
        .arg(&spec)
        .output()
        .unwrap();
    run_ok(&out);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = doc["artifact"]["potential_values"].as_array().unwrap();
    assert!(!rows.is_empty());
    for row in rows {
        assert_eq!(row["u"].as_f64().unwrap(), 0.0);
        assert_eq!(row["speed_squared"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn inverse_routes_emit_certified_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "jouk.toml",
        r#"
[inverse]
dim = 3
functions = ["x1*x3", "x2*x3"]
surface = "0.5*(x1^2 + x2^2 - x3^2)"
nu = "x3"
h = "-0.5*((x1*x3)^2 + (x2*x3)^2) - 0.7"
grid_low = [0.4, 0.3, 0.5]
grid_high = [1.4, 1.3, 1.6]
samples = 32
seed = 3
"#,
    );
    let out_dir = dir.path().join("artifacts");
    let out = bin()
        .args(["inverse", "--route", "joukovski", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    run_ok(&out);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["checks"]["potential_certificate"]["pass"], true);
    assert!(doc["artifact"]["potential"].as_str().unwrap().len() > 0);
    assert!(out_dir.join("inverse_joukovski.json").exists());
}

#[test]
fn empty_trajectory_exports_a_header_only_csv() {
    let traj = descartes::dynamics::Trajectory {
        samples: Vec::new(),
        error: None,
    };
    let csv = report::trajectory_csv(&traj, 3, &[]).unwrap();
    assert_eq!(csv, "t,x1,x2,x3,v1,v2,v3\n");
}

#[test]
fn catalog_commands_list_and_reject() {
    let list = bin().args(["catalog", "list"]).output().unwrap();
    run_ok(&list);
    let text = String::from_utf8(list.stdout).unwrap();
    for name in descartes::catalog::system_names() {
        assert!(text.contains(name));
    }
    let show = bin().args(["catalog", "show", "suslov"]).output().unwrap();
    run_ok(&show);
    assert!(String::from_utf8_lossy(&show.stdout).contains("kharlamova"));
    let bad = bin().args(["catalog", "show", "nope"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
