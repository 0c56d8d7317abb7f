use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use peskin_core::spectral::PeriodicField;
use peskin_harness::field_io::{load_field, save_field};
use serde_json::Value;
use tempfile::TempDir;

fn peskin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peskin"))
        .current_dir(dir)
        .env_remove("PESKIN_OUT_DIR")
        .args(args)
        .output()
        .expect("spawn peskin")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

const SHORT: &[&str] = &["--n", "32", "--dt", "0.01", "--t-final", "0.1"];

#[test]
fn stationarity_on_unit_circle_passes() {
    let tmp = TempDir::new().unwrap();
    let out = peskin(tmp.path(), &["check-stationarity", "--out", "st"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&tmp.path().join("st"));
    assert_eq!(s["passed"], true);
    let a = &s["assertions"][0];
    assert_eq!(a["name"], "max_direct_velocity");
    assert_eq!(a["anchor"], "AC1 stationarity");
    assert!(a["measured"].as_f64().unwrap() <= a["tolerance"].as_f64().unwrap());
}

#[test]
fn malformed_config_exits_1_without_artifacts() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.toml"), "kind = \"decay\"\n[sim]\nn = \"many\"\n").unwrap();
    let out = peskin(tmp.path(), &["fit-decay", "--config", "bad.toml", "--out", "o"]);
    assert_eq!(code(&out), 1);
    assert!(!tmp.path().join("o").exists());

    // parses, but fails validation
    fs::write(
        tmp.path().join("odd.toml"),
        "kind = \"simulate\"\n[sim]\nn = 33\nm = 66\ndt = 0.01\nt_final = 0.1\n",
    )
    .unwrap();
    let out = peskin(tmp.path(), &["simulate", "--config", "odd.toml", "--out", "o"]);
    assert_eq!(code(&out), 1);
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn config_kind_must_match_subcommand() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("c.toml"),
        "kind = \"decay\"\n[sim]\nn = 32\nm = 64\ndt = 0.01\nt_final = 0.1\n",
    )
    .unwrap();
    let out = peskin(tmp.path(), &["simulate", "--config", "c.toml"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("decay"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    for dir in ["a", "b"] {
        let mut args = vec!["simulate", "--out", dir, "--seed", "7"];
        args.extend_from_slice(SHORT);
        assert_eq!(code(&peskin(tmp.path(), &args)), 0);
    }
    for f in ["manifest.json", "summary.json", "diagnostics.csv", "final.field"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between reruns");
    }
    assert!(tmp.path().join("a/run_info.json").exists());
}

#[test]
fn diagnostics_csv_has_documented_columns() {
    let tmp = TempDir::new().unwrap();
    let mut args = vec!["simulate", "--out", "o", "--record-every", "5"];
    args.extend_from_slice(SHORT);
    assert_eq!(code(&peskin(tmp.path(), &args)), 0);
    let mut r = csv::Reader::from_path(tmp.path().join("o/diagnostics.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "t", "step", "sup_norm", "kappa", "pi_sup", "y_holder", "x_holder", "circle_a", "circle_b", "circle_c1",
            "circle_c2", "q_running"
        ]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[2][1], "10");
}

#[test]
fn initial_field_file_round_trips_through_a_run() {
    let tmp = TempDir::new().unwrap();
    let x0 = PeriodicField::from_fn_vector(32, |s| [s.cos() + 0.02 * (3.0 * s).cos(), s.sin()]).unwrap();
    save_field(&tmp.path().join("x0.field"), &x0).unwrap();
    let mut args = vec!["simulate", "--out", "o", "--field", "x0.field", "--t-final", "0.01"];
    args.extend_from_slice(&SHORT[..4]);
    let out = peskin(tmp.path(), &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let x1 = load_field(&tmp.path().join("o/final.field")).unwrap();
    assert_eq!(x1.grid_size(), 32);
    assert!((&x1 - &x0).sup_norm() < 1e-2);
}

#[test]
fn degenerate_initial_curve_exits_2() {
    let tmp = TempDir::new().unwrap();
    let mut x0 = PeriodicField::from_fn_vector(32, |s| [s.cos(), (2.0 * s).sin()]).unwrap();
    // pinch two points together
    let p = x0.point(3);
    x0.values_mut(0)[11] = p[0];
    x0.values_mut(1)[11] = p[1];
    save_field(&tmp.path().join("pinched.field"), &x0).unwrap();
    let mut args = vec!["simulate", "--field", "pinched.field", "--out", "o"];
    args.extend_from_slice(SHORT);
    assert_eq!(code(&peskin(tmp.path(), &args)), 2);
}

#[test]
fn out_dir_precedence() {
    let tmp = TempDir::new().unwrap();
    let run = |extra: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_peskin"));
        c.current_dir(tmp.path()).env_remove("PESKIN_OUT_DIR");
        if let Some(v) = env {
            c.env("PESKIN_OUT_DIR", v);
        }
        c.arg("check-stationarity").args(["--n", "32"]).args(extra);
        assert!(c.output().unwrap().status.success());
    };
    run(&[], None);
    assert!(tmp.path().join("runs/stationarity/summary.json").exists());
    run(&[], Some("from_env"));
    assert!(tmp.path().join("from_env/summary.json").exists());
    run(&["--out", "from_flag"], Some("from_env2"));
    assert!(tmp.path().join("from_flag/summary.json").exists());
    assert!(!tmp.path().join("from_env2").exists());
}

#[test]
fn decay_summary_reports_fitted_rate() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("decay.toml"),
        r#"kind = "decay"
output_dir = "short-decay"

[sim]
n = 32
m = 64
dt = 0.01
t_final = 2.0
record_every = 10

[initial]
modes = [{ mode = 2, x_cos = 0.05, y_sin = 0.05 }]

[check]
fit_window = [0.5, 2.0]
"#,
    )
    .unwrap();
    let out = peskin(tmp.path(), &["fit-decay", "--config", "decay.toml"]);
    // the residual ratio cannot reach 1e-2 by t = 2
    assert_eq!(code(&out), 3);
    let s = summary(&tmp.path().join("short-decay"));
    let rate = s["measurements"]["fit"]["rate"].as_f64().unwrap();
    assert!((rate - 0.25).abs() < 0.02, "rate {rate}");
    let a = s["assertions"].as_array().unwrap();
    assert!(a.iter().any(|a| a["name"] == "decay_rate" && a["passed"] == true));
    assert!(a.iter().any(|a| a["name"] == "residual_ratio" && a["passed"] == false));
}

#[test]
fn unknown_integrator_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = peskin(tmp.path(), &["simulate", "--integrator", "rk4"]);
    assert_eq!(code(&out), 1);
    assert!(!tmp.path().join("runs").exists());
}
