//! Files written into a run's output directory.
//!
//! | file              | contents                                                 |
//! |-------------------|----------------------------------------------------------|
//! | `manifest.json`   | config echo, crate versions, seed                        |
//! | `run_info.json`   | wall-clock start/end and elapsed time (not reproducible) |
//! | `diagnostics.csv` | one row per stored step                                  |
//! | `summary.json`    | assertions with measured values and tolerances           |
//! | `final.field`     | last stored state, binary field format                   |
//!
//! Everything except `run_info.json` is byte-identical across reruns of the
//! same spec.
//!
//! CSV columns: `t, step, sup_norm, kappa, pi_sup, y_holder, x_holder,
//! circle_a, circle_b, circle_c1, circle_c2, q_running`. Curve columns are
//! empty for scalar runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use peskin_core::dynamics::{StepDiagnostics, Trajectory};
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::experiments::RunOutcome;
use crate::field_io::save_field;
use crate::spec::ExperimentSpec;

pub const MANIFEST: &str = "manifest.json";
pub const RUN_INFO: &str = "run_info.json";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const SUMMARY: &str = "summary.json";
pub const FINAL_FIELD: &str = "final.field";

#[derive(Serialize)]
struct Manifest<'a> {
    kind: String,
    seed: u64,
    versions: Versions,
    spec: &'a ExperimentSpec,
}

#[derive(Serialize)]
struct Versions {
    peskin_core: &'static str,
    peskin_harness: &'static str,
}

#[derive(Serialize)]
struct RunInfo {
    started_unix: f64,
    finished_unix: f64,
    elapsed_seconds: f64,
}

#[derive(Serialize)]
struct Row {
    t: f64,
    step: usize,
    sup_norm: f64,
    kappa: Option<f64>,
    pi_sup: Option<f64>,
    y_holder: Option<f64>,
    x_holder: Option<f64>,
    circle_a: Option<f64>,
    circle_b: Option<f64>,
    circle_c1: Option<f64>,
    circle_c2: Option<f64>,
    q_running: Option<f64>,
}

impl From<&StepDiagnostics> for Row {
    fn from(d: &StepDiagnostics) -> Self {
        let c = d.curve.as_ref();
        Row {
            t: d.t,
            step: d.step,
            sup_norm: d.sup_norm,
            kappa: c.map(|c| c.kappa),
            pi_sup: c.map(|c| c.pi_sup),
            y_holder: c.map(|c| c.y_holder),
            x_holder: c.map(|c| c.x_holder),
            circle_a: c.map(|c| c.circle.a),
            circle_b: c.map(|c| c.circle.b),
            circle_c1: c.map(|c| c.circle.c1),
            circle_c2: c.map(|c| c.circle.c2),
            q_running: c.map(|c| c.q_running),
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Serialize(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn write_manifest(dir: &Path, spec: &ExperimentSpec) -> Result<()> {
    write_json(
        &dir.join(MANIFEST),
        &Manifest {
            kind: spec.kind.to_string(),
            seed: spec.sim.seed,
            versions: Versions {
                peskin_core: peskin_core::VERSION,
                peskin_harness: env!("CARGO_PKG_VERSION"),
            },
            spec,
        },
    )
}

pub fn write_run_info(dir: &Path, started: SystemTime, elapsed: Duration) -> Result<()> {
    let unix = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    write_json(
        &dir.join(RUN_INFO),
        &RunInfo {
            started_unix: unix(started),
            finished_unix: unix(started + elapsed),
            elapsed_seconds: elapsed.as_secs_f64(),
        },
    )
}

pub fn write_diagnostics(dir: &Path, traj: &Trajectory) -> Result<()> {
    let path = dir.join(DIAGNOSTICS);
    let csv_err = |e: csv::Error| HarnessError::Serialize(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    for d in &traj.diagnostics {
        w.serialize(Row::from(d)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))
}

/// Writes every reproducible artifact of a finished run and returns the
/// paths written.
pub fn write_outcome(dir: &Path, spec: &ExperimentSpec, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_manifest(dir, spec)?;
    let mut written = vec![dir.join(MANIFEST)];
    if let Some(traj) = &outcome.trajectory {
        write_diagnostics(dir, traj)?;
        written.push(dir.join(DIAGNOSTICS));
        if !traj.states.is_empty() {
            save_field(&dir.join(FINAL_FIELD), traj.last())?;
            written.push(dir.join(FINAL_FIELD));
        }
    }
    write_json(&dir.join(SUMMARY), &outcome.summary)?;
    written.push(dir.join(SUMMARY));
    Ok(written)
}
