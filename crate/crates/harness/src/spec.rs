//! Experiment descriptions, read from TOML.
//!
//! ```toml
//! kind = "decay"
//! output_dir = "runs/decay"
//!
//! [sim]
//! n = 128
//! m = 256
//! dt = 1e-3
//! t_final = 10.0
//! record_every = 50
//!
//! [initial]
//! circle = { a = 1.0, b = 0.0, c1 = 0.0, c2 = 0.0 }
//! modes = [{ mode = 2, x_cos = 0.05, y_sin = 0.05 }]
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use peskin_core::contour::MaterialCurve;
use peskin_core::dynamics::SimConfig;
use peskin_core::equilibrium::CircleState;
use peskin_core::spectral::PeriodicField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::field_io::load_field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    OperatorChecks,
    Stationarity,
    Equivalence,
    Decay,
    Smoothing,
    Stability,
    ToyScaling,
    Norms,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        write!(f, "{}", s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

/// One Fourier mode added to the initial curve:
/// `[x_cos cos ns + x_sin sin ns, y_cos cos ns + y_sin sin ns]
///  + (radial_cos cos ns + radial_sin sin ns) e_r`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModePerturbation {
    pub mode: u32,
    #[serde(default)]
    pub x_cos: f64,
    #[serde(default)]
    pub x_sin: f64,
    #[serde(default)]
    pub y_cos: f64,
    #[serde(default)]
    pub y_sin: f64,
    #[serde(default)]
    pub radial_cos: f64,
    #[serde(default)]
    pub radial_sin: f64,
}

/// Radial perturbation `amplitude Σ_{n=first..N/2-1} n^{-exponent} cos(ns + φ_n)`
/// with phases drawn from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub amplitude: f64,
    pub exponent: f64,
    #[serde(default = "two")]
    pub first_mode: u32,
}

fn two() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    #[serde(default = "CircleState::unit")]
    pub circle: CircleState,
    #[serde(default)]
    pub modes: Vec<ModePerturbation>,
    #[serde(default)]
    pub power_law: Option<PowerLaw>,
    /// Binary field file; replaces the other entries when present.
    #[serde(default)]
    pub file: Option<PathBuf>,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self {
            circle: CircleState::unit(),
            modes: Vec::new(),
            power_law: None,
            file: None,
        }
    }
}

impl InitialCondition {
    pub fn with_modes(modes: Vec<ModePerturbation>) -> Self {
        Self {
            modes,
            ..Self::default()
        }
    }

    /// Samples the descriptor as a 2-vector field on `n` points.
    pub fn render(&self, n: usize, seed: u64, base: &Path) -> Result<PeriodicField> {
        if let Some(file) = &self.file {
            let path = if file.is_absolute() { file.clone() } else { base.join(file) };
            let f = load_field(&path)?;
            if f.grid_size() != n || !f.is_vector() {
                return Err(HarnessError::Config(format!(
                    "{} holds a {}-component field on {} points, expected a curve on {n}",
                    path.display(),
                    f.dim(),
                    f.grid_size()
                )));
            }
            return Ok(f);
        }
        let phases: Vec<f64> = match &self.power_law {
            Some(_) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n / 2).map(|_| rng.gen_range(0.0..2.0 * PI)).collect()
            }
            None => Vec::new(),
        };
        let circle = self.circle;
        Ok(PeriodicField::from_fn_vector(n, |s| {
            let (sn, cs) = s.sin_cos();
            let mut p = [circle.a * cs - circle.b * sn + circle.c1, circle.a * sn + circle.b * cs + circle.c2];
            let mut radial = 0.0;
            for m in &self.modes {
                let (ms, mc) = (m.mode as f64 * s).sin_cos();
                p[0] += m.x_cos * mc + m.x_sin * ms;
                p[1] += m.y_cos * mc + m.y_sin * ms;
                radial += m.radial_cos * mc + m.radial_sin * ms;
            }
            if let Some(pl) = &self.power_law {
                for k in pl.first_mode as usize..n / 2 {
                    radial += pl.amplitude * (k as f64).powf(-pl.exponent) * (k as f64 * s + phases[k]).cos();
                }
            }
            p[0] += radial * cs;
            p[1] += radial * sn;
            p
        })?)
    }

    /// Scalar profile for the toy model: `Σ x_cos cos ns + x_sin sin ns`.
    pub fn render_scalar(&self, n: usize, dilation: f64) -> Result<PeriodicField> {
        Ok(PeriodicField::from_fn_scalar(n, |s| {
            self.modes
                .iter()
                .map(|m| {
                    let (ms, mc) = (m.mode as f64 * dilation * s).sin_cos();
                    m.x_cos * mc + m.x_sin * ms
                })
                .sum()
        })?)
    }
}

/// Tolerances and extra parameters. Defaults are the acceptance settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckParams {
    /// Random samples for the operator, stationarity and equivalence checks.
    pub samples: usize,
    pub velocity_tol: f64,
    pub fit_window: [f64; 2],
    pub expected_rate: f64,
    pub rate_tol: f64,
    pub residual_ratio: f64,
    pub deltas: Vec<f64>,
    pub stability_factor: f64,
    pub sigma_scaling: f64,
    pub sigma_convergence: f64,
    pub lambdas: Vec<usize>,
    pub convergence_dts: Vec<f64>,
    pub mollifier_widths: Vec<f64>,
}

impl Default for CheckParams {
    fn default() -> Self {
        Self {
            samples: 20,
            velocity_tol: 1e-6,
            fit_window: [2.0, 8.0],
            expected_rate: 0.25,
            rate_tol: 0.02,
            residual_ratio: 1e-2,
            deltas: vec![1e-3, 1e-4],
            stability_factor: 10.0,
            sigma_scaling: 0.6,
            sigma_convergence: 0.5,
            lambdas: vec![2, 3],
            convergence_dts: vec![0.02, 0.01, 0.005],
            mollifier_widths: vec![0.8, 0.4, 0.2, 0.1, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub sim: SimConfig,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub check: CheckParams,
    /// Directory that relative paths in the config resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut spec = Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Serialize(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        let c = &self.check;
        if c.samples == 0 && matches!(self.kind, ExperimentKind::OperatorChecks | ExperimentKind::Equivalence) {
            return Err(HarnessError::Config("check.samples must be >= 1".into()));
        }
        if !(c.fit_window[0] < c.fit_window[1]) {
            return Err(HarnessError::Config("check.fit_window must be increasing".into()));
        }
        if self.kind == ExperimentKind::Stability && c.deltas.is_empty() {
            return Err(HarnessError::Config("check.deltas is empty".into()));
        }
        if self.kind == ExperimentKind::ToyScaling {
            for s in [c.sigma_scaling, c.sigma_convergence] {
                if !(s > 0.0 && s < 1.0) {
                    return Err(HarnessError::Config(format!("sigma must lie in (0, 1), got {s}")));
                }
            }
            if c.convergence_dts.len() < 3 {
                return Err(HarnessError::Config("check.convergence_dts needs three step sizes".into()));
            }
            if let Some(l) = c.lambdas.iter().find(|&&l| l < 2 || self.sim.n % l != 0 || (self.sim.n / l) % 2 != 0 || self.sim.n / l < 16) {
                return Err(HarnessError::Config(format!(
                    "dilation {l} must be >= 2 and leave an even grid of at least 16 points"
                )));
            }
        }
        Ok(())
    }

    pub fn initial_curve(&self) -> Result<MaterialCurve> {
        Ok(MaterialCurve::new(self.initial.render(self.sim.n, self.sim.seed, &self.base_dir)?)?)
    }

    /// Settings used when a subcommand runs without a config file.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let mut sim = SimConfig::new(64, 1e-2, 1.0);
        let mut initial = InitialCondition::default();
        let mut check = CheckParams::default();
        let mode = |k, x_cos, y_sin| ModePerturbation {
            mode: k,
            x_cos,
            y_sin,
            ..Default::default()
        };
        match kind {
            ExperimentKind::Simulate | ExperimentKind::Norms => {
                initial = InitialCondition::with_modes(vec![mode(2, 0.05, 0.05), mode(3, 0.02, 0.0)]);
                sim.record_every = 5;
            }
            ExperimentKind::OperatorChecks => check.samples = 100,
            ExperimentKind::Stationarity => {
                sim.n = 256;
                sim.m = 512;
            }
            ExperimentKind::Equivalence => {
                check.samples = 50;
                sim.n = 128;
                sim.m = 256;
                initial = InitialCondition::with_modes(vec![mode(2, 0.05, 0.0), mode(3, 0.0, 0.03)]);
            }
            ExperimentKind::Decay => {
                sim = SimConfig::new(128, 1e-3, 10.0);
                sim.record_every = 50;
                initial = InitialCondition::with_modes(vec![mode(2, 0.05, 0.05)]);
            }
            ExperimentKind::Smoothing => {
                sim = SimConfig::new(128, 1e-3, 1.0);
                sim.record_every = 5;
                sim.seed = 909;
                initial.power_law = Some(PowerLaw {
                    amplitude: 0.05,
                    exponent: 2.2,
                    first_mode: 2,
                });
            }
            ExperimentKind::Stability => {
                sim = SimConfig::new(64, 5e-3, 1.0);
                sim.record_every = 5;
                initial.modes = vec![
                    ModePerturbation {
                        mode: 2,
                        radial_cos: 0.08,
                        ..Default::default()
                    },
                    ModePerturbation {
                        mode: 3,
                        radial_sin: 0.04,
                        ..Default::default()
                    },
                ];
            }
            ExperimentKind::ToyScaling => {
                sim = SimConfig::new(96, 1e-2, 0.5);
                sim.record_every = 1_000_000;
                initial.modes = vec![
                    ModePerturbation { mode: 1, x_cos: 0.3, ..Default::default() },
                    ModePerturbation { mode: 2, x_sin: 0.15, ..Default::default() },
                    ModePerturbation { mode: 3, x_cos: 0.05, ..Default::default() },
                ];
            }
        }
        Self {
            kind,
            sim,
            initial,
            output_dir: None,
            check,
            base_dir: PathBuf::new(),
        }
    }
}
