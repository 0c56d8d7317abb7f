//! Time integration of `∂ₜX + ¼ΛX = N(X)`, of the split system for
//! `Y = ΠX`, `Z = 𝒫X`, and of the scalar toy model
//! `∂ₜf + ¼Λf = |Λ^σ f|^{1/σ}`.
//!
//! The linear part is diagonal in Fourier space and handled exactly by
//! exponential time differencing: with `c = |n|/4`,
//!
//! ```text
//! ETD1:    X⁺ = e^{−ch} X + φ₁ N(X)
//! ETD-RK2: a  = e^{−ch} X + φ₁ N(X),   X⁺ = a + φ₂ (N(a) − N(X))
//! IMEX-BE: X⁺ = (X + h N(X)) / (1 + ch)
//! ```
//!
//! with `φ₁ = (1 − e^{−ch})/c` and `φ₂ = (e^{−ch} − 1 + ch)/(c²h)`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::{nonlinear_n, AlphaQuadrature, MaterialCurve};
use crate::diagnostics::{g_lattice, holder_norm, kappa, QTracker, DEFAULT_EPS_PRIME, THETA_EFF};
use crate::equilibrium::{
    circle_coefficients, conjugated_multiplier, fit_circle, frak_n, project_pi, CircleState,
};
use crate::error::{Error, Result};
use crate::spectral::{frac_laplacian, mode_of_index, MultiplierOp, PeriodicField};

/// Abort when κ exceeds this.
pub const KAPPA_MAX: f64 = 1e6;
/// Fields whose sup norm exceeds this are reported as blown up.
pub const BLOWUP_SUP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Etd1,
    #[default]
    EtdRk2,
    ImexBe,
}

impl Integrator {
    /// Formal order of accuracy.
    pub fn order(self) -> u32 {
        match self {
            Integrator::EtdRk2 => 2,
            _ => 1,
        }
    }
}

/// Sampling grids for the norm diagnostics. Empty lists select defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormGrids {
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default)]
    pub b: Vec<f64>,
    #[serde(default)]
    pub t: Vec<f64>,
}

impl NormGrids {
    /// `(μ, b)` pairs: the product of the lists, or the default lattice.
    pub fn mu_b(&self, eps_prime: f64) -> Vec<[f64; 2]> {
        if self.mu.is_empty() || self.b.is_empty() {
            return g_lattice(eps_prime, THETA_EFF);
        }
        self.mu
            .iter()
            .flat_map(|&m| self.b.iter().map(move |&b| [m, b]))
            .collect()
    }
}

fn default_eps_prime() -> f64 {
    DEFAULT_EPS_PRIME
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Grid size.
    pub n: usize,
    /// α-quadrature size.
    pub m: usize,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_eps_prime")]
    pub eps_prime: f64,
    #[serde(default)]
    pub grids: NormGrids,
    #[serde(default)]
    pub seed: u64,
    /// Store a state and its diagnostics every this many steps.
    #[serde(default = "one")]
    pub record_every: usize,
    /// Switch the nonlinearity off.
    #[serde(default)]
    pub linear_only: bool,
}

impl SimConfig {
    pub fn new(n: usize, dt: f64, t_final: f64) -> Self {
        Self {
            n,
            m: 2 * n,
            dt,
            t_final,
            integrator: Integrator::default(),
            eps_prime: DEFAULT_EPS_PRIME,
            grids: NormGrids::default(),
            seed: 0,
            record_every: 1,
            linear_only: false,
        }
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 16 || self.n % 2 != 0 {
            return bad(format!("n must be even and >= 16, got {}", self.n));
        }
        if self.m < 16 || self.m % 2 != 0 {
            return bad(format!("m must be even and >= 16, got {}", self.m));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final >= self.dt) || !self.t_final.is_finite() {
            return bad(format!("t_final must be >= dt, got {}", self.t_final));
        }
        let steps = (self.t_final / self.dt).round();
        if (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return bad(format!("t_final {} is not a multiple of dt {}", self.t_final, self.dt));
        }
        if !(self.eps_prime > 0.0 && self.eps_prime <= 0.1) {
            return bad(format!("eps_prime must lie in (0, 0.1], got {}", self.eps_prime));
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn quadrature(&self) -> Result<AlphaQuadrature> {
        AlphaQuadrature::new(self.m)
    }
}

fn phi0(c: f64, h: f64) -> f64 {
    (-c * h).exp()
}

fn phi1(c: f64, h: f64) -> f64 {
    if c == 0.0 {
        h
    } else {
        -(-c * h).exp_m1() / c
    }
}

fn phi2(c: f64, h: f64) -> f64 {
    let z = c * h;
    if z < 1e-2 {
        h * (0.5 - z / 6.0 + z * z / 24.0 - z.powi(3) / 120.0 + z.powi(4) / 720.0)
    } else {
        ((-z).exp_m1() + z) / (c * z)
    }
}

fn imex(c: f64, h: f64) -> f64 {
    1.0 / (1.0 + c * h)
}

/// Right-hand side `N` of a semilinear problem `∂ₜu + ¼Λu = N(u)`.
pub trait Nonlinearity {
    fn eval(&self, u: &PeriodicField) -> Result<PeriodicField>;
}

/// `N(X)` of the contour equation.
pub struct ContourNonlinearity {
    pub quad: AlphaQuadrature,
}

impl Nonlinearity for ContourNonlinearity {
    fn eval(&self, u: &PeriodicField) -> Result<PeriodicField> {
        nonlinear_n(&MaterialCurve::new(u.clone())?, &self.quad)
    }
}

/// `|Λ^σ f|^{1/σ}`.
pub struct ToyNonlinearity {
    pub sigma: f64,
}

impl Nonlinearity for ToyNonlinearity {
    fn eval(&self, u: &PeriodicField) -> Result<PeriodicField> {
        let p = 1.0 / self.sigma;
        Ok(frac_laplacian(u, self.sigma)?.map_components(|c| c.iter().map(|v| v.abs().powf(p)).collect()))
    }
}

pub struct Zero;

impl Nonlinearity for Zero {
    fn eval(&self, u: &PeriodicField) -> Result<PeriodicField> {
        PeriodicField::zeros(u.grid_size(), u.dim())
    }
}

/// Precomputed mode-wise coefficients for one grid size and step.
pub struct Stepper {
    integrator: Integrator,
    dt: f64,
    e: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    im: Vec<f64>,
}

impl Stepper {
    pub fn new(n: usize, dt: f64, integrator: Integrator) -> Self {
        let table = |f: fn(f64, f64) -> f64| -> Vec<f64> {
            (0..n).map(|k| f(mode_of_index(k, n).unsigned_abs() as f64 / 4.0, dt)).collect()
        };
        Self {
            integrator,
            dt,
            e: table(phi0),
            p1: table(phi1),
            p2: table(phi2),
            im: table(imex),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn combine(
        spec_a: &[Vec<Complex64>],
        ca: &[f64],
        spec_b: &[Vec<Complex64>],
        cb: &[f64],
    ) -> Result<PeriodicField> {
        let out = spec_a
            .iter()
            .zip(spec_b)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .enumerate()
                    .map(|(k, (x, y))| x * ca[k] + y * cb[k])
                    .collect()
            })
            .collect();
        PeriodicField::from_spectrum(out)
    }

    pub fn step(&self, u: &PeriodicField, nl: &dyn Nonlinearity) -> Result<PeriodicField> {
        let nu = nl.eval(u)?;
        match self.integrator {
            Integrator::Etd1 => Self::combine(u.spectrum(), &self.e, nu.spectrum(), &self.p1),
            Integrator::EtdRk2 => {
                let a = Self::combine(u.spectrum(), &self.e, nu.spectrum(), &self.p1)?;
                let na = nl.eval(&a)?;
                let ones = vec![1.0; self.p2.len()];
                let diff = &na - &nu;
                Self::combine(a.spectrum(), &ones, diff.spectrum(), &self.p2)
            }
            Integrator::ImexBe => {
                let rhs = u.axpy(self.dt, &nu);
                let zero = vec![0.0; self.im.len()];
                Self::combine(rhs.spectrum(), &self.im, rhs.spectrum(), &zero)
            }
        }
    }
}

fn step_curve(curve: &MaterialCurve, dt: f64, quad: &AlphaQuadrature, integrator: Integrator) -> Result<MaterialCurve> {
    let stepper = Stepper::new(curve.grid_size(), dt, integrator);
    MaterialCurve::new(stepper.step(curve.field(), &ContourNonlinearity { quad: *quad })?)
}

pub fn step_etd1(curve: &MaterialCurve, dt: f64, quad: &AlphaQuadrature) -> Result<MaterialCurve> {
    step_curve(curve, dt, quad, Integrator::Etd1)
}

pub fn step_etdrk2(curve: &MaterialCurve, dt: f64, quad: &AlphaQuadrature) -> Result<MaterialCurve> {
    step_curve(curve, dt, quad, Integrator::EtdRk2)
}

pub fn step_imex_be(curve: &MaterialCurve, dt: f64, quad: &AlphaQuadrature) -> Result<MaterialCurve> {
    step_curve(curve, dt, quad, Integrator::ImexBe)
}

/// Per-record measurements of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDiagnostics {
    pub kappa: f64,
    /// `‖ΠX‖_∞`
    pub pi_sup: f64,
    /// `‖ΠX‖_{Ċ^{3/2}}`
    pub y_holder: f64,
    /// `‖X‖_{Ċ^{3/2}}`
    pub x_holder: f64,
    pub circle: CircleState,
    /// Running value of `Q` from the start of the run.
    pub q_running: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub step: usize,
    pub sup_norm: f64,
    pub curve: Option<CurveDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StopReason {
    Completed,
    Degenerate { t: f64, s1: f64, s2: f64, ratio: f64 },
    BlowUp { t: f64, detail: String },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PeriodicField>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub stop: StopReason,
}

impl Trajectory {
    fn empty() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            diagnostics: Vec::new(),
            stop: StopReason::Completed,
        }
    }

    pub fn completed(&self) -> bool {
        self.stop == StopReason::Completed
    }

    pub fn last(&self) -> &PeriodicField {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds the initial state")
    }

    /// `(t, value)` pairs of a per-record curve quantity.
    pub fn curve_series(&self, f: impl Fn(&CurveDiagnostics) -> f64) -> Vec<(f64, f64)> {
        self.diagnostics
            .iter()
            .filter_map(|d| d.curve.as_ref().map(|c| (d.t, f(c))))
            .collect()
    }
}

fn measure_curve(x: &PeriodicField, t_rel: f64, q: &mut QTracker) -> Result<CurveDiagnostics> {
    let fit = fit_circle(&MaterialCurve::new(x.clone())?)?;
    let y = project_pi(x)?;
    Ok(CurveDiagnostics {
        kappa: kappa(x),
        pi_sup: fit.residual_sup,
        y_holder: holder_norm(&y, 0.5, 1)?,
        x_holder: holder_norm(x, 0.5, 1)?,
        circle: fit.state,
        q_running: q.update(x, t_rel)?,
    })
}

/// Classifies a failed step; other errors are returned as they are.
fn stop_reason(err: Error, t: f64) -> Result<StopReason> {
    match err {
        Error::Degenerate { s1, s2, ratio } => Ok(StopReason::Degenerate { t, s1, s2, ratio }),
        Error::BlowUp { t, detail } => Ok(StopReason::BlowUp { t, detail }),
        e => Err(e),
    }
}

fn guard(u: &PeriodicField, t: f64) -> Result<()> {
    let sup = u.sup_norm();
    if !sup.is_finite() || sup > BLOWUP_SUP {
        return Err(Error::BlowUp {
            t,
            detail: format!("sup norm {sup:e}"),
        });
    }
    Ok(())
}

/// Bit pattern of a field, for lossless checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldBits {
    pub n: usize,
    pub components: Vec<Vec<u64>>,
}

impl FieldBits {
    pub fn of(f: &PeriodicField) -> Self {
        Self {
            n: f.grid_size(),
            components: f.components().iter().map(|c| c.iter().map(|v| v.to_bits()).collect()).collect(),
        }
    }

    pub fn to_field(&self) -> Result<PeriodicField> {
        let comps: Vec<Vec<f64>> = self
            .components
            .iter()
            .map(|c| c.iter().map(|&b| f64::from_bits(b)).collect())
            .collect();
        if comps.iter().any(|c| c.len() != self.n) {
            return Err(Error::Checkpoint("component length does not match n".into()));
        }
        match comps.len() {
            1 => PeriodicField::scalar(comps.into_iter().next().unwrap()),
            2 => {
                let mut it = comps.into_iter();
                PeriodicField::vector(it.next().unwrap(), it.next().unwrap())
            }
            d => Err(Error::Checkpoint(format!("unsupported dimension {d}"))),
        }
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Snapshot sufficient to resume a contour run bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: SimConfig,
    pub step: usize,
    pub time: f64,
    pub state: FieldBits,
    pub initial: FieldBits,
    pub q_running: u64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let cp: Self = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                cp.version
            )));
        }
        Ok(cp)
    }
}

/// A contour run that can be advanced, checkpointed and resumed.
pub struct Simulation {
    config: SimConfig,
    stepper: Stepper,
    nl: Box<dyn Nonlinearity>,
    x: PeriodicField,
    x0: PeriodicField,
    step: usize,
    q: QTracker,
}

impl Simulation {
    pub fn new(curve: &MaterialCurve, config: SimConfig) -> Result<Self> {
        config.validate()?;
        if curve.grid_size() != config.n {
            return Err(Error::Config(format!(
                "curve has {} points but config.n = {}",
                curve.grid_size(),
                config.n
            )));
        }
        curve.check_well_stretched()?;
        let x = curve.field().clone();
        let q = QTracker::new(&x, config.eps_prime)?;
        Ok(Self {
            stepper: Stepper::new(config.n, config.dt, config.integrator),
            nl: Self::nonlinearity(&config)?,
            x0: x.clone(),
            x,
            step: 0,
            q,
            config,
        })
    }

    fn nonlinearity(config: &SimConfig) -> Result<Box<dyn Nonlinearity>> {
        Ok(if config.linear_only {
            Box::new(Zero)
        } else {
            Box::new(ContourNonlinearity { quad: config.quadrature()? })
        })
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        cp.config.validate()?;
        let x0 = cp.initial.to_field()?;
        let mut q = QTracker::new(&x0, cp.config.eps_prime)?;
        q.set_running(f64::from_bits(cp.q_running));
        Ok(Self {
            stepper: Stepper::new(cp.config.n, cp.config.dt, cp.config.integrator),
            nl: Self::nonlinearity(&cp.config)?,
            x: cp.state.to_field()?,
            x0,
            step: cp.step,
            q,
            config: cp.config.clone(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            step: self.step,
            time: self.time(),
            state: FieldBits::of(&self.x),
            initial: FieldBits::of(&self.x0),
            q_running: self.q.value().to_bits(),
        }
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn state(&self) -> &PeriodicField {
        &self.x
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.steps()
    }

    /// One step. Degeneracy and blow-up surface as errors.
    pub fn advance(&mut self) -> Result<()> {
        let t = self.time() + self.config.dt;
        let next = self.stepper.step(&self.x, self.nl.as_ref())?;
        guard(&next, t)?;
        self.x = next;
        self.step += 1;
        Ok(())
    }

    fn record(&mut self, traj: &mut Trajectory) -> Result<()> {
        let t = self.time();
        let c = measure_curve(&self.x, t, &mut self.q)?;
        if c.kappa > KAPPA_MAX {
            return Err(Error::Degenerate {
                s1: f64::NAN,
                s2: f64::NAN,
                ratio: 1.0 / c.kappa,
            });
        }
        traj.times.push(t);
        traj.states.push(self.x.clone());
        traj.diagnostics.push(StepDiagnostics {
            t,
            step: self.step,
            sup_norm: self.x.sup_norm(),
            curve: Some(c),
        });
        Ok(())
    }

    /// Runs to the horizon or to the first structured stop, recording the
    /// current state first.
    pub fn run(mut self) -> Result<Trajectory> {
        let mut traj = Trajectory::empty();
        let total = self.config.steps();
        if let Err(e) = self.record(&mut traj) {
            traj.stop = stop_reason(e, self.time())?;
            return Ok(traj);
        }
        while self.step < total {
            let outcome = self.advance().and_then(|_| {
                if self.step % self.config.record_every == 0 || self.step == total {
                    self.record(&mut traj)
                } else {
                    Ok(())
                }
            });
            if let Err(e) = outcome {
                traj.stop = stop_reason(e, self.time() + self.config.dt)?;
                break;
            }
        }
        Ok(traj)
    }
}

/// Integrates the contour equation in its semilinear form.
pub fn simulate(curve: &MaterialCurve, config: &SimConfig) -> Result<Trajectory> {
    Simulation::new(curve, config.clone())?.run()
}

/// Integrates `∂ₜY + 𝓛Y = Π𝔑(Y+Z)`, `∂ₜZ = 𝒫𝔑(Y+Z)` and records `X = Y + Z`.
///
/// `Y` is advanced with exponential integrators for `𝓛` (applied as
/// `O_sᵀ m(Λ) O_s Π`), `Z` with the matching explicit scheme.
pub fn simulate_split(curve: &MaterialCurve, config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    curve.check_well_stretched()?;
    let quad = config.quadrature()?;
    let n = config.n;
    let h = config.dt;
    let sym = |f: fn(f64, f64) -> f64| MultiplierOp::real("𝓛-φ", move |m| f(m.unsigned_abs() as f64 / 4.0, h));
    let (e_op, p1_op, p2_op, im_op) = (sym(phi0), sym(phi1), sym(phi2), sym(imex));

    let forcing = |y: &PeriodicField, z: &CircleState| -> Result<(PeriodicField, CircleState)> {
        let x = MaterialCurve::new(y + &z.to_field(n)?)?;
        let f = if config.linear_only {
            PeriodicField::zeros(n, 2)?
        } else {
            frak_n(&x, &quad)?
        };
        Ok((project_pi(&f)?, circle_coefficients(&f)?))
    };
    let add = |z: &CircleState, a: f64, dz: &CircleState| {
        CircleState::new(z.a + a * dz.a, z.b + a * dz.b, z.c1 + a * dz.c1, z.c2 + a * dz.c2)
    };

    let x0 = curve.field().clone();
    let mut y = project_pi(&x0)?;
    let mut z = circle_coefficients(&x0)?;
    let mut q = QTracker::new(&x0, config.eps_prime)?;
    let mut traj = Trajectory::empty();
    let total = config.steps();

    let mut record = |traj: &mut Trajectory, x: PeriodicField, step: usize| -> Result<()> {
        let t = step as f64 * h;
        let c = measure_curve(&x, t, &mut q)?;
        traj.times.push(t);
        traj.diagnostics.push(StepDiagnostics {
            t,
            step,
            sup_norm: x.sup_norm(),
            curve: Some(c),
        });
        traj.states.push(x);
        Ok(())
    };
    record(&mut traj, x0, 0)?;

    for step in 1..=total {
        let t = step as f64 * h;
        let outcome = (|| -> Result<(PeriodicField, CircleState)> {
            let (fy, fz) = forcing(&y, &z)?;
            let out = match config.integrator {
                Integrator::Etd1 => (
                    &conjugated_multiplier(&y, &e_op)? + &conjugated_multiplier(&fy, &p1_op)?,
                    add(&z, h, &fz),
                ),
                Integrator::EtdRk2 => {
                    let ay = &conjugated_multiplier(&y, &e_op)? + &conjugated_multiplier(&fy, &p1_op)?;
                    let az = add(&z, h, &fz);
                    let (gy, gz) = forcing(&ay, &az)?;
                    let yn = &ay + &conjugated_multiplier(&(&gy - &fy), &p2_op)?;
                    let zn = add(&add(&z, 0.5 * h, &fz), 0.5 * h, &gz);
                    (yn, zn)
                }
                Integrator::ImexBe => (conjugated_multiplier(&y.axpy(h, &fy), &im_op)?, add(&z, h, &fz)),
            };
            guard(&out.0, t)?;
            Ok(out)
        })();
        match outcome {
            Ok((yn, zn)) => {
                y = yn;
                z = zn;
            }
            Err(e) => {
                traj.stop = stop_reason(e, t)?;
                return Ok(traj);
            }
        }
        if step % config.record_every == 0 || step == total {
            let x = &y + &z.to_field(n)?;
            if let Err(e) = record(&mut traj, x, step) {
                traj.stop = stop_reason(e, t)?;
                return Ok(traj);
            }
        }
    }
    Ok(traj)
}

/// Integrates the scalar toy model `∂ₜf + ¼Λf = |Λ^σ f|^{1/σ}`.
pub fn simulate_toy(f0: &PeriodicField, sigma: f64, config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Config(format!("sigma must lie in (0, 1), got {sigma}")));
    }
    if f0.is_vector() || f0.grid_size() != config.n {
        return Err(Error::Config("toy model needs a scalar field on the configured grid".into()));
    }
    let stepper = Stepper::new(config.n, config.dt, config.integrator);
    let nl: Box<dyn Nonlinearity> = if config.linear_only {
        Box::new(Zero)
    } else {
        Box::new(ToyNonlinearity { sigma })
    };
    let mut traj = Trajectory::empty();
    let push = |traj: &mut Trajectory, f: &PeriodicField, step: usize| {
        let t = step as f64 * config.dt;
        traj.times.push(t);
        traj.diagnostics.push(StepDiagnostics {
            t,
            step,
            sup_norm: f.sup_norm(),
            curve: None,
        });
        traj.states.push(f.clone());
    };
    let mut f = f0.clone();
    push(&mut traj, &f, 0);
    let total = config.steps();
    for step in 1..=total {
        let t = step as f64 * config.dt;
        match stepper.step(&f, nl.as_ref()).and_then(|g| guard(&g, t).map(|_| g)) {
            Ok(g) => f = g,
            Err(e) => {
                traj.stop = stop_reason(e, t)?;
                return Ok(traj);
            }
        }
        if step % config.record_every == 0 || step == total {
            push(&mut traj, &f, step);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::semigroup;

    fn perturbed(n: usize, eps: f64) -> MaterialCurve {
        MaterialCurve::from_fn(n, |s| {
            let r = 1.0 + eps * (2.0 * s).cos() + 0.5 * eps * (3.0 * s).sin();
            [r * s.cos(), r * s.sin()]
        })
        .unwrap()
    }

    #[test]
    fn phi_functions_are_smooth_across_the_switch() {
        let h = 0.1_f64;
        for c in [0.0999, 0.1, 0.1001] {
            let exact = ((-c * h).exp() - 1.0 + c * h) / (c * c * h);
            assert!((phi2(c, h) - exact).abs() < 1e-10);
        }
        assert_eq!(phi1(0.0, 0.3), 0.3);
        assert!((phi2(0.0, 0.3) - 0.15).abs() < 1e-15);
        assert!((phi2(1e-9, 0.3) - 0.15).abs() < 1e-10);
    }

    #[test]
    fn config_validation() {
        let ok = SimConfig::new(32, 0.01, 0.1);
        ok.validate().unwrap();
        let mut c = ok.clone();
        c.n = 15;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.m = 8;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.dt = 0.0;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.t_final = 0.005;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.eps_prime = 0.2;
        assert!(c.validate().is_err());
        let mut c = ok;
        c.t_final = 0.105;
        assert!(c.validate().is_err());
    }

    #[test]
    fn linear_only_is_the_exact_semigroup() {
        let f0 = PeriodicField::from_fn_vector(32, |s| [(3.0 * s).cos() + 0.2, (5.0 * s).sin()]).unwrap();
        let steps = 50;
        let dt = 0.02;
        for integ in [Integrator::Etd1, Integrator::EtdRk2] {
            let s = Stepper::new(32, dt, integ);
            let mut u = f0.clone();
            for _ in 0..steps {
                u = s.step(&u, &Zero).unwrap();
            }
            let exact = semigroup(&f0, steps as f64 * dt).unwrap();
            assert!((&u - &exact).sup_norm() < 1e-12);
        }
        let one = Stepper::new(32, dt, Integrator::Etd1)
            .step(&PeriodicField::from_fn_scalar(32, |s| (4.0 * s).cos()).unwrap(), &Zero)
            .unwrap();
        let expect = PeriodicField::from_fn_scalar(32, |s| (-dt).exp() * (4.0 * s).cos()).unwrap();
        assert!((&one - &expect).sup_norm() < 1e-14);
    }

    #[test]
    fn circles_are_fixed_points_of_every_step() {
        let c = MaterialCurve::from_fn(64, |s| [1.3 * s.cos() + 0.2, 1.3 * s.sin()]).unwrap();
        let q = AlphaQuadrature::for_grid(64);
        for next in [
            step_etd1(&c, 0.05, &q).unwrap(),
            step_etdrk2(&c, 0.05, &q).unwrap(),
            step_imex_be(&c, 0.05, &q).unwrap(),
        ] {
            assert!((next.field() - c.field()).sup_norm() < 1e-12);
        }
    }

    #[test]
    fn one_step_etd1_and_etdrk2_agree_to_second_order() {
        let x = perturbed(32, 0.1);
        let q = AlphaQuadrature::for_grid(32);
        let diff = |dt: f64| {
            (step_etd1(&x, dt, &q).unwrap().field() - step_etdrk2(&x, dt, &q).unwrap().field()).sup_norm()
        };
        let slope = (diff(0.02) / diff(0.01)).log2();
        assert!((slope - 2.0).abs() < 0.1, "{slope}");
    }

    fn final_state(x: &MaterialCurve, dt: f64, integ: Integrator) -> PeriodicField {
        let cfg = SimConfig::new(x.grid_size(), dt, 0.4)
            .with_integrator(integ)
            .with_record_every(usize::MAX);
        let traj = simulate(x, &cfg).unwrap();
        assert!(traj.completed());
        traj.last().clone()
    }

    #[test]
    fn self_convergence_orders() {
        let x = perturbed(32, 0.1);
        for (integ, order, tol) in [(Integrator::Etd1, 1.0, 0.1), (Integrator::EtdRk2, 2.0, 0.15)] {
            let u: Vec<_> = [0.04, 0.02, 0.01].iter().map(|&dt| final_state(&x, dt, integ)).collect();
            let e1 = (&u[0] - &u[1]).sup_norm();
            let e2 = (&u[1] - &u[2]).sup_norm();
            let slope = (e1 / e2).log2();
            assert!((slope - order).abs() < tol, "{integ:?}: {slope}");
        }
    }

    #[test]
    fn simulate_records_and_keeps_circles() {
        let c = MaterialCurve::from_fn(32, |s| [s.cos(), s.sin()]).unwrap();
        let cfg = SimConfig::new(32, 0.1, 1.0).with_record_every(5);
        let traj = simulate(&c, &cfg).unwrap();
        assert!(traj.completed());
        assert_eq!(traj.times.len(), 3);
        assert_eq!(traj.diagnostics.len(), traj.times.len());
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert!((traj.last() - c.field()).sup_norm() < 1e-10);
    }

    #[test]
    fn degenerate_initial_curve_is_a_structured_stop() {
        let fig8 = MaterialCurve::from_fn(32, |s| [s.sin(), (2.0 * s).sin()]).unwrap();
        let cfg = SimConfig::new(32, 0.1, 0.2);
        assert!(matches!(simulate(&fig8, &cfg), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn split_matches_direct() {
        let x = perturbed(32, 0.1);
        let cfg = SimConfig::new(32, 0.02, 0.4).with_record_every(usize::MAX);
        let a = simulate(&x, &cfg).unwrap();
        let b = simulate_split(&x, &cfg).unwrap();
        let cfg2 = SimConfig::new(32, 0.01, 0.4).with_record_every(usize::MAX);
        let a2 = simulate(&x, &cfg2).unwrap();
        let b2 = simulate_split(&x, &cfg2).unwrap();
        let d1 = (a.last() - b.last()).sup_norm();
        let d2 = (a2.last() - b2.last()).sup_norm();
        assert!(d1 < 1e-4, "{d1}");
        assert!(d2 < d1 / 2.5, "{d1} {d2}");

        let w = MaterialCurve::from_fn(32, |s| [0.9 * s.cos() + 1.0, 0.9 * s.sin()]).unwrap();
        let t = simulate_split(&w, &cfg).unwrap();
        assert!((t.last() - w.field()).sup_norm() < 1e-10);
    }

    #[test]
    fn checkpoint_resume_is_bit_identical() {
        let x = perturbed(32, 0.08);
        let cfg = SimConfig::new(32, 0.05, 0.5).with_record_every(2);
        let full = simulate(&x, &cfg).unwrap();

        let mut sim = Simulation::new(&x, cfg.clone()).unwrap();
        for _ in 0..4 {
            sim.advance().unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.json");
        sim.checkpoint().save(&path).unwrap();
        let resumed = Simulation::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap().run().unwrap();
        assert_eq!(resumed.last(), full.last());
        assert_eq!(resumed.times.first(), Some(&0.2));
        let tail = &full.diagnostics[full.diagnostics.len() - 1];
        assert_eq!(resumed.diagnostics.last(), Some(tail));

        let mut bad = Checkpoint::load(&path).unwrap();
        bad.version = 99;
        bad.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn toy_examples() {
        let cfg = SimConfig::new(32, 0.01, 0.2);
        let zero = PeriodicField::zeros(32, 1).unwrap();
        let t = simulate_toy(&zero, 0.5, &cfg).unwrap();
        assert_eq!(t.last().sup_norm(), 0.0);

        let f0 = PeriodicField::from_fn_scalar(32, |s| (2.0 * s).cos()).unwrap();
        let mut lin = cfg.clone();
        lin.linear_only = true;
        let t = simulate_toy(&f0, 0.5, &lin).unwrap();
        let exact = semigroup(&f0, 0.2).unwrap();
        assert!((t.last() - &exact).sup_norm() < 1e-13);

        let big = f0.scaled(1e3);
        let mut long = SimConfig::new(32, 0.01, 5.0);
        long.record_every = 100;
        let t = simulate_toy(&big, 0.5, &long).unwrap();
        assert!(matches!(t.stop, StopReason::BlowUp { .. }));
        assert!(simulate_toy(&f0, 1.0, &cfg).is_err());
    }

    #[test]
    fn deterministic_reruns() {
        let x = perturbed(32, 0.1);
        let cfg = SimConfig::new(32, 0.05, 0.3);
        let a = simulate(&x, &cfg).unwrap();
        let b = simulate(&x, &cfg).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.diagnostics, b.diagnostics);
    }
}
