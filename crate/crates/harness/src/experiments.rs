//! One runner per experiment kind. Each returns the assertions it checked
//! together with the trajectory it produced, if any.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use peskin_core::contour::{direct_velocity, nonlinear_n, MaterialCurve};
use peskin_core::diagnostics::{
    besov_b0, besov_b1, decay_rate_fit, g_norm_sampled, kappa, kappa0_sequence, kappa_monitor, mixed_norm,
    q_quantity, SpatialNorm,
};
use peskin_core::dynamics::{simulate, simulate_toy, Integrator, SimConfig, StopReason, Trajectory};
use peskin_core::equilibrium::{
    basis, frak_n, linearized_l, linearized_l_conjugated, project_p, CircleState,
};
use peskin_core::spectral::{derivative, derivative_k, lambda, PeriodicField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::spec::{ExperimentKind, ExperimentSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    /// `measured ≤ tolerance`
    AtMost,
    /// `|measured − target| ≤ tolerance`
    Within { target: f64 },
    /// the monitor reported no counterexample
    Holds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    /// Acceptance criterion this assertion belongs to.
    pub anchor: String,
    pub measured: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub passed: bool,
}

impl Assertion {
    fn at_most(name: &str, anchor: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            measured,
            tolerance,
            comparison: Comparison::AtMost,
            passed: measured <= tolerance,
        }
    }

    fn within(name: &str, anchor: &str, measured: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            measured,
            tolerance,
            comparison: Comparison::Within { target },
            passed: (measured - target).abs() <= tolerance,
        }
    }

    fn holds(name: &str, anchor: &str, counterexamples: usize) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            measured: counterexamples as f64,
            tolerance: 0.0,
            comparison: Comparison::Holds,
            passed: counterexamples == 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: ExperimentKind,
    pub passed: bool,
    pub stop: Option<StopReason>,
    pub assertions: Vec<Assertion>,
    pub measurements: BTreeMap<String, Value>,
}

pub struct RunOutcome {
    pub summary: Summary,
    pub trajectory: Option<Trajectory>,
}

impl RunOutcome {
    pub fn degenerate(&self) -> bool {
        matches!(self.summary.stop, Some(StopReason::Degenerate { .. }))
    }
}

#[derive(Default)]
struct Builder {
    assertions: Vec<Assertion>,
    measurements: BTreeMap<String, Value>,
    stop: Option<StopReason>,
}

impl Builder {
    fn check(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    fn note(&mut self, key: &str, v: impl Serialize) {
        self.measurements
            .insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    /// Records the stop reason of a run; the first non-completed one wins.
    fn stopped(&mut self, t: &Trajectory) {
        if self.stop.is_none() || self.stop == Some(StopReason::Completed) {
            self.stop = Some(t.stop.clone());
        }
    }

    fn finish(self, kind: ExperimentKind, trajectory: Option<Trajectory>) -> RunOutcome {
        let completed = !matches!(
            self.stop,
            Some(StopReason::Degenerate { .. }) | Some(StopReason::BlowUp { .. })
        );
        RunOutcome {
            summary: Summary {
                kind,
                passed: completed && self.assertions.iter().all(|a| a.passed),
                stop: self.stop,
                assertions: self.assertions,
                measurements: self.measurements,
            },
            trajectory,
        }
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutcome> {
    spec.validate()?;
    match spec.kind {
        ExperimentKind::Simulate => run_simulate(spec),
        ExperimentKind::OperatorChecks => run_operator_checks(spec),
        ExperimentKind::Stationarity => run_stationarity(spec),
        ExperimentKind::Equivalence => run_equivalence(spec),
        ExperimentKind::Decay => run_decay(spec),
        ExperimentKind::Smoothing => run_smoothing(spec),
        ExperimentKind::Stability => run_stability(spec),
        ExperimentKind::ToyScaling => run_toy(spec),
        ExperimentKind::Norms => run_norms(spec),
    }
}

fn rng(spec: &ExperimentSpec) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(spec.sim.seed)
}

fn random_circle(rng: &mut ChaCha8Rng) -> CircleState {
    let r = rng.gen_range(0.5..2.0);
    let phi = rng.gen_range(0.0..2.0 * PI);
    CircleState::new(r * phi.cos(), r * phi.sin(), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Random vector field with modes `2..=kmax`, scaled to sup norm `amp`.
fn random_smooth(rng: &mut ChaCha8Rng, n: usize, kmax: usize, amp: f64) -> Result<PeriodicField> {
    let c: Vec<[f64; 4]> = (2..=kmax)
        .map(|k| std::array::from_fn(|_| rng.gen_range(-1.0..1.0) / (k * k) as f64))
        .collect();
    let f = PeriodicField::from_fn_vector(n, |s| {
        let mut p = [0.0; 2];
        for (i, a) in c.iter().enumerate() {
            let (sn, cs) = ((i + 2) as f64 * s).sin_cos();
            p[0] += a[0] * cs + a[1] * sn;
            p[1] += a[2] * cs + a[3] * sn;
        }
        p
    })?;
    Ok(f.scaled(amp / f.sup_norm()))
}

fn monitor_counterexamples(b: &mut Builder, trajs: &[&Trajectory], eps_prime: f64) -> Result<()> {
    let mut applicable = 0;
    let mut counter = 0;
    for t in trajs.iter().filter(|t| !t.states.is_empty()) {
        let v = kappa_monitor(&t.times, &t.states, eps_prime)?;
        applicable += v.hypotheses_hold as usize;
        counter += (v.conclusion_holds == Some(false)) as usize;
    }
    b.note("monitor_applicable", applicable);
    b.check(Assertion::holds("kappa_propagation", "AC11 kappa-propagation monitor", counter));
    Ok(())
}

fn run_simulate(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let mut b = Builder::default();
    let traj = simulate(&spec.initial_curve()?, &spec.sim)?;
    b.stopped(&traj);
    b.note("final_time", traj.final_time());
    if let Some(d) = traj.diagnostics.last().and_then(|d| d.curve.clone()) {
        b.note("final", d);
    }
    Ok(b.finish(spec.kind, Some(traj)))
}

fn run_operator_checks(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let mut b = Builder::default();
    let n = spec.sim.n;
    let anchor = "AC3 operator identities";
    let basis_err = basis(n)?
        .iter()
        .map(|e| linearized_l(e).map(|v| v.sup_norm()))
        .collect::<std::result::Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    b.check(Assertion::at_most("L_annihilates_basis", anchor, basis_err, 1e-12));

    let mut r = rng(spec);
    let (mut conj, mut proj) = (0.0_f64, 0.0_f64);
    let kmax = (n / 2 - 2).min(20);
    for _ in 0..spec.check.samples {
        let c: Vec<[f64; 4]> = (0..=kmax).map(|_| std::array::from_fn(|_| r.gen_range(-1.0..1.0))).collect();
        let w = PeriodicField::from_fn_vector(n, |s| {
            let mut p = [0.0; 2];
            for (k, a) in c.iter().enumerate() {
                let (sn, cs) = (k as f64 * s).sin_cos();
                p[0] += a[0] * cs + a[1] * sn;
                p[1] += a[2] * cs + a[3] * sn;
            }
            p
        })?;
        let lw = linearized_l(&w)?;
        conj = conj.max((&lw - &linearized_l_conjugated(&w)?).sup_norm());
        proj = proj.max(project_p(&lw)?.sup_norm());
    }
    b.check(Assertion::at_most("L_equals_rotation_conjugate", anchor, conj, 1e-10));
    b.check(Assertion::at_most("P_L_vanishes", anchor, proj, 1e-12));

    let anchor = "AC4 shifted nonlinearity";
    let quad = spec.sim.quadrature()?;
    let eps: Vec<f64> = (0..5).map(|i| 1e-4 * 10f64.powf(i as f64 / 2.0)).collect();
    let mut at_eq = 0.0_f64;
    let mut slopes = Vec::new();
    for _ in 0..(spec.check.samples / 10).max(1) {
        let w = random_circle(&mut r).to_field(n)?;
        let u = random_smooth(&mut r, n, 5, 1.0)?;
        at_eq = at_eq.max(frak_n(&MaterialCurve::new(w.clone())?, &quad)?.sup_norm());
        let vals = eps
            .iter()
            .map(|&e| Ok(frak_n(&MaterialCurve::new(w.axpy(e, &u))?, &quad)?.sup_norm()))
            .collect::<Result<Vec<f64>>>()?;
        slopes.push(log_slope(&eps, &vals));
    }
    let worst_slope = slopes.iter().copied().max_by(|a, b| (a - 2.0).abs().total_cmp(&(b - 2.0).abs())).unwrap_or(f64::NAN);
    b.check(Assertion::at_most("shifted_nonlinearity_at_equilibria", anchor, at_eq, 1e-6));
    b.check(Assertion::within("second_order_slope", anchor, worst_slope, 2.0, 0.1));
    b.note("slopes", slopes);
    Ok(b.finish(spec.kind, None))
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn run_stationarity(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let mut b = Builder::default();
    let quad = spec.sim.quadrature()?;
    let mut worst = direct_velocity(&spec.initial_curve()?, &quad)?.sup_norm();
    b.note("initial_velocity", worst);
    let mut r = rng(spec);
    for _ in 0..spec.check.samples {
        let w = random_circle(&mut r).render(spec.sim.n)?;
        worst = worst.max(direct_velocity(&w, &quad)?.sup_norm());
    }
    b.check(Assertion::at_most(
        "max_direct_velocity",
        "AC1 stationarity",
        worst,
        spec.check.velocity_tol,
    ));
    Ok(b.finish(spec.kind, None))
}

fn run_equivalence(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let mut b = Builder::default();
    let quad = spec.sim.quadrature()?;
    let n = spec.sim.n;
    let rel = |x: &MaterialCurve| -> Result<f64> {
        let d = direct_velocity(x, &quad)?;
        let s = nonlinear_n(x, &quad)?.axpy(-0.25, &lambda(x.field()));
        Ok((&d - &s).sup_norm() / d.sup_norm())
    };
    let mut worst = rel(&spec.initial_curve()?)?;
    let mut r = rng(spec);
    for _ in 1..spec.check.samples {
        let amp = r.gen_range(0.02..0.1);
        let w = random_circle(&mut r);
        let u = random_smooth(&mut r, n, 6, amp * w.radius().min(1.0))?;
        worst = worst.max(rel(&MaterialCurve::new(&w.to_field(n)? + &u)?)?);
    }
    b.check(Assertion::at_most(
        "relative_velocity_difference",
        "AC2 semilinear equivalence",
        worst,
        spec.check.velocity_tol,
    ));
    Ok(b.finish(spec.kind, None))
}

fn run_decay(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let mut b = Builder::default();
    let traj = simulate(&spec.initial_curve()?, &spec.sim)?;
    b.stopped(&traj);
    let anchor = "AC5 exponential relaxation";
    let series = traj.curve_series(|c| c.pi_sup);
    let [t0, t1] = spec.check.fit_window;
    match decay_rate_fit(&series, (t0, t1)) {
        Ok(fit) => {
            b.note("fit", fit);
            b.check(Assertion::within(
                "decay_rate",
                anchor,
                fit.rate,
                spec.check.expected_rate,
                spec.check.rate_tol,
            ));
        }
        Err(e) => {
            b.note("fit_error", e.to_string());
            b.check(Assertion::within("decay_rate", anchor, f64::NAN, spec.check.expected_rate, spec.check.rate_tol));
        }
    }
    let ratio = series.last().map(|l| l.1).unwrap_or(f64::NAN) / series[0].1;
    b.check(Assertion::at_most("residual_ratio", anchor, ratio, spec.check.residual_ratio));
    if let Some(c) = traj.diagnostics.last().and_then(|d| d.curve.as_ref()) {
        b.note("final_circle", c.circle);
    }
    monitor_counterexamples(&mut b, &[&traj], spec.sim.eps_prime)?;
    Ok(b.finish(spec.kind, Some(traj)))
}

fn run_smoothing(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let mut b = Builder::default();
    let traj = simulate(&spec.initial_curve()?, &spec.sim)?;
    b.stopped(&traj);
    let anchor = "AC9 smoothing";
    let mid = 0.5 * traj.final_time();
    let ref_idx = traj
        .times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - mid).abs().total_cmp(&(b.1 - mid).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    for k in [1u32, 2] {
        let vals: Vec<f64> = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(t, x)| t.powi(k as i32) * derivative_k(x, k + 1).sup_norm())
            .collect();
        let max = vals.iter().skip(1).copied().fold(0.0, f64::max);
        let reference = vals[ref_idx];
        b.note(&format!("weighted_derivative_{k}_reference"), reference);
        b.check(Assertion::at_most(
            &format!("max_t^{k}_derivative_{}", k + 1),
            anchor,
            max,
            10.0 * reference,
        ));
    }
    monitor_counterexamples(&mut b, &[&traj], spec.sim.eps_prime)?;
    Ok(b.finish(spec.kind, Some(traj)))
}

fn run_stability(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let mut b = Builder::default();
    let anchor = "AC10 stability";
    let base = spec.initial_curve()?;
    let u = PeriodicField::from_fn_vector(spec.sim.n, |s| {
        [(3.0 * s).cos() + 0.5 * (2.0 * s).sin(), (4.0 * s).sin()]
    })?;
    let u = u.scaled(1.0 / besov_b1(&u));
    let reference = simulate(&base, &spec.sim)?;
    b.stopped(&reference);
    let mut ratios = Vec::new();
    let mut trajs = Vec::new();
    for &delta in &spec.check.deltas {
        let other = simulate(&MaterialCurve::new(base.field().axpy(delta, &u))?, &spec.sim)?;
        b.stopped(&other);
        let sup = reference
            .states
            .iter()
            .zip(&other.states)
            .map(|(x, y)| (x - y).sup_norm())
            .fold(0.0, f64::max);
        b.check(Assertion::at_most(
            &format!("sup_difference_delta_{delta:e}"),
            anchor,
            sup,
            spec.check.stability_factor * delta,
        ));
        ratios.push(sup / delta);
        trajs.push(other);
    }
    if ratios.len() > 1 {
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        b.check(Assertion::at_most("ratio_spread", anchor, hi / lo, 2.0));
    }
    b.note("ratios", &ratios);
    let mut all: Vec<&Trajectory> = vec![&reference];
    all.extend(trajs.iter());
    monitor_counterexamples(&mut b, &all, spec.sim.eps_prime)?;
    Ok(b.finish(spec.kind, Some(reference)))
}

fn toy_final(f0: &PeriodicField, sigma: f64, dt: f64, t: f64, sim: &SimConfig, integrator: Integrator) -> Result<(PeriodicField, StopReason)> {
    let mut cfg = sim.clone();
    cfg.n = f0.grid_size();
    cfg.m = 2 * cfg.n;
    cfg.dt = dt;
    cfg.t_final = t;
    cfg.integrator = integrator;
    cfg.record_every = usize::MAX;
    let traj = simulate_toy(f0, sigma, &cfg)?;
    Ok((traj.last().clone(), traj.stop))
}

fn run_toy(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let mut b = Builder::default();
    let anchor = "AC8 toy scaling and convergence";
    let sim = &spec.sim;
    let (n, dt, t_end) = (sim.n, sim.dt, sim.t_final);
    let sigma = spec.check.sigma_scaling;
    let mut stops = Vec::new();
    for &lam in &spec.check.lambdas {
        let l = lam as f64;
        let g0 = spec.initial.render_scalar(n, l)?;
        let (g, s1) = toy_final(&g0, sigma, dt, t_end, sim, sim.integrator)?;
        let f0 = spec.initial.render_scalar(n / lam, 1.0)?;
        let (f, s2) = toy_final(&f0, sigma, l * dt, l * t_end, sim, sim.integrator)?;
        let coarse = n / lam;
        let err = (0..n)
            .map(|j| (g.component(0)[j] - f.component(0)[j % coarse]).abs())
            .fold(0.0, f64::max);
        let (g_fine, s3) = toy_final(&spec.initial.render_scalar(2 * n, l)?, sigma, dt / 2.0, t_end, sim, sim.integrator)?;
        let disc = (0..n)
            .map(|j| (g.component(0)[j] - g_fine.component(0)[2 * j]).abs())
            .fold(0.0, f64::max);
        b.note(&format!("discretization_estimate_lambda_{lam}"), disc);
        b.check(Assertion::at_most(&format!("scaling_error_lambda_{lam}"), anchor, err, 5.0 * disc));
        stops.extend([s1, s2, s3]);
    }

    let f0 = spec.initial.render_scalar(n, 1.0)?;
    let dts = &spec.check.convergence_dts;
    for (integ, order, tol) in [(Integrator::Etd1, 1.0, 0.1), (Integrator::EtdRk2, 2.0, 0.15)] {
        let mut u = Vec::new();
        for &h in &dts[..3] {
            let (v, s) = toy_final(&f0, spec.check.sigma_convergence, h, t_end, sim, integ)?;
            stops.push(s);
            u.push(v);
        }
        let e1 = (&u[0] - &u[1]).sup_norm();
        let e2 = (&u[1] - &u[2]).sup_norm();
        let measured = (e1 / e2).ln() / (dts[0] / dts[1]).ln();
        let name = match integ {
            Integrator::Etd1 => "etd1_order",
            _ => "etdrk2_order",
        };
        b.check(Assertion::within(name, anchor, measured, order, tol));
    }
    if let Some(s) = stops.into_iter().find(|s| *s != StopReason::Completed) {
        b.stop = Some(s);
    } else {
        b.stop = Some(StopReason::Completed);
    }
    Ok(b.finish(spec.kind, None))
}

fn run_norms(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let mut b = Builder::default();
    let x0 = spec.initial_curve()?;
    let traj = simulate(&x0, &spec.sim)?;
    b.stopped(&traj);
    let eps = spec.sim.eps_prime;
    let xp: Vec<PeriodicField> = traj.states.iter().map(derivative).collect();

    b.note("kappa_initial", kappa(x0.field()));
    b.note("kappa0_sequence", kappa0_sequence(x0.field(), &spec.check.mollifier_widths)?);
    b.note("besov_b0_initial_derivative", besov_b0(&xp[0]));
    b.note("besov_b1_initial", besov_b1(x0.field()));
    b.note("q", q_quantity(&traj.times, &traj.states, eps)?);
    b.note("sup_t_holder_3_2", mixed_norm(&traj.times, &traj.states, f64::INFINITY, SpatialNorm::Holder { gamma: 0.5, k: 1 })?);
    b.note("l2_t_sup_derivative", mixed_norm(&traj.times, &xp, 2.0, SpatialNorm::Sup)?);
    let y: Vec<PeriodicField> = traj
        .states
        .iter()
        .map(|x| peskin_core::equilibrium::project_pi(&derivative(x)))
        .collect::<std::result::Result<_, _>>()?;
    let g = g_norm_sampled(&traj.times, &y, &spec.sim.grids.mu_b(eps), eps)?;
    b.note("g_norm_shape_derivative", &g);
    monitor_counterexamples(&mut b, &[&traj], eps)?;
    b.note("monitor", kappa_monitor(&traj.times, &traj.states, eps)?);
    Ok(b.finish(spec.kind, Some(traj)))
}
