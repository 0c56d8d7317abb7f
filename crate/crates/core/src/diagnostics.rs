//! Measured quantities on curves and trajectories: the well-stretched
//! constant κ, the chord-slope drift Q, Hölder and Besov norms, sampled
//! space-time norms, decay-rate fits and the κ-propagation monitor.
//!
//! All norms over continua are sampled, so every value here is a lower bound
//! of the quantity it names. Sampling metadata travels with [`NormReport`].

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{derivative_k, mollify, torus_distance, MultiplierOp, PeriodicField};

/// Default ε′ used by the ε′-dependent diagnostics.
pub const DEFAULT_EPS_PRIME: f64 = 0.01;
/// Upper edge `θ_eff` of the sampled `(μ, b)` region.
pub const THETA_EFF: f64 = 0.9;

fn node(j: usize, n: usize) -> f64 {
    2.0 * PI * j as f64 / n as f64
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn pointwise_diff(f: &PeriodicField, i: usize, j: usize) -> f64 {
    f.components()
        .iter()
        .map(|c| (c[i] - c[j]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `κ = sup |s₁−s₂|_T / |X(s₁)−X(s₂)|` over node pairs. Coincident nodes
/// give `f64::INFINITY`.
pub fn kappa(curve: &PeriodicField) -> f64 {
    let n = curve.grid_size();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = curve.point(i);
            let mut best = 0.0_f64;
            for j in i + 1..n {
                let d = dist(pi, curve.point(j));
                let arc = torus_distance(node(i, n), node(j, n));
                let r = if d == 0.0 { f64::INFINITY } else { arc / d };
                best = best.max(r);
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Running evaluation of `Q_h(t)` against a fixed initial state.
///
/// Uses the on-grid increments `α = 2πk/N`, `k = 1..=N/2`; negative `α`
/// are covered by the sweep over `s`.
pub struct QTracker {
    n: usize,
    eps_prime: f64,
    inv0: Vec<Vec<f64>>,
    running: f64,
}

fn inverse_slopes(h: &PeriodicField) -> Result<Vec<Vec<f64>>> {
    let n = h.grid_size();
    (1..=n / 2)
        .map(|k| {
            let alpha = node(k, n);
            (0..n)
                .map(|j| {
                    let d = dist(h.point(j), h.point((j + n - k) % n)) / alpha;
                    if d == 0.0 {
                        Err(Error::Degenerate {
                            s1: node(j, n),
                            s2: node((j + n - k) % n, n),
                            ratio: 0.0,
                        })
                    } else {
                        Ok(1.0 / d)
                    }
                })
                .collect()
        })
        .collect()
}

impl QTracker {
    pub fn new(h0: &PeriodicField, eps_prime: f64) -> Result<Self> {
        check_eps_prime(eps_prime)?;
        Ok(Self {
            n: h0.grid_size(),
            eps_prime,
            inv0: inverse_slopes(h0)?,
            running: 0.0,
        })
    }

    /// Sup over `(α, s)` at a single time `t > 0`.
    pub fn instant(&self, h: &PeriodicField, t: f64) -> Result<f64> {
        if h.grid_size() != self.n {
            return Err(Error::InvalidArgument("grid size changed".into()));
        }
        if t <= 0.0 {
            return Ok(0.0);
        }
        let inv = inverse_slopes(h)?;
        let mut best = 0.0_f64;
        for (k, (row, row0)) in inv.iter().zip(&self.inv0).enumerate() {
            let w = (node(k + 1, self.n) / t).powf(self.eps_prime);
            for (a, b) in row.iter().zip(row0) {
                best = best.max(w * (a - b).abs());
            }
        }
        Ok(best)
    }

    /// Update with the state at time `t` and return the running sup.
    pub fn update(&mut self, h: &PeriodicField, t: f64) -> Result<f64> {
        self.running = self.running.max(self.instant(h, t)?);
        Ok(self.running)
    }

    pub fn value(&self) -> f64 {
        self.running
    }

    /// Restores a running value, e.g. from a checkpoint.
    pub fn set_running(&mut self, v: f64) {
        self.running = v;
    }
}

fn check_eps_prime(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 0.1) {
        return Err(Error::Config(format!("eps_prime must lie in (0, 0.1], got {eps}")));
    }
    Ok(())
}

fn check_series(times: &[f64], states: &[PeriodicField]) -> Result<()> {
    if times.is_empty() || times.len() != states.len() {
        return Err(Error::InvalidArgument(
            "trajectory must be nonempty with one state per time".into(),
        ));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("times must be strictly increasing".into()));
    }
    Ok(())
}

/// `Q_h(T)` over all stored times, relative to the first state.
pub fn q_quantity(times: &[f64], states: &[PeriodicField], eps_prime: f64) -> Result<f64> {
    check_series(times, states)?;
    let t0 = times[0];
    let mut tracker = QTracker::new(&states[0], eps_prime)?;
    for (t, h) in times.iter().zip(states).skip(1) {
        tracker.update(h, t - t0)?;
    }
    Ok(tracker.value())
}

/// `sup |h^{(k)}(s) − h^{(k)}(s′)| / |s − s′|_T^γ` over node pairs.
pub fn holder_norm(field: &PeriodicField, gamma: f64, k: u32) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!("Hölder exponent must lie in (0, 1], got {gamma}")));
    }
    let d = derivative_k(field, k);
    let n = d.grid_size();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let arc = torus_distance(node(i, n), node(j, n));
                    pointwise_diff(&d, i, j) / arc.powf(gamma)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

/// Default t-grid: 64 log-spaced points on `[1/N, 10]`.
pub fn default_besov_times(n: usize) -> Vec<f64> {
    log_space(1.0 / n as f64, 10.0, 64)
}

pub fn log_space(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..count)
        .map(|i| (la + (lb - la) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// `sup_t t‖Λ e^{−tΛ/4} h‖_∞` on the default grid.
pub fn besov_b0(field: &PeriodicField) -> f64 {
    besov_b0_on(field, &default_besov_times(field.grid_size()))
}

pub fn besov_b0_on(field: &PeriodicField, times: &[f64]) -> f64 {
    times
        .iter()
        .map(|&t| {
            let op = MultiplierOp::real("tΛe^{-tΛ/4}", move |n| {
                let a = n.unsigned_abs() as f64;
                t * a * (-t * a / 4.0).exp()
            });
            op.apply(field).sup_norm()
        })
        .fold(0.0, f64::max)
}

/// [`besov_b0`] of the spectral derivative.
pub fn besov_b1(field: &PeriodicField) -> f64 {
    besov_b0(&derivative_k(field, 1))
}

/// A sampled norm together with the grids it was sampled on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub name: String,
    pub value: f64,
    /// Sampled estimates are lower bounds of the continuum quantity.
    pub lower_bound: bool,
    pub t_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub mu_b_grid: Vec<[f64; 2]>,
    /// `(μ, b, α)` attaining the sampled sup.
    pub argmax: Option<[f64; 3]>,
}

/// The `(μ, b)` lattice: 8 values of `μ ∈ [0, 2/3]` and for each of them 8
/// values of `b ∈ [2ε′, θ_eff − μ − ε′]`.
pub fn g_lattice(eps_prime: f64, theta_eff: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(64);
    for i in 0..8 {
        let mu = (2.0 / 3.0) * i as f64 / 7.0;
        let (lo, hi) = (2.0 * eps_prime, theta_eff - mu - eps_prime);
        if hi < lo {
            continue;
        }
        for j in 0..8 {
            out.push([mu, lo + (hi - lo) * j as f64 / 7.0]);
        }
    }
    out
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Sampled `sup_{μ,b,α} ‖t^μ δ_α Λ^{b−ε′} h‖_{L^{1/b}_T L^∞} / |α|^{μ+ε′}`.
///
/// Time is measured from the first stored time; `α` runs over the on-grid
/// increments `2πk/N`, `k = 1..=N/2`.
pub fn g_norm_sampled(
    times: &[f64],
    states: &[PeriodicField],
    mu_b: &[[f64; 2]],
    eps_prime: f64,
) -> Result<NormReport> {
    check_series(times, states)?;
    check_eps_prime(eps_prime)?;
    if mu_b.is_empty() {
        return Err(Error::InvalidArgument("empty (mu, b) grid".into()));
    }
    if let Some(bad) = mu_b.iter().find(|p| !(p[0] >= 0.0 && p[1] > eps_prime && p[1] <= 1.0)) {
        return Err(Error::InvalidArgument(format!("inadmissible (mu, b) = {bad:?}")));
    }
    let n = states[0].grid_size();
    let t: Vec<f64> = times.iter().map(|x| x - times[0]).collect();
    let shifts: Vec<usize> = (1..=n / 2).collect();
    let alpha_grid: Vec<f64> = shifts.iter().map(|&k| node(k, n)).collect();

    let mut bs: Vec<f64> = mu_b.iter().map(|p| p[1]).collect();
    bs.sort_by(f64::total_cmp);
    bs.dedup();

    // sup_s |δ_α Λ^{b−ε′} h(t, s)| for each b, α, t
    let table: Vec<Vec<Vec<f64>>> = bs
        .par_iter()
        .map(|&b| {
            let op = MultiplierOp::frac_laplacian(b - eps_prime);
            let lifted: Vec<PeriodicField> = states.iter().map(|h| op.apply(h)).collect();
            shifts
                .iter()
                .map(|&k| {
                    lifted
                        .iter()
                        .map(|g| (0..n).map(|j| pointwise_diff(g, j, (j + n - k) % n)).fold(0.0, f64::max))
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut best = (0.0_f64, None);
    for &[mu, b] in mu_b {
        let bi = bs.iter().position(|&x| x == b).expect("b listed");
        for (ai, &alpha) in alpha_grid.iter().enumerate() {
            let series = &table[bi][ai];
            let norm = if t.len() == 1 {
                0.0
            } else {
                let p = 1.0 / b;
                let vals: Vec<f64> = t
                    .iter()
                    .zip(series)
                    .map(|(&tt, &v)| (tt.powf(mu) * v).powf(p))
                    .collect();
                trapezoid(&t, &vals).powf(b)
            };
            let val = norm / alpha.powf(mu + eps_prime);
            if val > best.0 || best.1.is_none() {
                best = (val.max(best.0), Some([mu, b, alpha]));
            }
        }
    }
    Ok(NormReport {
        name: "G_T".into(),
        value: best.0,
        lower_bound: true,
        t_grid: t,
        alpha_grid,
        mu_b_grid: mu_b.to_vec(),
        argmax: best.1,
    })
}

/// Spatial norm applied at each time by [`mixed_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpatialNorm {
    Sup,
    L2,
    Holder { gamma: f64, k: u32 },
}

impl SpatialNorm {
    pub fn eval(&self, h: &PeriodicField) -> Result<f64> {
        match *self {
            SpatialNorm::Sup => Ok(h.sup_norm()),
            SpatialNorm::L2 => Ok(h.inner(h).sqrt()),
            SpatialNorm::Holder { gamma, k } => holder_norm(h, gamma, k),
        }
    }
}

/// `‖h‖_{L^p_T X}` with trapezoidal time quadrature; `p = ∞` takes the max.
pub fn mixed_norm(times: &[f64], states: &[PeriodicField], p: f64, spatial: SpatialNorm) -> Result<f64> {
    check_series(times, states)?;
    let values = states.iter().map(|h| spatial.eval(h)).collect::<Result<Vec<_>>>()?;
    mixed_norm_series(times, &values, p)
}

pub fn mixed_norm_series(times: &[f64], values: &[f64], p: f64) -> Result<f64> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::InvalidArgument("times and values must match".into()));
    }
    if p == f64::INFINITY {
        return Ok(values.iter().copied().fold(0.0, f64::max));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("exponent must be >= 1, got {p}")));
    }
    let pow: Vec<f64> = values.iter().map(|v| v.abs().powf(p)).collect();
    Ok(trapezoid(times, &pow).powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted `r` in `value ≈ C e^{−r t}`.
    pub rate: f64,
    pub log_intercept: f64,
    /// Root-mean-square residual of the log fit.
    pub residual: f64,
    pub points: usize,
}

/// Least-squares fit of `log(value)` against `t` over `window = (t0, t1)`.
pub fn decay_rate_fit(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .copied()
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("fewer than two points in window".into()));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(format!("nonpositive value {v} at t={t}")));
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let lm = pts.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in &pts {
        sxy += (t - tm) * (v.ln() - lm);
        sxx += (t - tm).powi(2);
    }
    let slope = sxy / sxx;
    let icpt = lm - slope * tm;
    let residual = (pts
        .iter()
        .map(|(t, v)| (v.ln() - icpt - slope * t).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(DecayFit {
        rate: -slope,
        log_intercept: icpt,
        residual,
        points: pts.len(),
    })
}

/// Outcome of the κ-propagation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorVerdict {
    /// Both hypotheses hold on a prefix containing at least one positive time.
    pub hypotheses_hold: bool,
    /// `max κ ≤ 2κ(0)` on that prefix; `None` when not applicable.
    pub conclusion_holds: Option<bool>,
    /// The admissible ε used, `0.99 · min(κ₀, 1/κ₀) / 100`.
    pub epsilon: f64,
    /// End of the longest prefix on which the hypotheses hold.
    pub horizon: f64,
    pub kappa0: f64,
    pub kappa_max: f64,
    /// `ε − max Q` on the prefix.
    pub q_margin: f64,
    /// `min (ε t^{−1/2} − ‖X(t)‖_{Ċ^{3/2}})` on the prefix.
    pub holder_margin: f64,
}

/// Checks `Q(t) ≤ ε` and `‖X(t)‖_{Ċ^{3/2}} ≤ ε t^{−1/2}` along the stored
/// times. The conclusion `κ(t) ≤ 2κ(0)` is asserted at every time of the
/// longest prefix where both hold, since the hypotheses on `[0, T]` imply
/// them on every `[0, t]`, `t ≤ T`.
pub fn kappa_monitor(times: &[f64], states: &[PeriodicField], eps_prime: f64) -> Result<MonitorVerdict> {
    check_series(times, states)?;
    let kappa0 = kappa(&states[0]);
    let epsilon = 0.99 * kappa0.min(1.0 / kappa0) / 100.0;
    let mut tracker = QTracker::new(&states[0], eps_prime)?;
    let (mut horizon, mut kappa_max) = (times[0], kappa0);
    let (mut q_margin, mut holder_margin) = (epsilon, f64::INFINITY);
    let mut positive = false;
    for (t, h) in times.iter().zip(states).skip(1) {
        let dt = t - times[0];
        let q = tracker.update(h, dt)?;
        let c = holder_norm(h, 0.5, 1)?;
        let hm = epsilon / dt.sqrt() - c;
        if q > epsilon || hm < 0.0 {
            break;
        }
        positive = true;
        horizon = *t;
        kappa_max = kappa_max.max(kappa(h));
        q_margin = epsilon - q;
        holder_margin = holder_margin.min(hm);
    }
    Ok(MonitorVerdict {
        hypotheses_hold: positive,
        conclusion_holds: positive.then_some(kappa_max <= 2.0 * kappa0),
        epsilon,
        horizon,
        kappa0,
        kappa_max,
        q_margin,
        holder_margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa0Sample {
    pub eta: f64,
    pub kappa: f64,
    pub running_min: f64,
}

/// `κ(mollify(X₀, η))` along a decreasing η-sequence, with its running
/// minimum. This does not certify the liminf.
pub fn kappa0_sequence(x0: &PeriodicField, etas: &[f64]) -> Result<Vec<Kappa0Sample>> {
    let mut min = f64::INFINITY;
    etas.iter()
        .map(|&eta| {
            let k = kappa(&mollify(x0, eta)?);
            min = min.min(k);
            Ok(Kappa0Sample {
                eta,
                kappa: k,
                running_min: min,
            })
        })
        .collect()
}
