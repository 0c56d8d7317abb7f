//! Finite-difference contour quantities and the interface velocity.
//!
//! The velocity of the filament is evaluated in two independent ways:
//! [`direct_velocity`] integrates the Stokeslet form of the contour equation,
//! while [`nonlinear_n`] evaluates the remainder `N(X)` of the semilinear form
//! `∂ₜX + ¼ΛX = N(X)`. Both are integrals over the difference variable `α`
//! on the torus with integrands that extend smoothly across `α = 0`, so the
//! midpoint-shifted trapezoid rule of [`AlphaQuadrature`] is spectrally
//! accurate.
//!
//! Integrals over the line against `dα/α` are mapped to the torus through
//! `∫_R f dα/α = ∫_T f dα/α̃`, with `1/α̃ = ½cot(α/2)`. Because `H` is
//! homogeneous of degree `-1`, `H(Δ̃_αX)/α̃ = H(δ_αX)`, which is the form
//! used in the quadrature loops.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{derivative, nodes, torus_distance, PeriodicField};

/// Curves whose chord/arc ratio drops below this are treated as degenerate.
pub const MIN_CHORD_RATIO: f64 = 1e-6;

/// A closed curve `X(s)` sampled on the periodic grid.
#[derive(Debug, Clone)]
pub struct MaterialCurve {
    x: PeriodicField,
    xp: OnceLock<PeriodicField>,
}

impl PartialEq for MaterialCurve {
    fn eq(&self, other: &Self) -> bool {
        self.x == other.x
    }
}

impl MaterialCurve {
    pub fn new(x: PeriodicField) -> Result<Self> {
        if !x.is_vector() {
            return Err(Error::InvalidArgument("a curve needs a 2-vector field".into()));
        }
        Ok(Self {
            x,
            xp: OnceLock::new(),
        })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> [f64; 2]) -> Result<Self> {
        Self::new(PeriodicField::from_fn_vector(n, f)?)
    }

    #[inline]
    pub fn field(&self) -> &PeriodicField {
        &self.x
    }

    pub fn into_field(self) -> PeriodicField {
        self.x
    }

    #[inline]
    pub fn grid_size(&self) -> usize {
        self.x.grid_size()
    }

    /// Spectral derivative `X'`, computed once.
    pub fn derivative(&self) -> &PeriodicField {
        self.xp.get_or_init(|| derivative(&self.x))
    }

    /// Minimum over node pairs of `|X(s₁) − X(s₂)| / |s₁ − s₂|_T`, with the
    /// minimising pair. The reciprocal of the ratio is the discrete
    /// well-stretched constant.
    pub fn chord_arc_min(&self) -> (f64, f64, f64) {
        let n = self.grid_size();
        let s = nodes(n);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n {
            let p = self.x.point(i);
            for j in (i + 1)..n {
                let q = self.x.point(j);
                let r = (p[0] - q[0]).hypot(p[1] - q[1]) / torus_distance(s[i], s[j]);
                if r < best.0 {
                    best = (r, s[i], s[j]);
                }
            }
        }
        best
    }

    /// Fails with [`Error::Degenerate`] when the curve is too close to
    /// self-intersection.
    pub fn check_well_stretched(&self) -> Result<()> {
        let (ratio, s1, s2) = self.chord_arc_min();
        if !(ratio >= MIN_CHORD_RATIO) {
            return Err(Error::Degenerate { s1, s2, ratio });
        }
        Ok(())
    }
}

fn is_zero_mod_2pi(alpha: f64) -> bool {
    let r = alpha.rem_euclid(2.0 * PI);
    r.min(2.0 * PI - r) < 1e-14
}

/// `α̃ = 2 tan(α/2)`, the torus replacement of `α`.
pub fn alpha_tilde(alpha: f64) -> f64 {
    2.0 * (alpha / 2.0).tan()
}

/// `δ_αX(s) = X(s) − X(s − α)`.
pub fn delta_alpha(curve: &MaterialCurve, alpha: f64) -> PeriodicField {
    curve.field() - &curve.field().shifted(alpha)
}

/// `Δ̃_αX = δ_αX / α̃`. At `α = π` the factor `1/α̃` vanishes and so does the
/// result.
pub fn slope_tilde(curve: &MaterialCurve, alpha: f64) -> Result<PeriodicField> {
    if is_zero_mod_2pi(alpha) {
        return Err(Error::InvalidArgument("slope undefined at alpha = 0".into()));
    }
    let inv = 0.5 / (alpha / 2.0).tan();
    Ok(delta_alpha(curve, alpha).scaled(inv))
}

/// `E^αX(s) = X'(s − α) − Δ̃_αX(s)`.
pub fn e_alpha(curve: &MaterialCurve, alpha: f64) -> Result<PeriodicField> {
    let st = slope_tilde(curve, alpha)?;
    Ok(&curve.derivative().shifted(alpha) - &st)
}

/// Indices `(i₁, i₂, i₃)` of the cubic monomial in `H(x) = x_{i₁}x_{i₂}x_{i₃}/|x|⁴`.
/// Indices are 1-based, as in the usual component labelling `x = (x₁, x₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndexTriple {
    idx: [u8; 3],
}

impl IndexTriple {
    pub fn new(i1: u8, i2: u8, i3: u8) -> Result<Self> {
        if [i1, i2, i3].iter().any(|i| !(1..=2).contains(i)) {
            return Err(Error::InvalidArgument(format!(
                "index triple ({i1},{i2},{i3}) out of range"
            )));
        }
        Ok(Self { idx: [i1, i2, i3] })
    }

    fn zero_based(self) -> [usize; 3] {
        self.idx.map(|i| i as usize - 1)
    }

    pub fn indices(self) -> [u8; 3] {
        self.idx
    }
}

fn check_nonzero(x: [f64; 2]) -> Result<f64> {
    let r2 = x[0] * x[0] + x[1] * x[1];
    if !(r2 > 0.0) {
        return Err(Error::Singular("H is singular at the origin".into()));
    }
    Ok(r2)
}

/// `H(x) = x_{i₁}x_{i₂}x_{i₃} / |x|⁴`.
pub fn kernel_h(x: [f64; 2], triple: IndexTriple) -> Result<f64> {
    let r2 = check_nonzero(x)?;
    let [a, b, c] = triple.zero_based();
    Ok(x[a] * x[b] * x[c] / (r2 * r2))
}

/// Analytic gradient of [`kernel_h`].
pub fn grad_h(x: [f64; 2], triple: IndexTriple) -> Result<[f64; 2]> {
    let r2 = check_nonzero(x)?;
    let [a, b, c] = triple.zero_based();
    let cubic = x[a] * x[b] * x[c];
    let mut g = [0.0; 2];
    for (k, gk) in g.iter_mut().enumerate() {
        let kd = |i: usize| if i == k { 1.0 } else { 0.0 };
        let num = kd(a) * x[b] * x[c] + x[a] * kd(b) * x[c] + x[a] * x[b] * kd(c);
        *gk = num / (r2 * r2) - 4.0 * cubic * x[k] / (r2 * r2 * r2);
    }
    Ok(g)
}

/// Second-order Taylor remainder `H(A₁) − H(A₂) − (A₁ − A₂)·∇H(A₂)`.
pub fn d_h(a1: [f64; 2], a2: [f64; 2], triple: IndexTriple) -> Result<f64> {
    let g = grad_h(a2, triple)?;
    Ok(kernel_h(a1, triple)? - kernel_h(a2, triple)?
        - ((a1[0] - a2[0]) * g[0] + (a1[1] - a2[1]) * g[1]))
}

/// One term `coeff · H_{i₁i₂i₃}(Δ̃_αX) · E^αX_i · δ_αX'_j` of the expanded
/// nonlinearity, contributing to component `output`. Component indices are
/// 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NTerm {
    pub coeff: f64,
    pub triple: IndexTriple,
    pub e_index: usize,
    pub dprime_index: usize,
    pub output: usize,
}

/// Expansion of the three vector integrals of `N(X)` into cubic `H` kernels.
///
/// With `d = Δ̃_αX`, the scalar factors are rewritten over `|d|⁴` using
/// `d_a/|d|² = Σ_b d_a d_b d_b/|d|⁴`.
pub fn expansion_terms() -> Vec<NTerm> {
    let c4 = 1.0 / (4.0 * PI);
    let c2 = 1.0 / (2.0 * PI);
    let t = |a: usize, b: usize, c: usize| {
        IndexTriple::new(a as u8 + 1, b as u8 + 1, c as u8 + 1).expect("in range")
    };
    let mut terms = Vec::with_capacity(32);
    for out in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                // (d·E)/|d|² δX'
                terms.push(NTerm { coeff: c4, triple: t(a, b, b), e_index: a, dprime_index: out, output: out });
                // -E (d·δX')/|d|²
                terms.push(NTerm { coeff: -c4, triple: t(a, b, b), e_index: out, dprime_index: a, output: out });
                // -d (E·δX')/|d|²
                terms.push(NTerm { coeff: -c4, triple: t(out, b, b), e_index: a, dprime_index: a, output: out });
                // 2 d (d·δX')(d·E)/|d|⁴
                terms.push(NTerm { coeff: c2, triple: t(out, a, b), e_index: b, dprime_index: a, output: out });
            }
        }
    }
    terms
}

/// Midpoint-shifted trapezoid rule on `(−π, π)`: `α_k = −π + (2k+1)π/M`.
/// No node sits on the removable singularity at `α = 0` when `M` is even.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlphaQuadrature {
    m: usize,
}

impl AlphaQuadrature {
    pub fn new(m: usize) -> Result<Self> {
        if m < 4 || m % 2 != 0 {
            return Err(Error::Config(format!(
                "alpha quadrature size must be even and at least 4, got {m}"
            )));
        }
        Ok(Self { m })
    }

    /// Default rule for an `n`-point curve: `M = 2N`.
    pub fn for_grid(n: usize) -> Self {
        Self { m: 2 * n }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        -PI + (2 * k + 1) as f64 * PI / self.m as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|k| self.node(k)).collect()
    }

    #[inline]
    pub fn weight(&self) -> f64 {
        2.0 * PI / self.m as f64
    }
}

/// Samples of `X(s_j − α_k)` and `X'(s_j − α_k)` for all targets and nodes.
enum ShiftTable {
    /// All points fall on a refined grid of `2M` nodes.
    Fine {
        x: [Vec<f64>; 2],
        xp: [Vec<f64>; 2],
        stride: usize,
        m: usize,
    },
    /// One spectrally shifted copy per quadrature node.
    PerNode {
        x: Vec<[Vec<f64>; 2]>,
        xp: Vec<[Vec<f64>; 2]>,
    },
}

fn split(f: &PeriodicField) -> [Vec<f64>; 2] {
    [f.component(0).to_vec(), f.component(1).to_vec()]
}

impl ShiftTable {
    fn build(curve: &MaterialCurve, quad: &AlphaQuadrature) -> Result<Self> {
        let n = curve.grid_size();
        let m = quad.size();
        if (2 * m) % n == 0 {
            let fine = 2 * m;
            Ok(ShiftTable::Fine {
                x: split(&curve.field().upsample(fine)?),
                xp: split(&curve.derivative().upsample(fine)?),
                stride: fine / n,
                m,
            })
        } else {
            let (x, xp) = (0..m)
                .map(|k| {
                    let a = quad.node(k);
                    (split(&curve.field().shifted(a)), split(&curve.derivative().shifted(a)))
                })
                .unzip();
            Ok(ShiftTable::PerNode { x, xp })
        }
    }

    /// `(X(s_j − α_k), X'(s_j − α_k))`
    #[inline]
    fn get(&self, j: usize, k: usize) -> ([f64; 2], [f64; 2]) {
        match self {
            ShiftTable::Fine { x, xp, stride, m } => {
                // s_j − α_k = (π/M)(j·stride + M − 2k − 1)
                let len = 2 * m;
                let idx = (j * stride + len + m - 2 * k - 1) % len;
                ([x[0][idx], x[1][idx]], [xp[0][idx], xp[1][idx]])
            }
            ShiftTable::PerNode { x, xp } => {
                ([x[k][0][j], x[k][1][j]], [xp[k][0][j], xp[k][1][j]])
            }
        }
    }
}

/// Quantities available to an `α`-integrand at one target node.
#[derive(Debug, Clone, Copy)]
pub struct AlphaSample {
    pub alpha: f64,
    /// `½cot(α/2) = 1/α̃`
    pub cot_half: f64,
    /// `δ_αX(s)`
    pub d: [f64; 2],
    /// `δ_αX'(s)`
    pub dp: [f64; 2],
    /// `X'(s − α)`
    pub xp_shift: [f64; 2],
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Trapezoid sum of `f` over the quadrature nodes at every target node,
/// with the degeneracy guard applied to each chord.
pub fn alpha_sum<const K: usize>(
    curve: &MaterialCurve,
    quad: &AlphaQuadrature,
    f: impl Fn(&AlphaSample) -> [f64; K] + Sync,
) -> Result<Vec<[f64; K]>> {
    curve.check_well_stretched()?;
    let n = curve.grid_size();
    let table = ShiftTable::build(curve, quad)?;
    let x = curve.field();
    let xp = curve.derivative();
    let s = nodes(n);
    let alphas = quad.nodes();
    let cots: Vec<f64> = alphas.iter().map(|a| 0.5 / (a / 2.0).tan()).collect();
    let w = quad.weight();

    let per_node: Vec<([f64; K], f64, usize)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let xj = x.point(j);
            let xpj = xp.point(j);
            let mut acc = [0.0; K];
            let mut worst = (f64::INFINITY, 0usize);
            for k in 0..alphas.len() {
                let (xs, xps) = table.get(j, k);
                let d = [xj[0] - xs[0], xj[1] - xs[1]];
                let ratio = dot(d, d).sqrt() / alphas[k].abs();
                if ratio < worst.0 {
                    worst = (ratio, k);
                }
                let sample = AlphaSample {
                    alpha: alphas[k],
                    cot_half: cots[k],
                    d,
                    dp: [xpj[0] - xps[0], xpj[1] - xps[1]],
                    xp_shift: xps,
                };
                let v = f(&sample);
                for (a, b) in acc.iter_mut().zip(v) {
                    *a += b;
                }
            }
            acc.iter_mut().for_each(|a| *a *= w);
            (acc, worst.0, worst.1)
        })
        .collect();

    let (j, worst) = per_node
        .iter()
        .enumerate()
        .map(|(j, p)| (j, p.1))
        .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
    if !(worst >= MIN_CHORD_RATIO) {
        let k = per_node[j].2;
        return Err(Error::Degenerate {
            s1: s[j],
            s2: (s[j] - alphas[k]).rem_euclid(2.0 * PI),
            ratio: worst,
        });
    }
    Ok(per_node.into_iter().map(|p| p.0).collect())
}

fn to_field(n: usize, vals: Vec<[f64; 2]>) -> PeriodicField {
    let (x, y) = vals.into_iter().map(|v| (v[0], v[1])).unzip();
    let _ = n;
    PeriodicField::vector(x, y).expect("grid already validated")
}

/// Vector integrand of `N(X)` on the torus, with `E = X'(s−α) − ½cot(α/2) δ_αX`.
#[inline]
fn n_integrand(p: &AlphaSample) -> [f64; 2] {
    let d = p.d;
    let e = [p.xp_shift[0] - p.cot_half * d[0], p.xp_shift[1] - p.cot_half * d[1]];
    stokes_terms(d, e, p.dp)
}

/// `(1/4π)(d·v)/|d|² δ − (1/4π)(v(d·δ) + d(v·δ))/|d|² + (1/2π)(d·v)(d·δ) d/|d|⁴`
#[inline]
fn stokes_terms(d: [f64; 2], v: [f64; 2], dp: [f64; 2]) -> [f64; 2] {
    let r2 = dot(d, d);
    let dv = dot(d, v);
    let ddp = dot(d, dp);
    let vdp = dot(v, dp);
    let c4 = 1.0 / (4.0 * PI);
    let c2 = 1.0 / (2.0 * PI);
    let mut out = [0.0; 2];
    for i in 0..2 {
        out[i] = c4 * dv / r2 * dp[i] - c4 * (v[i] * ddp + d[i] * vdp) / r2
            + c2 * dv * ddp * d[i] / (r2 * r2);
    }
    out
}

/// `N(X)` from the semilinear form `∂ₜX + ¼ΛX = N(X)`.
pub fn nonlinear_n(curve: &MaterialCurve, quad: &AlphaQuadrature) -> Result<PeriodicField> {
    let vals = alpha_sum(curve, quad, n_integrand)?;
    Ok(to_field(curve.grid_size(), vals))
}

/// `N(X)` evaluated term by term through [`expansion_terms`] and
/// [`kernel_h`]. Slower than [`nonlinear_n`]; kept as a transcription check.
pub fn nonlinear_n_expanded(curve: &MaterialCurve, quad: &AlphaQuadrature) -> Result<PeriodicField> {
    let terms = expansion_terms();
    let vals = alpha_sum(curve, quad, |p| {
        let e = [p.xp_shift[0] - p.cot_half * p.d[0], p.xp_shift[1] - p.cot_half * p.d[1]];
        let mut out = [0.0; 2];
        for t in &terms {
            // H(Δ̃_αX)/α̃ = H(δ_αX)
            let h = kernel_h(p.d, t.triple).unwrap_or(0.0);
            out[t.output] += t.coeff * h * e[t.e_index] * p.dp[t.dprime_index];
        }
        out
    })?;
    Ok(to_field(curve.grid_size(), vals))
}

/// Right-hand side of the contour equation, `−∫_T ∂_α𝐆(δ_αX) δ_αX' dα`,
/// without the semilinear split.
pub fn direct_velocity(curve: &MaterialCurve, quad: &AlphaQuadrature) -> Result<PeriodicField> {
    let vals = alpha_sum(curve, quad, |p| stokes_terms(p.d, p.xp_shift, p.dp))?;
    Ok(to_field(curve.grid_size(), vals))
}

/// Sup over targets of the largest entry of the matrix integral
/// `∫_T M(α) dα`, where `N(X) = ∫_T M(α) δ_αX' dα`. The integral vanishes
/// identically, so the return value is pure quadrature error.
pub fn check_integral0(curve: &MaterialCurve, quad: &AlphaQuadrature) -> Result<f64> {
    let vals = alpha_sum(curve, quad, |p| {
        let d = p.d;
        let e = [p.xp_shift[0] - p.cot_half * d[0], p.xp_shift[1] - p.cot_half * d[1]];
        // column c of M is the image of the unit vector e_c
        let c0 = stokes_terms(d, e, [1.0, 0.0]);
        let c1 = stokes_terms(d, e, [0.0, 1.0]);
        [c0[0], c0[1], c1[0], c1[1]]
    })?;
    Ok(vals
        .iter()
        .flat_map(|v| v.iter())
        .fold(0.0, |m, v| m.max(v.abs())))
}
