//! Periodic grid fields and Fourier multipliers on the torus `[0, 2π)`.
//!
//! Every field lives on the uniform grid `s_j = 2πj/N` with `N` even. The
//! spectrum is stored in FFT order and normalised by `1/N`, so that the
//! coefficient of mode `n` is the usual Fourier coefficient `f̂_n` (for
//! instance `cos(3s)` has `f̂_3 = f̂_{-3} = 1/2`).
//!
//! The unpaired Nyquist mode `N/2` is treated symmetrically: a multiplier
//! `m` acts on it through `(m(N/2) + m(-N/2)) / 2`. For odd symbols such as
//! the Hilbert transform or the derivative this zeroes the mode, which keeps
//! real fields real.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let plan = if inverse {
            planner.plan_fft_inverse(buf.len())
        } else {
            planner.plan_fft_forward(buf.len())
        };
        plan.process(buf);
    });
}

/// Signed Fourier mode held at FFT index `k` of an `n`-point transform.
/// The Nyquist index maps to `+n/2`.
#[inline]
pub fn mode_of_index(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// FFT index of mode `m`, if it is representable on an `n`-point grid.
#[inline]
pub fn index_of_mode(m: i64, n: usize) -> Option<usize> {
    let half = (n / 2) as i64;
    if m.abs() > half {
        None
    } else if m >= 0 {
        Some(m as usize)
    } else {
        Some((m + n as i64) as usize)
    }
}

/// Grid nodes `s_j = 2πj/N`.
pub fn nodes(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

/// Distance on the torus `R / 2πZ`.
#[inline]
pub fn torus_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

pub(crate) fn check_grid(n: usize) -> Result<()> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::Config(format!(
            "grid size must be even and at least 4, got {n}"
        )));
    }
    Ok(())
}

/// Samples of a scalar or 2-vector function on the uniform periodic grid.
pub struct PeriodicField {
    n: usize,
    comps: Vec<Vec<f64>>,
    spectrum: OnceLock<Vec<Vec<Complex64>>>,
}

impl Clone for PeriodicField {
    fn clone(&self) -> Self {
        let spectrum = OnceLock::new();
        if let Some(s) = self.spectrum.get() {
            let _ = spectrum.set(s.clone());
        }
        Self {
            n: self.n,
            comps: self.comps.clone(),
            spectrum,
        }
    }
}

impl fmt::Debug for PeriodicField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicField")
            .field("n", &self.n)
            .field("dim", &self.comps.len())
            .finish()
    }
}

impl PartialEq for PeriodicField {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.comps == other.comps
    }
}

impl PeriodicField {
    fn from_components(comps: Vec<Vec<f64>>) -> Result<Self> {
        let n = comps[0].len();
        check_grid(n)?;
        if comps.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument(
                "components have different lengths".into(),
            ));
        }
        Ok(Self {
            n,
            comps,
            spectrum: OnceLock::new(),
        })
    }

    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        Self::from_components(vec![values])
    }

    pub fn vector(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::from_components(vec![x, y])
    }

    pub fn zeros(n: usize, dim: usize) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::InvalidArgument(format!(
                "field dimension must be 1 or 2, got {dim}"
            )));
        }
        Self::from_components(vec![vec![0.0; n]; dim])
    }

    pub fn from_fn_scalar(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::scalar(nodes(n).into_iter().map(f).collect())
    }

    pub fn from_fn_vector(n: usize, f: impl Fn(f64) -> [f64; 2]) -> Result<Self> {
        let (x, y) = nodes(n).into_iter().map(|s| {
            let v = f(s);
            (v[0], v[1])
        }).unzip();
        Self::vector(x, y)
    }

    /// Builds a field from FFT-ordered, `1/N`-normalised coefficients. The
    /// imaginary part of the synthesised values is discarded.
    pub fn from_spectrum(spec: Vec<Vec<Complex64>>) -> Result<Self> {
        let n = spec[0].len();
        check_grid(n)?;
        let comps = spec.iter().map(|c| synthesize(c)).collect();
        let mut field = Self::from_components(comps)?;
        // the cached spectrum must describe the real values, so it is
        // recomputed lazily rather than trusting the input
        field.spectrum = OnceLock::new();
        Ok(field)
    }

    #[inline]
    pub fn grid_size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn is_vector(&self) -> bool {
        self.comps.len() == 2
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    /// Mutable access to one component; drops the cached spectrum.
    pub fn values_mut(&mut self, c: usize) -> &mut [f64] {
        self.spectrum = OnceLock::new();
        &mut self.comps[c]
    }

    pub fn has_cached_spectrum(&self) -> bool {
        self.spectrum.get().is_some()
    }

    /// Value at node `j` as a 2-vector (scalar fields fill the first slot).
    #[inline]
    pub fn point(&self, j: usize) -> [f64; 2] {
        if self.comps.len() == 2 {
            [self.comps[0][j], self.comps[1][j]]
        } else {
            [self.comps[0][j], 0.0]
        }
    }

    /// FFT-ordered, `1/N`-normalised coefficients of every component.
    pub fn spectrum(&self) -> &[Vec<Complex64>] {
        self.spectrum
            .get_or_init(|| self.comps.iter().map(|c| analyze(c)).collect())
    }

    /// Coefficient of mode `m` in component `c`; zero if not representable.
    pub fn coefficient(&self, c: usize, m: i64) -> Complex64 {
        match index_of_mode(m, self.n) {
            Some(k) => self.spectrum()[c][k],
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn map_components(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        Self {
            n: self.n,
            comps: self.comps.iter().map(|c| f(c)).collect(),
            spectrum: OnceLock::new(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.n, other.n, "grid size mismatch");
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        Self {
            n: self.n,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
                .collect(),
            spectrum: OnceLock::new(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map_components(|c| c.iter().map(|v| a * v).collect())
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        self.zip_with(other, |x, y| x + a * y)
    }

    /// Adds a constant vector (or scalar, using `c[0]`).
    pub fn translated(&self, c: [f64; 2]) -> Self {
        let mut out = self.clone();
        out.spectrum = OnceLock::new();
        for (k, comp) in out.comps.iter_mut().enumerate() {
            comp.iter_mut().for_each(|v| *v += c[k]);
        }
        out
    }

    /// Applies a constant 2×2 matrix pointwise.
    pub fn mat_apply(&self, q: [[f64; 2]; 2]) -> Self {
        assert!(self.is_vector());
        let (x, y): (Vec<f64>, Vec<f64>) = (0..self.n)
            .map(|j| {
                let p = self.point(j);
                (
                    q[0][0] * p[0] + q[0][1] * p[1],
                    q[1][0] * p[0] + q[1][1] * p[1],
                )
            })
            .unzip();
        Self::vector(x, y).expect("grid already validated")
    }

    /// Largest pointwise Euclidean magnitude.
    pub fn sup_norm(&self) -> f64 {
        (0..self.n)
            .map(|j| self.comps.iter().map(|c| c[j] * c[j]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `(1/N) Σ_j |v_j|²`, the discrete mean square of the values.
    pub fn mean_square(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .map(|v| v * v)
            .sum::<f64>()
            / self.n as f64
    }

    /// `Σ_n |f̂_n|²`, equal to [`mean_square`](Self::mean_square) by Parseval.
    pub fn spectral_mean_square(&self) -> f64 {
        self.spectrum()
            .iter()
            .flat_map(|c| c.iter())
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// Discrete `L²(T)` inner product `∫ U·W ds`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        let h = 2.0 * PI / self.n as f64;
        self.comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum::<f64>()
            * h
    }

    pub fn mean(&self) -> Vec<f64> {
        self.comps
            .iter()
            .map(|c| c.iter().sum::<f64>() / self.n as f64)
            .collect()
    }

    /// Trigonometric interpolant evaluated at an arbitrary point.
    pub fn evaluate_at(&self, s: f64) -> Vec<f64> {
        let half = self.n / 2;
        self.spectrum()
            .iter()
            .map(|spec| {
                let mut acc = spec[0].re;
                for (k, &coeff) in spec.iter().enumerate().take(half).skip(1) {
                    let e = Complex64::from_polar(1.0, k as f64 * s);
                    acc += 2.0 * (coeff * e).re;
                }
                acc + spec[half].re * (half as f64 * s).cos()
            })
            .collect()
    }

    /// `g(s) = f(s - alpha)`, computed exactly on the trigonometric interpolant.
    pub fn shifted(&self, alpha: f64) -> Self {
        MultiplierOp::new("shift", move |n| Complex64::from_polar(1.0, -(n as f64) * alpha))
            .apply(self)
    }

    /// Trigonometric interpolation onto a finer grid of `m` points.
    pub fn upsample(&self, m: usize) -> Result<Self> {
        check_grid(m)?;
        if m < self.n {
            return Err(Error::InvalidArgument(format!(
                "cannot upsample from {} to {m} points",
                self.n
            )));
        }
        let half = self.n / 2;
        let spec = self
            .spectrum()
            .iter()
            .map(|c| {
                let mut out = vec![Complex64::new(0.0, 0.0); m];
                for (k, &v) in c.iter().enumerate() {
                    if k == half {
                        if m == self.n {
                            out[half] = v;
                        } else {
                            out[half] += v * 0.5;
                            out[m - half] += v * 0.5;
                        }
                        continue;
                    }
                    let md = mode_of_index(k, self.n);
                    out[index_of_mode(md, m).unwrap()] = v;
                }
                out
            })
            .collect();
        Self::from_spectrum(spec)
    }
}

fn analyze(values: &[f64]) -> Vec<Complex64> {
    let n = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf, false);
    let inv = 1.0 / n as f64;
    buf.iter_mut().for_each(|z| *z *= inv);
    buf
}

fn synthesize(spec: &[Complex64]) -> Vec<f64> {
    let mut buf = spec.to_vec();
    fft_in_place(&mut buf, true);
    buf.into_iter().map(|z| z.re).collect()
}

impl Add for &PeriodicField {
    type Output = PeriodicField;
    fn add(self, rhs: Self) -> PeriodicField {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &PeriodicField {
    type Output = PeriodicField;
    fn sub(self, rhs: Self) -> PeriodicField {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<&PeriodicField> for f64 {
    type Output = PeriodicField;
    fn mul(self, rhs: &PeriodicField) -> PeriodicField {
        rhs.scaled(self)
    }
}

/// Forward transform: FFT-ordered coefficients, `1/N` normalised.
pub fn dft(field: &PeriodicField) -> Vec<Vec<Complex64>> {
    field.spectrum().to_vec()
}

/// Inverse of [`dft`].
pub fn idft(spectrum: Vec<Vec<Complex64>>) -> Result<PeriodicField> {
    if spectrum.is_empty() || spectrum.len() > 2 {
        return Err(Error::InvalidArgument("spectrum must have 1 or 2 components".into()));
    }
    PeriodicField::from_spectrum(spectrum)
}

type Symbol = Arc<dyn Fn(i64) -> Complex64 + Send + Sync>;

/// A Fourier multiplier `f̂_n ↦ m(n) f̂_n`, applied componentwise.
#[derive(Clone)]
pub struct MultiplierOp {
    pub name: String,
    symbol: Symbol,
}

impl fmt::Debug for MultiplierOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MultiplierOp({})", self.name)
    }
}

impl MultiplierOp {
    pub fn new(name: impl Into<String>, symbol: impl Fn(i64) -> Complex64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            symbol: Arc::new(symbol),
        }
    }

    pub fn real(name: impl Into<String>, symbol: impl Fn(i64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(name, move |n| Complex64::new(symbol(n), 0.0))
    }

    #[inline]
    pub fn symbol(&self, n: i64) -> Complex64 {
        (self.symbol)(n)
    }

    /// Multiplier as it acts on an `n`-point grid, including the symmetric
    /// Nyquist rule.
    pub fn grid_symbol(&self, k: usize, n: usize) -> Complex64 {
        if k == n / 2 {
            let h = (n / 2) as i64;
            (self.symbol(h) + self.symbol(-h)) * 0.5
        } else {
            self.symbol(mode_of_index(k, n))
        }
    }

    pub fn apply_spectrum(&self, spec: &[Complex64]) -> Vec<Complex64> {
        let n = spec.len();
        spec.iter()
            .enumerate()
            .map(|(k, &v)| v * self.grid_symbol(k, n))
            .collect()
    }

    pub fn apply(&self, field: &PeriodicField) -> PeriodicField {
        let spec = field
            .spectrum()
            .iter()
            .map(|c| self.apply_spectrum(c))
            .collect();
        PeriodicField::from_spectrum(spec).expect("grid already validated")
    }

    /// Operator with the pointwise product symbol, `self ∘ other`.
    pub fn compose(&self, other: &MultiplierOp) -> MultiplierOp {
        let (a, b) = (self.symbol.clone(), other.symbol.clone());
        MultiplierOp {
            name: format!("{}∘{}", self.name, other.name),
            symbol: Arc::new(move |n| a(n) * b(n)),
        }
    }

    pub fn hilbert() -> Self {
        Self::new("H", |n| Complex64::new(0.0, -(n.signum() as f64)))
    }

    pub fn derivative() -> Self {
        Self::new("d/ds", |n| Complex64::new(0.0, n as f64))
    }

    /// `Λ^σ`, multiplier `|n|^σ` with `0^σ = 0` for every `σ > 0`.
    pub fn frac_laplacian(sigma: f64) -> Self {
        Self::real(format!("Λ^{sigma}"), move |n| {
            if n == 0 {
                if sigma == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (n.unsigned_abs() as f64).powf(sigma)
            }
        })
    }

    /// `e^{-tΛ/4}`.
    pub fn semigroup(t: f64) -> Self {
        Self::real(format!("exp(-{t}Λ/4)"), move |n| {
            (-t * n.unsigned_abs() as f64 / 4.0).exp()
        })
    }
}

pub fn hilbert(field: &PeriodicField) -> PeriodicField {
    MultiplierOp::hilbert().apply(field)
}

pub fn derivative(field: &PeriodicField) -> PeriodicField {
    MultiplierOp::derivative().apply(field)
}

/// `k`-th spectral derivative.
pub fn derivative_k(field: &PeriodicField, k: u32) -> PeriodicField {
    MultiplierOp::new("d^k/ds^k", move |n| {
        Complex64::new(0.0, n as f64).powu(k)
    })
    .apply(field)
}

pub fn frac_laplacian(field: &PeriodicField, sigma: f64) -> Result<PeriodicField> {
    if !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be finite, got {sigma}")));
    }
    Ok(MultiplierOp::frac_laplacian(sigma).apply(field))
}

/// `Λ = H ∂_s`, multiplier `|n|`.
pub fn lambda(field: &PeriodicField) -> PeriodicField {
    MultiplierOp::real("Λ", |n| n.unsigned_abs() as f64).apply(field)
}

pub fn semigroup(field: &PeriodicField, t: f64) -> Result<PeriodicField> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("semigroup time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(field.clone());
    }
    Ok(MultiplierOp::semigroup(t).apply(field))
}

/// Kernel of `∂_t + Λ/4` on the line: `K(t, x) = 8t / (t² + 64π²x²)`.
///
/// This is the kernel written with the cycles-per-unit frequency convention.
/// On the `2π`-periodic grid the multiplier `e^{-t|n|/4}` corresponds to
/// `f ↦ ∫ K(t, x) f(s - 2πx) dx`.
pub fn kernel_k(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("kernel time must be > 0, got {t}")));
    }
    Ok(8.0 * t / (t * t + 64.0 * PI * PI * x * x))
}

/// Unnormalised bump `exp(-1/(1-x²))` on `(-1, 1)`.
fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// Fourier transform of the unit-mass bump at frequency `w`,
/// `∫ρ(y) cos(w y) dy`. The bump is flat to all orders at `±1`, so the
/// trapezoid rule is spectrally accurate.
fn bump_transform(w: f64) -> f64 {
    const NODES: usize = 4096;
    let h = 2.0 / NODES as f64;
    let (mut mass, mut acc) = (0.0, 0.0);
    for i in 1..NODES {
        let y = -1.0 + i as f64 * h;
        let b = bump(y);
        mass += b;
        acc += b * (w * y).cos();
    }
    acc / mass
}

/// Periodic convolution with the standard mollifier `ρ_η = η⁻¹ρ(·/η)`.
pub fn mollify(field: &PeriodicField, eta: f64) -> Result<PeriodicField> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("mollifier width must be > 0, got {eta}")));
    }
    if eta >= PI {
        return Err(Error::InvalidArgument(format!(
            "mollifier support {eta} exceeds half a period"
        )));
    }
    let n = field.grid_size();
    let table: Vec<f64> = (0..=n / 2).map(|k| bump_transform(k as f64 * eta)).collect();
    let table = Arc::new(table);
    Ok(MultiplierOp::real("mollifier", move |m| {
        table.get(m.unsigned_abs() as usize).copied().unwrap_or(0.0)
    })
    .apply(field))
}

/// Pointwise rotation `O_s = [[cos s, sin s], [-sin s, cos s]]`.
pub fn rotate_pointwise(field: &PeriodicField) -> Result<PeriodicField> {
    rotate_with_sign(field, 1.0)
}

/// Pointwise inverse rotation `O_sᵀ`.
pub fn rotate_pointwise_transpose(field: &PeriodicField) -> Result<PeriodicField> {
    rotate_with_sign(field, -1.0)
}

fn rotate_with_sign(field: &PeriodicField, sign: f64) -> Result<PeriodicField> {
    if !field.is_vector() {
        return Err(Error::InvalidArgument("rotation needs a 2-vector field".into()));
    }
    let n = field.grid_size();
    let (x, y): (Vec<f64>, Vec<f64>) = nodes(n)
        .into_iter()
        .enumerate()
        .map(|(j, s)| {
            let (sn, cs) = (sign * s).sin_cos();
            let p = field.point(j);
            (cs * p[0] + sn * p[1], -sn * p[0] + cs * p[1])
        })
        .unzip();
    PeriodicField::vector(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(n: usize, dim: usize, seed: u64) -> PeriodicField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comps: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        if dim == 1 {
            PeriodicField::scalar(comps[0].clone()).unwrap()
        } else {
            PeriodicField::vector(comps[0].clone(), comps[1].clone()).unwrap()
        }
    }

    /// Random trigonometric polynomial with modes `1..=kmax`, no Nyquist content.
    fn band_limited(n: usize, kmax: usize, seed: u64) -> PeriodicField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<(f64, f64)> = (0..=kmax)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        PeriodicField::from_fn_scalar(n, |s| {
            coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, (a, b))| a * (k as f64 * s).cos() + b * (k as f64 * s).sin())
                .sum()
        })
        .unwrap()
    }

    #[test]
    fn rejects_odd_or_tiny_grids() {
        assert!(matches!(PeriodicField::scalar(vec![0.0; 7]), Err(Error::Config(_))));
        assert!(matches!(PeriodicField::scalar(vec![0.0; 2]), Err(Error::Config(_))));
        assert!(PeriodicField::scalar(vec![0.0; 4]).is_ok());
    }

    #[test]
    fn dft_of_constant_and_single_mode() {
        let one = PeriodicField::from_fn_scalar(16, |_| 1.0).unwrap();
        let spec = dft(&one);
        assert_abs_diff_eq!(spec[0][0].re, 1.0, epsilon = 1e-15);
        assert!(spec[0][1..].iter().all(|z| z.norm() < 1e-15));

        let c3 = PeriodicField::from_fn_scalar(16, |s| (3.0 * s).cos()).unwrap();
        for k in 0..16 {
            let m = mode_of_index(k, 16);
            let expect = if m.abs() == 3 { 0.5 } else { 0.0 };
            assert_abs_diff_eq!(c3.coefficient(0, m).re, expect, epsilon = 1e-15);
            assert_abs_diff_eq!(c3.coefficient(0, m).im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn round_trip_and_conjugate_symmetry() {
        let f = random_field(64, 2, 1);
        let back = idft(dft(&f)).unwrap();
        for c in 0..2 {
            for (a, b) in f.component(c).iter().zip(back.component(c)) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
            for m in 1..32 {
                let (p, q) = (f.coefficient(c, m), f.coefficient(c, -m));
                assert!((p - q.conj()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn parseval() {
        let f = random_field(128, 2, 7);
        assert!((f.mean_square() - f.spectral_mean_square()).abs() < 1e-12 * f.mean_square());
    }

    #[test]
    fn spectrum_cache_is_invalidated_by_mutation() {
        let mut f = PeriodicField::from_fn_scalar(8, |s| s.cos()).unwrap();
        let _ = f.spectrum();
        assert!(f.has_cached_spectrum());
        f.values_mut(0).iter_mut().for_each(|v| *v = 1.0);
        assert!(!f.has_cached_spectrum());
        assert_abs_diff_eq!(f.coefficient(0, 0).re, 1.0, epsilon = 1e-15);
    }

    /// Principal value `(1/2π) ∫ cot(α/2) f(s-α) dα` by a substitution
    /// that removes the singularity: pair `α` with `-α`.
    fn hilbert_by_quadrature(f: impl Fn(f64) -> f64, s: f64) -> f64 {
        // (1/2π) ∫_0^π cot(α/2) (f(s-α) - f(s+α)) dα by composite Simpson
        let m = 20_000;
        let h = PI / m as f64;
        // the integrand is smooth at 0; evaluate its limit just off the origin
        let g = |a: f64| {
            let a = a.max(1e-6);
            (a / 2.0).tan().recip() * (f(s - a) - f(s + a))
        };
        let mut acc = g(0.0) + g(PI);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(i as f64 * h);
        }
        acc * h / 3.0 / (2.0 * PI)
    }

    #[test]
    fn hilbert_matches_singular_integral() {
        for n in 1..=4 {
            let nf = n as f64;
            let f = PeriodicField::from_fn_scalar(32, |s| (nf * s).cos()).unwrap();
            let hf = hilbert(&f);
            for j in [0usize, 3, 11, 20] {
                let s = 2.0 * PI * j as f64 / 32.0;
                let q = hilbert_by_quadrature(|x| (nf * x).cos(), s);
                assert_abs_diff_eq!(hf.component(0)[j], q, epsilon = 1e-9);
                assert_abs_diff_eq!(hf.component(0)[j], (nf * s).sin(), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn hilbert_kills_mean_and_squares_to_minus_one() {
        let c = PeriodicField::from_fn_scalar(16, |_| 3.0).unwrap();
        assert!(hilbert(&c).sup_norm() < 1e-15);
        let f = band_limited(64, 20, 3);
        let hh = hilbert(&hilbert(&f));
        assert!((&hh + &f).sup_norm() < 1e-13);
    }

    #[test]
    fn frac_laplacian_symbol_and_composition() {
        let f = PeriodicField::from_fn_scalar(32, |s| (5.0 * s).sin()).unwrap();
        let g = frac_laplacian(&f, 0.4).unwrap();
        assert!((&g - &f.scaled(5f64.powf(0.4))).sup_norm() < 1e-13);

        let f = band_limited(64, 25, 4);
        assert!((&frac_laplacian(&f, 0.0).unwrap() - &f).sup_norm() < 1e-13);
        let a = frac_laplacian(&frac_laplacian(&f, 0.3).unwrap(), 0.7).unwrap();
        assert!((&a - &lambda(&f)).sup_norm() < 1e-12);
        let composed = MultiplierOp::frac_laplacian(0.3).compose(&MultiplierOp::frac_laplacian(0.7));
        assert!((&composed.apply(&f) - &lambda(&f)).sup_norm() < 1e-12);
    }

    #[test]
    fn lambda_is_hilbert_of_derivative() {
        for n in -40i64..=40 {
            let h = MultiplierOp::hilbert().compose(&MultiplierOp::derivative());
            assert_eq!(h.symbol(n), Complex64::new(n.unsigned_abs() as f64, 0.0));
        }
    }

    #[test]
    fn semigroup_examples() {
        let f = band_limited(32, 10, 5);
        assert_eq!(semigroup(&f, 0.0).unwrap().component(0), f.component(0));
        let c2 = PeriodicField::from_fn_scalar(32, |s| (2.0 * s).cos()).unwrap();
        let g = semigroup(&c2, 2.0).unwrap();
        assert!((&g - &c2.scaled((-1.0f64).exp())).sup_norm() < 1e-15);
        let c = PeriodicField::from_fn_scalar(32, |_| 2.5).unwrap();
        assert!((&semigroup(&c, 7.0).unwrap() - &c).sup_norm() < 1e-14);
        assert!(semigroup(&c, -1.0).is_err());

        let ab = semigroup(&semigroup(&f, 0.3).unwrap(), 0.9).unwrap();
        assert!((&ab - &semigroup(&f, 1.2).unwrap()).sup_norm() < 1e-14);
    }

    #[test]
    fn semigroup_keeps_nonnegative_fields_nonnegative() {
        // Fejér-type nonnegative trigonometric polynomials
        for m in [3, 7, 15] {
            let f = PeriodicField::from_fn_scalar(64, |s| {
                let (a, b) = ((m as f64 * s / 2.0).sin(), (s / 2.0).sin());
                if b.abs() < 1e-14 {
                    (m * m) as f64
                } else {
                    (a / b).powi(2)
                }
            })
            .unwrap();
            for t in [0.01, 0.1, 1.0, 5.0] {
                let g = semigroup(&f, t).unwrap();
                assert!(g.component(0).iter().all(|&v| v >= -1e-10));
            }
        }
    }

    #[test]
    fn kernel_values_and_scaling() {
        assert_abs_diff_eq!(
            kernel_k(2.0, 1.0).unwrap(),
            16.0 / (4.0 + 64.0 * PI * PI),
            epsilon = 1e-16
        );
        assert!(kernel_k(0.0, 1.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let t: f64 = rng.gen_range(0.01..10.0);
            let x: f64 = rng.gen_range(-5.0..5.0);
            let lhs = kernel_k(t, x).unwrap() * t;
            assert!((lhs - kernel_k(1.0, x / t).unwrap()).abs() < 1e-12 * lhs.max(1e-300));
            assert!(kernel_k(t, x).unwrap() > 0.0);
        }
    }

    #[test]
    fn kernel_has_unit_mass() {
        // x = tan(θ)/(8π) maps the line onto (-π/2, π/2) with a smooth integrand
        let m = 4000;
        let h = PI / m as f64;
        let mut acc = 0.0;
        for i in 0..m {
            let th = -PI / 2.0 + (i as f64 + 0.5) * h;
            let x = th.tan() / (8.0 * PI);
            let jac = 1.0 / (8.0 * PI * th.cos().powi(2));
            acc += kernel_k(1.0, x).unwrap() * jac * h;
        }
        assert_abs_diff_eq!(acc, 1.0, epsilon = 1e-8);
    }

    /// Periodisation `Σ_k K(t, x + k)`, truncated with a midpoint-corrected
    /// tail `Σ_{|k|>L} 8t/(64π²k²) ≈ 2·8t/(64π²(L + ½))`.
    fn periodized_kernel(t: f64, x: f64) -> f64 {
        const L: i64 = 20_000;
        let mut acc = 0.0;
        for k in -L..=L {
            acc += kernel_k(t, x + k as f64).unwrap();
        }
        acc + 2.0 * 8.0 * t / (64.0 * PI * PI * (L as f64 + 0.5))
    }

    #[test]
    fn semigroup_matches_kernel_convolution() {
        let f = band_limited(32, 6, 11);
        for t in [0.5, 2.0] {
            let g = semigroup(&f, t).unwrap();
            // smooth periodic integrand on [0, 1): trapezoid is spectral
            let m = 256;
            let kern: Vec<f64> = (0..m).map(|i| periodized_kernel(t, i as f64 / m as f64)).collect();
            for j in [0usize, 5, 17] {
                let s = 2.0 * PI * j as f64 / 32.0;
                let acc: f64 = (0..m)
                    .map(|i| kern[i] * f.evaluate_at(s - 2.0 * PI * i as f64 / m as f64)[0])
                    .sum::<f64>()
                    / m as f64;
                assert_abs_diff_eq!(acc, g.component(0)[j], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn mollify_preserves_constants_and_mean() {
        let c = PeriodicField::from_fn_scalar(32, |_| 1.7).unwrap();
        assert!((&mollify(&c, 0.5).unwrap() - &c).sup_norm() < 1e-14);
        let f = random_field(64, 1, 12);
        let g = mollify(&f, 0.3).unwrap();
        assert_abs_diff_eq!(g.mean()[0], f.mean()[0], epsilon = 1e-12);
        assert!(mollify(&f, PI).is_err());
        assert!(mollify(&f, 0.0).is_err());
    }

    #[test]
    fn mollify_converges_quadratically() {
        let f = PeriodicField::from_fn_scalar(64, |s| s.cos()).unwrap();
        let etas = [0.2, 0.1, 0.05, 0.025];
        let errs: Vec<f64> = etas
            .iter()
            .map(|&e| (&mollify(&f, e).unwrap() - &f).sup_norm())
            .collect();
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
        }
    }

    #[test]
    fn rotation_examples() {
        let er = PeriodicField::from_fn_vector(32, |s| [s.cos(), s.sin()]).unwrap();
        let r = rotate_pointwise(&er).unwrap();
        for j in 0..32 {
            let p = r.point(j);
            assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-15);
        }
        let w = random_field(32, 2, 13);
        let back = rotate_pointwise_transpose(&rotate_pointwise(&w).unwrap()).unwrap();
        assert!((&back - &w).sup_norm() < 1e-14);
        let rw = rotate_pointwise(&w).unwrap();
        for j in 0..32 {
            let (a, b) = (w.point(j), rw.point(j));
            assert_abs_diff_eq!(a[0].hypot(a[1]), b[0].hypot(b[1]), epsilon = 1e-14);
        }
        assert!(rotate_pointwise(&random_field(32, 1, 1)).is_err());
    }

    #[test]
    fn shift_and_upsample_interpolate_exactly() {
        let f = band_limited(32, 12, 14);
        let alpha = 0.37;
        let g = f.shifted(alpha);
        for j in 0..32 {
            let s = 2.0 * PI * j as f64 / 32.0;
            assert_abs_diff_eq!(g.component(0)[j], f.evaluate_at(s - alpha)[0], epsilon = 1e-13);
        }
        let up = f.upsample(96).unwrap();
        for (j, s) in nodes(96).into_iter().enumerate() {
            assert_abs_diff_eq!(up.component(0)[j], f.evaluate_at(s)[0], epsilon = 1e-13);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn multipliers_are_linear(seed in 0u64..1000, a in -3.0f64..3.0, sigma in 0.0f64..2.0) {
                let f = random_field(32, 1, seed);
                let g = random_field(32, 1, seed + 1);
                let op = MultiplierOp::frac_laplacian(sigma);
                let lhs = op.apply(&f.axpy(a, &g));
                let rhs = op.apply(&f).axpy(a, &op.apply(&g));
                prop_assert!((&lhs - &rhs).sup_norm() < 1e-11);
            }

            #[test]
            fn parseval_holds(seed in 0u64..1000) {
                let f = random_field(64, 2, seed);
                prop_assert!((f.mean_square() - f.spectral_mean_square()).abs() < 1e-12 * f.mean_square());
            }
        }
    }
}
