//! Circular equilibria, the projections onto them and the linearised
//! operator at a circle.
//!
//! Uniformly parameterised circles `A e_r + B e_t + C₁e_x + C₂e_y` are the
//! stationary states. The linearisation `𝓛` is the same at every circle and
//! acts on Fourier modes as
//!
//! ```text
//! (𝓛w)̂₁,ₙ = ¼|n| ŵ₁,ₙ − ¼ i sgn(n) ŵ₂,ₙ
//! (𝓛w)̂₂,ₙ = ¼|n| ŵ₂,ₙ + ¼ i sgn(n) ŵ₁,ₙ
//! ```
//!
//! which in operator form is `¼Λ + ¼[[0, H], [−H, 0]]` with `H` the Hilbert
//! transform of multiplier `−i sgn(n)`. It is conjugate to `¼Λ` through the
//! pointwise rotation `O_s`: `𝓛 = ¼ O_sᵀ Λ O_s Π`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::{nonlinear_n, AlphaQuadrature, MaterialCurve};
use crate::error::{Error, Result};
use crate::spectral::{index_of_mode, lambda, mode_of_index, MultiplierOp, PeriodicField};

/// Coefficients of `Z = A e_r + B e_t + C₁e_x + C₂e_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleState {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
}

impl CircleState {
    pub fn new(a: f64, b: f64, c1: f64, c2: f64) -> Self {
        Self { a, b, c1, c2 }
    }

    pub fn unit() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    pub fn radius(&self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn center(&self) -> [f64; 2] {
        [self.c1, self.c2]
    }

    /// Member of the equilibrium set (nonzero radius).
    pub fn is_equilibrium(&self) -> bool {
        self.radius() > 0.0
    }

    pub fn to_field(&self, n: usize) -> Result<PeriodicField> {
        let Self { a, b, c1, c2 } = *self;
        PeriodicField::from_fn_vector(n, |s| {
            let (sn, cs) = s.sin_cos();
            [a * cs - b * sn + c1, a * sn + b * cs + c2]
        })
    }

    pub fn render(&self, n: usize) -> Result<MaterialCurve> {
        if !self.is_equilibrium() {
            return Err(Error::InvalidArgument("circle of zero radius".into()));
        }
        MaterialCurve::new(self.to_field(n)?)
    }
}

/// Samples of `(e_r, e_t, e_x, e_y)`.
pub fn basis(n: usize) -> Result<[PeriodicField; 4]> {
    Ok([
        PeriodicField::from_fn_vector(n, |s| [s.cos(), s.sin()])?,
        PeriodicField::from_fn_vector(n, |s| [-s.sin(), s.cos()])?,
        PeriodicField::from_fn_vector(n, |_| [1.0, 0.0])?,
        PeriodicField::from_fn_vector(n, |_| [0.0, 1.0])?,
    ])
}

fn require_vector(w: &PeriodicField) -> Result<()> {
    if !w.is_vector() {
        return Err(Error::InvalidArgument("expected a 2-vector field".into()));
    }
    Ok(())
}

/// Coefficients `⟨w, e_ℓ⟩ / 2π` of the `L²` projection onto the circle space.
pub fn circle_coefficients(w: &PeriodicField) -> Result<CircleState> {
    require_vector(w)?;
    let e = basis(w.grid_size())?;
    let c: Vec<f64> = e.iter().map(|b| w.inner(b) / (2.0 * PI)).collect();
    Ok(CircleState::new(c[0], c[1], c[2], c[3]))
}

/// `𝒫w`, the `L²` projection onto `span{e_r, e_t, e_x, e_y}`.
pub fn project_p(w: &PeriodicField) -> Result<PeriodicField> {
    circle_coefficients(w)?.to_field(w.grid_size())
}

/// `Πw = w − 𝒫w`.
pub fn project_pi(w: &PeriodicField) -> Result<PeriodicField> {
    Ok(w - &project_p(w)?)
}

/// `𝓛w` from the Fourier-mode formulas.
pub fn linearized_l(w: &PeriodicField) -> Result<PeriodicField> {
    require_vector(w)?;
    let n = w.grid_size();
    let spec = w.spectrum();
    let i = Complex64::new(0.0, 1.0);
    let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; 2];
    for k in 0..n {
        let m = mode_of_index(k, n);
        let absn = m.unsigned_abs() as f64;
        // the unpaired Nyquist mode sees the average of ±sgn, i.e. zero
        let sg = if k == n / 2 { 0.0 } else { m.signum() as f64 };
        let (w1, w2) = (spec[0][k], spec[1][k]);
        out[0][k] = 0.25 * absn * w1 - 0.25 * i * sg * w2;
        out[1][k] = 0.25 * absn * w2 + 0.25 * i * sg * w1;
    }
    PeriodicField::from_spectrum(out)
}

/// `¼ O_sᵀ Λ O_s Π w` with the rotation applied pointwise on the grid.
pub fn linearized_l_conjugated(w: &PeriodicField) -> Result<PeriodicField> {
    use crate::spectral::{rotate_pointwise, rotate_pointwise_transpose};
    let v = rotate_pointwise(&project_pi(w)?)?;
    Ok(rotate_pointwise_transpose(&lambda(&v))?.scaled(0.25))
}

/// Coefficients on the signed modes `-k..=k`.
struct ModeVec {
    k: i64,
    data: Vec<Complex64>,
}

impl ModeVec {
    fn zeros(k: i64) -> Self {
        Self {
            k,
            data: vec![Complex64::new(0.0, 0.0); (2 * k + 1) as usize],
        }
    }

    #[inline]
    fn get(&self, m: i64) -> Complex64 {
        if m.abs() > self.k {
            Complex64::new(0.0, 0.0)
        } else {
            self.data[(m + self.k) as usize]
        }
    }

    #[inline]
    fn set(&mut self, m: i64, v: Complex64) {
        self.data[(m + self.k) as usize] = v;
    }

    /// Grid spectrum → signed modes, splitting the Nyquist coefficient
    /// evenly between `±N/2`.
    fn from_grid(spec: &[Complex64], k: i64) -> Self {
        let n = spec.len();
        let mut out = Self::zeros(k);
        for (idx, &v) in spec.iter().enumerate() {
            if idx == n / 2 {
                let h = (n / 2) as i64;
                out.set(h, v * 0.5);
                out.set(-h, v * 0.5);
            } else {
                out.set(mode_of_index(idx, n), v);
            }
        }
        out
    }

    /// Signed modes → grid spectrum, folding `±N/2` into the Nyquist slot.
    fn to_grid(&self, n: usize) -> Vec<Complex64> {
        let h = (n / 2) as i64;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for m in -h..=h {
            let idx = index_of_mode(m, n).expect("in range");
            out[idx] += self.get(m);
        }
        out
    }
}

/// Spectral form of the pointwise rotation: `sign = +1` applies `O_s`,
/// `sign = −1` applies `O_sᵀ`. Modes shift by one, so the output range grows.
fn rotate_modes(w: &[ModeVec; 2], sign: f64) -> [ModeVec; 2] {
    let k = w[0].k + 1;
    let half = Complex64::new(0.5, 0.0);
    let inv2i = Complex64::new(0.0, -0.5); // 1/(2i)
    let mut out = [ModeVec::zeros(k), ModeVec::zeros(k)];
    for m in -k..=k {
        let cos = |f: &ModeVec| (f.get(m - 1) + f.get(m + 1)) * half;
        let sin = |f: &ModeVec| (f.get(m - 1) - f.get(m + 1)) * inv2i;
        out[0].set(m, cos(&w[0]) + sin(&w[1]) * sign);
        out[1].set(m, -sin(&w[0]) * sign + cos(&w[1]));
    }
    out
}

/// `O_sᵀ m(Λ) O_s Π w`, computed exactly on Fourier modes with no aliasing.
/// For `m = e^{−tΛ/4}` this is the semigroup generated by `−𝓛` restricted
/// to the range of `Π`.
pub fn conjugated_multiplier(w: &PeriodicField, op: &MultiplierOp) -> Result<PeriodicField> {
    let y = project_pi(w)?;
    let n = y.grid_size();
    let k = (n / 2) as i64;
    let spec = y.spectrum();
    let modes = [ModeVec::from_grid(&spec[0], k), ModeVec::from_grid(&spec[1], k)];
    let mut v = rotate_modes(&modes, 1.0);
    for comp in v.iter_mut() {
        for m in -comp.k..=comp.k {
            let val = comp.get(m) * op.symbol(m);
            comp.set(m, val);
        }
    }
    let back = rotate_modes(&v, -1.0);
    PeriodicField::from_spectrum(vec![back[0].to_grid(n), back[1].to_grid(n)])
}

/// `e^{−t𝓛} Π w`.
pub fn l_semigroup(w: &PeriodicField, t: f64) -> Result<PeriodicField> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("semigroup time must be >= 0, got {t}")));
    }
    conjugated_multiplier(w, &MultiplierOp::semigroup(t))
}

/// `𝔑(X) = N(X) + 𝓛X − ¼ΛX`.
pub fn frak_n(curve: &MaterialCurve, quad: &AlphaQuadrature) -> Result<PeriodicField> {
    let x = curve.field();
    let n = nonlinear_n(curve, quad)?;
    Ok((&n + &linearized_l(x)?).axpy(-0.25, &lambda(x)))
}

/// Circle extracted by `𝒫` together with the size of the remainder `ΠX`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleFit {
    pub state: CircleState,
    /// `‖ΠX‖_∞`
    pub residual_sup: f64,
    /// `‖ΠX‖_{L²}`
    pub residual_l2: f64,
}

pub fn fit_circle(curve: &MaterialCurve) -> Result<CircleFit> {
    let x = curve.field();
    let state = circle_coefficients(x)?;
    let y = x - &state.to_field(x.grid_size())?;
    Ok(CircleFit {
        state,
        residual_sup: y.sup_norm(),
        residual_l2: y.inner(&y).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band_limited(n: usize, kmax: usize, seed: u64) -> PeriodicField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<[f64; 4]> = (0..=kmax)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
            .collect();
        PeriodicField::from_fn_vector(n, |s| {
            let mut p = [0.0; 2];
            for (k, a) in c.iter().enumerate() {
                let (sn, cs) = (k as f64 * s).sin_cos();
                p[0] += a[0] * cs + a[1] * sn;
                p[1] += a[2] * cs + a[3] * sn;
            }
            p
        })
        .unwrap()
    }

    #[test]
    fn basis_inner_products() {
        let [er, et, ex, ey] = basis(64).unwrap();
        assert_abs_diff_eq!(er.inner(&et), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(er.inner(&er), 2.0 * PI, epsilon = 1e-13);
        assert_abs_diff_eq!(ex.inner(&ey), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ex.inner(&er), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn projection_examples() {
        let [er, ..] = basis(32).unwrap();
        assert!((&project_p(&er).unwrap() - &er).sup_norm() < 1e-14);
        let m2 = PeriodicField::from_fn_vector(32, |s| [(2.0 * s).cos(), 0.0]).unwrap();
        assert!(project_p(&m2).unwrap().sup_norm() < 1e-14);

        let w = random_band_limited(32, 6, 1);
        let (p, q) = (project_p(&w).unwrap(), project_pi(&w).unwrap());
        assert!((&(&p + &q) - &w).sup_norm() < 1e-14);
        assert!((&project_p(&p).unwrap() - &p).sup_norm() < 1e-13);
        assert!((&project_pi(&q).unwrap() - &q).sup_norm() < 1e-13);
        assert!(project_p(&q).unwrap().sup_norm() < 1e-13);
    }

    #[test]
    fn l_annihilates_the_circle_space() {
        for e in basis(64).unwrap() {
            assert!(linearized_l(&e).unwrap().sup_norm() < 1e-14);
        }
    }

    #[test]
    fn l_equals_rotation_conjugate() {
        for seed in 0..10 {
            let w = random_band_limited(64, 20, seed);
            let a = linearized_l(&w).unwrap();
            let b = linearized_l_conjugated(&w).unwrap();
            assert!((&a - &b).sup_norm() < 1e-12);
            assert!(project_p(&a).unwrap().sup_norm() < 1e-13);
            assert!((&project_pi(&a).unwrap() - &a).sup_norm() < 1e-13);
        }
    }

    #[test]
    fn l_semigroup_matches_eigen_decomposition() {
        // On mode n ≠ 0 the 2×2 block of 𝓛 has eigenvectors (1, ±i sgn n)
        // with eigenvalues (|n| ± 1)/4.
        let w = random_band_limited(32, 14, 3);
        let t = 0.7;
        let got = l_semigroup(&w, t).unwrap();
        let y = project_pi(&w).unwrap();
        let n = 32;
        let i = Complex64::new(0.0, 1.0);
        let spec = y.spectrum();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; 2];
        for k in 0..n {
            let m = mode_of_index(k, n);
            if m == 0 || k == n / 2 {
                continue;
            }
            let sg = m.signum() as f64;
            let (w1, w2) = (spec[0][k], spec[1][k]);
            // w = p (1, i sg) + q (1, −i sg)
            let p = (w1 - i * sg * w2) * 0.5;
            let q = (w1 + i * sg * w2) * 0.5;
            let lp = (-(m.abs() as f64 + 1.0) * t / 4.0).exp();
            let lq = (-(m.abs() as f64 - 1.0) * t / 4.0).exp();
            out[0][k] = p * lp + q * lq;
            out[1][k] = i * sg * (p * lp - q * lq);
        }
        let expect = PeriodicField::from_spectrum(out).unwrap();
        assert!((&got - &expect).sup_norm() < 1e-13);
    }

    #[test]
    fn l_semigroup_decays_rotated_modes_exactly() {
        // w = O_sᵀ (cos ks, 0); for k = 1 the e_x part is removed by Π
        for k in [1usize, 2, 5] {
            let kk = k as f64;
            let w = PeriodicField::from_fn_vector(64, |s| {
                [(kk * s).cos() * s.cos(), (kk * s).cos() * s.sin()]
            })
            .unwrap();
            let y = project_pi(&w).unwrap();
            let got = l_semigroup(&y, 2.0).unwrap();
            let expect = y.scaled((-kk * 2.0 / 4.0).exp());
            assert!((&got - &expect).sup_norm() < 1e-13);
        }
    }

    #[test]
    fn fit_circle_examples() {
        let c = CircleState::new(1.0, 0.0, 0.5, 0.0).render(32).unwrap();
        let fit = fit_circle(&c).unwrap();
        assert_abs_diff_eq!(fit.state.a, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.state.b, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.state.c1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.state.c2, 0.0, epsilon = 1e-12);

        let p = MaterialCurve::from_fn(64, |s| [s.cos() + 0.01 * (2.0 * s).cos(), s.sin()]).unwrap();
        let fit = fit_circle(&p).unwrap();
        assert_abs_diff_eq!(fit.state.a, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.state.c1, 0.0, epsilon = 1e-12);
        assert!(fit.residual_sup > 0.0);

        let big = CircleState::new(2.5, 0.0, 0.0, 0.0).render(32).unwrap();
        assert_abs_diff_eq!(fit_circle(&big).unwrap().state.radius(), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn frak_n_vanishes_on_circles_and_is_translation_invariant() {
        let q = AlphaQuadrature::for_grid(64);
        let w = CircleState::new(0.8, -0.6, 1.0, 2.0).render(64).unwrap();
        assert!(frak_n(&w, &q).unwrap().sup_norm() < 1e-12);

        let x = MaterialCurve::from_fn(64, |s| {
            [s.cos() + 0.1 * (2.0 * s).sin(), s.sin() + 0.05 * (3.0 * s).cos()]
        })
        .unwrap();
        let moved = MaterialCurve::new(x.field().translated([0.7, 0.0])).unwrap();
        let d = &frak_n(&x, &q).unwrap() - &frak_n(&moved, &q).unwrap();
        assert!(d.sup_norm() < 1e-12);
    }
}
