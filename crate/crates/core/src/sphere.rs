//! Spherical harmonics, harmonic transforms and spectral diagnostics.
//!
//! Harmonics follow the Condon–Shortley convention
//! `Y_{ℓ,m}(θ,φ) = sqrt((2ℓ+1)(ℓ−m)!/(4π(ℓ+m)!)) P_ℓ^m(cos θ) e^{imφ}`, which
//! gives `Y_{ℓ,−m} = (−1)^m conj(Y_{ℓ,m})`. Associated Legendre values are
//! produced by the normalized three-term recurrence in `ℓ` at fixed `m`, so
//! degrees in the thousands stay finite.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Float;

use crate::special::{gauss_legendre, ln_gamma};
use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Reduce an angle into `[0, 2π)`.
pub fn wrap_angle(phi: f64) -> f64 {
    let r = phi - TWO_PI * (phi / TWO_PI).floor();
    if !(0.0..TWO_PI).contains(&r) {
        0.0
    } else {
        r
    }
}

/// A point on the unit sphere in colatitude/longitude coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    theta: f64,
    phi: f64,
}

impl SphericalPoint {
    /// Longitude is reduced modulo `2π`; at the poles it is set to 0.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) || !phi.is_finite() {
            return Err(Error::Domain("colatitude must lie in [0, π]"));
        }
        Ok(Self::new_unchecked(theta, phi))
    }

    pub(crate) fn new_unchecked(theta: f64, phi: f64) -> Self {
        let phi = if theta == 0.0 || theta == PI {
            0.0
        } else {
            wrap_angle(phi)
        };
        Self { theta, phi }
    }

    pub fn north_pole() -> Self {
        Self { theta: 0.0, phi: 0.0 }
    }

    /// Normalizes `v` before converting it to angles.
    pub fn from_vector(v: [f64; 3]) -> Self {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let (x, y, z) = (v[0] / n, v[1] / n, v[2] / n);
        let rho = (x * x + y * y).sqrt();
        let theta = rho.atan2(z);
        let phi = if rho == 0.0 { 0.0 } else { y.atan2(x) };
        Self::new_unchecked(theta, phi)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn to_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn dot(&self, other: &SphericalPoint) -> f64 {
        let a = self.to_vector();
        let b = other.to_vector();
        (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0)
    }
}

/// `(θ, φ + δ mod 2π)`; multiplies every `Y_{ℓ,m}` by `e^{imδ}`.
pub fn rotate_longitude(x: SphericalPoint, delta: f64) -> SphericalPoint {
    SphericalPoint::new_unchecked(x.theta, x.phi + delta)
}

/// Position of `(ℓ, m)` in the row-major layout with `m` running from `−ℓ` to `ℓ`.
#[inline]
pub fn lm_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

#[inline]
fn tri_index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Orthonormal associated Legendre values `P̄_ℓ^m = N_ℓ^m P_ℓ^m` for
/// `0 ≤ m ≤ ℓ ≤ l_max`, stored triangularly.
#[derive(Debug, Clone)]
pub struct LegendreTable {
    l_max: usize,
    values: Vec<f64>,
}

impl LegendreTable {
    /// `x = cos θ`, `u = sin θ ≥ 0`.
    pub fn new(l_max: usize, x: f64, u: f64) -> Self {
        let mut values = vec![0.0; (l_max + 1) * (l_max + 2) / 2];
        let mut pmm = 1.0 / (4.0 * PI).sqrt();
        for m in 0..=l_max {
            if m > 0 {
                let mf = m as f64;
                pmm *= -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * u;
            }
            values[tri_index(m, m)] = pmm;
            if m == l_max {
                break;
            }
            let mf = m as f64;
            let mut p_prev = pmm;
            let mut p = (2.0 * mf + 3.0).sqrt() * x * pmm;
            values[tri_index(m + 1, m)] = p;
            for l in (m + 2)..=l_max {
                let lf = l as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
                let next = a * (x * p - b * p_prev);
                p_prev = p;
                p = next;
                values[tri_index(l, m)] = p;
            }
        }
        Self { l_max, values }
    }

    pub fn from_theta(l_max: usize, theta: f64) -> Self {
        if theta == 0.0 || theta == PI {
            return Self::new(l_max, theta.cos().signum(), 0.0);
        }
        let (u, x) = theta.sin_cos();
        Self::new(l_max, x, u.abs())
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// `P̄_ℓ^m` for `0 ≤ m ≤ ℓ`.
    #[inline]
    pub fn get(&self, l: usize, m: usize) -> f64 {
        self.values[tri_index(l, m)]
    }
}

fn legendre_norm(l: usize, m: usize) -> f64 {
    let (lf, mf) = (l as f64, m as f64);
    (0.5 * ((2.0 * lf + 1.0).ln() + ln_gamma(lf - mf + 1.0) - ln_gamma(lf + mf + 1.0) - (4.0 * PI).ln())).exp()
}

/// Associated Legendre function `P_ℓ^m(s)` with the Condon–Shortley phase.
pub fn assoc_legendre(l: usize, m: usize, s: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&s) {
        return Err(Error::Domain("|s| must not exceed 1"));
    }
    if m > l {
        return Err(Error::Domain("order m must not exceed degree l"));
    }
    let u = ((1.0 - s) * (1.0 + s)).sqrt();
    let table = LegendreTable::new(l, s, u);
    Ok(table.get(l, m) / legendre_norm(l, m))
}

/// Legendre polynomial `P_ℓ(s)`.
pub fn legendre(l: usize, s: f64) -> f64 {
    crate::special::legendre_polynomials(l, s)[l]
}

/// `Y_{ℓ,m}(x)`.
pub fn ylm(l: usize, m: i64, x: SphericalPoint) -> Result<Complex64> {
    if m.unsigned_abs() as usize > l {
        return Err(Error::Domain("|m| must not exceed l"));
    }
    let table = LegendreTable::from_theta(l, x.theta);
    Ok(ylm_from_table(&table, l, m, x.phi))
}

#[inline]
fn ylm_from_table(table: &LegendreTable, l: usize, m: i64, phi: f64) -> Complex64 {
    let ma = m.unsigned_abs() as usize;
    let p = table.get(l, ma);
    let e = Complex64::from_polar(p, ma as f64 * phi);
    if m < 0 {
        let s = if ma.is_multiple_of(2) { 1.0 } else { -1.0 };
        e.conj() * s
    } else {
        e
    }
}

/// All `Y_{ℓ,m}(x)` for `ℓ ≤ l_max`, in the coefficient layout.
pub fn ylm_all(l_max: usize, x: SphericalPoint) -> Vec<Complex64> {
    let table = LegendreTable::from_theta(l_max, x.theta);
    let mut out = vec![Complex64::new(0.0, 0.0); (l_max + 1) * (l_max + 1)];
    let phases: Vec<Complex64> = (0..=l_max)
        .map(|m| Complex64::from_polar(1.0, m as f64 * x.phi))
        .collect();
    for l in 0..=l_max {
        for m in 0..=l {
            let v = phases[m] * table.get(l, m);
            out[lm_index(l, m as i64)] = v;
            if m > 0 {
                let s = if m % 2 == 0 { 1.0 } else { -1.0 };
                out[lm_index(l, -(m as i64))] = v.conj() * s;
            }
        }
    }
    out
}

/// Both sides of the addition theorem at degree `ℓ`:
/// `Σ_m Y_{ℓ,m}(x) conj(Y_{ℓ,m}(y))` and `(2ℓ+1)/(4π) P_ℓ(x·y)`.
pub fn addition_check(l: usize, x: SphericalPoint, y: SphericalPoint) -> (Complex64, f64) {
    let tx = LegendreTable::from_theta(l, x.theta);
    let ty = LegendreTable::from_theta(l, y.theta);
    let mut lhs = Complex64::new(0.0, 0.0);
    for m in -(l as i64)..=(l as i64) {
        lhs += ylm_from_table(&tx, l, m, x.phi) * ylm_from_table(&ty, l, m, y.phi).conj();
    }
    let rhs = (2 * l + 1) as f64 / (4.0 * PI) * legendre(l, x.dot(&y));
    (lhs, rhs)
}

/// Fourier–Laplace coefficients `f_{ℓ,m}`, `0 ≤ ℓ ≤ l_max`, `|m| ≤ ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCoefficients {
    l_max: usize,
    coeffs: Vec<Complex64>,
}

impl HarmonicCoefficients {
    pub fn zeros(l_max: usize) -> Self {
        Self {
            l_max,
            coeffs: vec![Complex64::new(0.0, 0.0); (l_max + 1) * (l_max + 1)],
        }
    }

    pub fn from_vec(l_max: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != (l_max + 1) * (l_max + 1) {
            return Err(Error::Parameter("coefficient count must be (l_max + 1)^2"));
        }
        Ok(Self { l_max, coeffs })
    }

    /// A single harmonic `value · Y_{ℓ,m}` stored at degree `l_max`.
    pub fn single(l_max: usize, l: usize, m: i64, value: Complex64) -> Result<Self> {
        if l > l_max || m.unsigned_abs() as usize > l {
            return Err(Error::Domain("harmonic (l, m) does not fit the requested l_max"));
        }
        let mut c = Self::zeros(l_max);
        c.coeffs[lm_index(l, m)] = value;
        Ok(c)
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, l: usize, m: i64) -> Complex64 {
        if l > self.l_max || m.unsigned_abs() as usize > l {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[lm_index(l, m)]
    }

    pub fn set(&mut self, l: usize, m: i64, value: Complex64) {
        self.coeffs[lm_index(l, m)] = value;
    }

    /// Iterate over `(ℓ, m, f_{ℓ,m})`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, i64, Complex64)> + '_ {
        (0..=self.l_max).flat_map(move |l| (-(l as i64)..=(l as i64)).map(move |m| (l, m, self.coeffs[lm_index(l, m)])))
    }

    /// Coefficient-wise map `f_{ℓ,m} ↦ g(ℓ, m, f_{ℓ,m})`.
    pub fn map<F: FnMut(usize, i64, Complex64) -> Complex64>(&self, mut g: F) -> Self {
        let mut out = self.clone();
        for l in 0..=self.l_max {
            for m in -(l as i64)..=(l as i64) {
                let i = lm_index(l, m);
                out.coeffs[i] = g(l, m, self.coeffs[i]);
            }
        }
        out
    }

    /// Copy into a container of degree `l_max`, dropping or zero-padding.
    pub fn with_l_max(&self, l_max: usize) -> Self {
        let mut out = Self::zeros(l_max);
        let keep = (l_max.min(self.l_max) + 1).pow(2);
        out.coeffs[..keep].copy_from_slice(&self.coeffs[..keep]);
        out
    }

    pub fn power_spectrum(&self) -> PowerSpectrum {
        let a = (0..=self.l_max)
            .map(|l| {
                (-(l as i64)..=(l as i64))
                    .map(|m| self.coeffs[lm_index(l, m)].norm_sqr())
                    .sum()
            })
            .collect();
        PowerSpectrum { a }
    }

    /// Whether `f_{ℓ,−m} = (−1)^m conj(f_{ℓ,m})` holds, i.e. the function is real.
    pub fn is_real_valued(&self, tol: f64) -> bool {
        self.iter().filter(|&(_, m, _)| m > 0).all(|(l, m, c)| {
            let s = if m % 2 == 0 { 1.0 } else { -1.0 };
            (self.get(l, -m) - c.conj() * s).norm() <= tol
        })
    }

    /// Bilinear pairing `∫ f g dσ`.
    pub fn pairing(&self, other: &Self) -> Complex64 {
        let l_max = self.l_max.min(other.l_max);
        let mut sum = Complex64::new(0.0, 0.0);
        for l in 0..=l_max {
            for m in -(l as i64)..=(l as i64) {
                let s = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                sum += self.get(l, m) * other.get(l, -m) * s;
            }
        }
        sum
    }

    /// `∫ f conj(g) dσ`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum()
    }

    /// Smallest degree `L` with `Σ_{ℓ>L} A_ℓ < tol`, together with that tail mass.
    pub fn effective_l_max(&self, tol: f64) -> (usize, f64) {
        let a = self.power_spectrum().a;
        let mut tail = 0.0;
        for l in (0..=self.l_max).rev() {
            if tail + a[l] >= tol {
                return (l, tail);
            }
            tail += a[l];
        }
        (0, tail)
    }
}

/// Degree-wise energies `A_ℓ = Σ_m |f_{ℓ,m}|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub a: Vec<f64>,
}

impl PowerSpectrum {
    /// Squared L² norm of the represented function (Parseval).
    pub fn total(&self) -> f64 {
        self.a.iter().sum()
    }
}

/// `Σ_{ℓ,m} f_{ℓ,m} Y_{ℓ,m}(x)`.
pub fn synthesize(c: &HarmonicCoefficients, x: SphericalPoint) -> Complex64 {
    let table = LegendreTable::from_theta(c.l_max, x.theta);
    let mut sum = Complex64::new(0.0, 0.0);
    for m in 0..=c.l_max {
        let phase = Complex64::from_polar(1.0, m as f64 * x.phi);
        let s = if m % 2 == 0 { 1.0 } else { -1.0 };
        for l in m..=c.l_max {
            let p = table.get(l, m);
            let y = phase * p;
            sum += c.coeffs[lm_index(l, m as i64)] * y;
            if m > 0 {
                sum += c.coeffs[lm_index(l, -(m as i64))] * y.conj() * s;
            }
        }
    }
    sum
}

/// `[f]_{H^s} = sqrt(Σ_{ℓ≥1} A_ℓ ℓ^{2s})` over the stored degrees.
pub fn sobolev_seminorm(c: &HarmonicCoefficients, s: f64) -> f64 {
    c.power_spectrum()
        .a
        .iter()
        .enumerate()
        .skip(1)
        .map(|(l, a)| a * (l as f64).powf(2.0 * s))
        .sum::<f64>()
        .sqrt()
}

/// Tensor grid: Gauss–Legendre nodes in `cos θ` times uniform nodes in `φ`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    cos_theta: Vec<f64>,
    theta: Vec<f64>,
    weights: Vec<f64>,
    n_phi: usize,
}

impl QuadratureGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        let (cos_theta, weights) = gauss_legendre(n_theta);
        let theta = cos_theta.iter().map(|x| x.acos()).collect();
        Self {
            cos_theta,
            theta,
            weights,
            n_phi,
        }
    }

    /// The smallest grid that integrates products of degree-`l_max` harmonics exactly.
    pub fn for_degree(l_max: usize) -> Self {
        Self::new(l_max + 1, 2 * l_max + 1)
    }

    pub fn n_theta(&self) -> usize {
        self.theta.len()
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn len(&self) -> usize {
        self.n_theta() * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phi(&self, k: usize) -> f64 {
        TWO_PI * k as f64 / self.n_phi as f64
    }

    /// Nodes in ring-major order (θ outer, φ inner).
    pub fn points(&self) -> impl Iterator<Item = SphericalPoint> + '_ {
        self.theta
            .iter()
            .flat_map(move |&t| (0..self.n_phi).map(move |k| SphericalPoint::new_unchecked(t, self.phi(k))))
    }

    /// Quadrature weight of node `(j, k)`, equal for every `k`.
    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j] * TWO_PI / self.n_phi as f64
    }

    pub fn sample<F: FnMut(SphericalPoint) -> Complex64>(&self, f: F) -> Vec<Complex64> {
        self.points().map(f).collect()
    }

    /// `∫ f dσ` for values sampled in node order.
    pub fn integrate(&self, values: &[Complex64]) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for j in 0..self.n_theta() {
            let ring: Complex64 = values[j * self.n_phi..(j + 1) * self.n_phi].iter().sum();
            sum += ring * self.weight(j);
        }
        sum
    }
}

/// Harmonic coefficients up to degree `l_max` of values sampled on `grid`.
pub fn analyze(grid: &QuadratureGrid, values: &[Complex64], l_max: usize) -> Result<HarmonicCoefficients> {
    if grid.n_theta() < l_max + 1 || grid.n_phi < 2 * l_max + 1 {
        return Err(Error::GridTooCoarse {
            needed_theta: l_max + 1,
            needed_phi: 2 * l_max + 1,
            theta: grid.n_theta(),
            phi: grid.n_phi,
        });
    }
    if values.len() != grid.len() {
        return Err(Error::Parameter("sample count does not match the grid"));
    }
    let mut out = HarmonicCoefficients::zeros(l_max);
    let n_phi = grid.n_phi;
    let dphi = TWO_PI / n_phi as f64;
    let lm = l_max as i64;
    let mut ring_modes = vec![Complex64::new(0.0, 0.0); 2 * l_max + 1];
    for j in 0..grid.n_theta() {
        let ring = &values[j * n_phi..(j + 1) * n_phi];
        for m in -lm..=lm {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, v) in ring.iter().enumerate() {
                acc += v * Complex64::from_polar(1.0, -(m as f64) * k as f64 * dphi);
            }
            ring_modes[(m + lm) as usize] = acc * dphi;
        }
        let table = LegendreTable::new(l_max, grid.cos_theta[j], grid.theta[j].sin());
        let w = grid.weights[j];
        for l in 0..=l_max {
            for m in -(l as i64)..=(l as i64) {
                let ma = m.unsigned_abs() as usize;
                let sign = if m < 0 && ma % 2 == 1 { -1.0 } else { 1.0 };
                let p = table.get(l, ma) * sign * w;
                out.coeffs[lm_index(l, m)] += ring_modes[(m + lm) as usize] * p;
            }
        }
    }
    Ok(out)
}
