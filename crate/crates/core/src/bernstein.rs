//! Bernstein functions, subordinators and their first-passage inverses.
//!
//! A [`BernsteinSpec`] names one of four Laplace exponents with zero drift and
//! killing: stable `λ^α`, tempered stable `(λ+θ)^α − θ^α`, gamma `log(1+λ)` and
//! geometric stable `log(1+λ^α)`. Stable `α = 1` is accepted as the degenerate
//! classical clock `Φ(λ) = λ`, `L(t) = t`.
//!
//! Paths are simulated on a uniform operational-time grid with exact
//! increments, and `L(t)` is read off as the first grid time at which the path
//! exceeds `t`. The overshoot is at most one grid step.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use num_complex::Complex64;
use num_traits::Float;
use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use crate::laplace::{invert, invert_checked, DEFAULT_NODES};
use crate::special::gamma;
use crate::{Error, Result};

/// Laplace exponent of a driftless, killing-free subordinator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BernsteinSpec {
    Stable { alpha: f64 },
    Tempered { alpha: f64, theta: f64 },
    Gamma,
    GeoStable { alpha: f64 },
}

impl BernsteinSpec {
    pub fn stable(alpha: f64) -> Result<Self> {
        Self::Stable { alpha }.validated()
    }

    pub fn tempered(alpha: f64, theta: f64) -> Result<Self> {
        Self::Tempered { alpha, theta }.validated()
    }

    pub fn gamma() -> Self {
        Self::Gamma
    }

    pub fn geostable(alpha: f64) -> Result<Self> {
        Self::GeoStable { alpha }.validated()
    }

    /// Checks parameter ranges, then `Φ(0) = 0`, monotonicity and concavity on 100 points.
    pub fn validated(self) -> Result<Self> {
        match self {
            Self::Stable { alpha } | Self::GeoStable { alpha } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::Parameter("alpha must lie in (0, 1]"));
                }
            }
            Self::Tempered { alpha, theta } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::Parameter("tempered alpha must lie in (0, 1)"));
                }
                if !(theta > 0.0 && theta.is_finite()) {
                    return Err(Error::Parameter("tempering theta must be positive"));
                }
            }
            Self::Gamma => {}
        }
        if self.phi_real(0.0) != 0.0 {
            return Err(Error::Parameter("Phi(0) must vanish"));
        }
        let grid: Vec<f64> = (0..100).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 99.0)).collect();
        let vals: Vec<f64> = grid.iter().map(|&x| self.phi_real(x)).collect();
        for i in 1..vals.len() {
            if vals[i] < vals[i - 1] {
                return Err(Error::Parameter("Phi must be increasing"));
            }
        }
        for i in 1..vals.len() - 1 {
            let left = (vals[i] - vals[i - 1]) / (grid[i] - grid[i - 1]);
            let right = (vals[i + 1] - vals[i]) / (grid[i + 1] - grid[i]);
            if right > left * (1.0 + 1e-9) + 1e-15 {
                return Err(Error::Parameter("Phi must be concave"));
            }
        }
        Ok(self)
    }

    /// Index of the stable exponent where one exists.
    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Self::Stable { alpha } | Self::Tempered { alpha, .. } | Self::GeoStable { alpha } => Some(alpha),
            Self::Gamma => None,
        }
    }

    /// Whether this is stable with `α = 1`, i.e. `L(t) = t`.
    pub fn is_classical(&self) -> bool {
        matches!(*self, Self::Stable { alpha } if alpha == 1.0)
    }

    /// `Φ(λ)` for `Re λ ≥ 0`, principal branches throughout.
    pub fn phi(&self, lam: Complex64) -> Result<Complex64> {
        if lam.re < 0.0 || !lam.re.is_finite() || !lam.im.is_finite() {
            return Err(Error::Domain("Phi needs Re(lambda) >= 0"));
        }
        Ok(self.phi_continued(lam))
    }

    /// `Φ` continued analytically off the closed right half plane, as needed on
    /// inversion contours. Branch cuts lie on the negative real axis.
    pub fn phi_continued(&self, s: Complex64) -> Complex64 {
        match *self {
            Self::Stable { alpha } => {
                if alpha == 1.0 || s == Complex64::new(0.0, 0.0) {
                    s
                } else {
                    s.powf(alpha)
                }
            }
            Self::Tempered { alpha, theta } => (s + theta).powf(alpha) - theta.powf(alpha),
            Self::Gamma => (s + 1.0).ln(),
            Self::GeoStable { alpha } => {
                if s == Complex64::new(0.0, 0.0) {
                    s
                } else {
                    (s.powf(alpha) + 1.0).ln()
                }
            }
        }
    }

    /// `Φ(λ)` for real `λ ≥ 0`.
    pub fn phi_real(&self, lam: f64) -> f64 {
        match *self {
            Self::Stable { alpha } => lam.powf(alpha),
            Self::Tempered { alpha, theta } => (lam + theta).powf(alpha) - theta.powf(alpha),
            Self::Gamma => lam.ln_1p(),
            Self::GeoStable { alpha } => lam.powf(alpha).ln_1p(),
        }
    }

    /// Regular-variation data `(α, 𝓛(λ))` with `Φ(λ) = λ^α 𝓛(λ)` near zero,
    /// for the kinds where `α < 1` and `𝓛` is explicit.
    pub fn regular_variation(&self, lam: f64) -> Result<(f64, f64)> {
        match *self {
            Self::Stable { alpha } if alpha < 1.0 => Ok((alpha, 1.0)),
            Self::GeoStable { alpha } if alpha < 1.0 => {
                let p = lam.powf(alpha);
                Ok((alpha, p.ln_1p() / p))
            }
            Self::Stable { .. } | Self::GeoStable { .. } => {
                Err(Error::Unsupported("regular variation needs alpha < 1"))
            }
            Self::Tempered { .. } => Err(Error::Unsupported("tempered stable is regularly varying with index 0")),
            Self::Gamma => Err(Error::Unsupported("gamma is regularly varying with index 1")),
        }
    }

    /// Lévy tail `ν̄(t) = ν((t, ∞))`.
    ///
    /// Non-stable kinds are inverted numerically to `1e-6` relative accuracy,
    /// or `1e-12` absolute where the tail is exponentially small.
    pub fn levy_tail(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain("Levy tail needs t > 0"));
        }
        match *self {
            Self::Stable { alpha } if alpha == 1.0 => Ok(0.0),
            Self::Stable { alpha } => Ok(t.powf(-alpha) / gamma(1.0 - alpha)),
            _ => {
                let (v, _) = invert_checked(|s| self.phi_continued(s) / s, t, DEFAULT_NODES, 1e-6, 1e-6)?;
                Ok(v.re.max(0.0))
            }
        }
    }

    /// `N1(s) = ∫_0^s ν̄` and `N2(s) = ∫_0^s N1`.
    ///
    /// For stable `α = 1` the tail measure degenerates to a unit mass at the
    /// origin, so `N1 = 1` and `N2(s) = s` for `s > 0`.
    pub fn tail_integrals(&self, s: f64) -> (f64, f64) {
        if s <= 0.0 {
            return (0.0, 0.0);
        }
        match *self {
            Self::Stable { alpha } if alpha == 1.0 => (1.0, s),
            Self::Stable { alpha } => (
                s.powf(1.0 - alpha) / gamma(2.0 - alpha),
                s.powf(2.0 - alpha) / gamma(3.0 - alpha),
            ),
            _ => {
                let n1 = invert(|z| self.phi_continued(z) / (z * z), s, DEFAULT_NODES).re;
                let n2 = invert(|z| self.phi_continued(z) / (z * z * z), s, DEFAULT_NODES).re;
                (n1, n2)
            }
        }
    }

    /// Increment `S(s + ds) − S(s)`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, ds: f64, rng: &mut R) -> f64 {
        match *self {
            Self::Stable { alpha } if alpha == 1.0 => ds,
            Self::Stable { alpha } => ds.powf(1.0 / alpha) * unit_stable(alpha, rng),
            Self::Tempered { alpha, theta } => {
                let scale = ds.powf(1.0 / alpha);
                loop {
                    let x = scale * unit_stable(alpha, rng);
                    let u: f64 = rng.random();
                    if u <= (-theta * x).exp() {
                        return x;
                    }
                }
            }
            Self::Gamma => gamma_variate(ds, rng),
            Self::GeoStable { alpha } => {
                let g = gamma_variate(ds, rng);
                if alpha == 1.0 {
                    g
                } else {
                    g.powf(1.0 / alpha) * unit_stable(alpha, rng)
                }
            }
        }
    }
}

/// Positive stable variable with `E[e^{−λS}] = e^{−λ^α}`, by Kanter's representation.
pub fn unit_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = PI * rng.sample::<f64, _>(Open01);
    let e: f64 = Exp1.sample(rng);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = ((1.0 - alpha) * u).sin() / e;
    a * b.powf((1.0 - alpha) / alpha)
}

fn gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0).expect("positive gamma shape").sample(rng)
}

impl fmt::Display for BernsteinSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Stable { alpha } => write!(f, "stable:{alpha}"),
            Self::Tempered { alpha, theta } => write!(f, "tempered:{alpha},{theta}"),
            Self::Gamma => f.write_str("gamma"),
            Self::GeoStable { alpha } => write!(f, "geostable:{alpha}"),
        }
    }
}

impl FromStr for BernsteinSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(s.to_string());
        let (kind, args) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a)),
            None => (s.trim(), None),
        };
        let nums: Vec<f64> = match args {
            Some(a) => a
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        match (kind, nums.as_slice()) {
            ("stable", &[a]) => Self::stable(a),
            ("tempered", &[a, th]) => Self::tempered(a, th),
            ("gamma", &[]) => Ok(Self::Gamma),
            ("geostable", &[a]) => Self::geostable(a),
            _ => Err(bad()),
        }
    }
}

/// One subordinator trajectory on the grid `s_k = k · ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorPath {
    ds: f64,
    values: Vec<f64>,
}

impl SubordinatorPath {
    /// Values must start at 0 and be nondecreasing.
    pub fn from_values(ds: f64, values: Vec<f64>) -> Result<Self> {
        if !(ds > 0.0) {
            return Err(Error::Parameter("grid step must be positive"));
        }
        if values.first() != Some(&0.0) {
            return Err(Error::Parameter("path must start at 0"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parameter("path values must be nondecreasing"));
        }
        Ok(Self { ds, values })
    }

    pub fn ds(&self) -> f64 {
        self.ds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn s_grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| k as f64 * self.ds)
    }

    pub fn s_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.ds
    }

    pub fn max_value(&self) -> f64 {
        *self.values.last().expect("nonempty path")
    }

    /// Continue the path with fresh increments until operational time `s_max`.
    pub fn extend<R: Rng + ?Sized>(&mut self, spec: &BernsteinSpec, s_max: f64, rng: &mut R) {
        let target = (s_max / self.ds).ceil() as usize;
        let mut v = self.max_value();
        while self.values.len() <= target {
            v += spec.sample_increment(self.ds, rng);
            self.values.push(v);
        }
    }
}

/// Simulate `S` on `[0, s_max]` with step `ds`.
pub fn sample_path<R: Rng + ?Sized>(
    spec: &BernsteinSpec,
    s_max: f64,
    ds: f64,
    rng: &mut R,
) -> Result<SubordinatorPath> {
    if !(ds > 0.0) || !(s_max >= ds) {
        return Err(Error::Parameter("need ds > 0 and s_max >= ds"));
    }
    let mut path = SubordinatorPath { ds, values: vec![0.0] };
    path.extend(spec, s_max, rng);
    Ok(path)
}

/// A draw of `L(t)` at grid resolution `resolution`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseSample {
    pub t: f64,
    pub l_value: f64,
    pub resolution: f64,
}

/// First grid time at which the path exceeds `t`.
pub fn invert_path(path: &SubordinatorPath, t: f64) -> Result<InverseSample> {
    if !(t > 0.0) {
        return Err(Error::Domain("inversion time must be positive"));
    }
    let k = path.values.partition_point(|&v| v <= t);
    if k == path.values.len() {
        return Err(Error::PathExhausted {
            max_value: path.max_value(),
            t,
        });
    }
    Ok(InverseSample {
        t,
        l_value: k as f64 * path.ds,
        resolution: path.ds,
    })
}

/// Default operational grid step for inverting at time `t`.
pub fn default_ds(t: f64) -> f64 {
    t * 1e-3
}

/// Draw `L(t)` by simulating the path step by step until it exceeds `t`.
///
/// Equivalent in law to [`sample_path`] followed by [`invert_path`], with the
/// horizon starting at `s_max` and doubled up to ten times before giving up.
pub fn sample_inverse<R: Rng + ?Sized>(
    spec: &BernsteinSpec,
    t: f64,
    ds: f64,
    s_max: f64,
    rng: &mut R,
) -> Result<InverseSample> {
    if !(t > 0.0) {
        return Err(Error::Domain("inversion time must be positive"));
    }
    if !(ds > 0.0) || !(s_max >= ds) {
        return Err(Error::Parameter("need ds > 0 and s_max >= ds"));
    }
    if spec.is_classical() {
        return Ok(InverseSample {
            t,
            l_value: t,
            resolution: 0.0,
        });
    }
    let mut horizon = (s_max / ds).ceil() as u64;
    let mut value = 0.0;
    let mut k: u64 = 0;
    for _ in 0..=10 {
        while k < horizon {
            k += 1;
            value += spec.sample_increment(ds, rng);
            if value > t {
                return Ok(InverseSample {
                    t,
                    l_value: k as f64 * ds,
                    resolution: ds,
                });
            }
        }
        horizon *= 2;
    }
    Err(Error::PathExhausted { max_value: value, t })
}

/// Normalized histogram on `[0, edges.last()]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }

    /// Equal bins on `[0, max + pad]`; needs at least one sample and one bin.
    pub fn from_samples(samples: &[f64], n_bins: usize, pad: f64) -> Self {
        let top = samples.iter().cloned().fold(0.0, f64::max) * (1.0 + 1e-12) + pad;
        let width = top / n_bins as f64;
        let mut mass = vec![0.0; n_bins];
        for &x in samples {
            mass[((x / width) as usize).min(n_bins - 1)] += 1.0;
        }
        for m in &mut mass {
            *m /= samples.len() as f64;
        }
        let edges = (0..=n_bins).map(|i| i as f64 * width).collect();
        Self { edges, mass }
    }

    /// Mass divided by bin width.
    pub fn density(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .zip(&self.mass)
            .map(|(w, m)| m / (w[1] - w[0]))
            .collect()
    }
}

/// Histogram of `n_samples` draws of `L(t)` on `n_bins` equal bins.
pub fn inverse_density_estimate<R: Rng + ?Sized>(
    spec: &BernsteinSpec,
    t: f64,
    ds: f64,
    n_samples: usize,
    n_bins: usize,
    rng: &mut R,
) -> Result<Histogram> {
    if n_samples < 10_000 || n_bins == 0 {
        return Err(Error::Parameter("need at least 10^4 samples and one bin"));
    }
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        samples.push(sample_inverse(spec, t, ds, 10.0 * t.max(1.0), rng)?.l_value);
    }
    Ok(Histogram::from_samples(&samples, n_bins, ds))
}

impl From<&BernsteinSpec> for String {
    fn from(spec: &BernsteinSpec) -> String {
        spec.to_string()
    }
}
