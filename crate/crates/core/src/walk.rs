//! Monte Carlo simulation of drifted spherical Brownian motion and of its
//! time change by an inverse subordinator.
//!
//! Brownian motion with generator `Δ` (no factor ½) is approximated by a
//! geodesic random walk: at each step a tangent Gaussian with variance
//! `2h` per direction is drawn and followed along the great circle. The drift
//! `μ ∂_φ` commutes with `Δ`, so it is applied exactly at the end as a
//! rotation by `μ s` in longitude.

use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bernstein::sample_inverse;
use crate::eigenfunction::mc_default_ds;
use crate::montecarlo::{sample_paths, ComplexMoments, Executor};
use crate::solver::Clock;
use crate::sphere::{rotate_longitude, synthesize, HarmonicCoefficients, SphericalPoint};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    /// Operational-time step of the geodesic walk.
    pub step_h: f64,
    pub mu: f64,
    pub t_phys: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl WalkConfig {
    fn check(&self) -> Result<()> {
        if !(self.step_h > 0.0) {
            return Err(Error::Parameter("walk step must be positive"));
        }
        if !(self.t_phys >= 0.0) || !self.mu.is_finite() {
            return Err(Error::Parameter("need t >= 0 and finite drift"));
        }
        Ok(())
    }
}

/// Endpoint of one time-changed path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub endpoint: SphericalPoint,
    /// Operational time consumed, a draw of `L(t)`.
    pub l_value: f64,
    /// Number of geodesic steps taken.
    pub steps: usize,
}

type Vec3 = [f64; 3];

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: Vec3) -> Vec3 {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn geodesic_step<R: Rng + ?Sized>(p: Vec3, scale: f64, rng: &mut R) -> Vec3 {
    let a = if p[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let e1 = normalize(cross(a, p));
    let e2 = cross(p, e1);
    let x1: f64 = StandardNormal.sample(rng);
    let x2: f64 = StandardNormal.sample(rng);
    let v = [
        scale * (x1 * e1[0] + x2 * e2[0]),
        scale * (x1 * e1[1] + x2 * e2[1]),
        scale * (x1 * e1[2] + x2 * e2[2]),
    ];
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if r == 0.0 {
        return p;
    }
    let (sr, cr) = r.sin_cos();
    let k = sr / r;
    normalize([cr * p[0] + k * v[0], cr * p[1] + k * v[1], cr * p[2] + k * v[2]])
}

fn walk<R: Rng + ?Sized>(x0: SphericalPoint, s: f64, step_h: f64, rng: &mut R) -> (SphericalPoint, usize) {
    if s <= 0.0 {
        return (x0, 0);
    }
    let n = (s / step_h).ceil() as usize;
    let scale = (2.0 * s / n as f64).sqrt();
    let mut p = x0.to_vector();
    for _ in 0..n {
        p = geodesic_step(p, scale, rng);
    }
    (SphericalPoint::from_vector(p), n)
}

/// Brownian motion run for operational time `s`, in `⌈s/h⌉` equal steps.
pub fn simulate_bm<R: Rng + ?Sized>(x0: SphericalPoint, s: f64, step_h: f64, rng: &mut R) -> SphericalPoint {
    walk(x0, s, step_h, rng).0
}

/// [`simulate_bm`] followed by the longitude rotation `μ s`.
pub fn simulate_drifted<R: Rng + ?Sized>(
    x0: SphericalPoint,
    s: f64,
    mu: f64,
    step_h: f64,
    rng: &mut R,
) -> SphericalPoint {
    rotate_longitude(simulate_bm(x0, s, step_h, rng), mu * s)
}

/// Euler scheme for the colatitude/longitude SDE
/// `dθ = cot θ dt + √2 dw₁`, `dφ = √2 / sin θ dw₂`.
///
/// Only meaningful while paths stay away from the poles; kept to cross-check
/// the intrinsic walk.
pub fn simulate_bm_coordinates<R: Rng + ?Sized>(
    x0: SphericalPoint,
    s: f64,
    step_h: f64,
    rng: &mut R,
) -> SphericalPoint {
    if s <= 0.0 {
        return x0;
    }
    let n = (s / step_h).ceil() as usize;
    let h = s / n as f64;
    let sq = (2.0 * h).sqrt();
    let (mut theta, mut phi) = (x0.theta(), x0.phi());
    for _ in 0..n {
        let x1: f64 = StandardNormal.sample(rng);
        let x2: f64 = StandardNormal.sample(rng);
        let st = theta.sin();
        theta += theta.cos() / st * h + sq * x1;
        phi += sq / st * x2;
        if theta < 0.0 {
            theta = -theta;
            phi += core::f64::consts::PI;
        } else if theta > core::f64::consts::PI {
            theta = 2.0 * core::f64::consts::PI - theta;
            phi += core::f64::consts::PI;
        }
    }
    SphericalPoint::new_unchecked(theta, phi)
}

/// One endpoint of the drifted motion on the clock `L(t)`.
pub fn simulate_time_changed<R: Rng + ?Sized>(
    x0: SphericalPoint,
    t_phys: f64,
    clock: &Clock,
    mu: f64,
    step_h: f64,
    ds: f64,
    rng: &mut R,
) -> Result<PathSample> {
    if !(t_phys > 0.0) {
        return Err(Error::Domain("physical time must be positive"));
    }
    let l = match clock {
        Clock::Classical => t_phys,
        Clock::Nonlocal(spec) => sample_inverse(spec, t_phys, ds, 10.0 * t_phys.max(1.0), rng)?.l_value,
    };
    let (end, steps) = walk(x0, l, step_h, rng);
    Ok(PathSample {
        endpoint: rotate_longitude(end, mu * l),
        l_value: l,
        steps,
    })
}

/// `cfg.n_paths` endpoints, reproducible for a given seed.
pub fn simulate_endpoints<E: Executor>(
    x0: SphericalPoint,
    cfg: &WalkConfig,
    clock: &Clock,
    ds: Option<f64>,
    exec: &E,
) -> Result<Vec<PathSample>> {
    cfg.check()?;
    let ds = ds.unwrap_or(mc_default_ds(cfg.t_phys));
    sample_paths(exec, cfg.n_paths, cfg.seed, |rng| {
        simulate_time_changed(x0, cfg.t_phys, clock, cfg.mu, cfg.step_h, ds, rng)
    })
}

/// Sample mean with componentwise standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: Complex64,
    pub se_re: f64,
    pub se_im: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn stderr(&self) -> f64 {
        self.se_re.hypot(self.se_im)
    }
}

impl From<ComplexMoments> for McEstimate {
    fn from(m: ComplexMoments) -> Self {
        let (se_re, se_im) = m.stderr_parts();
        Self {
            value: m.mean(),
            se_re,
            se_im,
            n: m.n,
        }
    }
}

/// Mean of `f(endpoint)` over the samples.
pub fn average_over(f: &HarmonicCoefficients, samples: &[PathSample]) -> McEstimate {
    ComplexMoments::of(samples.iter().map(|p| synthesize(f, p.endpoint))).into()
}

/// `E_x[f(W(t))]` estimated from `cfg.n_paths` simulated endpoints.
pub fn empirical_expectation<E: Executor>(
    f: &HarmonicCoefficients,
    x0: SphericalPoint,
    cfg: &WalkConfig,
    clock: &Clock,
    ds: Option<f64>,
    exec: &E,
) -> Result<McEstimate> {
    if cfg.n_paths < 100 {
        return Err(Error::Parameter("need at least 100 paths"));
    }
    let samples = simulate_endpoints(x0, cfg, clock, ds, exec)?;
    Ok(average_over(f, &samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::BernsteinSpec;
    use crate::montecarlo::{chunk_rng, Sequential};
    use crate::sphere::ylm;
    use core::f64::consts::PI;

    fn y(l: usize, m: i64) -> HarmonicCoefficients {
        HarmonicCoefficients::single(l, l, m, Complex64::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn zero_time_is_identity() {
        let x0 = SphericalPoint::new(0.4, 1.0).unwrap();
        let mut rng = chunk_rng(0, 0);
        assert_eq!(simulate_bm(x0, 0.0, 1e-3, &mut rng), x0);
    }

    #[test]
    fn endpoints_stay_on_the_sphere() {
        let mut rng = chunk_rng(1, 0);
        let mut p = SphericalPoint::new(0.01, 0.0).unwrap().to_vector();
        for _ in 0..10_000 {
            p = geodesic_step(p, 0.05, &mut rng);
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degree_one_decay() {
        let x0 = SphericalPoint::new(0.6, 0.3).unwrap();
        let cfg = WalkConfig {
            step_h: 1e-3,
            mu: 1.5,
            t_phys: 0.3,
            n_paths: 20_000,
            seed: 7,
        };
        let samples = simulate_endpoints(x0, &cfg, &Clock::Classical, None, &Sequential).unwrap();
        for (l, m) in [(1usize, 0i64), (1, 1)] {
            let est = average_over(&y(l, m), &samples);
            let lam = crate::eigenfunction::eigenvalue(l, m, cfg.mu);
            let exact = (lam * cfg.t_phys).exp() * ylm(l, m, x0).unwrap();
            assert!((est.value - exact).norm() < 3.0 * est.stderr() + 5e-3, "({l},{m})");
        }
    }

    #[test]
    fn drift_is_an_exact_rotation() {
        let x0 = SphericalPoint::new(1.0, 2.0).unwrap();
        let a = simulate_bm(x0, 0.4, 1e-2, &mut chunk_rng(3, 0));
        let b = simulate_drifted(x0, 0.4, 2.5, 1e-2, &mut chunk_rng(3, 0));
        assert_eq!(rotate_longitude(a, 1.0), b);
        let c = simulate_drifted(x0, 0.4, 0.0, 1e-2, &mut chunk_rng(3, 0));
        assert_eq!(a, c);
    }

    #[test]
    fn colatitude_law_ignores_drift() {
        let x0 = SphericalPoint::new(1.0, 0.0).unwrap();
        let mk = |mu| WalkConfig {
            step_h: 1e-2,
            mu,
            t_phys: 0.5,
            n_paths: 5_000,
            seed: 11,
        };
        let a = simulate_endpoints(x0, &mk(0.0), &Clock::Classical, None, &Sequential).unwrap();
        let b = simulate_endpoints(x0, &mk(5.0), &Clock::Classical, None, &Sequential).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.endpoint.theta(), q.endpoint.theta());
        }
    }

    #[test]
    fn near_uniform_after_long_time() {
        let x0 = SphericalPoint::north_pole();
        let cfg = WalkConfig {
            step_h: 1e-2,
            mu: 0.0,
            t_phys: 5.0,
            n_paths: 10_000,
            seed: 5,
        };
        let samples = simulate_endpoints(x0, &cfg, &Clock::Classical, None, &Sequential).unwrap();
        for l in 1..=3usize {
            for m in -(l as i64)..=(l as i64) {
                let est = average_over(&y(l, m), &samples);
                assert!(est.value.norm() < 3.0 * est.stderr() + 1e-3, "({l},{m})");
            }
        }
    }

    #[test]
    fn coordinate_scheme_agrees_away_from_poles() {
        let x0 = SphericalPoint::new(1.2, 0.0).unwrap();
        let n = 20_000;
        let mut rng = chunk_rng(9, 0);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let z = simulate_bm_coordinates(x0, 0.05, 1e-4, &mut rng).theta().cos();
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = (-0.1f64).exp() * 1.2f64.cos();
        assert!((mean - exact).abs() < 3.0 * se + 1e-3);
    }

    #[test]
    fn constant_functions_have_no_spread() {
        let c = HarmonicCoefficients::single(0, 0, 0, Complex64::new(2.0 * (PI).sqrt(), 0.0)).unwrap();
        let cfg = WalkConfig {
            step_h: 1e-2,
            mu: 0.0,
            t_phys: 0.2,
            n_paths: 500,
            seed: 1,
        };
        let spec = BernsteinSpec::stable(0.5).unwrap();
        let est = empirical_expectation(
            &c,
            SphericalPoint::north_pole(),
            &cfg,
            &Clock::Nonlocal(spec),
            None,
            &Sequential,
        )
        .unwrap();
        assert!((est.value.re - 1.0).abs() < 1e-12);
        assert!(est.stderr() < 1e-7);
        let few = WalkConfig { n_paths: 10, ..cfg };
        assert!(empirical_expectation(
            &c,
            SphericalPoint::north_pole(),
            &few,
            &Clock::Classical,
            None,
            &Sequential
        )
        .is_err());
    }

    #[test]
    fn time_changed_degree_one() {
        let spec = BernsteinSpec::stable(0.5).unwrap();
        let x0 = SphericalPoint::new(0.5, 0.0).unwrap();
        let cfg = WalkConfig {
            step_h: 2e-3,
            mu: 2.0,
            t_phys: 0.5,
            n_paths: 10_000,
            seed: 21,
        };
        let samples = simulate_endpoints(x0, &cfg, &Clock::Nonlocal(spec), None, &Sequential).unwrap();
        assert!(samples.iter().all(|p| p.l_value > 0.0));
        let est = average_over(&y(1, 0), &samples);
        let e = crate::mittag_leffler::mittag_leffler(0.5, Complex64::new(-2.0 * 0.5f64.sqrt(), 0.0)).unwrap();
        let exact = e * ylm(1, 0, x0).unwrap();
        assert!((est.value - exact).norm() < 3.0 * est.stderr() + 2e-3);
    }
}
