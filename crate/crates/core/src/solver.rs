//! Spectral solutions of the backward and forward Kolmogorov equations for the
//! drifted spherical Brownian motion on the classical or a nonlocal clock,
//! together with transition densities and diagnostics.

use alloc::collections::{btree_map, BTreeMap};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use num_complex::Complex64;
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bernstein::BernsteinSpec;
use crate::eigenfunction::{
    self, efun, efun_series, inverse_samples, mc_default_ds, mc_mean, EfunValue, EigenfunctionQuery,
    EigenfunctionTable, Engine, TailTable,
};
use crate::montecarlo::{EqualAreaBins, Executor, Sequential};
use crate::special::{
    gauss_legendre, gauss_legendre_interval, legendre_polynomials, log_space, regression_slope, zeta,
};
use crate::sphere::{
    lm_index, rotate_longitude, synthesize, ylm_all, HarmonicCoefficients, LegendreTable, QuadratureGrid,
    SphericalPoint,
};
use crate::{Error, Result};

/// Input spectra are truncated where the discarded energy drops below this.
pub const TRUNCATION_TOL: f64 = 1e-10;

/// Half-width of the excluded band around `θ_y ∈ {θ_x, π − θ_x}`.
pub const GUARD: f64 = 0.02;

/// Operational clock of the motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clock {
    Classical,
    Nonlocal(BernsteinSpec),
}

impl Clock {
    /// Bernstein function of the clock; the classical clock is stable of order one.
    pub fn spec(&self) -> BernsteinSpec {
        match self {
            Self::Classical => BernsteinSpec::Stable { alpha: 1.0 },
            Self::Nonlocal(s) => *s,
        }
    }

    pub fn is_classical(&self) -> bool {
        self.spec().is_classical()
    }
}

impl fmt::Display for Clock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Classical => f.write_str("classical"),
            Self::Nonlocal(s) => s.fmt(f),
        }
    }
}

impl FromStr for Clock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "classical" => Ok(Self::Classical),
            other => Ok(Self::Nonlocal(other.parse()?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub mu: f64,
    pub clock: Clock,
    pub l_max: usize,
}

impl ModelParams {
    pub fn new(mu: f64, clock: Clock, l_max: usize) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Parameter("drift must be finite"));
        }
        if l_max < 1 {
            return Err(Error::Parameter("l_max must be at least 1"));
        }
        if let Clock::Nonlocal(s) = clock {
            s.validated()?;
        }
        Ok(Self { mu, clock, l_max })
    }

    pub fn spec(&self) -> BernsteinSpec {
        self.clock.spec()
    }

    fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..*self }
    }
}

/// `u(t)` in coefficient form.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSnapshot {
    pub t: f64,
    pub coeffs: HarmonicCoefficients,
    pub params: ModelParams,
    /// Energy of the input above the retained degree, `Σ_{ℓ>L} A_ℓ(f)`.
    pub truncation_tail: f64,
    /// Largest engine error on a retained coefficient, scaled by `|f_{ℓ,m}|`.
    pub engine_err: f64,
}

/// `λ_{ℓ,m} = iμm − ℓ(ℓ+1)`.
pub fn eigenvalue(l: usize, m: i64, mu: f64) -> Result<Complex64> {
    if m.unsigned_abs() as usize > l {
        return Err(Error::Domain("|m| must not exceed l"));
    }
    Ok(eigenfunction::eigenvalue(l, m, mu))
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain("time must be nonnegative"));
    }
    Ok(())
}

/// Keep the smallest degree (at most `l_max`) whose discarded energy is
/// below [`TRUNCATION_TOL`].
fn truncate(f: &HarmonicCoefficients, l_max: usize) -> (HarmonicCoefficients, f64) {
    let l = f.effective_l_max(TRUNCATION_TOL).0.min(l_max);
    let tail = f.power_spectrum().a.iter().skip(l + 1).sum();
    (f.with_l_max(l), tail)
}

/// `u_{ℓ,m}(t) = f_{ℓ,m} e^{λ_{ℓ,m} t}`.
pub fn solve_classical(f: &HarmonicCoefficients, mu: f64, t: f64) -> Result<SolutionSnapshot> {
    check_time(t)?;
    let params = ModelParams::new(mu, Clock::Classical, f.l_max().max(1))?;
    let coeffs = f.map(|l, m, c| c * (eigenfunction::eigenvalue(l, m, mu) * t).exp());
    Ok(SolutionSnapshot {
        t,
        coeffs,
        params,
        truncation_tail: 0.0,
        engine_err: 0.0,
    })
}

/// Lazily evaluated `e_Φ(t; λ_{ℓ,m})` for the modes a computation touches.
struct ModeCache {
    spec: BernsteinSpec,
    mu: f64,
    t: f64,
    engine: Engine,
    samples: Option<Vec<f64>>,
    cache: BTreeMap<(usize, i64), EfunValue>,
}

impl ModeCache {
    fn new<E: Executor>(spec: BernsteinSpec, mu: f64, t: f64, engine: Engine, exec: &E) -> Result<Self> {
        let samples = match engine {
            Engine::MonteCarlo { samples, ds, seed } if t > 0.0 => Some(inverse_samples(
                exec,
                &spec,
                t,
                ds.unwrap_or(mc_default_ds(t)),
                samples,
                seed,
            )?),
            _ => None,
        };
        Ok(Self {
            spec,
            mu,
            t,
            engine,
            samples,
            cache: BTreeMap::new(),
        })
    }

    fn get(&mut self, l: usize, m: i64) -> Result<EfunValue> {
        let key = if self.mu == 0.0 { 0 } else { m.abs() };
        let v = match self.cache.get(&(l, key)) {
            Some(v) => *v,
            None => {
                let lam = eigenfunction::eigenvalue(l, key, self.mu);
                let v = if lam == Complex64::new(0.0, 0.0) || self.t == 0.0 {
                    EfunValue {
                        value: Complex64::new(1.0, 0.0),
                        err: 0.0,
                    }
                } else if let Some(ls) = &self.samples {
                    mc_mean(ls, lam)
                } else {
                    efun(&EigenfunctionQuery {
                        spec: self.spec,
                        t: self.t,
                        lam,
                        engine: self.engine,
                    })?
                };
                self.cache.insert((l, key), v);
                v
            }
        };
        Ok(if m < 0 && key != 0 {
            EfunValue {
                value: v.value.conj(),
                err: v.err,
            }
        } else {
            v
        })
    }
}

/// `u_{ℓ,m}(t) = f_{ℓ,m} e_Φ(t; λ_{ℓ,m})` with the preferred engine.
pub fn solve_nonlocal(f: &HarmonicCoefficients, params: &ModelParams, t: f64) -> Result<SolutionSnapshot> {
    solve_nonlocal_with(f, params, t, Engine::preferred(&params.spec()), &Sequential)
}

/// As [`solve_nonlocal`] with an explicit engine and executor.
/// Only modes present in `f` are evaluated.
pub fn solve_nonlocal_with<E: Executor>(
    f: &HarmonicCoefficients,
    params: &ModelParams,
    t: f64,
    engine: Engine,
    exec: &E,
) -> Result<SolutionSnapshot> {
    check_time(t)?;
    let (g, truncation_tail) = truncate(f, params.l_max);
    let mut modes = ModeCache::new(params.spec(), params.mu, t, engine, exec)?;
    let mut coeffs = HarmonicCoefficients::zeros(g.l_max());
    let mut engine_err: f64 = 0.0;
    for (l, m, c) in g.iter() {
        if c == Complex64::new(0.0, 0.0) {
            continue;
        }
        let e = modes.get(l, m)?;
        coeffs.set(l, m, c * e.value);
        engine_err = engine_err.max(c.norm() * e.err);
    }
    Ok(SolutionSnapshot {
        t,
        coeffs,
        params: *params,
        truncation_tail,
        engine_err,
    })
}

/// Dispatches on the clock: exact exponentials for the classical one.
pub fn solve(f: &HarmonicCoefficients, params: &ModelParams, t: f64) -> Result<SolutionSnapshot> {
    match params.clock {
        Clock::Classical => {
            let (g, tail) = truncate(f, params.l_max);
            let mut snap = solve_classical(&g, params.mu, t)?;
            snap.params = *params;
            snap.truncation_tail = tail;
            Ok(snap)
        }
        Clock::Nonlocal(_) => solve_nonlocal(f, params, t),
    }
}

/// Rejects coefficients that are not those of a probability density:
/// not real, mass different from one, or negative on a sampling grid.
pub fn check_density(f: &HarmonicCoefficients) -> Result<()> {
    if !f.is_real_valued(1e-10) {
        return Err(Error::NotADensity("coefficients do not describe a real function"));
    }
    let mass = f.get(0, 0).re * (4.0 * PI).sqrt();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::NotADensity("total mass differs from one"));
    }
    let grid = QuadratureGrid::for_degree(f.l_max() + 4);
    let values: Vec<f64> = grid.points().map(|p| synthesize(f, p).re).collect();
    let peak = values.iter().cloned().fold(1.0 / (4.0 * PI), f64::max);
    if values.iter().any(|&v| v < -1e-8 * peak) {
        return Err(Error::NotADensity("negative values"));
    }
    Ok(())
}

/// Law of the motion at time `t` started from the density `f`: coefficients
/// are multiplied by `e_Φ(t; −iμm − ℓ(ℓ+1))`.
pub fn forward_evolve(f: &HarmonicCoefficients, params: &ModelParams, t: f64) -> Result<SolutionSnapshot> {
    forward_evolve_with(f, params, t, Engine::preferred(&params.spec()), &Sequential)
}

pub fn forward_evolve_with<E: Executor>(
    f: &HarmonicCoefficients,
    params: &ModelParams,
    t: f64,
    engine: Engine,
    exec: &E,
) -> Result<SolutionSnapshot> {
    check_density(f)?;
    let mut snap = solve_nonlocal_with(f, &params.with_mu(-params.mu), t, engine, exec)?;
    snap.params = *params;
    Ok(snap)
}

/// Nonzero coefficients of `g` with `e_Φ(k·dt; λ_{ℓ,m})`, `k = 0..=n`.
fn mode_series(
    g: &HarmonicCoefficients,
    spec: &BernsteinSpec,
    mu: f64,
    dt: f64,
    n: usize,
    keep: impl Fn(usize, i64) -> bool,
) -> Result<Vec<(usize, i64, Complex64, Vec<Complex64>)>> {
    let mut cache: BTreeMap<(usize, i64), Vec<Complex64>> = BTreeMap::new();
    let mut out = Vec::new();
    for (l, m, c) in g.iter() {
        if c == Complex64::new(0.0, 0.0) || !keep(l, m) {
            continue;
        }
        let key = if mu == 0.0 { 0 } else { m.abs() };
        if let btree_map::Entry::Vacant(e) = cache.entry((l, key)) {
            let s = efun_series(spec, eigenfunction::eigenvalue(l, key, mu), dt, n)?;
            e.insert(s);
        }
        let s = &cache[&(l, key)];
        let s = if m < 0 && key != 0 {
            s.iter().map(|v| v.conj()).collect()
        } else {
            s.clone()
        };
        out.push((l, m, c, s));
    }
    Ok(out)
}

fn grid_steps(dt: f64, t_eval: &[f64]) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(Error::Parameter("time step must be positive"));
    }
    let t_end = t_eval.iter().cloned().fold(0.0, f64::max);
    Ok((t_end / dt).round() as usize)
}

/// `max |D^Φ u(t, x) − (Δ + μ∂_φ) u(t, x)|` over `t_eval × xs`.
///
/// `D^Φ` acts by product integration on `u(k·dt, x)`; the generator is
/// applied spectrally. Each `t` is rounded to the nearest grid point.
pub fn pde_residual(
    f: &HarmonicCoefficients,
    params: &ModelParams,
    dt: f64,
    t_eval: &[f64],
    xs: &[SphericalPoint],
) -> Result<f64> {
    let n = grid_steps(dt, t_eval)?;
    let spec = params.spec();
    let (g, _) = truncate(f, params.l_max);
    let modes = mode_series(&g, &spec, params.mu, dt, n, |_, _| true)?;
    let tails = TailTable::new(&spec, dt, n)?;
    let mut worst: f64 = 0.0;
    for &x in xs {
        let y = ylm_all(g.l_max(), x);
        let mut u = vec![Complex64::new(0.0, 0.0); n + 1];
        for (l, m, c, e) in &modes {
            let cy = c * y[lm_index(*l, *m)];
            for (uk, ek) in u.iter_mut().zip(e) {
                *uk += cy * ek;
            }
        }
        for &t in t_eval {
            let j = (t / dt).round() as usize;
            let lhs = tails.derivative(&u, j)?;
            let rhs: Complex64 = modes
                .iter()
                .map(|(l, m, c, e)| eigenfunction::eigenvalue(*l, *m, params.mu) * c * e[j] * y[lm_index(*l, *m)])
                .sum();
            worst = worst.max((lhs - rhs).norm());
        }
    }
    Ok(worst)
}

/// Gap between the two sides of the weak formulation tested against `h`:
/// `d/dt ∫ conj(h) (ν̄ ∗ (u − f)) dσ` by product integration in time and
/// quadrature in space, and `∫ (𝒢_μ u) conj(h) dσ` spectrally.
pub fn weak_form_residual(
    f: &HarmonicCoefficients,
    h: &HarmonicCoefficients,
    params: &ModelParams,
    dt: f64,
    t_eval: &[f64],
) -> Result<f64> {
    let n = grid_steps(dt, t_eval)?;
    let spec = params.spec();
    let (g, _) = truncate(f, params.l_max);
    let l = g.l_max().max(h.l_max());
    let grid = QuadratureGrid::for_degree(l);
    // w_{ℓ,m} = ∫ conj(h) Y_{ℓ,m} dσ
    let mut w = vec![Complex64::new(0.0, 0.0); (g.l_max() + 1).pow(2)];
    for (j, p) in grid.points().enumerate() {
        let hv = synthesize(h, p).conj() * grid.weight(j / grid.n_phi());
        for (wi, yi) in w.iter_mut().zip(ylm_all(g.l_max(), p)) {
            *wi += hv * yi;
        }
    }
    let scale = w.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let modes = mode_series(&g, &spec, params.mu, dt, n, |l, m| {
        w[lm_index(l, m)].norm() > 1e-13 * scale.max(1e-300)
    })?;
    let mut series = vec![Complex64::new(0.0, 0.0); n + 1];
    for (l, m, c, e) in &modes {
        let cw = c * w[lm_index(*l, *m)];
        for (sk, ek) in series.iter_mut().zip(e) {
            *sk += cw * ek;
        }
    }
    let tails = TailTable::new(&spec, dt, n)?;
    let mut worst: f64 = 0.0;
    for &t in t_eval {
        let j = (t / dt).round() as usize;
        let lhs = tails.derivative(&series, j)?;
        let rhs: Complex64 = modes
            .iter()
            .map(|(l, m, c, e)| eigenfunction::eigenvalue(*l, *m, params.mu) * c * e[j] * h.get(*l, *m).conj())
            .sum();
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

/// A density value with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue {
    /// Clipped at zero.
    pub value: f64,
    /// Amount removed by clipping a negative raw value.
    pub clipped: f64,
    /// Bound on the discarded part of the series.
    pub tail_bound: f64,
    /// Engine error: propagated eigenfunction error, or one Monte Carlo standard error.
    pub err: f64,
}

impl DensityValue {
    fn from_raw(raw: f64, tail_bound: f64, err: f64) -> Self {
        Self {
            value: raw.max(0.0),
            clipped: (-raw).max(0.0),
            tail_bound,
            err,
        }
    }

    /// Whether the truncation bound exceeds `tol`.
    pub fn needs_warning(&self, tol: f64) -> bool {
        self.tail_bound > tol
    }
}

/// `min(sin|θx − θy|, sin(θx + θy))`: lower bound for `sin` of the angle
/// between `x` and any longitude rotation of `y`.
fn min_sine(x: SphericalPoint, y: SphericalPoint) -> f64 {
    (x.theta() - y.theta()).abs().sin().min((x.theta() + y.theta()).sin())
}

/// Whether `θ_y` lies within `guard` of `θ_x` or of `π − θ_x`.
pub fn in_forbidden_band(x: SphericalPoint, y: SphericalPoint, guard: f64) -> bool {
    (y.theta() - x.theta()).abs() < guard || (x.theta() + y.theta() - PI).abs() < guard
}

/// Transition density `p(t, y | x) = Σ e_Φ(t; λ_{ℓ,m}) Y_{ℓ,m}(x) conj(Y_{ℓ,m}(y))`
/// truncated at `params.l_max`, with the eigenfunction table computed once.
#[derive(Debug, Clone)]
pub struct DensityEvaluator {
    params: ModelParams,
    t: f64,
    table: EigenfunctionTable,
    // Σ_{ℓ>L} (2ℓ+1)/(4π) e_Φ(t; −ℓ(ℓ+1)) ℓ^{−1/2}, partly estimated
    tail_sum: f64,
    err_sum: f64,
}

impl DensityEvaluator {
    pub fn new(params: &ModelParams, t: f64, engine: Engine) -> Result<Self> {
        Self::new_with(params, t, engine, &Sequential)
    }

    pub fn new_with<E: Executor>(params: &ModelParams, t: f64, engine: Engine, exec: &E) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain("density needs t > 0"));
        }
        let spec = params.spec();
        let l_max = params.l_max;
        let table = EigenfunctionTable::compute_with(&spec, params.mu, t, l_max, engine, exec)?;
        let err_sum = (0..=l_max)
            .map(|l| {
                let worst = (0..=l as i64).map(|m| table.get(l, m).err).fold(0.0, f64::max);
                (2 * l + 1) as f64 / (4.0 * PI) * worst
            })
            .sum();
        let tail_sum = density_tail(&spec, t, l_max)?;
        Ok(Self {
            params: *params,
            t,
            table,
            tail_sum,
            err_sum,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn table(&self) -> &EigenfunctionTable {
        &self.table
    }

    /// The truncated series, without the band check or clipping.
    pub fn raw(&self, x: SphericalPoint, y: SphericalPoint) -> f64 {
        let l_max = self.params.l_max;
        let tx = LegendreTable::from_theta(l_max, x.theta());
        let ty = LegendreTable::from_theta(l_max, y.theta());
        let dphi = x.phi() - y.phi();
        let mut sum = 0.0;
        for m in 0..=l_max {
            let phase = Complex64::from_polar(1.0, m as f64 * dphi);
            for l in m..=l_max {
                let pp = tx.get(l, m) * ty.get(l, m);
                let e = self.table.get(l, m as i64).value;
                sum += if m == 0 { pp * e.re } else { 2.0 * pp * (e * phase).re };
            }
        }
        sum
    }

    /// Bound on the discarded degrees via `|P_ℓ(cos ψ)| ≤ sqrt(2 / (π ℓ sin ψ))`.
    pub fn tail_bound(&self, x: SphericalPoint, y: SphericalPoint) -> f64 {
        let s = min_sine(x, y);
        if s <= 0.0 {
            return f64::INFINITY;
        }
        (2.0 / (PI * s)).sqrt() * self.tail_sum
    }

    /// `p(t, y | x)`; fails inside the forbidden band.
    pub fn eval(&self, x: SphericalPoint, y: SphericalPoint) -> Result<DensityValue> {
        if in_forbidden_band(x, y, GUARD) {
            return Err(Error::ForbiddenBand { guard: GUARD });
        }
        Ok(DensityValue::from_raw(
            self.raw(x, y),
            self.tail_bound(x, y),
            self.err_sum,
        ))
    }

    /// `∫ p(t, y | x) dσ(y)` by Gauss quadrature whose rings avoid the band.
    ///
    /// Once the ring spacing drops below the band width (around `l_max = 80`
    /// for the default guard) no such rule exists and `ForbiddenBand` is returned.
    pub fn normalization(&self, x: SphericalPoint) -> Result<f64> {
        let l_max = self.params.l_max;
        for n_theta in (l_max + 1)..(l_max + 200) {
            let (z, w) = gauss_legendre(n_theta);
            let thetas: Vec<f64> = z.iter().map(|z| z.clamp(-1.0, 1.0).acos()).collect();
            let probe = |th: f64| SphericalPoint::new_unchecked(th, 0.0);
            if thetas.iter().any(|&th| in_forbidden_band(x, probe(th), GUARD)) {
                continue;
            }
            let n_phi = 2 * l_max + 1;
            let dphi = 2.0 * PI / n_phi as f64;
            let mut total = 0.0;
            for (th, wj) in thetas.iter().zip(&w) {
                let ring: f64 = (0..n_phi)
                    .map(|k| self.raw(x, SphericalPoint::new_unchecked(*th, k as f64 * dphi)))
                    .sum();
                total += wj * ring * dphi;
            }
            return Ok(total);
        }
        Err(Error::ForbiddenBand { guard: GUARD })
    }

    /// Probability of each equal-area bin under `p(t, · | x)`, from the
    /// truncated series integrated exactly in `φ` and by Gauss rules in `θ`.
    pub fn bin_masses(&self, x: SphericalPoint, bins: &EqualAreaBins) -> Vec<f64> {
        let l_max = self.params.l_max;
        let yx = ylm_all(l_max, x);
        let n_nodes = l_max + 16;
        let mut out = Vec::with_capacity(bins.len());
        let mut rings: Vec<Vec<f64>> = Vec::new();
        for ring in 0..bins.rings {
            let (t0, t1, _, _) = bins.bounds(ring * bins.sectors);
            // ∫ P̄_ℓ^m(cos θ) sin θ dθ over the ring
            let (nodes, weights) = gauss_legendre_interval(n_nodes, t0, t1);
            let mut acc = vec![0.0; (l_max + 1) * (l_max + 2) / 2];
            for (th, w) in nodes.iter().zip(&weights) {
                let tab = LegendreTable::from_theta(l_max, *th);
                let ws = w * th.sin();
                let mut k = 0;
                for l in 0..=l_max {
                    for m in 0..=l {
                        acc[k] += ws * tab.get(l, m);
                        k += 1;
                    }
                }
            }
            rings.push(acc);
        }
        for i in 0..bins.len() {
            let (_, _, p0, p1) = bins.bounds(i);
            let ring = &rings[i / bins.sectors];
            let mut mass = Complex64::new(0.0, 0.0);
            let mut k = 0;
            for l in 0..=l_max {
                for m in 0..=l {
                    let theta_part = ring[k];
                    k += 1;
                    let signed: &[i64] = if m == 0 { &[0] } else { &[m as i64, -(m as i64)] };
                    for &sm in signed {
                        // ∫ conj(Y_{ℓ,sm}) over the bin
                        let sign = if sm < 0 && m % 2 == 1 { -1.0 } else { 1.0 };
                        let phi_part = if sm == 0 {
                            Complex64::new(p1 - p0, 0.0)
                        } else {
                            let a = Complex64::new(0.0, -(sm as f64));
                            ((a * p1).exp() - (a * p0).exp()) / a
                        };
                        let e = self.table.get(l, sm).value;
                        mass += e * yx[lm_index(l, sm)] * phi_part * theta_part * sign;
                    }
                }
            }
            out.push(mass.re);
        }
        out
    }
}

/// `Σ_{ℓ>L} (2ℓ+1)/(4π) e_Φ(t; −ℓ(ℓ+1)) ℓ^{−1/2}`: exact terms up to `4(L+1)`,
/// beyond that `e_Φ(t; −λ) ≤ K/λ` with `K` the largest `λ e_Φ` seen.
fn density_tail(spec: &BernsteinSpec, t: f64, l_max: usize) -> Result<f64> {
    let engine = Engine::preferred(spec);
    let last = 4 * (l_max + 1);
    let mut near = 0.0;
    let mut k: f64 = 0.0;
    for l in (l_max + 1)..=last {
        let lam = (l * (l + 1)) as f64;
        let e = efun(&EigenfunctionQuery {
            spec: *spec,
            t,
            lam: Complex64::new(-lam, 0.0),
            engine,
        })?
        .value
        .re
        .abs();
        near += (2 * l + 1) as f64 / (4.0 * PI) * e / (l as f64).sqrt();
        k = k.max(lam * e);
    }
    let far = k / PI / (last as f64).sqrt();
    Ok(near + far)
}

/// How [`transition_density`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityEngine {
    /// Harmonic series with the given eigenfunction engine.
    Series(Engine),
    /// Average of the classical Legendre kernel over clock samples; also
    /// defined inside the forbidden band.
    McLegendre { samples: usize, seed: u64, ds: Option<f64> },
}

/// `p(t, y | x)` for a single pair of points.
pub fn transition_density(
    params: &ModelParams,
    t: f64,
    x: SphericalPoint,
    y: SphericalPoint,
    engine: DensityEngine,
) -> Result<DensityValue> {
    transition_density_with(params, t, x, y, engine, &Sequential)
}

pub fn transition_density_with<E: Executor>(
    params: &ModelParams,
    t: f64,
    x: SphericalPoint,
    y: SphericalPoint,
    engine: DensityEngine,
    exec: &E,
) -> Result<DensityValue> {
    match engine {
        DensityEngine::Series(e) => {
            if in_forbidden_band(x, y, GUARD) {
                return Err(Error::ForbiddenBand { guard: GUARD });
            }
            DensityEvaluator::new_with(params, t, e, exec)?.eval(x, y)
        }
        DensityEngine::McLegendre { samples, seed, ds } => {
            if !(t > 0.0) {
                return Err(Error::Domain("density needs t > 0"));
            }
            let ls = match params.clock {
                Clock::Classical => vec![t; samples.max(2)],
                Clock::Nonlocal(spec) => {
                    inverse_samples(exec, &spec, t, ds.unwrap_or(mc_default_ds(t)), samples, seed)?
                }
            };
            let mut sum = 0.0;
            let mut sq = 0.0;
            let mut tail = 0.0;
            for &l in &ls {
                let yr = rotate_longitude(y, -params.mu * l);
                let (v, tb) = heat_kernel(l, x.dot(&yr));
                sum += v;
                sq += v * v;
                tail += tb;
            }
            let n = ls.len() as f64;
            let mean = sum / n;
            let se = ((sq / n - mean * mean).max(0.0) / (n - 1.0)).sqrt();
            Ok(DensityValue::from_raw(mean, tail / n, se))
        }
    }
}

/// `Σ_ℓ (2ℓ+1)/(4π) e^{−ℓ(ℓ+1)s} P_ℓ(c)`, summed until the terms are
/// negligible, with a bound on anything left beyond the cut-off.
fn heat_kernel(s: f64, c: f64) -> (f64, f64) {
    const MAX_DEGREE: usize = 20_000;
    let c = c.clamp(-1.0, 1.0);
    let mut p_prev = 1.0;
    let mut p = c;
    let mut sum = 1.0 / (4.0 * PI);
    for l in 1..=MAX_DEGREE {
        let lf = l as f64;
        let w = (2.0 * lf + 1.0) / (4.0 * PI) * (-lf * (lf + 1.0) * s).exp();
        sum += w * p;
        if w < 1e-17 {
            return (sum, 0.0);
        }
        let next = ((2.0 * lf + 1.0) * c * p - lf * p_prev) / (lf + 1.0);
        p_prev = p;
        p = next;
    }
    let tail: f64 = (MAX_DEGREE + 1..)
        .map(|l| (2 * l + 1) as f64 / (4.0 * PI) * (-((l * (l + 1)) as f64) * s).exp())
        .take_while(|w| *w > 1e-17)
        .take(1_000_000)
        .sum();
    (sum, tail)
}

/// Classical density `Σ e^{λ_{ℓ,m} t} Y_{ℓ,m}(x) conj(Y_{ℓ,m}(y))` up to
/// `l_max`; `tail_bound` is `Σ_{ℓ>l_max} (2ℓ+1)/(4π) e^{−ℓ(ℓ+1)t}`.
pub fn classical_density(mu: f64, t: f64, x: SphericalPoint, y: SphericalPoint, l_max: usize) -> Result<DensityValue> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain("density needs t > 0"));
    }
    if !mu.is_finite() {
        return Err(Error::Parameter("drift must be finite"));
    }
    let tx = LegendreTable::from_theta(l_max, x.theta());
    let ty = LegendreTable::from_theta(l_max, y.theta());
    let dphi = x.phi() - y.phi() + mu * t;
    let mut sum = 0.0;
    for m in 0..=l_max {
        let cosm = (m as f64 * dphi).cos();
        for l in m..=l_max {
            let decay = (-((l * (l + 1)) as f64) * t).exp();
            let pp = tx.get(l, m) * ty.get(l, m) * decay;
            sum += if m == 0 { pp } else { 2.0 * pp * cosm };
        }
    }
    let tail: f64 = (l_max + 1..)
        .map(|l| (2 * l + 1) as f64 / (4.0 * PI) * (-((l * (l + 1)) as f64) * t).exp())
        .take_while(|w| *w > 1e-300)
        .take(10_000_000)
        .sum();
    Ok(DensityValue::from_raw(sum, tail, 0.0))
}

/// Indicator of the polar cap `θ < θ₀`, expanded exactly up to `l_max`.
pub fn cap_indicator(theta0: f64, l_max: usize) -> Result<HarmonicCoefficients> {
    if !(theta0 > 0.0 && theta0 <= PI) {
        return Err(Error::Domain("cap angle must lie in (0, pi]"));
    }
    let z0 = theta0.cos();
    let p = legendre_polynomials(l_max + 1, z0);
    let mut c = HarmonicCoefficients::zeros(l_max);
    for l in 0..=l_max {
        // ∫_{z0}^1 P_ℓ(z) dz
        let integral = if l == 0 {
            1.0 - z0
        } else {
            (p[l - 1] - p[l + 1]) / (2 * l + 1) as f64
        };
        let norm = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
        c.set(l, 0, Complex64::new(2.0 * PI * norm * integral, 0.0));
    }
    Ok(c)
}

/// A random real function with `A_ℓ` decaying like `ℓ^{−2s−2}` and zero mean,
/// scaled to unit `H^s` seminorm.
pub fn random_hs(s: f64, l_max: usize, seed: u64) -> Result<HarmonicCoefficients> {
    if !s.is_finite() || l_max < 1 {
        return Err(Error::Parameter("need finite s and l_max >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = HarmonicCoefficients::zeros(l_max);
    for l in 1..=l_max {
        let amp = (l as f64).powf(-s - 1.0);
        let z: f64 = StandardNormal.sample(&mut rng);
        c.set(l, 0, Complex64::new(amp * z, 0.0));
        for m in 1..=l as i64 {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let v = Complex64::new(a, b) * (amp / 2f64.sqrt());
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            c.set(l, m, v);
            c.set(l, -m, v.conj() * sign);
        }
    }
    let norm = crate::sphere::sobolev_seminorm(&c, s);
    Ok(c.map(|_, _, v| v / norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Convergent => "convergent",
            Self::Divergent => "divergent",
            Self::Inconclusive => "inconclusive",
        }
    }
}

/// Partial sums of `Σ ℓ^{2p} A_ℓ` at the requested cut-offs.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityRow {
    /// `None` for the row describing the initial datum itself.
    pub epsilon: Option<f64>,
    pub exponent: f64,
    pub partial_sums: Vec<f64>,
    /// Consecutive ratios of the partial sums.
    pub ratios: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub s: f64,
    pub t: f64,
    pub l_max_list: Vec<usize>,
    pub rows: Vec<RegularityRow>,
}

fn classify(ratios: &[f64]) -> Verdict {
    if !ratios.is_empty() && ratios.iter().all(|&r| r > 2.0) {
        Verdict::Divergent
    } else if ratios.last().is_some_and(|&r| r < 1.1) {
        Verdict::Convergent
    } else {
        Verdict::Inconclusive
    }
}

fn partial_sums(terms: impl Iterator<Item = (usize, f64)>, cuts: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut sums = Vec::with_capacity(cuts.len());
    let mut acc = 0.0;
    let mut next = 0;
    for (l, v) in terms {
        acc += v;
        while next < cuts.len() && cuts[next] == l {
            sums.push(acc);
            next += 1;
        }
    }
    let ratios = sums.windows(2).map(|w| w[1] / w[0]).collect();
    (sums, ratios)
}

/// Regularity of `u(t)` for the zonal datum `f_ℓ = 1/(ℓ^{s+½} ln ℓ)`, `ℓ ≥ 2`,
/// which lies in `H^s` but in no `H^{s+δ}`.
///
/// One row per `ε` holds partial sums of `Σ ℓ^{2(s+2+ε)} A_ℓ(u(t))`; a final row
/// holds `Σ (1 + ℓ^{2s}) A_ℓ(f)`.
pub fn regularity_probe(
    s: f64,
    clock: &Clock,
    t: f64,
    epsilons: &[f64],
    l_max_list: &[usize],
) -> Result<RegularityReport> {
    if !(s > 1.0) || !(t > 0.0) {
        return Err(Error::Domain("need s > 1 and t > 0"));
    }
    if l_max_list.is_empty() || l_max_list[0] < 2 || l_max_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("cut-offs must be increasing and at least 2"));
    }
    let spec = clock.spec();
    let engine = Engine::preferred(&spec);
    let top = *l_max_list.last().unwrap();
    let f: Vec<f64> = (2..=top)
        .map(|l| 1.0 / ((l as f64).powf(s + 0.5) * (l as f64).ln()))
        .collect();
    let mut u2 = Vec::with_capacity(f.len());
    for (i, fl) in f.iter().enumerate() {
        let l = i + 2;
        let lam = Complex64::new(-((l * (l + 1)) as f64), 0.0);
        let e = efun(&EigenfunctionQuery { spec, t, lam, engine })?.value.re;
        u2.push(fl * fl * e * e);
    }
    let mut rows = Vec::new();
    for &eps in epsilons {
        let p = s + 2.0 + eps;
        let terms = u2
            .iter()
            .enumerate()
            .map(|(i, a)| (i + 2, (i as f64 + 2.0).powf(2.0 * p) * a));
        let (partial_sums, ratios) = partial_sums(terms, l_max_list);
        rows.push(RegularityRow {
            epsilon: Some(eps),
            exponent: p,
            verdict: classify(&ratios),
            partial_sums,
            ratios,
        });
    }
    let terms = f
        .iter()
        .enumerate()
        .map(|(i, fl)| (i + 2, (1.0 + (i as f64 + 2.0).powf(2.0 * s)) * fl * fl));
    let (partial_sums, ratios) = partial_sums(terms, l_max_list);
    rows.push(RegularityRow {
        epsilon: None,
        exponent: s,
        verdict: classify(&ratios),
        partial_sums,
        ratios,
    });
    Ok(RegularityReport {
        s,
        t,
        l_max_list: l_max_list.to_vec(),
        rows,
    })
}

/// Distance to equilibrium `|E_x f(W(t)) − (4π)^{-1}∫ f dσ|` and the power-law
/// envelopes around it.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub t: Vec<f64>,
    /// Largest gap over the test functions.
    pub empirical: Vec<f64>,
    /// Gap for `f = Y_{1,0}` alone.
    pub y10_gap: Vec<f64>,
    pub upper: Vec<f64>,
    /// Envelope valid off the equatorial band; `None` at the equator.
    pub lower_polar: Option<Vec<f64>>,
    /// Envelope valid for every `x` when `μ = 0`.
    pub lower_uniform: Option<Vec<f64>>,
    /// Estimates of `sup` and `inf` over `t ≥ 1` of `e_Φ(t; −2) t^α / 𝓛(1/t)`.
    pub c_upper: f64,
    pub c_lower: f64,
    /// Log-log slope of `y10_gap` over the grid points in `[10, 10⁴]`.
    pub slope: f64,
}

impl GapReport {
    /// Pointwise maximum of the available lower envelopes.
    pub fn lower(&self) -> Option<Vec<f64>> {
        match (&self.lower_polar, &self.lower_uniform) {
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x.max(*y)).collect()),
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        }
    }

    /// Whether `lower ≤ empirical ≤ upper` at every `t ≥ 1`, up to relative slack `rel`.
    pub fn sandwich_holds(&self, rel: f64) -> bool {
        let lower = self.lower();
        (0..self.t.len()).filter(|&i| self.t[i] >= 1.0).all(|i| {
            let e = self.empirical[i];
            let up = e <= self.upper[i] * (1.0 + rel);
            let lo = lower.as_ref().is_none_or(|l| l[i] <= e * (1.0 + rel));
            up && lo
        })
    }
}

/// Evaluates the gap on `t_grid` for `Y_{1,0}`, `Y_{1,1}` and `n_random`
/// real functions of unit `H^s` seminorm, and the envelopes
/// `C̄ (√ζ(2s−1) + √ζ(2s)) / √(2π) · t^{−α} 𝓛(1/t)` above and
/// `√(3/4π) C̲ 𝓛(1/t) t^{−α} |cos θ_x|`, `√(3/π) C̲ 𝓛(1/t) t^{−α} / 4` below.
pub fn convergence_gap(
    x: SphericalPoint,
    params: &ModelParams,
    t_grid: &[f64],
    s: f64,
    n_random: usize,
    seed: u64,
) -> Result<GapReport> {
    if !(s > 1.0) {
        return Err(Error::Domain("the upper envelope needs s > 1"));
    }
    let spec = params.spec();
    spec.regular_variation(1.0)?;
    let engine = Engine::preferred(&spec);
    let e2 = |t: f64| -> Result<f64> {
        Ok(efun(&EigenfunctionQuery {
            spec,
            t,
            lam: Complex64::new(-2.0, 0.0),
            engine,
        })?
        .value
        .re)
    };
    let mut c_upper: f64 = 0.0;
    let mut c_lower = f64::INFINITY;
    for t in log_space(1.0, 1e4, 41) {
        let (alpha, slow) = spec.regular_variation(1.0 / t)?;
        let c = e2(t)? * t.powf(alpha) / slow;
        c_upper = c_upper.max(c);
        c_lower = c_lower.min(c);
    }

    const TEST_DEGREE: usize = 8;
    let mut tests = vec![
        HarmonicCoefficients::single(TEST_DEGREE, 1, 0, Complex64::new(1.0, 0.0))?,
        HarmonicCoefficients::single(TEST_DEGREE, 1, 1, Complex64::new(1.0, 0.0))?,
    ];
    for k in 0..n_random {
        tests.push(random_hs(s, TEST_DEGREE, seed.wrapping_add(k as u64))?);
    }
    let yx = ylm_all(TEST_DEGREE, x);
    let zeta_part = (zeta(2.0 * s - 1.0).sqrt() + zeta(2.0 * s).sqrt()) / (2.0 * PI).sqrt();
    let eps = (PI / 2.0 - x.theta()).abs();

    let mut report = GapReport {
        t: t_grid.to_vec(),
        empirical: Vec::new(),
        y10_gap: Vec::new(),
        upper: Vec::new(),
        lower_polar: (eps > 1e-9).then(Vec::new),
        lower_uniform: (params.mu == 0.0).then(Vec::new),
        c_upper,
        c_lower,
        slope: f64::NAN,
    };
    for &t in t_grid {
        let mut modes = ModeCache::new(spec, params.mu, t, engine, &Sequential)?;
        let mut worst: f64 = 0.0;
        for (k, f) in tests.iter().enumerate() {
            let mut gap = Complex64::new(0.0, 0.0);
            for (l, m, c) in f.iter() {
                if l == 0 || c == Complex64::new(0.0, 0.0) {
                    continue;
                }
                gap += c * modes.get(l, m)?.value * yx[lm_index(l, m)];
            }
            if k == 0 {
                report.y10_gap.push(gap.norm());
            }
            worst = worst.max(gap.norm());
        }
        report.empirical.push(worst);
        let (alpha, slow) = spec.regular_variation(1.0 / t)?;
        let decay = t.powf(-alpha) * slow;
        report.upper.push(c_upper * zeta_part * decay);
        if let Some(v) = report.lower_polar.as_mut() {
            v.push((3.0 / (4.0 * PI)).sqrt() * c_lower * decay * eps.sin());
        }
        if let Some(v) = report.lower_uniform.as_mut() {
            v.push((3.0 / PI).sqrt() * c_lower * decay / 4.0);
        }
    }
    let (lt, lg): (Vec<f64>, Vec<f64>) = t_grid
        .iter()
        .zip(&report.y10_gap)
        .filter(|(t, g)| (10.0..=1e4).contains(*t) && **g > 0.0)
        .map(|(t, g)| (t.ln(), g.ln()))
        .unzip();
    if lt.len() >= 2 {
        report.slope = regression_slope(&lt, &lg);
    }
    Ok(report)
}

/// `Y_{ℓ,m}` as a coefficient vector of degree `ℓ`.
pub fn harmonic(l: usize, m: i64) -> Result<HarmonicCoefficients> {
    HarmonicCoefficients::single(l.max(1), l, m, Complex64::new(1.0, 0.0))
}

impl From<&Clock> for String {
    fn from(c: &Clock) -> Self {
        alloc::format!("{c}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mittag_leffler::mittag_leffler;
    use crate::sphere::{analyze, sobolev_seminorm};
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn stable(a: f64) -> Clock {
        Clock::Nonlocal(BernsteinSpec::stable(a).unwrap())
    }

    fn pt(theta: f64, phi: f64) -> SphericalPoint {
        SphericalPoint::new(theta, phi).unwrap()
    }

    #[test]
    fn eigenvalue_law() {
        assert_eq!(eigenvalue(0, 0, 5.0).unwrap(), c(0.0));
        assert_eq!(eigenvalue(1, 1, 3.0).unwrap(), Complex64::new(-2.0, 3.0));
        assert_eq!(eigenvalue(2, -1, 1.0).unwrap(), Complex64::new(-6.0, -1.0));
        assert!(eigenvalue(1, 2, 0.0).is_err());
    }

    #[test]
    fn clock_strings_round_trip() {
        for s in ["classical", "stable:0.5", "gamma", "tempered:0.7,1.5"] {
            let c: Clock = s.parse().unwrap();
            assert_eq!(String::from(&c), s);
        }
        assert!("nonsense".parse::<Clock>().is_err());
    }

    #[test]
    fn model_params_validation() {
        assert!(ModelParams::new(0.0, Clock::Classical, 0).is_err());
        assert!(ModelParams::new(f64::NAN, Clock::Classical, 4).is_err());
        assert!(ModelParams::new(1.0, stable(0.5), 4).is_ok());
    }

    #[test]
    fn classical_degree_one() {
        let f = harmonic(1, 0).unwrap();
        let u = solve_classical(&f, 2.0, 0.7).unwrap();
        assert!((u.coeffs.get(1, 0) - c((-1.4f64).exp())).norm() < 1e-15);
        let u0 = solve_classical(&f, 2.0, 0.0).unwrap();
        assert_eq!(u0.coeffs, f);
    }

    #[test]
    fn classical_semigroup() {
        let f = random_hs(1.0, 10, 3).unwrap();
        let a = solve_classical(&solve_classical(&f, 1.5, 0.2).unwrap().coeffs, 1.5, 0.3).unwrap();
        let b = solve_classical(&f, 1.5, 0.5).unwrap();
        for (x, y) in a.coeffs.as_slice().iter().zip(b.coeffs.as_slice()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn nonlocal_degree_one_is_mittag_leffler() {
        let params = ModelParams::new(1.0, stable(0.5), 8).unwrap();
        let f = harmonic(1, 0).unwrap();
        let u = solve_nonlocal(&f, &params, 0.5).unwrap();
        let exact = mittag_leffler(0.5, c(-2.0 * 0.5f64.sqrt())).unwrap();
        assert!((u.coeffs.get(1, 0) - exact).norm() < 1e-12);
        assert_eq!(u.coeffs.l_max(), 1);
        assert_eq!(solve_nonlocal(&f, &params, 0.0).unwrap().coeffs, f);
    }

    #[test]
    fn order_one_matches_classical() {
        let f = random_hs(1.5, 6, 9).unwrap();
        let params = ModelParams::new(2.0, stable(1.0), 6).unwrap();
        let a = solve_nonlocal(&f, &params, 0.4).unwrap();
        let b = solve_classical(&f, 2.0, 0.4).unwrap();
        for (x, y) in a.coeffs.as_slice().iter().zip(b.coeffs.as_slice()) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn truncation_tail_reported() {
        let f = random_hs(0.5, 20, 1).unwrap();
        let params = ModelParams::new(0.0, stable(0.5), 5).unwrap();
        let u = solve_nonlocal(&f, &params, 1.0).unwrap();
        let exact: f64 = f.power_spectrum().a[6..].iter().sum();
        assert_eq!(u.coeffs.l_max(), 5);
        assert!((u.truncation_tail - exact).abs() < 1e-15);
    }

    #[test]
    fn engines_agree_on_solutions() {
        let f = random_hs(1.0, 3, 4).unwrap();
        let params = ModelParams::new(1.0, stable(0.7), 3).unwrap();
        let a = solve_nonlocal_with(&f, &params, 0.8, Engine::ClosedForm, &Sequential).unwrap();
        let b = solve_nonlocal_with(&f, &params, 0.8, Engine::laplace(), &Sequential).unwrap();
        for (x, y) in a.coeffs.as_slice().iter().zip(b.coeffs.as_slice()) {
            assert!((x - y).norm() < 1e-6);
        }
    }

    #[test]
    fn forward_evolution_keeps_uniform_law() {
        let uniform = HarmonicCoefficients::single(4, 0, 0, c(1.0 / (4.0 * PI).sqrt())).unwrap();
        let params = ModelParams::new(2.0, stable(0.5), 4).unwrap();
        for t in [0.1, 1.0, 10.0] {
            let u = forward_evolve(&uniform, &params, t).unwrap();
            assert_eq!(u.coeffs.get(0, 0), uniform.get(0, 0));
            assert!(u.coeffs.as_slice()[1..].iter().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn forward_evolution_rejects_non_densities() {
        let params = ModelParams::new(0.0, stable(0.5), 4).unwrap();
        assert!(matches!(
            forward_evolve(&harmonic(1, 0).unwrap(), &params, 1.0),
            Err(Error::NotADensity(_))
        ));
        let mut f = HarmonicCoefficients::single(2, 0, 0, c(1.0 / (4.0 * PI).sqrt())).unwrap();
        f.set(1, 0, c(1.0));
        assert!(matches!(forward_evolve(&f, &params, 1.0), Err(Error::NotADensity(_))));
    }

    #[test]
    fn duality_between_forward_and_backward() {
        let params = ModelParams::new(1.3, stable(0.6), 4).unwrap();
        let f = random_hs(1.0, 4, 10).unwrap();
        let h = random_hs(1.0, 4, 11).unwrap();
        let t = 0.7;
        let fwd = solve_nonlocal(&f, &params.with_mu(-params.mu), t).unwrap();
        let bwd = solve_nonlocal(&h, &params, t).unwrap();
        // ∫ (P*_t f) h = ∫ f (P_t h)
        let lhs = fwd.coeffs.pairing(&h);
        let rhs = f.pairing(&bwd.coeffs);
        assert!((lhs - rhs).norm() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn pde_residual_vanishes_for_constants() {
        let f = HarmonicCoefficients::single(0, 0, 0, c(1.0)).unwrap();
        let params = ModelParams::new(1.0, stable(0.5), 4).unwrap();
        let r = pde_residual(&f, &params, 1e-2, &[0.5, 1.0], &[pt(0.3, 0.1)]).unwrap();
        assert!(r < 1e-14);
    }

    #[test]
    fn pde_residual_small_for_smooth_data() {
        let f = harmonic(3, 2).unwrap();
        let params = ModelParams::new(1.0, stable(0.5), 8).unwrap();
        let xs = [pt(0.9, 0.4), pt(2.0, 4.0)];
        let coarse = pde_residual(&f, &params, 4e-3, &[0.2, 0.5], &xs).unwrap();
        let fine = pde_residual(&f, &params, 2e-3, &[0.2, 0.5], &xs).unwrap();
        assert!(fine < 5e-3, "{fine}");
        assert!(fine < coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn weak_form_trivial_pair() {
        let f = HarmonicCoefficients::single(0, 0, 0, c(1.0)).unwrap();
        let params = ModelParams::new(1.0, stable(0.5), 4).unwrap();
        let r = weak_form_residual(&f, &f, &params, 1e-2, &[0.5]).unwrap();
        assert!(r < 1e-13);
    }

    #[test]
    fn weak_form_contracts() {
        let f = harmonic(2, 1).unwrap();
        let params = ModelParams::new(1.0, stable(0.5), 4).unwrap();
        let a = weak_form_residual(&f, &f, &params, 4e-3, &[0.2, 0.5]).unwrap();
        let b = weak_form_residual(&f, &f, &params, 2e-3, &[0.2, 0.5]).unwrap();
        assert!(b < a && b < 1e-2, "{a} {b}");
    }

    #[test]
    fn cap_matches_quadrature() {
        let theta0 = 0.8;
        let exact = cap_indicator(theta0, 6).unwrap();
        assert!((exact.get(0, 0).re - 2.0 * PI * (1.0 - theta0.cos()) / (4.0 * PI).sqrt()).abs() < 1e-14);
        // analyse a smooth polynomial in cos θ weighted by the cap on a fine grid
        let grid = QuadratureGrid::new(2000, 13);
        let vals = grid.sample(|p| if p.theta() < theta0 { c(1.0) } else { c(0.0) });
        let approx = analyze(&grid, &vals, 6).unwrap();
        for l in 0..=6 {
            assert!((exact.get(l, 0) - approx.get(l, 0)).norm() < 5e-3, "l={l}");
            assert!(approx.get(l, 1).norm() < 1e-12);
        }
    }

    #[test]
    fn random_hs_is_real_and_normalized() {
        for s in [0.5, 1.0, 2.5] {
            let f = random_hs(s, 12, 99).unwrap();
            assert!(f.is_real_valued(1e-14));
            assert!((sobolev_seminorm(&f, s) - 1.0).abs() < 1e-12);
            assert_eq!(f.get(0, 0), c(0.0));
        }
        assert_eq!(random_hs(1.0, 5, 1).unwrap(), random_hs(1.0, 5, 1).unwrap());
    }

    #[test]
    fn classical_density_oracles() {
        let x = pt(0.7, 1.1);
        // x = y, μ = 0: Σ (2ℓ+1)/(4π) e^{−ℓ(ℓ+1)}
        let direct: f64 = (0..60)
            .map(|l| (2 * l + 1) as f64 / (4.0 * PI) * (-((l * (l + 1)) as f64)).exp())
            .sum();
        let v = classical_density(0.0, 1.0, x, x, 60).unwrap();
        assert!((v.value - direct).abs() < 1e-14);
        assert!(v.tail_bound < 1e-300);
        // drift acts by rotating the target point
        let y = pt(1.9, 0.2);
        let (mu, t) = (2.5, 0.3);
        let a = classical_density(mu, t, x, y, 60).unwrap().value;
        let b = classical_density(0.0, t, x, rotate_longitude(y, -mu * t), 60)
            .unwrap()
            .value;
        let c2 = classical_density(-mu, t, y, x, 60).unwrap().value;
        assert!((a - b).abs() < 1e-12 && (a - c2).abs() < 1e-12);
        assert!(classical_density(0.0, 0.01, x, y, 10).unwrap().needs_warning(1e-8));
    }

    #[test]
    fn classical_density_integrates_to_one() {
        let x = pt(0.4, 2.0);
        let grid = QuadratureGrid::for_degree(60);
        let vals = grid.sample(|y| c(classical_density(1.0, 0.1, x, y, 60).unwrap().value));
        assert!((grid.integrate(&vals).re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn nonlocal_density_properties() {
        let params = ModelParams::new(1.5, stable(0.5), 40).unwrap();
        let ev = DensityEvaluator::new(&params, 0.5, Engine::ClosedForm).unwrap();
        let x = pt(0.8, 0.3);
        assert!((ev.normalization(x).unwrap() - 1.0).abs() < 1e-10);
        let y = pt(2.0, 4.0);
        let p = ev.eval(x, y).unwrap();
        let back = DensityEvaluator::new(&params.with_mu(-1.5), 0.5, Engine::ClosedForm).unwrap();
        let q = back.eval(y, x).unwrap();
        assert!((p.value - q.value).abs() < 1e-12);
        assert!(p.value > 0.0 && p.tail_bound.is_finite());
        assert!(matches!(ev.eval(x, pt(0.81, 2.0)), Err(Error::ForbiddenBand { .. })));
        assert!(matches!(
            ev.eval(x, pt(PI - 0.8, 2.0)),
            Err(Error::ForbiddenBand { .. })
        ));
        let masses = ev.bin_masses(x, &EqualAreaBins::default());
        assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn series_and_legendre_engines_agree() {
        let params = ModelParams::new(1.0, stable(0.5), 80).unwrap();
        let (x, y) = (pt(0.5, 0.0), pt(1.6, 1.0));
        let a = transition_density(&params, 0.5, x, y, DensityEngine::Series(Engine::ClosedForm)).unwrap();
        let b = transition_density(
            &params,
            0.5,
            x,
            y,
            DensityEngine::McLegendre {
                samples: 20_000,
                seed: 3,
                ds: None,
            },
        )
        .unwrap();
        assert!(
            (a.value - b.value).abs() < 3.0 * b.err + a.tail_bound + 1e-3,
            "{a:?} {b:?}"
        );
    }

    #[test]
    fn bin_masses_match_classical_quadrature() {
        let params = ModelParams::new(0.7, Clock::Classical, 40).unwrap();
        let x = pt(1.0, 0.5);
        let ev = DensityEvaluator::new(&params, 0.2, Engine::ClosedForm).unwrap();
        let bins = EqualAreaBins::default();
        let masses = ev.bin_masses(x, &bins);
        for i in [0, 13, 30, 47] {
            let (t0, t1, p0, p1) = bins.bounds(i);
            let (tn, tw) = gauss_legendre_interval(60, t0, t1);
            let (pn, pw) = gauss_legendre_interval(60, p0, p1);
            let mut q = 0.0;
            for (th, a) in tn.iter().zip(&tw) {
                for (ph, b) in pn.iter().zip(&pw) {
                    let y = SphericalPoint::new_unchecked(*th, *ph);
                    q += a * b * th.sin() * classical_density(0.7, 0.2, x, y, 40).unwrap().value;
                }
            }
            assert!((q - masses[i]).abs() < 1e-9, "bin {i}: {q} vs {}", masses[i]);
        }
    }

    #[test]
    fn regularity_dichotomy() {
        let r = regularity_probe(1.5, &stable(0.5), 1.0, &[0.0, 0.5], &[10, 100, 1000]).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.rows[1].verdict, Verdict::Divergent);
        assert!(r.rows[0].ratios.last().unwrap() < &1.1);
        assert_eq!(r.rows[2].verdict, Verdict::Convergent);
        assert!(regularity_probe(1.0, &stable(0.5), 1.0, &[0.0], &[10, 100]).is_err());
    }

    #[test]
    fn gap_sandwich_and_slope() {
        let params = ModelParams::new(0.0, stable(0.5), 8).unwrap();
        let grid = log_space(1.0, 1e4, 13);
        let r = convergence_gap(SphericalPoint::north_pole(), &params, &grid, 1.5, 2, 5).unwrap();
        assert!(r.sandwich_holds(1e-9), "{r:?}");
        assert!((r.slope + 0.5).abs() < 0.05, "{}", r.slope);
        assert!(r.c_lower <= r.c_upper);
    }

    #[test]
    fn gap_at_equator_has_no_polar_envelope() {
        let params = ModelParams::new(1.0, stable(0.5), 8).unwrap();
        let r = convergence_gap(pt(PI / 2.0, 0.0), &params, &[1.0, 10.0], 1.5, 1, 0).unwrap();
        assert!(r.lower_polar.is_none() && r.lower_uniform.is_none());
        assert!(convergence_gap(
            pt(1.0, 0.0),
            &ModelParams::new(0.0, Clock::Nonlocal(BernsteinSpec::gamma()), 4).unwrap(),
            &[1.0],
            1.5,
            0,
            0
        )
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn modewise_contraction(seed in 0u64..1000, t in 0.0f64..5.0, mu in -3.0f64..3.0, alpha in 0.2f64..1.0) {
            let f = random_hs(1.0, 6, seed).unwrap();
            let params = ModelParams::new(mu, stable(alpha), 6).unwrap();
            let u = solve_nonlocal(&f, &params, t).unwrap();
            let (a, b) = (u.coeffs.power_spectrum().a, f.power_spectrum().a);
            for l in 0..a.len() {
                prop_assert!(a[l] <= b[l] * (1.0 + 1e-12) + 1e-300);
            }
            for s in [0.0, 1.0, 2.0] {
                prop_assert!(sobolev_seminorm(&u.coeffs, s) <= sobolev_seminorm(&f, s) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn mass_is_conserved(seed in 0u64..1000, t in 0.0f64..20.0, mu in -3.0f64..3.0) {
            let mut f = random_hs(1.0, 4, seed).unwrap();
            f.set(0, 0, c(0.123));
            let params = ModelParams::new(mu, stable(0.5), 4).unwrap();
            prop_assert_eq!(solve_nonlocal(&f, &params, t).unwrap().coeffs.get(0, 0), c(0.123));
            prop_assert_eq!(solve_classical(&f, mu, t).unwrap().coeffs.get(0, 0), c(0.123));
        }

        #[test]
        fn density_adjoint_symmetry(th1 in 0.1f64..3.0, th2 in 0.1f64..3.0, p1 in 0.0f64..6.2, p2 in 0.0f64..6.2, mu in -2.0f64..2.0) {
            let x = pt(th1, p1);
            let y = pt(th2, p2);
            prop_assume!(!in_forbidden_band(x, y, GUARD));
            let fwd = DensityEvaluator::new(&ModelParams::new(mu, stable(0.5), 12).unwrap(), 1.0, Engine::ClosedForm).unwrap();
            let bwd = DensityEvaluator::new(&ModelParams::new(-mu, stable(0.5), 12).unwrap(), 1.0, Engine::ClosedForm).unwrap();
            prop_assert!((fwd.raw(x, y) - bwd.raw(y, x)).abs() < 1e-12);
        }
    }
}
