//! Self-checks run by `kolmosphere verify <suite>`.
//!
//! Budgets are sized for an interactive run; the `acceptance` test target
//! repeats the same checks at full size.

use std::f64::consts::PI;

use clap::ValueEnum;
use kolmosphere_core::eigenfunction::{efun_with, growth_residual, EigenfunctionQuery};
use kolmosphere_core::montecarlo::Executor;
use kolmosphere_core::solver::{
    cap_indicator, check_density, convergence_gap, forward_evolve, harmonic, in_forbidden_band, regularity_probe,
    transition_density_with, weak_form_residual, DensityEngine, DensityEvaluator, Verdict, GUARD,
};
use kolmosphere_core::special::log_space;
use kolmosphere_core::sphere::addition_check;
use kolmosphere_core::{BernsteinSpec, Clock, Complex64, Engine, HarmonicCoefficients, ModelParams, SphericalPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Addition,
    Eigenfunction,
    Density,
    Stationarity,
    Speed,
    Regularity,
    Weakform,
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Addition => "addition",
            Self::Eigenfunction => "eigenfunction",
            Self::Density => "density",
            Self::Stationarity => "stationarity",
            Self::Speed => "speed",
            Self::Regularity => "regularity",
            Self::Weakform => "weakform",
        }
    }
}

/// One measured quantity against its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `measured < tolerance`.
    pub fn below(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            passed: measured < tolerance,
        }
    }

    /// Passes when `measured > tolerance`.
    pub fn above(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            passed: measured > tolerance,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            measured: f64::from(u8::from(ok)),
            tolerance: 1.0,
            passed: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Overrides the suite's default clock.
    pub clock: Option<Clock>,
    pub mu: f64,
    pub seed: u64,
    pub samples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            clock: None,
            mu: 0.0,
            seed: 2024,
            samples: 20_000,
        }
    }
}

fn stable(alpha: f64) -> Clock {
    Clock::Nonlocal(BernsteinSpec::Stable { alpha })
}

pub fn run_suite<E: Executor>(suite: Suite, opts: &VerifyOptions, exec: &E) -> Result<SuiteReport, CliError> {
    let checks = match suite {
        Suite::Addition => addition(opts),
        Suite::Eigenfunction => eigenfunction(opts, exec)?,
        Suite::Density => density(opts, exec)?,
        Suite::Stationarity => stationarity(opts)?,
        Suite::Speed => speed(opts)?,
        Suite::Regularity => regularity(opts)?,
        Suite::Weakform => weakform(opts)?,
    };
    Ok(SuiteReport {
        suite: suite.name().into(),
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

pub fn random_point<R: Rng>(rng: &mut R) -> SphericalPoint {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    SphericalPoint::new(z.acos(), phi).expect("acos lies in [0, pi]")
}

/// Largest addition-theorem defect over `ℓ ≤ l_max` and `pairs` random pairs.
pub fn addition_defect(l_max: usize, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let (x, y) = (random_point(&mut rng), random_point(&mut rng));
        for l in 0..=l_max {
            let (lhs, rhs) = addition_check(l, x, y);
            worst = worst.max((lhs - rhs).norm());
        }
    }
    worst
}

fn addition(opts: &VerifyOptions) -> Vec<Check> {
    vec![Check::below(
        "addition theorem, l <= 50, 100 pairs",
        addition_defect(50, 100, opts.seed),
        1e-9,
    )]
}

fn eigenfunction<E: Executor>(opts: &VerifyOptions, exec: &E) -> Result<Vec<Check>, CliError> {
    let clock = opts.clock.unwrap_or(stable(0.5));
    let spec = clock.spec();
    let lams = [
        Complex64::new(-2.0, 0.0),
        Complex64::new(-6.0, 0.0),
        Complex64::new(-2.0, 2.0),
    ];
    let mut checks = Vec::new();
    let mut engine_gap: f64 = 0.0;
    let mut mc_ratio: f64 = 0.0;
    for t in [0.5, 1.0, 5.0] {
        let mc = Engine::monte_carlo(opts.samples, opts.seed);
        for lam in lams {
            let q = |engine| EigenfunctionQuery { spec, t, lam, engine };
            let lap = efun_with(&q(Engine::laplace()), exec)?;
            if matches!(spec, BernsteinSpec::Stable { .. }) {
                let closed = efun_with(&q(Engine::ClosedForm), exec)?;
                engine_gap = engine_gap.max((closed.value - lap.value).norm());
            }
            let sim = efun_with(&q(mc), exec)?;
            mc_ratio = mc_ratio.max((sim.value - lap.value).norm() / (3.0 * sim.err).max(1e-3));
        }
    }
    if matches!(spec, BernsteinSpec::Stable { .. }) {
        checks.push(Check::below("closed form vs Laplace inversion", engine_gap, 1e-6));
    }
    checks.push(Check::below("Monte Carlo gap / max(3 s.e., 1e-3)", mc_ratio, 1.0));
    let r = growth_residual(&spec, Complex64::new(-2.0, 0.0), 1e-3, &[0.5, 1.0])?;
    checks.push(Check::below("growth equation residual, dt = 1e-3", r, 5e-3));
    Ok(checks)
}

fn density<E: Executor>(opts: &VerifyOptions, exec: &E) -> Result<Vec<Check>, CliError> {
    let clock = opts.clock.unwrap_or(stable(0.5));
    let params = ModelParams::new(opts.mu, clock, 48)?;
    let back = ModelParams::new(-opts.mu, clock, 48)?;
    let t = 0.5;
    let x = SphericalPoint::new(0.8, 0.3)?;
    let ev = DensityEvaluator::new_with(&params, t, Engine::preferred(&clock.spec()), exec)?;
    let ev_back = DensityEvaluator::new_with(&back, t, Engine::preferred(&clock.spec()), exec)?;
    let mut checks = vec![Check::below(
        "normalization |int p - 1|",
        (ev.normalization(x)? - 1.0).abs(),
        1e-3,
    )];

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adj: f64 = 0.0;
    let mut clipped: f64 = 0.0;
    let mut n = 0;
    while n < 20 {
        let (a, b) = (random_point(&mut rng), random_point(&mut rng));
        if in_forbidden_band(a, b, GUARD) {
            continue;
        }
        let p = ev.eval(a, b)?;
        adj = adj.max((p.value - ev_back.eval(b, a)?.value).abs());
        clipped = clipped.max(p.clipped);
        n += 1;
    }
    checks.push(Check::below("adjoint symmetry", adj, 1e-8));
    checks.push(Check::below("largest clipped negativity", clipped, 1e-6));

    let y = SphericalPoint::new(1.9, 2.0)?;
    let series = ev.eval(x, y)?;
    let mc = transition_density_with(
        &params,
        t,
        x,
        y,
        DensityEngine::McLegendre {
            samples: opts.samples,
            seed: opts.seed,
            ds: None,
        },
        exec,
    )?;
    checks.push(Check::below(
        "series vs Legendre average, in s.e.",
        (series.value - mc.value).abs() / (3.0 * mc.err + series.tail_bound + 1e-4),
        1.0,
    ));

    let gamma = ModelParams::new(opts.mu, Clock::Nonlocal(BernsteinSpec::Gamma), 24)?;
    let late = DensityEvaluator::new_with(&gamma, 50.0, Engine::laplace(), exec)?;
    let mut worst: f64 = 0.0;
    for y in [
        SphericalPoint::new(2.0, 1.0)?,
        SphericalPoint::new(0.3, 5.0)?,
        SphericalPoint::new(PI, 0.0)?,
    ] {
        worst = worst.max((late.eval(x, y)?.value - 1.0 / (4.0 * PI)).abs());
    }
    checks.push(Check::below("gamma clock, |p - 1/(4 pi)| at t = 50", worst, 1e-3));
    Ok(checks)
}

/// A smooth positive density, `(1 + n·y)² / (16π/3)`, with `n` off the axes.
pub fn tilted_density() -> HarmonicCoefficients {
    use kolmosphere_core::sphere::{analyze, QuadratureGrid};
    let n = [0.48, 0.6, 0.64];
    let grid = QuadratureGrid::for_degree(2);
    let values = grid.sample(|p| {
        let v = p.to_vector();
        let d = 1.0 + n[0] * v[0] + n[1] * v[1] + n[2] * v[2];
        Complex64::new(d * d * 3.0 / (16.0 * PI), 0.0)
    });
    analyze(&grid, &values, 2).expect("grid matches degree")
}

fn stationarity(opts: &VerifyOptions) -> Result<Vec<Check>, CliError> {
    let clock = opts.clock.unwrap_or(stable(0.5));
    let params = ModelParams::new(opts.mu, clock, 8)?;
    let uniform = HarmonicCoefficients::single(2, 0, 0, Complex64::new(1.0 / (4.0 * PI).sqrt(), 0.0))?;
    let mut drift: f64 = 0.0;
    for t in [0.1, 1.0, 10.0, 100.0] {
        let u = forward_evolve(&uniform, &params, t)?;
        for (l, m, c) in u.coeffs.iter() {
            drift = drift.max((c - uniform.get(l, m)).norm());
        }
    }
    let mut checks = vec![Check::below("uniform law under forward evolution", drift, 1e-15)];

    let f = tilted_density();
    check_density(&f)?;
    let gamma = ModelParams::new(opts.mu, Clock::Nonlocal(BernsteinSpec::Gamma), 8)?;
    let u = forward_evolve(&f, &gamma, 50.0)?;
    let worst = u.coeffs.power_spectrum().a[1..].iter().cloned().fold(0.0, f64::max);
    checks.push(Check::below("gamma clock, max A_l (l >= 1) at t = 50", worst, 1e-6));
    checks.push(Check::below(
        "mass drift",
        (u.coeffs.get(0, 0) - f.get(0, 0)).norm(),
        1e-15,
    ));
    let mut monotone = true;
    let mut prev = f.power_spectrum().a;
    for t in [0.5, 2.0, 8.0, 32.0] {
        let a = forward_evolve(&f, &params, t)?.coeffs.power_spectrum().a;
        monotone &= a.iter().zip(&prev).skip(1).all(|(x, y)| x <= &(y * (1.0 + 1e-12)));
        prev = a;
    }
    checks.push(Check::flag("energies decrease along forward evolution", monotone));
    Ok(checks)
}

fn speed(opts: &VerifyOptions) -> Result<Vec<Check>, CliError> {
    let clock = opts.clock.unwrap_or(stable(0.5));
    let params = ModelParams::new(opts.mu, clock, 8)?;
    let alpha = clock.spec().regular_variation(1.0)?.0;
    let grid = log_space(1.0, 1e4, 25);
    let r = convergence_gap(SphericalPoint::north_pole(), &params, &grid, 1.5, 4, opts.seed)?;
    Ok(vec![
        Check::below("|slope + alpha| on [10, 1e4]", (r.slope + alpha).abs(), 0.05),
        Check::flag("lower <= gap <= upper for t >= 1", r.sandwich_holds(1e-12)),
    ])
}

fn regularity(opts: &VerifyOptions) -> Result<Vec<Check>, CliError> {
    let clock = opts.clock.unwrap_or(stable(0.5));
    let r = regularity_probe(1.5, &clock, 1.0, &[0.0, 0.5], &[10, 100, 1000, 10_000])?;
    let last = |i: usize| *r.rows[i].ratios.last().unwrap_or(&f64::NAN);
    let min_growth = r.rows[1].ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(vec![
        Check::below("exponent s+2: final-decade ratio", last(0), 1.1),
        Check::above("exponent s+2.5: smallest growth per decade", min_growth, 2.0),
        Check::flag("initial datum lies in H^s", r.rows[2].verdict == Verdict::Convergent),
    ])
}

fn weakform(opts: &VerifyOptions) -> Result<Vec<Check>, CliError> {
    let clock = opts.clock.unwrap_or(stable(0.5));
    let params = ModelParams::new(opts.mu, clock, 64)?;
    let ts = [0.1, 0.25, 0.5, 0.75, 1.0];
    let mut checks = Vec::new();
    for (name, f) in [("Y21", harmonic(2, 1)?), ("cap(1.0)", cap_indicator(1.0, 64)?)] {
        for (hl, hm) in [(0, 0), (2, 1), (3, 0)] {
            let h = harmonic(hl, hm)?;
            let coarse = weak_form_residual(&f, &h, &params, 1e-3, &ts)?;
            let fine = weak_form_residual(&f, &h, &params, 5e-4, &ts)?;
            checks.push(Check::below(
                format!("f = {name}, h = Y{hl}{hm}: residual at dt = 1e-3"),
                coarse,
                1e-2,
            ));
            checks.push(Check::flag(
                format!("f = {name}, h = Y{hl}{hm}: contracts under refinement"),
                fine <= coarse + 1e-14,
            ));
        }
    }
    Ok(checks)
}
