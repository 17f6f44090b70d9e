//! The eigenfunction `e_Φ(t; λ) = E[exp(λ L_Φ(t))]` of the nonlocal derivative.
//!
//! Three engines evaluate it:
//!
//! * closed form: `E_α(λ t^α)` for stable `Φ`;
//! * Laplace: Talbot inversion of `Φ(s) / (s (Φ(s) − λ))`;
//! * Monte Carlo: averaging `exp(λ L)` over first-passage samples of `L_Φ(t)`.
//!
//! The nonlocal derivative
//! `D^Φ u(t) = d/dt ∫_0^t ν̄(t − τ) (u(τ) − u(0)) dτ` is discretized by exact
//! product integration of the piecewise-linear interpolant of `u` against `ν̄`,
//! followed by a backward difference, which is first order in the step.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;

use crate::bernstein::{sample_inverse, BernsteinSpec};
use crate::laplace::{invert_checked, DEFAULT_NODES};
use crate::mittag_leffler::mittag_leffler_with_error;
use crate::montecarlo::{sample_paths, ComplexMoments, Executor, Sequential};
use crate::special::gamma;
use crate::{Error, Result};

/// How `e_Φ` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Engine {
    ClosedForm,
    Laplace { nodes: usize },
    MonteCarlo { samples: usize, ds: Option<f64>, seed: u64 },
}

impl Engine {
    pub fn laplace() -> Self {
        Self::Laplace { nodes: DEFAULT_NODES }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self::MonteCarlo {
            samples,
            ds: None,
            seed,
        }
    }

    /// Closed form for stable `Φ`, Laplace inversion otherwise.
    pub fn preferred(spec: &BernsteinSpec) -> Self {
        match spec {
            BernsteinSpec::Stable { .. } => Self::ClosedForm,
            _ => Self::laplace(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ClosedForm => "closed_form",
            Self::Laplace { .. } => "laplace",
            Self::MonteCarlo { .. } => "monte_carlo",
        }
    }
}

/// Operational grid step used by the Monte Carlo engine unless overridden.
pub fn mc_default_ds(t: f64) -> f64 {
    1e-3 * t.min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenfunctionQuery {
    pub spec: BernsteinSpec,
    pub t: f64,
    pub lam: Complex64,
    pub engine: Engine,
}

/// A value with an error estimate; one standard error for Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfunValue {
    pub value: Complex64,
    pub err: f64,
}

impl EfunValue {
    fn exact(value: Complex64) -> Self {
        Self { value, err: 0.0 }
    }

    fn conj(self) -> Self {
        Self {
            value: self.value.conj(),
            err: self.err,
        }
    }
}

/// `e_Φ(t; λ)` with the requested engine, sampling sequentially.
pub fn efun(q: &EigenfunctionQuery) -> Result<EfunValue> {
    efun_with(q, &Sequential)
}

/// As [`efun`], with Monte Carlo chunks scheduled by `exec`.
pub fn efun_with<E: Executor>(q: &EigenfunctionQuery, exec: &E) -> Result<EfunValue> {
    check_query(q.t, q.lam)?;
    if q.lam == Complex64::new(0.0, 0.0) || q.t == 0.0 {
        return Ok(EfunValue::exact(Complex64::new(1.0, 0.0)));
    }
    match q.engine {
        Engine::ClosedForm => closed_form(&q.spec, q.t, q.lam),
        Engine::Laplace { nodes } => laplace(&q.spec, q.t, q.lam, nodes),
        Engine::MonteCarlo { samples, ds, seed } => {
            let ls = inverse_samples(exec, &q.spec, q.t, ds.unwrap_or(mc_default_ds(q.t)), samples, seed)?;
            Ok(mc_mean(&ls, q.lam))
        }
    }
}

fn check_query(t: f64, lam: Complex64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain("time must be nonnegative"));
    }
    if lam.re > 0.0 || !lam.re.is_finite() || !lam.im.is_finite() {
        return Err(Error::Domain("eigenvalue must satisfy Re(lambda) <= 0"));
    }
    Ok(())
}

fn closed_form(spec: &BernsteinSpec, t: f64, lam: Complex64) -> Result<EfunValue> {
    match *spec {
        BernsteinSpec::Stable { alpha } => {
            let (value, err) = mittag_leffler_with_error(alpha, lam * t.powf(alpha))?;
            Ok(EfunValue { value, err })
        }
        _ => Err(Error::EngineMismatch("the closed form exists for stable Phi only")),
    }
}

fn laplace(spec: &BernsteinSpec, t: f64, lam: Complex64, nodes: usize) -> Result<EfunValue> {
    let transform = |s: Complex64| {
        let p = spec.phi_continued(s);
        p / (s * (p - lam))
    };
    let (value, err) = invert_checked(transform, t, nodes, 1e-6, 1e-3)?;
    Ok(EfunValue { value, err })
}

/// `n` draws of `L_Φ(t)` on operational step `ds`, in deterministic order.
pub fn inverse_samples<E: Executor>(
    exec: &E,
    spec: &BernsteinSpec,
    t: f64,
    ds: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Parameter("Monte Carlo needs at least two samples"));
    }
    let s_max = 10.0 * t.max(1.0);
    sample_paths(
        exec,
        n,
        seed,
        |rng| Ok(sample_inverse(spec, t, ds, s_max, rng)?.l_value),
    )
}

/// Mean of `exp(λ L)` over the samples, with its standard error.
pub fn mc_mean(samples: &[f64], lam: Complex64) -> EfunValue {
    let m = ComplexMoments::of(samples.iter().map(|&l| (lam * l).exp()));
    EfunValue {
        value: m.mean(),
        err: m.stderr(),
    }
}

/// Cached `e_Φ(t; iμm − ℓ(ℓ+1))` for `0 ≤ ℓ ≤ l_max`, `|m| ≤ ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenfunctionTable {
    pub spec: BernsteinSpec,
    pub mu: f64,
    pub l_max: usize,
    pub t: f64,
    pub engine: Engine,
    pub entries: Vec<EfunValue>,
}

impl EigenfunctionTable {
    pub fn compute(spec: &BernsteinSpec, mu: f64, t: f64, l_max: usize, engine: Engine) -> Result<Self> {
        Self::compute_with(spec, mu, t, l_max, engine, &Sequential)
    }

    /// Entries with `m < 0` are conjugates of `m > 0`, and with `μ = 0` each
    /// degree needs one evaluation. Monte Carlo shares one set of clock samples.
    pub fn compute_with<E: Executor>(
        spec: &BernsteinSpec,
        mu: f64,
        t: f64,
        l_max: usize,
        engine: Engine,
        exec: &E,
    ) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Parameter("drift must be finite"));
        }
        let samples = match engine {
            Engine::MonteCarlo { samples, ds, seed } if t > 0.0 => Some(inverse_samples(
                exec,
                spec,
                t,
                ds.unwrap_or(mc_default_ds(t)),
                samples,
                seed,
            )?),
            _ => None,
        };
        let eval = |lam: Complex64| -> Result<EfunValue> {
            if lam == Complex64::new(0.0, 0.0) || t == 0.0 {
                return Ok(EfunValue::exact(Complex64::new(1.0, 0.0)));
            }
            match &samples {
                Some(ls) => Ok(mc_mean(ls, lam)),
                None => efun(&EigenfunctionQuery {
                    spec: *spec,
                    t,
                    lam,
                    engine,
                }),
            }
        };
        let size = (l_max + 1) * (l_max + 1);
        let mut entries = vec![EfunValue::exact(Complex64::new(1.0, 0.0)); size];
        for l in 0..=l_max {
            let base = l * l + l;
            if mu == 0.0 {
                let v = eval(eigenvalue(l, 0, mu))?;
                for m in 0..=2 * l {
                    entries[l * l + m] = v;
                }
                continue;
            }
            for m in 0..=l {
                let v = eval(eigenvalue(l, m as i64, mu))?;
                entries[base + m] = v;
                entries[base - m] = v.conj();
            }
        }
        Ok(Self {
            spec: *spec,
            mu,
            l_max,
            t,
            engine,
            entries,
        })
    }

    pub fn get(&self, l: usize, m: i64) -> EfunValue {
        self.entries[crate::sphere::lm_index(l, m)]
    }
}

/// `λ_{ℓ,m} = iμm − ℓ(ℓ+1)`.
pub fn eigenvalue(l: usize, m: i64, mu: f64) -> Complex64 {
    Complex64::new(-((l * (l + 1)) as f64), mu * m as f64)
}

/// Tail integrals `N1`, `N2` of `ν̄` on the grid `k · dt`, `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailTable {
    dt: f64,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

impl TailTable {
    pub fn new(spec: &BernsteinSpec, dt: f64, n: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Parameter("time step must be positive"));
        }
        let (n1, n2): (Vec<f64>, Vec<f64>) = (0..=n + 1).map(|k| spec.tail_integrals(k as f64 * dt)).unzip();
        let w1 = (0..=n).map(|i| n1[i + 1] - n1[i]).collect();
        let w2 = (0..=n).map(|i| (n2[i + 1] - n2[i] - n1[i] * dt) / dt).collect();
        Ok(Self { dt, w1, w2 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.w1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w1.is_empty()
    }

    /// `∫_0^{t_j} ν̄(t_j − τ) (u(τ) − u_0) dτ` for piecewise-linear `u`.
    pub fn convolution(&self, u: &[Complex64], j: usize) -> Complex64 {
        let u0 = u[0];
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 1..=j {
            let i = j - k;
            acc += (u[k - 1] - u0) * self.w1[i] + (u[k] - u[k - 1]) * self.w2[i];
        }
        acc
    }

    /// `D^Φ u(t_j)`.
    pub fn derivative(&self, u: &[Complex64], j: usize) -> Result<Complex64> {
        if j < 2 {
            return Err(Error::GridTooShort(j));
        }
        if j >= u.len() || j >= self.len() {
            return Err(Error::Parameter("index beyond the sampled series"));
        }
        Ok((self.convolution(u, j) - self.convolution(u, j - 1)) / self.dt)
    }
}

/// `D^Φ u(t_j)` for `u` sampled at `k · dt`.
pub fn nonlocal_derivative(u: &[Complex64], spec: &BernsteinSpec, dt: f64, j: usize) -> Result<Complex64> {
    if j < 2 {
        return Err(Error::GridTooShort(j));
    }
    TailTable::new(spec, dt, j)?.derivative(u, j)
}

/// `e_Φ(k · dt; λ)` for `k = 0..=n` with the preferred deterministic engine.
pub fn efun_series(spec: &BernsteinSpec, lam: Complex64, dt: f64, n: usize) -> Result<Vec<Complex64>> {
    let engine = Engine::preferred(spec);
    (0..=n)
        .map(|k| {
            Ok(efun(&EigenfunctionQuery {
                spec: *spec,
                t: k as f64 * dt,
                lam,
                engine,
            })?
            .value)
        })
        .collect()
}

/// `max |D^Φ e(t) − λ e(t)|` over the grid points nearest to `t_eval`.
pub fn growth_residual(spec: &BernsteinSpec, lam: Complex64, dt: f64, t_eval: &[f64]) -> Result<f64> {
    check_query(1.0, lam)?;
    let t_end = t_eval.iter().cloned().fold(0.0, f64::max);
    let n = (t_end / dt).round() as usize;
    let e = efun_series(spec, lam, dt, n)?;
    let tails = TailTable::new(spec, dt, n)?;
    let mut worst: f64 = 0.0;
    for &t in t_eval {
        let j = (t / dt).round() as usize;
        let r = tails.derivative(&e, j)? - lam * e[j];
        worst = worst.max(r.norm());
    }
    Ok(worst)
}

/// `r(t) = Γ(1−α) t^α λ e_Φ(t; −λ) / 𝓛(1/t)`, which tends to 1 for large `t`
/// when `Φ(λ) = λ^α 𝓛(λ)` varies regularly at zero with index `α < 1`.
pub fn relaxation_asymptotics(
    spec: &BernsteinSpec,
    lam: f64,
    t_grid: &[f64],
    engine: Engine,
) -> Result<Vec<EfunValue>> {
    if !(lam > 0.0) {
        return Err(Error::Domain("relaxation rate must be positive"));
    }
    spec.regular_variation(1.0)?;
    t_grid
        .iter()
        .map(|&t| {
            let (alpha, slow) = spec.regular_variation(1.0 / t)?;
            let e = efun(&EigenfunctionQuery {
                spec: *spec,
                t,
                lam: Complex64::new(-lam, 0.0),
                engine,
            })?;
            let scale = gamma(1.0 - alpha) * t.powf(alpha) * lam / slow;
            Ok(EfunValue {
                value: e.value * scale,
                err: e.err * scale,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mittag_leffler::mittag_leffler;

    fn stable(a: f64) -> BernsteinSpec {
        BernsteinSpec::stable(a).unwrap()
    }

    #[test]
    fn zero_eigenvalue_is_one_for_every_engine() {
        for engine in [Engine::ClosedForm, Engine::laplace(), Engine::monte_carlo(100, 1)] {
            for &t in &[0.0, 0.3, 7.0] {
                let q = EigenfunctionQuery {
                    spec: stable(0.5),
                    t,
                    lam: Complex64::new(0.0, 0.0),
                    engine,
                };
                let v = efun(&q).unwrap();
                assert_eq!(v.value, Complex64::new(1.0, 0.0));
                assert_eq!(v.err, 0.0);
            }
        }
    }

    #[test]
    fn closed_form_only_for_stable() {
        let q = EigenfunctionQuery {
            spec: BernsteinSpec::Gamma,
            t: 1.0,
            lam: Complex64::new(-2.0, 0.0),
            engine: Engine::ClosedForm,
        };
        assert!(matches!(efun(&q), Err(Error::EngineMismatch(_))));
        let bad = EigenfunctionQuery {
            lam: Complex64::new(0.5, 0.0),
            ..q
        };
        assert!(efun(&bad).is_err());
    }

    #[test]
    fn laplace_matches_closed_form() {
        for &a in &[0.3, 0.5, 0.8, 1.0] {
            for &t in &[0.5, 1.0, 5.0] {
                for &lam in &[
                    Complex64::new(-2.0, 0.0),
                    Complex64::new(-6.0, 0.0),
                    Complex64::new(-2.0, 2.0),
                ] {
                    let q = EigenfunctionQuery {
                        spec: stable(a),
                        t,
                        lam,
                        engine: Engine::ClosedForm,
                    };
                    let c = efun(&q).unwrap().value;
                    let l = efun(&EigenfunctionQuery {
                        engine: Engine::laplace(),
                        ..q
                    })
                    .unwrap()
                    .value;
                    assert!((c - l).norm() < 1e-7, "a={a} t={t} lam={lam}: {c} vs {l}");
                }
            }
        }
    }

    #[test]
    fn classical_clock_gives_exponential() {
        let q = EigenfunctionQuery {
            spec: stable(1.0),
            t: 0.7,
            lam: Complex64::new(-6.0, 2.0),
            engine: Engine::monte_carlo(10, 3),
        };
        let v = efun(&q).unwrap();
        assert!((v.value - (q.lam * 0.7).exp()).norm() < 1e-14);
    }

    #[test]
    fn modulus_bound_and_monotonicity() {
        for spec in [
            stable(0.5),
            BernsteinSpec::Gamma,
            BernsteinSpec::tempered(0.7, 1.5).unwrap(),
        ] {
            let engine = Engine::preferred(&spec);
            let mut prev = 1.0;
            for k in 1..=20 {
                let t = 0.25 * k as f64;
                let re = efun(&EigenfunctionQuery {
                    spec,
                    t,
                    lam: Complex64::new(-2.0, 0.0),
                    engine,
                })
                .unwrap();
                let cx = efun(&EigenfunctionQuery {
                    spec,
                    t,
                    lam: Complex64::new(-2.0, 3.0),
                    engine,
                })
                .unwrap();
                assert!(re.value.re <= prev + 1e-9 && re.value.re <= 1.0);
                assert!(cx.value.norm() <= re.value.re + 1e-8);
                prev = re.value.re;
            }
        }
    }

    #[test]
    fn inequality_constant_stays_bounded() {
        // -Re(λ) |e| stays bounded along λ = -10^k for t ≥ 0.1
        let spec = stable(0.6);
        let mut worst: f64 = 0.0;
        for k in 0..7 {
            let lam = -(10f64.powi(k));
            for &t in &[0.1, 1.0, 10.0] {
                let e = efun(&EigenfunctionQuery {
                    spec,
                    t,
                    lam: Complex64::new(lam, 0.0),
                    engine: Engine::ClosedForm,
                })
                .unwrap();
                worst = worst.max(-lam * e.value.norm());
            }
        }
        assert!(worst < 10.0, "{worst}");
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let spec = stable(0.6);
        let lam = Complex64::new(-2.0, 0.0);
        let c = efun(&EigenfunctionQuery {
            spec,
            t: 1.0,
            lam,
            engine: Engine::ClosedForm,
        })
        .unwrap();
        let m = efun(&EigenfunctionQuery {
            spec,
            t: 1.0,
            lam,
            engine: Engine::monte_carlo(20_000, 11),
        })
        .unwrap();
        assert!(
            (c.value - m.value).norm() < 3.0 * m.err + 2e-3,
            "{} vs {} ± {}",
            c.value,
            m.value,
            m.err
        );
    }

    #[test]
    fn table_symmetry_and_bounds() {
        let spec = stable(0.5);
        let table = EigenfunctionTable::compute(&spec, 1.5, 0.8, 6, Engine::ClosedForm).unwrap();
        assert_eq!(table.get(0, 0).value, Complex64::new(1.0, 0.0));
        for l in 1..=6usize {
            let bound = table.get(l, 0).value.re;
            for m in -(l as i64)..=(l as i64) {
                let e = table.get(l, m);
                assert!(e.value.norm() <= bound + 1e-10);
                assert_eq!(e.value, table.get(l, -m).value.conj());
                let direct = mittag_leffler(0.5, eigenvalue(l, m, 1.5) * 0.8f64.sqrt()).unwrap();
                assert!((e.value - direct).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(eigenvalue(0, 0, 4.0), Complex64::new(0.0, 0.0));
        assert_eq!(eigenvalue(1, 1, 3.0), Complex64::new(-2.0, 3.0));
        assert_eq!(eigenvalue(2, -1, 1.0), Complex64::new(-6.0, -1.0));
    }

    #[test]
    fn derivative_of_constants_and_lines() {
        let dt = 1e-3;
        let n = 1000;
        let c = vec![Complex64::new(2.5, -1.0); n + 1];
        for spec in [stable(0.5), BernsteinSpec::Gamma] {
            let tails = TailTable::new(&spec, dt, n).unwrap();
            for j in [2, 10, n] {
                assert_eq!(tails.derivative(&c, j).unwrap(), Complex64::new(0.0, 0.0));
            }
        }
        assert!(matches!(
            nonlocal_derivative(&c, &stable(0.5), dt, 1),
            Err(Error::GridTooShort(1))
        ));
        for &a in &[0.3, 0.5, 0.8] {
            let line: Vec<Complex64> = (0..=n).map(|k| Complex64::new(k as f64 * dt, 0.0)).collect();
            let d = nonlocal_derivative(&line, &stable(a), dt, n).unwrap();
            let exact = 1.0 / gamma(2.0 - a);
            assert!((d.re - exact).abs() < 0.02 * exact, "a={a}: {d} vs {exact}");
        }
    }

    #[test]
    fn classical_limit_is_backward_difference() {
        let dt = 0.01;
        let u: Vec<Complex64> = (0..50).map(|k| Complex64::new((k as f64 * dt).sin(), 0.0)).collect();
        let d = nonlocal_derivative(&u, &stable(1.0), dt, 40).unwrap();
        assert!((d - (u[40] - u[39]) / dt).norm() < 1e-12);
    }

    #[test]
    fn growth_equation_residuals() {
        let spec = stable(0.5);
        let t_eval: Vec<f64> = (1..=20).map(|k| 0.1 * k as f64).collect();
        assert_eq!(
            growth_residual(&spec, Complex64::new(0.0, 0.0), 1e-3, &t_eval).unwrap(),
            0.0
        );
        let r = growth_residual(&spec, Complex64::new(-2.0, 0.0), 1e-3, &t_eval).unwrap();
        assert!(r < 5e-3, "{r}");
        let g = BernsteinSpec::Gamma;
        let t_eval = [0.2, 0.5, 1.0];
        let coarse = growth_residual(&g, Complex64::new(-2.0, 0.0), 4e-3, &t_eval).unwrap();
        let fine = growth_residual(&g, Complex64::new(-2.0, 0.0), 2e-3, &t_eval).unwrap();
        assert!(fine < 0.7 * coarse, "{coarse} {fine}");
    }

    #[test]
    fn relaxation_ratio_tends_to_one() {
        let t_grid = [10.0, 100.0, 1000.0];
        for &a in &[0.5, 0.8] {
            let r = relaxation_asymptotics(&stable(a), 1.0, &t_grid, Engine::ClosedForm).unwrap();
            assert!((r[2].value.re - 1.0).abs() < 0.05, "a={a}: {:?}", r[2]);
        }
        // the first correction is Γ(1−α)/(Γ(1−2α) t^α), slow for small α
        let r = relaxation_asymptotics(&stable(0.3), 1.0, &[1e3, 1e6], Engine::ClosedForm).unwrap();
        let corr = gamma(0.7) / gamma(0.4);
        for (v, t) in r.iter().zip([1e3f64, 1e6]) {
            assert!((1.0 - v.value.re - corr * t.powf(-0.3)).abs() < 0.2 * corr * t.powf(-0.3));
        }
        let geo = BernsteinSpec::geostable(0.6).unwrap();
        let r = relaxation_asymptotics(&geo, 1.0, &[1e4], Engine::laplace()).unwrap();
        assert!((r[0].value.re - 1.0).abs() < 0.1, "{:?}", r[0]);
        assert!(matches!(
            relaxation_asymptotics(&stable(1.0), 1.0, &t_grid, Engine::ClosedForm),
            Err(Error::Unsupported(_))
        ));
        assert!(relaxation_asymptotics(&BernsteinSpec::Gamma, 1.0, &t_grid, Engine::laplace()).is_err());
    }
}
