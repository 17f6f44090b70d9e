//! Subcommand arguments and their implementations.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use kolmosphere_core::bernstein::{sample_path, Histogram};
use kolmosphere_core::eigenfunction::{mc_default_ds, EigenfunctionTable};
use kolmosphere_core::montecarlo::{chunk_rng, EqualAreaBins, Executor};
use kolmosphere_core::solver::{
    in_forbidden_band, solve_classical, solve_nonlocal_with, transition_density_with, DensityEngine, DensityEvaluator,
    GUARD,
};
use kolmosphere_core::sphere::{synthesize, ylm};
use kolmosphere_core::walk::{average_over, simulate_endpoints, WalkConfig};
use kolmosphere_core::{Clock, Complex64, Engine, HarmonicCoefficients, ModelParams, SphericalPoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::{
    clock_histogram_csv, endpoints_csv, histogram_csv, subordinator_path_csv, write_json, Csv, EfunTableJson,
    SnapshotJson,
};
use crate::verify::{run_suite, Suite, SuiteReport, VerifyOptions};
use crate::{CliError, InitSpec};

/// Options shared by every subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Common {
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineArg {
    /// Closed form for stable clocks, Laplace inversion otherwise.
    Auto,
    Closed,
    Laplace,
    Mc,
}

impl EngineArg {
    fn resolve(self, clock: &Clock, samples: usize, seed: u64) -> Engine {
        match self {
            Self::Auto => Engine::preferred(&clock.spec()),
            Self::Closed => Engine::ClosedForm,
            Self::Laplace => Engine::laplace(),
            Self::Mc => Engine::monte_carlo(samples, seed),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SolveArgs {
    /// Clock: `classical` or a Bernstein spec such as `stable:0.5`.
    #[arg(long, default_value = "stable:0.5")]
    pub phi: String,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    /// Initial datum: `Y:l,m`, `randHs:s,seed` or `cap:theta0`.
    #[arg(long)]
    pub init: String,
    /// Comma-separated output times.
    #[arg(long, value_delimiter = ',', required = true)]
    pub t: Vec<f64>,
    #[arg(long, default_value_t = 32)]
    pub l_max: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub engine: EngineArg,
    /// Clock samples for the Monte Carlo engine.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Colatitude rings of the plotting grid; twice as many longitudes.
    #[arg(long, default_value_t = 36)]
    pub grid: usize,
    #[arg(long, default_value = "out/solve")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityEngineArg {
    Series,
    McLegendre,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DensityArgs {
    #[arg(long, default_value = "stable:0.5")]
    pub phi: String,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long)]
    pub t: f64,
    /// Starting point `theta,phi` in radians.
    #[arg(long)]
    pub x: String,
    /// Single target point; without it the density is tabulated on a grid.
    #[arg(long)]
    pub y: Option<String>,
    #[arg(long, default_value_t = 24)]
    pub grid: usize,
    #[arg(long, default_value_t = 64)]
    pub l_max: usize,
    #[arg(long, value_enum, default_value = "series")]
    pub engine: DensityEngineArg,
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    /// Tail bound above which a value is flagged.
    #[arg(long, default_value_t = 1e-3)]
    pub tail_tol: f64,
    #[arg(long, default_value = "out/density")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, default_value = "stable:0.5")]
    pub phi: String,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value = "0.5,0")]
    pub x: String,
    #[arg(long, default_value_t = 10_000)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub step_h: f64,
    /// Operational step of the subordinator grid; defaults to `1e-3 min(t, 1)`.
    #[arg(long)]
    pub ds: Option<f64>,
    /// Largest degree of the reported harmonic moments.
    #[arg(long, default_value_t = 2)]
    pub moments: usize,
    #[arg(long, default_value_t = 4)]
    pub rings: usize,
    #[arg(long, default_value_t = 12)]
    pub sectors: usize,
    /// Compare moments with the spectral values.
    #[arg(long)]
    pub verify: bool,
    #[arg(long, default_value = "out/simulate")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Clock under test; each suite has its own default.
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    /// Monte Carlo sample count for the suites that simulate.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    /// Directory for `report.json` and `config.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a finished command reports back to `main`.
#[derive(Debug)]
pub enum Outcome {
    Done(String),
    Verified(SuiteReport),
}

#[derive(Serialize)]
struct ConfigFile<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    #[serde(flatten)]
    common: &'a Common,
    #[serde(flatten)]
    args: &'a T,
}

fn prepare_dir<T: Serialize>(dir: &Path, command: &str, common: &Common, args: &T) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let cfg = ConfigFile {
        command,
        version: env!("CARGO_PKG_VERSION"),
        common,
        args,
    };
    write_json(&dir.join("config.json"), &cfg)
}

pub fn parse_clock(s: &str) -> Result<Clock, CliError> {
    s.parse()
        .map_err(|e: kolmosphere_core::Error| CliError::Config(e.to_string()))
}

/// `theta,phi` in radians.
pub fn parse_point(s: &str) -> Result<SphericalPoint, CliError> {
    let bad = || CliError::Config(format!("cannot parse point {s:?} (expected theta,phi)"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let theta: f64 = a.trim().parse().map_err(|_| bad())?;
    let phi: f64 = b.trim().parse().map_err(|_| bad())?;
    SphericalPoint::new(theta, phi).map_err(|e| CliError::Config(e.to_string()))
}

fn params(phi: &str, mu: f64, l_max: usize) -> Result<ModelParams, CliError> {
    ModelParams::new(mu, parse_clock(phi)?, l_max).map_err(|e| CliError::Config(e.to_string()))
}

fn lat_long(n: usize) -> impl Iterator<Item = SphericalPoint> {
    let n = n.max(1);
    (0..n).flat_map(move |j| {
        let theta = (j as f64 + 0.5) * PI / n as f64;
        (0..2 * n).map(move |k| {
            SphericalPoint::new(theta, k as f64 * PI / n as f64).expect("grid colatitudes lie in (0, pi)")
        })
    })
}

pub fn cmd_solve<E: Executor>(args: &SolveArgs, common: &Common, exec: &E) -> Result<Outcome, CliError> {
    let params = params(&args.phi, args.mu, args.l_max)?;
    let init: InitSpec = args.init.parse()?;
    let f = init.build(args.l_max)?;
    if args.t.iter().any(|t| !(*t >= 0.0)) {
        return Err(CliError::Config("times must be nonnegative".into()));
    }
    prepare_dir(&args.out, "solve", common, args)?;
    let engine = args.engine.resolve(&params.clock, args.samples, common.seed);
    for (i, &t) in args.t.iter().enumerate() {
        let snap = match params.clock {
            Clock::Classical => {
                let mut s = solve_classical(&f, params.mu, t)?;
                s.params = params;
                s
            }
            Clock::Nonlocal(_) => solve_nonlocal_with(&f, &params, t, engine, exec)?,
        };
        write_json(&args.out.join(format!("snapshot_{i}.json")), &SnapshotJson::from(&snap))?;
        let mut csv = Csv::new(&["theta", "phi", "re", "im"]);
        for p in lat_long(args.grid) {
            let u = synthesize(&snap.coeffs, p);
            csv.row(&[&p.theta(), &p.phi(), &u.re, &u.im]);
        }
        csv.write(&args.out.join(format!("grid_{i}.csv")))?;
    }
    Ok(Outcome::Done(format!(
        "wrote {} snapshot(s) to {}",
        args.t.len(),
        args.out.display()
    )))
}

#[derive(Serialize)]
struct DensityPointJson {
    t: f64,
    x: [f64; 2],
    y: [f64; 2],
    value: f64,
    clipped: f64,
    tail_bound: f64,
    err: f64,
}

pub fn cmd_density<E: Executor>(args: &DensityArgs, common: &Common, exec: &E) -> Result<Outcome, CliError> {
    let params = params(&args.phi, args.mu, args.l_max)?;
    let x = parse_point(&args.x)?;
    let y = args.y.as_deref().map(parse_point).transpose()?;
    if !(args.t > 0.0) {
        return Err(CliError::Config("density needs t > 0".into()));
    }
    let engine = match args.engine {
        DensityEngineArg::Series => DensityEngine::Series(Engine::preferred(&params.spec())),
        DensityEngineArg::McLegendre => DensityEngine::McLegendre {
            samples: args.samples,
            seed: common.seed,
            ds: None,
        },
    };
    if let Some(y) = y {
        // refuse before writing anything
        let v = transition_density_with(&params, args.t, x, y, engine, exec)?;
        prepare_dir(&args.out, "density", common, args)?;
        let out = DensityPointJson {
            t: args.t,
            x: [x.theta(), x.phi()],
            y: [y.theta(), y.phi()],
            value: v.value,
            clipped: v.clipped,
            tail_bound: v.tail_bound,
            err: v.err,
        };
        write_json(&args.out.join("density.json"), &out)?;
        return Ok(Outcome::Done(format!(
            "p = {:.10e} (tail bound {:.3e})",
            v.value, v.tail_bound
        )));
    }
    prepare_dir(&args.out, "density", common, args)?;
    let points: Vec<SphericalPoint> = lat_long(args.grid).collect();
    let mut csv = Csv::new(&["theta", "phi", "value", "clipped", "tail_bound", "flag"]);
    let rows: Vec<Result<(String, String, String, &str), CliError>> = match engine {
        DensityEngine::Series(e) => {
            let ev = DensityEvaluator::new_with(&params, args.t, e, exec)?;
            points
                .par_iter()
                .map(|&p| {
                    if in_forbidden_band(x, p, GUARD) {
                        return Ok((String::new(), String::new(), String::new(), "forbidden"));
                    }
                    let v = ev.eval(x, p)?;
                    let flag = if v.needs_warning(args.tail_tol) { "tail" } else { "ok" };
                    Ok((
                        v.value.to_string(),
                        v.clipped.to_string(),
                        v.tail_bound.to_string(),
                        flag,
                    ))
                })
                .collect()
        }
        mc => points
            .iter()
            .map(|&p| {
                let v = transition_density_with(&params, args.t, x, p, mc, exec)?;
                let flag = if in_forbidden_band(x, p, GUARD) { "band" } else { "ok" };
                Ok((
                    v.value.to_string(),
                    v.clipped.to_string(),
                    v.tail_bound.to_string(),
                    flag,
                ))
            })
            .collect(),
    };
    let mut masked = 0;
    for (p, row) in points.iter().zip(rows) {
        let (v, c, tb, flag) = row?;
        masked += usize::from(flag == "forbidden");
        csv.row(&[&p.theta(), &p.phi(), &v, &c, &tb, &flag]);
    }
    csv.write(&args.out.join("density.csv"))?;
    Ok(Outcome::Done(format!(
        "wrote {} grid values ({masked} masked in the forbidden band) to {}",
        points.len(),
        args.out.display()
    )))
}

#[derive(Serialize)]
struct MomentJson {
    l: usize,
    m: i64,
    re: f64,
    im: f64,
    se_re: f64,
    se_im: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectral: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    z: Option<f64>,
}

#[derive(Serialize)]
struct SimulateSummary {
    phi: String,
    mu: f64,
    t: f64,
    x: [f64; 2],
    n_paths: usize,
    step_h: f64,
    mean_l: f64,
    moments: Vec<MomentJson>,
}

pub fn cmd_simulate<E: Executor>(args: &SimulateArgs, common: &Common, exec: &E) -> Result<Outcome, CliError> {
    let params = params(&args.phi, args.mu, args.moments.max(1))?;
    let x = parse_point(&args.x)?;
    if !(args.t > 0.0) || !(args.step_h > 0.0) || args.n_paths < 100 {
        return Err(CliError::Config("need t > 0, step_h > 0 and at least 100 paths".into()));
    }
    if args.rings == 0 || args.sectors == 0 {
        return Err(CliError::Config("bins need at least one ring and one sector".into()));
    }
    prepare_dir(&args.out, "simulate", common, args)?;
    let cfg = WalkConfig {
        step_h: args.step_h,
        mu: args.mu,
        t_phys: args.t,
        n_paths: args.n_paths,
        seed: common.seed,
    };
    let samples = simulate_endpoints(x, &cfg, &params.clock, args.ds, exec)?;
    endpoints_csv(&samples).write(&args.out.join("endpoints.csv"))?;
    let bins = EqualAreaBins {
        rings: args.rings,
        sectors: args.sectors,
    };
    histogram_csv(&bins, &bins.histogram(samples.iter().map(|s| &s.endpoint)))
        .write(&args.out.join("histogram.csv"))?;
    if !params.clock.is_classical() {
        let ls: Vec<f64> = samples.iter().map(|s| s.l_value).collect();
        clock_histogram_csv(&Histogram::from_samples(&ls, 50, 0.0)).write(&args.out.join("clock_histogram.csv"))?;
        // one illustrative clock path on a stream no endpoint chunk uses
        let ds = args.ds.unwrap_or_else(|| mc_default_ds(args.t));
        let s_max = ls.iter().cloned().fold(ds, f64::max);
        let path = sample_path(&params.spec(), s_max, ds, &mut chunk_rng(common.seed, usize::MAX))?;
        subordinator_path_csv(&path).write(&args.out.join("clock_path.csv"))?;
    }

    let table = if args.verify {
        let spec = params.spec();
        Some(EigenfunctionTable::compute(
            &spec,
            args.mu,
            args.t,
            args.moments,
            Engine::preferred(&spec),
        )?)
    } else {
        None
    };
    let mut moments = Vec::new();
    let mut worst_z: f64 = 0.0;
    for l in 1..=args.moments {
        for m in -(l as i64)..=(l as i64) {
            let f = HarmonicCoefficients::single(l, l, m, Complex64::new(1.0, 0.0))?;
            let est = average_over(&f, &samples);
            let (spectral, z) = match &table {
                Some(tab) => {
                    let v = tab.get(l, m).value * ylm(l, m, x)?;
                    let z = (est.value - v).norm() / est.stderr().max(1e-300);
                    worst_z = worst_z.max(z);
                    (Some([v.re, v.im]), Some(z))
                }
                None => (None, None),
            };
            moments.push(MomentJson {
                l,
                m,
                re: est.value.re,
                im: est.value.im,
                se_re: est.se_re,
                se_im: est.se_im,
                spectral,
                z,
            });
        }
    }
    let summary = SimulateSummary {
        phi: args.phi.clone(),
        mu: args.mu,
        t: args.t,
        x: [x.theta(), x.phi()],
        n_paths: args.n_paths,
        step_h: args.step_h,
        mean_l: samples.iter().map(|s| s.l_value).sum::<f64>() / samples.len() as f64,
        moments,
    };
    write_json(&args.out.join("summary.json"), &summary)?;
    if let Some(tab) = &table {
        write_json(&args.out.join("eigenfunctions.json"), &EfunTableJson::from(tab))?;
        return Ok(Outcome::Done(format!(
            "simulated {} paths; largest |z| against spectral values {worst_z:.2}",
            args.n_paths
        )));
    }
    Ok(Outcome::Done(format!(
        "simulated {} paths into {}",
        args.n_paths,
        args.out.display()
    )))
}

pub fn cmd_verify<E: Executor>(args: &VerifyArgs, common: &Common, exec: &E) -> Result<Outcome, CliError> {
    let clock = args.phi.as_deref().map(parse_clock).transpose()?;
    let opts = VerifyOptions {
        clock,
        mu: args.mu,
        seed: common.seed,
        samples: args.samples,
    };
    let report = run_suite(args.suite, &opts, exec)?;
    if let Some(dir) = &args.out {
        prepare_dir(dir, "verify", common, args)?;
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(Outcome::Verified(report))
}
