//! JSON and CSV file formats.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use kolmosphere_core::bernstein::{Histogram, SubordinatorPath};
use kolmosphere_core::montecarlo::EqualAreaBins;
use kolmosphere_core::{Complex64, EigenfunctionTable, HarmonicCoefficients, PathSample, SolutionSnapshot};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// `{"l_max": N, "coeffs": [[re, im], ...]}`, degree-major with `m` from `−ℓ` to `ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientsJson {
    pub l_max: usize,
    pub coeffs: Vec<[f64; 2]>,
}

impl From<&HarmonicCoefficients> for CoefficientsJson {
    fn from(c: &HarmonicCoefficients) -> Self {
        Self {
            l_max: c.l_max(),
            coeffs: c.as_slice().iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<CoefficientsJson> for HarmonicCoefficients {
    type Error = kolmosphere_core::Error;

    fn try_from(j: CoefficientsJson) -> Result<Self, Self::Error> {
        HarmonicCoefficients::from_vec(
            j.l_max,
            j.coeffs.iter().map(|[re, im]| Complex64::new(*re, *im)).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotJson {
    pub t: f64,
    pub mu: f64,
    pub phi: String,
    pub l_max: usize,
    pub tail: f64,
    pub engine_err: f64,
    pub coeffs: Vec<[f64; 2]>,
}

impl From<&SolutionSnapshot> for SnapshotJson {
    fn from(s: &SolutionSnapshot) -> Self {
        let c = CoefficientsJson::from(&s.coeffs);
        Self {
            t: s.t,
            mu: s.params.mu,
            phi: String::from(&s.params.clock),
            l_max: c.l_max,
            tail: s.truncation_tail,
            engine_err: s.engine_err,
            coeffs: c.coeffs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfunEntryJson {
    pub l: usize,
    pub m: i64,
    pub value_re: f64,
    pub value_im: f64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfunTableJson {
    pub phi: String,
    pub mu: f64,
    pub t: f64,
    pub engine: String,
    pub entries: Vec<EfunEntryJson>,
}

impl From<&EigenfunctionTable> for EfunTableJson {
    fn from(tab: &EigenfunctionTable) -> Self {
        let mut entries = Vec::with_capacity(tab.entries.len());
        for l in 0..=tab.l_max {
            for m in -(l as i64)..=(l as i64) {
                let e = tab.get(l, m);
                entries.push(EfunEntryJson {
                    l,
                    m,
                    value_re: e.value.re,
                    value_im: e.value.im,
                    err: e.err,
                });
            }
        }
        Self {
            phi: tab.spec.to_string(),
            mu: tab.mu,
            t: tab.t,
            engine: tab.engine.name().into(),
            entries,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_coefficients(path: &Path) -> Result<HarmonicCoefficients, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let j: CoefficientsJson =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    HarmonicCoefficients::try_from(j).map_err(|e| CliError::Config(e.to_string()))
}

/// CSV text: a header line and one line per row.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, fields: &[&dyn std::fmt::Display]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            let _ = write!(self.text, "{f}");
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, &self.text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

/// `theta,phi,l_value`
pub fn endpoints_csv(samples: &[PathSample]) -> Csv {
    let mut csv = Csv::new(&["theta", "phi", "l_value"]);
    for s in samples {
        csv.row(&[&s.endpoint.theta(), &s.endpoint.phi(), &s.l_value]);
    }
    csv
}

/// `bin_id,theta_lo,theta_hi,phi_lo,phi_hi,mass`
pub fn histogram_csv(bins: &EqualAreaBins, mass: &[f64]) -> Csv {
    let mut csv = Csv::new(&["bin_id", "theta_lo", "theta_hi", "phi_lo", "phi_hi", "mass"]);
    for (i, m) in mass.iter().enumerate() {
        let (t0, t1, p0, p1) = bins.bounds(i);
        csv.row(&[&i, &t0, &t1, &p0, &p1, m]);
    }
    csv
}

/// Operational-time grid against subordinator values.
pub fn subordinator_path_csv(path: &SubordinatorPath) -> Csv {
    let mut csv = Csv::new(&["s", "S"]);
    for (s, v) in path.s_grid().zip(path.values()) {
        csv.row(&[&s, v]);
    }
    csv
}

pub fn clock_histogram_csv(h: &Histogram) -> Csv {
    let mut csv = Csv::new(&["bin_center", "mass"]);
    for (c, m) in h.centers().zip(&h.mass) {
        csv.row(&[&c, m]);
    }
    csv
}
