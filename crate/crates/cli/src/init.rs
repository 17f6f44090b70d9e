//! Initial data grammar: `Y:l,m` | `randHs:s,seed` | `cap:theta0`.

use std::fmt;
use std::str::FromStr;

use kolmosphere_core::solver::{cap_indicator, random_hs};
use kolmosphere_core::{Complex64, HarmonicCoefficients};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitSpec {
    Harmonic { l: usize, m: i64 },
    RandomHs { s: f64, seed: u64 },
    Cap { theta0: f64 },
}

impl InitSpec {
    /// Coefficients of degree `l_max`; a single harmonic above `l_max` is a config error.
    pub fn build(&self, l_max: usize) -> Result<HarmonicCoefficients, CliError> {
        match *self {
            Self::Harmonic { l, m } => {
                if l > l_max {
                    return Err(CliError::Config(format!("Y:{l},{m} needs l_max >= {l}, got {l_max}")));
                }
                HarmonicCoefficients::single(l_max, l, m, Complex64::new(1.0, 0.0))
                    .map_err(|e| CliError::Config(e.to_string()))
            }
            Self::RandomHs { s, seed } => random_hs(s, l_max, seed).map_err(|e| CliError::Config(e.to_string())),
            Self::Cap { theta0 } => cap_indicator(theta0, l_max).map_err(|e| CliError::Config(e.to_string())),
        }
    }
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Harmonic { l, m } => write!(f, "Y:{l},{m}"),
            Self::RandomHs { s, seed } => write!(f, "randHs:{s},{seed}"),
            Self::Cap { theta0 } => write!(f, "cap:{theta0}"),
        }
    }
}

impl FromStr for InitSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || {
            CliError::Config(format!(
                "cannot parse initial data {s:?} (expected Y:l,m | randHs:s,seed | cap:theta0)"
            ))
        };
        let (kind, args) = s.trim().split_once(':').ok_or_else(bad)?;
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        match (kind, parts.as_slice()) {
            ("Y", [l, m]) => {
                let l: usize = l.parse().map_err(|_| bad())?;
                let m: i64 = m.parse().map_err(|_| bad())?;
                if m.unsigned_abs() as usize > l {
                    return Err(CliError::Config(format!("Y:{l},{m} has |m| > l")));
                }
                Ok(Self::Harmonic { l, m })
            }
            ("randHs", [sv, seed]) => Ok(Self::RandomHs {
                s: sv.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }),
            ("cap", [theta0]) => Ok(Self::Cap {
                theta0: theta0.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for InitSpec {
    type Error = CliError;

    fn try_from(s: String) -> Result<Self, CliError> {
        s.parse()
    }
}

impl From<InitSpec> for String {
    fn from(i: InitSpec) -> Self {
        i.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar() {
        assert_eq!(
            "Y:3,-2".parse::<InitSpec>().unwrap(),
            InitSpec::Harmonic { l: 3, m: -2 }
        );
        assert_eq!(
            "randHs:1.5,7".parse::<InitSpec>().unwrap(),
            InitSpec::RandomHs { s: 1.5, seed: 7 }
        );
        assert_eq!("cap:0.5".parse::<InitSpec>().unwrap(), InitSpec::Cap { theta0: 0.5 });
        for bad in ["Y:1", "Y:1,2", "cap", "foo:1", "randHs:x,1"] {
            assert!(bad.parse::<InitSpec>().is_err(), "{bad}");
        }
        for s in ["Y:3,-2", "randHs:1.5,7", "cap:0.5"] {
            assert_eq!(s.parse::<InitSpec>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn degree_must_fit() {
        assert!(matches!(
            InitSpec::Harmonic { l: 5, m: 0 }.build(4),
            Err(CliError::Config(_))
        ));
        assert_eq!(InitSpec::Harmonic { l: 2, m: 1 }.build(4).unwrap().l_max(), 4);
    }
}
