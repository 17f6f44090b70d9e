//! Numerical core for time-nonlocal Kolmogorov equations on the unit sphere.
//!
//! The backward equation `D^Φ u = (Δ + μ ∂_φ) u` is solved by expanding the
//! initial datum in spherical harmonics and multiplying every coefficient by
//! the eigenfunction `e_Φ(t; iμm − ℓ(ℓ+1)) = E[exp(λ L_Φ(t))]` of the nonlocal
//! derivative `D^Φ`. Every closed form is paired with an independent route:
//! Monte Carlo simulation of the drifted spherical Brownian motion run on the
//! inverse-subordinator clock `L_Φ`.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command line
//! front end and multi-threaded Monte Carlo live in the `kolmosphere` crate.
#![no_std]
// `Float` is unused whenever std is linked and its inherent float methods win
#![allow(unused_imports)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bernstein;
pub mod eigenfunction;
mod error;
pub mod laplace;
pub mod mittag_leffler;
pub mod montecarlo;
pub mod solver;
pub mod special;
pub mod sphere;
pub mod walk;

pub use bernstein::{BernsteinSpec, InverseSample, SubordinatorPath};
pub use eigenfunction::{EfunValue, EigenfunctionQuery, EigenfunctionTable, Engine};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use solver::{Clock, ModelParams, SolutionSnapshot};
pub use sphere::{HarmonicCoefficients, PowerSpectrum, SphericalPoint};
pub use walk::{PathSample, WalkConfig};
