//! Tests of sign congruence, `H₀: μ₁μ₂ ≥ 0`, for two asymptotically normal
//! estimates with known or estimated scales and correlation.
//!
//! ```
//! use signcong::{recommended_test, Correlation, Covariance2, EstimatePair, NullDirection};
//!
//! let est = EstimatePair::known(2.0, -1.7, Covariance2::unit(Correlation::ZERO))?;
//! let out = recommended_test(&est, 0.05, NullDirection::Congruent)?;
//! assert!(out.reject);
//! # Ok::<(), signcong::Error>(())
//! ```
//!
//! The guide in `book/` walks through each module; its snippets run as
//! doctests of this crate.

pub mod bootstrap;
pub mod calibration;
pub mod cones;
pub mod error;
pub mod normal;
pub mod procedures;
pub mod regions;
pub mod simulate;

pub use calibration::{critical_value, CalibrationConfig, Calibrator, CriticalValueEntry};
pub use cones::{cone_basis_change, cone_test, Cone2};
pub use error::{Error, Result};
pub use normal::{Correlation, Covariance2};
pub use procedures::{
    bmw_test, feasible_test, fractal_test, heuristic_bootstrap_test, recommended_test, run_test, EstimatePair,
    NullDirection, TestName, TestOutcome,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/normal.md")]
    mod normal {}
    #[doc = include_str!("../../../book/src/regions.md")]
    mod regions {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/procedures.md")]
    mod procedures {}
    #[doc = include_str!("../../../book/src/cones.md")]
    mod cones {}
    #[doc = include_str!("../../../book/src/bootstrap.md")]
    mod bootstrap {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
