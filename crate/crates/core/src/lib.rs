//! Pricing core for a fractional Heston model whose variance and log-price
//! share jumps from a Lévy subordinator.
//!
//! The variance is
//!
//! ```text
//! σ²ₜ = Uₜ + c₁νZₜ + c₂ν I^α Zₜ + c₃η Jₜ,    α = H − 1/2
//! ```
//!
//! with `U` the deterministic CIR mean curve, `Z` the stochastic part of the
//! CIR driver, `I^α` the Riemann–Liouville integral and `J` the subordinator.
//! The crate is `no_std` (it needs `alloc`); IO, threads and the CLI live in
//! the `fsvjj` companion crate.
#![no_std]

extern crate alloc;

pub mod analytics;
pub mod approx;
pub mod engine;
pub mod grid;
pub mod levy;
pub mod quadrature;
pub mod special;
pub mod variance;

use alloc::string::String;

pub use analytics::{BsPoint, implied_vol};
pub use approx::{ApproxComponents, PricingMode, ProjectedVol};
pub use engine::{McConfig, McStatistics, PathEnsemble};
pub use grid::TimeGrid;
pub use levy::LevyMeasureSpec;
pub use variance::ModelParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A model or instrument condition failed; the message names it.
    #[error("{0}")]
    Validation(String),
    #[error("divergent integral: {0}")]
    DivergentIntegral(String),
    #[error("quadrature did not converge (estimate {estimate:e}, error {error:e})")]
    Quadrature { estimate: f64, error: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
}

pub type Result<T> = core::result::Result<T, Error>;

/// Vanilla European contract on the modelled asset.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Instrument {
    pub spot: f64,
    pub strike: f64,
    pub maturity: f64,
}

impl Instrument {
    pub fn log_spot(&self) -> f64 {
        libm::log(self.spot)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spot > 0.0) {
            return Err(Error::Validation(alloc::format!("spot must be > 0, got {}", self.spot)));
        }
        if !(self.strike >= 0.0) {
            return Err(Error::Validation(alloc::format!(
                "strike must be >= 0, got {}",
                self.strike
            )));
        }
        if !(self.maturity > 0.0) {
            return Err(Error::Validation(alloc::format!(
                "maturity must be > 0, got {}",
                self.maturity
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payoff {
    Call,
    Put,
}

impl Payoff {
    #[inline]
    pub fn value(self, spot: f64, strike: f64) -> f64 {
        match self {
            Payoff::Call => (spot - strike).max(0.0),
            Payoff::Put => (strike - spot).max(0.0),
        }
    }
}
