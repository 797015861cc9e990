use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default simulation step in years.
pub const DEFAULT_DT: f64 = 1.0 / 512.0;

/// Uniform time grid `0 = t₀ < t₁ < … < t_N = T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Grid(alloc::format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Grid("at least one step required".into()));
        }
        Ok(Self { horizon, steps })
    }

    /// Grid with step close to `dt`, rounded up to a whole number of steps.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Grid(alloc::format!("step must be positive, got {dt}")));
        }
        let steps = libm::ceil(horizon / dt - 1e-9).max(1.0) as usize;
        Self::new(horizon, steps)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid points, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }
}
