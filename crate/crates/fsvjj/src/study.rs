//! Experiment drivers: the error-scaling sweep and the strike smile.

use fsvjj_core::analytics::implied_vol;
use fsvjj_core::approx::{first_order_price_with, ApproxOptions};
use fsvjj_core::engine::{conditional_call_mc, simulate_paths, BlockExecutor};
use fsvjj_core::{Instrument, McConfig, ModelParams};
use serde::Serialize;

use crate::config::{StudyConfig, SweepVariable};
use crate::Result;

/// Accepted range of the fitted log-log slope.
pub const SLOPE_BAND: (f64, f64) = (1.6, 2.4);

/// Largest stderr allowed, as a fraction of the smallest gap.
pub const STDERR_GAP_RATIO: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub param: f64,
    pub v_approx: f64,
    pub v_mc: f64,
    pub stderr: f64,
    pub abs_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub variable: SweepVariable,
    pub rows: Vec<ScalingRow>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_in_band: bool,
    /// Every stderr is below `STDERR_GAP_RATIO` times the smallest gap.
    pub resolved: bool,
}

impl ScalingReport {
    pub fn passed(&self) -> bool {
        self.slope_in_band && self.resolved
    }
}

/// Least-squares line through `(ln x, ln y)`, returned as (slope, intercept).
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Sweeps one small parameter and compares the first-order price with the
/// simulated call price (conditional estimator with control variates).
pub fn scaling_study<E: BlockExecutor>(
    base: &ModelParams,
    inst: &Instrument,
    study: &StudyConfig,
    engine: &McConfig,
    exec: &E,
) -> Result<ScalingReport> {
    let opts = ApproxOptions { mode: study.mode, delta: study.delta, mc: *engine };
    let mut rows = Vec::with_capacity(study.grid.len());
    for &value in &study.grid {
        let params = study.variable.apply(base, value);
        let approx = first_order_price_with(&params, inst, &opts, exec)?;
        let ens = simulate_paths(&params, inst, engine)?;
        let mc = conditional_call_mc(&ens, inst.strike, exec);
        rows.push(ScalingRow {
            param: value,
            v_approx: approx.total,
            v_mc: mc.estimate,
            stderr: mc.stderr,
            abs_gap: (mc.estimate - approx.total).abs(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.param).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.abs_gap).collect();
    let (slope, intercept) = loglog_fit(&xs, &ys);
    let min_gap = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_se = rows.iter().map(|r| r.stderr).fold(0.0, f64::max);
    Ok(ScalingReport {
        variable: study.variable,
        rows,
        slope,
        intercept,
        slope_in_band: slope >= SLOPE_BAND.0 && slope <= SLOPE_BAND.1,
        resolved: max_se < STDERR_GAP_RATIO * min_gap,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmileRow {
    pub strike: f64,
    pub price: f64,
    pub implied_vol: Option<f64>,
    /// Price within the model-free call bounds `[(S − Ke^{−rT})⁺, S]`.
    pub within_bounds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Smile {
    pub rows: Vec<SmileRow>,
    /// Prices do not increase with strike.
    pub monotone: bool,
}

/// Tolerance of the implied-volatility bisection.
pub const IV_TOL: f64 = 1e-8;

/// First-order call prices and their implied volatilities across strikes.
pub fn smile<E: BlockExecutor>(
    params: &ModelParams,
    spot: f64,
    maturity: f64,
    strikes: &[f64],
    opts: &ApproxOptions,
    exec: &E,
) -> Result<Smile> {
    let mut sorted = strikes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let df = (-params.r * maturity).exp();
    let mut rows = Vec::with_capacity(sorted.len());
    for &k in &sorted {
        let inst = Instrument { spot, strike: k, maturity };
        let price = first_order_price_with(params, &inst, opts, exec)?.total;
        let lower = (spot - k * df).max(0.0);
        let within_bounds = price >= lower && price <= spot;
        let implied_vol = if within_bounds { implied_vol(price, spot, k, params.r, maturity, IV_TOL) } else { None };
        rows.push(SmileRow { strike: k, price, implied_vol, within_bounds });
    }
    let monotone = rows.windows(2).all(|w| w[1].price <= w[0].price);
    Ok(Smile { rows, monotone })
}
