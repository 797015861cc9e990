//! Model parameters, the CIR driver and the fractional variance process
//!
//! ```text
//! σ²ₜ = Uₜ + c₁νZₜ + c₂ν I^α Zₜ + c₃η Jₜ
//! Uₜ  = θ + e^{−κt}(σ̄₀² − θ)
//! Zₜ  = ∫₀ᵗ e^{−κ(t−s)} √σ̄²ₛ dWₛ
//! ```

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::grid::TimeGrid;
use crate::levy::{JumpPath, LevyMeasureSpec};
use crate::special::gamma;
use crate::{Error, Result};

/// `(1 − e^{−κτ})/κ`, with the κ → 0 limit `τ`.
#[inline]
pub fn decay_integral(kappa: f64, tau: f64) -> f64 {
    if kappa < 1e-8 {
        tau * (1.0 - 0.5 * kappa * tau)
    } else {
        -libm::expm1(-kappa * tau) / kappa
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kappa: f64,
    pub theta: f64,
    pub nu: f64,
    /// Initial value σ̄₀² of the CIR variance.
    pub v0bar: f64,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub eta: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub r: f64,
    #[serde(default)]
    pub levy: LevyMeasureSpec,
}

/// How [`ModelParams::validate_with`] treats a Feller violation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FellerCheck {
    #[default]
    Reject,
    Allow,
}

fn violation(msg: String) -> Error {
    Error::Validation(msg)
}

impl ModelParams {
    /// Fractional order α = H − 1/2.
    #[inline]
    pub fn alpha(&self) -> f64 {
        self.hurst - 0.5
    }

    /// Uₜ = σ̄₀²e^{−κt} + θ(1 − e^{−κt}).
    #[inline]
    pub fn mean_curve(&self, t: f64) -> f64 {
        let d = libm::exp(-self.kappa * t);
        self.v0bar * d + self.theta * -libm::expm1(-self.kappa * t)
    }

    /// ∫ₛᵗ Uᵤ du.
    pub fn integrated_mean_curve(&self, s: f64, t: f64) -> f64 {
        self.theta * (t - s)
            + (self.v0bar - self.theta) * libm::exp(-self.kappa * s) * decay_integral(self.kappa, t - s)
    }

    /// 1 − c₁ − c₂T^α/Γ(α+1).
    pub fn positivity_margin(&self, horizon: f64) -> f64 {
        let a = self.alpha();
        1.0 - self.c1 - self.c2 * libm::pow(horizon, a) / gamma(a + 1.0)
    }

    /// 2κθ − ν².
    pub fn feller_gap(&self) -> f64 {
        2.0 * self.kappa * self.theta - self.nu * self.nu
    }

    /// ζ(ρ₂, η) of the configured measure.
    pub fn zeta(&self) -> Result<f64> {
        if self.eta == 0.0 || self.levy.is_null() {
            return Ok(0.0);
        }
        self.levy.compensator_zeta(self.rho2, self.eta)
    }

    /// Standing assumptions of the model on `[0, horizon]`.
    pub fn validate(&self, horizon: f64) -> Result<()> {
        self.validate_with(horizon, FellerCheck::Reject)
    }

    pub fn validate_with(&self, horizon: f64, feller: FellerCheck) -> Result<()> {
        let all = [
            ("kappa", self.kappa),
            ("theta", self.theta),
            ("nu", self.nu),
            ("v0bar", self.v0bar),
            ("H", self.hurst),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("eta", self.eta),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("r", self.r),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                return Err(violation(alloc::format!("{name} must be finite, got {v}")));
            }
        }
        if self.kappa < 0.0 {
            return Err(violation(alloc::format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if !(self.theta > 0.0) {
            return Err(violation(alloc::format!("theta must be > 0, got {}", self.theta)));
        }
        if self.nu < 0.0 {
            return Err(violation(alloc::format!("nu must be >= 0, got {}", self.nu)));
        }
        if !(self.v0bar > 0.0) {
            return Err(violation(alloc::format!("v0bar must be > 0, got {}", self.v0bar)));
        }
        if !(self.hurst > 0.5 && self.hurst < 1.0) {
            return Err(violation(alloc::format!("H must lie in (1/2, 1), got {}", self.hurst)));
        }
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3), ("eta", self.eta)] {
            if v < 0.0 {
                return Err(violation(alloc::format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(-1.0..=1.0).contains(&self.rho1) {
            return Err(violation(alloc::format!("rho1 must lie in [-1, 1], got {}", self.rho1)));
        }
        if self.rho2 > 0.0 {
            return Err(violation(alloc::format!("rho2 must be <= 0, got {}", self.rho2)));
        }
        if feller == FellerCheck::Reject && self.feller_gap() < 0.0 {
            return Err(violation(alloc::format!(
                "Feller: 2κθ < ν² ({} < {})",
                2.0 * self.kappa * self.theta,
                self.nu * self.nu
            )));
        }
        let margin = self.positivity_margin(horizon);
        if margin < 0.0 {
            return Err(violation(alloc::format!(
                "positivity: 1 − c₁ − c₂T^α/(αΓ(α)) = {margin} < 0 at T = {horizon}"
            )));
        }
        self.levy.validate()?;
        let u = libm::fabs(self.rho2 * self.eta);
        if !self.levy.is_null() && !(self.levy.tail_rate() > u) {
            return Err(violation(alloc::format!(
                "levy: tail rate {} must exceed |ρ₂|η = {u}",
                self.levy.tail_rate()
            )));
        }
        Ok(())
    }

    /// Hypotheses of the first-order formula: the standing assumptions with
    /// strict Feller when ν > 0. A zero positivity margin is accepted: σ² is
    /// then still a nonnegative mix of U and the CIR variance.
    pub fn validate_first_order(&self, horizon: f64) -> Result<()> {
        self.validate(horizon)?;
        if self.nu > 0.0 && !(self.feller_gap() > 0.0) {
            return Err(violation(alloc::format!(
                "Feller: 2κθ > ν² required, got {} <= {}",
                2.0 * self.kappa * self.theta,
                self.nu * self.nu
            )));
        }
        Ok(())
    }
}

/// Claimed pathwise floor `σ̄₀²e^{−κt} + θ(1−e^{−κt})·(1 − c₁ − c₂T^α/(αΓ(α)))`.
pub fn variance_lower_bound(params: &ModelParams, t: f64, horizon: f64) -> f64 {
    let d = libm::exp(-params.kappa * t);
    params.v0bar * d + params.theta * -libm::expm1(-params.kappa * t) * params.positivity_margin(horizon)
}

/// CIR sample: σ̄² and the stochastic convolution Z on the grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CirPath {
    pub var: Vec<f64>,
    pub z: Vec<f64>,
}

/// Runs the CIR recursion on given Brownian increments.
///
/// `U` is exact; `Z` is stepped as `Zₙ₊₁ = e^{−κΔt}(Zₙ + √(xₙ⁺) ΔWₙ)` with
/// `xₙ = Uₙ + νZₙ`, and `σ̄² = (U + νZ)⁺`. Only the diffusion coefficient is
/// truncated, which keeps `E[Zₙ] = 0` exactly.
pub fn cir_from_increments(params: &ModelParams, grid: &TimeGrid, dw: &[f64], path: &mut CirPath) {
    let n = grid.steps();
    debug_assert_eq!(dw.len(), n);
    let decay = libm::exp(-params.kappa * grid.dt());
    path.var.clear();
    path.z.clear();
    path.var.push(params.v0bar);
    path.z.push(0.0);
    let mut z = 0.0;
    let mut x = params.v0bar;
    for (k, &d) in dw.iter().enumerate() {
        z = decay * (z + libm::sqrt(x.max(0.0)) * d);
        x = params.mean_curve(grid.time(k + 1)) + params.nu * z;
        path.z.push(z);
        path.var.push(x.max(0.0));
    }
}

/// Brownian increments `√Δt·N(0,1)` for every step.
pub fn brownian_increments<R: Rng + ?Sized>(grid: &TimeGrid, rng: &mut R, out: &mut Vec<f64>) {
    let sd = libm::sqrt(grid.dt());
    out.clear();
    out.extend((0..grid.steps()).map(|_| {
        let g: f64 = StandardNormal.sample(rng);
        sd * g
    }));
}

/// Simulates one CIR path with its own Brownian draws.
pub fn simulate_cir<R: Rng + ?Sized>(params: &ModelParams, grid: &TimeGrid, rng: &mut R) -> Result<CirPath> {
    if params.feller_gap() < 0.0 {
        return Err(violation(alloc::format!(
            "Feller: 2κθ < ν² ({} < {})",
            2.0 * params.kappa * params.theta,
            params.nu * params.nu
        )));
    }
    let mut dw = Vec::new();
    brownian_increments(grid, rng, &mut dw);
    let mut path = CirPath::default();
    cir_from_increments(params, grid, &dw, &mut path);
    Ok(path)
}

/// Product-integration weights for the Riemann–Liouville integral on a
/// uniform grid: `wₖ = Δt^α (k^α − (k−1)^α)/Γ(α+1)`, so that
/// `I^α f(tₙ) ≈ Σ_{j<n} f(tⱼ) w_{n−j}` integrates the kernel exactly against
/// the left-endpoint step interpolant of f.
#[derive(Clone, Debug)]
pub struct FractionalKernel {
    alpha: f64,
    weights: Vec<f64>,
}

impl FractionalKernel {
    pub fn new(alpha: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(violation(alloc::format!("fractional order must lie in (0, 1), got {alpha}")));
        }
        let scale = libm::pow(dt, alpha) / gamma(alpha + 1.0);
        let mut weights = Vec::with_capacity(steps + 1);
        weights.push(0.0);
        let mut prev = 0.0;
        for k in 1..=steps {
            let cur = libm::pow(k as f64, alpha);
            weights.push(scale * (cur - prev));
            prev = cur;
        }
        Ok(Self { alpha, weights })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Writes `I^α f` at every grid point into `out`.
    pub fn apply(&self, f: &[f64], out: &mut Vec<f64>) {
        let len = f.len();
        debug_assert!(len <= self.weights.len());
        out.clear();
        out.push(0.0);
        for n in 1..len {
            let w = &self.weights[1..=n];
            // Σ_{j<n} f_j w_{n−j}
            let s: f64 = f[..n].iter().zip(w.iter().rev()).map(|(a, b)| a * b).sum();
            out.push(s);
        }
    }
}

/// `I^α f` of grid samples `f` with step `dt`.
pub fn fractional_integral(values: &[f64], dt: f64, alpha: f64) -> Result<Vec<f64>> {
    let steps = values.len().saturating_sub(1);
    let k = FractionalKernel::new(alpha, dt, steps)?;
    let mut out = Vec::with_capacity(values.len());
    k.apply(values, &mut out);
    Ok(out)
}

/// Variance path sampled on the grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VariancePathState {
    pub cir_var: Vec<f64>,
    pub z: Vec<f64>,
    /// I^α Z.
    pub frac_z: Vec<f64>,
    pub j: Vec<f64>,
    /// σ².
    pub var: Vec<f64>,
    /// Realized variance Yₜ = ∫₀ᵗ σ² ds, trapezoidal.
    pub realized: Vec<f64>,
}

/// Assembles σ² from a CIR path and a subordinator path. `kernel` may be
/// `None` when `c₂ = 0`.
pub fn build_variance_path(
    params: &ModelParams,
    grid: &TimeGrid,
    cir: &CirPath,
    jumps: &JumpPath,
    kernel: Option<&FractionalKernel>,
    state: &mut VariancePathState,
) {
    let len = grid.len();
    state.cir_var.clear();
    state.cir_var.extend_from_slice(&cir.var);
    state.z.clear();
    state.z.extend_from_slice(&cir.z);
    state.j.clear();
    state.j.extend_from_slice(&jumps.j);
    match kernel {
        Some(k) if params.c2 != 0.0 && params.nu != 0.0 => k.apply(&cir.z, &mut state.frac_z),
        _ => {
            state.frac_z.clear();
            state.frac_z.resize(len, 0.0);
        }
    }
    state.var.clear();
    state.realized.clear();
    let dt = grid.dt();
    let mut y = 0.0;
    for k in 0..len {
        let v = params.mean_curve(grid.time(k))
            + params.c1 * params.nu * state.z[k]
            + params.c2 * params.nu * state.frac_z[k]
            + params.c3 * params.eta * state.j[k];
        if k > 0 {
            y += 0.5 * (state.var[k - 1] + v) * dt;
        }
        state.var.push(v);
        state.realized.push(y);
    }
}

/// Grid points where σ² falls below [`variance_lower_bound`] by more than
/// `slack`, with the worst shortfall.
pub fn lower_bound_violations(
    params: &ModelParams,
    grid: &TimeGrid,
    state: &VariancePathState,
    slack: f64,
) -> (usize, f64) {
    let horizon = grid.horizon();
    let mut count = 0;
    let mut worst = 0.0f64;
    for (k, &v) in state.var.iter().enumerate() {
        let gap = variance_lower_bound(params, grid.time(k), horizon) - v;
        if gap > slack {
            count += 1;
        }
        worst = worst.max(gap);
    }
    (count, worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk() -> ModelParams {
        ModelParams {
            kappa: 2.0,
            theta: 0.04,
            nu: 0.2,
            v0bar: 0.09,
            hurst: 0.75,
            c1: 0.5,
            c2: 0.3,
            c3: 1.0,
            eta: 0.1,
            rho1: -0.5,
            rho2: -0.5,
            r: 0.0,
            levy: LevyMeasureSpec::CompoundPoissonExponential { lambda: 1.0, beta: 10.0 },
        }
    }

    #[test]
    fn lower_bound_example() {
        let mut p = desk();
        p.c1 = 0.5;
        p.c2 = 0.5;
        let g = gamma(0.25);
        let want = 0.09 * libm::exp(-2.0) + 0.04 * (1.0 - libm::exp(-2.0)) * (1.0 - 0.5 - 0.5 / (0.25 * g));
        assert!((variance_lower_bound(&p, 1.0, 1.0) - want).abs() < 1e-15);
        assert_eq!(variance_lower_bound(&p, 0.0, 1.0), 0.09);
        let far = variance_lower_bound(&p, 200.0, 1.0);
        assert!((far - 0.04 * p.positivity_margin(1.0)).abs() < 1e-15);
    }

    #[test]
    fn validation_names_conditions() {
        let mut p = desk();
        p.nu = 1.0;
        let e = p.validate(1.0).unwrap_err();
        assert!(alloc::format!("{e}").starts_with("Feller"));
        assert!(p.validate_with(1.0, FellerCheck::Allow).is_ok());
        let mut p = desk();
        p.c1 = 0.9;
        let e = p.validate(1.0).unwrap_err();
        assert!(alloc::format!("{e}").starts_with("positivity"));
        let mut p = desk();
        p.rho2 = 0.1;
        assert!(p.validate(1.0).is_err());
        let mut p = desk();
        p.hurst = 0.4;
        assert!(p.validate(1.0).is_err());
    }

    #[test]
    fn deterministic_cir_is_mean_curve() {
        let mut p = desk();
        p.nu = 0.0;
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = simulate_cir(&p, &grid, &mut rng).unwrap();
        for k in 0..grid.len() {
            assert_eq!(c.var[k], p.mean_curve(grid.time(k)));
        }
        p.kappa = 0.0;
        let c = simulate_cir(&p, &grid, &mut rng).unwrap();
        assert!(c.var.iter().all(|&v| v == p.v0bar));
    }

    #[test]
    fn cir_nonnegative_and_identity() {
        let p = desk();
        let grid = TimeGrid::new(1.0, 256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let c = simulate_cir(&p, &grid, &mut rng).unwrap();
            for k in 0..grid.len() {
                assert!(c.var[k] >= 0.0);
                let x = p.mean_curve(grid.time(k)) + p.nu * c.z[k];
                assert!((c.var[k] - x.max(0.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fractional_constant_and_linear() {
        let dt = 1e-3;
        let n = 1000;
        let ones = alloc::vec![1.0; n + 1];
        let out = fractional_integral(&ones, dt, 0.25).unwrap();
        assert_eq!(out[0], 0.0);
        assert!((out[n] - 1.103_262_651_320_837).abs() < 1e-12);
        let lin: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let out = fractional_integral(&lin, dt, 0.25).unwrap();
        assert!((out[n] - 0.882_610_121_056_669_8).abs() < 1e-3);
        let zeros = alloc::vec![0.0; n + 1];
        assert!(fractional_integral(&zeros, dt, 0.25).unwrap().iter().all(|&v| v == 0.0));
        assert!(fractional_integral(&ones, dt, 1.5).is_err());
    }

    #[test]
    fn heston_limit_reproduces_cir() {
        let mut p = desk();
        p.c1 = 1.0;
        p.c2 = 0.0;
        p.c3 = 0.0;
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cir = simulate_cir(&p, &grid, &mut rng).unwrap();
        let jumps = crate::levy::sample_jump_path(&p.levy, &grid, &mut rng);
        let mut st = VariancePathState::default();
        build_variance_path(&p, &grid, &cir, &jumps, None, &mut st);
        for k in 0..grid.len() {
            let raw = p.mean_curve(grid.time(k)) + p.nu * cir.z[k];
            assert!((st.var[k] - raw).abs() < 1e-15);
            if raw >= 0.0 {
                assert!((st.var[k] - st.cir_var[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_jump_shifts_variance() {
        let mut p = desk();
        p.nu = 0.0;
        p.c3 = 1.0;
        p.eta = 0.1;
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let cir = CirPath {
            var: (0..=10).map(|k| p.mean_curve(grid.time(k))).collect(),
            z: alloc::vec![0.0; 11],
        };
        let mut jumps = JumpPath::default();
        jumps.increments = alloc::vec![0.0; 10];
        jumps.increments[4] = 0.7;
        jumps.j = (0..=10).map(|k| if k >= 5 { 0.7 } else { 0.0 }).collect();
        jumps.j_tilde = jumps.j.clone();
        let mut st = VariancePathState::default();
        build_variance_path(&p, &grid, &cir, &jumps, None, &mut st);
        let before = st.var[4] - p.mean_curve(grid.time(4));
        let after = st.var[5] - p.mean_curve(grid.time(5));
        assert!((after - before - 0.07).abs() < 1e-15);
    }
}
