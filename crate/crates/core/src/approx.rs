//! Projected future variance, the martingale-representation kernel and the
//! first-order price.
//!
//! With `k(u) = c₂(T−u)^α/Γ(α+1) + c₁`, the kernel is
//! `A(T,t) = ∫ₜᵀ k(u) e^{−κ(u−t)} du`, and the conditional expectation of
//! future integrated variance splits as
//!
//! ```text
//! ∫ₛᵀ Eₛ[σ²ᵤ] du = ∫ₛᵀ U + νA(T,s)Zₛ + c₂ν Hₛ + c₃η (Jₛ(T−s) + μ(T−s)²/2)
//! Hₛ = (1/Γ(α+1)) ∫₀ˢ Z_ρ [(T−ρ)^α − (s−ρ)^α] dρ
//! ```
//!
//! where μ = E[J₁]. `Hₛ` is evaluated against the same left-endpoint step
//! interpolant of Z used for `I^α Z` on the simulation grid.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::analytics::BsPoint;
use crate::grid::TimeGrid;
use crate::quadrature::{integrate_adaptive, integrate_piecewise, integrate_power_weight};
use crate::special::gamma;
use crate::variance::{decay_integral, ModelParams, VariancePathState};
use crate::{Error, Instrument, Result};

const TIME_ABS_TOL: f64 = 1e-10;
const KERNEL_ABS_TOL: f64 = 1e-13;
const KERNEL_REL_TOL: f64 = 1e-12;
const LEVY_ABS_TOL: f64 = 1e-12;
const LEVY_REL_TOL: f64 = 1e-10;
// The outer time integral sees the inner Lévy quadrature as noise of
// relative size LEVY_REL_TOL, so it cannot be asked for much more.
const JUMP_TIME_ABS_TOL: f64 = 1e-9;
const JUMP_TIME_REL_TOL: f64 = 1e-8;

/// φ(t) = (1 − e^{−κ(T−t)})/κ.
pub fn phi(t: f64, horizon: f64, kappa: f64) -> f64 {
    decay_integral(kappa, horizon - t)
}

/// ∫ₜᵀ k(u) w(u−t) du for the kernel density k.
fn kernel_weighted<W: Fn(f64) -> f64>(params: &ModelParams, horizon: f64, t: f64, w: W) -> Result<f64> {
    if t >= horizon {
        return Ok(0.0);
    }
    let a = params.alpha();
    let frac = if params.c2 == 0.0 {
        0.0
    } else {
        integrate_power_weight(|u| w(u - t), t, horizon, a, KERNEL_ABS_TOL, KERNEL_REL_TOL)?.value
    };
    let plain = if params.c1 == 0.0 {
        0.0
    } else {
        integrate_adaptive(|u| w(u - t), t, horizon, KERNEL_ABS_TOL, KERNEL_REL_TOL)?.value
    };
    Ok(params.c2 / gamma(a + 1.0) * frac + params.c1 * plain)
}

/// A(T,t): closed form for the c₁ part, quadrature for the fractional part.
pub fn kernel_a(horizon: f64, t: f64, params: &ModelParams) -> Result<f64> {
    if t >= horizon {
        return Ok(0.0);
    }
    let a = params.alpha();
    let frac = if params.c2 == 0.0 {
        0.0
    } else {
        let k = params.kappa;
        integrate_power_weight(|u| libm::exp(-k * (u - t)), t, horizon, a, KERNEL_ABS_TOL, KERNEL_REL_TOL)?.value
    };
    Ok(params.c1 * phi(t, horizon, params.kappa) + params.c2 * frac / gamma(a + 1.0))
}

/// Eₜ[σ̄²ₛ] = σ̄²ₜe^{−κ(s−t)} + θ(1 − e^{−κ(s−t)}).
#[inline]
pub fn conditional_cir_mean(params: &ModelParams, cir_var_t: f64, lag: f64) -> f64 {
    let d = libm::exp(-params.kappa * lag);
    cir_var_t * d + params.theta * -libm::expm1(-params.kappa * lag)
}

/// ∫ₜᵀ Eₜ[σ̄²ᵤ] du = θ(T−t) + (σ̄²ₜ − θ)φ(t).
pub fn integrated_conditional_cir_mean(params: &ModelParams, cir_var_t: f64, t: f64, horizon: f64) -> f64 {
    params.theta * (horizon - t) + (cir_var_t - params.theta) * phi(t, horizon, params.kappa)
}

/// L[W,Mᶜ]ₜ ≈ ν ∫ₜᵀ A(T,s) Eₜ[σ̄²ₛ] ds.
pub fn l_wm(t: f64, cir_var_t: f64, params: &ModelParams, horizon: f64) -> Result<f64> {
    if params.nu == 0.0 || t >= horizon {
        return Ok(0.0);
    }
    let k = params.kappa;
    let p = kernel_weighted(params, horizon, t, |w| w * libm::exp(-k * w))?;
    let q = kernel_weighted(params, horizon, t, |w| decay_integral(k, w))?;
    Ok(params.nu * (cir_var_t * p + params.theta * (q - p)))
}

/// D[Mᶜ,Mᶜ]ₜ = ν² ∫ₜᵀ A²(T,s) Eₜ[σ̄²ₛ] ds.
pub fn d_mm(t: f64, cir_var_t: f64, params: &ModelParams, horizon: f64) -> Result<f64> {
    if params.nu == 0.0 || t >= horizon {
        return Ok(0.0);
    }
    let mut failure = None;
    let q = integrate_adaptive(
        |s| match kernel_a(horizon, s, params) {
            Ok(a) => a * a * conditional_cir_mean(params, cir_var_t, s - t),
            Err(e) => {
                failure = Some(e);
                0.0
            }
        },
        t,
        horizon,
        TIME_ABS_TOL * 1e-2,
        KERNEL_REL_TOL,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(params.nu * params.nu * q.value)
}

/// g(t, m, y) = √((δ + m − y)/(T − t)).
pub fn g_value(t: f64, m: f64, y: f64, horizon: f64, delta: f64) -> f64 {
    libm::sqrt((delta + m - y) / (horizon - t))
}

/// ∂²ₘ g = −¼ (δ + m − y)^{−3/2} (T − t)^{−1/2}.
pub fn g_second_derivative(t: f64, m: f64, y: f64, horizon: f64, delta: f64) -> f64 {
    -0.25 * libm::pow(delta + m - y, -1.5) / libm::sqrt(horizon - t)
}

/// (σ̄²ₜφ(t))^{−3/2} / (4√(T−t)).
pub fn g_second_derivative_bound(t: f64, cir_var_t: f64, params: &ModelParams, horizon: f64) -> f64 {
    let phi_t = phi(t, horizon, params.kappa);
    libm::pow(cir_var_t * phi_t, -1.5) / (4.0 * libm::sqrt(horizon - t))
}

/// Projected average future variance at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedVol {
    pub t: f64,
    pub v2: f64,
    pub v: f64,
    pub delta: f64,
    /// Mₜ = Yₜ + ∫ₜᵀ Eₜ[σ²ᵤ] du.
    pub m: f64,
}

/// Grid-dependent quantities needed to project variance along paths.
#[derive(Clone, Debug)]
pub struct ProjectionTable {
    params: ModelParams,
    grid: TimeGrid,
    mu: f64,
    /// ∫_{tₘ}^T U
    int_u: Vec<f64>,
    /// A(T, tₘ)
    kernel: Vec<f64>,
    /// ∫ A(T,s)e^{−κ(s−tₘ)} ds and ∫ A(T,s) ds over [tₘ, T]
    p: Vec<f64>,
    q: Vec<f64>,
    /// (T−tⱼ)^{α+1} − (T−tⱼ₊₁)^{α+1}
    tail_w: Vec<f64>,
    /// Δt^{α+1}(k^{α+1} − (k−1)^{α+1})
    lag_w: Vec<f64>,
    inv_gamma_a2: f64,
    history: bool,
}

impl ProjectionTable {
    pub fn new(params: &ModelParams, grid: &TimeGrid) -> Result<Self> {
        let horizon = grid.horizon();
        let n = grid.steps();
        let a = params.alpha();
        let k = params.kappa;
        let mut int_u = Vec::with_capacity(n + 1);
        let mut kernel = Vec::with_capacity(n + 1);
        let mut p = Vec::with_capacity(n + 1);
        let mut q = Vec::with_capacity(n + 1);
        for m in 0..=n {
            let t = grid.time(m);
            int_u.push(params.integrated_mean_curve(t, horizon));
            kernel.push(kernel_a(horizon, t, params)?);
            if params.nu != 0.0 {
                p.push(kernel_weighted(params, horizon, t, |w| w * libm::exp(-k * w))?);
                q.push(kernel_weighted(params, horizon, t, |w| decay_integral(k, w))?);
            } else {
                p.push(0.0);
                q.push(0.0);
            }
        }
        let history = params.c2 != 0.0 && params.nu != 0.0;
        let (mut tail_w, mut lag_w) = (Vec::new(), Vec::new());
        if history {
            let a1 = a + 1.0;
            tail_w = (0..n)
                .map(|j| {
                    libm::pow(horizon - grid.time(j), a1) - libm::pow(horizon - grid.time(j + 1), a1)
                })
                .collect();
            let scale = libm::pow(grid.dt(), a1);
            lag_w.push(0.0);
            let mut prev = 0.0;
            for kk in 1..=n {
                let cur = libm::pow(kk as f64, a1);
                lag_w.push(scale * (cur - prev));
                prev = cur;
            }
        }
        Ok(Self {
            params: *params,
            grid: *grid,
            mu: params.levy.mean_rate(),
            int_u,
            kernel,
            p,
            q,
            tail_w,
            lag_w,
            inv_gamma_a2: 1.0 / gamma(a + 2.0),
            history,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// A(T, tₘ).
    pub fn kernel(&self, m: usize) -> f64 {
        self.kernel[m]
    }

    /// L[W,Mᶜ] at tₘ given σ̄²(tₘ).
    pub fn l_wm(&self, m: usize, cir_var: f64) -> f64 {
        let pr = &self.params;
        pr.nu * (cir_var * self.p[m] + pr.theta * (self.q[m] - self.p[m]))
    }

    fn history_term(&self, z: &[f64], m: usize) -> f64 {
        let mut s = 0.0;
        for j in 0..m {
            s += z[j] * (self.tail_w[j] - self.lag_w[m - j]);
        }
        s * self.inv_gamma_a2
    }

    fn assemble(&self, state: &VariancePathState, m: usize, history: f64, delta: f64) -> ProjectedVol {
        let pr = &self.params;
        let t = self.grid.time(m);
        let rem = self.grid.horizon() - t;
        let integral = self.int_u[m]
            + pr.nu * self.kernel[m] * state.z[m]
            + pr.c2 * pr.nu * history
            + pr.c3 * pr.eta * (state.j[m] * rem + 0.5 * self.mu * rem * rem);
        let v2 = (delta + integral) / rem;
        ProjectedVol { t, v2, v: libm::sqrt(v2.max(0.0)), delta, m: state.realized[m] + integral }
    }

    /// v² at grid index `m < steps`.
    pub fn project(&self, state: &VariancePathState, m: usize, delta: f64) -> Result<ProjectedVol> {
        if m >= self.grid.steps() {
            return Err(Error::Validation(alloc::format!(
                "projection needs T − s > 0, got s = {}",
                self.grid.time(m)
            )));
        }
        let h = if self.history { self.history_term(&state.z, m) } else { 0.0 };
        Ok(self.assemble(state, m, h, delta))
    }

    /// v² at every grid index `0..steps`.
    pub fn project_path(&self, state: &VariancePathState, delta: f64, out: &mut Vec<ProjectedVol>) {
        out.clear();
        let n = self.grid.steps();
        let mut prefix = 0.0;
        for m in 0..n {
            let h = if self.history {
                if m > 0 {
                    prefix += state.z[m - 1] * self.tail_w[m - 1];
                }
                let mut lag = 0.0;
                for j in 0..m {
                    lag += state.z[j] * self.lag_w[m - j];
                }
                (prefix - lag) * self.inv_gamma_a2
            } else {
                0.0
            };
            out.push(self.assemble(state, m, h, delta));
        }
    }
}

/// One-off projection at grid index `m`; builds a [`ProjectionTable`].
pub fn projected_variance(
    params: &ModelParams,
    grid: &TimeGrid,
    state: &VariancePathState,
    m: usize,
    delta: f64,
) -> Result<ProjectedVol> {
    ProjectionTable::new(params, grid)?.project(state, m, delta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PricingMode {
    #[default]
    Frozen,
    Mc,
}

/// Price decomposition of the first-order formula.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxComponents {
    pub bs_base: f64,
    pub skew_term: f64,
    pub jump_term: f64,
    pub total: f64,
    /// Standard error of `jump_term` when it was estimated by simulation.
    pub jump_term_stderr: Option<f64>,
    pub v0: f64,
    pub kernel_a0: f64,
    pub phi0: f64,
    pub l_wm0: f64,
    pub d_mm0: f64,
    pub zeta: f64,
    pub mode: PricingMode,
}

/// Time-0 proxies along the deterministic mean trajectory.
#[derive(Clone, Copy, Debug)]
pub struct FrozenState {
    pub x: f64,
    pub v: f64,
}

/// `X̄ₛ = x + (r−ζ)s − ½∫₀ˢE[σ²]` and `v̄ₛ` from time-0 information.
pub fn frozen_state(params: &ModelParams, x0: f64, s: f64, horizon: f64, zeta: f64, delta: f64) -> FrozenState {
    let mu = params.levy.mean_rate();
    let jump_mean = |a: f64, b: f64| params.c3 * params.eta * mu * 0.5 * (b * b - a * a);
    let past = params.integrated_mean_curve(0.0, s) + jump_mean(0.0, s);
    let future = params.integrated_mean_curve(s, horizon) + jump_mean(s, horizon);
    let v2 = (delta + future) / (horizon - s);
    FrozenState {
        x: x0 + (params.r - zeta) * s - 0.5 * past,
        v: libm::sqrt(v2.max(0.0)),
    }
}

/// ∫ Δ²ₓ(ΛΓBS)(s, x, v; ρ₂ηz) ℓ(dz) by adaptive quadrature.
pub fn jump_integrand_frozen(params: &ModelParams, inst: &Instrument, s: f64, x: f64, v: f64) -> Result<f64> {
    let u = params.rho2 * params.eta;
    if u == 0.0 || params.levy.is_null() {
        return Ok(0.0);
    }
    let p = BsPoint::new(s, x, v, inst.strike, params.r, inst.maturity);
    let e = p.eval();
    let f0 = e.g_derivative(1);
    let f1 = e.g_derivative(2);
    let sd = e.total_sd();
    let levy = params.levy;
    let integrand = |z: f64| {
        let fz = p.with_x(x + u * z).eval().g_derivative(1);
        (fz - f0 - u * z * f1) * levy.density(z)
    };
    let z_max = 60.0 / levy.tail_rate();
    let mut pts: Vec<f64> = alloc::vec![0.0];
    if sd > 0.0 && inst.strike > 0.0 {
        // peak of ΛΓBS(x + uz) in z, and its width
        let center = libm::log(inst.strike) - params.r * (inst.maturity - s) + 0.5 * sd * sd;
        let zc = (x - center) / -u;
        let w = sd / -u;
        for c in [zc - 5.0 * w, zc, zc + 5.0 * w] {
            if c > 0.0 && c < z_max {
                pts.push(c);
            }
        }
    }
    pts.push(z_max);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(integrate_piecewise(integrand, &pts, LEVY_ABS_TOL, LEVY_REL_TOL)?.value)
}

/// Deterministic time-integral of the jump correction along the frozen
/// trajectory.
pub fn jump_term_frozen(params: &ModelParams, inst: &Instrument, delta: f64) -> Result<f64> {
    if params.rho2 * params.eta == 0.0 || params.levy.is_null() {
        return Ok(0.0);
    }
    let horizon = inst.maturity;
    let x0 = inst.log_spot();
    let zeta = params.zeta()?;
    let mut failure: Option<Error> = None;
    let q = integrate_adaptive(
        |s| {
            let fs = frozen_state(params, x0, s, horizon, zeta, delta);
            let l = match l_wm(s, params.mean_curve(s), params, horizon) {
                Ok(l) => l,
                Err(e) => {
                    failure = Some(e);
                    return 0.0;
                }
            };
            match jump_integrand_frozen(params, inst, s, fs.x, fs.v) {
                Ok(j) => libm::exp(-params.r * s) * (1.0 + 0.5 * params.rho1 * l) * j,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        0.0,
        horizon,
        JUMP_TIME_ABS_TOL,
        JUMP_TIME_REL_TOL,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(q.value)
}

/// Options for [`first_order_price`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproxOptions {
    pub mode: PricingMode,
    /// Regularization δ added to the integrated projected variance.
    pub delta: f64,
    pub mc: crate::engine::McConfig,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        Self { mode: PricingMode::Frozen, delta: 0.0, mc: crate::engine::McConfig::default() }
    }
}

/// First-order price `BS(0,x,v₀) + (ρ₁/2)ΛΓBS(0,x,v₀)L₀ + jump term`,
/// running any simulation sequentially.
pub fn first_order_price(params: &ModelParams, inst: &Instrument, opts: &ApproxOptions) -> Result<ApproxComponents> {
    first_order_price_with(params, inst, opts, &crate::engine::Sequential)
}

pub fn first_order_price_with<E: crate::engine::BlockExecutor>(
    params: &ModelParams,
    inst: &Instrument,
    opts: &ApproxOptions,
    exec: &E,
) -> Result<ApproxComponents> {
    inst.validate()?;
    params.validate_first_order(inst.maturity)?;
    let horizon = inst.maturity;
    let x0 = inst.log_spot();
    let zeta = params.zeta()?;
    let v0 = frozen_state(params, x0, 0.0, horizon, zeta, opts.delta).v;
    let p0 = BsPoint::new(0.0, x0, v0, inst.strike, params.r, horizon);
    let e0 = p0.eval();
    let bs_base = e0.price();
    let l0 = l_wm(0.0, params.v0bar, params, horizon)?;
    let skew_term = 0.5 * params.rho1 * e0.lambda_gamma(1, 1) * l0;
    let (jump_term, jump_term_stderr) = match opts.mode {
        PricingMode::Frozen => (jump_term_frozen(params, inst, opts.delta)?, None),
        PricingMode::Mc => {
            let st = crate::engine::jump_term_mc(params, inst, &opts.mc, opts.delta, exec)?;
            (st.estimate, Some(st.stderr))
        }
    };
    Ok(ApproxComponents {
        bs_base,
        skew_term,
        jump_term,
        total: bs_base + skew_term + jump_term,
        jump_term_stderr,
        v0,
        kernel_a0: kernel_a(horizon, 0.0, params)?,
        phi0: phi(0.0, horizon, params.kappa),
        l_wm0: l0,
        d_mm0: d_mm(0.0, params.v0bar, params, horizon)?,
        zeta,
        mode: opts.mode,
    })
}
