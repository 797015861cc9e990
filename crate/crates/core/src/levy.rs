//! Lévy subordinators driving the common jumps of variance and log-price.
//!
//! Two families are supported:
//!
//! * compound Poisson with exponential sizes, `ℓ(dz) = λβ e^{−βz} dz`;
//! * gamma, `ℓ(dz) = a z⁻¹ e^{−bz} dz`, simulated with jumps below `ε`
//!   replaced by their mean `∫₀^ε z ℓ(dz)` as a drift.
//!
//! The simulated subordinator has no drift of its own in finite-variation
//! form, so `E[J₁] = ∫ z ℓ(dz)` and the compensated process is
//! `J̃ₜ = Jₜ − t ∫ z ℓ(dz)`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::grid::TimeGrid;
use crate::quadrature::GaussLaguerre;
use crate::special::exp_integral_e1;
use crate::{Error, Result};

pub const DEFAULT_GAMMA_EPS: f64 = 1e-6;

fn default_eps() -> f64 {
    DEFAULT_GAMMA_EPS
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum LevyMeasureSpec {
    #[serde(rename = "cpe")]
    CompoundPoissonExponential { lambda: f64, beta: f64 },
    #[serde(rename = "gamma")]
    Gamma {
        a: f64,
        b: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

impl Default for LevyMeasureSpec {
    fn default() -> Self {
        Self::CompoundPoissonExponential { lambda: 0.0, beta: 1.0 }
    }
}

/// −ln(1−w) − w, accurate for small |w|.
fn neg_log1m_minus(w: f64) -> f64 {
    if libm::fabs(w) < 1e-2 {
        let mut sum = 0.0;
        let mut p = w;
        for k in 2..=12 {
            p *= w;
            sum += p / k as f64;
        }
        sum
    } else {
        -libm::log1p(-w) - w
    }
}

impl LevyMeasureSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::CompoundPoissonExponential { lambda, beta } => {
                if !(lambda >= 0.0) || !lambda.is_finite() {
                    return Err(Error::Validation(alloc::format!(
                        "levy: intensity lambda must be >= 0, got {lambda}"
                    )));
                }
                if !(beta > 0.0) || !beta.is_finite() {
                    return Err(Error::Validation(alloc::format!(
                        "levy: rate beta must be > 0, got {beta}"
                    )));
                }
            }
            Self::Gamma { a, b, eps } => {
                if !(a >= 0.0) || !a.is_finite() {
                    return Err(Error::Validation(alloc::format!(
                        "levy: shape a must be >= 0, got {a}"
                    )));
                }
                if !(b > 0.0) || !b.is_finite() {
                    return Err(Error::Validation(alloc::format!(
                        "levy: rate b must be > 0, got {b}"
                    )));
                }
                if !(eps > 0.0) {
                    return Err(Error::Validation(alloc::format!(
                        "levy: truncation eps must be > 0, got {eps}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Exponential decay rate of the tail, β or b.
    pub fn tail_rate(&self) -> f64 {
        match *self {
            Self::CompoundPoissonExponential { beta, .. } => beta,
            Self::Gamma { b, .. } => b,
        }
    }

    /// Density of ℓ with respect to Lebesgue measure.
    pub fn density(&self, z: f64) -> f64 {
        if !(z > 0.0) {
            return 0.0;
        }
        match *self {
            Self::CompoundPoissonExponential { lambda, beta } => {
                lambda * beta * libm::exp(-beta * z)
            }
            Self::Gamma { a, b, .. } => a * libm::exp(-b * z) / z,
        }
    }

    /// ∫ z ℓ(dz).
    pub fn first_moment(&self) -> f64 {
        match *self {
            Self::CompoundPoissonExponential { lambda, beta } => lambda / beta,
            Self::Gamma { a, b, .. } => a / b,
        }
    }

    /// ∫ z² ℓ(dz).
    pub fn second_moment(&self) -> f64 {
        match *self {
            Self::CompoundPoissonExponential { lambda, beta } => 2.0 * lambda / (beta * beta),
            Self::Gamma { a, b, .. } => a / (b * b),
        }
    }

    /// ∫₀¹ z ℓ(dz).
    pub fn moment_below_one(&self) -> f64 {
        self.first_moment() - self.moment_above_one()
    }

    /// ∫₁^∞ z ℓ(dz).
    pub fn moment_above_one(&self) -> f64 {
        match *self {
            Self::CompoundPoissonExponential { lambda, beta } => {
                lambda * libm::exp(-beta) * (1.0 + beta) / beta
            }
            Self::Gamma { a, b, .. } => a * libm::exp(-b) / b,
        }
    }

    /// Drift `b` of the finite-variation form `Jₜ = bt + Σ ΔJ`. Always zero:
    /// the subordinator is pure jump.
    pub fn drift(&self) -> f64 {
        0.0
    }

    /// Triplet drift γ = b + ∫₀¹ z ℓ(dz) of the simulated subordinator.
    pub fn triplet_drift(&self) -> f64 {
        self.drift() + self.moment_below_one()
    }

    /// E[J₁] = γ + ∫₁^∞ z ℓ(dz).
    pub fn mean_rate(&self) -> f64 {
        self.triplet_drift() + self.moment_above_one()
    }

    /// ζ(ρ₂, η) = ∫ (e^{uz} − 1 − uz) ℓ(dz) with u = ρ₂η.
    ///
    /// Requires the exponential moment of order `u` to exist, i.e. `u` below
    /// the tail rate.
    pub fn compensator_zeta(&self, rho2: f64, eta: f64) -> Result<f64> {
        let u = rho2 * eta;
        if u == 0.0 {
            return Ok(0.0);
        }
        let rate = self.tail_rate();
        if !(u < rate) {
            return Err(Error::DivergentIntegral(alloc::format!(
                "exponential moment of order {u} does not exist for tail rate {rate}"
            )));
        }
        Ok(match *self {
            // λ(β/(β−u) − 1 − u/β) rewritten without cancellation
            Self::CompoundPoissonExponential { lambda, beta } => {
                lambda * u * u / (beta * (beta - u))
            }
            Self::Gamma { a, b, .. } => a * neg_log1m_minus(u / b),
        })
    }

    /// γ fixed by requiring the jump part of `e^{X}` to carry no drift:
    /// `γ = −(1/u) ∫ (e^{uz} − 1 − uz𝟙_{z<1}) ℓ(dz)`, u = ρ₂η.
    ///
    /// The condition is empty when `u = 0`; `default` is returned then.
    pub fn martingale_drift_gamma(&self, rho2: f64, eta: f64, default: f64) -> Result<f64> {
        let u = rho2 * eta;
        if u == 0.0 {
            return Ok(default);
        }
        let zeta = self.compensator_zeta(rho2, eta)?;
        Ok(-zeta / u - self.moment_above_one())
    }

    /// Quadrature rule `∫ f dℓ ≈ Σ wᵢ f(zᵢ)` built on `n` Gauss–Laguerre
    /// nodes. For the gamma family the integrand should vanish at 0 at least
    /// linearly.
    pub fn quadrature(&self, n: usize) -> LevyQuadrature {
        let gl = GaussLaguerre::new(n);
        let (nodes, weights) = match *self {
            Self::CompoundPoissonExponential { lambda, beta } => (
                gl.nodes.iter().map(|x| x / beta).collect(),
                gl.weights.iter().map(|w| lambda * w).collect(),
            ),
            Self::Gamma { a, b, .. } => (
                gl.nodes.iter().map(|x| x / b).collect(),
                gl.nodes.iter().zip(&gl.weights).map(|(x, w)| a * w / x).collect(),
            ),
        };
        LevyQuadrature { nodes, weights }
    }

    /// True when ℓ is the zero measure.
    pub fn is_null(&self) -> bool {
        match *self {
            Self::CompoundPoissonExponential { lambda, .. } => lambda == 0.0,
            Self::Gamma { a, .. } => a == 0.0,
        }
    }
}

/// Nodes and weights for integrals against ℓ.
#[derive(Clone, Debug)]
pub struct LevyQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LevyQuadrature {
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}

/// Precomputed sampling recipe for one measure.
#[derive(Clone, Debug)]
pub struct JumpSampler {
    spec: LevyMeasureSpec,
    /// Arrival rate of simulated (non-truncated) jumps.
    intensity: f64,
    /// Drift standing in for the truncated small jumps.
    small_jump_drift: f64,
    /// Gamma family: lower end `bε` of the scaled size variable and the
    /// probability of drawing from `(bε, 1)`.
    y0: f64,
    p_low: f64,
}

impl JumpSampler {
    pub fn new(spec: &LevyMeasureSpec) -> Self {
        match *spec {
            LevyMeasureSpec::CompoundPoissonExponential { lambda, .. } => Self {
                spec: *spec,
                intensity: lambda,
                small_jump_drift: 0.0,
                y0: 0.0,
                p_low: 0.0,
            },
            LevyMeasureSpec::Gamma { a, b, eps } => {
                let y0 = b * eps;
                let tail = exp_integral_e1(y0);
                let p_low = if y0 < 1.0 {
                    (tail - exp_integral_e1(1.0)) / tail
                } else {
                    0.0
                };
                Self {
                    spec: *spec,
                    intensity: a * tail,
                    small_jump_drift: -a * libm::expm1(-y0) / b,
                    y0,
                    p_low,
                }
            }
        }
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn small_jump_drift(&self) -> f64 {
        self.small_jump_drift
    }

    /// One jump size, strictly positive.
    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.spec {
            LevyMeasureSpec::CompoundPoissonExponential { beta, .. } => loop {
                let e: f64 = Exp1.sample(rng);
                if e > 0.0 {
                    return e / beta;
                }
            },
            LevyMeasureSpec::Gamma { b, .. } => self.sample_scaled_gamma(rng) / b,
        }
    }

    /// Draw y with density ∝ e^{−y}/y on (y0, ∞).
    fn sample_scaled_gamma<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let y0 = self.y0;
        if y0 >= 1.0 {
            loop {
                let e: f64 = Exp1.sample(rng);
                let y = y0 + e;
                if rng.random::<f64>() * y < y0 {
                    return y;
                }
            }
        }
        if rng.random::<f64>() < self.p_low {
            // log-uniform proposal on (y0, 1), accept with e^{−y}
            let ln_y0 = libm::log(y0);
            loop {
                let u: f64 = rng.random();
                let y = libm::exp(ln_y0 * (1.0 - u));
                if y > y0 && rng.random::<f64>() < libm::exp(-y) {
                    return y;
                }
            }
        }
        loop {
            let e: f64 = Exp1.sample(rng);
            let y = 1.0 + e;
            if rng.random::<f64>() * y < 1.0 {
                return y;
            }
        }
    }

    /// Fills `path` with a subordinator sample on `grid`. Jumps falling in
    /// `(tₙ, tₙ₊₁]` are booked at `tₙ₊₁`.
    pub fn sample_path<R: Rng + ?Sized>(&self, grid: &TimeGrid, rng: &mut R, path: &mut JumpPath) {
        let n = grid.steps();
        let dt = grid.dt();
        path.increments.clear();
        path.increments.resize(n, 0.0);
        path.count = 0;
        if self.intensity > 0.0 {
            let horizon = grid.horizon();
            let mut t = 0.0;
            loop {
                let e: f64 = Exp1.sample(rng);
                t += e / self.intensity;
                if t >= horizon {
                    break;
                }
                let step = ((t / dt) as usize).min(n - 1);
                path.increments[step] += self.sample_size(rng);
                path.count += 1;
            }
        }
        let mean = self.spec.mean_rate();
        path.j.clear();
        path.j_tilde.clear();
        path.j.push(0.0);
        path.j_tilde.push(0.0);
        let mut acc = 0.0;
        for k in 0..n {
            acc += path.increments[k];
            let t = grid.time(k + 1);
            let j = acc + self.small_jump_drift * t;
            path.j.push(j);
            path.j_tilde.push(j - mean * t);
        }
    }
}

/// Subordinator sample on a grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JumpPath {
    /// Sum of sampled jump sizes inside each step.
    pub increments: Vec<f64>,
    /// Jₜ at grid points, including the small-jump drift.
    pub j: Vec<f64>,
    /// J̃ₜ = Jₜ − t·E[J₁].
    pub j_tilde: Vec<f64>,
    /// Number of sampled jumps.
    pub count: usize,
}

impl JumpPath {
    /// Increment of J over step `n`.
    #[inline]
    pub fn dj(&self, n: usize) -> f64 {
        self.j[n + 1] - self.j[n]
    }

    /// Increment of J̃ over step `n`.
    #[inline]
    pub fn dj_tilde(&self, n: usize) -> f64 {
        self.j_tilde[n + 1] - self.j_tilde[n]
    }
}

/// Convenience wrapper around [`JumpSampler::sample_path`].
pub fn sample_jump_path<R: Rng + ?Sized>(
    spec: &LevyMeasureSpec,
    grid: &TimeGrid,
    rng: &mut R,
) -> JumpPath {
    let mut path = JumpPath::default();
    JumpSampler::new(spec).sample_path(grid, rng, &mut path);
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_adaptive;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cpe(lambda: f64, beta: f64) -> LevyMeasureSpec {
        LevyMeasureSpec::CompoundPoissonExponential { lambda, beta }
    }

    fn gamma(a: f64, b: f64) -> LevyMeasureSpec {
        LevyMeasureSpec::Gamma { a, b, eps: DEFAULT_GAMMA_EPS }
    }

    // ∫₀^∞ f dℓ by adaptive quadrature, split at 1 for the gamma singularity
    fn ell_integral<F: Fn(f64) -> f64>(spec: &LevyMeasureSpec, f: F) -> f64 {
        let g = |z: f64| f(z) * spec.density(z);
        let lo = integrate_adaptive(&g, 0.0, 1.0, 1e-22, 1e-12).unwrap().value;
        let hi = integrate_adaptive(|s: f64| g(1.0 / s) / (s * s), 0.0, 1.0, 1e-22, 1e-12)
            .unwrap()
            .value;
        lo + hi
    }

    #[test]
    fn zeta_closed_form_cpe() {
        let z = cpe(1.0, 10.0).compensator_zeta(-1.0, 1.0).unwrap();
        assert!((z - 1.0 / 110.0).abs() < 1e-16);
    }

    #[test]
    fn zeta_trivial_cases() {
        assert_eq!(cpe(1.0, 10.0).compensator_zeta(-0.5, 0.0).unwrap(), 0.0);
        assert_eq!(gamma(1.0, 10.0).compensator_zeta(0.0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn zeta_matches_quadrature() {
        for spec in [cpe(1.0, 10.0), cpe(3.0, 2.5), gamma(2.0, 4.0), gamma(0.5, 1.5)] {
            for u in [-1.0, -0.1, -1e-4] {
                let want = ell_integral(&spec, |z| libm::expm1(u * z) - u * z);
                let got = spec.compensator_zeta(u, 1.0).unwrap();
                assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-12), "{spec:?} u={u}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn zeta_divergent_exponent() {
        assert!(matches!(
            cpe(1.0, 2.0).compensator_zeta(1.0, 3.0),
            Err(Error::DivergentIntegral(_))
        ));
    }

    #[test]
    fn moments_match_quadrature() {
        for spec in [cpe(1.3, 10.0), cpe(2.0, 0.7), gamma(2.0, 4.0), gamma(0.5, 0.8)] {
            let m1 = ell_integral(&spec, |z| z);
            let m2 = ell_integral(&spec, |z| z * z);
            let g = |z: f64| z * spec.density(z);
            let below = integrate_adaptive(g, 0.0, 1.0, 1e-14, 1e-13).unwrap().value;
            assert!((spec.first_moment() - m1).abs() < 1e-11 * m1);
            assert!((spec.second_moment() - m2).abs() < 1e-11 * m2);
            assert!((spec.moment_below_one() - below).abs() < 1e-11 * m1);
        }
    }

    #[test]
    fn martingale_gamma_consistent_with_zeta() {
        let spec = cpe(1.0, 10.0);
        let u = -1.0;
        let gamma = spec.martingale_drift_gamma(-1.0, 1.0, 0.0).unwrap();
        // independent oracle for the defining integral
        let integral = ell_integral(&spec, |z| {
            libm::expm1(u * z) - if z < 1.0 { u * z } else { 0.0 }
        });
        let want = -integral / u;
        assert!((gamma - want).abs() < 1e-10 * want.abs());
        // zeta rebuilt from gamma
        let zeta = -u * (gamma + spec.moment_above_one());
        assert!((zeta - spec.compensator_zeta(-1.0, 1.0).unwrap()).abs() < 1e-10 * zeta);
        assert_eq!(spec.martingale_drift_gamma(0.0, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn martingale_gamma_gives_negative_fv_drift() {
        // b = γ − ∫₀¹zℓ is negative whenever u < 0, so this γ cannot be the
        // drift of a subordinator; see `drift`.
        let spec = cpe(1.0, 10.0);
        let gamma = spec.martingale_drift_gamma(-1.0, 1.0, 0.0).unwrap();
        assert!(gamma - spec.moment_below_one() < 0.0);
        assert!(spec.drift() >= 0.0);
    }

    #[test]
    fn quadrature_rule_moments() {
        for spec in [cpe(1.3, 10.0), gamma(2.0, 4.0)] {
            let q = spec.quadrature(32);
            let m1 = q.integrate(|z| z);
            let m2 = q.integrate(|z| z * z);
            assert!((m1 / spec.first_moment() - 1.0).abs() < 1e-12);
            assert!((m2 / spec.second_moment() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn null_measure_path_is_flat() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_jump_path(&cpe(0.0, 3.0), &grid, &mut rng);
        assert_eq!(p.count, 0);
        assert!(p.j.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gamma_small_jump_drift_closed_form() {
        let spec = LevyMeasureSpec::Gamma { a: 2.0, b: 4.0, eps: 1e-3 };
        let s = JumpSampler::new(&spec);
        let want = integrate_adaptive(|z| z * spec.density(z), 0.0, 1e-3, 1e-16, 1e-13)
            .unwrap()
            .value;
        assert!((s.small_jump_drift() - want).abs() < 1e-12 * want);
        assert!((s.intensity() - 2.0 * exp_integral_e1(4e-3)).abs() < 1e-12);
    }

    #[test]
    fn gamma_sizes_above_truncation() {
        let spec = LevyMeasureSpec::Gamma { a: 2.0, b: 4.0, eps: 1e-3 };
        let s = JumpSampler::new(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let z = s.sample_size(&mut rng);
            assert!(z > 1e-3);
            sum += z;
        }
        // mean size of the truncated law: (a/b)e^{−bε}/(a E₁(bε))
        let want = libm::exp(-4e-3) / 4.0 / exp_integral_e1(4e-3);
        let got = sum / n as f64;
        assert!((got / want - 1.0).abs() < 0.03, "{got} vs {want}");
    }

    #[test]
    fn jump_path_shapes() {
        let grid = TimeGrid::new(2.0, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = sample_jump_path(&cpe(5.0, 2.0), &grid, &mut rng);
        assert_eq!(p.j.len(), 101);
        assert_eq!(p.increments.len(), 100);
        for k in 0..100 {
            assert!(p.dj(k) >= 0.0);
            assert!((p.dj(k) - p.increments[k]).abs() < 1e-12);
        }
        assert!((p.j_tilde[100] - (p.j[100] - 2.0 * 2.5)).abs() < 1e-12);
    }
}
