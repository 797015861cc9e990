//! Black–Scholes call in log-spot coordinates and the operator algebra built
//! on it: `Λ = ∂ₓ`, `Γ = ∂ₓ² − ∂ₓ`.
//!
//! With `s = y√τ` and `G = ΓBS = eˣφ(d₊)/s = Ke^{−rτ}φ(d₋)/s`, every
//! x-derivative of `G` is a Hermite polynomial times a Gaussian:
//!
//! ```text
//! ∂ₓⁿG = Ke^{−rτ} s^{−(n+1)} (−1)ⁿ Heₙ(d₋) φ(d₋)
//! ```
//!
//! and `ΛᵃΓᵇBS` (b ≥ 1) expands as `Σₖ C(b−1,k)(−1)^{b−1−k} ∂ₓ^{a+b−1+k} G`.

use crate::quadrature::GaussLegendre;
use crate::special::{hermite_he, norm_cdf, norm_pdf};

/// Evaluation point `(t, x, y)` for a call with strike `K`, rate `r` and
/// maturity `T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BsPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub strike: f64,
    pub r: f64,
    pub maturity: f64,
}

impl BsPoint {
    pub fn new(t: f64, x: f64, y: f64, strike: f64, r: f64, maturity: f64) -> Self {
        Self { t, x, y, strike, r, maturity }
    }

    #[inline]
    pub fn tau(&self) -> f64 {
        self.maturity - self.t
    }

    pub fn with_x(self, x: f64) -> Self {
        Self { x, ..self }
    }

    pub fn with_y(self, y: f64) -> Self {
        Self { y, ..self }
    }

    #[inline]
    pub fn eval(&self) -> BsEval {
        BsEval::new(self)
    }

    pub fn price(&self) -> f64 {
        self.eval().price()
    }

    /// ΛᵃΓᵇBS.
    pub fn lambda_gamma(&self, a: usize, b: usize) -> f64 {
        self.eval().lambda_gamma(a, b)
    }

    pub fn vega(&self) -> f64 {
        self.eval().vega()
    }
}

/// Shared intermediate quantities for one [`BsPoint`].
#[derive(Clone, Copy, Debug)]
pub struct BsEval {
    tau: f64,
    y: f64,
    s: f64,
    ex: f64,
    /// Ke^{−rτ}
    kd: f64,
    d_plus: f64,
    d_minus: f64,
    /// φ(d₋), equal to eˣφ(d₊)/(Ke^{−rτ}).
    pdf_minus: f64,
    degenerate: bool,
}

impl BsEval {
    pub fn new(p: &BsPoint) -> Self {
        let tau = p.tau().max(0.0);
        let s = p.y * libm::sqrt(tau);
        let ex = libm::exp(p.x);
        let kd = p.strike * libm::exp(-p.r * tau);
        let degenerate = !(s > 0.0) || !(p.strike > 0.0);
        let (d_plus, d_minus, pdf_minus) = if degenerate {
            (0.0, 0.0, 0.0)
        } else {
            let m = p.x - libm::log(p.strike) + p.r * tau;
            let dp = m / s + 0.5 * s;
            let dm = dp - s;
            (dp, dm, norm_pdf(dm))
        };
        Self { tau, y: p.y, s, ex, kd, d_plus, d_minus, pdf_minus, degenerate }
    }

    pub fn d_plus(&self) -> f64 {
        self.d_plus
    }

    pub fn d_minus(&self) -> f64 {
        self.d_minus
    }

    /// Total standard deviation y√τ.
    pub fn total_sd(&self) -> f64 {
        self.s
    }

    pub fn price(&self) -> f64 {
        if self.degenerate {
            return (self.ex - self.kd).max(0.0);
        }
        self.ex * norm_cdf(self.d_plus) - self.kd * norm_cdf(self.d_minus)
    }

    /// ΛBS = eˣΦ(d₊).
    pub fn log_delta(&self) -> f64 {
        if self.degenerate {
            return if self.ex > self.kd { self.ex } else { 0.0 };
        }
        self.ex * norm_cdf(self.d_plus)
    }

    /// ∂ₓⁿ G, G = ΓBS.
    pub fn g_derivative(&self, n: usize) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        self.kd * self.pdf_minus * sign * hermite_he(n, self.d_minus) / libm::pow(self.s, (n + 1) as f64)
    }

    /// ∂ₓᵃ BS.
    pub fn x_derivative(&self, a: usize) -> f64 {
        match a {
            0 => self.price(),
            _ => self.log_delta() + (0..a.saturating_sub(1)).map(|j| self.g_derivative(j)).sum::<f64>(),
        }
    }

    /// ΛᵃΓᵇBS.
    pub fn lambda_gamma(&self, a: usize, b: usize) -> f64 {
        if b == 0 {
            return self.x_derivative(a);
        }
        let m = b - 1;
        let mut total = 0.0;
        let mut binom = 1.0;
        for k in 0..=m {
            let sign = if (m - k) % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * binom * self.g_derivative(a + m + k);
            binom = binom * (m - k) as f64 / (k + 1) as f64;
        }
        total
    }

    /// ∂_y BS = eˣφ(d₊)√τ.
    pub fn vega(&self) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        self.ex * norm_pdf(self.d_plus) * libm::sqrt(self.tau)
    }

    /// ∂²_y BS = eˣ√τ d₊d₋φ(d₊)/y.
    pub fn vomma(&self) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        self.ex * libm::sqrt(self.tau) * self.d_plus * self.d_minus * norm_pdf(self.d_plus) / self.y
    }
}

/// `BS(t, x, y)` for a call.
pub fn bs_price(p: &BsPoint) -> f64 {
    p.price()
}

/// `ΛᵃΓᵇBS` at `p`.
pub fn lambda_gamma_ops(p: &BsPoint, a: usize, b: usize) -> f64 {
    p.lambda_gamma(a, b)
}

/// `∂_yBS/(yτ) − ΓBS`. Vega is taken in its `eˣφ(d₊)` form and ΓBS in its
/// `Ke^{−rτ}φ(d₋)` form, so the residual exercises the identity between them.
pub fn dgv_identity_residual(p: &BsPoint) -> f64 {
    let e = p.eval();
    if e.degenerate {
        return 0.0;
    }
    e.vega() / (p.y * p.tau()) - e.g_derivative(0)
}

/// `F(x+h) − F(x) − hF′(x)`.
pub fn delta2_x<F: Fn(f64) -> f64, D: Fn(f64) -> f64>(f: F, df: D, x: f64, h: f64) -> f64 {
    f(x + h) - f(x) - h * df(x)
}

/// `h² ∫₀¹ F″(x+λh)(1−λ) dλ` by composite 32-point Gauss–Legendre, halving
/// panels until two levels agree to about 1e−14 of the running total. A
/// peaked F″ (short-dated Black–Scholes greeks under a large shift) needs the
/// refinement.
pub fn delta2_remainder<F: Fn(f64) -> f64>(f2: F, x: f64, h: f64) -> f64 {
    let rule = GaussLegendre::new(32);
    let g = |l: f64| f2(x + l * h) * (1.0 - l);
    let first = rule.integrate(0.0, 1.0, g);
    let mut stack: alloc::vec::Vec<(f64, f64, f64, u32)> = alloc::vec![(0.0, 1.0, first, 0)];
    let mut total = 0.0;
    let mut scale = first.abs();
    while let Some((a, b, whole, depth)) = stack.pop() {
        let m = 0.5 * (a + b);
        let left = rule.integrate(a, m, g);
        let right = rule.integrate(m, b, g);
        let refined = left + right;
        scale = scale.max(refined.abs());
        if depth >= 20 || (refined - whole).abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            total += refined;
        } else {
            stack.push((a, m, left, depth + 1));
            stack.push((m, b, right, depth + 1));
        }
    }
    h * h * total
}

pub fn delta2_remainder_with<F: Fn(f64) -> f64>(rule: &GaussLegendre, f2: F, x: f64, h: f64) -> f64 {
    h * h * rule.integrate(0.0, 1.0, |l| f2(x + l * h) * (1.0 - l))
}

/// Parameters of `φ(x−μ₁;σ₁)φ(x−μ₂;σ₂) = scale·φ(x−μ*;σ*)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianProduct {
    pub mean: f64,
    pub sd: f64,
    pub scale: f64,
}

pub fn gaussian_product(mu1: f64, sd1: f64, mu2: f64, sd2: f64) -> GaussianProduct {
    let v1 = sd1 * sd1;
    let v2 = sd2 * sd2;
    let vs = v1 + v2;
    let mean = (mu1 * v2 + mu2 * v1) / vs;
    let sd = libm::sqrt(v1 * v2 / vs);
    let sum_sd = libm::sqrt(vs);
    let scale = norm_pdf((mu1 - mu2) / sum_sd) / sum_sd;
    GaussianProduct { mean, sd, scale }
}

pub const IMPLIED_VOL_LOWER: f64 = 1e-6;
pub const IMPLIED_VOL_UPPER: f64 = 5.0;

/// Black–Scholes implied volatility of a call by bisection on
/// `[1e−6, 5]` to absolute tolerance `tol`. `None` when the price lies
/// outside the range spanned by that bracket.
pub fn implied_vol(price: f64, spot: f64, strike: f64, r: f64, tau: f64, tol: f64) -> Option<f64> {
    let p = BsPoint::new(0.0, libm::log(spot), IMPLIED_VOL_LOWER, strike, r, tau);
    let lo_price = p.price();
    let hi_price = p.with_y(IMPLIED_VOL_UPPER).price();
    if !(price >= lo_price && price <= hi_price) {
        return None;
    }
    let mut lo = IMPLIED_VOL_LOWER;
    let mut hi = IMPLIED_VOL_UPPER;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if p.with_y(mid).price() < price {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
