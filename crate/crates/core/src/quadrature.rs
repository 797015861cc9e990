//! Fixed Gauss rules and a globally adaptive Gauss–Kronrod integrator.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::Error;

/// Gauss–Legendre nodes and weights on [−1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let m = (n + 1) / 2;
        let nf = n as f64;
        for i in 0..m {
            let mut z = libm::cos(PI * (i as f64 + 0.75) / (nf + 0.5));
            let mut pp;
            loop {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if libm::fabs(z - z1) < 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// ∫ₐᵇ f.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        sum * half
    }
}

/// Gauss–Laguerre rule for ∫₀^∞ e^{−x} f(x) dx.
#[derive(Clone, Debug)]
pub struct GaussLaguerre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLaguerre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..n {
            if i == 0 {
                z = 3.0 / (1.0 + 2.4 * nf);
            } else if i == 1 {
                z += 15.0 / (1.0 + 2.5 * nf);
            } else {
                let ai = (i - 1) as f64;
                z += (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2]);
            }
            let mut pp;
            let mut p2;
            let mut iter = 0;
            loop {
                let mut p1 = 1.0;
                p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0 - z) * p2 - jf * p3) / (jf + 1.0);
                }
                pp = (nf * p1 - nf * p2) / z;
                let z1 = z;
                z = z1 - p1 / pp;
                iter += 1;
                if libm::fabs(z - z1) <= 1e-15 * libm::fabs(z) || iter > 100 {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = -1.0 / (pp * nf * p2);
        }
        Self { nodes, weights }
    }
}

/// Value and error estimate returned by [`integrate_adaptive`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, libm::fabs((kron - gauss) * h))
}

/// Globally adaptive 15-point Gauss–Kronrod quadrature of f over [a, b].
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate falls below `max(abs_tol, rel_tol·|value|)`. Endpoints are never
/// evaluated, so integrable endpoint singularities are fine.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature, Error> {
    const MAX_INTERVALS: usize = 2000;
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut parts: Vec<(f64, f64, f64, f64)> = alloc::vec![(a, b, v, e)];
    let mut value = v;
    let mut error = e;
    loop {
        if !value.is_finite() {
            return Err(Error::Quadrature { estimate: value, error });
        }
        if error <= abs_tol.max(rel_tol * libm::fabs(value)) {
            return Ok(Quadrature { value, error });
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature { estimate: value, error });
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, pv, pe) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            // interval collapsed to machine resolution
            return Err(Error::Quadrature { estimate: value, error });
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        value += v1 + v2 - pv;
        error += e1 + e2 - pe;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
        // running sums drift; refresh them now and then
        if parts.len() % 64 == 0 {
            value = parts.iter().map(|p| p.2).sum();
            error = parts.iter().map(|p| p.3).sum();
        }
    }
}

/// Adaptive quadrature over a list of breakpoints `pts[0] < pts[1] < ...`,
/// splitting the tolerance evenly.
pub fn integrate_piecewise<F: FnMut(f64) -> f64>(
    mut f: F,
    pts: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature, Error> {
    let pieces = pts.len().saturating_sub(1).max(1) as f64;
    let mut total = Quadrature { value: 0.0, error: 0.0 };
    for w in pts.windows(2) {
        let q = integrate_adaptive(&mut f, w[0], w[1], abs_tol / pieces, rel_tol)?;
        total.value += q.value;
        total.error += q.error;
    }
    Ok(total)
}

/// ∫ₐᵇ (b−u)^α g(u) du for α > −1, after substituting s = (b−u)^{α+1}
/// to remove the endpoint singularity.
pub fn integrate_power_weight<G: FnMut(f64) -> f64>(
    mut g: G,
    a: f64,
    b: f64,
    alpha: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Quadrature, Error> {
    if alpha <= -1.0 {
        return Err(Error::DivergentIntegral("power weight exponent must exceed -1".into()));
    }
    if a >= b {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    let p = alpha + 1.0;
    let top = libm::pow(b - a, p);
    let q = integrate_adaptive(|s| g(b - libm::pow(s, 1.0 / p)), 0.0, top, abs_tol * p, rel_tol)?;
    Ok(Quadrature { value: q.value / p, error: q.error / p })
}
