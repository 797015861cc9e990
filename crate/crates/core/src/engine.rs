//! Monte Carlo engine for the joint (X, σ²) system.
//!
//! Paths are generated in blocks of [`BLOCK_SIZE`] samples. Block `b` draws
//! from `ChaCha8(seed)` on stream `b`, so any block can be regenerated on its
//! own and the result does not depend on how blocks are scheduled. Block
//! statistics are merged in block order.
//!
//! The log-price uses the Euler step
//!
//! ```text
//! Xₙ₊₁ = Xₙ + (r − ζ − ½σ²ₙ)Δt + σₙ(ρ₁ΔWₙ + √(1−ρ₁²)ΔW̃ₙ) + ρ₂η ΔJ̃ₙ
//! ```
//!
//! with `σ²ₙ` floored at zero, jumps booked at the end of their step, and the
//! same `ΔW` driving the CIR factor.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analytics::BsPoint;
use crate::approx::{ProjectedVol, ProjectionTable};
use crate::grid::{TimeGrid, DEFAULT_DT};
use crate::levy::{JumpPath, JumpSampler, LevyQuadrature};
use crate::variance::{
    build_variance_path, cir_from_increments, CirPath, FractionalKernel, ModelParams, VariancePathState,
};
use crate::{Error, Instrument, Payoff, Result};

/// Samples per RNG block.
pub const BLOCK_SIZE: usize = 256;

/// Nodes of the Gauss–Laguerre rule used for ℓ-integrals along paths.
pub const PATH_LEVY_NODES: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    /// Time steps over the whole horizon; `None` means a step near 1/512.
    #[serde(default)]
    pub steps: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { paths: 10_000, steps: None, seed: 42, antithetic: false }
    }
}

impl McConfig {
    pub fn grid(&self, horizon: f64) -> Result<TimeGrid> {
        match self.steps {
            Some(n) => TimeGrid::new(horizon, n),
            None => TimeGrid::with_step(horizon, DEFAULT_DT),
        }
    }
}

/// Streaming mean and co-moment matrix of a fixed-width sample vector.
/// Merging uses the pairwise update, so the result depends only on the
/// order of pushes and merges.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    n: u64,
    width: usize,
    mean: Vec<f64>,
    co: Vec<f64>,
}

impl Moments {
    pub fn new(width: usize) -> Self {
        Self { n: 0, width, mean: alloc::vec![0.0; width], co: alloc::vec![0.0; width * width] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.width);
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        let w = self.width;
        let mut before = [0.0f64; 16];
        let mut dyn_before;
        let delta: &mut [f64] = if w <= 16 {
            &mut before[..w]
        } else {
            dyn_before = alloc::vec![0.0; w];
            &mut dyn_before[..]
        };
        for i in 0..w {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] * inv;
        }
        for i in 0..w {
            for j in 0..w {
                self.co[i * w + j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
    }

    pub fn merge(&mut self, other: &Moments) {
        assert_eq!(self.width, other.width);
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let w = self.width;
        let delta: Vec<f64> = (0..w).map(|i| other.mean[i] - self.mean[i]).collect();
        for i in 0..w {
            for j in 0..w {
                self.co[i * w + j] += other.co[i * w + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for i in 0..w {
            self.mean[i] += delta[i] * nb / n;
        }
        self.n += other.n;
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mean[i]
    }

    /// Sample covariance (divisor n − 1).
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.co[i * self.width + j] / (self.n - 1) as f64
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.covariance(i, i)
    }

    /// Standard error of the mean of column `i`.
    pub fn stderr(&self, i: usize) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        libm::sqrt(self.variance(i) / self.n as f64)
    }

    /// Mean and standard error of `Σ wᵢ·colᵢ`.
    pub fn linear(&self, weights: &[(usize, f64)]) -> (f64, f64) {
        let mean = weights.iter().map(|&(i, w)| w * self.mean(i)).sum();
        let mut var = 0.0;
        for &(i, wi) in weights {
            for &(j, wj) in weights {
                var += wi * wj * self.covariance(i, j);
            }
        }
        (mean, libm::sqrt(var.max(0.0) / self.n as f64))
    }

    /// Control-variate estimate of column `target` using columns `controls`
    /// with known means. Coefficients are the sample regression
    /// coefficients; the standard error is that of the regression residual.
    pub fn control_variate(&self, target: usize, controls: &[usize], means: &[f64]) -> (f64, f64) {
        let k = controls.len();
        assert_eq!(k, means.len());
        let mut a = alloc::vec![0.0; k * k];
        let mut b = alloc::vec![0.0; k];
        for (r, &ci) in controls.iter().enumerate() {
            b[r] = self.covariance(ci, target);
            for (c, &cj) in controls.iter().enumerate() {
                a[r * k + c] = self.covariance(ci, cj);
            }
        }
        let beta = solve_spd(&mut a, &mut b, k);
        let mut est = self.mean(target);
        let mut resid = self.variance(target);
        for r in 0..k {
            est -= beta[r] * (self.mean(controls[r]) - means[r]);
            resid -= beta[r] * self.covariance(controls[r], target);
        }
        (est, libm::sqrt(resid.max(0.0) / self.n as f64))
    }
}

// Gaussian elimination with partial pivoting; degenerate directions get a
// zero coefficient.
fn solve_spd(a: &mut [f64], b: &mut [f64], k: usize) -> Vec<f64> {
    let scale = (0..k).map(|i| libm::fabs(a[i * k + i])).fold(0.0, f64::max);
    let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);
    let mut active = alloc::vec![true; k];
    for col in 0..k {
        let mut piv = col;
        for r in col + 1..k {
            if libm::fabs(a[r * k + col]) > libm::fabs(a[piv * k + col]) {
                piv = r;
            }
        }
        if libm::fabs(a[piv * k + col]) <= tiny {
            active[col] = false;
            continue;
        }
        if piv != col {
            for c in 0..k {
                a.swap(col * k + c, piv * k + c);
            }
            b.swap(col, piv);
        }
        for r in col + 1..k {
            let f = a[r * k + col] / a[col * k + col];
            for c in col..k {
                a[r * k + c] -= f * a[col * k + c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = alloc::vec![0.0; k];
    for col in (0..k).rev() {
        if !active[col] {
            continue;
        }
        let mut s = b[col];
        for c in col + 1..k {
            s -= a[col * k + c] * x[c];
        }
        x[col] = s / a[col * k + col];
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McStatistics {
    pub estimate: f64,
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl McStatistics {
    pub fn new(estimate: f64, stderr: f64, n_paths: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            estimate,
            stderr,
            ci95: (estimate - 1.96 * stderr, estimate + 1.96 * stderr),
            n_paths,
            n_steps,
            seed,
        }
    }
}

/// Runs independent blocks and returns their statistics in block order.
pub trait BlockExecutor {
    fn run_blocks(&self, n_blocks: usize, job: &(dyn Fn(usize) -> Moments + Sync)) -> Vec<Moments>;
}

/// Runs blocks one after the other on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl BlockExecutor for Sequential {
    fn run_blocks(&self, n_blocks: usize, job: &(dyn Fn(usize) -> Moments + Sync)) -> Vec<Moments> {
        (0..n_blocks).map(job).collect()
    }
}

/// A path statistic with a fixed number of columns.
pub trait PathFunctional: Sync {
    fn width(&self) -> usize;
    fn evaluate(&self, path: &SimulatedPath, out: &mut [f64]);
}

/// Random draws and derived trajectories of one path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimulatedPath {
    pub dw: Vec<f64>,
    pub dw_perp: Vec<f64>,
    pub jumps: JumpPath,
    pub cir: CirPath,
    pub state: VariancePathState,
    pub log_price: Vec<f64>,
}

/// Shared, immutable per-grid data for path generation.
#[derive(Clone, Debug)]
pub struct PathSimulator {
    params: ModelParams,
    grid: TimeGrid,
    x0: f64,
    zeta: f64,
    rho_perp: f64,
    sampler: JumpSampler,
    kernel: Option<FractionalKernel>,
}

impl PathSimulator {
    pub fn new(params: &ModelParams, grid: &TimeGrid, x0: f64) -> Result<Self> {
        let kernel = if params.c2 != 0.0 && params.nu != 0.0 {
            Some(FractionalKernel::new(params.alpha(), grid.dt(), grid.steps())?)
        } else {
            None
        };
        Ok(Self {
            params: *params,
            grid: *grid,
            x0,
            zeta: params.zeta()?,
            rho_perp: libm::sqrt((1.0 - params.rho1 * params.rho1).max(0.0)),
            sampler: JumpSampler::new(&params.levy),
            kernel,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// Draws Brownian increments for W and W̃, then the subordinator.
    pub fn draw(&self, rng: &mut ChaCha8Rng, path: &mut SimulatedPath) {
        let n = self.grid.steps();
        let sd = libm::sqrt(self.grid.dt());
        path.dw.clear();
        path.dw_perp.clear();
        for _ in 0..n {
            let g: f64 = StandardNormal.sample(rng);
            path.dw.push(sd * g);
        }
        for _ in 0..n {
            let g: f64 = StandardNormal.sample(rng);
            path.dw_perp.push(sd * g);
        }
        self.sampler.sample_path(&self.grid, rng, &mut path.jumps);
    }

    /// Flips the sign of both Brownian drivers, keeping the jumps.
    pub fn mirror(&self, path: &mut SimulatedPath) {
        path.dw.iter_mut().for_each(|v| *v = -*v);
        path.dw_perp.iter_mut().for_each(|v| *v = -*v);
    }

    /// Rebuilds CIR, variance and log-price trajectories from the draws.
    pub fn rebuild(&self, path: &mut SimulatedPath) {
        let p = &self.params;
        cir_from_increments(p, &self.grid, &path.dw, &mut path.cir);
        build_variance_path(p, &self.grid, &path.cir, &path.jumps, self.kernel.as_ref(), &mut path.state);
        let dt = self.grid.dt();
        let drift = p.r - self.zeta;
        let jump_scale = p.rho2 * p.eta;
        path.log_price.clear();
        let mut x = self.x0;
        path.log_price.push(x);
        for k in 0..self.grid.steps() {
            let v = path.state.var[k].max(0.0);
            let sig = libm::sqrt(v);
            x += (drift - 0.5 * v) * dt
                + sig * (p.rho1 * path.dw[k] + self.rho_perp * path.dw_perp[k])
                + jump_scale * path.jumps.dj_tilde(k);
            path.log_price.push(x);
        }
    }
}

/// Lazily simulated set of paths. Paths are regenerated from the seed on
/// demand rather than stored.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    sim: PathSimulator,
    config: McConfig,
    n_samples: usize,
}

/// Ensemble for `params` started at `inst.spot`, on `[0, inst.maturity]`.
pub fn simulate_paths(params: &ModelParams, inst: &Instrument, config: &McConfig) -> Result<PathEnsemble> {
    inst.validate()?;
    params.validate(inst.maturity)?;
    if config.paths == 0 {
        return Err(Error::Validation("paths must be >= 1".into()));
    }
    let grid = config.grid(inst.maturity)?;
    let sim = PathSimulator::new(params, &grid, inst.log_spot())?;
    let n_samples = if config.antithetic { config.paths.div_ceil(2) } else { config.paths };
    Ok(PathEnsemble { sim, config: *config, n_samples })
}

impl PathEnsemble {
    pub fn simulator(&self) -> &PathSimulator {
        &self.sim
    }

    pub fn params(&self) -> &ModelParams {
        &self.sim.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.sim.grid
    }

    pub fn config(&self) -> &McConfig {
        &self.config
    }

    /// Independent samples; a sample is an antithetic pair when enabled.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Number of simulated trajectories.
    pub fn n_paths(&self) -> usize {
        if self.config.antithetic {
            2 * self.n_samples
        } else {
            self.n_samples
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.n_samples.div_ceil(BLOCK_SIZE)
    }

    fn block_rng(&self, block: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(block as u64);
        rng
    }

    fn block_range(&self, block: usize) -> core::ops::Range<usize> {
        let start = block * BLOCK_SIZE;
        start..(start + BLOCK_SIZE).min(self.n_samples)
    }

    /// Mean statistics of `f` over the ensemble; antithetic pairs are
    /// averaged into one sample.
    pub fn evaluate<F: PathFunctional, E: BlockExecutor>(&self, f: &F, exec: &E) -> Moments {
        let w = f.width();
        let job = |block: usize| {
            let mut rng = self.block_rng(block);
            let mut m = Moments::new(w);
            let mut path = SimulatedPath::default();
            let mut out = alloc::vec![0.0; w];
            let mut out2 = alloc::vec![0.0; w];
            for _ in self.block_range(block) {
                self.sim.draw(&mut rng, &mut path);
                self.sim.rebuild(&mut path);
                f.evaluate(&path, &mut out);
                if self.config.antithetic {
                    self.sim.mirror(&mut path);
                    self.sim.rebuild(&mut path);
                    f.evaluate(&path, &mut out2);
                    for (a, b) in out.iter_mut().zip(&out2) {
                        *a = 0.5 * (*a + b);
                    }
                }
                m.push(&out);
            }
            m
        };
        let parts = exec.run_blocks(self.n_blocks(), &job);
        let mut total = Moments::new(w);
        for p in &parts {
            total.merge(p);
        }
        total
    }

    /// Visits every trajectory in order on the calling thread.
    pub fn for_each_path<V: FnMut(usize, &SimulatedPath)>(&self, mut visit: V) {
        let mut path = SimulatedPath::default();
        let mut idx = 0;
        for block in 0..self.n_blocks() {
            let mut rng = self.block_rng(block);
            for _ in self.block_range(block) {
                self.sim.draw(&mut rng, &mut path);
                self.sim.rebuild(&mut path);
                visit(idx, &path);
                idx += 1;
                if self.config.antithetic {
                    self.sim.mirror(&mut path);
                    self.sim.rebuild(&mut path);
                    visit(idx, &path);
                    idx += 1;
                }
            }
        }
    }

    /// Regenerates trajectory `i`.
    pub fn path(&self, i: usize) -> Option<SimulatedPath> {
        if i >= self.n_paths() {
            return None;
        }
        let per = if self.config.antithetic { 2 } else { 1 };
        let sample = i / per;
        let block = sample / BLOCK_SIZE;
        let mut rng = self.block_rng(block);
        let mut path = SimulatedPath::default();
        for _ in block * BLOCK_SIZE..=sample {
            self.sim.draw(&mut rng, &mut path);
        }
        if i % per == 1 {
            self.sim.mirror(&mut path);
        }
        self.sim.rebuild(&mut path);
        Some(path)
    }

    pub fn statistics(&self, m: &Moments, col: usize) -> McStatistics {
        McStatistics::new(m.mean(col), m.stderr(col), self.n_paths(), self.grid().steps(), self.config.seed)
    }
}

/// Discounted European payoffs at maturity, one column per contract.
#[derive(Clone, Debug)]
pub struct EuropeanPayoffs {
    pub discount: f64,
    pub contracts: Vec<(Payoff, f64)>,
}

impl PathFunctional for EuropeanPayoffs {
    fn width(&self) -> usize {
        self.contracts.len()
    }

    fn evaluate(&self, path: &SimulatedPath, out: &mut [f64]) {
        let s = libm::exp(*path.log_price.last().unwrap());
        for (o, &(kind, k)) in out.iter_mut().zip(&self.contracts) {
            *o = self.discount * kind.value(s, k);
        }
    }
}

pub fn price_european_mc<E: BlockExecutor>(
    ensemble: &PathEnsemble,
    payoff: Payoff,
    strike: f64,
    exec: &E,
) -> McStatistics {
    let f = EuropeanPayoffs {
        discount: libm::exp(-ensemble.params().r * ensemble.grid().horizon()),
        contracts: alloc::vec![(payoff, strike)],
    };
    let m = ensemble.evaluate(&f, exec);
    ensemble.statistics(&m, 0)
}

/// Call price conditional on the variance driver and the jumps.
///
/// Given W and J, the W̃-part of `X_T` is Gaussian with variance
/// `(1−ρ₁²)V`, `V = Σσ²ₙΔt`, so the call is a Black–Scholes price at
/// log-spot `x − ζT − ½ρ₁²V + ρ₁ΣσₙΔWₙ + ρ₂ηJ̃_T`.
///
/// Columns 1–5 are zero-mean controls: `I = ΣσₙΔWₙ`, `J̃_T`, the unfloored
/// `V` minus its exact mean, `I² − V`, and the same conditional price for
/// the deterministic variance `Uₙ` driven by the same `ΔW`, minus its
/// closed-form mean.
#[derive(Clone, Debug)]
pub struct ConditionalCall {
    strike: f64,
    horizon: f64,
    mean_v: f64,
    x0: f64,
    zeta: f64,
    params: ModelParams,
    rho_perp: f64,
    reference_vol: Vec<f64>,
    reference_v: f64,
    reference_mean: f64,
}

impl ConditionalCall {
    pub const CONTROLS: [usize; 5] = [1, 2, 3, 4, 5];

    pub fn new(sim: &PathSimulator, strike: f64) -> Self {
        let p = sim.params();
        let g = sim.grid();
        let mu = p.levy.mean_rate();
        let dt = g.dt();
        let mean_v = (0..g.steps())
            .map(|k| {
                let t = g.time(k);
                (p.mean_curve(t) + p.c3 * p.eta * mu * t) * dt
            })
            .sum();
        let reference_vol: Vec<f64> = (0..g.steps()).map(|k| libm::sqrt(p.mean_curve(g.time(k)).max(0.0))).collect();
        let reference_v: f64 = reference_vol.iter().map(|s| s * s * dt).sum();
        let horizon = g.horizon();
        let reference_mean =
            BsPoint::new(0.0, sim.x0(), libm::sqrt(reference_v / horizon), strike, p.r, horizon).price();
        Self {
            strike,
            horizon,
            mean_v,
            x0: sim.x0(),
            zeta: sim.zeta(),
            params: *p,
            rho_perp: libm::sqrt((1.0 - p.rho1 * p.rho1).max(0.0)),
            reference_vol,
            reference_v,
            reference_mean,
        }
    }
}

impl PathFunctional for ConditionalCall {
    fn width(&self) -> usize {
        6
    }

    fn evaluate(&self, path: &SimulatedPath, out: &mut [f64]) {
        let p = &self.params;
        let n = path.dw.len();
        let dt = self.horizon / n as f64;
        let mut v = 0.0;
        let mut v_raw = 0.0;
        let mut ito = 0.0;
        let mut ito_ref = 0.0;
        for k in 0..n {
            let s2 = path.state.var[k];
            v_raw += s2 * dt;
            let s2p = s2.max(0.0);
            v += s2p * dt;
            ito += libm::sqrt(s2p) * path.dw[k];
            ito_ref += self.reference_vol[k] * path.dw[k];
        }
        let jt = *path.jumps.j_tilde.last().unwrap();
        let rho1_sq = p.rho1 * p.rho1;
        let xi = self.x0 - self.zeta * self.horizon - 0.5 * rho1_sq * v + p.rho1 * ito + p.rho2 * p.eta * jt;
        let y = self.rho_perp * libm::sqrt(v / self.horizon);
        out[0] = BsPoint::new(0.0, xi, y, self.strike, p.r, self.horizon).price();
        out[1] = ito;
        out[2] = jt;
        out[3] = v_raw - self.mean_v;
        out[4] = ito * ito - v;
        let xi_ref = self.x0 - 0.5 * rho1_sq * self.reference_v + p.rho1 * ito_ref;
        let y_ref = self.rho_perp * libm::sqrt(self.reference_v / self.horizon);
        out[5] = BsPoint::new(0.0, xi_ref, y_ref, self.strike, p.r, self.horizon).price() - self.reference_mean;
    }
}

/// Call price from [`ConditionalCall`] with control variates.
pub fn conditional_call_mc<E: BlockExecutor>(ensemble: &PathEnsemble, strike: f64, exec: &E) -> McStatistics {
    let f = ConditionalCall::new(ensemble.simulator(), strike);
    let m = ensemble.evaluate(&f, exec);
    let (est, se) = m.control_variate(0, &ConditionalCall::CONTROLS, &[0.0; 5]);
    McStatistics::new(est, se, ensemble.n_paths(), ensemble.grid().steps(), ensemble.config().seed)
}

/// Column layout of [`DecompositionTerms`].
pub const DECOMPOSITION_COLUMNS: [&str; 9] = [
    "payoff",
    "zeta_drift",
    "term_I",
    "term_II",
    "term_III",
    "term_IV",
    "jump_cross",
    "sum_terms",
    "payoff_minus_expansion",
];

/// Per-path integrands of the expansion of the discounted payoff around
/// `BS(0, x, v₀)`, evaluated by a left-point rule on the simulation grid.
pub struct DecompositionTerms {
    table: ProjectionTable,
    levy_rule: Option<LevyQuadrature>,
    params: ModelParams,
    strike: f64,
    zeta: f64,
    bs_base: f64,
}

impl DecompositionTerms {
    pub fn new(sim: &PathSimulator, strike: f64) -> Result<Self> {
        let p = sim.params();
        let table = ProjectionTable::new(p, sim.grid())?;
        let jumps_on = p.eta != 0.0 && !p.levy.is_null();
        let levy_rule = jumps_on.then(|| p.levy.quadrature(PATH_LEVY_NODES));
        let v0 = crate::approx::frozen_state(p, sim.x0(), 0.0, sim.grid().horizon(), sim.zeta(), 0.0).v;
        let bs_base = BsPoint::new(0.0, sim.x0(), v0, strike, p.r, sim.grid().horizon()).price();
        Ok(Self { table, levy_rule, params: *p, strike, zeta: sim.zeta(), bs_base })
    }

    pub fn bs_base(&self) -> f64 {
        self.bs_base
    }
}

impl PathFunctional for DecompositionTerms {
    fn width(&self) -> usize {
        DECOMPOSITION_COLUMNS.len()
    }

    fn evaluate(&self, path: &SimulatedPath, out: &mut [f64]) {
        let p = &self.params;
        let grid = self.table.grid();
        let horizon = grid.horizon();
        let dt = grid.dt();
        let n = grid.steps();
        let mut proj: Vec<ProjectedVol> = Vec::with_capacity(n);
        self.table.project_path(&path.state, 0.0, &mut proj);
        let u = p.rho2 * p.eta;
        let c3eta = p.c3 * p.eta;
        let mut acc = [0.0f64; 6];
        for k in 0..n {
            let t = grid.time(k);
            let disc = libm::exp(-p.r * t) * dt;
            let x = path.log_price[k];
            let v = proj[k].v;
            let pt = BsPoint::new(t, x, v, self.strike, p.r, horizon);
            let e = pt.eval();
            let cir = path.state.cir_var[k].max(0.0);
            let sig = libm::sqrt(path.state.var[k].max(0.0));
            let a = self.table.kernel(k);
            acc[0] -= self.zeta * e.log_delta() * disc;
            acc[1] += 0.5 * p.rho1 * e.lambda_gamma(1, 1) * sig * p.nu * a * libm::sqrt(cir) * disc;
            acc[2] += 0.125 * e.lambda_gamma(0, 2) * p.nu * p.nu * a * a * cir * disc;
            if let Some(rule) = &self.levy_rule {
                let bs = e.price();
                let log_delta = e.log_delta();
                let vega = e.vega();
                let gamma_bs = e.g_derivative(0);
                let rem = horizon - t;
                let mut t3 = 0.0;
                let mut t4 = 0.0;
                let mut cross = 0.0;
                for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let h = u * z;
                    let jump_v = libm::sqrt(v * v + c3eta * z);
                    let dv = jump_v - v;
                    let d2g = if v > 0.0 { dv - c3eta * z / (2.0 * v) } else { 0.0 };
                    let bs_x = pt.with_x(x + h).price();
                    let bs_y = pt.with_y(jump_v).price();
                    let bs_xy = BsPoint::new(t, x + h, jump_v, self.strike, p.r, horizon).price();
                    t3 += w * d2g;
                    t4 += w * ((bs_x - bs - h * log_delta) + (bs_y - bs - dv * vega));
                    cross += w * (bs_xy - bs_x - bs_y + bs);
                }
                acc[3] += gamma_bs * v * rem * t3 * disc;
                acc[4] += t4 * disc;
                acc[5] += cross * disc;
            }
        }
        let payoff = libm::exp(-p.r * horizon) * (libm::exp(path.log_price[n]) - self.strike).max(0.0);
        out[0] = payoff;
        out[1..7].copy_from_slice(&acc);
        let sum: f64 = acc.iter().sum();
        out[7] = sum;
        out[8] = payoff - self.bs_base - sum;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub bs_base: f64,
    pub terms: Vec<TermEstimate>,
    /// `bs_base` plus the mean of every correction term.
    pub expansion: TermEstimate,
    pub mc_price: McStatistics,
    /// √(stderr(price)² + stderr(expansion)²).
    pub combined_stderr: f64,
    /// Path-wise difference `payoff − expansion`, with its own error.
    pub paired_difference: TermEstimate,
    /// |expansion − price| ≤ 3·combined stderr.
    pub agrees: bool,
}

/// Monte Carlo estimates of every term of the expansion at inception.
pub fn estimate_decomposition_terms<E: BlockExecutor>(
    ensemble: &PathEnsemble,
    strike: f64,
    exec: &E,
) -> Result<DecompositionReport> {
    let f = DecompositionTerms::new(ensemble.simulator(), strike)?;
    let m = ensemble.evaluate(&f, exec);
    let col = |name: &str, i: usize| TermEstimate { name: name.into(), estimate: m.mean(i), stderr: m.stderr(i) };
    let terms = (1..7).map(|i| col(DECOMPOSITION_COLUMNS[i], i)).collect();
    let mut expansion = col("expansion", 7);
    expansion.estimate += f.bs_base();
    let mc_price = ensemble.statistics(&m, 0);
    let combined = libm::sqrt(mc_price.stderr * mc_price.stderr + expansion.stderr * expansion.stderr);
    let agrees = libm::fabs(expansion.estimate - mc_price.estimate) <= 3.0 * combined;
    Ok(DecompositionReport {
        bs_base: f.bs_base(),
        terms,
        expansion,
        mc_price,
        combined_stderr: combined,
        paired_difference: col("payoff_minus_expansion", 8),
        agrees,
    })
}

/// Path integrand of the first-order jump correction,
/// `Σₙ e^{−rtₙ}(1 + (ρ₁/2)Lₙ) ∫ Δ²ₓ(ΛΓBS)(tₙ, Xₙ, vₙ; ρ₂ηz) ℓ(dz) Δt`.
pub struct JumpCorrection {
    table: ProjectionTable,
    rule: LevyQuadrature,
    params: ModelParams,
    strike: f64,
    delta: f64,
}

impl JumpCorrection {
    pub fn new(sim: &PathSimulator, strike: f64, delta: f64) -> Result<Self> {
        let p = sim.params();
        Ok(Self {
            table: ProjectionTable::new(p, sim.grid())?,
            rule: p.levy.quadrature(PATH_LEVY_NODES),
            params: *p,
            strike,
            delta,
        })
    }
}

impl PathFunctional for JumpCorrection {
    fn width(&self) -> usize {
        1
    }

    fn evaluate(&self, path: &SimulatedPath, out: &mut [f64]) {
        let p = &self.params;
        let grid = self.table.grid();
        let horizon = grid.horizon();
        let dt = grid.dt();
        let u = p.rho2 * p.eta;
        let mut proj = Vec::with_capacity(grid.steps());
        self.table.project_path(&path.state, self.delta, &mut proj);
        let mut acc = 0.0;
        for k in 0..grid.steps() {
            let t = grid.time(k);
            let x = path.log_price[k];
            let pt = BsPoint::new(t, x, proj[k].v, self.strike, p.r, horizon);
            let e = pt.eval();
            let f0 = e.g_derivative(1);
            let f1 = e.g_derivative(2);
            let inner = self.rule.integrate(|z| pt.with_x(x + u * z).eval().g_derivative(1) - f0 - u * z * f1);
            let l = self.table.l_wm(k, path.state.cir_var[k].max(0.0));
            acc += libm::exp(-p.r * t) * (1.0 + 0.5 * p.rho1 * l) * inner * dt;
        }
        out[0] = acc;
    }
}

/// Simulation estimate of the first-order jump correction.
pub fn jump_term_mc<E: BlockExecutor>(
    params: &ModelParams,
    inst: &Instrument,
    config: &McConfig,
    delta: f64,
    exec: &E,
) -> Result<McStatistics> {
    if params.rho2 * params.eta == 0.0 || params.levy.is_null() {
        let steps = config.grid(inst.maturity)?.steps();
        return Ok(McStatistics::new(0.0, 0.0, 0, steps, config.seed));
    }
    let ens = simulate_paths(params, inst, config)?;
    let f = JumpCorrection::new(ens.simulator(), inst.strike, delta)?;
    let m = ens.evaluate(&f, exec);
    Ok(ens.statistics(&m, 0))
}

/// Boxed functional, handy when the concrete type is chosen at run time.
pub type DynFunctional = Box<dyn PathFunctional>;

impl PathFunctional for DynFunctional {
    fn width(&self) -> usize {
        (**self).width()
    }

    fn evaluate(&self, path: &SimulatedPath, out: &mut [f64]) {
        (**self).evaluate(path, out)
    }
}
