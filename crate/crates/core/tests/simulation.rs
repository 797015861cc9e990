use fsvjj_core::approx::{d_mm, kernel_a, projected_variance};
use fsvjj_core::engine::{
    estimate_decomposition_terms, price_european_mc, simulate_paths, BlockExecutor, Moments, PathFunctional,
    Sequential, SimulatedPath,
};
use fsvjj_core::levy::{JumpPath, JumpSampler, LevyMeasureSpec};
use fsvjj_core::variance::{build_variance_path, cir_from_increments, simulate_cir, CirPath, FractionalKernel};
use fsvjj_core::{BsPoint, Instrument, McConfig, ModelParams, Payoff, TimeGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const ATM: Instrument = Instrument { spot: 100.0, strike: 100.0, maturity: 1.0 };

fn desk(nu: f64, eta: f64) -> ModelParams {
    ModelParams {
        kappa: 2.0,
        theta: 0.04,
        nu,
        v0bar: 0.04,
        hurst: 0.75,
        c1: 0.5,
        c2: 0.3,
        c3: 1.0,
        eta,
        rho1: -0.5,
        rho2: -0.5,
        r: 0.02,
        levy: LevyMeasureSpec::CompoundPoissonExponential { lambda: 1.0, beta: 10.0 },
    }
}

/// Constant variance `s`: no vol-of-vol, no jumps, no mean reversion.
fn flat(s: f64) -> ModelParams {
    ModelParams { kappa: 0.0, v0bar: s, theta: s, nu: 0.0, eta: 0.0, c1: 0.0, c2: 0.0, r: 0.0, ..desk(0.0, 0.0) }
}

fn within(est: f64, se: f64, want: f64) -> bool {
    (est - want).abs() <= 3.0 * se
}

struct Terminal;

impl PathFunctional for Terminal {
    fn width(&self) -> usize {
        4
    }

    fn evaluate(&self, path: &SimulatedPath, out: &mut [f64]) {
        let n = path.dw.len();
        out[0] = path.log_price[n];
        out[1] = path.log_price[n].exp();
        out[2] = path.jumps.j[n];
        out[3] = path.jumps.j_tilde[n];
    }
}

#[test]
fn flat_variance_gives_lognormal_terminal() {
    let s = 0.04;
    let cfg = McConfig { paths: 40_000, steps: Some(16), seed: 1, antithetic: false };
    let ens = simulate_paths(&flat(s), &ATM, &cfg).unwrap();
    let m = ens.evaluate(&Terminal, &Sequential);
    let n = m.count() as f64;
    let se_var = s * (2.0 / (n - 1.0)).sqrt();
    assert!(within(m.variance(0), se_var, s), "{} vs {s}", m.variance(0));
    assert!(within(m.mean(0), m.stderr(0), 100f64.ln() - 0.5 * s));

    let call = price_european_mc(&ens, Payoff::Call, 100.0, &Sequential);
    assert!(within(call.estimate, call.stderr, 7.965567455405804), "{call:?}");
}

#[test]
fn zero_strike_call_is_the_spot() {
    for spec in [
        LevyMeasureSpec::CompoundPoissonExponential { lambda: 2.0, beta: 8.0 },
        LevyMeasureSpec::Gamma { a: 3.0, b: 12.0, eps: 1e-6 },
    ] {
        let p = ModelParams { levy: spec, eta: 0.2, ..desk(0.2, 0.0) };
        let cfg = McConfig { paths: 100_000, steps: Some(32), seed: 5, antithetic: false };
        let ens = simulate_paths(&p, &ATM, &cfg).unwrap();
        let st = price_european_mc(&ens, Payoff::Call, 0.0, &Sequential);
        assert!(within(st.estimate, st.stderr, 100.0), "{spec:?}: {st:?}");
    }
}

struct Parity;

impl PathFunctional for Parity {
    fn width(&self) -> usize {
        1
    }

    fn evaluate(&self, path: &SimulatedPath, out: &mut [f64]) {
        let s = path.log_price.last().unwrap().exp();
        let disc = (-0.02f64).exp();
        out[0] = disc * (Payoff::Call.value(s, 100.0) - Payoff::Put.value(s, 100.0));
    }
}

#[test]
fn put_call_parity_holds_pathwise_in_mean() {
    let cfg = McConfig { paths: 50_000, steps: Some(32), seed: 9, antithetic: false };
    let ens = simulate_paths(&desk(0.2, 0.1), &ATM, &cfg).unwrap();
    let m = ens.evaluate(&Parity, &Sequential);
    let want = 100.0 - 100.0 * (-0.02f64).exp();
    assert!(within(m.mean(0), m.stderr(0), want), "{} ± {}", m.mean(0), m.stderr(0));
}

#[test]
fn subordinator_and_compensated_means() {
    for spec in [
        LevyMeasureSpec::CompoundPoissonExponential { lambda: 1.5, beta: 10.0 },
        LevyMeasureSpec::Gamma { a: 2.0, b: 5.0, eps: 1e-6 },
    ] {
        let p = ModelParams { levy: spec, ..desk(0.1, 0.1) };
        let cfg = McConfig { paths: 100_000, steps: Some(8), seed: 21, antithetic: false };
        let ens = simulate_paths(&p, &ATM, &cfg).unwrap();
        let m = ens.evaluate(&Terminal, &Sequential);
        assert!(within(m.mean(2), m.stderr(2), spec.mean_rate()), "{spec:?}: {}", m.mean(2));
        assert!(within(m.mean(3), m.stderr(3), 0.0), "{spec:?}: {}", m.mean(3));
    }
}

#[test]
fn cir_terminal_mean() {
    let p = ModelParams { v0bar: 0.09, ..desk(0.3, 0.0) };
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut m = Moments::new(1);
    for _ in 0..100_000 {
        let c = simulate_cir(&p, &grid, &mut rng).unwrap();
        m.push(&[*c.var.last().unwrap()]);
    }
    assert!(within(m.mean(0), m.stderr(0), p.mean_curve(1.0)), "{} ± {}", m.mean(0), m.stderr(0));
}

#[test]
fn unit_correlation_ties_price_to_variance_shocks() {
    let p = ModelParams { rho1: 1.0, ..desk(0.2, 0.0) };
    let cfg = McConfig { paths: 200, steps: Some(64), seed: 2, antithetic: false };
    let ens = simulate_paths(&p, &ATM, &cfg).unwrap();
    let dt = 1.0 / 64.0;
    ens.for_each_path(|_, path| {
        for k in 0..64 {
            let v = path.state.var[k].max(0.0);
            let dx = path.log_price[k + 1] - path.log_price[k];
            let want = (p.r - 0.5 * v) * dt + v.sqrt() * path.dw[k];
            assert!((dx - want).abs() < 1e-12, "step {k}: {dx} vs {want}");
        }
    });
}

#[test]
fn jump_moves_price_and_variance_in_the_same_step() {
    let p = desk(0.1, 0.2);
    let cfg = McConfig { paths: 64, steps: Some(128), seed: 8, antithetic: false };
    let ens = simulate_paths(&p, &ATM, &cfg).unwrap();
    let zeta = p.zeta().unwrap();
    let dt = 1.0 / 128.0;
    let rho_perp = (1.0 - p.rho1 * p.rho1).sqrt();
    let mut jumps = 0;
    ens.for_each_path(|_, path| {
        for k in 0..128 {
            let v = path.state.var[k].max(0.0);
            let diffusion = (p.r - zeta - 0.5 * v) * dt + v.sqrt() * (p.rho1 * path.dw[k] + rho_perp * path.dw_perp[k]);
            let dx = path.log_price[k + 1] - path.log_price[k] - diffusion;
            let z = path.jumps.increments[k];
            let drift = -p.levy.mean_rate() * dt;
            assert!((dx - p.rho2 * p.eta * (z + drift)).abs() < 1e-12);
            if z > 0.0 {
                jumps += 1;
                // the variance jump shows up at the end of the same step
                let smooth = path.state.var[k + 1] - p.c3 * p.eta * z;
                let before = p.mean_curve((k + 1) as f64 * dt)
                    + p.c1 * p.nu * path.state.z[k + 1]
                    + p.c2 * p.nu * path.state.frac_z[k + 1]
                    + p.c3 * p.eta * path.jumps.j[k];
                assert!((smooth - before).abs() < 1e-12);
            }
        }
    });
    assert!(jumps > 20);
}

/// Runs blocks back to front but returns them in order.
struct Reversed;

impl BlockExecutor for Reversed {
    fn run_blocks(&self, n: usize, job: &(dyn Fn(usize) -> Moments + Sync)) -> Vec<Moments> {
        let mut out: Vec<Moments> = (0..n).rev().map(job).collect();
        out.reverse();
        out
    }
}

#[test]
fn estimates_are_bit_reproducible() {
    let cfg = McConfig { paths: 3000, steps: Some(32), seed: 77, antithetic: true };
    let p = desk(0.2, 0.1);
    let a = price_european_mc(&simulate_paths(&p, &ATM, &cfg).unwrap(), Payoff::Call, 100.0, &Sequential);
    let b = price_european_mc(&simulate_paths(&p, &ATM, &cfg).unwrap(), Payoff::Call, 100.0, &Reversed);
    assert_eq!(a, b);
    let c = price_european_mc(
        &simulate_paths(&p, &ATM, &McConfig { seed: 78, ..cfg }).unwrap(),
        Payoff::Call,
        100.0,
        &Sequential,
    );
    assert_ne!(a.estimate, c.estimate);
}

#[test]
fn antithetic_pairs_do_not_raise_stderr() {
    let plain = McConfig { paths: 20_000, steps: Some(16), seed: 3, antithetic: false };
    let anti = McConfig { antithetic: true, ..plain };
    let p = flat(0.04);
    let a = price_european_mc(&simulate_paths(&p, &ATM, &plain).unwrap(), Payoff::Call, 100.0, &Sequential);
    let b = price_european_mc(&simulate_paths(&p, &ATM, &anti).unwrap(), Payoff::Call, 100.0, &Sequential);
    assert_eq!(a.n_paths, b.n_paths);
    assert!(b.stderr <= a.stderr, "{} > {}", b.stderr, a.stderr);
}

#[test]
fn decomposition_vanishes_without_vol_of_vol_and_jumps() {
    let p = ModelParams { v0bar: 0.09, ..desk(0.0, 0.0) };
    let cfg = McConfig { paths: 2000, steps: Some(32), seed: 1, antithetic: false };
    let ens = simulate_paths(&p, &ATM, &cfg).unwrap();
    let rep = estimate_decomposition_terms(&ens, 100.0, &Sequential).unwrap();
    for t in &rep.terms {
        assert_eq!(t.estimate, 0.0, "{}", t.name);
    }
    let v0 = (0.04 + 0.05 * (1.0 - (-2.0f64).exp()) / 2.0).sqrt();
    let bs = BsPoint::new(0.0, 100f64.ln(), v0, 100.0, p.r, 1.0).price();
    assert!((rep.expansion.estimate - bs).abs() < 1e-12);
    assert!(rep.agrees);
}

#[test]
fn decomposition_without_jumps_has_no_jump_terms() {
    let cfg = McConfig { paths: 500, steps: Some(32), seed: 1, antithetic: false };
    let ens = simulate_paths(&desk(0.2, 0.0), &ATM, &cfg).unwrap();
    let rep = estimate_decomposition_terms(&ens, 100.0, &Sequential).unwrap();
    for t in &rep.terms {
        match t.name.as_str() {
            "term_I" | "term_II" => assert!(t.estimate != 0.0),
            _ => assert_eq!(t.estimate, 0.0, "{}", t.name),
        }
    }
}

fn normals(rng: &mut ChaCha8Rng, sd: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            sd * g
        })
        .collect()
}

// Nested simulation: freeze a path up to s = T/2, then average the realized
// variance over [s, T] across fresh continuations.
#[test]
fn projection_matches_nested_simulation() {
    let p = desk(0.2, 0.1);
    let steps = 256;
    let m = steps / 2;
    let grid = TimeGrid::new(1.0, steps).unwrap();
    let dt = grid.dt();
    let kernel = FractionalKernel::new(p.alpha(), dt, steps).unwrap();
    let sampler = JumpSampler::new(&p.levy);
    let mut rng = ChaCha8Rng::seed_from_u64(12);

    let prefix_dw = normals(&mut rng, dt.sqrt(), steps);
    let mut prefix_jumps = JumpPath::default();
    sampler.sample_path(&grid, &mut rng, &mut prefix_jumps);
    let mut cir = CirPath::default();
    cir_from_increments(&p, &grid, &prefix_dw, &mut cir);
    let mut state = Default::default();
    build_variance_path(&p, &grid, &cir, &prefix_jumps, Some(&kernel), &mut state);
    let proj = projected_variance(&p, &grid, &state, m, 0.0).unwrap();
    let want = proj.v2 * (1.0 - grid.time(m));

    let mut acc = Moments::new(1);
    let mut fresh = JumpPath::default();
    let mut jumps = JumpPath::default();
    for _ in 0..20_000 {
        let mut dw = prefix_dw[..m].to_vec();
        dw.extend(normals(&mut rng, dt.sqrt(), steps - m));
        sampler.sample_path(&grid, &mut rng, &mut fresh);
        jumps.increments = prefix_jumps.increments[..m].iter().chain(&fresh.increments[m..]).copied().collect();
        jumps.j = vec![0.0];
        jumps.j_tilde = vec![0.0];
        for k in 0..steps {
            let j = jumps.j[k] + jumps.increments[k];
            jumps.j.push(j);
            jumps.j_tilde.push(j - p.levy.mean_rate() * grid.time(k + 1));
        }
        cir_from_increments(&p, &grid, &dw, &mut cir);
        build_variance_path(&p, &grid, &cir, &jumps, Some(&kernel), &mut state);
        acc.push(&[state.realized[steps] - state.realized[m]]);
    }
    assert!(within(acc.mean(0), acc.stderr(0), want), "{} ± {} vs {want}", acc.mean(0), acc.stderr(0));
}

struct QuadraticVariation {
    kernel: Vec<f64>,
    nu: f64,
    dt: f64,
}

impl PathFunctional for QuadraticVariation {
    fn width(&self) -> usize {
        1
    }

    fn evaluate(&self, path: &SimulatedPath, out: &mut [f64]) {
        let f = |k: usize| self.nu * self.nu * self.kernel[k] * self.kernel[k] * path.cir.var[k];
        let n = path.dw.len();
        out[0] = (0..n).map(|k| 0.5 * (f(k) + f(k + 1)) * self.dt).sum();
    }
}

#[test]
fn d_mm_matches_simulated_quadratic_variation() {
    let p = desk(0.2, 0.0);
    let steps = 256;
    let grid = TimeGrid::new(1.0, steps).unwrap();
    let cfg = McConfig { paths: 20_000, steps: Some(steps), seed: 31, antithetic: false };
    let ens = simulate_paths(&p, &ATM, &cfg).unwrap();
    let kernel = (0..=steps).map(|k| kernel_a(1.0, grid.time(k), &p).unwrap()).collect();
    let m = ens.evaluate(&QuadraticVariation { kernel, nu: p.nu, dt: grid.dt() }, &Sequential);
    let want = d_mm(0.0, p.v0bar, &p, 1.0).unwrap();
    assert!(within(m.mean(0), m.stderr(0), want), "{} ± {} vs {want}", m.mean(0), m.stderr(0));
}
