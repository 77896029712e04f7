//! Monte Carlo simulation of the Jacobi model.
//!
//! Euler steps on `(V, X)` with `V` projected back into `[v_min, v_max]`
//! after every step. Each path draws from its own ChaCha stream keyed by
//! `(seed, path index)` and block sums are reduced in index order, so every
//! estimate is bit-identical for any thread count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hermite::GaussianWeight;
use crate::model::{InitialState, ModelParams};
use crate::payoffs::PayoffSpec;

/// Paths per reduction block.
const BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerFullTruncation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_steps")]
    pub steps_per_unit_time: usize,
    pub paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
}

fn default_steps() -> usize {
    250
}

impl SimConfig {
    pub fn new(paths: usize, seed: u64) -> Self {
        SimConfig {
            steps_per_unit_time: default_steps(),
            paths,
            seed,
            scheme: Scheme::EulerFullTruncation,
        }
    }

    pub fn with_steps(mut self, steps_per_unit_time: usize) -> Self {
        self.steps_per_unit_time = steps_per_unit_time;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_unit_time < 50 {
            return Err(invalid(
                "steps_per_unit_time",
                format!("must be >= 50, got {}", self.steps_per_unit_time),
            ));
        }
        if self.paths == 0 {
            return Err(invalid("paths", "must be >= 1"));
        }
        Ok(())
    }
}

/// Per-path output: log prices at the monitoring dates and the functionals
/// `M_T`, `C_T` at the last date.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFunctionals {
    pub x: Vec<f64>,
    pub m: f64,
    pub c: f64,
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("grid", "need at least one date"));
    }
    let mut prev = 0.0;
    for &t in grid {
        if !(t > prev && t.is_finite()) {
            return Err(invalid("grid", "dates must be positive and strictly increasing"));
        }
        prev = t;
    }
    Ok(())
}

/// Time-stepping plan: steps per monitoring interval and their lengths.
fn plan(grid: &[f64], steps_per_unit_time: usize) -> Vec<(usize, f64)> {
    let mut prev = 0.0;
    grid.iter()
        .map(|&t| {
            let dt = t - prev;
            prev = t;
            let n = ((dt * steps_per_unit_time as f64).ceil() as usize).max(1);
            (n, dt / n as f64)
        })
        .collect()
}

fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One Euler path. `visit(t, v, x)` is called at every time point.
fn run_path<F: FnMut(f64, f64, f64)>(
    params: &ModelParams,
    s0: &InitialState,
    steps: &[(usize, f64)],
    rng: &mut ChaCha8Rng,
    mut visit: F,
) -> PathFunctionals {
    let (kappa, theta, sigma, rho) = (params.kappa(), params.theta(), params.sigma(), params.rho());
    let (lo, hi) = (params.v_min(), params.v_max());
    let carry = params.r() - params.delta();
    let mut v = s0.v0;
    let mut x = s0.x0;
    let mut t = 0.0;
    let mut drift_int = 0.0;
    let mut mart = 0.0;
    let mut c = 0.0;
    let mut xs = Vec::with_capacity(steps.len());
    visit(t, v, x);
    for &(n, h) in steps {
        let sh = h.sqrt();
        for _ in 0..n {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let q = params.q_of_v(v).max(0.0);
            let sq = q.sqrt();
            let resid = (v - rho * rho * q).max(0.0);
            let dw1 = sh * z1;
            x += (carry - 0.5 * v) * h + rho * sq * dw1 + resid.sqrt() * sh * z2;
            mart += sq * dw1;
            let v_new = (v + kappa * (theta - v) * h + sigma * sq * dw1).clamp(lo, hi);
            let resid_new = v_new - rho * rho * params.q_of_v(v_new).max(0.0);
            drift_int += 0.5 * h * ((carry - 0.5 * v) + (carry - 0.5 * v_new));
            c += 0.5 * h * (resid + resid_new.max(0.0));
            v = v_new;
            t += h;
            visit(t, v, x);
        }
        xs.push(x);
    }
    PathFunctionals {
        x: xs,
        m: s0.x0 + drift_int + rho * mart,
        c,
    }
}

/// Single path with index `index`.
pub fn simulate_path(
    params: &ModelParams,
    s0: &InitialState,
    grid: &[f64],
    cfg: &SimConfig,
    index: u64,
) -> Result<PathFunctionals> {
    cfg.validate()?;
    s0.validate(params)?;
    check_grid(grid)?;
    let steps = plan(grid, cfg.steps_per_unit_time);
    Ok(run_path(params, s0, &steps, &mut path_rng(cfg.seed, index), |_, _, _| {}))
}

/// All `cfg.paths` paths, in index order.
pub fn simulate_paths(
    params: &ModelParams,
    s0: &InitialState,
    grid: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<PathFunctionals>> {
    cfg.validate()?;
    s0.validate(params)?;
    check_grid(grid)?;
    let steps = plan(grid, cfg.steps_per_unit_time);
    Ok((0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| run_path(params, s0, &steps, &mut path_rng(cfg.seed, i), |_, _, _| {}))
        .collect())
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Moments {
            n: 0.0,
            mean: vec![0.0; k],
            m2: vec![0.0; k],
        }
    }

    fn push(&mut self, vals: &[f64]) {
        self.n += 1.0;
        for (i, v) in vals.iter().enumerate() {
            let d = v - self.mean[i];
            self.mean[i] += d / self.n;
            self.m2[i] += d * (v - self.mean[i]);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.n / n;
            self.m2[i] += other.m2[i] + d * d * self.n * other.n / n;
        }
        self.n = n;
    }

    fn finish(&self) -> Vec<McEstimate> {
        self.mean
            .iter()
            .zip(&self.m2)
            .map(|(m, s)| {
                let var = if self.n > 1.0 { s / (self.n - 1.0) } else { 0.0 };
                McEstimate {
                    mean: *m,
                    std_error: (var / self.n).sqrt(),
                }
            })
            .collect()
    }
}

/// Monte Carlo means of `k` path statistics. `stat` writes the `k` values of
/// one path into its output slice. Reproducible across thread counts.
pub fn monte_carlo<F>(
    params: &ModelParams,
    s0: &InitialState,
    grid: &[f64],
    cfg: &SimConfig,
    k: usize,
    stat: F,
) -> Result<Vec<McEstimate>>
where
    F: Fn(&PathFunctionals, &mut [f64]) + Sync,
{
    monte_carlo_indexed(params, s0, grid, cfg, k, |_, p, out| stat(p, out))
}

/// As [`monte_carlo`], with the path index passed to `stat`.
pub fn monte_carlo_indexed<F>(
    params: &ModelParams,
    s0: &InitialState,
    grid: &[f64],
    cfg: &SimConfig,
    k: usize,
    stat: F,
) -> Result<Vec<McEstimate>>
where
    F: Fn(u64, &PathFunctionals, &mut [f64]) + Sync,
{
    cfg.validate()?;
    s0.validate(params)?;
    check_grid(grid)?;
    let steps = plan(grid, cfg.steps_per_unit_time);
    let blocks = cfg.paths.div_ceil(BLOCK);
    let partial: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Moments::new(k);
            let mut buf = vec![0.0; k];
            let end = ((b + 1) * BLOCK).min(cfg.paths);
            for i in b * BLOCK..end {
                let p = run_path(params, s0, &steps, &mut path_rng(cfg.seed, i as u64), |_, _, _| {});
                stat(i as u64, &p, &mut buf);
                acc.push(&buf);
            }
            acc
        })
        .collect();
    let mut total = Moments::new(k);
    for p in &partial {
        total.merge(p);
    }
    Ok(total.finish())
}

/// Discounted payoff estimate over the payoff's monitoring dates.
pub fn mc_price(
    payoff: &PayoffSpec,
    params: &ModelParams,
    s0: &InitialState,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    payoff.validate()?;
    let grid = payoff.dates();
    let est = monte_carlo(params, s0, &grid, cfg, 1, |p, out| {
        out[0] = payoff.discounted_payoff(&p.x);
    })?;
    Ok(est[0])
}

/// Estimates of `E[H_n(X_T)]` for `n = 0..=order`.
pub fn mc_hermite_moments(
    params: &ModelParams,
    s0: &InitialState,
    w: &GaussianWeight,
    maturity: f64,
    order: usize,
    cfg: &SimConfig,
) -> Result<Vec<McEstimate>> {
    monte_carlo(params, s0, &[maturity], cfg, order + 1, |p, out| {
        out.copy_from_slice(&w.hermite_all(order, p.x[0]));
    })
}

/// Estimates of `E[prod_i H^{(i)}_{n_i}(Y_{t_i})]` for the given multi-indices,
/// with `Y_{t_i}` the log return over the `i`-th monitoring interval.
pub fn mc_hermite_moments_multi(
    params: &ModelParams,
    s0: &InitialState,
    grid: &[f64],
    weights: &[GaussianWeight],
    indices: &[Vec<usize>],
    cfg: &SimConfig,
) -> Result<Vec<McEstimate>> {
    if weights.len() != grid.len() {
        return Err(invalid("weights", "need one weight per monitoring date"));
    }
    if indices.iter().any(|i| i.len() != grid.len()) {
        return Err(invalid("indices", "multi-index length must equal the grid length"));
    }
    let order = indices.iter().flatten().copied().max().unwrap_or(0);
    monte_carlo(params, s0, grid, cfg, indices.len(), |p, out| {
        let mut prev = s0.x0;
        let herm: Vec<Vec<f64>> = p
            .x
            .iter()
            .zip(weights)
            .map(|(x, w)| {
                let y = x - prev;
                prev = *x;
                w.hermite_all(order, y)
            })
            .collect();
        for (slot, idx) in out.iter_mut().zip(indices) {
            *slot = idx.iter().enumerate().map(|(i, n)| herm[i][*n]).product();
        }
    })
}

/// Writes `t,V,X` for one path, every time step.
pub fn write_path_csv<W: Write>(
    params: &ModelParams,
    s0: &InitialState,
    grid: &[f64],
    cfg: &SimConfig,
    index: u64,
    out: W,
) -> Result<()> {
    cfg.validate()?;
    s0.validate(params)?;
    check_grid(grid)?;
    let steps = plan(grid, cfg.steps_per_unit_time);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "V", "X"])?;
    let mut err = None;
    run_path(params, s0, &steps, &mut path_rng(cfg.seed, index), |t, v, x| {
        if err.is_none() {
            if let Err(e) = w.write_record([format!("{t:.17e}"), format!("{v:.17e}"), format!("{x:.17e}")]) {
                err = Some(e);
            }
        }
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ModelParams, InitialState) {
        let p = ModelParams::reference();
        (p, InitialState::new(&p, 0.04, 0.0).unwrap())
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(10, 1).with_steps(49).validate().is_err());
        assert!(SimConfig::new(0, 1).validate().is_err());
        let c: SimConfig = serde_json::from_str(r#"{"paths": 5, "seed": 3}"#).unwrap();
        assert_eq!(c.steps_per_unit_time, 250);
    }

    #[test]
    fn variance_stays_in_bounds() {
        let (p, s0) = setup();
        let cfg = SimConfig::new(1, 7);
        let steps = plan(&[1.0], 250);
        for i in 0..200 {
            run_path(&p, &s0, &steps, &mut path_rng(cfg.seed, i), |_, v, _| {
                assert!(v >= p.v_min() && v <= p.v_max());
            });
        }
    }

    #[test]
    fn paths_are_reproducible() {
        let (p, s0) = setup();
        let cfg = SimConfig::new(50, 11);
        let a = simulate_paths(&p, &s0, &[0.1, 0.2], &cfg).unwrap();
        let b = simulate_paths(&p, &s0, &[0.1, 0.2], &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[17], simulate_path(&p, &s0, &[0.1, 0.2], &cfg, 17).unwrap());
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn quadratic_variation_increases() {
        let (p, s0) = setup();
        let cfg = SimConfig::new(1, 2);
        let mut prev = -1.0;
        for t in [0.01, 0.05, 0.2] {
            let f = simulate_path(&p, &s0, &[t], &cfg, 0).unwrap();
            assert!(f.c > prev);
            prev = f.c;
        }
    }

    #[test]
    fn martingale_property() {
        let (p, s0) = setup();
        let cfg = SimConfig::new(40_000, 5);
        let est = monte_carlo(&p, &s0, &[0.5], &cfg, 1, |path, out| out[0] = path.x[0].exp()).unwrap();
        assert!((est[0].mean - 1.0).abs() < 3.0 * est[0].std_error, "{est:?}");
    }

    #[test]
    fn degenerate_black_scholes_mean() {
        // V_0 = theta = v_max freezes the variance
        let p = ModelParams::new(0.5, 0.04, 1.0, -0.5, 1e-4, 0.04, 0.01, 0.0).unwrap();
        let s0 = InitialState::new(&p, 0.04, 0.0).unwrap();
        let cfg = SimConfig::new(40_000, 9);
        let est = monte_carlo(&p, &s0, &[1.0], &cfg, 2, |path, out| {
            out[0] = path.x[0];
            out[1] = path.c;
        })
        .unwrap();
        assert!((est[0].mean - (0.01 - 0.02)).abs() < 3.0 * est[0].std_error);
        assert!((est[1].mean - 0.04).abs() < 1e-12);
    }

    #[test]
    fn zero_payoff_has_zero_error() {
        let (p, s0) = setup();
        let cfg = SimConfig::new(1000, 1);
        let est = monte_carlo(&p, &s0, &[0.1], &cfg, 1, |_, out| out[0] = 0.0).unwrap();
        assert_eq!(est[0].mean, 0.0);
        assert_eq!(est[0].std_error, 0.0);
    }

    #[test]
    fn path_dump() {
        let (p, s0) = setup();
        let mut buf = Vec::new();
        write_path_csv(&p, &s0, &[0.2], &SimConfig::new(1, 1), 0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,V,X\n"));
        assert_eq!(text.lines().count(), 2 + 50);
    }
}
