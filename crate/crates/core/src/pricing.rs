//! Truncated Gram-Charlier prices, density approximations, cubature for
//! Asian payoffs and truncation-error bounds.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::hermite::{normal_pdf, normalized_hermite_all, GaussianWeight};
use crate::model::{InitialState, ModelParams};
use crate::implied_vol::{implied_vol, IvPayoff};
use crate::moments::{
    hermite_moments, hermite_moments_multi, match_weights_multi, HermiteMomentTensor,
    HermiteMomentVector, MatchMode,
};
use crate::payoffs::{
    call_coeffs, digital_coeffs, forward_start_coeffs, forward_start_return_coeffs, put_coeffs,
    FourierCoefficients, PayoffKind, PayoffSpec, MAX_QUAD_DIM,
};
use crate::quadrature::{gauss_hermite, tensor_rule};
use crate::simulate::{monte_carlo_indexed, simulate_path, SimConfig};

/// Default truncation order for European payoffs.
pub const DEFAULT_ORDER: usize = 30;
/// Default truncation order for multi-date payoffs.
pub const DEFAULT_ORDER_MULTI: usize = 20;
/// Pruned cubature mass above which a warning is attached.
const PRUNED_MASS_WARNING: f64 = 1e-4;
/// Seed offset of the independent `(M, C)` paths in the norm estimator.
const PARTNER_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;
/// Retained points per parallel task in the cubature sum.
const CUBATURE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct PriceDiagnostics {
    pub weights: Vec<GaussianWeight>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments_norm_sq: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceResult {
    pub price: f64,
    pub order: usize,
    pub partial_sums: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iv: Option<f64>,
    pub diagnostics: PriceDiagnostics,
}

/// Hermite moments in either layout.
#[derive(Debug, Clone, Copy)]
pub enum MomentSource<'a> {
    Vector(&'a HermiteMomentVector),
    Tensor(&'a HermiteMomentTensor),
}

impl<'a> From<&'a HermiteMomentVector> for MomentSource<'a> {
    fn from(l: &'a HermiteMomentVector) -> Self {
        MomentSource::Vector(l)
    }
}

impl<'a> From<&'a HermiteMomentTensor> for MomentSource<'a> {
    fn from(l: &'a HermiteMomentTensor) -> Self {
        MomentSource::Tensor(l)
    }
}

fn check_weights(a: &[GaussianWeight], b: &[GaussianWeight]) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| !x.approx_eq(y)) {
        return Err(Error::WeightMismatch);
    }
    Ok(())
}

fn cumulative(by_order: &[f64]) -> Vec<f64> {
    by_order
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// `pi^{(N)} = sum_{|n| <= N} f_n l_n`, with all partial sums.
pub fn price_series<'a>(
    f: &FourierCoefficients,
    l: impl Into<MomentSource<'a>>,
    order: usize,
) -> Result<PriceResult> {
    let l = l.into();
    let by_order = match l {
        MomentSource::Vector(lv) => {
            check_weights(f.weights(), std::slice::from_ref(lv.weight()))?;
            if order > f.order() || order > lv.order() {
                return Err(Error::IndexMismatch(format!(
                    "order {order} exceeds truncation (coefficients {}, moments {})",
                    f.order(),
                    lv.order()
                )));
            }
            let fv = f.as_slice().expect("univariate");
            (0..=order).map(|n| fv[n] * lv.values()[n]).collect::<Vec<_>>()
        }
        MomentSource::Tensor(lt) => {
            check_weights(f.weights(), lt.weights())?;
            if order > f.order() || order > lt.order() {
                return Err(Error::IndexMismatch(format!(
                    "order {order} exceeds truncation (coefficients {}, moments {})",
                    f.order(),
                    lt.order()
                )));
            }
            let mut by_order = vec![0.0; order + 1];
            for (idx, fv) in f.entries() {
                let tot: usize = idx.iter().sum();
                if tot > order {
                    continue;
                }
                let lv = lt
                    .get(&idx)
                    .ok_or_else(|| Error::IndexMismatch(format!("no moment for index {idx:?}")))?;
                by_order[tot] += fv * lv;
            }
            by_order
        }
    };
    let partial_sums = cumulative(&by_order);
    Ok(PriceResult {
        price: partial_sums[order],
        order,
        partial_sums,
        error_bound: None,
        iv: None,
        diagnostics: PriceDiagnostics {
            weights: f.weights().to_vec(),
            ..Default::default()
        },
    })
}

/// `g^{(N)}(x) = w(x) sum_{n <= N} l_n H_n(x)`.
///
/// Values can be negative at finite `N`; they are never clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityApprox {
    weight: GaussianWeight,
    moments: Vec<f64>,
}

impl DensityApprox {
    pub fn new(l: &HermiteMomentVector, order: usize) -> Result<Self> {
        if order > l.order() {
            return Err(invalid("N", format!("exceeds moment order {}", l.order())));
        }
        Ok(DensityApprox {
            weight: *l.weight(),
            moments: l.values()[..=order].to_vec(),
        })
    }

    pub fn weight(&self) -> &GaussianWeight {
        &self.weight
    }

    pub fn order(&self) -> usize {
        self.moments.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        density_eval(self, x)
    }
}

pub fn density_eval(d: &DensityApprox, x: f64) -> f64 {
    let h = d.weight.hermite_all(d.order(), x);
    let s: f64 = h.iter().zip(&d.moments).map(|(a, b)| a * b).sum();
    d.weight.pdf(x) * s
}

/// Settings of the pruned tensor Gauss-Hermite rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubatureSettings {
    pub points_per_dim: usize,
    /// Points are kept when their weight ranks above this quantile.
    pub weight_keep_quantile: f64,
    /// Moments are dropped when `|l|` ranks below this quantile.
    pub moment_keep_quantile: f64,
}

impl Default for CubatureSettings {
    fn default() -> Self {
        CubatureSettings {
            points_per_dim: 20,
            weight_keep_quantile: 0.9,
            moment_keep_quantile: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubatureResult {
    pub result: PriceResult,
    pub retained_points: usize,
    pub total_points: usize,
    pub removed_mass: f64,
    pub retained_moments: usize,
    /// Smallest retained `|l|`.
    pub moment_threshold: f64,
}

/// 1-based nearest rank of the `q` quantile among `len` sorted values.
fn nearest_rank(q: f64, len: usize) -> usize {
    // guard against 0.9 * 160000 = 144000.00000000003
    let r = (q * len as f64 - 1e-9).ceil();
    (r.max(1.0) as usize).min(len)
}

/// Indices of the points kept by rank: ascending by weight with ties broken
/// by index, everything strictly after the nearest rank of `q` survives.
pub fn prune_points(weights: &[f64], q: f64) -> Vec<usize> {
    if q <= 0.0 {
        return (0..weights.len()).collect();
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(a.cmp(&b)));
    let cut = nearest_rank(q, weights.len());
    let mut keep = order[cut..].to_vec();
    keep.sort_unstable();
    keep
}

/// Cubature price of an Asian (or any grid-monitored) payoff against the
/// Gram-Charlier density of the log returns.
pub fn price_cubature(
    payoff: &PayoffSpec,
    x0: f64,
    l: &HermiteMomentTensor,
    settings: &CubatureSettings,
    order: usize,
) -> Result<CubatureResult> {
    payoff.validate()?;
    if payoff.kind == PayoffKind::Custom {
        return Err(invalid("kind", "custom payoffs need numeric_coeffs"));
    }
    let d = l.dim();
    if d > MAX_QUAD_DIM {
        return Err(Error::DimensionTooLarge(d));
    }
    let dates = payoff.dates();
    if dates.len() != d || dates.iter().zip(l.grid()).any(|(a, b)| (a - b).abs() > 1e-14) {
        return Err(invalid("grid", "payoff dates differ from the moment grid"));
    }
    if order > l.order() {
        return Err(Error::IndexMismatch(format!(
            "order {order} exceeds moment order {}",
            l.order()
        )));
    }
    for (name, q) in [
        ("weight_keep_quantile", settings.weight_keep_quantile),
        ("moment_keep_quantile", settings.moment_keep_quantile),
    ] {
        if !(0.0..1.0).contains(&q) {
            return Err(invalid(name, format!("must lie in [0, 1), got {q}")));
        }
    }
    if settings.points_per_dim == 0 {
        return Err(invalid("points_per_dim", "must be >= 1"));
    }

    let (z, wq) = gauss_hermite(settings.points_per_dim);
    let (pts, pw) = tensor_rule(&z, &wq, d);
    let keep = prune_points(&pw, settings.weight_keep_quantile);
    let kept_mass: f64 = keep.iter().map(|&i| pw[i]).sum();
    let total_mass: f64 = pw.iter().sum();
    let removed_mass = (total_mass - kept_mass).max(0.0) / total_mass;

    // moments of total order <= N, pruned by rank of |l|
    let mut moments: Vec<(Vec<usize>, f64)> = l
        .iter()
        .filter(|(idx, _)| idx.iter().sum::<usize>() <= order)
        .map(|(idx, v)| (idx.to_vec(), v))
        .collect();
    let mut by_abs: Vec<usize> = (0..moments.len()).collect();
    by_abs.sort_by(|&a, &b| moments[a].1.abs().total_cmp(&moments[b].1.abs()).then(a.cmp(&b)));
    let drop = if settings.moment_keep_quantile > 0.0 {
        nearest_rank(settings.moment_keep_quantile, moments.len()) - 1
    } else {
        0
    };
    let mut dropped = vec![false; moments.len()];
    for &i in &by_abs[..drop] {
        dropped[i] = moments[i].0.iter().any(|n| *n > 0);
    }
    let moment_threshold = by_abs[drop..]
        .iter()
        .map(|&i| moments[i].1.abs())
        .fold(f64::INFINITY, f64::min);
    let mut i = 0;
    moments.retain(|_| {
        i += 1;
        !dropped[i - 1]
    });

    let weights = l.weights();
    let chunks: Vec<&[usize]> = keep.chunks(CUBATURE_CHUNK).collect();
    let partial: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut by_order = vec![0.0; order + 1];
            let mut y = vec![0.0; d];
            for &p in chunk.iter() {
                let zp = &pts[p * d..(p + 1) * d];
                for i in 0..d {
                    y[i] = weights[i].mu + weights[i].sigma * zp[i];
                }
                let fv = payoff.discounted_payoff_returns(x0, &y);
                if fv == 0.0 {
                    continue;
                }
                let scale = pw[p] / kept_mass * fv;
                let herm: Vec<Vec<f64>> = zp.iter().map(|zi| normalized_hermite_all(order, *zi)).collect();
                for (idx, lv) in &moments {
                    let mut prod = *lv;
                    let mut tot = 0;
                    for (i, n) in idx.iter().enumerate() {
                        prod *= herm[i][*n];
                        tot += n;
                    }
                    by_order[tot] += scale * prod;
                }
            }
            by_order
        })
        .collect();
    let mut by_order = vec![0.0; order + 1];
    for part in &partial {
        for (a, b) in by_order.iter_mut().zip(part) {
            *a += b;
        }
    }
    let partial_sums = cumulative(&by_order);
    let mut warnings = Vec::new();
    if removed_mass > PRUNED_MASS_WARNING {
        warnings.push(format!("pruned cubature mass {removed_mass:.3e} exceeds {PRUNED_MASS_WARNING:e}"));
    }
    Ok(CubatureResult {
        result: PriceResult {
            price: partial_sums[order],
            order,
            partial_sums,
            error_bound: None,
            iv: None,
            diagnostics: PriceDiagnostics {
                weights: weights.to_vec(),
                moments_norm_sq: None,
                warnings,
            },
        },
        retained_points: keep.len(),
        total_points: pw.len(),
        removed_mass,
        retained_moments: moments.len(),
        moment_threshold,
    })
}

/// Cauchy-Schwarz bound on `|pi - pi^{(N)}|`.
///
/// Tails `||f||^2 - sum f_n^2` and `||l||^2 - sum l_n^2` that come out
/// slightly negative from rounding or Monte Carlo noise are clamped at zero.
pub fn error_bound(
    f: &FourierCoefficients,
    l: &HermiteMomentVector,
    norm_l_sq: f64,
    order: usize,
) -> Result<f64> {
    let norm_f = f
        .norm_sq()
        .ok_or_else(|| invalid("f", "coefficients carry no payoff norm"))?;
    check_weights(f.weights(), std::slice::from_ref(l.weight()))?;
    if order > f.order() || order > l.order() {
        return Err(Error::IndexMismatch(format!(
            "order {order} exceeds truncation (coefficients {}, moments {})",
            f.order(),
            l.order()
        )));
    }
    let fsum = f.bessel_partial_sums()[order];
    let lsum = l.bessel_partial_sums()[order];
    Ok((norm_f - fsum).max(0.0).sqrt() * (norm_l_sq - lsum).max(0.0).sqrt())
}

/// Monte Carlo estimate of `||l||_w^2 = E[phi(X_T; M~, C~) / phi(X_T; mu_w, sigma_w^2)]`
/// with `(M~, C~)` taken from an independent path on a second seed.
pub fn likelihood_norm_mc(
    params: &ModelParams,
    s0: &InitialState,
    maturity: f64,
    w: &GaussianWeight,
    paths: usize,
    seed: u64,
    steps_per_unit_time: usize,
) -> Result<(f64, f64)> {
    if paths < 1000 {
        return Err(invalid("paths", format!("must be >= 1000, got {paths}")));
    }
    w.check_segment(params.v_max(), maturity)?;
    let cfg = SimConfig::new(paths, seed).with_steps(steps_per_unit_time);
    let partner = SimConfig {
        seed: seed.wrapping_add(PARTNER_SEED_OFFSET),
        ..cfg
    };
    let grid = [maturity];
    let est = monte_carlo_indexed(params, s0, &grid, &cfg, 1, |i, p, out| {
        let other = simulate_path(params, s0, &grid, &partner, i).expect("validated");
        let x = p.x[0];
        out[0] = normal_pdf(x, other.m, other.c) / normal_pdf(x, w.mu, w.variance());
    })?;
    Ok((est[0].mean, est[0].std_error))
}

/// Memoised [`likelihood_norm_mc`] keyed by `(params, s0, T, w, paths, seed, steps)`.
#[derive(Debug, Default)]
pub struct LikelihoodNormCache {
    store: Mutex<HashMap<Vec<u64>, (f64, f64)>>,
}

impl LikelihoodNormCache {
    pub fn new() -> Self {
        Self::default()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn get(
        &self,
        params: &ModelParams,
        s0: &InitialState,
        maturity: f64,
        w: &GaussianWeight,
        paths: usize,
        seed: u64,
        steps_per_unit_time: usize,
    ) -> Result<(f64, f64)> {
        let key: Vec<u64> = [
            params.kappa(),
            params.theta(),
            params.sigma(),
            params.rho(),
            params.v_min(),
            params.v_max(),
            params.r(),
            params.delta(),
            s0.v0,
            s0.x0,
            maturity,
            w.mu,
            w.sigma,
        ]
        .iter()
        .map(|v| v.to_bits())
        .chain([paths as u64, seed, steps_per_unit_time as u64])
        .collect();
        if let Some(v) = self.store.lock().expect("poisoned").get(&key) {
            return Ok(*v);
        }
        let v = likelihood_norm_mc(params, s0, maturity, w, paths, seed, steps_per_unit_time)?;
        self.store.lock().expect("poisoned").insert(key, v);
        Ok(v)
    }
}

/// How the Gaussian weights are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightChoice {
    /// Mean and variance matched per leg; mean only where the variance match
    /// is not admissible.
    #[default]
    Matched,
    /// One weight per monitoring date.
    Explicit { weights: Vec<GaussianWeight> },
}

/// Weights per monitoring date under `choice`; fallbacks are reported in `warnings`.
pub fn resolve_weights(
    params: &ModelParams,
    s0: &InitialState,
    grid: &[f64],
    choice: &WeightChoice,
    warnings: &mut Vec<String>,
) -> Result<Vec<GaussianWeight>> {
    match choice {
        WeightChoice::Explicit { weights } => {
            if weights.len() != grid.len() {
                return Err(invalid(
                    "weights",
                    format!("need {} weights, got {}", grid.len(), weights.len()),
                ));
            }
            Ok(weights.clone())
        }
        WeightChoice::Matched => {
            match match_weights_multi(params, s0, grid, MatchMode::MeanVariance) {
                Ok(w) => Ok(w),
                Err(Error::InfeasibleVarianceMatch { variance, bound }) => {
                    warnings.push(format!(
                        "variance match infeasible ({variance:.3e} <= {bound:.3e}); weight matches the mean only"
                    ));
                    match_weights_multi(params, s0, grid, MatchMode::Mean)
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Series (or cubature) price of a contract, routed by payoff kind.
///
/// European payoffs use the univariate moments at the maturity. The
/// forward-start call on the return pairs call coefficients with the moments
/// of the last return, and the forward-start call uses the two-date tensor.
/// Asian payoffs go through [`price_cubature`]. Calls, puts and forward-start
/// returns carry their Black-Scholes implied volatility when it exists.
pub fn price_contract(
    params: &ModelParams,
    s0: &InitialState,
    payoff: &PayoffSpec,
    choice: &WeightChoice,
    order: usize,
    cubature: &CubatureSettings,
) -> Result<PriceResult> {
    payoff.validate()?;
    s0.validate(params)?;
    let grid = payoff.dates();
    let t = payoff.maturity;
    let (r, delta) = (payoff.rate, params.delta());
    let mut warnings = Vec::new();
    let weights = resolve_weights(params, s0, &grid, choice, &mut warnings)?;
    let k = payoff.log_strike;
    let mut result = match payoff.kind {
        PayoffKind::Call | PayoffKind::Put | PayoffKind::Digital => {
            let w = &weights[0];
            let l = hermite_moments(params, s0, w, t, order)?;
            let f = match payoff.kind {
                PayoffKind::Call => call_coeffs(w, k, r, t, order)?,
                PayoffKind::Put => put_coeffs(w, k, r, delta, t, s0.spot(), order)?,
                _ => digital_coeffs(w, k, r, t, order)?,
            };
            price_series(&f, &l, order)?
        }
        PayoffKind::ForwardStart | PayoffKind::ForwardStartReturn => {
            let l = hermite_moments_multi(params, s0, &grid, &weights, order)?;
            if payoff.kind == PayoffKind::ForwardStart {
                let f = forward_start_coeffs(&weights[0], &weights[1], k.exp(), r, t, s0.x0, order)?;
                price_series(&f, &l, order)?
            } else {
                let fwd = HermiteMomentVector::from_parts(grid[1] - grid[0], weights[1], l.last_leg());
                let f = forward_start_return_coeffs(&weights[1], k.exp(), r, t, order)?;
                price_series(&f, &fwd, order)?
            }
        }
        PayoffKind::AsianFixed | PayoffKind::AsianFloating => {
            let l = hermite_moments_multi(params, s0, &grid, &weights, order)?;
            let c = price_cubature(payoff, s0.x0, &l, cubature, order)?;
            warnings.extend(c.result.diagnostics.warnings.iter().cloned());
            c.result
        }
        PayoffKind::Custom => {
            return Err(invalid("kind", "custom payoffs need numeric_coeffs"));
        }
    };
    let iv_payoff = match payoff.kind {
        PayoffKind::Call => Some(IvPayoff::Call),
        PayoffKind::Put => Some(IvPayoff::Put),
        PayoffKind::ForwardStartReturn => Some(IvPayoff::ForwardStartReturn { tau: grid[1] - grid[0] }),
        _ => None,
    };
    if let Some(kind) = iv_payoff {
        match implied_vol(result.price, s0.spot(), k, r, delta, t, kind) {
            Ok(iv) => result.iv = Some(iv.iv),
            Err(e) => warnings.push(format!("no implied volatility: {e}")),
        }
    }
    result.diagnostics.weights = weights;
    result.diagnostics.warnings.clear();
    result.diagnostics.warnings.extend(warnings);
    Ok(result)
}

/// One-sided 99% normal quantile, for upper confidence limits of the norm.
pub const Z_99: f64 = 2.326_347_874_040_841;

/// Truncation bound of a European series price under weight `w`.
///
/// Puts in parity form share the truncation error of the call, so they are
/// bounded through the call coefficients.
pub fn series_error_bound(
    params: &ModelParams,
    s0: &InitialState,
    payoff: &PayoffSpec,
    w: &GaussianWeight,
    order: usize,
    norm_l_sq: f64,
) -> Result<f64> {
    let (k, r, t) = (payoff.log_strike, payoff.rate, payoff.maturity);
    let f = match payoff.kind {
        PayoffKind::Call | PayoffKind::Put => call_coeffs(w, k, r, t, order)?,
        PayoffKind::Digital => digital_coeffs(w, k, r, t, order)?,
        other => return Err(invalid("kind", format!("no error bound for {other:?}"))),
    };
    let l = hermite_moments(params, s0, w, t, order)?;
    error_bound(&f, &l, norm_l_sq, order)
}
