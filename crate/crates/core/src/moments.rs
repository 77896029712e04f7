//! Hermite moments of log prices and log returns.
//!
//! `l_n = E[H_n(X_T)]` is read off the row vector `h(V_0, X_0) e^{TG}`, which
//! is computed as one transposed exponential action. Multi-date moments
//! `l_{n_1..n_d} = E[prod H^{(i)}_{n_i}(Y_{t_i})]` chain one exponential per
//! monitoring interval with the coupling matrices `A^{(k, l)}`.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::generator::{expm_action_sparse, expm_dense, BasisIndex, GeneratorMatrix};
use crate::hermite::GaussianWeight;
use crate::model::{InitialState, ModelParams};

/// Relative inflation of the provisional weight variance above `v_max T`.
const PROVISIONAL_INFLATION: f64 = 1e-6;
/// Largest basis dimension for which leg exponentials are formed densely.
const DENSE_LIMIT: usize = 2000;

/// `l_0, ..., l_N` for a maturity and weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermiteMomentVector {
    maturity: f64,
    weight: GaussianWeight,
    values: Vec<f64>,
}

impl HermiteMomentVector {
    pub fn from_parts(maturity: f64, weight: GaussianWeight, values: Vec<f64>) -> Self {
        HermiteMomentVector {
            maturity,
            weight,
            values,
        }
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }
    pub fn weight(&self) -> &GaussianWeight {
        &self.weight
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn order(&self) -> usize {
        self.values.len() - 1
    }

    /// `sum_{n <= N} l_n^2` for `N = 0..=order`.
    pub fn bessel_partial_sums(&self) -> Vec<f64> {
        self.values
            .iter()
            .scan(0.0, |acc, l| {
                *acc += l * l;
                Some(*acc)
            })
            .collect()
    }

    /// CSV with header `n,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "value"])?;
        for (n, v) in self.values.iter().enumerate() {
            w.write_record([n.to_string(), format!("{v:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sparse multi-index Hermite moments of log returns on a monitoring grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteMomentTensor {
    grid: Vec<f64>,
    weights: Vec<GaussianWeight>,
    order: usize,
    values: BTreeMap<Vec<usize>, f64>,
}

impl HermiteMomentTensor {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
    pub fn weights(&self) -> &[GaussianWeight] {
        &self.weights
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn dim(&self) -> usize {
        self.grid.len()
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn get(&self, index: &[usize]) -> Option<f64> {
        self.values.get(index).copied()
    }
    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.values.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    /// Forward moments `l*_n = l_{0,..,0,n}` of the last return.
    pub fn last_leg(&self) -> Vec<f64> {
        let d = self.dim();
        (0..=self.order)
            .map(|n| {
                let mut idx = vec![0; d];
                idx[d - 1] = n;
                self.values[&idx]
            })
            .collect()
    }

    /// CSV with header `n1,..,nd,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("n{i}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for (k, v) in &self.values {
            let mut rec: Vec<String> = k.iter().map(usize::to_string).collect();
            rec.push(format!("{v:.17e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Weight-matching mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// `mu_w = E[X_T]`; `sigma_w` stays at the provisional scale.
    Mean,
    /// `mu_w = E[X_T]` and `sigma_w^2 = var[X_T]`.
    MeanVariance,
}

/// Row vector `h(V_0, X_0) e^{TG}` in the basis `(v/v_max)^m H_n(x)`.
fn terminal_row(
    params: &ModelParams,
    v0: f64,
    x0: f64,
    w: &GaussianWeight,
    t: f64,
    basis: &BasisIndex,
) -> Result<Vec<f64>> {
    let c = params.v_max();
    let g = GeneratorMatrix::build(params, w, basis);
    let a = g.rescaled(c);
    let h = basis.evaluate(w, v0 / c, x0);
    expm_action_sparse(&a, t, &h, true)
}

/// `l_n = E[H_n(X_T)]` for `n = 0..=order`.
pub fn hermite_moments(
    params: &ModelParams,
    s0: &InitialState,
    w: &GaussianWeight,
    maturity: f64,
    order: usize,
) -> Result<HermiteMomentVector> {
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(invalid("T", format!("must be > 0, got {maturity}")));
    }
    s0.validate(params)?;
    w.check_segment(params.v_max(), maturity)?;
    let basis = BasisIndex::new(order)?;
    let row = terminal_row(params, s0.v0, s0.x0, w, maturity, &basis)?;
    let values = (0..=order)
        .map(|n| row[basis.index(0, n).expect("in range")])
        .collect();
    Ok(HermiteMomentVector {
        maturity,
        weight: *w,
        values,
    })
}

fn provisional_weight(params: &ModelParams, x0: f64, dt: f64) -> GaussianWeight {
    let mu = x0 + (params.r() - params.delta()) * dt;
    let var = params.v_max() * dt * (1.0 + PROVISIONAL_INFLATION);
    GaussianWeight { mu, sigma: var.sqrt() }
}

fn mean_var_from_moments(w: &GaussianWeight, l1: f64, l2: f64) -> (f64, f64) {
    let mean = w.mu + w.sigma * l1;
    let var = w.variance() * (std::f64::consts::SQRT_2 * l2 + 1.0 - l1 * l1);
    (mean, var)
}

/// `E[X_T]` and `var[X_T]` from the first two Hermite moments under a
/// provisional weight.
pub fn log_price_mean_var(params: &ModelParams, s0: &InitialState, maturity: f64) -> Result<(f64, f64)> {
    let w = provisional_weight(params, s0.x0, maturity);
    let l = hermite_moments(params, s0, &w, maturity, 2)?;
    Ok(mean_var_from_moments(&w, l.values[1], l.values[2]))
}

fn matched(
    params: &ModelParams,
    provisional: &GaussianWeight,
    mean: f64,
    var: f64,
    dt: f64,
    mode: MatchMode,
) -> Result<GaussianWeight> {
    match mode {
        MatchMode::Mean => GaussianWeight::new(mean, provisional.sigma),
        MatchMode::MeanVariance => {
            let bound = 0.5 * params.v_max() * dt;
            if var > bound {
                GaussianWeight::new(mean, var.sqrt())
            } else {
                Err(Error::InfeasibleVarianceMatch {
                    variance: var,
                    bound,
                })
            }
        }
    }
}

/// Gaussian weight whose mean (and optionally variance) matches `X_T`.
pub fn match_weight(
    params: &ModelParams,
    s0: &InitialState,
    maturity: f64,
    mode: MatchMode,
) -> Result<GaussianWeight> {
    let prov = provisional_weight(params, s0.x0, maturity);
    let (mean, var) = log_price_mean_var(params, s0, maturity)?;
    matched(params, &prov, mean, var, maturity, mode)
}

fn check_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(invalid("grid", "needs at least one date"));
    }
    let mut prev = 0.0;
    let mut dts = Vec::with_capacity(grid.len());
    for &t in grid {
        if !(t > prev && t.is_finite()) {
            return Err(invalid("grid", "dates must be positive and strictly increasing"));
        }
        dts.push(t - prev);
        prev = t;
    }
    Ok(dts)
}

/// Right multiplication of a row vector by `e^{G dt}` for one leg.
enum LegPropagator {
    Dense(DMatrix<f64>),
    Action(crate::generator::SparseMatrix, f64),
}

impl LegPropagator {
    fn new(params: &ModelParams, w: &GaussianWeight, basis: &BasisIndex, dt: f64) -> Result<Self> {
        let g = GeneratorMatrix::build(params, w, basis);
        let a = g.rescaled(params.v_max());
        if basis.dim() <= DENSE_LIMIT {
            // store the transpose so that row * E is a column product
            Ok(LegPropagator::Dense(expm_dense(&a, dt)?.transpose()))
        } else {
            Ok(LegPropagator::Action(a, dt))
        }
    }

    fn apply(&self, row: Vec<f64>) -> Result<Vec<f64>> {
        match self {
            LegPropagator::Dense(et) => {
                let r = et * DVector::from_vec(row);
                Ok(r.as_slice().to_vec())
            }
            LegPropagator::Action(a, dt) => expm_action_sparse(a, *dt, &row, true),
        }
    }
}

/// Multi-date Hermite moments of the log returns `Y_{t_i} = X_{t_i} - X_{t_{i-1}}`
/// for all multi-indices of total order at most `order`.
pub fn hermite_moments_multi(
    params: &ModelParams,
    s0: &InitialState,
    grid: &[f64],
    weights: &[GaussianWeight],
    order: usize,
) -> Result<HermiteMomentTensor> {
    s0.validate(params)?;
    let dts = check_grid(grid)?;
    if weights.len() != grid.len() {
        return Err(invalid("weights", "need one weight per monitoring date"));
    }
    for (w, dt) in weights.iter().zip(&dts) {
        w.check_segment(params.v_max(), *dt)?;
    }
    let basis = BasisIndex::new(order)?;
    let legs = weights
        .iter()
        .zip(&dts)
        .map(|(w, dt)| LegPropagator::new(params, w, &basis, *dt))
        .collect::<Result<Vec<_>>>()?;
    // H^{(l)}_n(0) for each leg l
    let herm_at_zero: Vec<Vec<f64>> = weights.iter().map(|w| w.hermite_all(order, 0.0)).collect();

    let start = basis.evaluate(&weights[0], s0.v0 / params.v_max(), 0.0);
    let first = legs[0].apply(start)?;
    let mut values = BTreeMap::new();
    let mut prefix = Vec::with_capacity(grid.len());
    descend(
        &basis,
        &legs,
        &herm_at_zero,
        0,
        &first,
        order,
        &mut prefix,
        &mut values,
    )?;
    Ok(HermiteMomentTensor {
        grid: grid.to_vec(),
        weights: weights.to_vec(),
        order,
        values,
    })
}

/// `row * A^{(k, next)}`: entry `(m, n)` is `row[(m, k)] * H^{(next)}_n(0)`.
fn couple(basis: &BasisIndex, row: &[f64], k: usize, herm_next: &[f64]) -> Vec<f64> {
    basis
        .pairs()
        .iter()
        .map(|&(m, n)| match basis.index(m, k) {
            Some(i) => row[i] * herm_next[n],
            None => 0.0,
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn descend(
    basis: &BasisIndex,
    legs: &[LegPropagator],
    herm_at_zero: &[Vec<f64>],
    leg: usize,
    row: &[f64],
    budget: usize,
    prefix: &mut Vec<usize>,
    out: &mut BTreeMap<Vec<usize>, f64>,
) -> Result<()> {
    if leg + 1 == legs.len() {
        for n in 0..=budget {
            prefix.push(n);
            out.insert(prefix.clone(), row[basis.index(0, n).expect("in range")]);
            prefix.pop();
        }
        return Ok(());
    }
    for k in 0..=budget {
        let coupled = couple(basis, row, k, &herm_at_zero[leg + 1]);
        let next = legs[leg + 1].apply(coupled)?;
        prefix.push(k);
        descend(basis, legs, herm_at_zero, leg + 1, &next, budget - k, prefix, out)?;
        prefix.pop();
    }
    Ok(())
}

/// Per-leg weights matched to the mean (and optionally variance) of each return.
pub fn match_weights_multi(
    params: &ModelParams,
    s0: &InitialState,
    grid: &[f64],
    mode: MatchMode,
) -> Result<Vec<GaussianWeight>> {
    let dts = check_grid(grid)?;
    let prov: Vec<GaussianWeight> = dts
        .iter()
        .map(|dt| provisional_weight(params, 0.0, *dt))
        .collect();
    let tensor = hermite_moments_multi(params, s0, grid, &prov, 2)?;
    let d = grid.len();
    (0..d)
        .map(|i| {
            let mut e1 = vec![0; d];
            e1[i] = 1;
            let mut e2 = vec![0; d];
            e2[i] = 2;
            let (mean, var) = mean_var_from_moments(
                &prov[i],
                tensor.values[&e1],
                tensor.values[&e2],
            );
            matched(params, &prov[i], mean, var, dts[i], mode)
        })
        .collect()
}

/// Least-squares fit of `log l_n^2 ~ log C + n log q` over the tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub c: f64,
    pub q: f64,
    pub ok: bool,
}

/// Exponential-decay diagnostic on `n in [N/2, N]`. Advisory only.
pub fn decay_diagnostic(l: &HermiteMomentVector) -> Result<DecayFit> {
    let order = l.order();
    if order < 10 {
        return Err(invalid("N", format!("decay fit needs N >= 10, got {order}")));
    }
    let pts: Vec<(f64, f64)> = (order / 2..=order)
        .filter(|&n| l.values[n] != 0.0)
        .map(|n| (n as f64, (l.values[n] * l.values[n]).ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(DecayFit {
            c: 0.0,
            q: 0.0,
            ok: true,
        });
    }
    let k = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    Ok(DecayFit {
        c: intercept.exp(),
        q: slope.exp(),
        ok: slope < -1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ModelParams, InitialState) {
        let p = ModelParams::reference();
        (p, InitialState::new(&p, 0.04, 0.0).unwrap())
    }

    #[test]
    fn zeroth_moment_is_one() {
        let (p, s0) = setup();
        let w = GaussianWeight::new(0.0, 0.07).unwrap();
        let l = hermite_moments(&p, &s0, &w, 1.0 / 12.0, 20).unwrap();
        assert!((l.values()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matched_weight_kills_first_two() {
        let (p, s0) = setup();
        let t = 1.0 / 12.0;
        let w = match_weight(&p, &s0, t, MatchMode::MeanVariance).unwrap();
        let l = hermite_moments(&p, &s0, &w, t, 10).unwrap();
        assert!(l.values()[1].abs() < 1e-10);
        assert!(l.values()[2].abs() < 1e-10);
    }

    #[test]
    fn rejects_narrow_weight() {
        let (p, s0) = setup();
        let w = GaussianWeight::new(0.0, 0.01).unwrap();
        assert!(matches!(
            hermite_moments(&p, &s0, &w, 1.0, 5),
            Err(Error::WeightTooNarrow { .. })
        ));
    }

    #[test]
    fn mean_only_always_succeeds() {
        let (p, s0) = setup();
        for t in [0.01, 0.5, 2.0] {
            let w = match_weight(&p, &s0, t, MatchMode::Mean).unwrap();
            let l = hermite_moments(&p, &s0, &w, t, 3).unwrap();
            assert!(l.values()[1].abs() < 1e-10);
        }
    }

    #[test]
    fn mean_var_independent_of_provisional_weight() {
        let (p, s0) = setup();
        let t = 0.25;
        let wa = GaussianWeight::new(0.0, (0.08f64 * t).sqrt()).unwrap();
        let wb = GaussianWeight::new(0.05, (0.2f64 * t).sqrt()).unwrap();
        let la = hermite_moments(&p, &s0, &wa, t, 2).unwrap();
        let lb = hermite_moments(&p, &s0, &wb, t, 2).unwrap();
        let (ma, va) = mean_var_from_moments(&wa, la.values()[1], la.values()[2]);
        let (mb, vb) = mean_var_from_moments(&wb, lb.values()[1], lb.values()[2]);
        assert!((ma - mb).abs() <= 1e-9 * ma.abs());
        assert!((va - vb).abs() <= 1e-9 * va.abs());
        // E[X_T] = X_0 + (r - delta) T - E[int V]/2 with E[V_t] = theta here
        assert!((ma + 0.5 * 0.04 * t).abs() < 1e-12);
    }

    #[test]
    fn tensor_first_leg_matches_vector() {
        let (p, s0) = setup();
        let w = GaussianWeight::new(0.0, 0.05).unwrap();
        let t1 = 1.0 / 52.0;
        let w2 = GaussianWeight::new(0.0, 0.06).unwrap();
        let tensor = hermite_moments_multi(&p, &s0, &[t1, 5.0 / 52.0], &[w, w2], 8).unwrap();
        let vec = hermite_moments(&p, &s0, &w, t1, 8).unwrap();
        for n in 0..=8 {
            let a = tensor.get(&[n, 0]).unwrap();
            assert!((a - vec.values()[n]).abs() < 1e-10, "n={n}");
        }
        assert!((tensor.get(&[0, 0]).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(tensor.len(), 45);
    }

    #[test]
    fn single_leg_tensor_is_vector() {
        let (p, s0) = setup();
        let w = GaussianWeight::new(-0.001, 0.06).unwrap();
        let t = 1.0 / 12.0;
        let tensor = hermite_moments_multi(&p, &s0, &[t], &[w], 12).unwrap();
        let vec = hermite_moments(&p, &s0, &w, t, 12).unwrap();
        for n in 0..=12 {
            assert!((tensor.get(&[n]).unwrap() - vec.values()[n]).abs() < 1e-10);
        }
    }

    #[test]
    fn matched_multi_weights() {
        let (p, s0) = setup();
        let grid = [1.0 / 52.0, 5.0 / 52.0];
        let ws = match_weights_multi(&p, &s0, &grid, MatchMode::MeanVariance).unwrap();
        let tensor = hermite_moments_multi(&p, &s0, &grid, &ws, 4).unwrap();
        for idx in [[1, 0], [2, 0], [0, 1], [0, 2]] {
            assert!(tensor.get(&idx).unwrap().abs() < 1e-9, "{idx:?}");
        }
    }

    #[test]
    fn decay_edge_cases() {
        let w = GaussianWeight::new(0.0, 1.0).unwrap();
        let mut zeros = vec![0.0; 21];
        zeros[0] = 1.0;
        let fit = decay_diagnostic(&HermiteMomentVector::from_parts(1.0, w, zeros)).unwrap();
        assert!(fit.ok);
        assert_eq!(fit.q, 0.0);
        let flat = HermiteMomentVector::from_parts(1.0, w, vec![0.3; 21]);
        let fit = decay_diagnostic(&flat).unwrap();
        assert!(!fit.ok);
        assert!((fit.q - 1.0).abs() < 1e-9);
        let short = HermiteMomentVector::from_parts(1.0, w, vec![0.3; 5]);
        assert!(decay_diagnostic(&short).is_err());
    }

    #[test]
    fn csv_export() {
        let w = GaussianWeight::new(0.0, 1.0).unwrap();
        let l = HermiteMomentVector::from_parts(1.0, w, vec![1.0, 0.5]);
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("n,value\n0,1.00000000000000000e0\n"));
    }
}
