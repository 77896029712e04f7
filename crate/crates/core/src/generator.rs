//! Polynomial basis of `Pol_N`, the generator matrix on that basis, and the
//! action of its exponential.
//!
//! The basis polynomials are `h(m, n)(v, x) = v^m H_n(x)` with `m + n <= N`,
//! where `H_n` is the orthonormal Hermite polynomial of a Gaussian weight.
//! In this basis the generator has at most seven nonzero entries per column.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::hermite::GaussianWeight;
use crate::model::ModelParams;

/// Largest supported truncation order.
pub const MAX_ORDER: usize = 120;

/// Enumeration of exponent pairs `(m, n)` with `m + n <= N`.
///
/// Pairs are ordered by total degree, and by increasing `n` inside a degree
/// block, so `index(m, n) = d(d+1)/2 + n` with `d = m + n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisIndex {
    max_degree: usize,
    pairs: Vec<(usize, usize)>,
}

impl BasisIndex {
    pub fn new(max_degree: usize) -> Result<Self> {
        if max_degree > MAX_ORDER {
            return Err(invalid(
                "N",
                format!("truncation order {max_degree} exceeds {MAX_ORDER}"),
            ));
        }
        let mut pairs = Vec::with_capacity(Self::dim_for(max_degree));
        for d in 0..=max_degree {
            for n in 0..=d {
                pairs.push((d - n, n));
            }
        }
        Ok(BasisIndex { max_degree, pairs })
    }

    /// `(N + 2)(N + 1) / 2`.
    pub fn dim_for(max_degree: usize) -> usize {
        (max_degree + 2) * (max_degree + 1) / 2
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    /// Flat index of `(m, n)`, or `None` outside `Pol_N`.
    pub fn index(&self, m: usize, n: usize) -> Option<usize> {
        let d = m + n;
        (d <= self.max_degree).then(|| d * (d + 1) / 2 + n)
    }

    pub fn pair(&self, index: usize) -> (usize, usize) {
        self.pairs[index]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Row vector `(h_1(v, x), ..., h_M(v, x))`.
    pub fn evaluate(&self, w: &GaussianWeight, v: f64, x: f64) -> Vec<f64> {
        let n = self.max_degree;
        let herm = w.hermite_all(n, x);
        let mut vpow = Vec::with_capacity(n + 1);
        let mut p = 1.0;
        for _ in 0..=n {
            vpow.push(p);
            p *= v;
        }
        self.pairs.iter().map(|&(m, k)| vpow[m] * herm[k]).collect()
    }
}

/// Square sparse matrix stored by columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        SparseMatrix {
            dim,
            cols: vec![Vec::new(); dim],
        }
    }

    /// Adds `value` to entry `(row, col)`; explicit zeros are not stored.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        let col = &mut self.cols[col];
        match col.iter_mut().find(|(r, _)| *r == row) {
            Some(e) => e.1 += value,
            None => col.push((row, value)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.cols[j]
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cols[col]
            .iter()
            .find(|(r, _)| *r == row)
            .map_or(0.0, |e| e.1)
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, col) in self.cols.iter().enumerate() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for &(i, a) in col {
                y[i] += a * xj;
            }
        }
    }

    /// `y = A^T x`.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        for (j, col) in self.cols.iter().enumerate() {
            y[j] = col.iter().map(|&(i, a)| a * x[i]).sum();
        }
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        self.cols
            .iter()
            .map(|c| c.iter().map(|e| e.1.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0f64; self.dim];
        for col in &self.cols {
            for &(i, a) in col {
                rows[i] += a.abs();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, a) in col {
                d[(i, j)] += a;
            }
        }
        d
    }

    /// Diagonal similarity `S^{-1} A S` with `S = diag(scale)`.
    pub fn similarity(&self, scale: &[f64]) -> SparseMatrix {
        let cols = self
            .cols
            .iter()
            .enumerate()
            .map(|(j, col)| {
                col.iter()
                    .map(|&(i, a)| (i, a * scale[j] / scale[i]))
                    .collect()
            })
            .collect();
        SparseMatrix {
            dim: self.dim,
            cols,
        }
    }

    /// Writes the matrix in Matrix-Market coordinate format (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.dim, self.dim, self.nnz())?;
        for (j, col) in self.cols.iter().enumerate() {
            let mut sorted = col.clone();
            sorted.sort_by_key(|e| e.0);
            for (i, a) in sorted {
                writeln!(out, "{} {} {:.17e}", i + 1, j + 1, a)?;
            }
        }
        Ok(())
    }
}

/// Matrix of the generator restricted to `Pol_N` in the basis `v^m H_n(x)`.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    params: ModelParams,
    weight: GaussianWeight,
    basis: BasisIndex,
    matrix: SparseMatrix,
}

impl GeneratorMatrix {
    pub fn build(params: &ModelParams, weight: &GaussianWeight, basis: &BasisIndex) -> Self {
        let dim = basis.dim();
        let mut g = SparseMatrix::zeros(dim);
        let kappa = params.kappa();
        let theta = params.theta();
        let s = params.sigma();
        let rho = params.rho();
        let vmin = params.v_min();
        let vmax = params.v_max();
        let den = params.q_denominator();
        let drift_x = params.r() - params.delta();
        let sw = weight.sigma;

        for (j, &(m, n)) in basis.pairs().iter().enumerate() {
            let mf = m as f64;
            let nf = n as f64;
            let sn = nf.sqrt();
            let mm1 = mf * (mf - 1.0);
            let mut put = |mi: Option<usize>, ni: Option<usize>, value: f64| {
                if let (Some(mi), Some(ni)) = (mi, ni) {
                    if let Some(i) = basis.index(mi, ni) {
                        g.push(i, j, value);
                    }
                }
            };
            // v^{m-2} H_n
            if m >= 2 {
                put(
                    Some(m - 2),
                    Some(n),
                    -s * s * mm1 * vmax * vmin / (2.0 * den),
                );
            }
            // v^{m-1} H_{n-1}
            if m >= 1 && n >= 1 {
                put(
                    Some(m - 1),
                    Some(n - 1),
                    -s * rho * mf * sn * vmax * vmin / (sw * den),
                );
            }
            // v^{m-1} H_n
            if m >= 1 {
                put(
                    Some(m - 1),
                    Some(n),
                    kappa * theta * mf + s * s * mm1 * (vmax + vmin) / (2.0 * den),
                );
            }
            // v^m H_{n-1}
            if n >= 1 {
                put(
                    Some(m),
                    Some(n - 1),
                    drift_x * sn / sw + s * rho * mf * sn * (vmax + vmin) / (sw * den),
                );
            }
            // v^{m+1} H_{n-2}
            if n >= 2 {
                put(Some(m + 1), Some(n - 2), (nf * (nf - 1.0)).sqrt() / (2.0 * sw * sw));
            }
            // v^m H_n
            put(Some(m), Some(n), -kappa * mf - s * s * mm1 / (2.0 * den));
            // v^{m+1} H_{n-1}
            if n >= 1 {
                put(
                    Some(m + 1),
                    Some(n - 1),
                    -sn / (2.0 * sw) - s * rho * mf * sn / (sw * den),
                );
            }
        }
        GeneratorMatrix {
            params: *params,
            weight: *weight,
            basis: basis.clone(),
            matrix: g,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn weight(&self) -> &GaussianWeight {
        &self.weight
    }

    pub fn basis(&self) -> &BasisIndex {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Entry at row `(mi, ni)`, column `(mj, nj)`.
    pub fn entry(&self, row: (usize, usize), col: (usize, usize)) -> f64 {
        match (
            self.basis.index(row.0, row.1),
            self.basis.index(col.0, col.1),
        ) {
            (Some(i), Some(j)) => self.matrix.get(i, j),
            _ => 0.0,
        }
    }

    /// Factors `s_j = c^{-m}` of the basis change `h_j -> s_j h_j = (v/c)^m H_n`.
    pub fn basis_scale(&self, c: f64) -> Vec<f64> {
        self.basis
            .pairs()
            .iter()
            .map(|&(m, _)| c.powi(-(m as i32)))
            .collect()
    }

    /// The same operator in the rescaled basis `(v/c)^m H_n(x)`.
    ///
    /// Keeps the entries of the exponential of order one when `v` is small,
    /// which the unscaled basis does not.
    pub fn rescaled(&self, c: f64) -> SparseMatrix {
        self.matrix.similarity(&self.basis_scale(c))
    }
}

/// Tolerance of the truncated Taylor series per step.
const TAYLOR_TOL: f64 = 1.1102230246251565e-16;
/// Target norm of the scaled operator per step.
const STEP_NORM: f64 = 3.5;
const MAX_TAYLOR_TERMS: usize = 80;

/// `e^{tA} v` (or `e^{tA^T} v` when `transpose`) by a truncated Taylor
/// series with time stepping.
///
/// The interval is split into `s` steps with `t ||A|| / s <= 3.5`; each step
/// sums Taylor terms until two consecutive terms fall below unit roundoff
/// relative to the running sum.
pub fn expm_action_sparse(a: &SparseMatrix, t: f64, v: &[f64], transpose: bool) -> Result<Vec<f64>> {
    if t < 0.0 || !t.is_finite() {
        return Err(invalid("t", format!("must be finite and >= 0, got {t}")));
    }
    assert_eq!(v.len(), a.dim(), "vector length must match the matrix");
    let norm = if transpose { a.norm_inf() } else { a.norm_one() };
    if t == 0.0 || norm == 0.0 {
        return Ok(v.to_vec());
    }
    let steps = ((t * norm) / STEP_NORM).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let dim = a.dim();
    let mut f = v.to_vec();
    let mut term = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let inf_norm = |x: &[f64]| x.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
    for _ in 0..steps {
        term.copy_from_slice(&f);
        let mut prev_norm = inf_norm(&term);
        let mut converged = false;
        for k in 1..=MAX_TAYLOR_TERMS {
            if transpose {
                a.matvec_transpose(&term, &mut next);
            } else {
                a.matvec(&term, &mut next);
            }
            let c = h / k as f64;
            next.iter_mut().for_each(|e| *e *= c);
            std::mem::swap(&mut term, &mut next);
            for (fi, ti) in f.iter_mut().zip(&term) {
                *fi += ti;
            }
            let tn = inf_norm(&term);
            if !tn.is_finite() {
                return Err(Error::ExpmNonConvergence("non-finite Taylor term".into()));
            }
            if tn + prev_norm <= TAYLOR_TOL * inf_norm(&f) {
                converged = true;
                break;
            }
            prev_norm = tn;
        }
        if !converged {
            return Err(Error::ExpmNonConvergence(format!(
                "Taylor series not converged after {MAX_TAYLOR_TERMS} terms"
            )));
        }
    }
    Ok(f)
}

/// `e^{tG} v`.
pub fn expm_action(g: &GeneratorMatrix, t: f64, v: &[f64]) -> Result<Vec<f64>> {
    expm_action_sparse(g.matrix(), t, v, false)
}

/// Dense `e^{tA}` by scaling and squaring with a Pade approximant.
pub fn expm_dense(a: &SparseMatrix, t: f64) -> Result<DMatrix<f64>> {
    if t < 0.0 || !t.is_finite() {
        return Err(invalid("t", format!("must be finite and >= 0, got {t}")));
    }
    let m = a.to_dense() * t;
    let e = m.exp();
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::ExpmNonConvergence("non-finite dense exponential".into()));
    }
    Ok(e)
}
