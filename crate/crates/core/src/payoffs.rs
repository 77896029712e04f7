//! Fourier coefficients of discounted payoffs in the Hermite basis.
//!
//! Closed forms cover calls, puts, digitals and forward-start calls.
//! Anything else goes through tensor Gauss-Hermite quadrature
//! ([`numeric_coeffs`]), except Asian payoffs which are priced by cubature
//! directly (see `pricing::price_cubature`).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hermite::{gaussian_cdf, normalized_hermite_all, GaussianWeight, INV_SQRT_2PI};
use crate::quadrature::{gauss_hermite, tensor_rule};

/// Largest dimension accepted by tensor quadrature.
pub const MAX_QUAD_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    Call,
    Put,
    Digital,
    ForwardStart,
    ForwardStartReturn,
    AsianFixed,
    AsianFloating,
    /// Payoff supplied as a closure to [`numeric_coeffs`]; it has no built-in
    /// evaluation.
    Custom,
}

/// Contract description.
///
/// `log_strike` is `k = log K`. For forward-start and floating-strike Asian
/// contracts `K` is the proportional strike. `grid` holds the monitoring
/// dates and must end at `maturity`; European contracts may leave it empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
    pub log_strike: f64,
    pub maturity: f64,
    #[serde(default)]
    pub grid: Vec<f64>,
    /// Discount rate.
    #[serde(default)]
    pub rate: f64,
}

impl PayoffSpec {
    pub fn european(kind: PayoffKind, log_strike: f64, maturity: f64, rate: f64) -> Result<Self> {
        let s = PayoffSpec {
            kind,
            log_strike,
            maturity,
            grid: Vec::new(),
            rate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_grid(
        kind: PayoffKind,
        log_strike: f64,
        grid: Vec<f64>,
        rate: f64,
    ) -> Result<Self> {
        let maturity = *grid.last().ok_or_else(|| invalid("grid", "empty"))?;
        let s = PayoffSpec {
            kind,
            log_strike,
            maturity,
            grid,
            rate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(invalid("maturity", format!("must be > 0, got {}", self.maturity)));
        }
        if self.log_strike.is_nan() {
            return Err(invalid("log_strike", "is NaN"));
        }
        if !self.rate.is_finite() {
            return Err(invalid("rate", "must be finite"));
        }
        let mut prev = 0.0;
        for &t in &self.grid {
            if !(t > prev && t.is_finite()) {
                return Err(invalid("grid", "dates must be positive and strictly increasing"));
            }
            prev = t;
        }
        if !self.grid.is_empty() && (prev - self.maturity).abs() > 1e-14 * self.maturity {
            return Err(invalid("grid", "last monitoring date must equal the maturity"));
        }
        let need = match self.kind {
            PayoffKind::ForwardStart | PayoffKind::ForwardStartReturn => Some(2),
            _ => None,
        };
        if let Some(d) = need {
            if self.grid.len() != d {
                return Err(invalid("grid", format!("{:?} needs exactly {d} dates", self.kind)));
            }
        }
        if matches!(self.kind, PayoffKind::AsianFixed | PayoffKind::AsianFloating)
            && self.grid.is_empty()
        {
            return Err(invalid("grid", "Asian payoffs need monitoring dates"));
        }
        Ok(())
    }

    /// Monitoring dates, `[T]` for European contracts.
    pub fn dates(&self) -> Vec<f64> {
        if self.grid.is_empty() {
            vec![self.maturity]
        } else {
            self.grid.clone()
        }
    }

    /// Discounted payoff as a function of the log prices at the monitoring dates.
    pub fn discounted_payoff(&self, log_prices: &[f64]) -> f64 {
        let disc = (-self.rate * self.maturity).exp();
        let k = self.log_strike;
        let last = *log_prices.last().expect("non-empty");
        let avg = || log_prices.iter().map(|x| x.exp()).sum::<f64>() / log_prices.len() as f64;
        let raw = match self.kind {
            PayoffKind::Call => (last.exp() - k.exp()).max(0.0),
            PayoffKind::Put => (k.exp() - last.exp()).max(0.0),
            PayoffKind::Digital => {
                if last >= k {
                    1.0
                } else {
                    0.0
                }
            }
            PayoffKind::ForwardStart => (last.exp() - k.exp() * log_prices[0].exp()).max(0.0),
            PayoffKind::ForwardStartReturn => ((last - log_prices[0]).exp() - k.exp()).max(0.0),
            PayoffKind::AsianFixed => (avg() - k.exp()).max(0.0),
            PayoffKind::AsianFloating => (last.exp() - k.exp() * avg()).max(0.0),
            PayoffKind::Custom => panic!("custom payoffs have no built-in evaluation"),
        };
        disc * raw
    }

    /// Discounted payoff as a function of the log returns `y_i = X_{t_i} - X_{t_{i-1}}`.
    pub fn discounted_payoff_returns(&self, x0: f64, returns: &[f64]) -> f64 {
        let mut x = x0;
        let prices: Vec<f64> = returns
            .iter()
            .map(|y| {
                x += y;
                x
            })
            .collect();
        self.discounted_payoff(&prices)
    }
}

/// Hermite coefficients of a discounted payoff.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoefficients {
    weights: Vec<GaussianWeight>,
    order: usize,
    values: CoefficientValues,
    norm_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum CoefficientValues {
    Dense(Vec<f64>),
    Sparse(BTreeMap<Vec<usize>, f64>),
}

impl FourierCoefficients {
    pub fn univariate(weight: GaussianWeight, values: Vec<f64>, norm_sq: Option<f64>) -> Self {
        assert!(!values.is_empty(), "need at least f_0");
        FourierCoefficients {
            weights: vec![weight],
            order: values.len() - 1,
            values: CoefficientValues::Dense(values),
            norm_sq,
        }
    }

    /// Multi-index coefficients of total order at most `order`.
    pub fn multivariate(
        weights: Vec<GaussianWeight>,
        order: usize,
        values: BTreeMap<Vec<usize>, f64>,
        norm_sq: Option<f64>,
    ) -> Self {
        FourierCoefficients {
            weights,
            order,
            values: CoefficientValues::Sparse(values),
            norm_sq,
        }
    }

    pub fn weights(&self) -> &[GaussianWeight] {
        &self.weights
    }
    pub fn dim(&self) -> usize {
        self.weights.len()
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn norm_sq(&self) -> Option<f64> {
        self.norm_sq
    }

    /// `f_0..f_N` for univariate coefficients.
    pub fn as_slice(&self) -> Option<&[f64]> {
        match &self.values {
            CoefficientValues::Dense(v) => Some(v),
            CoefficientValues::Sparse(_) => None,
        }
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        match &self.values {
            CoefficientValues::Dense(v) if index.len() == 1 => v.get(index[0]).copied(),
            CoefficientValues::Dense(_) => None,
            CoefficientValues::Sparse(m) => m.get(index).copied(),
        }
    }

    /// All `(index, value)` pairs, univariate indices as length-one slices.
    pub fn entries(&self) -> Vec<(Vec<usize>, f64)> {
        match &self.values {
            CoefficientValues::Dense(v) => v.iter().enumerate().map(|(n, f)| (vec![n], *f)).collect(),
            CoefficientValues::Sparse(m) => m.iter().map(|(k, f)| (k.clone(), *f)).collect(),
        }
    }

    /// `sum_{|n| <= N} f_n^2` for `N = 0..=order`.
    pub fn bessel_partial_sums(&self) -> Vec<f64> {
        let mut by_order = vec![0.0; self.order + 1];
        for (idx, f) in self.entries() {
            let tot: usize = idx.iter().sum();
            if tot <= self.order {
                by_order[tot] += f * f;
            }
        }
        by_order
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    }

    /// CSV with header `n1,..,nd,value` (or `n,value` when univariate).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = if self.dim() == 1 {
            vec!["n".into()]
        } else {
            (1..=self.dim()).map(|i| format!("n{i}")).collect()
        };
        header.push("value".into());
        w.write_record(&header)?;
        for (idx, v) in self.entries() {
            let mut rec: Vec<String> = idx.iter().map(usize::to_string).collect();
            rec.push(format!("{v:.17e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `e^{nu mu} phi(mu)`, zero in the limit `mu -> -inf`.
fn tilted_density(mu: f64, nu: f64) -> f64 {
    if mu.is_infinite() {
        0.0
    } else {
        INV_SQRT_2PI * (nu * mu - 0.5 * mu * mu).exp()
    }
}

/// `I_0(mu; nu), ..., I_n(mu; nu)` with `I_n = int_mu^inf He_n(z) e^{nu z} phi(z) dz`.
///
/// Raw recursion, kept for checking. Pricing uses the normalised form.
pub fn i_function_all(n: usize, mu: f64, nu: f64) -> Vec<f64> {
    let tilt = tilted_density(mu, nu);
    let mut out = Vec::with_capacity(n + 1);
    out.push((0.5 * nu * nu).exp() * gaussian_cdf(nu - mu));
    let (mut he_prev, mut he) = (0.0, 1.0);
    for k in 1..=n {
        let v = if tilt == 0.0 { 0.0 } else { he * tilt };
        out.push(v + nu * out[k - 1]);
        let next = mu * he - (k as f64 - 1.0).max(0.0) * he_prev;
        he_prev = he;
        he = next;
    }
    out
}

/// `I_k / sqrt(k!)` for `k = 0..=n`.
fn i_normalized_all(n: usize, mu: f64, nu: f64) -> Vec<f64> {
    let tilt = tilted_density(mu, nu);
    let h = if tilt == 0.0 {
        vec![0.0; n.max(1)]
    } else {
        normalized_hermite_all(n.saturating_sub(1), mu)
    };
    let mut out = Vec::with_capacity(n + 1);
    out.push((0.5 * nu * nu).exp() * gaussian_cdf(nu - mu));
    for k in 1..=n {
        let v = (h[k - 1] * tilt + nu * out[k - 1]) / (k as f64).sqrt();
        out.push(v);
    }
    out
}

/// `E_w[e^{a X} 1{X > k}]` for `X ~ w`.
fn tilted_tail(w: &GaussianWeight, a: f64, k: f64) -> f64 {
    let s2 = w.variance();
    (a * w.mu + 0.5 * a * a * s2).exp() * gaussian_cdf((w.mu + a * s2 - k) / w.sigma)
}

/// `E_w[e^X H_n(X)] = sigma^n / sqrt(n!) e^{mu + sigma^2/2}` for `n = 0..=N`.
fn exp_coeffs(w: &GaussianWeight, order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    out.push((w.mu + 0.5 * w.variance()).exp());
    for n in 1..=order {
        let v = out[n - 1] * w.sigma / (n as f64).sqrt();
        out.push(v);
    }
    out
}

fn check_time(rate: f64, maturity: f64) -> Result<()> {
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(invalid("T", format!("must be > 0, got {maturity}")));
    }
    if !rate.is_finite() {
        return Err(invalid("r", "must be finite"));
    }
    Ok(())
}

/// Closed-form `||f||_w^2` of the discounted call payoff.
pub fn call_norm_sq(w: &GaussianWeight, k: f64, rate: f64, maturity: f64) -> f64 {
    if k == f64::NEG_INFINITY {
        return (-2.0 * rate * maturity + 2.0 * w.mu + 2.0 * w.variance()).exp();
    }
    let raw = tilted_tail(w, 2.0, k) - 2.0 * k.exp() * tilted_tail(w, 1.0, k)
        + (2.0 * k).exp() * tilted_tail(w, 0.0, k);
    (-2.0 * rate * maturity).exp() * raw.max(0.0)
}

/// Closed-form `||f||_w^2` of the discounted put payoff.
pub fn put_norm_sq(w: &GaussianWeight, k: f64, rate: f64, maturity: f64) -> f64 {
    // E[(e^k - e^X)^2 1{X < k}] = full moments minus the upper tail pieces
    let lower = |a: f64| (a * w.mu + 0.5 * a * a * w.variance()).exp() - tilted_tail(w, a, k);
    let raw = (2.0 * k).exp() * lower(0.0) - 2.0 * k.exp() * lower(1.0) + lower(2.0);
    (-2.0 * rate * maturity).exp() * raw.max(0.0)
}

/// Call coefficients `f_0..f_N` of `e^{-rT} (e^x - e^k)^+`.
pub fn call_coeffs(
    w: &GaussianWeight,
    k: f64,
    rate: f64,
    maturity: f64,
    order: usize,
) -> Result<FourierCoefficients> {
    check_time(rate, maturity)?;
    if k.is_nan() || k == f64::INFINITY {
        return Err(invalid("k", format!("must be finite or -inf, got {k}")));
    }
    let mu = (k - w.mu) / w.sigma;
    let nu = w.sigma;
    let scale = (-rate * maturity + w.mu).exp();
    let inorm = i_normalized_all(order, mu, nu);
    let mut f = Vec::with_capacity(order + 1);
    let strike_leg = if k == f64::NEG_INFINITY {
        0.0
    } else {
        (-rate * maturity + k).exp() * gaussian_cdf((w.mu - k) / w.sigma)
    };
    f.push(scale * inorm[0] - strike_leg);
    for n in 1..=order {
        f.push(scale * nu * inorm[n - 1] / (n as f64).sqrt());
    }
    Ok(FourierCoefficients::univariate(
        *w,
        f,
        Some(call_norm_sq(w, k, rate, maturity)),
    ))
}

/// Put coefficients built from put-call parity.
///
/// `f_0` is the call `f_0 - e^{-delta T} S_0 + e^{-rT+k}`, higher orders are
/// those of the call, so `call^{(N)} - put^{(N)}` equals the parity value at
/// every truncation order. These are not the Hermite coefficients of the put
/// payoff itself; see [`put_payoff_coeffs`] for those. The norm is therefore
/// left empty.
#[allow(clippy::too_many_arguments)]
pub fn put_coeffs(
    w: &GaussianWeight,
    k: f64,
    rate: f64,
    delta: f64,
    maturity: f64,
    spot: f64,
    order: usize,
) -> Result<FourierCoefficients> {
    if !(spot > 0.0 && spot.is_finite()) {
        return Err(invalid("s0", format!("must be > 0, got {spot}")));
    }
    if !delta.is_finite() {
        return Err(invalid("delta", "must be finite"));
    }
    let call = call_coeffs(w, k, rate, maturity, order)?;
    let mut f = call.as_slice().expect("univariate").to_vec();
    f[0] += -(-delta * maturity).exp() * spot + (-rate * maturity + k).exp();
    Ok(FourierCoefficients::univariate(*w, f, None))
}

/// Hermite coefficients of the put payoff `e^{-rT} (e^k - e^x)^+`.
pub fn put_payoff_coeffs(
    w: &GaussianWeight,
    k: f64,
    rate: f64,
    maturity: f64,
    order: usize,
) -> Result<FourierCoefficients> {
    let call = call_coeffs(w, k, rate, maturity, order)?;
    let disc = (-rate * maturity).exp();
    let ex = exp_coeffs(w, order);
    let mut f: Vec<f64> = call
        .as_slice()
        .expect("univariate")
        .iter()
        .zip(&ex)
        .map(|(c, e)| c - disc * e)
        .collect();
    f[0] += disc * k.exp();
    Ok(FourierCoefficients::univariate(
        *w,
        f,
        Some(put_norm_sq(w, k, rate, maturity)),
    ))
}

/// Coefficients of the digital `e^{-rT} 1{x >= k}`.
pub fn digital_coeffs(
    w: &GaussianWeight,
    k: f64,
    rate: f64,
    maturity: f64,
    order: usize,
) -> Result<FourierCoefficients> {
    check_time(rate, maturity)?;
    if k.is_nan() {
        return Err(invalid("k", "is NaN"));
    }
    let disc = (-rate * maturity).exp();
    let mu = (k - w.mu) / w.sigma;
    let mut f = Vec::with_capacity(order + 1);
    f.push(disc * gaussian_cdf(-mu));
    if mu.is_finite() {
        let dens = crate::hermite::gaussian_pdf(mu);
        let h = normalized_hermite_all(order.saturating_sub(1), mu);
        for n in 1..=order {
            f.push(disc * h[n - 1] * dens / (n as f64).sqrt());
        }
    } else {
        f.resize(order + 1, 0.0);
    }
    let norm = disc * disc * gaussian_cdf(-mu);
    Ok(FourierCoefficients::univariate(*w, f, Some(norm)))
}

/// Coefficients of the corridor digital `e^{-rT} 1{k1 <= x < k2}`.
pub fn corridor_coeffs(
    w: &GaussianWeight,
    k1: f64,
    k2: f64,
    rate: f64,
    maturity: f64,
    order: usize,
) -> Result<FourierCoefficients> {
    if !(k1 < k2) {
        return Err(invalid("k2", format!("must exceed k1 = {k1}, got {k2}")));
    }
    let lo = digital_coeffs(w, k1, rate, maturity, order)?;
    let hi = digital_coeffs(w, k2, rate, maturity, order)?;
    let f: Vec<f64> = lo
        .as_slice()
        .expect("univariate")
        .iter()
        .zip(hi.as_slice().expect("univariate"))
        .map(|(a, b)| a - b)
        .collect();
    let norm = lo.norm_sq.unwrap_or(0.0) - hi.norm_sq.unwrap_or(0.0);
    Ok(FourierCoefficients::univariate(*w, f, Some(norm.max(0.0))))
}

/// Two-index coefficients of the forward-start call `e^{-rT}(S_T - K S_t)^+`
/// in the returns `(y_1, y_2)`, for total order at most `order`.
pub fn forward_start_coeffs(
    w1: &GaussianWeight,
    w2: &GaussianWeight,
    strike: f64,
    rate: f64,
    maturity: f64,
    x0: f64,
    order: usize,
) -> Result<FourierCoefficients> {
    if !(strike > 0.0 && strike.is_finite()) {
        return Err(invalid("K", format!("must be > 0, got {strike}")));
    }
    if !x0.is_finite() {
        return Err(invalid("x0", "must be finite"));
    }
    check_time(rate, maturity)?;
    let inner = call_coeffs(w2, strike.ln(), 0.0, maturity, order)?;
    let inner = inner.as_slice().expect("univariate");
    let first = exp_coeffs(w1, order);
    let lead = (x0 - rate * maturity).exp();
    let mut values = BTreeMap::new();
    for n1 in 0..=order {
        for n2 in 0..=order - n1 {
            values.insert(vec![n1, n2], lead * first[n1] * inner[n2]);
        }
    }
    let norm = (2.0 * (x0 - rate * maturity) + 2.0 * w1.mu + 2.0 * w1.variance()).exp()
        * call_norm_sq(w2, strike.ln(), 0.0, maturity);
    Ok(FourierCoefficients::multivariate(
        vec![*w1, *w2],
        order,
        values,
        Some(norm),
    ))
}

/// Coefficients of the forward-start call on the return `e^{-rT}(S_T/S_t - K)^+`.
///
/// They are call coefficients against the second-leg weight and are paired
/// with the forward moments `E[H_n(X_{t_2} - X_{t_1})]`.
pub fn forward_start_return_coeffs(
    w2: &GaussianWeight,
    strike: f64,
    rate: f64,
    maturity: f64,
    order: usize,
) -> Result<FourierCoefficients> {
    if !(strike > 0.0 && strike.is_finite()) {
        return Err(invalid("K", format!("must be > 0, got {strike}")));
    }
    call_coeffs(w2, strike.ln(), rate, maturity, order)
}

fn check_quadrature(weights: &[GaussianWeight], order: usize, points: usize) -> Result<()> {
    let d = weights.len();
    if d == 0 {
        return Err(invalid("weights", "need at least one dimension"));
    }
    if d > MAX_QUAD_DIM {
        return Err(Error::DimensionTooLarge(d));
    }
    if points < order + 1 {
        return Err(Error::InsufficientQuadrature { points, order });
    }
    Ok(())
}

/// Multi-indices of total order at most `order` in `d` dimensions, in
/// lexicographic order.
pub fn multi_indices(d: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, budget: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == d {
            out.push(prefix.clone());
            return;
        }
        for n in 0..=budget {
            prefix.push(n);
            rec(d, budget - n, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, order, &mut Vec::with_capacity(d), &mut out);
    out
}

/// Tensor Gauss-Hermite coefficients `<f, H_{n_1..n_d}>_w` of a payoff given
/// as a function of the point `x in R^d`. The payoff is expected to include
/// its discounting.
pub fn numeric_coeffs<F>(
    f: F,
    weights: &[GaussianWeight],
    order: usize,
    quad_points: usize,
) -> Result<FourierCoefficients>
where
    F: Fn(&[f64]) -> f64,
{
    check_quadrature(weights, order, quad_points)?;
    let d = weights.len();
    let (z, wq) = gauss_hermite(quad_points);
    let (pts, pw) = tensor_rule(&z, &wq, d);
    let herm: Vec<Vec<f64>> = z.iter().map(|zi| normalized_hermite_all(order, *zi)).collect();
    let indices = multi_indices(d, order);
    let mut acc = vec![0.0; indices.len()];
    let mut norm = 0.0;
    let mut x = vec![0.0; d];
    // node index per coordinate, same odometer as tensor_rule
    let mut node = vec![0usize; d];
    for (p, wp) in pw.iter().enumerate() {
        for i in 0..d {
            x[i] = weights[i].mu + weights[i].sigma * pts[p * d + i];
        }
        let v = f(&x);
        let fx = v * wp;
        norm += fx * v;
        for (slot, idx) in acc.iter_mut().zip(&indices) {
            let mut h = 1.0;
            for i in 0..d {
                h *= herm[node[i]][idx[i]];
            }
            *slot += fx * h;
        }
        for i in (0..d).rev() {
            node[i] += 1;
            if node[i] < quad_points {
                break;
            }
            node[i] = 0;
        }
    }
    if d == 1 {
        return Ok(FourierCoefficients::univariate(weights[0], acc, Some(norm)));
    }
    let values = indices.into_iter().zip(acc).collect();
    Ok(FourierCoefficients::multivariate(
        weights.to_vec(),
        order,
        values,
        Some(norm),
    ))
}

/// `||f||_w^2` by tensor Gauss-Hermite quadrature.
pub fn payoff_norm_sq<F>(f: F, weights: &[GaussianWeight], quad_points: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    check_quadrature(weights, 0, quad_points)?;
    let d = weights.len();
    let (z, wq) = gauss_hermite(quad_points);
    let (pts, pw) = tensor_rule(&z, &wq, d);
    let mut x = vec![0.0; d];
    let mut norm = 0.0;
    for (p, wp) in pw.iter().enumerate() {
        for i in 0..d {
            x[i] = weights[i].mu + weights[i].sigma * pts[p * d + i];
        }
        let v = f(&x);
        norm += wp * v * v;
    }
    Ok(norm)
}
