//! Black-Scholes prices and implied volatilities.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hermite::gaussian_cdf;
use crate::model::ModelParams;

/// Search interval for the implied volatility.
pub const IV_BRACKET: (f64, f64) = (1e-8, 5.0);
const PRICE_TOL: f64 = 1e-12;
const MAX_ITER: usize = 200;

/// Contract whose price is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IvPayoff {
    Call,
    Put,
    /// Forward-start call on the return `S_T / S_t`; `tau = T - t`.
    ForwardStartReturn { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IvResult {
    pub iv: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

/// Black-Scholes call price for spot `spot` and log strike `k`.
pub fn bs_price(spot: f64, k: f64, r: f64, delta: f64, maturity: f64, sigma: f64) -> f64 {
    let fwd_disc = (-delta * maturity).exp() * spot;
    let strike_disc = (-r * maturity + k).exp();
    let sd = sigma * maturity.sqrt();
    if sd == 0.0 {
        return (fwd_disc - strike_disc).max(0.0);
    }
    let d1 = ((spot.ln() - k) + (r - delta) * maturity) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    fwd_disc * gaussian_cdf(d1) - strike_disc * gaussian_cdf(d2)
}

/// Black-Scholes put price via parity.
pub fn bs_put(spot: f64, k: f64, r: f64, delta: f64, maturity: f64, sigma: f64) -> f64 {
    let fwd_disc = (-delta * maturity).exp() * spot;
    let strike_disc = (-r * maturity + k).exp();
    let sd = sigma * maturity.sqrt();
    if sd == 0.0 {
        return (strike_disc - fwd_disc).max(0.0);
    }
    let d1 = ((spot.ln() - k) + (r - delta) * maturity) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    strike_disc * gaussian_cdf(-d2) - fwd_disc * gaussian_cdf(-d1)
}

/// Black-Scholes price of `e^{-rT} (S_T / S_{T - tau} - K)^+` with `k = log K`.
pub fn bs_forward_start_return(k: f64, r: f64, delta: f64, maturity: f64, tau: f64, sigma: f64) -> f64 {
    // the return over tau is a call on a unit spot, discounted from T instead of tau
    (-r * (maturity - tau)).exp() * bs_price(1.0, k, r, delta, tau, sigma)
}

fn model_price(payoff: IvPayoff, spot: f64, k: f64, r: f64, delta: f64, maturity: f64, sigma: f64) -> f64 {
    match payoff {
        IvPayoff::Call => bs_price(spot, k, r, delta, maturity, sigma),
        IvPayoff::Put => bs_put(spot, k, r, delta, maturity, sigma),
        IvPayoff::ForwardStartReturn { tau } => bs_forward_start_return(k, r, delta, maturity, tau, sigma),
    }
}

/// No-arbitrage bounds `(lower, upper)` on the price.
pub fn arbitrage_bounds(payoff: IvPayoff, spot: f64, k: f64, r: f64, delta: f64, maturity: f64) -> (f64, f64) {
    match payoff {
        IvPayoff::Call => (
            model_price(payoff, spot, k, r, delta, maturity, 0.0),
            (-delta * maturity).exp() * spot,
        ),
        IvPayoff::Put => (
            model_price(payoff, spot, k, r, delta, maturity, 0.0),
            (-r * maturity + k).exp(),
        ),
        IvPayoff::ForwardStartReturn { tau } => (
            model_price(payoff, spot, k, r, delta, maturity, 0.0),
            (-r * (maturity - tau) - delta * tau).exp(),
        ),
    }
}

/// Implied volatility by Brent's method on [`IV_BRACKET`].
#[allow(clippy::too_many_arguments)]
pub fn implied_vol(
    price: f64,
    spot: f64,
    k: f64,
    r: f64,
    delta: f64,
    maturity: f64,
    payoff: IvPayoff,
) -> Result<IvResult> {
    if !(spot > 0.0 && spot.is_finite()) {
        return Err(invalid("spot", format!("must be > 0, got {spot}")));
    }
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(invalid("T", format!("must be > 0, got {maturity}")));
    }
    if let IvPayoff::ForwardStartReturn { tau } = payoff {
        if !(tau > 0.0 && tau <= maturity) {
            return Err(invalid("tau", format!("must lie in (0, T], got {tau}")));
        }
    }
    let (lower, upper) = arbitrage_bounds(payoff, spot, k, r, delta, maturity);
    if !(price > lower && price < upper) {
        return Err(Error::PriceOutOfBounds { price, lower, upper });
    }
    let g = |s: f64| model_price(payoff, spot, k, r, delta, maturity, s) - price;
    let (mut a, mut b) = IV_BRACKET;
    let (mut fa, mut fb) = (g(a), g(b));
    if fa > 0.0 || fb < 0.0 {
        return Err(Error::PriceOutOfBounds {
            price,
            lower: fa + price,
            upper: fb + price,
        });
    }
    if fa.abs() <= PRICE_TOL {
        return Ok(IvResult { iv: a, iterations: 0, bracket: IV_BRACKET });
    }
    // Brent: keep b as the best iterate, c as the previous one, a-b brackets
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for it in 1..=MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 1e-16;
        let m = 0.5 * (c - b);
        if fb.abs() <= PRICE_TOL || m.abs() <= tol {
            return Ok(IvResult { iv: b, iterations: it, bracket: IV_BRACKET });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * m * s, 1.0 - s)
            } else {
                let q0 = fa / fc;
                let r0 = fb / fc;
                (
                    s * (2.0 * m * q0 * (q0 - r0) - (b - a) * (r0 - 1.0)),
                    (q0 - 1.0) * (r0 - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = g(b);
    }
    Err(Error::IntegrationFailure(format!(
        "implied volatility did not converge in {MAX_ITER} iterations"
    )))
}

/// `true` iff every value lies in `[sqrt(v_min) - 1e-6, sqrt(v_max) + 1e-6]`.
pub fn iv_bounds_check(values: &[f64], params: &ModelParams) -> bool {
    let tol = 1e-6;
    let lo = params.v_min().sqrt() - tol;
    let hi = params.v_max().sqrt() + tol;
    values.iter().all(|v| *v >= lo && *v <= hi)
}
