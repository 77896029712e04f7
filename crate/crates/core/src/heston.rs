//! Reference Heston pricer by Fourier inversion, used to check the Jacobi
//! model in its Heston limit.
//!
//! With the payoff transform `f^(z) = int e^{zx} f(x) dx` and the moment
//! generating function `g^(z) = E[e^{z X_T}]` the price is
//!
//! ```text
//! pi = 1/pi int_0^inf Re[ f^(a + i l) g^(-a - i l) ] dl
//! ```
//!
//! for a damping `a` inside the payoff strip: `a < -1` for calls, `a > 0`
//! for puts. Both payoffs share `f^(z) = e^{-rT + k(1+z)} / (z (z+1))`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hermite::GaussianWeight;
use crate::model::{InitialState, ModelParams};
use crate::moments::{hermite_moments, match_weight, MatchMode};
use crate::payoffs::put_coeffs;
use crate::pricing::price_series;
use crate::quadrature::integrate_adaptive;

/// Absolute tolerance of the Fourier integral.
const ABS_TOL: f64 = 1e-10;
/// Default damping for calls and puts.
pub const CALL_DAMPING: f64 = -2.0;
pub const PUT_DAMPING: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HestonParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub rho: f64,
    pub r: f64,
    pub delta: f64,
    pub v0: f64,
    pub x0: f64,
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.kappa, self.theta, self.sigma, self.rho, self.r, self.delta, self.v0, self.x0,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("heston", "all parameters must be finite"));
        }
        if !(self.kappa > 0.0) {
            return Err(invalid("kappa", "must be > 0"));
        }
        if !(self.sigma > 0.0) {
            return Err(invalid("sigma", "must be > 0"));
        }
        if self.theta < 0.0 {
            return Err(invalid("theta", "must be >= 0"));
        }
        if self.rho.abs() > 1.0 {
            return Err(invalid("rho", "must lie in [-1, 1]"));
        }
        if self.v0 < 0.0 {
            return Err(invalid("v0", "must be >= 0"));
        }
        Ok(())
    }

    /// Heston limit of a Jacobi parameter set.
    pub fn from_jacobi(params: &ModelParams, s0: &InitialState) -> Self {
        HestonParams {
            kappa: params.kappa(),
            theta: params.theta(),
            sigma: params.sigma(),
            rho: params.rho(),
            r: params.r(),
            delta: params.delta(),
            v0: s0.v0,
            x0: s0.x0,
        }
    }

    /// `E[e^{z X_T}]` in the rotation-free form: with `b = kappa - rho sigma z`,
    /// `d = sqrt(b^2 - sigma^2 (z^2 - z))` and `a = b - d` evaluated as
    /// `sigma^2 (z^2 - z) / (b + d)` so nothing cancels for small `sigma`.
    pub fn mgf(&self, z: Complex64, maturity: f64) -> Complex64 {
        let s2 = self.sigma * self.sigma;
        let zz = z * z - z;
        let b = Complex64::new(self.kappa, 0.0) - self.rho * self.sigma * z;
        // principal root, Re(d) >= 0, so e^{-dT} stays bounded
        let d = (b * b - s2 * zz).sqrt();
        let bd = b + d;
        // a / sigma^2, kept separate from sigma^2 for the small-sigma limit
        let a_over = zz / bd;
        let a = s2 * a_over;
        let g = a / bd;
        let e = (-d * maturity).exp();
        let one = Complex64::new(1.0, 0.0);
        let dd = a_over * (one - e) / (one - g * e);
        // (1 - g e)/(1 - g) = 1 + u with u = sigma^2 v; ln(1 + u)/sigma^2 = v ln1p(u)/u
        let v = a_over / bd * (one - e) / (one - g);
        let u = s2 * v;
        let log_over = v * ln1p_ratio(u);
        let cc = self.kappa * self.theta * (a_over * maturity - 2.0 * log_over);
        (z * (self.x0 + (self.r - self.delta) * maturity) + cc + dd * self.v0).exp()
    }
}

/// `ln(1 + u) / u`, accurate for small `|u|`.
fn ln1p_ratio(u: Complex64) -> Complex64 {
    if u.norm() < 1e-3 {
        // alternating series, 6 terms reach 1e-18 at |u| = 1e-3
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        for j in 1..=6 {
            sum += term / j as f64;
            term *= -u;
        }
        sum
    } else {
        (Complex64::new(1.0, 0.0) + u).ln() / u
    }
}

fn payoff_transform(z: Complex64, k: f64, r: f64, maturity: f64) -> Complex64 {
    (-r * maturity + k * (Complex64::new(1.0, 0.0) + z)).exp() / (z * (z + 1.0))
}

fn fourier_price(p: &HestonParams, k: f64, maturity: f64, damping: f64) -> Result<f64> {
    let integrand = |l: f64| {
        let z = Complex64::new(damping, l);
        (payoff_transform(z, k, p.r, maturity) * p.mgf(-z, maturity)).re
    };
    // integrate panel by panel until the tail is negligible
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut width = 5.0;
    let mut quiet = 0;
    for _ in 0..200 {
        let hi = lo + width;
        let part = integrate_adaptive(integrand, lo, hi, ABS_TOL * 0.01, 1e-13)?;
        total += part;
        if part.abs() < ABS_TOL * 1e-3 {
            quiet += 1;
            if quiet >= 3 {
                return Ok(total / std::f64::consts::PI);
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        width *= 1.25;
    }
    Err(Error::IntegrationFailure(
        "Heston Fourier integral did not settle".into(),
    ))
}

fn check_inputs(p: &HestonParams, k: f64, maturity: f64) -> Result<()> {
    p.validate()?;
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(invalid("T", format!("must be > 0, got {maturity}")));
    }
    if !k.is_finite() {
        return Err(invalid("k", "must be finite"));
    }
    Ok(())
}

/// Heston call price; `damping` is the real part of the payoff-transform
/// argument and must be below `-1`.
pub fn heston_call(p: &HestonParams, k: f64, maturity: f64, damping: f64) -> Result<f64> {
    check_inputs(p, k, maturity)?;
    if !(damping < -1.0) {
        return Err(invalid("damping", format!("call damping must be < -1, got {damping}")));
    }
    fourier_price(p, k, maturity, damping)
}

/// Heston put price; `damping` must be positive.
pub fn heston_put(p: &HestonParams, k: f64, maturity: f64, damping: f64) -> Result<f64> {
    check_inputs(p, k, maturity)?;
    if !(damping > 0.0) {
        return Err(invalid("damping", format!("put damping must be > 0, got {damping}")));
    }
    fourier_price(p, k, maturity, damping)
}

/// One rung of the Jacobi-to-Heston ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapRung {
    pub v_max: f64,
    pub jacobi: f64,
    pub heston: f64,
    pub gap: f64,
    pub weight: GaussianWeight,
}

/// Variance margin of the common ladder weight over the admissibility limit.
pub const LADDER_WEIGHT_MARGIN: f64 = 1.02;

/// Jacobi put price at `order` with the moment-matched weight when the match
/// is admissible and the mean-matched provisional weight otherwise.
pub fn jacobi_put(
    params: &ModelParams,
    s0: &InitialState,
    k: f64,
    maturity: f64,
    order: usize,
) -> Result<(f64, GaussianWeight)> {
    let w = match match_weight(params, s0, maturity, MatchMode::MeanVariance) {
        Ok(w) => w,
        Err(Error::InfeasibleVarianceMatch { .. }) => {
            match_weight(params, s0, maturity, MatchMode::Mean)?
        }
        Err(e) => return Err(e),
    };
    Ok((jacobi_put_with_weight(params, s0, &w, k, maturity, order)?, w))
}

/// Jacobi put price at `order` under a given weight.
pub fn jacobi_put_with_weight(
    params: &ModelParams,
    s0: &InitialState,
    w: &GaussianWeight,
    k: f64,
    maturity: f64,
    order: usize,
) -> Result<f64> {
    let l = hermite_moments(params, s0, w, maturity, order)?;
    let f = put_coeffs(
        w,
        k,
        params.r(),
        params.delta(),
        maturity,
        s0.spot(),
        order,
    )?;
    Ok(price_series(&f, &l, order)?.price)
}

/// `|pi_put^{Jacobi}(v_max) - pi_put^{Heston}|` along a ladder of `v_max`.
///
/// Every rung uses the same weight width, `LADDER_WEIGHT_MARGIN` times the
/// admissibility limit of the largest rung, centred on the rung's own mean.
/// Truncation error then moves with the weight rather than with the rung.
pub fn jacobi_heston_gap(
    params_base: &ModelParams,
    s0: &InitialState,
    v_max_ladder: &[f64],
    k: f64,
    maturity: f64,
    order: usize,
) -> Result<Vec<GapRung>> {
    if v_max_ladder.is_empty() {
        return Err(invalid("v_max_ladder", "must not be empty"));
    }
    if v_max_ladder.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("v_max_ladder", "must be strictly increasing"));
    }
    let heston = heston_put(
        &HestonParams::from_jacobi(params_base, s0),
        k,
        maturity,
        PUT_DAMPING,
    )?;
    let top = v_max_ladder[v_max_ladder.len() - 1];
    let sigma_w = (LADDER_WEIGHT_MARGIN * top * maturity / 2.0).sqrt();
    v_max_ladder
        .iter()
        .map(|&vmax| {
            let p = params_base.with_bounds(params_base.v_min(), vmax)?;
            let mean = match_weight(&p, s0, maturity, MatchMode::Mean)?.mu;
            let weight = GaussianWeight::new(mean, sigma_w)?;
            let jacobi = jacobi_put_with_weight(&p, s0, &weight, k, maturity, order)?;
            Ok(GapRung {
                v_max: vmax,
                jacobi,
                heston,
                gap: (jacobi - heston).abs(),
                weight,
            })
        })
        .collect()
}
