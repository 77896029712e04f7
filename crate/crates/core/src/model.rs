//! Parameters and structural functions of the Jacobi stochastic volatility model.
//!
//! The squared volatility `V` follows a Jacobi process on `[v_min, v_max]`
//! and the log price `X` is driven by `V` and a second Brownian motion:
//!
//! ```text
//! dV = kappa (theta - V) dt + sigma sqrt(Q(V)) dW1
//! dX = (r - delta - V/2) dt + rho sqrt(Q(V)) dW1 + sqrt(V - rho^2 Q(V)) dW2
//! Q(v) = (v - v_min)(v_max - v) / (sqrt(v_max) - sqrt(v_min))^2
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Validated model coefficients. Immutable once constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelParams", into = "RawModelParams")]
pub struct ModelParams {
    kappa: f64,
    theta: f64,
    sigma: f64,
    rho: f64,
    v_min: f64,
    v_max: f64,
    r: f64,
    delta: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelParams {
    kappa: f64,
    theta: f64,
    sigma: f64,
    rho: f64,
    v_min: f64,
    v_max: f64,
    r: f64,
    delta: f64,
}

impl TryFrom<RawModelParams> for ModelParams {
    type Error = Error;

    fn try_from(p: RawModelParams) -> Result<Self> {
        ModelParams::new(
            p.kappa, p.theta, p.sigma, p.rho, p.v_min, p.v_max, p.r, p.delta,
        )
    }
}

impl From<ModelParams> for RawModelParams {
    fn from(p: ModelParams) -> Self {
        RawModelParams {
            kappa: p.kappa,
            theta: p.theta,
            sigma: p.sigma,
            rho: p.rho,
            v_min: p.v_min,
            v_max: p.v_max,
            r: p.r,
            delta: p.delta,
        }
    }
}

/// Advisory flags; none of them block pricing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelDiagnostics {
    /// `V` stays strictly inside `(v_min, v_max)` (given an interior `V_0`).
    pub boundary_nonattainment: bool,
    /// `theta == v_max`: the constant-volatility corner of the model.
    pub theta_at_v_max: bool,
}

impl ModelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kappa: f64,
        theta: f64,
        sigma: f64,
        rho: f64,
        v_min: f64,
        v_max: f64,
        r: f64,
        delta: f64,
    ) -> Result<Self> {
        let all = [kappa, theta, sigma, rho, v_min, v_max, r, delta];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(invalid("params", "all parameters must be finite"));
        }
        if !(kappa > 0.0) {
            return Err(invalid("kappa", format!("must be > 0, got {kappa}")));
        }
        if !(sigma > 0.0) {
            return Err(invalid("sigma", format!("must be > 0, got {sigma}")));
        }
        if rho.abs() > 1.0 {
            return Err(invalid("rho", format!("must lie in [-1, 1], got {rho}")));
        }
        if v_min < 0.0 {
            return Err(invalid("v_min", format!("must be >= 0, got {v_min}")));
        }
        if !(v_max > v_min) {
            return Err(invalid(
                "v_max",
                format!("must exceed v_min = {v_min}, got {v_max}"),
            ));
        }
        if !(theta > v_min && theta <= v_max) {
            return Err(invalid(
                "theta",
                format!("must lie in (v_min, v_max] = ({v_min}, {v_max}], got {theta}"),
            ));
        }
        Ok(ModelParams {
            kappa,
            theta,
            sigma,
            rho,
            v_min,
            v_max,
            r,
            delta,
        })
    }

    /// The parameter block used throughout the numerical examples:
    /// `r = delta = 0, kappa = 0.5, theta = 0.04, sigma = 1, rho = -0.5,
    /// v_min = 1e-4, v_max = 0.08`.
    pub fn reference() -> Self {
        ModelParams::new(0.5, 0.04, 1.0, -0.5, 1e-4, 0.08, 0.0, 0.0).expect("valid")
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn v_min(&self) -> f64 {
        self.v_min
    }
    pub fn v_max(&self) -> f64 {
        self.v_max
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Copy with a different variance support. Revalidates.
    pub fn with_bounds(&self, v_min: f64, v_max: f64) -> Result<Self> {
        ModelParams::new(
            self.kappa, self.theta, self.sigma, self.rho, v_min, v_max, self.r, self.delta,
        )
    }

    /// Copy with a different vol-of-vol. Revalidates.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        ModelParams::new(
            self.kappa, self.theta, sigma, self.rho, self.v_min, self.v_max, self.r, self.delta,
        )
    }

    /// `(sqrt(v_max) - sqrt(v_min))^2`, the normalisation of `Q`.
    pub fn q_denominator(&self) -> f64 {
        let d = self.v_max.sqrt() - self.v_min.sqrt();
        d * d
    }

    /// `Q(v) = (v - v_min)(v_max - v) / (sqrt(v_max) - sqrt(v_min))^2`.
    pub fn q_of_v(&self, v: f64) -> f64 {
        (v - self.v_min) * (self.v_max - v) / self.q_denominator()
    }

    /// Whether the variance process never touches the boundary of its support.
    pub fn boundary_nonattainment(&self) -> bool {
        let lhs = self.sigma * self.sigma * (self.v_max - self.v_min) / self.q_denominator();
        let rhs = 2.0 * self.kappa * (self.v_max - self.theta).min(self.theta - self.v_min);
        lhs <= rhs
    }

    pub fn diagnostics(&self) -> ModelDiagnostics {
        ModelDiagnostics {
            boundary_nonattainment: self.boundary_nonattainment(),
            theta_at_v_max: self.theta == self.v_max,
        }
    }

    /// Drift vector `b(v)` and diffusion matrix `a(v)` of `(V, X)`.
    pub fn drift_and_diffusion(&self, v: f64) -> Result<([f64; 2], [[f64; 2]; 2])> {
        if !(v >= self.v_min && v <= self.v_max) {
            return Err(invalid(
                "v",
                format!("must lie in [{}, {}], got {v}", self.v_min, self.v_max),
            ));
        }
        let q = self.q_of_v(v);
        let b = [self.kappa * (self.theta - v), self.r - self.delta - 0.5 * v];
        let off = self.rho * self.sigma * q;
        let a = [[self.sigma * self.sigma * q, off], [off, v]];
        Ok((b, a))
    }
}

/// Deterministic initial state `(V_0, X_0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub v0: f64,
    pub x0: f64,
}

impl InitialState {
    pub fn new(params: &ModelParams, v0: f64, x0: f64) -> Result<Self> {
        let s = InitialState { v0, x0 };
        s.validate(params)?;
        Ok(s)
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if !self.x0.is_finite() {
            return Err(invalid("x0", "must be finite"));
        }
        if !(self.v0 >= params.v_min() && self.v0 <= params.v_max()) {
            return Err(invalid(
                "v0",
                format!(
                    "must lie in [{}, {}], got {}",
                    params.v_min(),
                    params.v_max(),
                    self.v0
                ),
            ));
        }
        Ok(())
    }

    pub fn spot(&self) -> f64 {
        self.x0.exp()
    }
}
