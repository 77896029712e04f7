//! Hermite polynomials (probabilists' convention) and Gaussian helpers.

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{invalid, Error, Result};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard Hermite polynomial `He_n(x)` by the three-term recursion.
pub fn std_hermite(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 1..=n {
        let next = x * cur - (k - 1) as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `He_0(x), ..., He_n(x)`.
pub fn std_hermite_all(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 2..=n {
        let v = x * out[k - 1] - (k - 1) as f64 * out[k - 2];
        out.push(v);
    }
    out
}

/// `He_k(z) / sqrt(k!)` for `k = 0..=n`.
///
/// Runs the recursion on the normalised polynomials so no factorial is ever
/// formed.
pub fn normalized_hermite_all(n: usize, z: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(z);
    }
    for k in 2..=n {
        let kf = k as f64;
        let v = (z * out[k - 1] - (kf - 1.0).sqrt() * out[k - 2]) / kf.sqrt();
        out.push(v);
    }
    out
}

/// Standard normal density.
pub fn gaussian_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function.
pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Normal density with mean `mu` and variance `var`, evaluated at `x`.
pub fn normal_pdf(x: f64, mu: f64, var: f64) -> f64 {
    let d = x - mu;
    (-0.5 * d * d / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Gaussian weight density `w(x)` of mean `mu` and standard deviation `sigma`.
///
/// The orthonormal basis of `L^2_w` is `H_n(x) = He_n((x - mu)/sigma) / sqrt(n!)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianWeight {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianWeight {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(invalid("mu_w", "must be finite"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma_w", format!("must be > 0, got {sigma}")));
        }
        Ok(GaussianWeight { mu, sigma })
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mu) / self.sigma
    }

    /// `H_n(x)` for this weight.
    pub fn hermite(&self, n: usize, x: f64) -> f64 {
        *normalized_hermite_all(n, self.standardize(x))
            .last()
            .expect("non-empty")
    }

    /// `H_0(x), ..., H_n(x)` for this weight.
    pub fn hermite_all(&self, n: usize, x: f64) -> Vec<f64> {
        normalized_hermite_all(n, self.standardize(x))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        gaussian_pdf(self.standardize(x)) / self.sigma
    }

    /// Checks square integrability of the likelihood ratio over a segment of
    /// length `dt`: `sigma_w^2 > v_max * dt / 2`.
    pub fn check_segment(&self, v_max: f64, dt: f64) -> Result<()> {
        let bound = 0.5 * v_max * dt;
        if self.variance() > bound {
            Ok(())
        } else {
            Err(Error::WeightTooNarrow {
                sigma_w_sq: self.variance(),
                bound,
            })
        }
    }

    /// Equality of weights up to `1e-12` in both parameters.
    pub fn approx_eq(&self, other: &GaussianWeight) -> bool {
        (self.mu - other.mu).abs() <= 1e-12 && (self.sigma - other.sigma).abs() <= 1e-12
    }
}

/// `H_n(x)` for weight `w`.
pub fn gen_hermite(w: &GaussianWeight, n: usize, x: f64) -> f64 {
    w.hermite(n, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_hermite;

    #[test]
    fn low_orders() {
        assert_eq!(std_hermite(0, 3.7), 1.0);
        for x in [-2.0, 0.3, 1.7] {
            assert!((std_hermite(2, x) - (x * x - 1.0)).abs() < 1e-14);
        }
        assert_eq!(std_hermite(3, 2.0), 2.0);
    }

    #[test]
    fn generalized_values() {
        let w = GaussianWeight::new(0.3, 0.7).unwrap();
        assert_eq!(w.hermite(0, 12.0), 1.0);
        assert_eq!(w.hermite(1, 0.3), 0.0);
        let unit = GaussianWeight::new(0.0, 1.0).unwrap();
        assert!((gen_hermite(&unit, 2, 2.0) - 3.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn normalised_matches_factorial_form() {
        let mut fact = 1.0f64;
        for n in 0..25usize {
            if n > 0 {
                fact *= n as f64;
            }
            let z = 1.3;
            let a = normalized_hermite_all(n, z)[n];
            let b = std_hermite(n, z) / fact.sqrt();
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "n={n}");
        }
    }

    #[test]
    fn gaussian_helpers() {
        assert_eq!(gaussian_cdf(0.0), 0.5);
        assert!((gaussian_pdf(0.0) - 0.3989422804014327).abs() < 1e-16);
        for x in [0.1, 0.5, 1.0, 2.5, 5.0, 8.0] {
            assert!((gaussian_cdf(-x) - (1.0 - gaussian_cdf(x))).abs() < 1e-15);
        }
        // reference values
        assert!((gaussian_cdf(1.0) - 0.8413447460685429).abs() < 1e-14);
        assert!((gaussian_cdf(-5.0) - 2.866515718791939e-7).abs() < 1e-14 * 2.9e-7);
    }

    #[test]
    fn orthonormality_under_quadrature() {
        let (z, wq) = gauss_hermite(200);
        for w in [
            GaussianWeight::new(0.0, 1.0).unwrap(),
            GaussianWeight::new(-0.3, 0.05).unwrap(),
            GaussianWeight::new(2.0, 3.0).unwrap(),
        ] {
            let mut gram = vec![[0.0f64; 21]; 21];
            for (zi, wi) in z.iter().zip(&wq) {
                let x = w.mu + w.sigma * zi;
                let h = w.hermite_all(20, x);
                for m in 0..=20 {
                    for n in 0..=20 {
                        gram[m][n] += wi * h[m] * h[n];
                    }
                }
            }
            for m in 0..=20 {
                for n in 0..=20 {
                    let target = if m == n { 1.0 } else { 0.0 };
                    assert!((gram[m][n] - target).abs() < 1e-10, "{m},{n}");
                }
            }
        }
    }

    #[test]
    fn derivative_identity() {
        let w = GaussianWeight::new(0.1, 0.4).unwrap();
        for n in 1..=15 {
            for x in [-0.7, 0.05, 0.9] {
                let h = 1e-5;
                let fd = (w.hermite(n, x + h) - w.hermite(n, x - h)) / (2.0 * h);
                let exact = (n as f64).sqrt() / w.sigma * w.hermite(n - 1, x);
                assert!(
                    (fd - exact).abs() <= 1e-6 * exact.abs().max(1e-3),
                    "n={n} x={x} fd={fd} exact={exact}"
                );
            }
        }
    }

    #[test]
    fn cramer_bound() {
        let mut worst = 0.0f64;
        for i in 0..=400 {
            let z = -10.0 + 20.0 * i as f64 / 400.0;
            let h = normalized_hermite_all(60, z);
            let damp = (-z * z / 4.0).exp();
            for v in h {
                worst = worst.max(damp * v.abs());
            }
        }
        // Cramer's constant is about 1.0865
        assert!(worst <= 1.09, "worst {worst}");
    }

    #[test]
    fn segment_constraint() {
        let w = GaussianWeight::new(0.0, 0.1).unwrap();
        assert!(w.check_segment(0.08, 0.2).is_ok());
        assert!(w.check_segment(0.08, 0.26).is_err());
        assert!(GaussianWeight::new(0.0, 0.0).is_err());
    }
}
