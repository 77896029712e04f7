//! Quadrature rules: Gauss-Hermite for the standard normal weight,
//! Gauss-Legendre on intervals, and adaptive Gauss-Kronrod.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::hermite::normalized_hermite_all;

/// Nodes and weights of the `n`-point Gauss-Hermite rule for the standard
/// normal density. Weights sum to one. Nodes are in increasing order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "rule needs at least one point");
    // Golub-Welsch for starting values, then Newton on the normalised
    // polynomial and Christoffel weights w_i = 1 / sum_k h_k(z_i)^2.
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut weights = Vec::with_capacity(n);
    for z in nodes.iter_mut() {
        for _ in 0..4 {
            let h = normalized_hermite_all(n, *z);
            let dz = h[n] / (nf.sqrt() * h[n - 1]);
            *z -= dz;
            if dz.abs() <= 1e-16 * z.abs().max(1.0) {
                break;
            }
        }
        let h = normalized_hermite_all(n - 1, *z);
        weights.push(1.0 / h.iter().map(|v| v * v).sum::<f64>());
    }
    // enforce exact symmetry
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let z = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -z;
        nodes[j] = z;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "rule needs at least one point");
    let mut x = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    let nf = n as f64;
    let m = (n + 1) / 2;
    let xm = 0.5 * (b + a);
    let xl = 0.5 * (b - a);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        x[i] = xm - xl * z;
        x[n - 1 - i] = xm + xl * z;
        w[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WEIGHTS[7];
    let mut gauss = fc * G7_WEIGHTS[3];
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate is below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    let (i0, e0) = gk15(&f, a, b);
    let mut segs = vec![(a, b, i0, e0)];
    loop {
        let total: f64 = segs.iter().map(|s| s.2).sum();
        let err: f64 = segs.iter().map(|s| s.3).sum();
        if !total.is_finite() {
            return Err(Error::IntegrationFailure("non-finite integrand".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if segs.len() >= MAX_INTERVALS {
            return Err(Error::IntegrationFailure(format!(
                "error estimate {err:e} above tolerance after {MAX_INTERVALS} subintervals"
            )));
        }
        let (idx, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = segs.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (il, el) = gk15(&f, lo, mid);
        let (ir, er) = gk15(&f, mid, hi);
        segs.push((lo, mid, il, el));
        segs.push((mid, hi, ir, er));
    }
}

/// Tensor product of a one-dimensional rule in `dim` dimensions.
/// Returns points (row-major, `dim` coordinates each) and product weights.
///
/// Each product weight is formed from its factors sorted in ascending order,
/// so permuted points carry bit-identical weights.
pub fn tensor_rule(nodes: &[f64], weights: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = nodes.len();
    let total = n.pow(dim as u32);
    let mut points = Vec::with_capacity(total * dim);
    let mut prod_w = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    let mut factors = vec![0.0f64; dim];
    for _ in 0..total {
        for d in 0..dim {
            points.push(nodes[idx[d]]);
            factors[d] = weights[idx[d]];
        }
        factors.sort_by(f64::total_cmp);
        prod_w.push(factors.iter().product());
        // odometer, last coordinate fastest
        for d in (0..dim).rev() {
            idx[d] += 1;
            if idx[d] < n {
                break;
            }
            idx[d] = 0;
        }
    }
    (points, prod_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_moments() {
        for n in [1usize, 2, 5, 20, 200] {
            let (x, w) = gauss_hermite(n);
            let s: f64 = w.iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "n={n} sum={s}");
            // E[Z^2] = 1, E[Z^4] = 3 are exact for n >= 3
            if n >= 3 {
                let m2: f64 = x.iter().zip(&w).map(|(a, b)| a * a * b).sum();
                let m4: f64 = x.iter().zip(&w).map(|(a, b)| a.powi(4) * b).sum();
                assert!((m2 - 1.0).abs() < 1e-12);
                assert!((m4 - 3.0).abs() < 1e-11);
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn hermite_rule_integrates_exponential() {
        let (x, w) = gauss_hermite(60);
        let v: f64 = x.iter().zip(&w).map(|(a, b)| (0.7 * a).exp() * b).sum();
        assert!((v - (0.245f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn legendre_rule() {
        let (x, w) = gauss_legendre(200, -1.0, 2.0);
        let v: f64 = x.iter().zip(&w).map(|(a, b)| a.exp() * b).sum();
        assert!((v - (2f64.exp() - (-1f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn adaptive_gk() {
        let v = integrate_adaptive(|x| x.sqrt(), 0.0, 1.0, 1e-12, 0.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-11);
        let v = integrate_adaptive(|x| (-x * x).exp(), -10.0, 10.0, 1e-13, 0.0).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tensor_rule_shapes() {
        let (x, w) = gauss_hermite(3);
        let (p, pw) = tensor_rule(&x, &w, 2);
        assert_eq!(p.len(), 18);
        assert_eq!(pw.len(), 9);
        assert!((pw.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(&p[0..2], &[x[0], x[0]]);
        assert_eq!(&p[2..4], &[x[0], x[1]]);
    }
}
