#![allow(dead_code)]

use jacobi_core::generator::{BasisIndex, GeneratorMatrix};
use jacobi_core::hermite::GaussianWeight;
use jacobi_core::model::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn reference() -> ModelParams {
    ModelParams::reference()
}

/// Second-order central differences, Richardson-extrapolated to fourth order.
fn derivatives<F: Fn(f64, f64) -> f64>(p: &F, v: f64, x: f64, hv: f64, hx: f64) -> [f64; 5] {
    let one = |hv: f64, hx: f64| {
        let c = p(v, x);
        let dv = (p(v + hv, x) - p(v - hv, x)) / (2.0 * hv);
        let dx = (p(v, x + hx) - p(v, x - hx)) / (2.0 * hx);
        let dvv = (p(v + hv, x) - 2.0 * c + p(v - hv, x)) / (hv * hv);
        let dxx = (p(v, x + hx) - 2.0 * c + p(v, x - hx)) / (hx * hx);
        let dvx = (p(v + hv, x + hx) - p(v + hv, x - hx) - p(v - hv, x + hx) + p(v - hv, x - hx))
            / (4.0 * hv * hx);
        [dv, dx, dvv, dxx, dvx]
    };
    let a = one(hv, hx);
    let b = one(hv / 2.0, hx / 2.0);
    let mut out = [0.0; 5];
    for i in 0..5 {
        out[i] = (4.0 * b[i] - a[i]) / 3.0;
    }
    out
}

/// Largest relative mismatch between the columns of `G` and the generator
/// applied by finite differences to each basis polynomial, over random
/// interior points. Errors are relative to the size of the terms summed.
pub fn generator_fd_mismatch(params: &ModelParams, w: &GaussianWeight, order: usize, points: usize, seed: u64) -> f64 {
    let basis = BasisIndex::new(order).unwrap();
    let g = GeneratorMatrix::build(params, w, &basis);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let v = params.v_min() + (params.v_max() - params.v_min()) * rng.gen_range(0.05..0.95);
        let x = w.mu + w.sigma * rng.gen_range(-3.0..3.0);
        let (b, a) = params.drift_and_diffusion(v).unwrap();
        let at = basis.evaluate(w, v, x);
        for (j, &(m, n)) in basis.pairs().iter().enumerate() {
            let p = |vv: f64, xx: f64| vv.powi(m as i32) * w.hermite(n, xx);
            let d = derivatives(&p, v, x, 1e-3 * v, 1e-3 * w.sigma);
            let fd = b[0] * d[0] + b[1] * d[1] + 0.5 * (a[0][0] * d[2] + a[1][1] * d[3]) + a[0][1] * d[4];
            let mut exact = 0.0;
            let mut scale = 0.0;
            for &(i, gij) in g.matrix().column(j) {
                exact += gij * at[i];
                scale += (gij * at[i]).abs();
            }
            let scale = scale.max(p(v, x).abs()).max(f64::MIN_POSITIVE);
            worst = worst.max((fd - exact).abs() / scale);
        }
    }
    worst
}

/// `<g 1_{[a,b]}, H_n>_w` for `n = 0..=order` by Gauss-Legendre on `[a, b]`.
pub fn gl_coeffs(w: &GaussianWeight, g: impl Fn(f64) -> f64, a: f64, b: f64, points: usize, order: usize) -> Vec<f64> {
    let (x, wq) = jacobi_core::quadrature::gauss_legendre(points, a, b);
    let mut out = vec![0.0; order + 1];
    for (xi, wi) in x.iter().zip(&wq) {
        let h = w.hermite_all(order, *xi);
        let base = wi * g(*xi) * w.pdf(*xi);
        for n in 0..=order {
            out[n] += base * h[n];
        }
    }
    out
}
