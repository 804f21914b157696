//! Oracles shared by the integration tests. None of them call the library's
//! own Bessel or derivative code paths.
#![allow(dead_code)]

use matern_info::design::SamplingDesign;
use matern_info::fisher::cov_matrix;
use matern_info::CovarianceParams;
use nalgebra::{DMatrix, Matrix4};

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Trapezoid rule for `int_0^inf g(t) dt` with `g` even and analytic in a strip;
/// the rule then converges geometrically in `1/h`.
fn even_trapezoid<G: Fn(f64) -> f64>(g: G, h: f64) -> f64 {
    let mut sum = 0.5 * g(0.0);
    let mut k = 1;
    loop {
        let term = g(k as f64 * h);
        sum += term;
        if term <= 1e-300_f64.max(1e-18 * sum.abs()) && k > 10 {
            break;
        }
        k += 1;
        assert!(k < 10_000_000, "trapezoid oracle did not terminate");
    }
    h * sum
}

/// `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`.
pub fn bessel_k_oracle(nu: f64, x: f64) -> f64 {
    even_trapezoid(|t| (-x * t.cosh() + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp()), 0.02)
}

/// `dK_nu(x)/dnu = int_0^inf t sinh(nu t) exp(-x cosh t) dt`.
pub fn bessel_k_dnu_oracle(nu: f64, x: f64) -> f64 {
    even_trapezoid(|t| t * (-x * t.cosh() + nu * t).exp() * 0.5 * (1.0 - (-2.0 * nu * t).exp()), 0.02)
}

/// Fisher matrix by finite-difference `Psi_k` and naive dense algebra.
pub fn brute_force_fisher(params: &CovarianceParams, design: &SamplingDesign) -> Matrix4<f64> {
    let base = params.as_array();
    let steps = [1e-6 * base[0], 1e-6, 1e-6 * base[2], 1e-5];
    let derivs: Vec<DMatrix<f64>> = (0..4)
        .map(|k| {
            let mut up = base;
            let mut down = base;
            up[k] += steps[k];
            down[k] -= steps[k];
            let up = cov_matrix(&CovarianceParams::from_array(up).unwrap(), design).unwrap();
            let down = cov_matrix(&CovarianceParams::from_array(down).unwrap(), design).unwrap();
            (up - down) / (2.0 * steps[k])
        })
        .collect();
    let psi = cov_matrix(params, design).unwrap();
    let inv = psi.try_inverse().unwrap();
    let mut m = Matrix4::zeros();
    for k in 0..4 {
        for l in 0..4 {
            let prod = &inv * &derivs[k] * &inv * &derivs[l];
            m[(k, l)] = 0.5 * prod.trace();
        }
    }
    m
}

/// Central difference of a scalar function.
pub fn central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
