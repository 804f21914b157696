//! Special functions needed by the Matérn derivatives: `K_nu(x)` with its
//! argument and order derivatives, and the digamma function.

mod bessel;
mod quadrature;

pub use bessel::{
    bessel_k, bessel_k_dnu, bessel_k_dnu_integer, bessel_k_dx, truncation_point, MIN_DNU_ARGUMENT,
};
pub(crate) use bessel::{bessel_k_dnu_log_scaled, bessel_k_pair_log_scaled};
pub use quadrature::{integrate, QuadResult, QuadratureSpec};

use crate::error::{Error, Result};

/// Digamma function `psi(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            what: "digamma argument must be positive",
            value: x,
        });
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // Bernoulli tail: -sum B_2k / (2k x^2k)
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32_760.0))))));
    Ok(acc + x.ln() - 0.5 / x - tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn digamma_known_values() {
        assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 4e-15);
        assert!((digamma(2.0).unwrap() - (1.0 - EULER_GAMMA)).abs() < 4e-15);
        let half = -EULER_GAMMA - 2.0 * std::f64::consts::LN_2;
        assert!((digamma(0.5).unwrap() - half).abs() < 1e-14);
        assert!(digamma(0.0).is_err());
        assert!(digamma(-2.5).is_err());
    }

    #[test]
    fn digamma_recurrence() {
        for &x in &[0.05, 0.3, 1.7, 9.99, 10.0, 42.0] {
            let lhs = digamma(x + 1.0).unwrap();
            let rhs = digamma(x).unwrap() + 1.0 / x;
            assert!((lhs - rhs).abs() < 1e-13 * rhs.abs().max(1.0), "x={x}");
        }
    }
}
