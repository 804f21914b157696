//! Modified Bessel function of the second kind for real order.
//!
//! Values come from Temme's series for `x < 2` and Steed's continued fraction
//! otherwise, both evaluated at a reduced order `|mu| <= 1/2` and carried to
//! the requested order by forward recurrence (stable for `K`). The order
//! derivative is the integral
//!
//! ```text
//! dK_nu(x)/dnu = ∫_0^∞ t exp(-x cosh t) sinh(nu t) dt
//! ```
//!
//! evaluated by adaptive Gauss–Kronrod quadrature on a truncated interval.

use std::f64::consts::PI;

use super::quadrature::{integrate, QuadratureSpec};
use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Log-integrand level treated as zero when truncating the order-derivative integral.
const UNDERFLOW_LOG: f64 = 745.0;
const RENORMALIZE_ABOVE: f64 = 1e250;

/// Below this argument the order-derivative integral is flagged as unreliable.
pub const MIN_DNU_ARGUMENT: f64 = 1e-6;

// Taylor coefficients of 1/Gamma(1 + z) = sum_k RGAMMA[k] z^k.
const RGAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// Returns `(gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu))` for `|mu| <= 1/2`,
/// with `gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)` and
/// `gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2` free of cancellation.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mu2 = mu * mu;
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in (0..RGAMMA.len()).rev() {
        if k % 2 == 1 {
            odd = odd * mu2 + RGAMMA[k];
        } else {
            even = even * mu2 + RGAMMA[k];
        }
    }
    // odd = sum_j RGAMMA[2j+1] mu^{2j}, even = sum_j RGAMMA[2j] mu^{2j}
    let gam1 = -odd;
    let gam2 = even;
    (gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1)
}

/// `(e^x K_nu(x), e^x K_{nu+1}(x))` for `nu >= 0`, `x > 0`.
pub(crate) fn bessel_k_pair_scaled(nu: f64, x: f64) -> Result<(f64, f64)> {
    let (k, k1, ln_scale) = pair_with_scale(nu, x);
    let factor = ln_scale.exp();
    let (k, k1) = (k * factor, k1 * factor);
    if !k.is_finite() || !k1.is_finite() {
        return Err(Error::Overflow { nu, x });
    }
    Ok((k, k1))
}

/// `(ln(e^x K_nu(x)), ln(e^x K_{nu+1}(x)))`, finite for any order.
pub(crate) fn bessel_k_pair_log_scaled(nu: f64, x: f64) -> Result<(f64, f64)> {
    let (k, k1, ln_scale) = pair_with_scale(nu, x);
    if !(k > 0.0) || !(k1 > 0.0) || !k.is_finite() || !k1.is_finite() {
        return Err(Error::Overflow { nu, x });
    }
    Ok((k.ln() + ln_scale, k1.ln() + ln_scale))
}

/// Scaled pair as mantissas times `exp(ln_scale)`.
fn pair_with_scale(nu: f64, x: f64) -> (f64, f64, f64) {
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let mu2 = mu * mu;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;

    let (mut k_mu, mut k_mu1) = if x < 2.0 {
        let x2 = 0.5 * x;
        let pimu = PI * mu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        for i in 1..=MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu2);
            c *= dd / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        let scale = x.exp();
        (sum * scale, sum1 * xi2 * scale)
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - mu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 2..=MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        h *= a1;
        let k = (PI / (2.0 * x)).sqrt() / s;
        (k, k * (mu + x + 0.5 - h) * xi)
    };

    let mut ln_scale = 0.0;
    for i in 1..=(nl as usize) {
        let next = (mu + i as f64) * xi2 * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
        if k_mu1 > RENORMALIZE_ABOVE {
            k_mu /= RENORMALIZE_ABOVE;
            k_mu1 /= RENORMALIZE_ABOVE;
            ln_scale += RENORMALIZE_ABOVE.ln();
        }
    }
    (k_mu, k_mu1, ln_scale)
}

fn check_argument(x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            what: "Bessel argument must be positive and finite",
            value: x,
        });
    }
    Ok(())
}

fn check_order(nu: f64) -> Result<f64> {
    if !nu.is_finite() {
        return Err(Error::Domain {
            what: "Bessel order must be finite",
            value: nu,
        });
    }
    Ok(nu.abs())
}

/// `K_nu(x)` for real order. Negative orders fold through `K_{-nu} = K_nu`.
///
/// Results below the smallest subnormal flush to zero; results above
/// `f64::MAX` are reported as [`Error::Overflow`].
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    check_argument(x)?;
    let nu = check_order(nu)?;
    let (k, _) = bessel_k_pair_scaled(nu, x)?;
    let value = k * (-x).exp();
    if !value.is_finite() {
        return Err(Error::Overflow { nu, x });
    }
    Ok(value)
}

/// `dK_nu(x)/dx = -(K_{nu-1}(x) + (nu/x) K_nu(x))`.
pub fn bessel_k_dx(nu: f64, x: f64) -> Result<f64> {
    check_argument(x)?;
    let nu = check_order(nu)?;
    let k_nu = bessel_k(nu, x)?;
    let k_prev = bessel_k(nu - 1.0, x)?;
    Ok(-(k_prev + nu / x * k_nu))
}

/// Smallest `t` past the integrand peak where
/// `x (cosh t - 1) - nu t - ln t >= 745`, i.e. where the `e^x`-scaled
/// order-derivative integrand falls below double-precision underflow.
pub fn truncation_point(nu: f64, x: f64) -> f64 {
    let half_cosh_m1 = |t: f64| {
        let s = (0.5 * t).sinh();
        2.0 * s * s
    };
    let phi = |t: f64| x * half_cosh_m1(t) - nu * t - t.ln() - UNDERFLOW_LOG;
    let dphi = |t: f64| x * t.sinh() - nu - 1.0 / t;

    let mut t = 1.0;
    while phi(t) < 0.0 || dphi(t) <= 0.0 {
        t *= 2.0;
        if t > 1e6 {
            return t;
        }
    }
    // phi is convex, so Newton from the right converges monotonically.
    for _ in 0..100 {
        let step = phi(t) / dphi(t);
        t -= step;
        if step.abs() <= 1e-10 * t {
            break;
        }
    }
    t
}

/// `e^x dK_nu(x)/dnu` by quadrature, no small-argument guard.
pub(crate) fn bessel_k_dnu_scaled(nu: f64, x: f64, spec: &QuadratureSpec) -> Result<f64> {
    dnu_integral(nu, x, 0.0, spec)
}

/// `ln(e^x dK_nu(x)/dnu) - shift`, with the integrand scaled by
/// `e^{-shift}`; `shift >= 0` should be near the log of the result.
/// Returns `-inf` when the integral vanishes.
pub(crate) fn bessel_k_dnu_log_scaled(nu: f64, x: f64, shift: f64, spec: &QuadratureSpec) -> Result<f64> {
    let v = dnu_integral(nu, x, shift.max(0.0), spec)?;
    if !v.is_finite() {
        return Err(Error::Overflow { nu, x });
    }
    Ok(v.ln() + shift.max(0.0))
}

/// Maximizer of `nu t - x cosh t + ln t`, the root of `x sinh t = nu + 1/t`.
fn integrand_peak(nu: f64, x: f64) -> f64 {
    let f = |t: f64| x * t.sinh() - nu - 1.0 / t;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn dnu_integral(nu: f64, x: f64, shift: f64, spec: &QuadratureSpec) -> Result<f64> {
    let t_max = truncation_point(nu, x);
    let integrand = |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        let s = (0.5 * t).sinh();
        let c = 2.0 * x * s * s + shift;
        0.5 * t * ((nu * t - c).exp() - (-nu * t - c).exp())
    };
    // Splitting at the peak keeps narrow peaks at large orders visible.
    let peak = integrand_peak(nu, x);
    if peak <= 0.0 || peak >= t_max {
        return Ok(integrate(integrand, 0.0, t_max, spec)?.value);
    }
    Ok(integrate(integrand, 0.0, peak, spec)?.value + integrate(integrand, peak, t_max, spec)?.value)
}

/// Order derivative `dK_nu(x)/dnu` for non-integer (or integer) `nu > 0`.
///
/// Arguments below [`MIN_DNU_ARGUMENT`] are rejected with
/// [`Error::PrecisionLoss`].
pub fn bessel_k_dnu(nu: f64, x: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_argument(x)?;
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain {
            what: "order must be positive for the order derivative",
            value: nu,
        });
    }
    if x < MIN_DNU_ARGUMENT {
        return Err(Error::PrecisionLoss { x });
    }
    let scaled = bessel_k_dnu_scaled(nu, x, spec)?;
    let value = scaled * (-x).exp();
    if !value.is_finite() {
        return Err(Error::Overflow { nu, x });
    }
    Ok(value)
}

/// Exact order derivative at integer order `m`:
/// `(m!/2) sum_{j<m} (x/2)^{j-m} K_j(x) / (j! (m-j))`.
pub fn bessel_k_dnu_integer(m: u32, x: f64) -> Result<f64> {
    check_argument(x)?;
    let half = 0.5 * x;
    let mut m_fact = 1.0;
    for k in 2..=m {
        m_fact *= k as f64;
    }
    let mut sum = 0.0;
    let mut j_fact = 1.0;
    for j in 0..m {
        if j > 0 {
            j_fact *= j as f64;
        }
        let term = half.powi(j as i32 - m as i32) * bessel_k(j as f64, x)? / (j_fact * (m - j) as f64);
        sum += term;
    }
    let value = 0.5 * m_fact * sum;
    if !value.is_finite() {
        return Err(Error::Overflow { nu: m as f64, x });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::tgamma as gamma;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn temme_gammas_match_gamma_function() {
        for &mu in &[-0.5, -0.31, -1e-9, 0.0, 0.2, 0.49, 0.5] {
            let (g1, g2, gp, gm) = temme_gammas(mu);
            assert!((gp - 1.0 / gamma(1.0 + mu)).abs() < 1e-14, "mu={mu}");
            assert!((gm - 1.0 / gamma(1.0 - mu)).abs() < 1e-14, "mu={mu}");
            if mu.abs() > 1e-3 {
                let direct = (1.0 / gamma(1.0 - mu) - 1.0 / gamma(1.0 + mu)) / (2.0 * mu);
                assert!((g1 - direct).abs() < 1e-12, "mu={mu}");
            }
            assert!((g2 - 0.5 * (gp + gm)).abs() < 1e-15);
        }
    }

    #[test]
    fn half_integer_closed_form() {
        let v = bessel_k(0.5, 1.0).unwrap();
        let exact = (PI / 2.0).sqrt() * (-1.0f64).exp();
        assert!(rel(v, exact) < 1e-14);
        assert!((v - 0.461_068).abs() < 1e-6);

        let v = bessel_k(0.5, 50.0).unwrap();
        let exact = (PI / 100.0).sqrt() * (-50.0f64).exp();
        assert!(rel(v, exact) < 1e-14);

        // K_{3/2}(x) = sqrt(pi/2x) e^-x (1 + 1/x)
        for &x in &[0.3, 1.9, 2.0, 7.5] {
            let exact = (PI / (2.0 * x)).sqrt() * (-x).exp() * (1.0 + 1.0 / x);
            assert!(rel(bessel_k(1.5, x).unwrap(), exact) < 1e-14, "x={x}");
        }
    }

    #[test]
    fn known_integer_orders() {
        // Abramowitz & Stegun table 9.8.
        assert!(rel(bessel_k(0.0, 1.0).unwrap(), 0.421_024_438_240_708_3) < 1e-14);
        assert!(rel(bessel_k(1.0, 1.0).unwrap(), 0.601_907_230_197_234_6) < 1e-14);
        assert!(rel(bessel_k(0.0, 2.0).unwrap(), 0.113_893_872_749_533_4) < 1e-14);
        assert!(rel(bessel_k(1.0, 0.1).unwrap(), 9.853_844_780_870_606) < 1e-13);
    }

    #[test]
    fn negative_order_folds() {
        assert_eq!(bessel_k(-0.7, 1.3).unwrap(), bessel_k(0.7, 1.3).unwrap());
    }

    #[test]
    fn domain_and_overflow_errors() {
        assert!(matches!(bessel_k(1.0, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(bessel_k(1.0, -1.0), Err(Error::Domain { .. })));
        assert!(matches!(bessel_k(200.0, 1e-3), Err(Error::Overflow { .. })));
        assert_eq!(bessel_k(0.5, 800.0).unwrap(), 0.0);
    }

    #[test]
    fn derivative_in_x_closed_forms() {
        let v = bessel_k_dx(0.5, 1.0).unwrap();
        let exact = -(PI / 2.0).sqrt() * (-1.0f64).exp() * 1.5;
        assert!(rel(v, exact) < 1e-14);
        assert!((v + 0.691_602).abs() < 1e-6);

        let v = bessel_k_dx(2.0, 0.5).unwrap();
        let composed = -(bessel_k(1.0, 0.5).unwrap() + 4.0 * bessel_k(2.0, 0.5).unwrap());
        assert!(rel(v, composed) < 1e-15);
    }

    #[test]
    fn integer_order_derivative_series() {
        assert_eq!(bessel_k_dnu_integer(0, 1.0).unwrap(), 0.0);
        let k0 = bessel_k(0.0, 1.0).unwrap();
        let k1 = bessel_k(1.0, 1.0).unwrap();
        assert!(rel(bessel_k_dnu_integer(1, 1.0).unwrap(), k0) < 1e-15);
        assert!(rel(bessel_k_dnu_integer(2, 1.0).unwrap(), 2.0 * k0 + 2.0 * k1) < 1e-15);
    }

    #[test]
    fn order_derivative_edge_cases() {
        let spec = QuadratureSpec::default();
        assert!(bessel_k_dnu(1e-12, 1.0, &spec).unwrap().abs() < 1e-11);
        let v = bessel_k_dnu(1.0, 1.0, &spec).unwrap();
        assert!((v - 0.421_024).abs() < 1e-6);
        assert!(matches!(bessel_k_dnu(0.0, 1.0, &spec), Err(Error::Domain { .. })));
        assert!(matches!(bessel_k_dnu(1.0, 0.0, &spec), Err(Error::Domain { .. })));
        assert!(matches!(bessel_k_dnu(1.0, 1e-7, &spec), Err(Error::PrecisionLoss { .. })));
    }

    #[test]
    fn truncation_point_bounds_tail() {
        for &(nu, x) in &[(0.1, 0.01), (1.5, 1.0), (3.0, 20.0), (0.5, 500.0)] {
            let t = truncation_point(nu, x);
            let log_g = t.ln() + nu * t - x * (t.cosh() - 1.0);
            assert!(log_g <= -UNDERFLOW_LOG + 1e-6, "nu={nu} x={x} t={t} log_g={log_g}");
            assert!(x * t.sinh() > nu + 1.0 / t, "past the peak");
        }
    }
}
