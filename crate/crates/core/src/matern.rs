//! Matérn correlation in the range/smoothness parametrization
//!
//! ```text
//! K(r) = 2^{1-nu} / Gamma(nu) * w^nu * K_nu(w),   w = 2 sqrt(nu) r / vartheta
//! ```
//!
//! together with its closed-form derivatives in `vartheta` and `nu`. All
//! evaluations go through log space so that large `w` underflows cleanly and
//! small `w` does not overflow the Bessel factor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specialfun::{bessel_k_dnu_log_scaled, bessel_k_pair_log_scaled, digamma, QuadratureSpec};

/// One of the four covariance parameters, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Sigma2,
    Tau2,
    Vartheta,
    Nu,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::Sigma2, Param::Tau2, Param::Vartheta, Param::Nu];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::Sigma2 => "sigma2",
            Param::Tau2 => "tau2",
            Param::Vartheta => "vartheta",
            Param::Nu => "nu",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigma2" | "sigma" | "variance" => Ok(Param::Sigma2),
            "tau2" | "tau" | "nugget" => Ok(Param::Tau2),
            "vartheta" | "theta" | "range" => Ok(Param::Vartheta),
            "nu" | "smoothness" => Ok(Param::Nu),
            other => Err(Error::config("param", format!("unknown parameter `{other}`"))),
        }
    }
}

/// Covariance parameters `(sigma2, tau2, vartheta, nu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceParams {
    pub sigma2: f64,
    pub tau2: f64,
    pub vartheta: f64,
    pub nu: f64,
}

impl CovarianceParams {
    pub fn new(sigma2: f64, tau2: f64, vartheta: f64, nu: f64) -> Result<Self> {
        let p = Self {
            sigma2,
            tau2,
            vartheta,
            nu,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        if !(ok(self.sigma2) && self.sigma2 > 0.0) {
            return Err(Error::InvalidParams(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        if !(ok(self.tau2) && self.tau2 >= 0.0) {
            return Err(Error::InvalidParams(format!("tau2 must be >= 0, got {}", self.tau2)));
        }
        if !(ok(self.vartheta) && self.vartheta > 0.0) {
            return Err(Error::InvalidParams(format!(
                "vartheta must be > 0, got {}",
                self.vartheta
            )));
        }
        if !(ok(self.nu) && self.nu > 0.0) {
            return Err(Error::InvalidParams(format!("nu must be > 0, got {}", self.nu)));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.sigma2, self.tau2, self.vartheta, self.nu]
    }

    pub fn from_array(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn get(&self, p: Param) -> f64 {
        self.as_array()[p.index()]
    }

    pub fn with(&self, p: Param, value: f64) -> Self {
        let mut v = self.as_array();
        v[p.index()] = value;
        Self {
            sigma2: v[0],
            tau2: v[1],
            vartheta: v[2],
            nu: v[3],
        }
    }

    /// Total variance `sigma2 + tau2`.
    pub fn sill(&self) -> f64 {
        self.sigma2 + self.tau2
    }

    /// `tau2 / (sigma2 + tau2)`.
    pub fn nugget_to_sill(&self) -> f64 {
        self.tau2 / self.sill()
    }

    /// Microergodic combination `sigma2 / vartheta^(2 nu)`.
    pub fn zeta(&self) -> f64 {
        self.sigma2 / self.vartheta.powf(2.0 * self.nu)
    }
}

fn check_corr_args(vartheta: f64, nu: f64, r: f64) -> Result<()> {
    if !(vartheta > 0.0) || !vartheta.is_finite() {
        return Err(Error::Domain {
            what: "range vartheta must be positive",
            value: vartheta,
        });
    }
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain {
            what: "smoothness nu must be positive",
            value: nu,
        });
    }
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Domain {
            what: "distance must be non-negative",
            value: r,
        });
    }
    Ok(())
}

/// Correlation and its two correlation-parameter derivatives at one lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationJet {
    pub value: f64,
    pub d_vartheta: f64,
    pub d_nu: f64,
}

/// Shared pieces for a fixed `(vartheta, nu, r > 0)`.
struct Lag {
    w: f64,
    ln_w_half: f64,
    // ln(2 / Gamma(nu) * (w/2)^nu)
    ln_h: f64,
}

impl Lag {
    fn new(vartheta: f64, nu: f64, r: f64) -> Self {
        let w = 2.0 * nu.sqrt() * r / vartheta;
        let ln_w_half = (0.5 * w).ln();
        let ln_h = std::f64::consts::LN_2 - libm::lgamma(nu) + nu * ln_w_half;
        Self { w, ln_w_half, ln_h }
    }

    fn scaled(&self, ln_scaled: f64) -> f64 {
        (self.ln_h + ln_scaled - self.w).exp()
    }
}

/// Logs of `(e^w K_nu(w), e^w K_{nu-1}(w))`, reusing one recurrence when `nu >= 1`.
fn bessel_nu_and_prev(nu: f64, w: f64) -> Result<(f64, f64)> {
    if nu >= 1.0 {
        let (k_prev, k_nu) = bessel_k_pair_log_scaled(nu - 1.0, w)?;
        Ok((k_nu, k_prev))
    } else {
        let (k_nu, _) = bessel_k_pair_log_scaled(nu, w)?;
        let (k_prev, _) = bessel_k_pair_log_scaled(1.0 - nu, w)?;
        Ok((k_nu, k_prev))
    }
}

/// Matérn correlation at distance `r`. Exactly 1 at `r = 0`.
pub fn matern_corr(vartheta: f64, nu: f64, r: f64) -> Result<f64> {
    check_corr_args(vartheta, nu, r)?;
    if r == 0.0 {
        return Ok(1.0);
    }
    let lag = Lag::new(vartheta, nu, r);
    let (ln_k_nu, _) = bessel_k_pair_log_scaled(nu, lag.w)?;
    Ok(lag.scaled(ln_k_nu).min(1.0))
}

/// `sigma2 * corr(r) + tau2 * [same_location]`.
pub fn matern_cov(params: &CovarianceParams, r: f64, same_location: bool) -> Result<f64> {
    params.validate()?;
    let nugget = if same_location { params.tau2 } else { 0.0 };
    Ok(params.sigma2 * matern_corr(params.vartheta, params.nu, r)? + nugget)
}

/// Derivative of the correlation with respect to the range:
/// `4 nu^{(nu+1)/2} r^{nu+1} / (Gamma(nu) vartheta^{nu+2}) K_{nu-1}(w)`.
pub fn dcorr_dvartheta(vartheta: f64, nu: f64, r: f64) -> Result<f64> {
    check_corr_args(vartheta, nu, r)?;
    if r == 0.0 {
        return Ok(0.0);
    }
    let lag = Lag::new(vartheta, nu, r);
    let (ln_k_prev, _) = bessel_k_pair_log_scaled((nu - 1.0).abs(), lag.w)?;
    Ok(lag.w * lag.scaled(ln_k_prev) / vartheta)
}

/// Derivative of the correlation with respect to the smoothness:
///
/// ```text
/// (ln(w/2) - psi(nu)) K(r) - h(nu) [ w/(2 nu) K_{nu-1}(w) - ∫ t sinh(nu t) e^{-w cosh t} dt ]
/// ```
///
/// with `h(nu) = 2 / Gamma(nu) (w/2)^nu`.
pub fn dcorr_dnu(vartheta: f64, nu: f64, r: f64, spec: &QuadratureSpec) -> Result<f64> {
    Ok(correlation_jet(vartheta, nu, r, spec)?.d_nu)
}

/// Correlation with both derivatives, sharing the Bessel evaluations.
pub fn correlation_jet(vartheta: f64, nu: f64, r: f64, spec: &QuadratureSpec) -> Result<CorrelationJet> {
    check_corr_args(vartheta, nu, r)?;
    if r == 0.0 {
        return Ok(CorrelationJet {
            value: 1.0,
            d_vartheta: 0.0,
            d_nu: 0.0,
        });
    }
    let lag = Lag::new(vartheta, nu, r);
    let (ln_k_nu, ln_k_prev) = bessel_nu_and_prev(nu, lag.w)?;
    let ln_j = bessel_k_dnu_log_scaled(nu, lag.w, ln_k_nu, spec)?;

    let value = lag.scaled(ln_k_nu).min(1.0);
    let h_k_prev = lag.scaled(ln_k_prev);
    let h_j = lag.scaled(ln_j);

    let d_vartheta = lag.w * h_k_prev / vartheta;
    let d_nu = (lag.ln_w_half - digamma(nu)?) * value - lag.w / (2.0 * nu) * h_k_prev + h_j;
    Ok(CorrelationJet {
        value,
        d_vartheta,
        d_nu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specialfun::{bessel_k, bessel_k_dnu_integer};

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn zero_lag_and_exponential_case() {
        assert_eq!(matern_corr(0.2, 0.5, 0.0).unwrap(), 1.0);
        let v = matern_corr(0.2, 0.5, 0.2).unwrap();
        assert!((v - (-(2.0f64).sqrt()).exp()).abs() < 1e-14);
        assert!((v - 0.243_117).abs() < 1e-6);
    }

    #[test]
    fn direct_evaluation_matches() {
        let (vt, nu, r): (f64, f64, f64) = (0.35, 1.5, 0.1);
        let w = 2.0 * nu.sqrt() * r / vt;
        let direct = 2f64.powf(1.0 - nu) / libm::tgamma(nu) * w.powf(nu) * bessel_k(nu, w).unwrap();
        let v = matern_corr(vt, nu, r).unwrap();
        assert!((v - direct).abs() < 1e-14 * direct);
    }

    #[test]
    fn covariance_examples() {
        let p = CovarianceParams::new(1.0, 0.2, 0.2, 0.5).unwrap();
        assert!((matern_cov(&p, 0.0, true).unwrap() - 1.2).abs() < 1e-15);
        let off = matern_cov(&p, 0.2, false).unwrap();
        assert!((off - (-(2.0f64).sqrt()).exp()).abs() < 1e-14);
        let q = CovarianceParams::new(2.0, 0.0, 0.5, 1.0).unwrap();
        let c = matern_cov(&q, 0.3, false).unwrap();
        assert_eq!(c, 2.0 * matern_corr(0.5, 1.0, 0.3).unwrap());
    }

    #[test]
    fn derived_quantities() {
        let p = CovarianceParams::new(1.0, 0.0, 0.3, 0.5).unwrap();
        assert_eq!(p.nugget_to_sill(), 0.0);
        let p = CovarianceParams::new(2.5, 2.5, 0.3, 0.5).unwrap();
        assert_eq!(p.nugget_to_sill(), 0.5);
        assert_eq!(p.sill(), 5.0);
        let p = CovarianceParams::new(2.0, 0.1, 0.5, 1.5).unwrap();
        assert!((p.zeta() - 2.0 / 0.5f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(CovarianceParams::new(0.0, 0.2, 0.2, 0.5).is_err());
        assert!(CovarianceParams::new(1.0, -0.1, 0.2, 0.5).is_err());
        assert!(CovarianceParams::new(1.0, 0.2, 0.0, 0.5).is_err());
        assert!(CovarianceParams::new(1.0, 0.2, 0.2, f64::NAN).is_err());
        assert!(matern_corr(0.2, 0.5, -1e-3).is_err());
        assert!(dcorr_dvartheta(-0.2, 0.5, 0.1).is_err());
    }

    #[test]
    fn derivatives_vanish_at_zero_lag() {
        for &(vt, nu) in &[(0.2, 0.5), (0.05, 0.1), (0.65, 2.7)] {
            assert_eq!(dcorr_dvartheta(vt, nu, 0.0).unwrap(), 0.0);
            assert_eq!(dcorr_dnu(vt, nu, 0.0, &spec()).unwrap(), 0.0);
        }
    }

    #[test]
    fn range_derivative_is_nonnegative() {
        for &r in &[0.01, 0.3, 2.0] {
            assert!(dcorr_dvartheta(0.2, 0.7, r).unwrap() >= 0.0);
        }
    }

    #[test]
    fn smoothness_derivative_matches_integer_order_assembly() {
        // At nu = 2 the order-derivative integral has an exact series.
        let (vt, nu, r): (f64, f64, f64) = (0.5, 2.0, 0.3);
        let w = 2.0 * nu.sqrt() * r / vt;
        let corr = matern_corr(vt, nu, r).unwrap();
        let h = 2.0 / libm::tgamma(nu) * (0.5 * w).powf(nu);
        let j = bessel_k_dnu_integer(2, w).unwrap();
        let expected = ((0.5 * w).ln() - digamma(nu).unwrap()) * corr
            - h * (w / (2.0 * nu) * bessel_k(nu - 1.0, w).unwrap() - j);
        let got = dcorr_dnu(vt, nu, r, &spec()).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected.abs(), "{got} vs {expected}");
    }

    #[test]
    fn jet_agrees_with_single_derivatives() {
        for &(vt, nu, r) in &[(0.2, 0.5, 0.1), (0.35, 1.5, 0.2), (0.1, 0.8, 0.05)] {
            let jet = correlation_jet(vt, nu, r, &spec()).unwrap();
            assert_eq!(jet.value, matern_corr(vt, nu, r).unwrap());
            let d = dcorr_dvartheta(vt, nu, r).unwrap();
            assert!((jet.d_vartheta - d).abs() <= 1e-14 * d.abs());
        }
    }

    #[test]
    fn param_names_round_trip() {
        for p in Param::ALL {
            assert_eq!(p.name().parse::<Param>().unwrap(), p);
        }
        assert!("kappa".parse::<Param>().is_err());
    }
}
