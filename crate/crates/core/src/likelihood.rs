//! Gaussian log-likelihood of `z = F beta + Y + eps` with Matérn `Y` and
//! nugget `eps`, maximum likelihood with parameter-fixing masks, profile
//! log-likelihoods and finite-difference observed information.
//!
//! The mean is always concentrated out by generalized least squares, so every
//! optimization runs over the covariance parameters only, on the log scale.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::SamplingDesign;
use crate::error::{Error, Result};
use crate::fisher::{cov_matrix, factor};
use crate::matern::{CovarianceParams, Param};
use crate::optim::{fd_gradient, fd_hessian, nelder_mead, SimplexOptions};
use crate::par;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Default log-scale step for [`observed_info_fd`].
pub const DEFAULT_LOG_STEP: f64 = 1e-4;

/// Largest smoothness a fit may reach when `nu` is free. The likelihood is
/// nearly flat in `nu` beyond it, and Bessel costs grow linearly in `nu`.
pub const MAX_FREE_NU: f64 = 100.0;

/// Locations, covariates `F` (n×p, first column ones by convention) and observations.
#[derive(Debug, Clone)]
pub struct GeoDataset {
    pub design: SamplingDesign,
    pub covariates: DMatrix<f64>,
    pub z: DVector<f64>,
}

impl GeoDataset {
    pub fn new(design: SamplingDesign, covariates: DMatrix<f64>, z: DVector<f64>) -> Result<Self> {
        let data = Self {
            design,
            covariates,
            z,
        };
        data.validate()?;
        Ok(data)
    }

    /// Constant-mean dataset.
    pub fn intercept_only(design: SamplingDesign, z: DVector<f64>) -> Result<Self> {
        let n = design.len();
        Self::new(design, DMatrix::from_element(n, 1, 1.0), z)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.design.len();
        if self.z.len() != n || self.covariates.nrows() != n {
            return Err(Error::InvalidData(format!(
                "{} locations, {} observations, {} covariate rows",
                n,
                self.z.len(),
                self.covariates.nrows()
            )));
        }
        if self.z.iter().chain(self.covariates.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite observation or covariate".into()));
        }
        let p = self.covariates.ncols();
        if p == 0 || p > n {
            return Err(Error::RankDeficient);
        }
        let sv = self.covariates.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let tol = n.max(p) as f64 * f64::EPSILON * smax;
        if !(smax > 0.0) || sv.iter().any(|&s| s <= tol) {
            return Err(Error::RankDeficient);
        }
        Ok(())
    }

    /// Copy with coordinates divided by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            design: crate::design::scale_design(&self.design, factor),
            covariates: self.covariates.clone(),
            z: self.z.clone(),
        }
    }
}

struct Whitened {
    /// `L^{-1} F`
    f: DMatrix<f64>,
    /// `L^{-1} z`
    z: DVector<f64>,
    log_det: f64,
}

fn whiten(params: &CovarianceParams, data: &GeoDataset) -> Result<Whitened> {
    let psi = cov_matrix(params, &data.design)?;
    let chol = factor(psi, &data.design)?;
    let l = chol.l();
    let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let f = l
        .solve_lower_triangular(&data.covariates)
        .ok_or(Error::NotPositiveDefinite { pair: None })?;
    let z = l
        .solve_lower_triangular(&data.z)
        .ok_or(Error::NotPositiveDefinite { pair: None })?;
    Ok(Whitened { f, z, log_det })
}

fn gaussian_loglik(n: usize, log_det: f64, quad: f64) -> f64 {
    -0.5 * (n as f64 * LN_2PI + log_det + quad)
}

/// `-1/2 [n log 2pi + log det Psi + (z - F beta)' Psi^{-1} (z - F beta)]`.
pub fn loglik(params: &CovarianceParams, beta: &DVector<f64>, data: &GeoDataset) -> Result<f64> {
    if beta.len() != data.n_covariates() {
        return Err(Error::InvalidData(format!(
            "beta has {} entries for {} covariates",
            beta.len(),
            data.n_covariates()
        )));
    }
    let w = whiten(params, data)?;
    let r = &w.z - &w.f * beta;
    Ok(gaussian_loglik(data.len(), w.log_det, r.norm_squared()))
}

/// GLS estimate `(F' Psi^{-1} F)^{-1} F' Psi^{-1} z` and the log-likelihood there.
pub fn profile_beta(params: &CovarianceParams, data: &GeoDataset) -> Result<(DVector<f64>, f64)> {
    let w = whiten(params, data)?;
    let gram = w.f.tr_mul(&w.f);
    let rhs = w.f.tr_mul(&w.z);
    let beta = gram.cholesky().ok_or(Error::RankDeficient)?.solve(&rhs);
    let r = &w.z - &w.f * &beta;
    Ok((beta, gaussian_loglik(data.len(), w.log_det, r.norm_squared())))
}

/// `tau2 / (sigma2 + tau2)`.
pub fn nugget_to_sill(params: &CovarianceParams) -> f64 {
    params.nugget_to_sill()
}

/// Which of `(sigma2, tau2, vartheta, nu)` are held at their initial values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedMask(pub [bool; 4]);

impl FixedMask {
    pub fn none() -> Self {
        Self([false; 4])
    }

    pub fn with(mut self, p: Param) -> Self {
        self.0[p.index()] = true;
        self
    }

    pub fn is_fixed(&self, p: Param) -> bool {
        self.0[p.index()]
    }

    pub fn free(&self) -> Vec<Param> {
        Param::ALL.into_iter().filter(|p| !self.is_fixed(*p)).collect()
    }

    pub fn fixed(&self) -> Vec<Param> {
        Param::ALL.into_iter().filter(|p| self.is_fixed(*p)).collect()
    }
}

/// Optimizer settings for [`mle_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub simplex: SimplexOptions,
    /// Starts tried in order: the initial value, range halved, smoothness doubled.
    pub starts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            simplex: SimplexOptions::default(),
            starts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params_hat: CovarianceParams,
    pub beta_hat: Vec<f64>,
    pub loglik: f64,
    pub fixed_mask: FixedMask,
    pub converged: bool,
    pub iterations: usize,
}

/// Negative β-profiled log-likelihood as a function of log free parameters.
struct Objective<'a> {
    data: &'a GeoDataset,
    base: CovarianceParams,
    free: Vec<Param>,
}

impl Objective<'_> {
    fn params(&self, u: &[f64]) -> Result<CovarianceParams> {
        let mut v = self.base.as_array();
        for (p, &ui) in self.free.iter().zip(u) {
            v[p.index()] = ui.exp();
        }
        CovarianceParams::from_array(v)
    }

    fn coords(&self, params: &CovarianceParams) -> Vec<f64> {
        self.free.iter().map(|&p| params.get(p).ln()).collect()
    }

    fn eval(&self, u: &[f64]) -> Result<f64> {
        let params = self.params(u)?;
        if params.nu > MAX_FREE_NU && self.free.contains(&Param::Nu) {
            return Err(Error::InvalidParams(format!(
                "smoothness {} exceeds the fitting limit {MAX_FREE_NU}",
                params.nu
            )));
        }
        Ok(-profile_beta(&params, self.data)?.1)
    }
}

fn start_points(init: &CovarianceParams, mask: &FixedMask, count: usize) -> Vec<CovarianceParams> {
    let mut starts = vec![*init];
    if !mask.is_fixed(Param::Vartheta) {
        starts.push(init.with(Param::Vartheta, 0.5 * init.vartheta));
    }
    if !mask.is_fixed(Param::Nu) {
        starts.push(init.with(Param::Nu, (2.0 * init.nu).min(MAX_FREE_NU)));
    }
    starts.truncate(count.max(1));
    starts
}

/// Maximum likelihood over the free parameters, starting from `init`.
///
/// `tau2 = 0` is accepted only when the nugget is fixed.
pub fn mle_fit(
    data: &GeoDataset,
    init: &CovarianceParams,
    fixed_mask: FixedMask,
    options: &FitOptions,
) -> Result<FitResult> {
    init.validate()?;
    data.validate()?;
    if init.nu > MAX_FREE_NU && !fixed_mask.is_fixed(Param::Nu) {
        return Err(Error::InvalidParams(format!(
            "initial smoothness {} exceeds the fitting limit {MAX_FREE_NU}",
            init.nu
        )));
    }
    if data.len() <= data.n_covariates() {
        return Err(Error::InvalidData(format!(
            "need more observations than covariates, got n = {}, p = {}",
            data.len(),
            data.n_covariates()
        )));
    }
    if init.tau2 == 0.0 && !fixed_mask.is_fixed(Param::Tau2) {
        return Err(Error::InvalidParams(
            "tau2 = 0 is only allowed when tau2 is fixed".into(),
        ));
    }
    let objective = Objective {
        data,
        base: *init,
        free: fixed_mask.free(),
    };
    let starts = start_points(init, &fixed_mask, options.starts);
    let runs = par::map_ordered(&starts, |start| {
        let u0 = objective.coords(start);
        nelder_mead(|u| objective.eval(u).unwrap_or(f64::INFINITY), &u0, &options.simplex)
    });
    let mut best: Option<crate::optim::SimplexResult> = None;
    let mut iterations = 0;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(r) => {
                iterations += r.iterations;
                let better = match &best {
                    None => true,
                    Some(b) => r.value < b.value,
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                log::debug!("start rejected: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let best = match best {
        Some(b) => b,
        None => return Err(first_err.unwrap_or(Error::NotPositiveDefinite { pair: None })),
    };
    let params_hat = objective.params(&best.x)?;
    let (beta, loglik) = profile_beta(&params_hat, data)?;
    Ok(FitResult {
        params_hat,
        beta_hat: beta.iter().copied().collect(),
        loglik,
        fixed_mask,
        converged: best.converged,
        iterations,
    })
}

/// Central-difference gradient of the negative profiled log-likelihood in
/// the log coordinates of the free parameters.
pub fn profiled_gradient(data: &GeoDataset, params: &CovarianceParams, fixed_mask: FixedMask, step: f64) -> Result<Vec<f64>> {
    let objective = Objective {
        data,
        base: *params,
        free: fixed_mask.free(),
    };
    let u = objective.coords(params);
    fd_gradient(|x| objective.eval(x), &u, &vec![step; u.len()])
}

/// Negative Hessian of the profiled log-likelihood over the free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedInfo {
    pub params: Vec<Param>,
    /// In natural parameters.
    pub matrix: DMatrix<f64>,
    /// In log parameters, as differenced.
    pub log_matrix: DMatrix<f64>,
    /// Log-scale steps, one per free parameter.
    pub step_sizes: Vec<f64>,
    pub positive_definite: bool,
}

impl ObservedInfo {
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.matrix
            .clone()
            .try_inverse()
            .ok_or(Error::SingularInformation { rcond: 0.0 })
    }
}

/// Observed information at `params_hat` by central differences of the
/// negative profiled log-likelihood on the log scale, mapped back to
/// natural parameters with the chain rule (including the gradient term).
pub fn observed_info_fd(
    data: &GeoDataset,
    params_hat: &CovarianceParams,
    fixed_mask: FixedMask,
    steps: Option<&[f64]>,
) -> Result<ObservedInfo> {
    params_hat.validate()?;
    let objective = Objective {
        data,
        base: *params_hat,
        free: fixed_mask.free(),
    };
    let u = objective.coords(params_hat);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(
            "free parameters must be positive for log-scale differencing".into(),
        ));
    }
    let h: Vec<f64> = match steps {
        Some(s) => s.to_vec(),
        None => vec![DEFAULT_LOG_STEP; u.len()],
    };
    let eval = |x: &[f64]| objective.eval(x);
    let log_matrix = fd_hessian(eval, &u, &h)?;
    let grad = fd_gradient(eval, &u, &h)?;
    let theta: Vec<f64> = u.iter().map(|v| v.exp()).collect();
    let k = u.len();
    let matrix = DMatrix::from_fn(k, k, |a, b| {
        let g = if a == b { grad[a] } else { 0.0 };
        (log_matrix[(a, b)] - g) / (theta[a] * theta[b])
    });
    let positive_definite = k == 0 || matrix.clone().cholesky().is_some();
    Ok(ObservedInfo {
        params: objective.free,
        matrix,
        log_matrix,
        step_sizes: h,
        positive_definite,
    })
}

/// One row of a profile log-likelihood table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub values: Vec<f64>,
    pub loglik: f64,
    pub params_hat: Option<CovarianceParams>,
    pub converged: bool,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub which: Vec<Param>,
    pub rows: Vec<ProfileRow>,
    /// Whether the grid box covers a reference maximum, once one is supplied.
    pub contains_mle: Option<bool>,
}

impl ProfileTable {
    /// Row with the largest profiled log-likelihood.
    pub fn best_row(&self) -> Option<&ProfileRow> {
        self.rows
            .iter()
            .filter(|r| r.loglik.is_finite())
            .max_by(|a, b| a.loglik.total_cmp(&b.loglik))
    }

    /// Records whether `mle` lies inside the grid's bounding box.
    pub fn mark_mle(&mut self, mle: &CovarianceParams) {
        let inside = self.which.iter().enumerate().all(|(k, &p)| {
            let (lo, hi) = self
                .rows
                .iter()
                .map(|r| r.values[k])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let v = mle.get(p);
            lo <= v && v <= hi
        });
        self.contains_mle = Some(inside && !self.rows.is_empty());
    }
}

/// Profile log-likelihood over one or two parameters. Each grid point fixes
/// the profiled parameters and maximizes over the remaining free ones,
/// starting from `init`; failures are recorded in the row.
pub fn profile_loglik(
    data: &GeoDataset,
    which: &[Param],
    grid: &[Vec<f64>],
    init: &CovarianceParams,
    fixed_mask: FixedMask,
    options: &FitOptions,
) -> Result<ProfileTable> {
    if which.is_empty() || which.len() > 2 {
        return Err(Error::InvalidParams(format!(
            "profile over one or two parameters, got {}",
            which.len()
        )));
    }
    if which.len() == 2 && which[0] == which[1] {
        return Err(Error::InvalidParams("profiled parameters must differ".into()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParams("profile grid is empty".into()));
    }
    for point in grid {
        if point.len() != which.len() {
            return Err(Error::InvalidParams(format!(
                "grid point {:?} does not match {} profiled parameters",
                point,
                which.len()
            )));
        }
    }
    let mask = which.iter().fold(fixed_mask, |m, &p| m.with(p));
    let rows = par::map_ordered(grid, |point| {
        let start = which
            .iter()
            .zip(point)
            .fold(*init, |acc, (&p, &v)| acc.with(p, v));
        let fit = start
            .validate()
            .and_then(|_| mle_fit(data, &start, mask, options));
        match fit {
            Ok(f) => ProfileRow {
                values: point.clone(),
                loglik: f.loglik,
                params_hat: Some(f.params_hat),
                converged: f.converged,
                status: if f.converged { "ok".into() } else { "not converged".into() },
            },
            Err(e) => ProfileRow {
                values: point.clone(),
                loglik: f64::NAN,
                params_hat: None,
                converged: false,
                status: e.to_string(),
            },
        }
    });
    Ok(ProfileTable {
        which: which.to_vec(),
        rows,
        contains_mle: None,
    })
}

/// Draws `z = F beta + L e` with `L L' = Psi` and standard normal `e`.
pub fn simulate(
    params: &CovarianceParams,
    beta: &DVector<f64>,
    design: &SamplingDesign,
    covariates: &DMatrix<f64>,
    seed: u64,
) -> Result<GeoDataset> {
    if covariates.ncols() != beta.len() {
        return Err(Error::InvalidData(format!(
            "beta has {} entries for {} covariates",
            beta.len(),
            covariates.ncols()
        )));
    }
    let psi = cov_matrix(params, design)?;
    let chol = factor(psi, design)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = DVector::from_fn(design.len(), |_, _| StandardNormal.sample(&mut rng));
    let z = covariates * beta + chol.l() * e;
    GeoDataset::new(design.clone(), covariates.clone(), z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{random_design, Region};

    fn small_data(seed: u64) -> GeoDataset {
        let d = random_design(40, Region::unit_square(), seed).unwrap();
        let p = CovarianceParams::new(1.0, 0.2, 0.2, 0.5).unwrap();
        let f = DMatrix::from_element(40, 1, 1.0);
        simulate(&p, &DVector::from_element(1, 2.0), &d, &f, seed).unwrap()
    }

    #[test]
    fn single_point_standard_normal() {
        let d = SamplingDesign::from_points(vec![[0.5, 0.5]], None).unwrap();
        let data = GeoDataset::intercept_only(d, DVector::from_element(1, 0.0)).unwrap();
        let p = CovarianceParams::new(0.6, 0.4, 1.0, 0.5).unwrap();
        let ll = loglik(&p, &DVector::from_element(1, 0.0), &data).unwrap();
        assert!((ll + 0.5 * LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn far_apart_pair_is_independent() {
        let d = SamplingDesign::from_points(vec![[0.0, 0.0], [1.0, 0.0]], None).unwrap();
        let data = GeoDataset::intercept_only(d, DVector::zeros(2)).unwrap();
        let p = CovarianceParams::new(0.5, 0.5, 1e-3, 0.5).unwrap();
        let ll = loglik(&p, &DVector::zeros(1), &data).unwrap();
        assert!((ll + LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn identity_covariance_gives_sample_mean() {
        let d = SamplingDesign::from_points(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], None).unwrap();
        let data = GeoDataset::intercept_only(d, DVector::from_vec(vec![1.0, 2.0, 6.0])).unwrap();
        let p = CovarianceParams::new(1.0, 1.0, 1e-4, 0.5).unwrap();
        let p = CovarianceParams { sigma2: 1e-300, ..p };
        let (beta, ll) = profile_beta(&p, &data).unwrap();
        assert!((beta[0] - 3.0).abs() < 1e-12);
        assert!((ll - loglik(&p, &beta, &data).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rejects_inconsistent_or_rank_deficient_data() {
        let d = SamplingDesign::from_points(vec![[0.0, 0.0], [1.0, 0.0]], None).unwrap();
        assert!(GeoDataset::intercept_only(d.clone(), DVector::zeros(3)).is_err());
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            GeoDataset::new(d, f, DVector::zeros(2)),
            Err(Error::RankDeficient)
        ));
    }

    #[test]
    fn fixed_parameters_are_untouched() {
        let data = small_data(3);
        let init = CovarianceParams::new(1.0, 0.3, 0.25, 0.5).unwrap();
        let opts = FitOptions {
            starts: 1,
            ..Default::default()
        };
        let fit = mle_fit(&data, &init, FixedMask::none().with(Param::Nu), &opts).unwrap();
        assert_eq!(fit.params_hat.nu, 0.5);
        let beta = DVector::from_vec(fit.beta_hat.clone());
        assert!((fit.loglik - loglik(&fit.params_hat, &beta, &data).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn zero_nugget_requires_fixing() {
        let data = small_data(4);
        let init = CovarianceParams::new(1.0, 0.0, 0.25, 0.5).unwrap();
        let opts = FitOptions {
            starts: 1,
            ..Default::default()
        };
        assert!(mle_fit(&data, &init, FixedMask::none(), &opts).is_err());
        let fit = mle_fit(&data, &init, FixedMask::none().with(Param::Tau2), &opts).unwrap();
        assert_eq!(fit.params_hat.tau2, 0.0);
    }

    #[test]
    fn profile_validation() {
        let data = small_data(5);
        let init = CovarianceParams::new(1.0, 0.3, 0.25, 0.5).unwrap();
        let opts = FitOptions::default();
        assert!(profile_loglik(&data, &[], &[vec![]], &init, FixedMask::none(), &opts).is_err());
        assert!(profile_loglik(&data, &[Param::Nu], &[], &init, FixedMask::none(), &opts).is_err());
        assert!(profile_loglik(&data, &[Param::Nu, Param::Nu], &[vec![1.0, 1.0]], &init, FixedMask::none(), &opts).is_err());
        let mut t = profile_loglik(
            &data,
            &[Param::Nu],
            &[vec![-1.0], vec![0.5]],
            &init,
            FixedMask::none().with(Param::Sigma2).with(Param::Tau2).with(Param::Vartheta),
            &opts,
        )
        .unwrap();
        assert!(t.rows[0].loglik.is_nan() && !t.rows[0].converged);
        assert!(t.rows[1].loglik.is_finite());
        t.mark_mle(&init.with(Param::Nu, 0.7));
        assert_eq!(t.contains_mle, Some(false));
    }

    #[test]
    fn nugget_to_sill_examples() {
        let p = CovarianceParams::new(2.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(nugget_to_sill(&p), 0.0);
        assert_eq!(nugget_to_sill(&p.with(Param::Tau2, 2.0)), 0.5);
    }
}
