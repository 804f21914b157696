//! Expected (Fisher) information for the covariance parameters of a Gaussian
//! random field with Matérn covariance plus nugget,
//!
//! ```text
//! I_ij = 1/2 tr(Psi^{-1} Psi_i Psi^{-1} Psi_j),   Psi = sigma2 Sigma + tau2 I,
//! ```
//!
//! and the summaries built on it: per-parameter inverse Cramér–Rao bounds,
//! information about `zeta = sigma2 / vartheta^(2 nu)`, and the leading
//! eigenpair used as a local-influence measure.

use nalgebra::{Cholesky, DMatrix, Dyn, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::design::{DesignRef, SamplingDesign};
use crate::error::{Error, Result};
use crate::matern::{correlation_jet, matern_corr, CorrelationJet, CovarianceParams};
use crate::par;
use crate::specialfun::QuadratureSpec;

/// Smallest accepted reciprocal 1-norm condition number of the information matrix.
pub const MIN_RCOND: f64 = 1e-14;

/// Relative gap below which the two leading eigenvalues count as repeated.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Information matrix in parameter order `(sigma2, tau2, vartheta, nu)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherInfo {
    pub matrix: Matrix4<f64>,
    pub params: CovarianceParams,
    pub design_ref: Option<DesignRef>,
}

/// Inverse Cramér–Rao bounds `1 / (I^{-1})_kk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoVector {
    pub info_sigma2: f64,
    pub info_tau2: f64,
    pub info_vartheta: f64,
    pub info_nu: f64,
}

impl InfoVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.info_sigma2, self.info_tau2, self.info_vartheta, self.info_nu]
    }
}

/// Leading eigenpair of an information matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceResult {
    pub lambda_star: f64,
    pub delta_star: [f64; 4],
    /// Set when the top eigenvalue is repeated; `delta_star` is then one
    /// unit vector from the top eigenspace.
    pub degenerate: bool,
}

/// Covariance matrix together with its four entrywise parameter derivatives.
#[derive(Debug, Clone)]
pub struct CovarianceSystem {
    pub psi: DMatrix<f64>,
    /// `dPsi/dsigma2, dPsi/dtau2, dPsi/dvartheta, dPsi/dnu`.
    pub derivs: [DMatrix<f64>; 4],
}

fn check_inputs(params: &CovarianceParams, design: &SamplingDesign) -> Result<()> {
    params.validate()?;
    if design.is_empty() {
        return Err(Error::InvalidDesign("design has no points".into()));
    }
    Ok(())
}

/// Upper-triangle rows `i: [f(i, i+1), ..., f(i, n-1)]`, evaluated per row in parallel.
fn upper_rows<T, F>(n: usize, f: F) -> Result<Vec<Vec<T>>>
where
    T: Send,
    F: Fn(usize, usize) -> Result<T> + Sync + Send,
{
    par::map_range(n, |i| ((i + 1)..n).map(|j| f(i, j)).collect::<Result<Vec<T>>>())
        .into_iter()
        .collect()
}

/// `Psi = sigma2 * Sigma + tau2 * I`.
pub fn cov_matrix(params: &CovarianceParams, design: &SamplingDesign) -> Result<DMatrix<f64>> {
    check_inputs(params, design)?;
    let n = design.len();
    let rows = upper_rows(n, |i, j| matern_corr(params.vartheta, params.nu, design.distance(i, j)))?;
    let mut psi = DMatrix::from_element(n, n, 0.0);
    for (i, row) in rows.iter().enumerate() {
        psi[(i, i)] = params.sigma2 + params.tau2;
        for (k, &c) in row.iter().enumerate() {
            let j = i + 1 + k;
            psi[(i, j)] = params.sigma2 * c;
            psi[(j, i)] = params.sigma2 * c;
        }
    }
    Ok(psi)
}

/// Builds `Psi` and its derivatives from one pass over the distinct pairs.
pub fn covariance_system(
    params: &CovarianceParams,
    design: &SamplingDesign,
    spec: &QuadratureSpec,
) -> Result<CovarianceSystem> {
    check_inputs(params, design)?;
    let n = design.len();
    let rows: Vec<Vec<CorrelationJet>> = upper_rows(n, |i, j| {
        correlation_jet(params.vartheta, params.nu, design.distance(i, j), spec)
    })?;
    let mut psi = DMatrix::from_element(n, n, 0.0);
    let mut sigma = DMatrix::identity(n, n);
    let mut d_vartheta = DMatrix::from_element(n, n, 0.0);
    let mut d_nu = DMatrix::from_element(n, n, 0.0);
    let s2 = params.sigma2;
    for (i, row) in rows.iter().enumerate() {
        psi[(i, i)] = s2 + params.tau2;
        for (k, jet) in row.iter().enumerate() {
            let j = i + 1 + k;
            psi[(i, j)] = s2 * jet.value;
            psi[(j, i)] = s2 * jet.value;
            sigma[(i, j)] = jet.value;
            sigma[(j, i)] = jet.value;
            d_vartheta[(i, j)] = s2 * jet.d_vartheta;
            d_vartheta[(j, i)] = s2 * jet.d_vartheta;
            d_nu[(i, j)] = s2 * jet.d_nu;
            d_nu[(j, i)] = s2 * jet.d_nu;
        }
    }
    Ok(CovarianceSystem {
        psi,
        derivs: [sigma, DMatrix::identity(n, n), d_vartheta, d_nu],
    })
}

/// Entrywise derivatives `dPsi/deta_k` in parameter order.
pub fn cov_matrix_derivs(
    params: &CovarianceParams,
    design: &SamplingDesign,
    spec: &QuadratureSpec,
) -> Result<[DMatrix<f64>; 4]> {
    Ok(covariance_system(params, design, spec)?.derivs)
}

/// Cholesky factor of `Psi`, naming a coincident pair when that is the cause of failure.
pub(crate) fn factor(psi: DMatrix<f64>, design: &SamplingDesign) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(psi).ok_or_else(|| {
        let pair = match design.validate() {
            Err(Error::DuplicatePoints { first, second }) => Some((first, second)),
            _ => None,
        };
        Error::NotPositiveDefinite { pair }
    })
}

/// `1/2 tr(A B)` for square `A`, `B` of equal size.
fn half_trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // tr(AB) = sum_ij A_ij B_ji; both column-major, so walk A by columns and B by rows.
    let n = a.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        let a_col = a.column(j);
        let b_row = b.row(j);
        for i in 0..n {
            acc += a_col[i] * b_row[i];
        }
    }
    0.5 * acc
}

fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Fisher information matrix of `(sigma2, tau2, vartheta, nu)` for the design.
///
/// One Cholesky factorization of `Psi` gives `Psi^{-1}`, then
/// `W_k = Psi^{-1} Psi_k` and `I_kl = 1/2 sum (W_k ∘ W_l^T)`.
pub fn fisher_matrix(
    params: &CovarianceParams,
    design: &SamplingDesign,
    spec: &QuadratureSpec,
) -> Result<FisherInfo> {
    let CovarianceSystem { psi, derivs } = covariance_system(params, design, spec)?;
    let chol = factor(psi, design)?;
    let inv = chol.inverse();
    // dPsi/dtau2 is the identity.
    let w: Vec<DMatrix<f64>> = par::map_range(4, |k| if k == 1 { inv.clone() } else { &inv * &derivs[k] });
    drop(derivs);

    let pairs: Vec<(usize, usize)> = (0..4).flat_map(|k| (k..4).map(move |l| (k, l))).collect();
    let values = par::map_ordered(&pairs, |&(k, l)| half_trace_product(&w[k], &w[l]));
    let mut m = Matrix4::zeros();
    for (&(k, l), &v) in pairs.iter().zip(&values) {
        m[(k, l)] = v;
        m[(l, k)] = v;
    }
    Ok(FisherInfo {
        matrix: symmetrize(&m),
        params: *params,
        design_ref: Some(design.fingerprint()),
    })
}

impl FisherInfo {
    /// Wraps an externally supplied matrix (for example one read from a file).
    pub fn from_matrix(matrix: Matrix4<f64>, params: CovarianceParams) -> Self {
        Self {
            matrix,
            params,
            design_ref: None,
        }
    }

    /// Inverse with a reciprocal-condition guard.
    pub fn inverse(&self) -> Result<Matrix4<f64>> {
        let inv = self
            .matrix
            .try_inverse()
            .ok_or(Error::SingularInformation { rcond: 0.0 })?;
        let rcond = 1.0 / (norm1(&self.matrix) * norm1(&inv));
        if !(rcond > MIN_RCOND) || !rcond.is_finite() {
            return Err(Error::SingularInformation { rcond });
        }
        Ok(inv)
    }

    pub fn info_vector(&self) -> Result<InfoVector> {
        info_vector(self)
    }

    pub fn microergodic_info(&self) -> Result<f64> {
        let g = zeta_gradient(&self.params);
        let inv = self.inverse()?;
        let q = g.dot(&(inv * g));
        if !(q > 0.0) {
            return Err(Error::SingularInformation { rcond: 0.0 });
        }
        Ok(1.0 / q)
    }

    pub fn local_influence(&self) -> Result<InfluenceResult> {
        local_influence(self)
    }
}

fn norm1(m: &Matrix4<f64>) -> f64 {
    (0..4)
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Per-parameter information `1 / (I^{-1})_kk`.
pub fn info_vector(fisher: &FisherInfo) -> Result<InfoVector> {
    let inv = fisher.inverse()?;
    let d: Vec<f64> = (0..4).map(|k| 1.0 / inv[(k, k)]).collect();
    if d.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::SingularInformation { rcond: 0.0 });
    }
    Ok(InfoVector {
        info_sigma2: d[0],
        info_tau2: d[1],
        info_vartheta: d[2],
        info_nu: d[3],
    })
}

/// Gradient of `zeta = sigma2 / vartheta^(2 nu)`:
/// `vartheta^{-2 nu} (1, 0, -2 sigma2 nu / vartheta, -2 sigma2 ln vartheta)`.
pub fn zeta_gradient(params: &CovarianceParams) -> Vector4<f64> {
    let scale = params.vartheta.powf(-2.0 * params.nu);
    Vector4::new(
        1.0,
        0.0,
        -2.0 * params.sigma2 * params.nu / params.vartheta,
        -2.0 * params.sigma2 * params.vartheta.ln(),
    ) * scale
}

/// Information about the microergodic parameter `zeta`.
pub fn microergodic_info(
    params: &CovarianceParams,
    design: &SamplingDesign,
    spec: &QuadratureSpec,
) -> Result<f64> {
    fisher_matrix(params, design, spec)?.microergodic_info()
}

/// Largest eigenvalue and its unit eigenvector, sign-fixed so the component of
/// largest magnitude is positive.
pub fn local_influence(fisher: &FisherInfo) -> Result<InfluenceResult> {
    check_symmetric(&fisher.matrix)?;
    let eig = SymmetricEigen::new(symmetrize(&fisher.matrix));
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order[0];
    let lambda_star = eig.eigenvalues[top];
    let second = eig.eigenvalues[order[1]];
    let degenerate = (lambda_star - second).abs() <= DEGENERACY_TOL * lambda_star.abs().max(f64::MIN_POSITIVE);

    let mut v: Vector4<f64> = eig.eigenvectors.column(top).into_owned();
    v /= v.norm();
    let lead = (0..4)
        .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
        .unwrap_or(0);
    if v[lead] < 0.0 {
        v = -v;
    }
    Ok(InfluenceResult {
        lambda_star,
        delta_star: [v[0], v[1], v[2], v[3]],
        degenerate,
    })
}

/// Rejects matrices whose asymmetry exceeds `1e-10` relative to the largest entry.
pub fn check_symmetric(m: &Matrix4<f64>) -> Result<()> {
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let asym = (m - m.transpose()).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !m.iter().all(|v| v.is_finite()) || asym > 1e-10 * scale {
        return Err(Error::InvalidData(format!(
            "information matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// One evaluated point of an information surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub vartheta: f64,
    pub nu: f64,
    pub info: Option<InfoVector>,
    pub info_zeta: Option<f64>,
    /// `ok`, or the error message for this grid point.
    pub status: String,
}

/// Evaluates the information vector and `zeta` information at each
/// `(vartheta, nu)` with `sigma2`, `tau2` taken from `base`. Rows come back in
/// grid order; per-point failures are recorded in the row.
pub fn info_surface(
    base: &CovarianceParams,
    design: &SamplingDesign,
    grid: &[(f64, f64)],
    spec: &QuadratureSpec,
) -> Vec<SurfaceRow> {
    // The outer map is parallel; inner assembly then runs on the same pool.
    par::map_ordered(grid, |&(vartheta, nu)| {
        let evaluate = || -> Result<(InfoVector, f64)> {
            let params = CovarianceParams::new(base.sigma2, base.tau2, vartheta, nu)?;
            let fisher = fisher_matrix(&params, design, spec)?;
            Ok((fisher.info_vector()?, fisher.microergodic_info()?))
        };
        match evaluate() {
            Ok((info, zeta)) => SurfaceRow {
                vartheta,
                nu,
                info: Some(info),
                info_zeta: Some(zeta),
                status: "ok".into(),
            },
            Err(e) => SurfaceRow {
                vartheta,
                nu,
                info: None,
                info_zeta: None,
                status: e.to_string(),
            },
        }
    })
}

/// Cartesian grid `varthetas × nus`, `vartheta` varying slowest.
pub fn grid_product(varthetas: &[f64], nus: &[f64]) -> Vec<(f64, f64)> {
    varthetas
        .iter()
        .flat_map(|&t| nus.iter().map(move |&n| (t, n)))
        .collect()
}
