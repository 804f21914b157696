//! Nelder–Mead simplex minimization and central finite differences.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stopping rules for [`nelder_mead`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    /// Initial edge length of the simplex in each coordinate.
    pub initial_step: f64,
    /// Converged once every vertex lies within `xtol` of the best (max norm)...
    pub xtol: f64,
    /// ...and the objective spread across the simplex is at most `ftol`.
    pub ftol: f64,
    pub max_evaluations: usize,
    /// Fresh simplices built around the optimum after convergence.
    pub restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.25,
            xtol: 1e-7,
            ftol: 1e-10,
            max_evaluations: 5000,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

struct Counter<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counter<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimizes `f` from `x0`. Non-finite objective values reject the step.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &SimplexOptions) -> Result<SimplexResult> {
    let mut counter = Counter { f, evaluations: 0 };
    let f0 = counter.call(x0);
    if !f0.is_finite() {
        return Err(Error::InvalidParams(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut best = SimplexResult {
        x: x0.to_vec(),
        value: f0,
        converged: x0.is_empty(),
        iterations: 0,
        evaluations: 1,
    };
    if x0.is_empty() {
        return Ok(best);
    }
    for _ in 0..=opts.restarts {
        let run = simplex_run(&mut counter, &best.x, best.value, opts);
        let improved = best.value - run.value;
        best.iterations += run.iterations;
        best.converged = run.converged;
        if run.value <= best.value {
            best.x = run.x;
            best.value = run.value;
        }
        if !run.converged || improved <= opts.ftol {
            break;
        }
    }
    best.evaluations = counter.evaluations;
    Ok(best)
}

fn simplex_run<F: FnMut(&[f64]) -> f64>(
    counter: &mut Counter<F>,
    x0: &[f64],
    f0: f64,
    opts: &SimplexOptions,
) -> SimplexResult {
    let d = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    let mut vals = vec![f0];
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += opts.initial_step;
        let mut v = counter.call(&p);
        if !v.is_finite() {
            p[i] = x0[i] - opts.initial_step;
            v = counter.call(&p);
        }
        pts.push(p);
        vals.push(v);
    }
    let (alpha, gamma, rho, shrink) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    while counter.evaluations < opts.max_evaluations {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[d] - vals[0];
        let size = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.ftol && size <= opts.xtol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..d)
            .map(|k| pts[..d].iter().map(|p| p[k]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[d])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(alpha);
        let fr = counter.call(&xr);
        if fr < vals[0] {
            let xe = along(gamma);
            let fe = counter.call(&xe);
            if fe < fr {
                pts[d] = xe;
                vals[d] = fe;
            } else {
                pts[d] = xr;
                vals[d] = fr;
            }
            continue;
        }
        if fr < vals[d - 1] {
            pts[d] = xr;
            vals[d] = fr;
            continue;
        }
        // Outside contraction when the reflection beat the worst vertex, inside otherwise.
        let xc = if fr < vals[d] { along(rho * alpha) } else { along(-rho) };
        let fc = counter.call(&xc);
        if fc < vals[d].min(fr) {
            pts[d] = xc;
            vals[d] = fc;
            continue;
        }
        for i in 1..=d {
            let p: Vec<f64> = pts[0]
                .iter()
                .zip(&pts[i])
                .map(|(b, q)| b + shrink * (q - b))
                .collect();
            vals[i] = counter.call(&p);
            pts[i] = p;
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    SimplexResult {
        x: pts[best].clone(),
        value: vals[best],
        converged,
        iterations,
        evaluations: counter.evaluations,
    }
}

/// Central-difference gradient with per-coordinate steps `h`.
pub fn fd_gradient<F>(f: F, x: &[f64], h: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    check_steps(x, h)?;
    let mut g = Vec::with_capacity(x.len());
    let mut p = x.to_vec();
    for k in 0..x.len() {
        p[k] = x[k] + h[k];
        let up = f(&p)?;
        p[k] = x[k] - h[k];
        let down = f(&p)?;
        p[k] = x[k];
        g.push((up - down) / (2.0 * h[k]));
    }
    Ok(g)
}

/// Central-difference Hessian with per-coordinate steps `h`, symmetrized.
/// Exact (up to rounding) for quadratic `f`.
pub fn fd_hessian<F>(f: F, x: &[f64], h: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    check_steps(x, h)?;
    let d = x.len();
    let f0 = f(x)?;
    let mut hess = DMatrix::zeros(d, d);
    let mut p = x.to_vec();
    for k in 0..d {
        p[k] = x[k] + h[k];
        let up = f(&p)?;
        p[k] = x[k] - h[k];
        let down = f(&p)?;
        p[k] = x[k];
        hess[(k, k)] = (up - 2.0 * f0 + down) / (h[k] * h[k]);
        for l in 0..k {
            let mut at = |sk: f64, sl: f64| {
                p[k] = x[k] + sk * h[k];
                p[l] = x[l] + sl * h[l];
                let v = f(&p);
                p[k] = x[k];
                p[l] = x[l];
                v
            };
            let v = at(1.0, 1.0)? - at(1.0, -1.0)? - at(-1.0, 1.0)? + at(-1.0, -1.0)?;
            let e = v / (4.0 * h[k] * h[l]);
            hess[(k, l)] = e;
            hess[(l, k)] = e;
        }
    }
    Ok(hess)
}

fn check_steps(x: &[f64], h: &[f64]) -> Result<()> {
    if x.len() != h.len() {
        return Err(Error::InvalidParams(format!(
            "{} steps for {} coordinates",
            h.len(),
            x.len()
        )));
    }
    for (&xi, &hi) in x.iter().zip(h) {
        if !(hi > 0.0) || !hi.is_finite() || xi + hi == xi {
            return Err(Error::Domain {
                what: "finite-difference step underflows or is not positive",
                value: hi,
            });
        }
    }
    Ok(())
}
