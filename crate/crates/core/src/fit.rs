//! Levenberg-Marquardt least squares with a finite-difference Jacobian.
//!
//! Used by the calibration fits, whose objectives (eigenvalue solves, FFT
//! pipelines) have no cheap analytic gradient.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative finite-difference step, scaled by `max(|x|, typical)`.
    pub fd_step: f64,
    /// Stop when the relative decrease of the cost falls below this.
    pub cost_tolerance: f64,
    /// Stop when the step is this small relative to `|x|`.
    pub step_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            fd_step: 1e-6,
            cost_tolerance: 1e-14,
            step_tolerance: 1e-12,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Half the sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    /// Diagonal of `(J^T J)^-1 * s^2`, the usual covariance estimate.
    pub std_errors: Vec<f64>,
}

impl LmReport {
    pub fn rms(&self) -> f64 {
        (2.0 * self.cost / self.residuals.len() as f64).sqrt()
    }
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn jacobian<F>(f: &F, x: &[f64], r0: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut jac = DMatrix::zeros(r0.len(), x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let step = h * x[j].abs().max(1e-3);
        xp[j] = x[j] + step;
        let rp = f(&xp)?;
        xp[j] = x[j] - step;
        let rm = f(&xp)?;
        xp[j] = x[j];
        for i in 0..r0.len() {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Minimise `0.5 |f(x)|^2` starting from `x0`.
pub fn levenberg_marquardt<F>(f: F, x0: &[f64], opts: &LmOptions) -> Result<LmReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    if r.len() < x.len() {
        return Err(Error::Degenerate(format!(
            "{} residuals for {} parameters",
            r.len(),
            x.len()
        )));
    }
    let mut cost = cost_of(&r);
    let mut mu = opts.initial_damping;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian(&f, &x, &r, opts.fd_step)?;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(&r);
        if g.amax() == 0.0 {
            converged = true;
            break;
        }

        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..x.len() {
                a[(k, k)] += mu * jtj[(k, k)].max(1e-30);
            }
            let Some(chol) = a.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            let rt = match f(&trial) {
                Ok(rt) if rt.iter().all(|v| v.is_finite()) => rt,
                _ => {
                    mu *= 10.0;
                    continue;
                }
            };
            let ct = cost_of(&rt);
            if ct <= cost {
                let small_step = delta
                    .iter()
                    .zip(&x)
                    .all(|(d, xi)| d.abs() <= opts.step_tolerance * xi.abs().max(1e-3));
                let small_gain = cost - ct <= opts.cost_tolerance * cost;
                x = trial;
                r = rt;
                cost = ct;
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                converged = small_step || small_gain;
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: a stationary point to
            // working precision.
            converged = true;
        }
        if converged {
            break;
        }
    }

    if !converged {
        return Err(Error::NonConvergence(format!(
            "no convergence after {iterations} iterations (cost {cost:e})"
        )));
    }

    let jac = jacobian(&f, &x, &r, opts.fd_step)?;
    let dof = (r.len() - x.len()).max(1) as f64;
    let s2 = 2.0 * cost / dof;
    let std_errors = (jac.transpose() * &jac)
        .try_inverse()
        .map(|inv| (0..x.len()).map(|k| (inv[(k, k)] * s2).max(0.0).sqrt()).collect())
        .unwrap_or_else(|| vec![f64::NAN; x.len()]);
    Ok(LmReport { x, residuals: r, cost, iterations, std_errors })
}
