//! Damped least-squares (Levenberg–Marquardt) with a central-difference
//! Jacobian.
//!
//! All model fits in this crate (decay rates, transmission spectra, Ramsey
//! fringes, device refinement) go through [`least_squares`]. The Jacobian is
//! always formed by central finite differences, so fits need only a residual
//! closure; parameters that must stay positive are passed as square roots by
//! the callers and squared inside their closures.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative step for central differences, `eps^(1/3)` for f64.
const CENTRAL_DIFF_REL_STEP: f64 = 6.06e-6;

/// Stopping rules and damping start value for [`least_squares`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Hard cap on accepted iterations; exceeding it is a convergence error.
    pub max_iter: usize,
    /// Relative decrease of the summed squared residual that counts as done.
    pub ftol: f64,
    /// Step size, relative to the parameter norm, that counts as done.
    pub xtol: f64,
    /// Initial Marquardt damping factor.
    pub lambda0: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 400,
            ftol: 1e-12,
            xtol: 1e-12,
            lambda0: 1e-3,
        }
    }
}

/// Converged fit: solution, goodness, and curvature-based uncertainties.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Best-fit parameter vector.
    pub x: Vec<f64>,
    /// Summed squared residuals at the solution.
    pub cost: f64,
    /// `sqrt(cost)`.
    pub residual_norm: f64,
    /// Accepted iterations.
    pub iterations: usize,
    /// One-sigma parameter uncertainties from the curvature matrix
    /// (`inf` for directions the data do not constrain).
    pub stderr: Vec<f64>,
}

/// Central-difference Jacobian of `f` at `x`; `m` is the residual length.
pub fn jacobian_central<F>(f: &mut F, x: &[f64], m: usize) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = CENTRAL_DIFF_REL_STEP * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let rp = f(&xp);
        xp[j] = x[j] - h;
        let rm = f(&xp);
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimizes `‖f(x)‖²` starting from `x0`.
///
/// Uses Marquardt scaling (damping proportional to the curvature diagonal),
/// which keeps the step well defined even when some parameters barely affect
/// the residual. Errors with [`Error::NoConvergence`] if neither stopping
/// rule fires within `max_iter` accepted steps, and with
/// [`Error::InvalidData`] if there are fewer residuals than parameters.
pub fn least_squares<F>(mut f: F, x0: &[f64], opts: &FitOptions) -> Result<FitResult>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = f(&x);
    let m = r.len();
    if m < n {
        return Err(Error::InvalidData(format!(
            "{m} residuals cannot constrain {n} parameters"
        )));
    }
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = opts.lambda0;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        let jac = jacobian_central(&mut f, &x, m);
        let jtj = jac.transpose() * &jac;
        let rvec = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rvec;

        // Zero gradient: stationary point, nothing left to do.
        if grad.amax() <= f64::MIN_POSITIVE {
            return Ok(finish(f, x, cost, iterations, m));
        }

        let max_diag = (0..n).map(|j| jtj[(j, j)]).fold(0.0f64, f64::max);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for j in 0..n {
                // Floor the scaling so unconstrained directions stay solvable.
                let d = jtj[(j, j)].max(1e-10 * max_diag).max(f64::MIN_POSITIVE);
                a[(j, j)] += lambda * d;
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&grad),
                None => match a.lu().solve(&grad) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                },
            };
            let step = -step;
            let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let snorm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            let xnew: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rnew = f(&xnew);
            let cost_new: f64 = rnew.iter().map(|v| v * v).sum();
            if cost_new.is_finite() && cost_new < cost {
                let rel_drop = (cost - cost_new) / cost.max(f64::MIN_POSITIVE);
                x = xnew;
                r = rnew;
                cost = cost_new;
                lambda = (lambda / 5.0).max(1e-14);
                accepted = true;
                iterations += 1;
                if rel_drop < opts.ftol || snorm <= opts.xtol * (xnorm + opts.xtol) {
                    return Ok(finish(f, x, cost, iterations, m));
                }
                break;
            }
            // Rejected; a vanishing trust region means a local minimum.
            if snorm <= opts.xtol * (xnorm + opts.xtol) {
                return Ok(finish(f, x, cost, iterations, m));
            }
            lambda *= 10.0;
        }
        if !accepted {
            // Damping exhausted without progress: converged to working precision.
            return Ok(finish(f, x, cost, iterations, m));
        }
    }

    Err(Error::NoConvergence {
        max_iter: opts.max_iter,
        residual: cost.sqrt(),
    })
}

/// Builds the [`FitResult`], including curvature uncertainties.
fn finish<F>(mut f: F, x: Vec<f64>, cost: f64, iterations: usize, m: usize) -> FitResult
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let jac = jacobian_central(&mut f, &x, m);
    let jtj = jac.transpose() * &jac;
    let dof = m.saturating_sub(n);
    let sigma2 = if dof > 0 { cost / dof as f64 } else { 0.0 };
    let stderr = match jtj.try_inverse() {
        Some(cov) => (0..n)
            .map(|j| {
                let v = sigma2 * cov[(j, j)];
                if v.is_finite() && v >= 0.0 {
                    v.sqrt()
                } else {
                    f64::INFINITY
                }
            })
            .collect(),
        None => vec![f64::INFINITY; n],
    };
    FitResult {
        residual_norm: cost.sqrt(),
        x,
        cost,
        iterations,
        stderr,
    }
}
