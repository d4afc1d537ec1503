//! Dense exact-GP computations: the validation oracle for the blockwise
//! approximation, and the generator for synthetic data.
//!
//! Everything is O(n^3) on the full covariance, so sizes are capped at
//! [`MAX_EXACT_N`]; the oracle exists for validation, not production.

use crate::data::PointMatrix;
use crate::error::{Error, Result};
use crate::kernel::{cov_matrix, KernelParams};
use crate::rng::NormalSource;

/// Configured ceiling for dense computations.
pub const MAX_EXACT_N: usize = 20_000;

const LOG_2PI: f64 = 1.8378770664093453;

fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("need at least one point"));
    }
    if n > MAX_EXACT_N {
        return Err(Error::invalid(format!(
            "exact dense GP is limited to n <= {MAX_EXACT_N} (requested {n}); \
             use the blockwise approximation for larger problems"
        )));
    }
    Ok(())
}

/// Exact zero-mean Gaussian log-likelihood via Cholesky:
/// `-(n/2) log(2pi) - (1/2) log|Sigma| - (1/2) y' Sigma^{-1} y`,
/// with the log-determinant accumulated as `2 sum(log L_ii)`.
pub fn exact_loglik(x: &PointMatrix, y: &[f64], params: &KernelParams) -> Result<f64> {
    check_size(x.len())?;
    if y.len() != x.len() {
        return Err(Error::invalid(format!(
            "{} responses for {} points",
            y.len(),
            x.len()
        )));
    }
    let mut sigma = cov_matrix(x, x, params)?;
    sigma.cholesky_lower_in_place()?;
    let log_det = sigma.log_det_from_cholesky();
    let mut v = y.to_vec();
    sigma.solve_lower_in_place(&mut v);
    let quad = crate::linalg::dot(&v, &v);
    let n = x.len() as f64;
    Ok(-0.5 * (n * LOG_2PI + log_det + quad))
}

/// Conditional mean and the diagonal of the conditional covariance at
/// new inputs. Variances in `(-1e-10, 0)` clamp to zero; anything more
/// negative is treated as a numerical failure.
pub fn exact_predict(
    x: &PointMatrix,
    y: &[f64],
    xstar: &PointMatrix,
    params: &KernelParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_size(x.len())?;
    if y.len() != x.len() {
        return Err(Error::invalid("responses do not match training points"));
    }
    if xstar.dim() != x.dim() {
        return Err(Error::invalid(format!(
            "test dimension {} does not match training dimension {}",
            xstar.dim(),
            x.dim()
        )));
    }
    let mut l = cov_matrix(x, x, params)?;
    l.cholesky_lower_in_place()?;
    let mut v = y.to_vec();
    l.solve_lower_in_place(&mut v);
    // W = L^{-1} K(train, test)
    let mut w = cov_matrix(x, xstar, params)?;
    l.solve_lower_matrix_in_place(&mut w);
    let prior_var = params.sigma2 + params.tau2;
    let mut mean = Vec::with_capacity(xstar.len());
    let mut var = Vec::with_capacity(xstar.len());
    for j in 0..xstar.len() {
        let col = w.col(j);
        mean.push(crate::linalg::dot(col, &v));
        let raw = prior_var - crate::linalg::dot(col, col);
        if raw < -1e-10 {
            return Err(Error::invalid(format!(
                "negative predictive variance {raw} at test point {j}"
            )));
        }
        var.push(raw.max(0.0));
    }
    Ok((mean, var))
}

/// Draw one realization `y = L z` of the zero-mean GP at the given
/// inputs, with `z` i.i.d. standard normal from the seeded Box-Muller
/// source in [`crate::rng`]. Deterministic given `(x, params, seed)`.
/// Degenerate (PSD) covariances are allowed; duplicate inputs with zero
/// nugget receive identical values.
pub fn gp_simulate(x: &PointMatrix, params: &KernelParams, seed: u64) -> Result<Vec<f64>> {
    check_size(x.len())?;
    let mut l = cov_matrix(x, x, params)?;
    l.cholesky_psd_lower_in_place(1e-10)?;
    let mut z = vec![0.0; x.len()];
    NormalSource::new(seed).fill(&mut z);
    Ok(l.lower_triangular_matvec(&z))
}
