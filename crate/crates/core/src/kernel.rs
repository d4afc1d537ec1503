//! Scaled anisotropic distances and Matérn covariance evaluation.
//!
//! The covariance between two inputs is `f(r)` where `r` is the
//! anisotropically scaled distance `sqrt(sum_i (x_i - x'_i)^2 / beta_i^2)`
//! and `f` is the Matérn kernel
//! `sigma^2 * 2^(1-nu)/Gamma(nu) * r^nu * K_nu(r)` plus a nugget at zero
//! distance. Smoothness is restricted to half-integer `nu`, for which
//! `r^nu K_nu(r)` collapses to an exponential times a polynomial, so no
//! Bessel evaluation happens outside the test oracle.

use crate::data::PointMatrix;
use crate::error::{Error, Result};

/// Supported half-integer smoothness values.
pub const SUPPORTED_NU: [f64; 4] = [0.5, 1.5, 2.5, 3.5];

/// Covariance hyperparameters: process variance, per-dimension ranges,
/// smoothness, nugget.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub sigma2: f64,
    pub beta: Vec<f64>,
    pub nu: f64,
    pub tau2: f64,
}

impl KernelParams {
    pub fn new(sigma2: f64, beta: Vec<f64>, nu: f64, tau2: f64) -> Result<Self> {
        let p = KernelParams {
            sigma2,
            beta,
            nu,
            tau2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::invalid(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if self.beta.is_empty() {
            return Err(Error::invalid("beta must be nonempty"));
        }
        if self.beta.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::invalid("every beta[i] must be positive and finite"));
        }
        if !(self.tau2 >= 0.0) || !self.tau2.is_finite() {
            return Err(Error::invalid(format!(
                "tau2 must be nonnegative, got {}",
                self.tau2
            )));
        }
        if !SUPPORTED_NU.contains(&self.nu) {
            return Err(Error::invalid(format!(
                "nu must be one of {:?}, got {}",
                SUPPORTED_NU, self.nu
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }
}

/// Dense real matrix, column-major. Doubles as covariance storage and as
/// the target of the factorization routines in [`crate::linalg`].
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Column-ordered entries, `values[j * rows + i] = (i, j)`.
    pub values: Vec<f64>,
}

impl CovMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CovMatrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.values[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.values[j * self.rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.values[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.rows..(j + 1) * self.rows]
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }
}

/// Anisotropically scaled Euclidean distance between two points.
pub fn scaled_distance(x: &[f64], x2: &[f64], beta: &[f64]) -> Result<f64> {
    if x.len() != x2.len() || x.len() != beta.len() {
        return Err(Error::invalid(format!(
            "scaled_distance dimension mismatch: {} vs {} vs beta {}",
            x.len(),
            x2.len(),
            beta.len()
        )));
    }
    let mut s = 0.0;
    for i in 0..x.len() {
        let t = (x[i] - x2[i]) / beta[i];
        s += t * t;
    }
    Ok(s.sqrt())
}

/// `2^(1-nu)/Gamma(nu) * r^nu * K_nu(r)` for half-integer `nu`, via the
/// closed exponential-polynomial forms. Equals 1 at `r = 0`.
#[inline]
pub(crate) fn matern_correlation(r: f64, nu: f64) -> f64 {
    debug_assert!(r >= 0.0);
    if nu == 0.5 {
        (-r).exp()
    } else if nu == 1.5 {
        (-r).exp() * (1.0 + r)
    } else if nu == 2.5 {
        (-r).exp() * (1.0 + r + r * r / 3.0)
    } else if nu == 3.5 {
        (-r).exp() * (1.0 + r + 0.4 * r * r + r * r * r / 15.0)
    } else {
        unreachable!("unsupported nu {nu} slipped past validation")
    }
}

/// Kernel value without the nugget term.
#[inline]
pub(crate) fn matern_no_nugget(r: f64, params: &KernelParams) -> f64 {
    params.sigma2 * matern_correlation(r, params.nu)
}

/// Matérn covariance at a scaled distance, including the nugget exactly
/// at `r = 0`.
pub fn matern(r: f64, params: &KernelParams) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::invalid(format!("distance must be nonnegative: {r}")));
    }
    params.validate()?;
    let nugget = if r == 0.0 { params.tau2 } else { 0.0 };
    Ok(matern_no_nugget(r, params) + nugget)
}

/// Covariance matrix between two point sets. When `a` and `b` are the
/// same set (same reference), the result is built symmetric from one
/// evaluation per pair and the nugget is added on the diagonal only.
/// Cross-covariances never include the nugget, even for coincident
/// points.
pub fn cov_matrix(a: &PointMatrix, b: &PointMatrix, params: &KernelParams) -> Result<CovMatrix> {
    params.validate()?;
    let d = params.dim();
    if a.dim() != d || b.dim() != d {
        return Err(Error::invalid(format!(
            "cov_matrix dimension mismatch: points {}x{} vs beta {}",
            a.dim(),
            b.dim(),
            d
        )));
    }
    let same_set = std::ptr::eq(a, b);
    let mut out = CovMatrix::zeros(a.len(), b.len());
    if same_set {
        let n = a.len();
        for j in 0..n {
            for i in j..n {
                let r = scaled_distance(a.row(i), a.row(j), &params.beta)?;
                let mut v = matern_no_nugget(r, params);
                if i == j {
                    v += params.tau2;
                }
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
    } else {
        for j in 0..b.len() {
            for i in 0..a.len() {
                let r = scaled_distance(a.row(i), b.row(j), &params.beta)?;
                out.set(i, j, matern_no_nugget(r, params));
            }
        }
    }
    Ok(out)
}
