//! Unstructured total least squares: the SVD truncation and the fixed-α
//! log-det variant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StlsError};
use crate::linalg::{self, recompose_with};
use crate::model::{Diagnostics, StlsProblem, StlsSolution};
use crate::prox::log_threshold_scalar;

const RANK_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-12;

/// Closest matrix of rank `target_rank` in Frobenius norm (Eckart–Young).
pub fn plain_tls(p: &StlsProblem) -> Result<StlsSolution> {
    if !p.structure.is_unconstrained() {
        return Err(StlsError::StructureNotSupported);
    }
    truncated_svd_solution(&p.a_bar, p.target_rank)
}

pub fn truncated_svd_solution(a_bar: &DMatrix<f64>, target_rank: usize) -> Result<StlsSolution> {
    if a_bar.nrows() < a_bar.ncols() {
        return Err(StlsError::DimensionMismatch("M ≥ N required".into()));
    }
    let f = linalg::svd(a_bar)?;
    let s: Vec<f64> =
        f.s.iter()
            .enumerate()
            .map(|(i, &x)| if i < target_rank { x } else { 0.0 })
            .collect();
    let a_hat = recompose_with(&f.u, &s, &f.v);
    let e_hat = a_bar - &a_hat;
    let mut sol = StlsSolution::assemble(a_bar, a_hat, e_hat, f64::INFINITY, RANK_TOL, Diagnostics::default())?;
    // the truncation shares singular vectors with Ā; reuse Ā's to stay sign-stable
    if target_rank < f.rank() {
        sol.null_vec = f.v.column(f.rank() - 1).into_owned();
        sol.beta = extract_beta(&sol.null_vec).ok();
    }
    sol.diagnostics.converged = true;
    sol.diagnostics.annihilated = f.rank() - target_rank.min(f.rank());
    Ok(sol)
}

/// `β` from a null vector proportional to `[β; 1]`.
pub fn extract_beta(null_vec: &DVector<f64>) -> Result<DVector<f64>> {
    let n = null_vec.len();
    if n < 2 {
        return Err(StlsError::DimensionMismatch("null vector needs length ≥ 2".into()));
    }
    let last = null_vec[n - 1];
    if last.abs() <= 1e-8 {
        return Err(StlsError::Nongeneric(last));
    }
    Ok(null_vec.rows(0, n - 1) / last)
}

/// Log-thresholding of the spectrum with `α = ¼ σ_N²` and `δ = 0`, applied once.
pub fn logdet_tls(a_bar: &DMatrix<f64>) -> Result<StlsSolution> {
    if a_bar.nrows() < a_bar.ncols() {
        return Err(StlsError::DimensionMismatch("M ≥ N required".into()));
    }
    let f = linalg::svd(a_bar)?;
    let sigma_min = f.s[f.rank() - 1];
    if sigma_min <= f64::EPSILON * f.s[0] * a_bar.nrows() as f64 {
        return Err(StlsError::DegenerateBaseline);
    }
    let alpha = 0.25 * sigma_min * sigma_min;
    let s: Vec<f64> =
        f.s.iter()
            .map(|&x| {
                // values tied with σ_N up to rounding share its fate
                if x <= sigma_min * (1.0 + TIE_TOL) {
                    0.0
                } else {
                    log_threshold_scalar(x, alpha, 0.0)
                }
            })
            .collect();
    let annihilated = s.iter().filter(|&&x| x == 0.0).count();
    let a_hat = recompose_with(&f.u, &s, &f.v);
    let e_hat = a_bar - &a_hat;
    let mut sol = StlsSolution::assemble(a_bar, a_hat, e_hat, alpha, RANK_TOL, Diagnostics::default())?;
    sol.null_vec = f.v.column(f.rank() - 1).into_owned();
    sol.beta = extract_beta(&sol.null_vec).ok();
    sol.diagnostics.annihilated = annihilated;
    sol.diagnostics.converged = true;
    Ok(sol)
}
