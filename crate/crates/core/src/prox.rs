//! Thresholding operators on singular values, the reweighting update, and the
//! closed-form error estimates for nuclear-norm versus log-det relaxations.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, StlsError};
use crate::linalg::{self, inv_sqrt_psd, recompose_with};

/// Left/right weights of a weighted nuclear norm `‖W₁ A W₂‖_*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReweightPair {
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    w1_inv: DMatrix<f64>,
    w2_inv: DMatrix<f64>,
}

impl ReweightPair {
    pub fn identity(m: usize, n: usize) -> Self {
        Self {
            w1: DMatrix::identity(m, m),
            w2: DMatrix::identity(n, n),
            w1_inv: DMatrix::identity(m, m),
            w2_inv: DMatrix::identity(n, n),
        }
    }

    /// Checks both weights are symmetric positive definite.
    pub fn new(w1: DMatrix<f64>, w2: DMatrix<f64>) -> Result<Self> {
        let w1_inv = spd_inverse(&w1)?;
        let w2_inv = spd_inverse(&w2)?;
        Ok(Self { w1, w2, w1_inv, w2_inv })
    }

    pub fn w1_inv(&self) -> &DMatrix<f64> {
        &self.w1_inv
    }

    pub fn w2_inv(&self) -> &DMatrix<f64> {
        &self.w2_inv
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.w1.nrows(), self.w2.nrows())
    }

    /// `W₁ A W₂`.
    pub fn apply(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        &self.w1 * a * &self.w2
    }

    /// `W₁⁻¹ D W₂⁻¹`.
    pub fn unapply(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        &self.w1_inv * d * &self.w2_inv
    }
}

fn spd_inverse(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !w.is_square() {
        return Err(StlsError::DimensionMismatch("weights must be square".into()));
    }
    let asym = linalg::max_asymmetry(w);
    if asym > 1e-10 * w.amax().max(1.0) {
        return Err(StlsError::NotSymmetric(asym));
    }
    let eig = SymmetricEigen::new(linalg::symmetrize(w));
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(StlsError::DegenerateReweight("weight matrix is not positive definite"));
    }
    let q = &eig.eigenvectors;
    let d = eig.eigenvalues.map(|l| 1.0 / l);
    Ok(linalg::symmetrize(&(q * DMatrix::from_diagonal(&d) * q.transpose())))
}

/// Singular value soft-thresholding `U max(S − γ, 0) Vᵀ`, the prox of `γ‖·‖_*`.
pub fn svt(z: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    if !(gamma >= 0.0) {
        return Err(StlsError::InvalidArgument("threshold must be ≥ 0".into()));
    }
    let f = linalg::svd(z)?;
    let s: Vec<f64> = f.s.iter().map(|&x| (x - gamma).max(0.0)).collect();
    Ok(recompose_with(&f.u, &s, &f.v))
}

/// Minimizer of `½(x − y)² + α log(δ + |x|)` in the basin reached from `y`.
///
/// Nonzero when the larger root of `x² − (|y| − δ)x + α − |y|δ` is real,
/// simple and positive; for `δ = 0` that is `|y| > 2√α`. Otherwise zero.
pub fn log_threshold_scalar(y: f64, alpha: f64, delta: f64) -> f64 {
    let r = y.abs();
    let disc = (r + delta) * (r + delta) - 4.0 * alpha;
    if !(disc > 0.0) {
        return 0.0;
    }
    let root = 0.5 * (r - delta + disc.sqrt());
    if root > 0.0 {
        root.copysign(y)
    } else {
        0.0
    }
}

/// [`log_threshold_scalar`] applied to every singular value of `z`.
pub fn log_threshold_spectral(z: &DMatrix<f64>, alpha: f64, delta: f64) -> Result<DMatrix<f64>> {
    if !(alpha > 0.0) {
        return Err(StlsError::InvalidArgument("alpha must be > 0".into()));
    }
    let f = linalg::svd(z)?;
    let s: Vec<f64> = f.s.iter().map(|&x| log_threshold_scalar(x, alpha, delta)).collect();
    Ok(recompose_with(&f.u, &s, &f.v))
}

/// One reweighting step: from `W₁ A W₂ = U Σ Vᵀ` form `Y = W₁⁻¹ U Σ Uᵀ W₁⁻¹`,
/// `Z = W₂⁻¹ V Σ Vᵀ W₂⁻¹` and return `((Y + δ'I)^{-1/2}, (Z + δ'I)^{-1/2})`.
///
/// `δ' = delta · σ_max(A)`.
pub fn update_reweight(prev: &ReweightPair, a_new: &DMatrix<f64>, delta: f64) -> Result<ReweightPair> {
    let (m, n) = prev.dims();
    if a_new.shape() != (m, n) {
        return Err(StlsError::DimensionMismatch(format!(
            "iterate is {}×{}, weights expect {m}×{n}",
            a_new.nrows(),
            a_new.ncols()
        )));
    }
    let scale = linalg::singular_values(a_new)?.max();
    let delta_eff = delta * scale;
    if !(delta_eff > 0.0) || !delta_eff.is_finite() {
        return Err(StlsError::DegenerateReweight("zero iterate leaves δ' = 0"));
    }
    let f = linalg::svd(&prev.apply(a_new))?;
    let us = &f.u * DMatrix::from_diagonal(&f.s);
    let vs = &f.v * DMatrix::from_diagonal(&f.s);
    let y = linalg::symmetrize(&(prev.w1_inv() * us * f.u.transpose() * prev.w1_inv()));
    let z = linalg::symmetrize(&(prev.w2_inv() * vs * f.v.transpose() * prev.w2_inv()));
    let (w1, w1_inv) = inv_sqrt_pair(&y, delta_eff)?;
    let (w2, w2_inv) = inv_sqrt_pair(&z, delta_eff)?;
    if w1.iter().chain(w2.iter()).any(|x| !x.is_finite()) {
        return Err(StlsError::NonFinite("reweighting"));
    }
    Ok(ReweightPair { w1, w2, w1_inv, w2_inv })
}

/// `(Y + δI)^{-1/2}` together with its inverse `(Y + δI)^{1/2}`.
fn inv_sqrt_pair(y: &DMatrix<f64>, delta: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let w = inv_sqrt_psd(y, delta)?;
    let eig = SymmetricEigen::new(y.clone());
    let q = &eig.eigenvectors;
    let d = eig.eigenvalues.map(|l| (l.max(0.0) + delta).sqrt());
    let inv = linalg::symmetrize(&(q * DMatrix::from_diagonal(&d) * q.transpose()));
    Ok((w, inv))
}

/// Squared error of fixed-α log-thresholding, `σ_N²(1 + ½ Σ_{i<N} (aᵢ − √(aᵢ² − 1))²)`
/// with `aᵢ = σᵢ/σ_N`.
pub fn err_bound_rwnn(sigmas: &[f64]) -> Result<f64> {
    let Some(&last) = sigmas.last() else {
        return Err(StlsError::InvalidArgument("empty spectrum".into()));
    };
    if !(last > 0.0) {
        return Err(StlsError::DegenerateBaseline);
    }
    let n = sigmas.len();
    let sum: f64 = sigmas[..n - 1]
        .iter()
        .map(|&s| {
            let a = s / last;
            let d = a - (a * a - 1.0).max(0.0).sqrt();
            d * d
        })
        .sum();
    Ok(last * last * (1.0 + 0.5 * sum))
}

/// Squared error of the nuclear-norm relaxation, `N σ_N²`.
pub fn err_bound_nn(sigmas: &[f64]) -> f64 {
    match sigmas.last() {
        Some(&last) => sigmas.len() as f64 * last * last,
        None => 0.0,
    }
}
