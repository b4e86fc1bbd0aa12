//! Dense linear-algebra primitives: SVD facade, numerical rank, Sylvester solves,
//! PSD inverse square roots and projections onto error structures.

mod projection;
mod sylvester;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Result, StlsError};

pub(crate) use projection::Basis;
pub use projection::{project_structure, Projector};
pub use sylvester::{solve_sylvester, SylvesterSolver};

/// Thin SVD `A = U diag(s) Vᵀ` with `s` non-increasing.
///
/// Each pair of singular vectors is oriented so that the largest-magnitude
/// entry of the right vector is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `U diag(s) Vᵀ`.
    pub fn recompose(&self) -> DMatrix<f64> {
        recompose_with(&self.u, self.s.as_slice(), &self.v)
    }
}

/// `U diag(s) Vᵀ` skipping exact zeros in `s`.
pub(crate) fn recompose_with(u: &DMatrix<f64>, s: &[f64], v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(u.nrows(), v.nrows());
    for (k, &sk) in s.iter().enumerate() {
        if sk != 0.0 {
            out.ger(sk, &u.column(k), &v.column(k), 1.0);
        }
    }
    out
}

pub(crate) fn check_finite(a: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StlsError::NonFinite(what))
    }
}

pub fn svd(a: &DMatrix<f64>) -> Result<SvdFactors> {
    check_finite(a, "svd input")?;
    let r = a.nrows().min(a.ncols());
    if r == 0 {
        return Ok(SvdFactors {
            u: DMatrix::zeros(a.nrows(), 0),
            s: DVector::zeros(0),
            v: DMatrix::zeros(a.ncols(), 0),
        });
    }
    let dec = SVD::try_new(a.clone(), true, true, f64::EPSILON, 0).ok_or(StlsError::NonFinite("svd iteration"))?;
    let mut u = dec.u.expect("u requested");
    let mut v = dec.v_t.expect("v requested").transpose();
    let s = dec.singular_values;
    for k in 0..r {
        let col = v.column(k);
        let (idx, _) = col.iter().enumerate().fold(
            (0, -1.0),
            |best, (i, x)| if x.abs() > best.1 { (i, x.abs()) } else { best },
        );
        if col[idx] < 0.0 {
            v.column_mut(k).neg_mut();
            u.column_mut(k).neg_mut();
        }
    }
    Ok(SvdFactors { u, s, v })
}

pub fn singular_values(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_finite(a, "svd input")?;
    let dec = SVD::try_new(a.clone(), false, false, f64::EPSILON, 0).ok_or(StlsError::NonFinite("svd iteration"))?;
    Ok(dec.singular_values)
}

/// Number of singular values strictly above `rank_tol · s₁`.
pub fn numerical_rank(s: &[f64], rank_tol: f64) -> usize {
    let Some(&largest) = s.first() else {
        return 0;
    };
    if largest <= 0.0 {
        return 0;
    }
    let cutoff = rank_tol * largest;
    s.iter().filter(|&&x| x > cutoff).count()
}

/// Unit vector minimizing `‖A v‖₂`, sign-normalized so its largest-magnitude entry is positive.
pub fn min_right_singular_vector(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    if a.nrows() < a.ncols() || a.ncols() == 0 {
        return Err(StlsError::DimensionMismatch(format!(
            "need M ≥ N ≥ 1, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let f = svd(a)?;
    Ok(f.v.column(f.rank() - 1).into_owned())
}

/// `(Y + δI)^{-1/2}` for symmetric PSD `Y`; eigenvalues down to `-1e-10` are clamped to zero.
pub fn inv_sqrt_psd(y: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>> {
    if !y.is_square() {
        return Err(StlsError::DimensionMismatch(
            "inv_sqrt_psd needs a square matrix".into(),
        ));
    }
    if !(delta > 0.0) {
        return Err(StlsError::InvalidArgument("delta must be > 0".into()));
    }
    check_finite(y, "inv_sqrt_psd input")?;
    let asym = max_asymmetry(y);
    let scale = y.amax().max(1.0);
    if asym > 1e-10 * scale {
        return Err(StlsError::NotSymmetric(asym));
    }
    let sym = symmetrize(y);
    let eig = SymmetricEigen::new(sym);
    let d = eig.eigenvalues.map(|l| (l.max(0.0) + delta).powf(-0.5));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&d) * q.transpose();
    out = symmetrize(&out);
    Ok(out)
}

pub(crate) fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}
