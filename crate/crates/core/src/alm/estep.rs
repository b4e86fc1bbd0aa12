//! Exact error update of the weighted split:
//! `argmin_{E feasible} α‖W ⊙ E‖² + μ/2 ‖W₁ E W₂ − C‖²`.
//!
//! Everything that depends only on the weights is factored once, so each
//! iteration costs a few products whatever `α` and `μ` are.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, StlsError};
use crate::linalg::{Basis, Projector};
use crate::prox::ReweightPair;

pub(super) enum ErrorStep {
    /// No constraints and uniform weights: diagonal in the eigenbases of `W₁²`, `W₂²`.
    Spectral {
        q1: DMatrix<f64>,
        g1: DVector<f64>,
        q2: DMatrix<f64>,
        g2: DVector<f64>,
        w_sq: f64,
    },
    /// Normal equations in the structure parameters,
    /// `(2αΩ + μG)θ = r` with `Ω = LLᵀ` and `L⁻¹GL⁻ᵀ = QΓQᵀ`.
    Params {
        basis: Basis,
        e0: DMatrix<f64>,
        /// `L⁻ᵀQ`
        t: DMatrix<f64>,
        gamma: DVector<f64>,
        /// `Bᵀ(W² ⊙ E₀)`
        g0: DVector<f64>,
        /// `Bᵀ(W₁² E₀ W₂²)`
        g1: DVector<f64>,
    },
}

impl ErrorStep {
    pub(super) fn new(projector: &Projector, weights_sq: &DMatrix<f64>, rw: &ReweightPair) -> Result<Self> {
        let b1 = &rw.w1 * &rw.w1;
        let b2 = &rw.w2 * &rw.w2;
        let first = weights_sq[(0, 0)];
        if projector.is_identity() && weights_sq.iter().all(|&w| w == first) {
            let e1 = SymmetricEigen::new(crate::linalg::symmetrize(&b1));
            let e2 = SymmetricEigen::new(crate::linalg::symmetrize(&b2));
            return Ok(ErrorStep::Spectral {
                q1: e1.eigenvectors,
                g1: e1.eigenvalues,
                q2: e2.eigenvectors,
                g2: e2.eigenvalues,
                w_sq: first,
            });
        }

        let (m, n) = weights_sq.shape();
        let basis = projector.basis();
        let e0 = projector.project(&DMatrix::zeros(m, n));
        let p = basis.len();
        let (omega, gram) = match basis.positions() {
            Some(pos) => {
                let omega =
                    DMatrix::from_diagonal(&DVector::from_iterator(p, pos.iter().map(|&(i, j)| weights_sq[(i, j)])));
                let gram = DMatrix::from_fn(p, p, |a, b| {
                    let ((i, j), (k, l)) = (pos[a], pos[b]);
                    b1[(i, k)] * b2[(j, l)]
                });
                (omega, gram)
            }
            None => {
                let elems: Vec<_> = (0..p).map(|a| basis.element(a, (m, n))).collect();
                let weighted: Vec<_> = elems.iter().map(|b| rw.apply(b)).collect();
                let omega = DMatrix::from_fn(p, p, |a, b| elems[a].component_mul(&elems[b]).dot(weights_sq));
                let gram = DMatrix::from_fn(p, p, |a, b| weighted[a].dot(&weighted[b]));
                (omega, gram)
            }
        };
        let chol = omega
            .cholesky()
            .ok_or_else(|| StlsError::InvalidArgument("weights vanish on a free direction".into()))?;
        let l_inv = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .expect("Cholesky factor is nonsingular");
        let whitened = crate::linalg::symmetrize(&(&l_inv * gram * l_inv.transpose()));
        let eig = SymmetricEigen::new(whitened);
        let t = l_inv.transpose() * eig.eigenvectors;
        let g0 = basis.adjoint(&weights_sq.component_mul(&e0));
        let g1 = basis.adjoint(&(&b1 * &e0 * &b2));
        Ok(ErrorStep::Params {
            basis,
            e0,
            t,
            gamma: eig.eigenvalues,
            g0,
            g1,
        })
    }

    /// Minimizer given `W₁ C W₂`.
    pub(super) fn solve(&self, alpha: f64, mu: f64, w_c: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            ErrorStep::Spectral { q1, g1, q2, g2, w_sq } => {
                // 2αw² E + μ W₁² E W₂² = μ W₁ C W₂
                let mut rot = q1.transpose() * w_c * q2;
                for j in 0..rot.ncols() {
                    for i in 0..rot.nrows() {
                        rot[(i, j)] *= mu / (2.0 * alpha * w_sq + mu * g1[i] * g2[j]);
                    }
                }
                q1 * rot * q2.transpose()
            }
            ErrorStep::Params {
                basis,
                e0,
                t,
                gamma,
                g0,
                g1,
            } => {
                let r = basis.adjoint(w_c) * mu - g0 * (2.0 * alpha) - g1 * mu;
                let mut coef = t.tr_mul(&r);
                for (c, g) in coef.iter_mut().zip(gamma.iter()) {
                    *c /= 2.0 * alpha + mu * g;
                }
                let theta = t * coef;
                let mut e = e0.clone();
                basis.add_to(&theta, &mut e);
                e
            }
        }
    }
}
