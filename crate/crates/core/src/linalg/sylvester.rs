//! Solver for the discrete-Lyapunov form of the Sylvester equation
//! `X + B₁ X B₂ = C` by the Bartels–Stewart method.
//!
//! Both coefficient matrices are reduced to real Schur form once,
//! `Bᵢ = Qᵢ Tᵢ Qᵢᵀ`, after which each right-hand side costs two orthogonal
//! transforms plus a block back-substitution on the quasi-triangular factors.
//! Symmetric coefficients use the symmetric eigendecomposition, where `Tᵢ` is
//! diagonal and the back-substitution collapses to an element-wise division.

use nalgebra::{DMatrix, Schur, SymmetricEigen};

use super::{check_finite, max_asymmetry, symmetrize};
use crate::error::{Result, StlsError};

#[derive(Debug, Clone)]
struct SchurFactor {
    q: DMatrix<f64>,
    t: DMatrix<f64>,
    /// `(start, size)` of each diagonal block, size 1 or 2.
    blocks: Vec<(usize, usize)>,
    diagonal: bool,
}

impl SchurFactor {
    fn new(b: &DMatrix<f64>) -> Result<Self> {
        let n = b.nrows();
        let scale = b.amax().max(f64::MIN_POSITIVE);
        if max_asymmetry(b) <= 1e-13 * scale {
            let eig = SymmetricEigen::new(symmetrize(b));
            return Ok(Self {
                t: DMatrix::from_diagonal(&eig.eigenvalues),
                q: eig.eigenvectors,
                blocks: (0..n).map(|i| (i, 1)).collect(),
                diagonal: true,
            });
        }
        let (q, mut t) = Schur::try_new(b.clone(), f64::EPSILON, 0)
            .ok_or(StlsError::NonFinite("schur iteration"))?
            .unpack();
        let mut blocks = Vec::with_capacity(n);
        let mut i = 0;
        while i < n {
            let sub = if i + 1 < n { t[(i + 1, i)] } else { 0.0 };
            let local = t[(i, i)].abs() + if i + 1 < n { t[(i + 1, i + 1)].abs() } else { 0.0 };
            if i + 1 < n && sub.abs() > f64::EPSILON * local.max(f64::MIN_POSITIVE) {
                blocks.push((i, 2));
                i += 2;
            } else {
                if i + 1 < n {
                    t[(i + 1, i)] = 0.0;
                }
                blocks.push((i, 1));
                i += 1;
            }
        }
        for j in 0..n {
            for r in (j + 1)..n {
                let in_block = blocks.iter().any(|&(s, k)| k == 2 && s == j && r == j + 1);
                if !in_block {
                    t[(r, j)] = 0.0;
                }
            }
        }
        Ok(Self {
            q,
            t,
            blocks,
            diagonal: false,
        })
    }
}

/// Prefactored solver for `X + B₁ X B₂ = C` with fixed `B₁` (M×M) and `B₂` (N×N).
#[derive(Debug, Clone)]
pub struct SylvesterSolver {
    left: SchurFactor,
    right: SchurFactor,
}

/// Smallest accepted `|1 + t s|`-type pivot, relative to the pivot's scale.
const PIVOT_TOL: f64 = 64.0 * f64::EPSILON;

impl SylvesterSolver {
    pub fn new(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> Result<Self> {
        if !b1.is_square() || !b2.is_square() {
            return Err(StlsError::DimensionMismatch(
                "Sylvester coefficients must be square".into(),
            ));
        }
        check_finite(b1, "Sylvester B1")?;
        check_finite(b2, "Sylvester B2")?;
        let solver = Self {
            left: SchurFactor::new(b1)?,
            right: SchurFactor::new(b2)?,
        };
        solver.check_pivots()?;
        Ok(solver)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.left.q.nrows(), self.right.q.nrows())
    }

    /// Rejects coefficient pairs whose diagonal-block systems are singular.
    fn check_pivots(&self) -> Result<()> {
        for &(i, p) in &self.left.blocks {
            for &(j, q) in &self.right.blocks {
                let sys = block_system(
                    &self.left.t.view((i, i), (p, p)).into_owned(),
                    &self.right.t.view((j, j), (q, q)).into_owned(),
                );
                let scale = 1.0 + sys.amax();
                let smin = if sys.nrows() == 1 {
                    sys[(0, 0)].abs()
                } else {
                    sys.singular_values().min()
                };
                if smin <= PIVOT_TOL * scale {
                    return Err(StlsError::SingularSylvester { pivot: smin });
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (m, n) = self.dims();
        if c.shape() != (m, n) {
            return Err(StlsError::DimensionMismatch(format!(
                "right-hand side is {}×{}, expected {m}×{n}",
                c.nrows(),
                c.ncols()
            )));
        }
        check_finite(c, "Sylvester C")?;
        let f = self.left.q.transpose() * c * &self.right.q;
        let y = if self.left.diagonal && self.right.diagonal {
            let t1 = self.left.t.diagonal();
            let t2 = self.right.t.diagonal();
            DMatrix::from_fn(m, n, |i, j| f[(i, j)] / (1.0 + t1[i] * t2[j]))
        } else {
            self.back_substitute(f)?
        };
        Ok(&self.left.q * y * self.right.q.transpose())
    }

    /// Solves `Y + T₁ Y T₂ = F` for quasi-upper-triangular `T₁`, `T₂`.
    fn back_substitute(&self, f: DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (m, _) = self.dims();
        let t1 = &self.left.t;
        let t2 = &self.right.t;
        let mut y = DMatrix::<f64>::zeros(f.nrows(), f.ncols());
        for &(j, p) in &self.right.blocks {
            // R_J = F_J − T₁ Σ_{K<J} Y_K T₂[K, J]
            let mut rhs = f.columns(j, p).into_owned();
            if j > 0 {
                let carried = y.columns(0, j) * t2.view((0, j), (j, p));
                rhs -= t1 * carried;
            }
            let s = t2.view((j, j), (p, p)).into_owned();
            let mut yj = DMatrix::<f64>::zeros(m, p);
            for &(i, q) in self.left.blocks.iter().rev() {
                let mut r = rhs.rows(i, q).into_owned();
                let below = i + q;
                if below < m {
                    let tail = t1.view((i, below), (q, m - below)) * yj.rows(below, m - below);
                    r -= tail * &s;
                }
                let tii = t1.view((i, i), (q, q)).into_owned();
                let block = solve_small(&tii, &s, &r)?;
                yj.rows_mut(i, q).copy_from(&block);
            }
            y.columns_mut(j, p).copy_from(&yj);
        }
        Ok(y)
    }
}

/// `I + Sᵀ ⊗ T` acting on `vec(Y)` for `Y + T Y S = R`.
fn block_system(t: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let (q, p) = (t.nrows(), s.nrows());
    let mut k = s.transpose().kronecker(t);
    for d in 0..(q * p) {
        k[(d, d)] += 1.0;
    }
    k
}

fn solve_small(t: &DMatrix<f64>, s: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if t.nrows() == 1 && s.nrows() == 1 {
        let piv = 1.0 + t[(0, 0)] * s[(0, 0)];
        return Ok(r / piv);
    }
    let sys = block_system(t, s);
    let rhs = nalgebra::DVector::from_column_slice(r.as_slice());
    let x = sys
        .full_piv_lu()
        .solve(&rhs)
        .ok_or(StlsError::SingularSylvester { pivot: 0.0 })?;
    Ok(DMatrix::from_column_slice(r.nrows(), r.ncols(), x.as_slice()))
}

/// One-shot solve of `X + B₁ X B₂ = C`.
pub fn solve_sylvester(b1: &DMatrix<f64>, b2: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    SylvesterSolver::new(b1, b2)?.solve(c)
}
