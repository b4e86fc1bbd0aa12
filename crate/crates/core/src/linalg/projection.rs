use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Result, StlsError};
use crate::model::ErrorStructure;

/// Frobenius-nearest projection onto `{E : L(E) = b}`, prepared once per structure.
#[derive(Debug, Clone)]
pub struct Projector {
    rows: usize,
    cols: usize,
    kind: Prepared,
}

#[derive(Debug, Clone)]
enum Prepared {
    Identity,
    /// Column-major linear indices with their fixed values; later duplicates win.
    Mask(Vec<(usize, f64)>),
    Toeplitz,
    General {
        ls: Vec<DMatrix<f64>>,
        b: DVector<f64>,
        gram: Cholesky<f64, Dyn>,
    },
}

/// Relative eigenvalue floor below which the constraint Gram matrix counts as singular.
const GRAM_TOL: f64 = 1e-12;

impl Projector {
    pub fn new(structure: &ErrorStructure, rows: usize, cols: usize) -> Result<Self> {
        let kind = match structure {
            ErrorStructure::Unconstrained => Prepared::Identity,
            ErrorStructure::Toeplitz => Prepared::Toeplitz,
            ErrorStructure::FixedMask(entries) => {
                let mut idx = Vec::with_capacity(entries.len());
                for e in entries {
                    if e.row >= rows || e.col >= cols {
                        return Err(StlsError::DimensionMismatch(format!(
                            "mask index ({}, {}) outside {rows}×{cols}",
                            e.row, e.col
                        )));
                    }
                    idx.push((e.col * rows + e.row, e.value));
                }
                Prepared::Mask(idx)
            }
            ErrorStructure::GeneralLinear(cons) => {
                if cons.is_empty() {
                    Prepared::Identity
                } else {
                    for c in cons {
                        if c.l.shape() != (rows, cols) {
                            return Err(StlsError::DimensionMismatch(format!(
                                "constraint matrix is {}×{}, expected {rows}×{cols}",
                                c.l.nrows(),
                                c.l.ncols()
                            )));
                        }
                    }
                    let k = cons.len();
                    let gram = DMatrix::from_fn(k, k, |i, j| cons[i].l.dot(&cons[j].l));
                    let eig = SymmetricEigen::new(gram.clone());
                    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
                    if !(hi > 0.0) || lo <= GRAM_TOL * hi {
                        return Err(StlsError::DegenerateConstraints(lo));
                    }
                    let gram = Cholesky::new(gram).ok_or(StlsError::DegenerateConstraints(lo))?;
                    Prepared::General {
                        ls: cons.iter().map(|c| c.l.clone()).collect(),
                        b: DVector::from_iterator(k, cons.iter().map(|c| c.b)),
                        gram,
                    }
                }
            }
        };
        Ok(Self { rows, cols, kind })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, Prepared::Identity)
    }

    pub fn project(&self, e: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = e.clone();
        self.project_mut(&mut out);
        out
    }

    pub fn project_mut(&self, e: &mut DMatrix<f64>) {
        assert_eq!(e.shape(), (self.rows, self.cols), "projection shape mismatch");
        match &self.kind {
            Prepared::Identity => {}
            Prepared::Mask(idx) => {
                let data = e.as_mut_slice();
                for &(k, v) in idx {
                    data[k] = v;
                }
            }
            Prepared::Toeplitz => toeplitz_average(e),
            Prepared::General { ls, b, gram } => {
                // second pass is one step of iterative refinement
                for _ in 0..2 {
                    let resid = DVector::from_iterator(ls.len(), ls.iter().zip(b.iter()).map(|(l, bi)| l.dot(e) - bi));
                    let coef = gram.solve(&resid);
                    for (l, c) in ls.iter().zip(coef.iter()) {
                        *e -= l * *c;
                    }
                }
            }
        }
    }

    /// Projection onto the homogeneous constraint set `{E : L(E) = 0}`.
    pub fn project_linear(&self, e: &DMatrix<f64>) -> DMatrix<f64> {
        let offset = self.project(&DMatrix::zeros(self.rows, self.cols));
        self.project(e) - offset
    }

    /// Largest constraint violation `|tr(LᵢᵀE) − bᵢ|` (absolute).
    pub fn violation(&self, e: &DMatrix<f64>) -> f64 {
        match &self.kind {
            Prepared::Identity => 0.0,
            Prepared::Mask(idx) => {
                let data = e.as_slice();
                idx.iter().map(|&(k, v)| (data[k] - v).abs()).fold(0.0, f64::max)
            }
            Prepared::Toeplitz => {
                let mut worst = 0.0f64;
                for j in 1..self.cols {
                    for i in 1..self.rows {
                        worst = worst.max((e[(i, j)] - e[(i - 1, j - 1)]).abs());
                    }
                }
                worst
            }
            Prepared::General { ls, b, .. } => ls
                .iter()
                .zip(b.iter())
                .map(|(l, bi)| (l.dot(e) - bi).abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Parametrization `E = E₀ + Σ θ_a B_a` of the structure set, with `E₀` its
/// least-norm element.
#[derive(Debug, Clone)]
pub(crate) enum Basis {
    /// Unit matrices at the listed column-major positions.
    Entries { rows: usize, idx: Vec<usize> },
    /// Indicators of the diagonals `j − i = a − (rows − 1)`.
    Diagonals { rows: usize, cols: usize },
    /// Orthonormal basis of the homogeneous constraint set.
    Dense(Vec<DMatrix<f64>>),
}

impl Basis {
    pub(crate) fn len(&self) -> usize {
        match self {
            Basis::Entries { idx, .. } => idx.len(),
            Basis::Diagonals { rows, cols } => rows + cols - 1,
            Basis::Dense(b) => b.len(),
        }
    }

    /// `B_a` as a matrix.
    pub(crate) fn element(&self, a: usize, shape: (usize, usize)) -> DMatrix<f64> {
        match self {
            Basis::Entries { idx, .. } => {
                let mut out = DMatrix::zeros(shape.0, shape.1);
                out.as_mut_slice()[idx[a]] = 1.0;
                out
            }
            Basis::Diagonals { rows, cols } => {
                DMatrix::from_fn(*rows, *cols, |i, j| if j + rows - 1 - i == a { 1.0 } else { 0.0 })
            }
            Basis::Dense(b) => b[a].clone(),
        }
    }

    /// `(⟨B_a, X⟩)_a`.
    pub(crate) fn adjoint(&self, x: &DMatrix<f64>) -> DVector<f64> {
        match self {
            Basis::Entries { idx, .. } => {
                let data = x.as_slice();
                DVector::from_iterator(idx.len(), idx.iter().map(|&k| data[k]))
            }
            Basis::Diagonals { rows, cols } => {
                let mut out = DVector::zeros(rows + cols - 1);
                for j in 0..*cols {
                    for i in 0..*rows {
                        out[j + rows - 1 - i] += x[(i, j)];
                    }
                }
                out
            }
            Basis::Dense(b) => DVector::from_iterator(b.len(), b.iter().map(|l| l.dot(x))),
        }
    }

    /// `E += Σ θ_a B_a`.
    pub(crate) fn add_to(&self, theta: &DVector<f64>, e: &mut DMatrix<f64>) {
        match self {
            Basis::Entries { idx, .. } => {
                let data = e.as_mut_slice();
                for (&k, t) in idx.iter().zip(theta.iter()) {
                    data[k] += t;
                }
            }
            Basis::Diagonals { rows, cols } => {
                for j in 0..*cols {
                    for i in 0..*rows {
                        e[(i, j)] += theta[j + rows - 1 - i];
                    }
                }
            }
            Basis::Dense(b) => {
                for (l, t) in b.iter().zip(theta.iter()) {
                    *e += l * *t;
                }
            }
        }
    }

    /// Row and column of every element, when each is a single entry.
    pub(crate) fn positions(&self) -> Option<Vec<(usize, usize)>> {
        match self {
            Basis::Entries { rows, idx } => Some(idx.iter().map(|&k| (k % rows, k / rows)).collect()),
            _ => None,
        }
    }
}

impl Projector {
    pub(crate) fn basis(&self) -> Basis {
        let (m, n) = (self.rows, self.cols);
        match &self.kind {
            Prepared::Identity => Basis::Entries {
                rows: m,
                idx: (0..m * n).collect(),
            },
            Prepared::Mask(fixed) => {
                let mut free = vec![true; m * n];
                for &(k, _) in fixed {
                    free[k] = false;
                }
                Basis::Entries {
                    rows: m,
                    idx: (0..m * n).filter(|&k| free[k]).collect(),
                }
            }
            Prepared::Toeplitz => Basis::Diagonals { rows: m, cols: n },
            Prepared::General { .. } => {
                // eigenvectors of the homogeneous projector with eigenvalue one
                let k = m * n;
                let mut proj = DMatrix::zeros(k, k);
                for c in 0..k {
                    let mut unit = DMatrix::zeros(m, n);
                    unit.as_mut_slice()[c] = 1.0;
                    proj.column_mut(c)
                        .copy_from_slice(self.project_linear(&unit).as_slice());
                }
                let eig = SymmetricEigen::new(crate::linalg::symmetrize(&proj));
                let b = (0..k)
                    .filter(|&c| eig.eigenvalues[c] > 0.5)
                    .map(|c| DMatrix::from_column_slice(m, n, eig.eigenvectors.column(c).as_slice()))
                    .collect();
                Basis::Dense(b)
            }
        }
    }
}

/// Replaces each diagonal `j − i = const` by its mean.
fn toeplitz_average(e: &mut DMatrix<f64>) {
    let (m, n) = e.shape();
    if m == 0 || n == 0 {
        return;
    }
    // offset d = j − i + (m − 1) ∈ [0, m + n − 2]
    let mut sums = vec![0.0; m + n - 1];
    let mut counts = vec![0usize; m + n - 1];
    for j in 0..n {
        for i in 0..m {
            let d = j + m - 1 - i;
            sums[d] += e[(i, j)];
            counts[d] += 1;
        }
    }
    for j in 0..n {
        for i in 0..m {
            let d = j + m - 1 - i;
            e[(i, j)] = sums[d] / counts[d] as f64;
        }
    }
}

/// One-shot projection of `e` onto `structure`.
pub fn project_structure(e: &DMatrix<f64>, structure: &ErrorStructure) -> Result<DMatrix<f64>> {
    Ok(Projector::new(structure, e.nrows(), e.ncols())?.project(e))
}
