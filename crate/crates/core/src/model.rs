//! Problem, solution and configuration records shared by every solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StlsError, ValidationReport, Violation};
use crate::linalg;

/// An entry of the error matrix pinned to a known value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl FixedEntry {
    pub fn zero(row: usize, col: usize) -> Self {
        Self { row, col, value: 0.0 }
    }
}

/// One linear functional `tr(Lᵀ E) = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub l: DMatrix<f64>,
    pub b: f64,
}

/// Affine constraint set `L(E) = b` on the error matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ErrorStructure {
    #[default]
    Unconstrained,
    /// Listed entries are fixed; the rest vary freely.
    FixedMask(Vec<FixedEntry>),
    /// `E` is constant along every diagonal.
    Toeplitz,
    GeneralLinear(Vec<LinearConstraint>),
}

impl ErrorStructure {
    /// Fix every entry where `fixed(row, col)` is true to zero.
    pub fn mask_from_fn(rows: usize, cols: usize, mut fixed: impl FnMut(usize, usize) -> bool) -> Self {
        let mut entries = Vec::new();
        for j in 0..cols {
            for i in 0..rows {
                if fixed(i, j) {
                    entries.push(FixedEntry::zero(i, j));
                }
            }
        }
        ErrorStructure::FixedMask(entries)
    }

    pub fn is_unconstrained(&self) -> bool {
        matches!(self, ErrorStructure::Unconstrained)
    }
}

/// Observed matrix `Ā`, its error structure, element-wise weights and rank bound.
#[derive(Debug, Clone, PartialEq)]
pub struct StlsProblem {
    pub a_bar: DMatrix<f64>,
    pub structure: ErrorStructure,
    pub weights: DMatrix<f64>,
    pub target_rank: usize,
}

impl StlsProblem {
    /// Unit weights and `target_rank = N - 1`.
    pub fn new(a_bar: DMatrix<f64>, structure: ErrorStructure) -> Self {
        let (m, n) = a_bar.shape();
        Self {
            weights: DMatrix::from_element(m, n, 1.0),
            target_rank: n.saturating_sub(1),
            a_bar,
            structure,
        }
    }

    pub fn with_weights(mut self, weights: DMatrix<f64>) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_target_rank(mut self, target_rank: usize) -> Self {
        self.target_rank = target_rank;
        self
    }

    pub fn rows(&self) -> usize {
        self.a_bar.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a_bar.ncols()
    }

    /// Returns the problem unchanged when every invariant holds, otherwise all violations.
    pub fn validate(self) -> std::result::Result<Self, ValidationReport> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ValidationReport(violations))
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let (m, n) = self.a_bar.shape();
        let mut out = Vec::new();
        if m < n {
            out.push(Violation::TooWide { rows: m, cols: n });
        }
        if n < 2 {
            out.push(Violation::TooFewColumns { cols: n });
        }
        if self.a_bar.iter().any(|x| !x.is_finite()) {
            out.push(Violation::NonFinite {
                what: "observed matrix",
            });
        }
        if self.weights.shape() != (m, n) {
            out.push(Violation::WeightShape {
                expected: (m, n),
                found: self.weights.shape(),
            });
        } else {
            if self.weights.iter().any(|x| !x.is_finite()) {
                out.push(Violation::NonFinite { what: "weights" });
            }
            for j in 0..n {
                for i in 0..m {
                    if self.weights[(i, j)] < 0.0 {
                        out.push(Violation::NegativeWeight { row: i, col: j });
                    }
                }
            }
        }
        match &self.structure {
            ErrorStructure::Unconstrained | ErrorStructure::Toeplitz => {}
            ErrorStructure::FixedMask(entries) => {
                for e in entries {
                    if e.row >= m || e.col >= n {
                        out.push(Violation::MaskIndexOutOfRange { row: e.row, col: e.col });
                    }
                    if !e.value.is_finite() {
                        out.push(Violation::NonFinite { what: "mask value" });
                    }
                }
            }
            ErrorStructure::GeneralLinear(cons) => {
                for (index, c) in cons.iter().enumerate() {
                    if c.l.shape() != (m, n) {
                        out.push(Violation::ConstraintShape {
                            index,
                            expected: (m, n),
                            found: c.l.shape(),
                        });
                    }
                }
            }
        }
        let max = n.saturating_sub(1);
        if self.target_rank < 1 || self.target_rank > max {
            out.push(Violation::TargetRankOutOfRange {
                target: self.target_rank,
                max,
            });
        }
        out
    }
}

/// Free-function form of [`StlsProblem::validate`].
pub fn validate_problem(p: StlsProblem) -> Result<StlsProblem> {
    p.validate().map_err(StlsError::Invalid)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Relative feasibility residual of every ALM iteration that produced the solution.
    pub residual_history: Vec<f64>,
    /// ALM iterations of the final run.
    pub iterations: usize,
    /// ALM iterations summed over every run (bracketing, bisection, reweighting).
    pub total_iterations: usize,
    pub alm_runs: usize,
    pub numerical_rank: usize,
    pub converged: bool,
    /// `‖Ā − A − E‖_F / ‖Ā‖_F` of the returned pair.
    pub feas_residual: f64,
    /// Singular values zeroed by a fixed-threshold method.
    pub annihilated: usize,
    /// Relative error after each reweighting round.
    pub round_errors: Vec<f64>,
    /// α chosen in each reweighting round.
    pub round_alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StlsSolution {
    /// Rank-deficient estimate `A`.
    pub a_hat: DMatrix<f64>,
    /// Error estimate `E`, with `Ā ≈ A + E`.
    pub e_hat: DMatrix<f64>,
    /// Unit right singular vector of `a_hat` for its smallest singular value.
    pub null_vec: DVector<f64>,
    /// Regression coefficients read off `null_vec`, when it has a usable last entry.
    pub beta: Option<DVector<f64>>,
    pub alpha: f64,
    pub diagnostics: Diagnostics,
}

impl StlsSolution {
    /// Fills in `null_vec`, `beta` and the rank/residual diagnostics from `a_hat` and `e_hat`.
    pub(crate) fn assemble(
        a_bar: &DMatrix<f64>,
        a_hat: DMatrix<f64>,
        e_hat: DMatrix<f64>,
        alpha: f64,
        rank_tol: f64,
        mut diagnostics: Diagnostics,
    ) -> Result<Self> {
        let f = linalg::svd(&a_hat)?;
        let null_vec = f.v.column(f.v.ncols() - 1).into_owned();
        let beta = crate::tls::extract_beta(&null_vec).ok();
        diagnostics.numerical_rank = linalg::numerical_rank(f.s.as_slice(), rank_tol);
        let scale = a_bar.norm().max(f64::MIN_POSITIVE);
        diagnostics.feas_residual = (a_bar - &a_hat - &e_hat).norm() / scale;
        Ok(Self {
            a_hat,
            e_hat,
            null_vec,
            beta,
            alpha,
            diagnostics,
        })
    }
}

/// Solver knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Geometric growth factor `a` of the penalty, `μ_k = μ_0 a^k`.
    pub mu_growth: f64,
    /// Initial penalty relative to the spectral norm of the thresholded variable.
    pub mu_init: f64,
    /// Reweighting regularizer, relative to the largest singular value.
    pub delta: f64,
    pub max_reweights: usize,
    pub alm_max_iters: usize,
    /// Relative feasibility tolerance of the ALM stopping rule.
    pub feas_tol: f64,
    /// Relative singular-value cutoff for numerical rank.
    pub rank_tol: f64,
    pub alpha_bracket_factor: f64,
    pub alpha_bisection_iters: usize,
    /// Bracket expansions allowed in each direction before giving up.
    pub alpha_max_expansions: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu_growth: 1.05,
            mu_init: 1.0,
            delta: 1e-4,
            max_reweights: 3,
            alm_max_iters: 500,
            feas_tol: 1e-8,
            rank_tol: 1e-6,
            alpha_bracket_factor: 10.0,
            alpha_bisection_iters: 30,
            alpha_max_expansions: 30,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("mu_init", self.mu_init),
            ("delta", self.delta),
            ("feas_tol", self.feas_tol),
            ("rank_tol", self.rank_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(StlsError::InvalidArgument(format!("{name} must be > 0")));
            }
        }
        if !(self.mu_growth > 1.0 && self.mu_growth.is_finite()) {
            return Err(StlsError::InvalidArgument("mu_growth must be > 1".into()));
        }
        if !(self.alpha_bracket_factor > 1.0) {
            return Err(StlsError::InvalidArgument("alpha_bracket_factor must be > 1".into()));
        }
        if self.alm_max_iters == 0 {
            return Err(StlsError::InvalidArgument("alm_max_iters must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// `‖Ā − A‖_F / σ_N(Ā)`: error relative to the unstructured TLS optimum.
pub fn relative_error(p: &StlsProblem, sol: &StlsSolution) -> Result<f64> {
    relative_error_of(&p.a_bar, &sol.a_hat)
}

pub fn relative_error_of(a_bar: &DMatrix<f64>, a_hat: &DMatrix<f64>) -> Result<f64> {
    let s = linalg::singular_values(a_bar)?;
    let sigma_min = s[s.len() - 1];
    if sigma_min <= f64::EPSILON * s[0] * (a_bar.nrows().max(a_bar.ncols()) as f64) {
        return Err(StlsError::DegenerateBaseline);
    }
    Ok((a_bar - a_hat).norm() / sigma_min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(m: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |i, j| (i * n + j) as f64 + 1.0)
    }

    #[test]
    fn valid_problem_passes() {
        let p = StlsProblem::new(ones(10, 3), ErrorStructure::Unconstrained);
        assert!(validate_problem(p).is_ok());
    }

    #[test]
    fn wide_matrix_rejected() {
        let p = StlsProblem::new(ones(3, 10), ErrorStructure::Unconstrained);
        let err = p.validate().unwrap_err();
        assert!(err.0.contains(&Violation::TooWide { rows: 3, cols: 10 }));
        assert!(err.to_string().contains("M ≥ N required"));
    }

    #[test]
    fn mask_out_of_range_rejected() {
        let p = StlsProblem::new(ones(10, 3), ErrorStructure::FixedMask(vec![FixedEntry::zero(11, 0)]));
        let err = p.validate().unwrap_err();
        assert_eq!(err.0, vec![Violation::MaskIndexOutOfRange { row: 11, col: 0 }]);
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn every_violation_is_listed() {
        let mut w = DMatrix::from_element(10, 3, 1.0);
        w[(2, 1)] = -1.0;
        let p = StlsProblem::new(ones(10, 3), ErrorStructure::Unconstrained)
            .with_weights(w)
            .with_target_rank(3);
        let err = p.validate().unwrap_err();
        assert_eq!(err.0.len(), 2);
        assert!(err.0.contains(&Violation::NegativeWeight { row: 2, col: 1 }));
        assert!(err.0.contains(&Violation::TargetRankOutOfRange { target: 3, max: 2 }));
    }

    #[test]
    fn weight_shape_mismatch() {
        let p =
            StlsProblem::new(ones(4, 3), ErrorStructure::Unconstrained).with_weights(DMatrix::from_element(3, 3, 1.0));
        assert!(matches!(p.validate().unwrap_err().0[0], Violation::WeightShape { .. }));
    }

    #[test]
    fn validation_is_idempotent() {
        let p = StlsProblem::new(ones(6, 4), ErrorStructure::Toeplitz);
        let once = p.clone().validate().unwrap();
        let twice = once.clone().validate().unwrap();
        assert_eq!(once, twice);
        assert_eq!(once, p);
    }

    #[test]
    fn relative_error_of_truncation_is_one() {
        let a = DMatrix::from_row_slice(3, 2, &[3.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let a_hat = DMatrix::from_row_slice(3, 2, &[3.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((relative_error_of(&a, &a_hat).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relative_error_degenerate_baseline() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(relative_error_of(&a, &a), Err(StlsError::DegenerateBaseline)));
    }

    #[test]
    fn default_config_is_valid() {
        SolverConfig::default().check().unwrap();
        let bad = SolverConfig {
            mu_growth: 1.0,
            ..Default::default()
        };
        assert!(bad.check().is_err());
    }
}
