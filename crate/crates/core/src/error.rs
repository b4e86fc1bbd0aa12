use thiserror::Error;

/// A single invariant violation found while validating a problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// `M >= N` is required (more rows than columns).
    TooWide {
        rows: usize,
        cols: usize,
    },
    /// At least two columns are needed for a rank-deficient target.
    TooFewColumns {
        cols: usize,
    },
    /// Weight matrix shape differs from the observed matrix.
    WeightShape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    NegativeWeight {
        row: usize,
        col: usize,
    },
    NonFinite {
        what: &'static str,
    },
    MaskIndexOutOfRange {
        row: usize,
        col: usize,
    },
    ConstraintShape {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    TargetRankOutOfRange {
        target: usize,
        max: usize,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::TooWide { rows, cols } => {
                write!(f, "M ≥ N required (got {rows}×{cols})")
            }
            Violation::TooFewColumns { cols } => write!(f, "N ≥ 2 required (got N = {cols})"),
            Violation::WeightShape { expected, found } => write!(
                f,
                "weights are {}×{}, expected {}×{}",
                found.0, found.1, expected.0, expected.1
            ),
            Violation::NegativeWeight { row, col } => {
                write!(f, "negative weight at ({row}, {col})")
            }
            Violation::NonFinite { what } => write!(f, "{what} has non-finite entries"),
            Violation::MaskIndexOutOfRange { row, col } => {
                write!(f, "mask index ({row}, {col}) out of range")
            }
            Violation::ConstraintShape { index, expected, found } => write!(
                f,
                "constraint {index} is {}×{}, expected {}×{}",
                found.0, found.1, expected.0, expected.1
            ),
            Violation::TargetRankOutOfRange { target, max } => {
                write!(f, "target rank {target} out of range [1, {max}]")
            }
        }
    }
}

/// Every violation found in one validation pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport(pub Vec<Violation>);

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StlsError {
    #[error("invalid problem: {0}")]
    Invalid(ValidationReport),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate baseline: smallest singular value of the input is zero")]
    DegenerateBaseline,
    #[error("singular Sylvester system (smallest pivot {pivot:e})")]
    SingularSylvester { pivot: f64 },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("degenerate constraint Gram system (smallest eigenvalue {0:e})")]
    DegenerateConstraints(f64),
    #[error("degenerate reweighting: {0}")]
    DegenerateReweight(&'static str),
    #[error("nongeneric TLS: last entry of the null vector is {0:e}, no finite β exists")]
    Nongeneric(f64),
    #[error("plain TLS ignores error structure; use an STLS solver for constrained problems")]
    StructureNotSupported,
    #[error("rank-infeasible: no α in the searched bracket yields rank ≤ {target}")]
    RankInfeasible { target: usize },
    #[error("ALM diverged at iteration {iteration} (residual {residual:e})")]
    Divergence { iteration: usize, residual: f64 },
    #[error("sign-indefinite solution: recovered scalers have mixed signs")]
    SignIndefinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl StlsError {
    /// Stable machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            StlsError::Invalid(_) => "invalid-problem",
            StlsError::DimensionMismatch(_) => "dimension-mismatch",
            StlsError::NonFinite(_) => "non-finite",
            StlsError::DegenerateBaseline => "degenerate-baseline",
            StlsError::SingularSylvester { .. } => "singular-sylvester",
            StlsError::NotSymmetric(_) => "not-symmetric",
            StlsError::DegenerateConstraints(_) => "degenerate-constraints",
            StlsError::DegenerateReweight(_) => "degenerate-reweight",
            StlsError::Nongeneric(_) => "nongeneric",
            StlsError::StructureNotSupported => "structure-not-supported",
            StlsError::RankInfeasible { .. } => "rank-infeasible",
            StlsError::Divergence { .. } => "divergence",
            StlsError::SignIndefinite => "sign-indefinite",
            StlsError::InvalidArgument(_) => "invalid-argument",
        }
    }
}

pub type Result<T, E = StlsError> = std::result::Result<T, E>;
