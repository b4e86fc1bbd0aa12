//! Structured total least squares via (reweighted) nuclear-norm relaxation.
//!
//! Given a noisy matrix `Ā` (M × N, M ≥ N) find a rank-deficient `Â = Ā − Ê`
//! whose correction `Ê` obeys affine structure constraints. The solvers here
//! use inexact augmented-Lagrangian iterations on the convex relaxation
//! `‖W₁ A W₂‖_* + α‖W ⊙ E‖²_F`, a search over α to reach the target rank, and
//! log-det style reweighting of `W₁`, `W₂`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod alm;
pub mod error;
pub mod hetero;
pub mod linalg;
pub mod model;
pub mod prox;
pub mod random;
pub mod tls;

pub use alm::{
    alm_nn_stls, alm_weighted_nn_stls, alpha_search, nn_stls, reweighted_stls, reweighted_stls_from, AlmReport,
    AlmSolver, AlmState, AlphaSearch,
};
pub use error::{Result, StlsError, ValidationReport, Violation};
pub use linalg::{project_structure, solve_sylvester, Projector, SylvesterSolver};
pub use model::{
    relative_error, relative_error_of, validate_problem, Diagnostics, ErrorStructure, FixedEntry, LinearConstraint,
    SolverConfig, StlsProblem, StlsSolution,
};
pub use prox::{
    err_bound_nn, err_bound_rwnn, log_threshold_scalar, log_threshold_spectral, svt, update_reweight, ReweightPair,
};
pub use tls::{extract_beta, logdet_tls, plain_tls};
