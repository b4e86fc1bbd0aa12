//! Inexact augmented-Lagrangian solvers for nuclear-norm and weighted
//! nuclear-norm STLS, the search over the error weight α, and the
//! reweighting outer loop.
//!
//! Every ALM step performs a single sweep of block-coordinate updates and
//! then moves the multipliers, with the penalty growing geometrically,
//! `μ_k = μ_0 a^k`. The structure constraint `L(E) = b` is never
//! relaxed: every E-iterate lies in the affine set.
//!
//! The weighted solver substitutes `A = Ā − E` and splits only
//! `D = W₁(Ā − E)W₂`, so each sweep has two blocks: a soft-thresholding for
//! `D` and an exact structured least-squares solve for `E`.

mod estep;

use nalgebra::DMatrix;

use crate::error::{Result, StlsError};
use crate::linalg::{self, recompose_with, Projector};
use crate::model::{relative_error_of, Diagnostics, SolverConfig, StlsProblem, StlsSolution};
use crate::prox::{update_reweight, ReweightPair};
use estep::ErrorStep;

/// Consecutive below-tolerance iterations needed to declare convergence.
const CONVERGED_STREAK: usize = 3;
/// Divergence: residual above `DIVERGENCE_FACTOR ×` its first value for this many iterations.
const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_STREAK: usize = 50;

/// Iterates of one ALM run.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmState {
    /// Low-rank iterate; `W₁⁻¹ D W₂⁻¹` for the weighted solver.
    pub a: DMatrix<f64>,
    pub e: DMatrix<f64>,
    /// Split variable `D ≈ W₁(Ā − E)W₂`; weighted solver only.
    pub d: Option<DMatrix<f64>>,
    /// Multiplier of `Ā = A + E`, or of `D = W₁(Ā − E)W₂` when weighted.
    pub lambda: DMatrix<f64>,
    pub mu: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlmReport {
    /// `‖Ā − A − E‖_F / ‖Ā‖_F` per iteration.
    pub feas_history: Vec<f64>,
    /// Penalty used in each iteration.
    pub mu_history: Vec<f64>,
    pub final_rank: usize,
    /// Singular values left nonzero by the last soft-thresholding step (exact count).
    pub thresholded_rank: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[allow(clippy::large_enum_variant)] // one per solver
enum Penalty {
    Nuclear,
    Weighted {
        rw: ReweightPair,
        /// `W₁ Ā W₂`
        wa_bar: DMatrix<f64>,
        estep: ErrorStep,
    },
}

/// ALM solver prepared for one problem and one penalty.
pub struct AlmSolver<'a> {
    problem: &'a StlsProblem,
    cfg: &'a SolverConfig,
    projector: Projector,
    weights_sq: DMatrix<f64>,
    a_norm: f64,
    /// `mu_init` divided by the spectral norm of the thresholded variable at `Ā`.
    mu0: f64,
    penalty: Penalty,
}

impl<'a> AlmSolver<'a> {
    /// Solver for `min ‖A‖_* + α‖W ⊙ E‖²_F`.
    pub fn nuclear(problem: &'a StlsProblem, cfg: &'a SolverConfig) -> Result<Self> {
        Self::build(problem, cfg, Penalty::Nuclear)
    }

    /// Solver for `min ‖W₁ A W₂‖_* + α‖W ⊙ E‖²_F`.
    pub fn weighted(problem: &'a StlsProblem, rw: &ReweightPair, cfg: &'a SolverConfig) -> Result<Self> {
        if rw.dims() != problem.a_bar.shape() {
            return Err(StlsError::DimensionMismatch(format!(
                "reweighting pair is for {:?}, problem is {:?}",
                rw.dims(),
                problem.a_bar.shape()
            )));
        }
        let problem = problem_checked(problem)?;
        let (m, n) = problem.a_bar.shape();
        let projector = Projector::new(&problem.structure, m, n)?;
        let estep = ErrorStep::new(&projector, &problem.weights.map(|w| w * w), rw)?;
        Self::build(
            problem,
            cfg,
            Penalty::Weighted {
                rw: rw.clone(),
                wa_bar: rw.apply(&problem.a_bar),
                estep,
            },
        )
    }

    fn build(problem: &'a StlsProblem, cfg: &'a SolverConfig, penalty: Penalty) -> Result<Self> {
        cfg.check()?;
        let problem = problem_checked(problem)?;
        let (m, n) = problem.a_bar.shape();
        let projector = Projector::new(&problem.structure, m, n)?;
        let weights_sq = problem.weights.map(|w| w * w);
        let a_norm = problem.a_bar.norm().max(f64::MIN_POSITIVE);
        let scale = match &penalty {
            Penalty::Nuclear => linalg::singular_values(&problem.a_bar)?[0],
            Penalty::Weighted { wa_bar, .. } => linalg::singular_values(wa_bar)?[0],
        };
        let mu0 = if scale > 0.0 { cfg.mu_init / scale } else { cfg.mu_init };
        Ok(Self {
            problem,
            cfg,
            projector,
            weights_sq,
            a_norm,
            mu0,
            penalty,
        })
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self.penalty, Penalty::Weighted { .. })
    }

    fn initial_state(&self) -> AlmState {
        let a_bar = &self.problem.a_bar;
        let (m, n) = a_bar.shape();
        let weighted = self.is_weighted();
        let mut e = DMatrix::zeros(m, n);
        self.projector.project_mut(&mut e);
        AlmState {
            a: a_bar - &e,
            e,
            d: weighted.then(|| DMatrix::zeros(m, n)),
            lambda: DMatrix::zeros(m, n),
            mu: self.mu0,
            iteration: 0,
        }
    }

    /// `E ← Π( (Λ + μ(Ā − A)) ⊘ (2αW² + μ) )`.
    fn update_e(&self, alpha: f64, lambda: &DMatrix<f64>, a: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
        let a_bar = &self.problem.a_bar;
        let mut e = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
            (lambda[(i, j)] + mu * (a_bar[(i, j)] - a[(i, j)])) / (2.0 * alpha * self.weights_sq[(i, j)] + mu)
        });
        self.projector.project_mut(&mut e);
        e
    }

    /// Runs ALM at a fixed α, optionally warm-started from an earlier state
    /// (its penalty is reset to the initial value).
    pub fn solve(&self, alpha: f64, warm: Option<&AlmState>) -> Result<(StlsSolution, AlmReport, AlmState)> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(StlsError::InvalidArgument(format!(
                "alpha must be finite and > 0, got {alpha}"
            )));
        }
        let mut state = match warm {
            Some(w) if w.a.shape() == self.problem.a_bar.shape() && w.d.is_some() == self.is_weighted() => AlmState {
                mu: self.mu0,
                iteration: 0,
                ..w.clone()
            },
            _ => self.initial_state(),
        };
        let mut report = AlmReport::default();
        let mut streak = 0;
        let mut diverging = 0;
        let mut first_residual = None;
        while state.iteration < self.cfg.alm_max_iters {
            let mu = state.mu;
            let (worst, rank) = match &self.penalty {
                Penalty::Nuclear => self.step_nuclear(alpha, &mut state)?,
                Penalty::Weighted { rw, wa_bar, estep } => self.step_weighted(alpha, rw, wa_bar, estep, &mut state)?,
            };
            report.thresholded_rank = rank;
            report.mu_history.push(mu);
            report.feas_history.push(worst);
            state.iteration += 1;
            state.mu = mu * self.cfg.mu_growth;

            if !worst.is_finite() {
                return Err(StlsError::NonFinite("ALM iterate"));
            }
            // residuals are relative to ‖Ā‖, so O(1) excursions are not divergence
            let r0 = first_residual.get_or_insert(worst).max(1.0);
            if worst > DIVERGENCE_FACTOR * r0 {
                diverging += 1;
                if diverging >= DIVERGENCE_STREAK {
                    return Err(StlsError::Divergence {
                        iteration: state.iteration,
                        residual: worst,
                    });
                }
            } else {
                diverging = 0;
            }
            if worst <= self.cfg.feas_tol {
                streak += 1;
                if streak >= CONVERGED_STREAK {
                    report.converged = true;
                    break;
                }
            } else {
                streak = 0;
            }
        }
        report.iterations = state.iteration;
        let sol = self.extract(alpha, &state, &report)?;
        report.final_rank = sol.diagnostics.numerical_rank;
        Ok((sol, report, state))
    }

    fn step_nuclear(&self, alpha: f64, st: &mut AlmState) -> Result<(f64, usize)> {
        let a_bar = &self.problem.a_bar;
        let mu = st.mu;
        let (a, rank) = shrink(&(a_bar - &st.e + &st.lambda / mu), 1.0 / mu)?;
        st.a = a;
        st.e = self.update_e(alpha, &st.lambda, &st.a, mu);
        let resid = a_bar - &st.a - &st.e;
        st.lambda += &resid * mu;
        Ok((resid.norm() / self.a_norm, rank))
    }

    fn step_weighted(
        &self,
        alpha: f64,
        rw: &ReweightPair,
        wa_bar: &DMatrix<f64>,
        estep: &ErrorStep,
        st: &mut AlmState,
    ) -> Result<(f64, usize)> {
        let mu = st.mu;
        let scaled = &st.lambda / mu;
        let (d, rank) = shrink(&(wa_bar - rw.apply(&st.e) + &scaled), 1.0 / mu)?;
        st.e = estep.solve(alpha, mu, &rw.apply(&(wa_bar - &d + scaled)));
        st.lambda += (wa_bar - rw.apply(&st.e) - &d) * mu;
        st.a = rw.unapply(&d);
        st.d = Some(d);
        let resid = &self.problem.a_bar - &st.a - &st.e;
        Ok((resid.norm() / self.a_norm, rank))
    }

    /// Low-rank part from the thresholded variable, error part from the projected E iterate.
    fn extract(&self, alpha: f64, st: &AlmState, report: &AlmReport) -> Result<StlsSolution> {
        let mut a_hat = match (&self.penalty, &st.d) {
            (Penalty::Weighted { rw, .. }, Some(d)) => rw.unapply(d),
            _ => st.a.clone(),
        };
        let mut e_hat = st.e.clone();
        let f = linalg::svd(&a_hat)?;
        let rank = linalg::numerical_rank(f.s.as_slice(), self.cfg.rank_tol);
        if rank < f.rank() {
            if let Some(delta) = snap_correction(&self.projector, &a_hat, rank) {
                a_hat -= &delta;
                e_hat += &delta;
            }
        }
        let diagnostics = Diagnostics {
            residual_history: report.feas_history.clone(),
            iterations: report.iterations,
            total_iterations: report.iterations,
            alm_runs: 1,
            converged: report.converged,
            ..Default::default()
        };
        StlsSolution::assemble(&self.problem.a_bar, a_hat, e_hat, alpha, self.cfg.rank_tol, diagnostics)
    }
}

fn problem_checked(p: &StlsProblem) -> Result<&StlsProblem> {
    let violations = p.violations();
    if violations.is_empty() {
        Ok(p)
    } else {
        Err(StlsError::Invalid(crate::error::ValidationReport(violations)))
    }
}

/// Nuclear-norm STLS at a fixed α.
pub fn alm_nn_stls(p: &StlsProblem, alpha: f64, cfg: &SolverConfig) -> Result<(StlsSolution, AlmReport)> {
    let (sol, report, _) = AlmSolver::nuclear(p, cfg)?.solve(alpha, None)?;
    Ok((sol, report))
}

/// Weighted nuclear-norm STLS at a fixed α.
pub fn alm_weighted_nn_stls(
    p: &StlsProblem,
    alpha: f64,
    rw: &ReweightPair,
    cfg: &SolverConfig,
) -> Result<(StlsSolution, AlmReport)> {
    let (sol, report, _) = AlmSolver::weighted(p, rw, cfg)?.solve(alpha, None)?;
    Ok((sol, report))
}

/// Result of [`alpha_search`].
#[derive(Debug, Clone)]
pub struct AlphaSearch {
    pub alpha: f64,
    pub solution: StlsSolution,
    pub report: AlmReport,
    /// Every `(α, feasible)` pair tried, in order.
    pub trials: Vec<(f64, bool)>,
}

/// Largest α whose solution has numerical rank ≤ `target_rank`.
///
/// Brackets from `α₀ = 1/(2σ_N(Ā))` by repeated scaling, then bisects
/// geometrically. Every run starts cold: multipliers carried over from a
/// different α are far from the new fixed point and destabilize the early,
/// small-μ iterations. Identity
/// weights use the unweighted solver.
pub fn alpha_search(p: &StlsProblem, rw: &ReweightPair, cfg: &SolverConfig) -> Result<AlphaSearch> {
    let solver = if is_identity_pair(rw) {
        AlmSolver::nuclear(p, cfg)?
    } else {
        AlmSolver::weighted(p, rw, cfg)?
    };
    search_with(&solver, p, cfg)
}

fn is_identity_pair(rw: &ReweightPair) -> bool {
    let is_eye = |w: &DMatrix<f64>| {
        w.iter()
            .enumerate()
            .all(|(k, &x)| x == if k % (w.nrows() + 1) == 0 { 1.0 } else { 0.0 })
    };
    is_eye(&rw.w1) && is_eye(&rw.w2)
}

fn search_with(solver: &AlmSolver<'_>, p: &StlsProblem, cfg: &SolverConfig) -> Result<AlphaSearch> {
    let s = linalg::singular_values(&p.a_bar)?;
    let sigma_max = s[0];
    let sigma_min = s[s.len() - 1];
    let alpha0 = if sigma_min > f64::EPSILON * sigma_max {
        0.5 / sigma_min
    } else if sigma_max > 0.0 {
        0.5 / (f64::EPSILON.sqrt() * sigma_max)
    } else {
        1.0
    };
    let factor = cfg.alpha_bracket_factor;

    let mut trials = Vec::new();
    let mut total_iters = 0;
    let mut runs = 0;
    let mut best: Option<(f64, StlsSolution, AlmReport)> = None;
    let mut infeasible_above: Option<f64> = None;

    let mut attempt = |alpha: f64, best: &mut Option<(f64, StlsSolution, AlmReport)>| -> Result<bool> {
        let (sol, report, _) = solver.solve(alpha, None)?;
        total_iters += report.iterations;
        runs += 1;
        let ok = report.converged && sol.diagnostics.numerical_rank <= p.target_rank;
        trials.push((alpha, ok));
        if ok && best.as_ref().is_none_or(|(b, _, _)| alpha > *b) {
            *best = Some((alpha, sol, report));
        }
        Ok(ok)
    };

    let mut alpha = alpha0;
    if attempt(alpha, &mut best)? {
        for _ in 0..cfg.alpha_max_expansions {
            alpha *= factor;
            if !attempt(alpha, &mut best)? {
                infeasible_above = Some(alpha);
                break;
            }
        }
    } else {
        infeasible_above = Some(alpha);
        for _ in 0..cfg.alpha_max_expansions {
            alpha /= factor;
            if attempt(alpha, &mut best)? {
                break;
            }
            infeasible_above = Some(alpha);
        }
    }
    if best.is_none() {
        return Err(StlsError::RankInfeasible { target: p.target_rank });
    }
    if let Some(mut hi) = infeasible_above {
        for _ in 0..cfg.alpha_bisection_iters {
            let lo = best.as_ref().map(|b| b.0).expect("feasible point");
            if hi / lo - 1.0 <= 1e-12 {
                break;
            }
            let mid = (lo * hi).sqrt();
            if !attempt(mid, &mut best)? {
                hi = mid;
            }
        }
    }
    let (alpha, mut solution, report) = best.expect("feasible point");
    solution.diagnostics.total_iterations = total_iters;
    solution.diagnostics.alm_runs = runs;
    Ok(AlphaSearch {
        alpha,
        solution,
        report,
        trials,
    })
}

/// Reweighted nuclear-norm STLS: α search under identity weights, then
/// `max_reweights` rounds of reweighting each followed by a fresh α search.
pub fn reweighted_stls(p: &StlsProblem, cfg: &SolverConfig) -> Result<(StlsSolution, AlmReport)> {
    let (m, n) = p.a_bar.shape();
    let rw = ReweightPair::identity(m, n);
    let first = alpha_search(p, &rw, cfg)?;
    reweight_rounds(p, rw, first, cfg)
}

/// Like [`reweighted_stls`], but the first weights come from `start` (any
/// rank-deficient estimate of `Â`, e.g. the unstructured TLS solution)
/// instead of from the nuclear-norm solution.
pub fn reweighted_stls_from(
    p: &StlsProblem,
    start: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<(StlsSolution, AlmReport)> {
    let (m, n) = p.a_bar.shape();
    if start.shape() != (m, n) {
        return Err(StlsError::DimensionMismatch(format!(
            "start is {}×{}, problem is {m}×{n}",
            start.nrows(),
            start.ncols()
        )));
    }
    let rw = update_reweight(&ReweightPair::identity(m, n), start, cfg.delta)?;
    let first = alpha_search(p, &rw, cfg)?;
    let rest = SolverConfig {
        max_reweights: cfg.max_reweights.saturating_sub(1),
        ..cfg.clone()
    };
    reweight_rounds(p, rw, first, &rest)
}

/// Runs `max_reweights` reweighting rounds after the search `first` made under `rw`.
fn reweight_rounds(
    p: &StlsProblem,
    mut rw: ReweightPair,
    first: AlphaSearch,
    cfg: &SolverConfig,
) -> Result<(StlsSolution, AlmReport)> {
    let mut round_errors = Vec::new();
    let mut round_alphas = Vec::new();
    let mut total_iters = 0;
    let mut runs = 0;
    let mut found = first;
    for round in 0..=cfg.max_reweights {
        if round > 0 {
            rw = update_reweight(&rw, &found.solution.a_hat, cfg.delta)?;
            found = alpha_search(p, &rw, cfg)?;
        }
        total_iters += found.solution.diagnostics.total_iterations;
        runs += found.solution.diagnostics.alm_runs;
        round_alphas.push(found.alpha);
        if let Ok(err) = relative_error_of(&p.a_bar, &found.solution.a_hat) {
            round_errors.push(err);
        }
    }
    let mut sol = found.solution;
    sol.diagnostics.total_iterations = total_iters;
    sol.diagnostics.alm_runs = runs;
    sol.diagnostics.round_errors = round_errors;
    sol.diagnostics.round_alphas = round_alphas;
    Ok((sol, found.report))
}

/// Nuclear-norm STLS with α chosen by [`alpha_search`] under identity weights.
pub fn nn_stls(p: &StlsProblem, cfg: &SolverConfig) -> Result<(StlsSolution, AlmReport)> {
    let (m, n) = p.a_bar.shape();
    let found = alpha_search(p, &ReweightPair::identity(m, n), cfg)?;
    Ok((found.solution, found.report))
}

/// Soft-thresholding that also reports how many singular values survive.
fn shrink(z: &DMatrix<f64>, gamma: f64) -> Result<(DMatrix<f64>, usize)> {
    let f = linalg::svd(z)?;
    let s: Vec<f64> = f.s.iter().map(|&x| (x - gamma).max(0.0)).collect();
    let rank = s.iter().filter(|&&x| x > 0.0).count();
    Ok((recompose_with(&f.u, &s, &f.v), rank))
}

/// Structure-preserving `Δ` that makes `Â − Δ` exactly rank ≤ `rank`.
///
/// Gauss–Newton on `(Â − Δ)(V₀ + V₁Y) = 0` with `Δ ∈ S₀` (the homogeneous
/// constraint set), `V₀` the trailing and `V₁` the leading right singular
/// vectors; letting the null directions rotate matters when whole rows of `E`
/// are fixed. Moving `Δ` from `Â` to `Ê` keeps `Â + Ê` and `L(Ê) = b` intact.
/// `None` if the structure cannot absorb the correction cheaply.
fn snap_correction(projector: &Projector, a_hat: &DMatrix<f64>, rank: usize) -> Option<DMatrix<f64>> {
    const PASSES: usize = 12;
    let (m, n) = a_hat.shape();
    let q = n - rank;
    let lift = |z: &DMatrix<f64>, v0: &DMatrix<f64>| projector.project_linear(&(z * v0.transpose()));
    let mut a = a_hat.clone();
    let mut total = DMatrix::zeros(m, n);
    let mut first = None;
    for _ in 0..PASSES {
        let f = linalg::svd(&a).ok()?;
        let v0 = f.v.columns(rank, q).into_owned();
        let r = &a * &v0;
        let r_norm = r.norm();
        let r0 = *first.get_or_insert(r_norm);
        if r_norm <= 16.0 * f64::EPSILON * f.s[0] {
            return (total.norm() <= 100.0 * r0).then_some(total);
        }
        // unknowns: Y ((n−q)×q) then Z (m×q), Δ = P₀(Z V₀ᵀ); Â V₁ Y − Δ V₀ = −R
        let av1 = &a * f.v.columns(0, rank);
        let ny = rank * q;
        let mut jac = DMatrix::zeros(m * q, ny + m * q);
        for t in 0..q {
            for i in 0..rank {
                jac.view_mut((t * m, t * rank + i), (m, 1)).copy_from(&av1.column(i));
            }
        }
        let mut unit = DMatrix::zeros(m, q);
        for c in 0..m * q {
            unit.as_mut_slice()[c] = 1.0;
            let col = lift(&unit, &v0) * &v0;
            jac.column_mut(ny + c).copy_from_slice(col.as_slice());
            jac.column_mut(ny + c).neg_mut();
            unit.as_mut_slice()[c] = 0.0;
        }
        let rhs = -nalgebra::DVector::from_column_slice(r.as_slice());
        let svd = jac.svd(true, true);
        let tol = f64::EPSILON.sqrt() * svd.singular_values.max();
        let x = svd.solve(&rhs, tol).ok()?;
        let delta = lift(&DMatrix::from_column_slice(m, q, &x.as_slice()[ny..]), &v0);
        a -= &delta;
        total += &delta;
    }
    None
}
