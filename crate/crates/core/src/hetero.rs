//! Cellular-heterogeneity quantification: recover `Λ = Z⁻¹` and `U` from
//! `X = Z S U` given `X` and the indicator matrix `S`.
//!
//! Rearranging `ΛX = SU` gives the homogeneous compound system
//! `[S ⊗ I_N, −blkdiag(Xᵀ)] [vec(Uᵀ); λ] = 0`, whose nullspace holds the
//! answer up to scale. With noise in `X` only the block-diagonal entries of
//! the right block are uncertain, which makes the noisy case an STLS problem.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1};

use crate::alm::reweighted_stls_from;
use crate::error::{Result, StlsError};
use crate::linalg;
use crate::model::{Diagnostics, ErrorStructure, FixedEntry, SolverConfig, StlsProblem, StlsSolution};
use crate::random::{gaussian, rng};
use crate::tls::truncated_svd_solution;

/// Nullspace gap `σ_{n−1}/σ_n` below which the solution counts as non-identifiable.
pub const MIN_GAP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTruth {
    /// Per-gene scale factors, `Z = diag(z)`.
    pub z: DVector<f64>,
    /// State fractions, K × N.
    pub u: DMatrix<f64>,
}

impl PlantedTruth {
    /// `[vec(Uᵀ); 1/z]`.
    pub fn stacked(&self) -> DVector<f64> {
        let lambda = self.z.map(|z| 1.0 / z);
        stack(&self.u, &lambda)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneityInstance {
    /// Indicator genes, M × K, nonnegative.
    pub s: DMatrix<f64>,
    /// Measured relative expression, M × N.
    pub x: DMatrix<f64>,
    pub truth: Option<PlantedTruth>,
}

/// Where each entry of `X` sits in the compound matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMap {
    m: usize,
    k: usize,
    n: usize,
}

impl IndexMap {
    pub fn new(m: usize, k: usize, n: usize) -> Self {
        Self { m, k, n }
    }

    /// Compound-matrix position of `X[gene, cond]`; it holds `−X[gene, cond]`.
    pub fn x_entry(&self, gene: usize, cond: usize) -> (usize, usize) {
        (gene * self.n + cond, self.k * self.n + gene)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m * self.n, self.k * self.n + self.m)
    }

    /// `(gene, cond)` for a compound-matrix position on the block-diagonal support.
    pub fn x_of(&self, row: usize, col: usize) -> Option<(usize, usize)> {
        let gene = col.checked_sub(self.k * self.n)?;
        (gene < self.m && row / self.n == gene).then_some((gene, row % self.n))
    }

    /// Splits `[vec(Uᵀ); λ]` into `U` (K × N) and `λ`.
    pub fn split(&self, v: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let kn = self.k * self.n;
        let u = DMatrix::from_row_slice(self.k, self.n, &v.as_slice()[..kn]);
        (u, v.rows(kn, self.m).into_owned())
    }
}

fn stack(u: &DMatrix<f64>, lambda: &DVector<f64>) -> DVector<f64> {
    // vec(Uᵀ) is U read row by row
    let mut out = Vec::with_capacity(u.len() + lambda.len());
    for row in u.row_iter() {
        out.extend(row.iter());
    }
    out.extend(lambda.iter());
    DVector::from_vec(out)
}

impl HeterogeneityInstance {
    pub fn new(s: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        let inst = Self { s, x, truth: None };
        inst.check()?;
        Ok(inst)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.s.nrows(), self.s.ncols(), self.x.ncols())
    }

    pub fn index_map(&self) -> IndexMap {
        let (m, k, n) = self.dims();
        IndexMap::new(m, k, n)
    }

    pub fn check(&self) -> Result<()> {
        let (m, k, n) = self.dims();
        if self.x.nrows() != m {
            return Err(StlsError::DimensionMismatch(format!(
                "S has {m} genes but X has {}",
                self.x.nrows()
            )));
        }
        if m == 0 || k == 0 || n == 0 {
            return Err(StlsError::InvalidArgument("empty instance".into()));
        }
        linalg::check_finite(&self.s, "S")?;
        linalg::check_finite(&self.x, "X")?;
        if self.s.iter().any(|&v| v < 0.0) {
            return Err(StlsError::InvalidArgument("S must be nonnegative".into()));
        }
        if let Some(gene) = self.s.row_iter().position(|r| r.iter().all(|&v| v == 0.0)) {
            return Err(StlsError::InvalidArgument(format!("gene {gene} marks no state")));
        }
        if m * n < k * n + m - 1 {
            return Err(StlsError::InvalidArgument(format!(
                "{} equations cannot pin a 1-D nullspace in {} unknowns",
                m * n,
                k * n + m
            )));
        }
        Ok(())
    }

    /// Cosine between a stacked `[vec(Uᵀ); λ]` and the planted one, if known.
    pub fn cosine_to_truth(&self, v: &DVector<f64>) -> Option<f64> {
        self.truth.as_ref().map(|t| cosine(v, &t.stacked()))
    }
}

/// `|⟨a, b⟩| / (‖a‖ ‖b‖)`.
pub fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d = a.norm() * b.norm();
    if d == 0.0 {
        0.0
    } else {
        (a.dot(b) / d).abs()
    }
}

/// `[S ⊗ I_N, −blkdiag(Xᵀ)]`, (MN) × (KN + M).
pub fn build_system(inst: &HeterogeneityInstance) -> (DMatrix<f64>, IndexMap) {
    let (m, k, n) = inst.dims();
    let map = IndexMap::new(m, k, n);
    let (rows, cols) = map.shape();
    let mut a = DMatrix::zeros(rows, cols);
    for gene in 0..m {
        for state in 0..k {
            let v = inst.s[(gene, state)];
            if v != 0.0 {
                for c in 0..n {
                    a[(gene * n + c, state * n + c)] = v;
                }
            }
        }
        for c in 0..n {
            a[map.x_entry(gene, c)] = -inst.x[(gene, c)];
        }
    }
    (a, map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneitySolution {
    /// State fractions, K × N, up to the common scale.
    pub u: DMatrix<f64>,
    /// `1/z`, positive, `‖λ‖₂ = 1`.
    pub lambda_vec: DVector<f64>,
    /// `σ_{n−1}/σ_n` of the (corrected) compound matrix.
    pub gap: f64,
    pub cosine: Option<f64>,
    /// Set when the nullspace gap is below [`MIN_GAP`].
    pub non_identifiable: bool,
    /// Estimated noise in `X` (noisy solver only).
    pub x_error: Option<DMatrix<f64>>,
    /// Full compound-matrix correction (noisy solver only).
    pub e_hat: Option<DMatrix<f64>>,
    /// Solver diagnostics (noisy solver only).
    pub diagnostics: Option<Diagnostics>,
}

impl HeterogeneitySolution {
    /// Scale convention of `u` and `lambda_vec`.
    pub const SCALE_CONVENTION: &'static str = "unit-norm lambda, majority-positive sign";

    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.u, &self.lambda_vec)
    }

    /// `U` with every column rescaled to sum to one.
    pub fn simplex_fractions(&self) -> DMatrix<f64> {
        let mut u = self.u.clone();
        for mut col in u.column_iter_mut() {
            let s: f64 = col.sum();
            if s != 0.0 {
                col /= s;
            }
        }
        u
    }
}

/// Turns a null vector into a normalized solution.
fn finish(
    inst: &HeterogeneityInstance,
    map: &IndexMap,
    null_vec: &DVector<f64>,
    singular: &DVector<f64>,
) -> Result<HeterogeneitySolution> {
    let (mut u, mut lambda) = map.split(null_vec);
    let pos = lambda.iter().filter(|&&l| l > 0.0).count();
    let neg = lambda.iter().filter(|&&l| l < 0.0).count();
    if neg > pos {
        u.neg_mut();
        lambda.neg_mut();
    }
    let norm = lambda.norm();
    if norm == 0.0 {
        return Err(StlsError::SignIndefinite);
    }
    let floor = 1e-12 * lambda.amax();
    if lambda.iter().any(|&l| l < -floor) {
        return Err(StlsError::SignIndefinite);
    }
    u /= norm;
    lambda /= norm;
    let n = singular.len();
    let tiny = f64::EPSILON * singular[0] * n as f64;
    let gap = match (singular[n - 1], n) {
        (_, 1) => f64::INFINITY,
        (last, _) if last > tiny => singular[n - 2] / last,
        // two numerically zero values: at least a 2-D nullspace
        _ if singular[n - 2] <= tiny => 1.0,
        _ => f64::INFINITY,
    };
    let stacked = stack(&u, &lambda);
    Ok(HeterogeneitySolution {
        cosine: inst.cosine_to_truth(&stacked),
        u,
        lambda_vec: lambda,
        gap,
        non_identifiable: gap < MIN_GAP,
        x_error: None,
        e_hat: None,
        diagnostics: None,
    })
}

/// Nullspace of the exact compound system.
pub fn solve_noiseless(inst: &HeterogeneityInstance) -> Result<HeterogeneitySolution> {
    inst.check()?;
    let (a, map) = build_system(inst);
    let f = linalg::svd(&pad_rows(a))?;
    let null_vec = f.v.column(f.rank() - 1).into_owned();
    finish(inst, &map, &null_vec, &f.s)
}

/// Appends zero rows up to a square shape; the nullspace is unchanged and the
/// thin SVD then reports every right singular vector.
fn pad_rows(a: DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if rows >= cols {
        a
    } else {
        a.resize_vertically(cols, 0.0)
    }
}

/// The STLS problem of the noisy compound system: only the entries that hold
/// `X` may move. `weights` (M × N) penalize individual `X` entries.
pub fn noisy_problem(inst: &HeterogeneityInstance, weights: Option<&DMatrix<f64>>) -> Result<StlsProblem> {
    inst.check()?;
    let (a, map) = build_system(inst);
    let a = pad_rows(a);
    let (rows, cols) = a.shape();
    let fixed = ErrorStructure::FixedMask(
        (0..cols)
            .flat_map(|j| (0..rows).map(move |i| (i, j)))
            .filter(|&(i, j)| map.x_of(i, j).is_none())
            .map(|(i, j)| FixedEntry::zero(i, j))
            .collect(),
    );
    let mut w = DMatrix::from_element(rows, cols, 1.0);
    if let Some(wx) = weights {
        if wx.shape() != inst.x.shape() {
            return Err(StlsError::DimensionMismatch(format!(
                "weights are {}×{}, X is {}×{}",
                wx.nrows(),
                wx.ncols(),
                inst.x.nrows(),
                inst.x.ncols()
            )));
        }
        let (m, _, n) = inst.dims();
        for gene in 0..m {
            for c in 0..n {
                w[map.x_entry(gene, c)] = wx[(gene, c)];
            }
        }
    }
    Ok(StlsProblem::new(a, fixed).with_weights(w).with_target_rank(cols - 1))
}

/// Reweighted STLS on the compound system, correcting `X` only.
pub fn solve_noisy(inst: &HeterogeneityInstance, cfg: &SolverConfig) -> Result<HeterogeneitySolution> {
    solve_noisy_weighted(inst, None, cfg)
}

pub fn solve_noisy_weighted(
    inst: &HeterogeneityInstance,
    weights: Option<&DMatrix<f64>>,
    cfg: &SolverConfig,
) -> Result<HeterogeneitySolution> {
    let p = noisy_problem(inst, weights)?;
    let map = inst.index_map();
    // the nuclear-norm start tends to zero out a whole gene row of X, a poor
    // basin here; start instead from the bilinear fit and from unstructured
    // TLS, and keep the smaller weighted correction
    let cols = p.a_bar.ncols();
    let mut starts = Vec::with_capacity(2);
    let (m, _, n) = inst.dims();
    let wx = weights.cloned().unwrap_or_else(|| DMatrix::from_element(m, n, 1.0));
    if let Some(a_hat) = fitted_start(inst, &p, &map, &wx) {
        starts.push(a_hat);
    }
    starts.push(truncated_svd_solution(&p.a_bar, cols - 1)?.a_hat);
    let cost = |s: &StlsSolution| s.e_hat.component_mul(&p.weights).norm();
    let mut best: Option<Result<StlsSolution>> = None;
    for start in &starts {
        let run = reweighted_stls_from(&p, start, cfg).map(|(s, _)| s);
        best = match (best, run) {
            (Some(Ok(b)), Ok(r)) => Some(Ok(if cost(&r) < cost(&b) { r } else { b })),
            (Some(Ok(b)), Err(_)) => Some(Ok(b)),
            (_, r) => Some(r),
        };
    }
    let sol = best.expect("at least one start")?;
    let s = linalg::singular_values(&sol.a_hat)?;
    let mut out = finish(inst, &map, &sol.null_vec, &s)?;
    // Ā holds −X, so the correction of X is the negated error
    out.x_error = Some(DMatrix::from_fn(m, n, |g, c| -sol.e_hat[map.x_entry(g, c)]));
    out.diagnostics = Some(sol.diagnostics);
    out.e_hat = Some(sol.e_hat);
    Ok(out)
}

/// Corrected compound matrix of the weighted bilinear fit, or `None` when the
/// fit leaves a nonpositive scaler.
fn fitted_start(
    inst: &HeterogeneityInstance,
    p: &StlsProblem,
    map: &IndexMap,
    wx: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let (m, _, _) = inst.dims();
    let f = linalg::svd(&p.a_bar).ok()?;
    let (_, lambda) = map.split(&f.v.column(f.rank() - 1).into_owned());
    let sign = lambda.sum().signum();
    let z0 = if lambda.iter().all(|&l| l * sign > 0.0) {
        lambda.map(|l| 1.0 / (l * sign))
    } else {
        DVector::from_element(m, 1.0)
    };
    let (z, u, _) = alternating_fit(inst, wx, z0, FIT_MAX_ITERS);
    if !z.iter().all(|&x| x > 0.0 && x.is_finite()) {
        return None;
    }
    Some(forced_correction(p, map, &stack(&u, &z.map(|x| 1.0 / x))))
}

/// `Ā` with each `X` entry moved so that the result annihilates `v`.
fn forced_correction(p: &StlsProblem, map: &IndexMap, v: &DVector<f64>) -> DMatrix<f64> {
    let av = &p.a_bar * v;
    let mut a_hat = p.a_bar.clone();
    let (m, n) = (map.m, map.n);
    for gene in 0..m {
        for c in 0..n {
            let (r, col) = map.x_entry(gene, c);
            a_hat[(r, col)] -= av[r] / v[col];
        }
    }
    a_hat
}

const FIT_MAX_ITERS: usize = 2000;

/// Weighted alternating least squares for `X ≈ diag(z) S U`, from `z0`.
///
/// Each row of the compound system holds exactly one entry of `X`, so for a
/// fixed null vector the feasible correction is forced and the weighted STLS
/// objective is exactly `‖W ⊙ (diag(z) S U − X)‖_F`. Returns `(z, U, sweeps)`.
pub fn alternating_fit(
    inst: &HeterogeneityInstance,
    wx: &DMatrix<f64>,
    z0: DVector<f64>,
    max_iters: usize,
) -> (DVector<f64>, DMatrix<f64>, usize) {
    let (m, k, n) = inst.dims();
    let w2 = wx.component_mul(wx);
    let mut z = z0;
    let mut u = DMatrix::zeros(k, n);
    let mut prev = f64::INFINITY;
    for sweep in 1..=max_iters {
        for c in 0..n {
            let mut g = DMatrix::zeros(k, k);
            let mut b = DVector::zeros(k);
            for gene in 0..m {
                let row = inst.s.row(gene).transpose() * z[gene];
                g.ger(w2[(gene, c)], &row, &row, 1.0);
                b.axpy(w2[(gene, c)] * inst.x[(gene, c)], &row, 1.0);
            }
            let col = match g.clone().cholesky() {
                Some(ch) => ch.solve(&b),
                None => g.svd(true, true).solve(&b, 1e-14).unwrap_or_else(|_| DVector::zeros(k)),
            };
            u.set_column(c, &col);
        }
        let su = &inst.s * &u;
        for gene in 0..m {
            let (mut num, mut den) = (0.0, 0.0);
            for c in 0..n {
                num += w2[(gene, c)] * su[(gene, c)] * inst.x[(gene, c)];
                den += w2[(gene, c)] * su[(gene, c)] * su[(gene, c)];
            }
            if den > 0.0 {
                z[gene] = num / den;
            }
        }
        let fit = (DMatrix::from_diagonal(&z) * &su - &inst.x).component_mul(wx).norm();
        if prev.is_finite() && (prev - fit).abs() <= 1e-13 * prev {
            return (z, u, sweep);
        }
        prev = fit;
    }
    (z, u, max_iters)
}

/// Indicator pattern: a share of genes marks every state, the rest are split
/// into contiguous exclusive blocks (for M = 14, K = 2: 5 / 6 exclusive, 3 shared).
pub fn indicator_pattern(m: usize, k: usize) -> DMatrix<f64> {
    let shared = if k == 1 { 0 } else { ((3 * m + 7) / 14).max(1).min(m) };
    let exclusive = m - shared;
    let (base, extra) = (exclusive / k, exclusive % k);
    let mut s = DMatrix::zeros(m, k);
    let mut gene = 0;
    for state in 0..k {
        let size = base + usize::from(state >= k - extra);
        for _ in 0..size {
            s[(gene, state)] = 1.0;
            gene += 1;
        }
    }
    for g in gene..m {
        s.row_mut(g).fill(1.0);
    }
    s
}

/// Planted instance `X = Z S U + noise`: `z` log-uniform on `[0.5, 2]`, columns
/// of `U` uniform on the simplex, noise Gaussian with standard deviation
/// `noise_level · ‖ZSU‖_F / √(MN)`.
pub fn synthesize(m: usize, k: usize, n: usize, noise_level: f64, seed: u64) -> Result<HeterogeneityInstance> {
    if m < 2 || k < 1 || n < 1 {
        return Err(StlsError::InvalidArgument(format!(
            "need m ≥ 2, k ≥ 1, n ≥ 1; got {m}, {k}, {n}"
        )));
    }
    if !(noise_level >= 0.0) || !noise_level.is_finite() {
        return Err(StlsError::InvalidArgument("noise level must be finite and ≥ 0".into()));
    }
    let mut r = rng(seed);
    let s = indicator_pattern(m, k);
    let (lo, hi) = (0.5f64.ln(), 2f64.ln());
    let z = DVector::from_fn(m, |_, _| r.random_range(lo..hi).exp());
    let mut u = DMatrix::from_fn(k, n, |_, _| Exp1.sample(&mut r));
    for mut col in u.column_iter_mut() {
        let total: f64 = col.sum();
        col /= total;
    }
    let clean = DMatrix::from_diagonal(&z) * &s * &u;
    let sd = noise_level * clean.norm() / ((m * n) as f64).sqrt();
    let noise = gaussian(&mut r, m, n);
    Ok(HeterogeneityInstance {
        s,
        x: clean + noise * sd,
        truth: Some(PlantedTruth { z, u }),
    })
}
