//! Seeded problem generators for the experiments.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use stls_core::random::{gaussian, rng};
use stls_core::{ErrorStructure, StlsProblem};

/// `N × N` i.i.d. Gaussian, no structure.
pub fn gaussian_square(seed: u64, n: usize) -> StlsProblem {
    StlsProblem::new(gaussian(&mut rng(seed), n, n), ErrorStructure::Unconstrained)
}

/// `N × N` Gaussian with each error entry pinned to zero independently with probability `p_fixed`.
pub fn fixed_mask(seed: u64, n: usize, p_fixed: f64) -> StlsProblem {
    let mut r = rng(seed);
    let a = gaussian(&mut r, n, n);
    let structure = ErrorStructure::mask_from_fn(n, n, |_, _| r.random_bool(p_fixed));
    StlsProblem::new(a, structure)
}

/// `N × N` Toeplitz matrix whose `2N − 1` diagonals are i.i.d. Gaussian; Toeplitz errors.
pub fn toeplitz(seed: u64, n: usize) -> StlsProblem {
    let c = gaussian(&mut rng(seed), 2 * n - 1, 1);
    let a = DMatrix::from_fn(n, n, |i, j| c[(j + n - 1 - i, 0)]);
    StlsProblem::new(a, ErrorStructure::Toeplitz)
}

/// Block-diagonal outlier setup.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierConfig {
    pub size: usize,
    /// Side of the free diagonal blocks; everything else is exact.
    pub block: usize,
    /// Share of free entries hit by an outlier.
    pub outlier_fraction: f64,
    /// Error weight on the outlier entries (1 elsewhere).
    pub outlier_weight: f64,
    /// Dense noise on free entries, relative to the data scale.
    pub noise: f64,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self {
            size: 20,
            block: 5,
            outlier_fraction: 0.05,
            outlier_weight: 0.01,
            noise: 0.01,
        }
    }
}

/// Outlier magnitudes, in units of the data scale.
pub const OUTLIER_MAGNITUDES: [f64; 4] = [1.0, 5.0, 10.0, 20.0];

#[derive(Debug, Clone)]
pub struct OutlierInstance {
    pub problem: StlsProblem,
    /// Unit null vector of the clean matrix.
    pub truth: DVector<f64>,
    pub outliers: Vec<(usize, usize)>,
}

/// Exactly rank-deficient matrix, noisy free blocks, and signed outliers of
/// `magnitude × scale` at a fixed random subset of the free entries. The
/// base matrix, noise and outlier positions depend on `seed` only.
pub fn outliers(seed: u64, cfg: &OutlierConfig, magnitude: f64) -> OutlierInstance {
    let n = cfg.size;
    let mut r = rng(seed);
    let g = gaussian(&mut r, n, n);
    let v = gaussian(&mut r, n, 1).column(0).normalize();
    let clean = &g - (&g * &v) * v.transpose();
    // RMS entry size
    let scale = clean.norm() / n as f64;
    let free = |i: usize, j: usize| i / cfg.block == j / cfg.block;
    let free_idx: Vec<(usize, usize)> = (0..n)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .filter(|&(i, j)| free(i, j))
        .collect();
    let noise = gaussian(&mut r, n, n) * (cfg.noise * scale);
    let mut a = clean;
    for &(i, j) in &free_idx {
        a[(i, j)] += noise[(i, j)];
    }
    let count = (free_idx.len() as f64 * cfg.outlier_fraction).round() as usize;
    let mut w = DMatrix::from_element(n, n, 1.0);
    let mut picked = Vec::with_capacity(count);
    for k in sample(&mut r, free_idx.len(), count) {
        let (i, j) = free_idx[k];
        let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        a[(i, j)] += sign * magnitude * scale;
        w[(i, j)] = cfg.outlier_weight;
        picked.push((i, j));
    }
    let problem = StlsProblem::new(a, ErrorStructure::mask_from_fn(n, n, |i, j| !free(i, j))).with_weights(w);
    OutlierInstance {
        problem,
        truth: v,
        outliers: picked,
    }
}
