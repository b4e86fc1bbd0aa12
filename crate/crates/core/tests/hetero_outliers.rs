//! Down-weighted outliers in X: weighted STLS against the plain SVD nullspace.

use nalgebra::DMatrix;
use rand::Rng;
use stls_core::hetero::{build_system, cosine, solve_noisy_weighted, synthesize};
use stls_core::linalg::min_right_singular_vector;
use stls_core::random::{derive_seed, rng};
use stls_core::SolverConfig;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    0.5 * (v[(v.len() - 1) / 2] + v[v.len() / 2])
}

#[test]
fn weighted_stls_beats_svd_under_outliers() {
    let cfg = SolverConfig::default();
    let (mut svd, mut stls) = (Vec::new(), Vec::new());
    for t in 0..20 {
        let seed = derive_seed(31, &[t]);
        let mut inst = synthesize(14, 2, 6, 0.01, seed).unwrap();
        let truth = inst.truth.as_ref().unwrap().stacked();
        let scale = inst.x.norm() / 84f64.sqrt();
        let mut r = rng(seed ^ 1);
        let mut w = DMatrix::from_element(14, 6, 1.0);
        for _ in 0..4 {
            let (g, c) = (r.random_range(0..14), r.random_range(0..6));
            let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
            inst.x[(g, c)] += sign * 10.0 * scale;
            w[(g, c)] = 0.01;
        }
        let (a, _) = build_system(&inst);
        let rows = a.ncols().max(a.nrows());
        let a = a.resize_vertically(rows, 0.0);
        svd.push(cosine(&min_right_singular_vector(&a).unwrap(), &truth).abs());
        let sol = solve_noisy_weighted(&inst, Some(&w), &cfg).unwrap();
        stls.push(sol.cosine.unwrap());
    }
    let (ms, mw) = (median(svd), median(stls));
    assert!(mw > ms, "weighted STLS {mw} vs SVD {ms}");
    assert!(mw >= 0.99, "{mw}");
}
