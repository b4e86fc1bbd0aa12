//! Solver outputs checked against independently computed reference values.

use nalgebra::{DMatrix, DVector};
use stls_core::linalg::singular_values;
use stls_core::random::{gaussian, rng};
use stls_core::{
    err_bound_nn, err_bound_rwnn, log_threshold_scalar, logdet_tls, nn_stls, plain_tls, relative_error,
    reweighted_stls, solve_sylvester, ErrorStructure, SolverConfig, StlsProblem,
};

/// `(I + B₂ᵀ ⊗ B₁) vec X = vec C` solved densely.
fn kron_sylvester(b1: &DMatrix<f64>, b2: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = c.shape();
    let op = DMatrix::<f64>::identity(m * n, m * n) + b2.transpose().kronecker(b1);
    let x = op.lu().solve(&DVector::from_column_slice(c.as_slice())).unwrap();
    DMatrix::from_column_slice(m, n, x.as_slice())
}

#[test]
fn sylvester_matches_kronecker() {
    let mut r = rng(101);
    for (m, n) in [(1, 1), (3, 7), (9, 4), (12, 12), (20, 17)] {
        let b1 = gaussian(&mut r, m, m) * 0.4;
        let b2 = gaussian(&mut r, n, n) * 0.4;
        let c = gaussian(&mut r, m, n);
        let x = solve_sylvester(&b1, &b2, &c).unwrap();
        let want = kron_sylvester(&b1, &b2, &c);
        assert!((&x - &want).norm() <= 1e-9 * want.norm(), "{m}×{n}");
    }
}

#[test]
fn sylvester_symmetric_coefficients() {
    let mut r = rng(102);
    let g1 = gaussian(&mut r, 6, 6);
    let g2 = gaussian(&mut r, 5, 5);
    let (b1, b2) = (&g1 * g1.transpose(), &g2 * g2.transpose());
    let c = gaussian(&mut r, 6, 5);
    let x = solve_sylvester(&b1, &b2, &c).unwrap();
    assert!((&x - kron_sylvester(&b1, &b2, &c)).norm() <= 1e-9 * x.norm());
}

/// Downhill walk on a grid from `y` to the first local minimum.
fn grid_min(y: f64, alpha: f64, delta: f64) -> f64 {
    let h = 1e-4;
    let f = |x: f64| 0.5 * (x - y).powi(2) + alpha * (delta + x.abs()).ln();
    let mut x = y;
    loop {
        let step = if f(x - h) < f(x) {
            -h
        } else if f(x + h) < f(x) {
            h
        } else {
            return x;
        };
        if x != 0.0 && (x + step).signum() != x.signum() {
            return 0.0;
        }
        x += step;
    }
}

#[test]
fn log_threshold_matches_grid_descent() {
    let delta = 0.05;
    for y in [-3.0, -1.7, -0.2, 0.0, 0.4, 1.1, 2.5, 6.0] {
        for alpha in [0.01, 0.1, 0.5, 1.0] {
            let got = log_threshold_scalar(y, alpha, delta);
            let want = grid_min(y, alpha, delta);
            assert!((got - want).abs() <= 1e-3, "y={y} α={alpha}: {got} vs {want}");
        }
    }
}

#[test]
fn svd_baseline_is_eckart_young() {
    let mut r = rng(103);
    let a = gaussian(&mut r, 9, 5);
    let p = StlsProblem::new(a.clone(), ErrorStructure::Unconstrained);
    let sol = plain_tls(&p).unwrap();
    let s = singular_values(&a).unwrap();
    assert!((sol.e_hat.norm() - s[4]).abs() <= 1e-12 * s[0]);
    assert!((relative_error(&p, &sol).unwrap() - 1.0).abs() <= 1e-12);
    // the null vector annihilates the corrected matrix
    assert!((&sol.a_hat * &sol.null_vec).norm() <= 1e-12 * s[0]);
}

#[test]
fn nuclear_norm_error_is_uniform_shrinkage() {
    // unconstrained NN shrinks every singular value by σ_N: error √N σ_N
    let mut r = rng(104);
    for n in [4, 7] {
        let a = gaussian(&mut r, n, n);
        let p = StlsProblem::new(a.clone(), ErrorStructure::Unconstrained);
        let (sol, _) = nn_stls(&p, &SolverConfig::default()).unwrap();
        let s = singular_values(&a).unwrap();
        let want = (n as f64).sqrt() * s[n - 1];
        assert!(((&a - &sol.a_hat).norm() - want).abs() <= 1e-4 * want, "n={n}");
    }
}

#[test]
fn reweighting_reaches_tls_optimum_unconstrained() {
    let mut r = rng(105);
    let a = gaussian(&mut r, 6, 6);
    let p = StlsProblem::new(a, ErrorStructure::Unconstrained);
    let (sol, _) = reweighted_stls(&p, &SolverConfig::default()).unwrap();
    let err = relative_error(&p, &sol).unwrap();
    assert!((1.0 - 1e-9..=1.01).contains(&err), "{err}");
}

#[test]
fn logdet_error_matches_direct_sum() {
    // σᵢ ↦ ½(σᵢ + √(σᵢ² − σ_N²)) misses each σᵢ by ½σ_N(aᵢ − √(aᵢ² − 1))
    let mut r = rng(106);
    let a = gaussian(&mut r, 8, 8);
    let sol = logdet_tls(&a).unwrap();
    let s = singular_values(&a).unwrap();
    let last = s[7];
    let direct = (last * last
        + s.iter()
            .take(7)
            .map(|&x| (0.5 * (x - (x * x - last * last).sqrt())).powi(2))
            .sum::<f64>())
    .sqrt();
    let err = (&a - &sol.a_hat).norm();
    assert!((err - direct).abs() <= 1e-10 * direct, "{err} vs {direct}");
    assert!(err <= err_bound_rwnn(s.as_slice()).unwrap().sqrt());
}

#[test]
fn geometric_spectrum_bounds() {
    let s: Vec<f64> = (1..=100).map(|i| 1.1f64.powi(100 - i)).collect();
    // direct sum, independent of the library formula
    let direct: f64 = 1.0 + 0.5 * s[..99].iter().map(|&a| (a - (a * a - 1.0).sqrt()).powi(2)).sum::<f64>();
    let got = err_bound_rwnn(&s).unwrap();
    assert!((got - direct).abs() <= 1e-12 * direct);
    assert!((got - 1.84).abs() <= 0.005);
    assert_eq!(err_bound_nn(&s), 100.0);
}
