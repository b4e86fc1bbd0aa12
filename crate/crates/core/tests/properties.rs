use nalgebra::DMatrix;
use proptest::prelude::*;
use stls_core::linalg::singular_values;
use stls_core::random::{gaussian, rng};
use stls_core::{
    log_threshold_scalar, nn_stls, project_structure, relative_error, reweighted_stls, svt, ErrorStructure, Projector,
    SolverConfig, StlsProblem,
};

fn structure(kind: u8, n: usize, seed: u64) -> ErrorStructure {
    match kind {
        0 => ErrorStructure::Unconstrained,
        1 => ErrorStructure::Toeplitz,
        _ => {
            let mut k = seed;
            ErrorStructure::mask_from_fn(n, n, |_, _| {
                k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (k >> 33).is_multiple_of(3)
            })
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solutions_are_feasible_and_rank_deficient(seed in 0u64..10_000, n in 3usize..6, kind in 0u8..3) {
        let s = structure(kind, n, seed);
        let p = StlsProblem::new(gaussian(&mut rng(seed), n, n), s.clone());
        let cfg = SolverConfig::default();
        let proj = Projector::new(&s, n, n).unwrap();
        let mut errs = Vec::new();
        for res in [nn_stls(&p, &cfg), reweighted_stls(&p, &cfg)] {
            let Ok((sol, _)) = res else { continue };
            prop_assert!(proj.violation(&sol.e_hat) <= 1e-10);
            prop_assert!((&sol.a_hat + &sol.e_hat - &p.a_bar).norm() <= 10.0 * cfg.feas_tol * p.a_bar.norm());
            let sv = singular_values(&sol.a_hat).unwrap();
            prop_assert!(sv[n - 1] <= cfg.rank_tol * sv[0]);
            let err = relative_error(&p, &sol).unwrap();
            prop_assert!(err >= 1.0 - 1e-9);
            errs.push(err);
        }
        if kind == 0 {
            prop_assert_eq!(errs.len(), 2);
            prop_assert!(errs[1] <= errs[0] + 1e-9);
        }
    }

    #[test]
    fn svt_is_nonexpansive(seed in 0u64..10_000, m in 1usize..6, n in 1usize..6, gamma in 0.0f64..2.0) {
        let mut r = rng(seed);
        let (a, b) = (gaussian(&mut r, m, n), gaussian(&mut r, m, n));
        let (pa, pb) = (svt(&a, gamma).unwrap(), svt(&b, gamma).unwrap());
        prop_assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-12);
        let sa = singular_values(&a).unwrap();
        let spa = singular_values(&pa).unwrap();
        for (x, y) in sa.iter().zip(spa.iter()) {
            prop_assert!((y - (x - gamma).max(0.0)).abs() <= 1e-10);
        }
    }

    #[test]
    fn projections_are_idempotent(seed in 0u64..10_000, m in 1usize..6, n in 1usize..6, kind in 0u8..3) {
        let e = gaussian(&mut rng(seed), m, n);
        let s = match structure(kind, m.max(n), seed) {
            ErrorStructure::FixedMask(f) => ErrorStructure::FixedMask(
                f.into_iter().filter(|x| x.row < m && x.col < n).collect(),
            ),
            other => other,
        };
        let once = project_structure(&e, &s).unwrap();
        let twice = project_structure(&once, &s).unwrap();
        prop_assert!((&twice - &once).amax() <= 1e-12);
        // nearest point: the residual is orthogonal to feasible directions
        let other = project_structure(&gaussian(&mut rng(seed + 1), m, n), &s).unwrap();
        prop_assert!((&e - &once).dot(&(&other - &once)).abs() <= 1e-10 * (1.0 + e.norm() * other.norm()));
    }

    #[test]
    fn log_threshold_is_stationary_and_shrinks(y in -10.0f64..10.0, alpha in 1e-3f64..3.0, delta in 1e-4f64..0.5) {
        let x = log_threshold_scalar(y, alpha, delta);
        prop_assert!(x.abs() <= y.abs());
        if x != 0.0 {
            prop_assert_eq!(x.signum(), y.signum());
            let grad = (x - y) + alpha * x.signum() / (delta + x.abs());
            prop_assert!(grad.abs() <= 1e-8 * (1.0 + y.abs()));
        }
        prop_assert_eq!(log_threshold_scalar(-y, alpha, delta), -x);
    }
}

#[test]
fn zero_input_projects_to_fixed_values() {
    let s = ErrorStructure::mask_from_fn(3, 3, |i, j| i == j);
    let p = project_structure(&DMatrix::from_element(3, 3, 2.0), &s).unwrap();
    for i in 0..3 {
        assert_eq!(p[(i, i)], 0.0);
    }
    assert_eq!(p[(0, 1)], 2.0);
}
