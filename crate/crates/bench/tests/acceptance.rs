//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use stls_bench::experiment::{records_to_csv, run_experiment, Experiment, ExperimentSpec, Method, TrialRecord};
use stls_bench::instances::{self, OutlierConfig};
use stls_core::hetero::{self, build_system, synthesize};
use stls_core::linalg::{min_right_singular_vector, numerical_rank, singular_values};
use stls_core::random::{gaussian, rng};
use stls_core::{
    err_bound_nn, err_bound_rwnn, log_threshold_scalar, nn_stls, project_structure, relative_error, reweighted_stls,
    solve_sylvester, svt, ErrorStructure, LinearConstraint, SolverConfig, StlsProblem,
};

const SEED: u64 = 7;
const TRIALS: usize = 20;

type Outcome = Result<String, String>;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

fn spec(e: Experiment, sizes: &[usize]) -> ExperimentSpec {
    ExperimentSpec {
        sizes: sizes.to_vec(),
        trials: TRIALS,
        ..ExperimentSpec::new(e, SEED)
    }
}

fn values(recs: &[TrialRecord], n: usize, m: Method) -> Result<Vec<f64>, String> {
    recs.iter()
        .filter(|r| r.n == n && r.method == m)
        .map(|r| {
            r.value
                .ok_or_else(|| format!("N={n} {} trial {} failed: {:?}", m.label(), r.trial, r.error))
        })
        .collect()
}

fn verdict(ok: bool, notes: Vec<String>) -> Outcome {
    let text = notes.join("; ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn c2_rwnn_near_optimal(recs: &[TrialRecord]) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for n in [10, 20, 30] {
        let m = mean(&values(recs, n, Method::RwNn)?);
        ok &= m <= 1.02;
        notes.push(format!("N={n} mean {m:.5}"));
    }
    verdict(ok, notes)
}

fn c3_logdet() -> Outcome {
    let recs = run_experiment(&spec(Experiment::Fig1b, &[30]))?;
    let m = mean(&values(&recs, 30, Method::Logdet)?);
    verdict(m <= 1.05, vec![format!("N=30 mean {m:.5}")])
}

fn c4_error_bounds() -> Outcome {
    let n = 100;
    let s: Vec<f64> = (1..=n).map(|i| 1.1f64.powi(n - i)).collect();
    let rw = err_bound_rwnn(&s).map_err(|e| e.to_string())?;
    let nn = err_bound_nn(&s);
    verdict(
        (rw - 1.84).abs() <= 0.005 && nn == 100.0,
        vec![format!("rwnn {rw:.5}, nn {nn}")],
    )
}

fn c5_sylvester() -> Outcome {
    let mut r = rng(SEED);
    let mut worst_err = 0.0f64;
    let mut worst_res = 0.0f64;
    for k in 0..50 {
        let m = 1 + (k * 7) % 20;
        let n = 1 + (k * 13) % 20;
        let b1 = gaussian(&mut r, m, m) * 0.5;
        let b2 = gaussian(&mut r, n, n) * 0.5;
        let c = gaussian(&mut r, m, n);
        let x = solve_sylvester(&b1, &b2, &c).map_err(|e| e.to_string())?;
        // vec(B₁XB₂) = (B₂ᵀ ⊗ B₁) vec(X)
        let op = DMatrix::<f64>::identity(m * n, m * n) + b2.transpose().kronecker(&b1);
        let want = op
            .lu()
            .solve(&DVector::from_column_slice(c.as_slice()))
            .ok_or("Kronecker system singular")?;
        let want = DMatrix::from_column_slice(m, n, want.as_slice());
        worst_err = worst_err.max((&x - &want).norm() / want.norm());
        worst_res = worst_res.max((&x + &b1 * &x * &b2 - &c).norm() / c.norm());
    }
    verdict(
        worst_err <= 1e-8 && worst_res <= 1e-10,
        vec![format!("max rel diff {worst_err:.2e}, max residual {worst_res:.2e}")],
    )
}

/// Feasibility, rank, error ≥ 1 and RW ≤ NN dominance for a structured experiment.
fn structured_checks(e: Experiment, sizes: &[usize], p_of: impl Fn(u64, usize) -> StlsProblem) -> Outcome {
    let cfg = SolverConfig::default();
    let mut notes = Vec::new();
    let mut ok = true;
    for &n in sizes {
        let mut wins = 0;
        let mut worst_violation = 0.0f64;
        let mut min_err = f64::INFINITY;
        let mut max_rank = 0;
        for t in 0..TRIALS {
            let p = p_of(stls_bench::experiment::trial_seed(SEED, e, n, t), n);
            let proj = stls_core::Projector::new(&p.structure, n, n).map_err(|e| e.to_string())?;
            let mut errs = Vec::new();
            for sol in [nn_stls(&p, &cfg), reweighted_stls(&p, &cfg)] {
                let (sol, _) = sol.map_err(|e| format!("N={n} trial {t}: {e}"))?;
                worst_violation = worst_violation.max(proj.violation(&sol.e_hat));
                let s = singular_values(&sol.a_hat).map_err(|e| e.to_string())?;
                max_rank = max_rank.max(numerical_rank(s.as_slice(), cfg.rank_tol));
                let err = relative_error(&p, &sol).map_err(|e| e.to_string())?;
                min_err = min_err.min(err);
                errs.push(err);
            }
            wins += usize::from(errs[1] <= errs[0]);
        }
        let share = wins as f64 / TRIALS as f64;
        ok &= worst_violation == 0.0 || (e == Experiment::Fig2b && worst_violation <= 1e-12);
        ok &= max_rank < n && min_err >= 1.0 - 1e-9 && share >= 0.9;
        notes.push(format!(
            "N={n}: violation {worst_violation:.1e}, max rank {max_rank}, min err {min_err:.4}, RW≤NN {:.0}%",
            share * 100.0
        ));
    }
    verdict(ok, notes)
}

fn c6_mask() -> Outcome {
    structured_checks(Experiment::Fig2a, &[10, 20], |s, n| instances::fixed_mask(s, n, 0.5))
}

fn c7_toeplitz() -> Outcome {
    let mut r = rng(SEED);
    let mut worst = 0.0f64;
    for n in [3, 10, 20] {
        let e = gaussian(&mut r, n, n + 2);
        let once = project_structure(&e, &ErrorStructure::Toeplitz).map_err(|e| e.to_string())?;
        let twice = project_structure(&once, &ErrorStructure::Toeplitz).map_err(|e| e.to_string())?;
        worst = worst.max((&twice - &once).amax());
    }
    let rest = structured_checks(Experiment::Fig2b, &[10, 20], instances::toeplitz);
    let note = format!("idempotence {worst:.1e}");
    match rest {
        Ok(t) if worst <= 1e-12 => Ok(format!("{note}; {t}")),
        Ok(t) | Err(t) => Err(format!("{note}; {t}")),
    }
}

fn c8_hetero_noiseless() -> Outcome {
    let inst = synthesize(14, 2, 6, 0.0, SEED).map_err(|e| e.to_string())?;
    let (a, _) = build_system(&inst);
    let sol = hetero::solve_noiseless(&inst).map_err(|e| e.to_string())?;
    let cos = sol.cosine.ok_or("no truth")?;
    verdict(
        a.shape() == (84, 26) && cos >= 0.9999,
        vec![format!("system {:?}, cosine {cos:.6}", a.shape())],
    )
}

fn c9_hetero_noisy() -> Outcome {
    let cfg = SolverConfig::default();
    let mut cosines = Vec::new();
    let mut off_support = 0.0f64;
    for t in 0..TRIALS {
        let inst = synthesize(
            14,
            2,
            6,
            0.01,
            stls_bench::experiment::trial_seed(SEED, Experiment::Hetero, 6, t),
        )
        .map_err(|e| e.to_string())?;
        let map = inst.index_map();
        let sol = hetero::solve_noisy(&inst, &cfg).map_err(|e| format!("trial {t}: {e}"))?;
        cosines.push(sol.cosine.ok_or("no truth")?);
        let e = sol.e_hat.ok_or("no correction")?;
        for j in 0..e.ncols() {
            for i in 0..e.nrows() {
                if map.x_of(i, j).is_none() {
                    off_support = off_support.max(e[(i, j)].abs());
                }
            }
        }
    }
    let med = median(&cosines);
    verdict(
        med >= 0.95 && off_support <= 1e-10,
        vec![format!(
            "median cosine {med:.5}, min {:.5}, off-support {off_support:.1e}",
            cosines.iter().copied().fold(1.0, f64::min)
        )],
    )
}

fn c10_outliers() -> Outcome {
    let cfg = SolverConfig::default();
    let oc = OutlierConfig::default();
    let mag = *instances::OUTLIER_MAGNITUDES.last().unwrap();
    let (mut svd, mut rw) = (Vec::new(), Vec::new());
    for t in 0..TRIALS {
        let inst = instances::outliers(
            stls_bench::experiment::trial_seed(SEED, Experiment::Fig3, oc.size, t),
            &oc,
            mag,
        );
        let v = min_right_singular_vector(&inst.problem.a_bar).map_err(|e| e.to_string())?;
        svd.push(hetero::cosine(&v, &inst.truth));
        let (sol, _) = reweighted_stls(&inst.problem, &cfg).map_err(|e| format!("trial {t}: {e}"))?;
        rw.push(hetero::cosine(&sol.null_vec, &inst.truth));
    }
    let (ms, mr) = (median(&svd), median(&rw));
    verdict(
        mr > ms,
        vec![format!("magnitude {mag}: median RW-NN {mr:.4} vs SVD {ms:.4}")],
    )
}

/// Walks downhill from `y` on a grid of spacing `h` until neither neighbour is lower.
fn grid_descent(y: f64, alpha: f64, delta: f64, h: f64) -> f64 {
    let f = |x: f64| 0.5 * (x - y) * (x - y) + alpha * (delta + x.abs()).ln();
    let mut x = y;
    loop {
        let (l, r) = (x - h, x + h);
        let next = if f(l) < f(x) && f(l) <= f(r) {
            l
        } else if f(r) < f(x) {
            r
        } else {
            return x;
        };
        // the kink at zero is a minimum whenever we cross it
        if x != 0.0 && next.signum() != x.signum() {
            return 0.0;
        }
        x = next;
    }
}

fn c11_log_threshold() -> Outcome {
    let delta = 0.1;
    let mut worst = 0.0f64;
    let mut worst_stat = 0.0f64;
    for i in 0..20 {
        let y = -4.0 + 8.0 * i as f64 / 19.0;
        for j in 0..20 {
            let alpha = 0.02 + 1.5 * j as f64 / 19.0;
            let x = log_threshold_scalar(y, alpha, delta);
            worst = worst.max((x - grid_descent(y, alpha, delta, 1e-4)).abs());
            if x != 0.0 {
                let grad = (x - y) + alpha * x.signum() / (delta + x.abs());
                worst_stat = worst_stat.max(grad.abs());
            }
        }
    }
    verdict(
        worst <= 1e-3 && worst_stat <= 1e-8,
        vec![format!("max diff {worst:.1e}, max stationarity {worst_stat:.1e}")],
    )
}

fn c12_prox_and_determinism() -> Outcome {
    let mut r = rng(SEED);
    let mut notes = Vec::new();
    let mut ok = true;
    // local optimality of svt against random perturbations
    let mut optimal = true;
    let mut expansive = 0.0f64;
    for k in 0..20 {
        let (m, n) = (2 + k % 5, 2 + (k * 3) % 6);
        let z = gaussian(&mut r, m, n);
        let gamma = 0.2 + 0.1 * k as f64;
        let x = svt(&z, gamma).map_err(|e| e.to_string())?;
        let obj = |x: &DMatrix<f64>| gamma * singular_values(x).unwrap().sum() + 0.5 * (x - &z).norm_squared();
        let base = obj(&x);
        for _ in 0..50 {
            let p = gaussian(&mut r, m, n) * 1e-3;
            optimal &= obj(&(&x + p)) >= base - 1e-12;
        }
        let z2 = &z + gaussian(&mut r, m, n) * 0.3;
        let x2 = svt(&z2, gamma).map_err(|e| e.to_string())?;
        expansive = expansive.max((&x2 - &x).norm() - (&z2 - &z).norm());
    }
    ok &= optimal && expansive <= 1e-12;
    notes.push(format!("svt optimal {optimal}, max expansion {expansive:.1e}"));

    let e = gaussian(&mut r, 6, 5);
    let mask = ErrorStructure::mask_from_fn(6, 5, |i, j| (i + j) % 3 == 0);
    let general = ErrorStructure::GeneralLinear(vec![
        LinearConstraint {
            l: gaussian(&mut r, 6, 5),
            b: 0.3,
        },
        LinearConstraint {
            l: gaussian(&mut r, 6, 5),
            b: -1.0,
        },
    ]);
    let mut idem = 0.0f64;
    for s in [ErrorStructure::Unconstrained, mask, ErrorStructure::Toeplitz, general] {
        let once = project_structure(&e, &s).map_err(|e| e.to_string())?;
        let twice = project_structure(&once, &s).map_err(|e| e.to_string())?;
        idem = idem.max((&twice - &once).amax());
    }
    ok &= idem <= 1e-12;
    notes.push(format!("projection idempotence {idem:.1e}"));

    let spec = ExperimentSpec {
        sizes: vec![5, 6],
        trials: 4,
        ..ExperimentSpec::new(Experiment::Fig2a, SEED)
    };
    let a = records_to_csv(&run_experiment(&spec)?, false);
    let b = records_to_csv(&run_experiment(&spec)?, false);
    ok &= a.as_bytes() == b.as_bytes();
    notes.push(format!("harness CSV identical {}", a == b));
    verdict(ok, notes)
}

fn main() {
    let mut failed = 0;
    let mut run = |id: u32, name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let res = f();
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("PASS criterion {id:2} {name}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {id:2} {name}: {msg} [{secs:.1}s]");
            }
        }
    };
    let fig1a = std::cell::OnceCell::new();
    let fig1a_records = || -> Result<&Vec<TrialRecord>, String> {
        if fig1a.get().is_none() {
            let _ = fig1a.set(run_experiment(&spec(Experiment::Fig1a, &[10, 20, 30]))?);
        }
        Ok(fig1a.get().unwrap())
    };
    run(1, "nn-error-scales-as-sqrt-n", &|| {
        let recs = fig1a_records()?;
        let mut notes = Vec::new();
        let mut ok = true;
        for n in [10, 20, 30] {
            let m = mean(&values(recs, n, Method::Nn)?);
            let target = (n as f64).sqrt();
            ok &= (m - target).abs() <= 0.1 * target;
            notes.push(format!("N={n} mean {m:.4} vs {target:.4}"));
        }
        verdict(ok, notes)
    });
    run(2, "rwnn-near-tls-optimum", &|| c2_rwnn_near_optimal(fig1a_records()?));
    run(3, "logdet-near-tls-optimum", &c3_logdet);
    run(4, "error-bounds", &c4_error_bounds);
    run(5, "sylvester-vs-kronecker", &c5_sylvester);
    run(6, "fixed-mask", &c6_mask);
    run(7, "toeplitz", &c7_toeplitz);
    run(8, "hetero-noiseless", &c8_hetero_noiseless);
    run(9, "hetero-noisy", &c9_hetero_noisy);
    run(10, "outlier-robustness", &c10_outliers);
    run(11, "log-threshold-vs-grid", &c11_log_threshold);
    run(12, "prox-and-determinism", &c12_prox_and_determinism);
    println!("{} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
