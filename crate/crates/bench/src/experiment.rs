//! Seeded experiment runs: one record per (size, trial, parameter, method).

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use stls_core::hetero;
use stls_core::linalg::min_right_singular_vector;
use stls_core::random::{derive_seed, label_hash};
use stls_core::{logdet_tls, nn_stls, relative_error, reweighted_stls, SolverConfig, StlsError, StlsProblem};

use crate::instances::{self, OutlierConfig, OUTLIER_MAGNITUDES};

/// Genes and states of the synthetic heterogeneity runs.
pub const HETERO_GENES: usize = 14;
pub const HETERO_STATES: usize = 2;
pub const HETERO_NOISE: [f64; 5] = [0.0, 0.005, 0.01, 0.02, 0.05];
/// Share of fixed entries in the masked runs.
pub const MASK_DENSITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Experiment {
    /// NN and RW-NN on unstructured Gaussian matrices.
    Fig1a,
    /// Fixed-α log-det TLS on unstructured Gaussian matrices.
    Fig1b,
    /// Random fixed-entry masks.
    Fig2a,
    /// Toeplitz matrices and errors.
    Fig2b,
    /// Block-diagonal errors with weighted outliers; parameter is the outlier magnitude.
    Fig3,
    /// Synthetic compound systems; size is the number of conditions, parameter the noise level.
    Hetero,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Fig1a,
        Experiment::Fig1b,
        Experiment::Fig2a,
        Experiment::Fig2b,
        Experiment::Fig3,
        Experiment::Hetero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig1a => "fig1a",
            Experiment::Fig1b => "fig1b",
            Experiment::Fig2a => "fig2a",
            Experiment::Fig2b => "fig2b",
            Experiment::Fig3 => "fig3",
            Experiment::Hetero => "hetero",
        }
    }

    pub fn default_sizes(self) -> Vec<usize> {
        match self {
            Experiment::Fig1a | Experiment::Fig1b => vec![10, 20, 30],
            Experiment::Fig2a | Experiment::Fig2b => vec![10, 20],
            Experiment::Fig3 => vec![OutlierConfig::default().size],
            Experiment::Hetero => vec![6],
        }
    }

    /// Swept parameter values; empty when the experiment has none.
    pub fn default_params(self) -> Vec<f64> {
        match self {
            Experiment::Fig3 => OUTLIER_MAGNITUDES.to_vec(),
            Experiment::Hetero => HETERO_NOISE.to_vec(),
            _ => Vec::new(),
        }
    }

    pub fn takes_params(self) -> bool {
        !self.default_params().is_empty()
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            format!("unknown experiment {s:?} (expected one of fig1a, fig1b, fig2a, fig2b, fig3, hetero)")
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    Svd,
    Nn,
    RwNn,
    Logdet,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Svd => "SVD",
            Method::Nn => "NN",
            Method::RwNn => "RW-NN",
            Method::Logdet => "LOGDET",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Metric {
    RelativeError,
    Cosine,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::RelativeError => "relative_error",
            Metric::Cosine => "cosine",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Swept parameter (outlier magnitude, noise level); ignored by experiments without one.
    pub params: Vec<f64>,
    pub solver: SolverConfig,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment, seed: u64) -> Self {
        Self {
            experiment,
            sizes: experiment.default_sizes(),
            trials: 100,
            seed,
            params: experiment.default_params(),
            solver: SolverConfig::default(),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.sizes.is_empty() {
            return Err("no sizes given".into());
        }
        if self.trials == 0 {
            return Err("trials must be ≥ 1".into());
        }
        let min = match self.experiment {
            Experiment::Fig3 => OutlierConfig::default().block,
            _ => 2,
        };
        let max = match self.experiment {
            Experiment::Hetero => HETERO_GENES * HETERO_STATES,
            _ => usize::MAX,
        };
        if let Some(bad) = self.sizes.iter().find(|&&n| n < min.min(max) || n > max) {
            return Err(format!("size {bad} out of range for {}", self.experiment.name()));
        }
        if self.experiment.takes_params() {
            if self.params.is_empty() {
                return Err(format!("{} needs at least one parameter value", self.experiment.name()));
            }
            if self.params.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err("parameters must be finite and ≥ 0".into());
            }
        }
        self.solver.check().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub experiment: Experiment,
    pub n: usize,
    pub param: Option<f64>,
    pub trial: usize,
    pub method: Method,
    pub metric: Metric,
    /// `None` when the solver failed; `error` then holds its category.
    pub value: Option<f64>,
    pub error: Option<&'static str>,
    /// Seconds.
    pub wall_time: f64,
}

/// Seed of one trial; independent of thread scheduling and of the other sizes.
pub fn trial_seed(master: u64, experiment: Experiment, n: usize, trial: usize) -> u64 {
    derive_seed(master, &[label_hash(experiment.name()), n as u64, trial as u64])
}

/// Runs every trial in parallel; records come back in (size, trial, parameter, method) order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>, String> {
    spec.check()?;
    let jobs: Vec<(usize, usize)> = spec
        .sizes
        .iter()
        .flat_map(|&n| (0..spec.trials).map(move |t| (n, t)))
        .collect();
    let per_trial: Vec<Vec<TrialRecord>> = jobs.par_iter().map(|&(n, t)| run_trial(spec, n, t)).collect();
    Ok(per_trial.into_iter().flatten().collect())
}

struct Recorder<'a> {
    spec: &'a ExperimentSpec,
    n: usize,
    trial: usize,
    out: Vec<TrialRecord>,
}

impl Recorder<'_> {
    fn time<T>(
        &mut self,
        param: Option<f64>,
        method: Method,
        metric: Metric,
        f: impl FnOnce() -> Result<T, StlsError>,
        value: impl FnOnce(T) -> Result<f64, StlsError>,
    ) {
        let start = Instant::now();
        let res = f().and_then(value);
        let wall_time = start.elapsed().as_secs_f64();
        self.push(param, method, metric, res.map_err(|e| e.category()), wall_time);
    }

    fn push(
        &mut self,
        param: Option<f64>,
        method: Method,
        metric: Metric,
        res: Result<f64, &'static str>,
        wall_time: f64,
    ) {
        let (value, error) = match res {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e)),
        };
        self.out.push(TrialRecord {
            experiment: self.spec.experiment,
            n: self.n,
            param,
            trial: self.trial,
            method,
            metric,
            value,
            error,
            wall_time,
        });
    }

    fn nn_pair(&mut self, p: &StlsProblem) {
        let cfg = &self.spec.solver;
        self.time(
            None,
            Method::Nn,
            Metric::RelativeError,
            || nn_stls(p, cfg),
            |(s, _)| relative_error(p, &s),
        );
        self.time(
            None,
            Method::RwNn,
            Metric::RelativeError,
            || reweighted_stls(p, cfg),
            |(s, _)| relative_error(p, &s),
        );
    }
}

pub fn run_trial(spec: &ExperimentSpec, n: usize, trial: usize) -> Vec<TrialRecord> {
    let seed = trial_seed(spec.seed, spec.experiment, n, trial);
    let mut rec = Recorder {
        spec,
        n,
        trial,
        out: Vec::new(),
    };
    let cfg = &spec.solver;
    match spec.experiment {
        Experiment::Fig1a => rec.nn_pair(&instances::gaussian_square(seed, n)),
        Experiment::Fig1b => {
            let p = instances::gaussian_square(seed, n);
            rec.time(
                None,
                Method::Logdet,
                Metric::RelativeError,
                || logdet_tls(&p.a_bar),
                |s| relative_error(&p, &s),
            );
        }
        Experiment::Fig2a => rec.nn_pair(&instances::fixed_mask(seed, n, MASK_DENSITY)),
        Experiment::Fig2b => rec.nn_pair(&instances::toeplitz(seed, n)),
        Experiment::Fig3 => {
            let oc = OutlierConfig {
                size: n,
                ..OutlierConfig::default()
            };
            for &mag in &spec.params {
                let inst = instances::outliers(seed, &oc, mag);
                let cos = |v: &nalgebra::DVector<f64>| hetero::cosine(v, &inst.truth);
                rec.time(
                    Some(mag),
                    Method::Svd,
                    Metric::Cosine,
                    || min_right_singular_vector(&inst.problem.a_bar),
                    |v| Ok(cos(&v)),
                );
                rec.time(
                    Some(mag),
                    Method::RwNn,
                    Metric::Cosine,
                    || reweighted_stls(&inst.problem, cfg),
                    |(s, _)| Ok(cos(&s.null_vec)),
                );
            }
        }
        Experiment::Hetero => {
            for &level in &spec.params {
                let inst = match hetero::synthesize(HETERO_GENES, HETERO_STATES, n, level, seed) {
                    Ok(i) => i,
                    Err(e) => {
                        for m in [Method::Svd, Method::RwNn] {
                            rec.push(Some(level), m, Metric::Cosine, Err(e.category()), 0.0);
                        }
                        continue;
                    }
                };
                let cosine =
                    |s: hetero::HeterogeneitySolution| s.cosine.ok_or(StlsError::InvalidArgument("no truth".into()));
                rec.time(
                    Some(level),
                    Method::Svd,
                    Metric::Cosine,
                    || hetero::solve_noiseless(&inst),
                    cosine,
                );
                rec.time(
                    Some(level),
                    Method::RwNn,
                    Metric::Cosine,
                    || hetero::solve_noisy(&inst, cfg),
                    cosine,
                );
            }
        }
    }
    rec.out
}

fn fmt_value(v: f64) -> String {
    format!("{v:.17e}")
}

/// CSV with header; `timings` appends the (non-reproducible) wall-time column.
pub fn records_to_csv(records: &[TrialRecord], timings: bool) -> String {
    let mut out = String::from("experiment,n,param,trial,method,metric,value,error");
    if timings {
        out.push_str(",wall_time");
    }
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.experiment.name(),
            r.n,
            r.param.map(fmt_value).unwrap_or_default(),
            r.trial,
            r.method.label(),
            r.metric.label(),
            r.value.map(fmt_value).unwrap_or_default(),
            r.error.unwrap_or_default(),
        );
        if timings {
            let _ = write!(out, ",{:.6}", r.wall_time);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: Experiment,
    pub n: usize,
    pub param: Option<f64>,
    pub method: Method,
    pub metric: Metric,
    pub count: usize,
    pub failed: usize,
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub q90: f64,
}

/// Linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let pos = q.clamp(0.0, 1.0) * (len - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Groups in order of first appearance.
pub fn summarize(records: &[TrialRecord]) -> Vec<Summary> {
    type Key = (usize, Option<u64>, Method, Metric);
    let mut groups: Vec<(Key, Experiment, Vec<f64>, usize)> = Vec::new();
    for r in records {
        let key = (r.n, r.param.map(f64::to_bits), r.method, r.metric);
        let idx = match groups.iter().position(|g| g.0 == key && g.1 == r.experiment) {
            Some(i) => i,
            None => {
                groups.push((key, r.experiment, Vec::new(), 0));
                groups.len() - 1
            }
        };
        match r.value {
            Some(v) => groups[idx].2.push(v),
            None => groups[idx].3 += 1,
        }
    }
    groups
        .into_iter()
        .map(|((n, param, method, metric), experiment, mut vals, failed)| {
            vals.sort_by(f64::total_cmp);
            let mean = if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            Summary {
                experiment,
                n,
                param: param.map(f64::from_bits),
                method,
                metric,
                count: vals.len(),
                failed,
                min: vals.first().copied().unwrap_or(f64::NAN),
                mean,
                median: quantile(&vals, 0.5),
                q90: quantile(&vals, 0.9),
            }
        })
        .collect()
}

pub fn format_summary(rows: &[Summary]) -> String {
    let mut out = String::from("experiment\tn\tparam\tmethod\tmetric\tok\tfailed\tmin\tmean\tmedian\tq90\n");
    for s in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            s.experiment.name(),
            s.n,
            s.param.map(|p| p.to_string()).unwrap_or_else(|| "-".into()),
            s.method.label(),
            s.metric.label(),
            s.count,
            s.failed,
            s.min,
            s.mean,
            s.median,
            s.q90
        );
    }
    out
}
