//! Test functions, the empirical quadratic loss, and the experiment runners
//! that compare compression methods by |err - app| and by construction time.

use std::time::Instant;

use serde::Serialize;

use crate::cluster::{self, Method};
use crate::dataset::{add_noise, generate_uniform, Dataset};
use crate::error::{Error, Result};
use crate::net::{faure_matrices, generate_points, load_matrices, DigitalNet};
use crate::weights::{app_avg, compute_weights, default_nu};
use crate::{derive_seed, KahanSum};

/// The three benchmark functions on `[0,1)^s`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// exp(-sum a_i |x_i - u_i|): continuous, no higher smoothness.
    F1 { a: Vec<f64>, u: Vec<f64> },
    /// 0 when x_1 > u_1 or x_2 > u_2, otherwise exp(sum a_i x_i): discontinuous.
    F2 { a: Vec<f64>, u: Vec<f64> },
    /// Two-bump Gaussian mixture (Zhou): smooth in every order.
    F3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionKind {
    F1,
    F2,
    F3,
}

impl FunctionKind {
    pub fn name(&self) -> &'static str {
        match self {
            FunctionKind::F1 => "f1",
            FunctionKind::F2 => "f2",
            FunctionKind::F3 => "f3",
        }
    }
}

impl TestFunction {
    /// Default parameters: a_i = 5, u_i = 0.5.
    pub fn with_defaults(kind: FunctionKind, s: usize) -> Self {
        match kind {
            FunctionKind::F1 => TestFunction::F1 { a: vec![5.0; s], u: vec![0.5; s] },
            FunctionKind::F2 => TestFunction::F2 { a: vec![5.0; s], u: vec![0.5; s] },
            FunctionKind::F3 => TestFunction::F3,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::F1 { a, u } => eval_f1(x, a, u),
            TestFunction::F2 { a, u } => eval_f2(x, a, u),
            TestFunction::F3 => eval_f3(x),
        }
    }

    /// Supremum of |f| over the unit cube, in closed form. Used to normalize
    /// the scaled-response experiment.
    pub fn sup_norm(&self, s: usize) -> f64 {
        match self {
            TestFunction::F1 { .. } => 1.0,
            TestFunction::F2 { a, u } => {
                // supremum of exp(sum a_i x_i) over the closure of the nonzero
                // branch: x_1 <= u_1, x_2 <= u_2, remaining coordinates free
                let mut exponent = 0.0;
                for (i, ai) in a.iter().enumerate().take(s) {
                    exponent += if i < 2 { ai * u[i] } else { *ai };
                }
                exponent.exp()
            }
            TestFunction::F3 => {
                // both kernel modes contribute at x = 1/3 (or 2/3)
                let x = vec![1.0 / 3.0; s];
                eval_f3(&x)
            }
        }
    }
}

pub fn eval_f1(x: &[f64], a: &[f64], u: &[f64]) -> f64 {
    let sum: f64 = x.iter().zip(a).zip(u).map(|((xi, ai), ui)| ai * (xi - ui).abs()).sum();
    (-sum).exp()
}

pub fn eval_f2(x: &[f64], a: &[f64], u: &[f64]) -> f64 {
    // the zero branch tests the first two coordinates only, for every s
    if x[0] > u[0] || (x.len() > 1 && x[1] > u[1]) {
        return 0.0;
    }
    let sum: f64 = x.iter().zip(a).map(|(xi, ai)| ai * xi).sum();
    sum.exp()
}

pub fn eval_f3(x: &[f64]) -> f64 {
    let s = x.len();
    let phi = |v: &[f64]| {
        let norm_sq: f64 = v.iter().map(|vi| vi * vi).sum();
        (2.0 * std::f64::consts::PI).powf(-(s as f64) / 2.0) * (-norm_sq / 2.0).exp()
    };
    let lo: Vec<f64> = x.iter().map(|xi| 10.0 * xi - 10.0 / 3.0).collect();
    let hi: Vec<f64> = x.iter().map(|xi| 10.0 * xi - 20.0 / 3.0).collect();
    10f64.powi(s as i32) / 2.0 * (phi(&lo) + phi(&hi))
}

/// Empirical quadratic loss (1/N) sum (f(x_n) - y_n)^2.
pub fn err<F: Fn(&[f64]) -> f64>(f: F, data: &Dataset) -> f64 {
    let mut acc = KahanSum::new();
    for (x, &y) in data.points.iter().zip(&data.responses) {
        let d = f(x) - y;
        acc.add(d * d);
    }
    acc.value() / data.len() as f64
}

/// Where the digital net for QMC methods comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum NetSource {
    Faure { b: u32 },
    File { path: String },
}

impl Default for NetSource {
    fn default() -> Self {
        NetSource::Faure { b: 2 }
    }
}

/// Default experiment noise: the benchmark perturbation N(0, 0.02) read as
/// standard deviation 0.02, i.e. variance 4e-4.
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.02 * 0.02;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n: usize,
    pub s: usize,
    pub k_grid: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub noise_variance: f64,
    pub methods: Vec<Method>,
    pub function: FunctionKind,
    pub net_source: NetSource,
    /// Robust-supercompress trade-off weight; defaults to 1/(s+1).
    pub lambda: Option<f64>,
    /// Override for the refinement level nu (default: rule-based).
    pub nu: Option<u32>,
    /// Scale responses before adding noise instead of after.
    pub scale_before_noise: bool,
}

impl ExperimentConfig {
    pub fn new(function: FunctionKind, n: usize, s: usize, k_grid: Vec<usize>) -> Self {
        Self {
            n,
            s,
            k_grid,
            repetitions: 20,
            seed: 0,
            noise_variance: DEFAULT_NOISE_VARIANCE,
            methods: vec![Method::Supercompress, Method::QmcVoronoi],
            function,
            net_source: NetSource::default(),
            lambda: None,
            nu: None,
            scale_before_noise: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub function: String,
    pub n: usize,
    pub s: usize,
    pub k: usize,
    pub gamma: Option<f64>,
    pub mean_abs_error: Option<f64>,
    pub mean_time_s: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn to_csv_string(&self, include_time: bool) -> String {
        let mut out = String::from("method,function,N,s,K,gamma,mean_abs_error");
        if include_time {
            out.push_str(",mean_time_s");
        }
        out.push('\n');
        for r in &self.rows {
            let gamma = r.gamma.map(|g| g.to_string()).unwrap_or_default();
            let err = r.mean_abs_error.map(|e| e.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}",
                r.method, r.function, r.n, r.s, r.k, gamma, err
            ));
            if include_time {
                out.push(',');
                if let Some(t) = r.mean_time_s {
                    out.push_str(&t.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("report serialization: {e}")))
    }
}

fn is_power_of(k: usize, b: u32) -> Option<usize> {
    let mut m = 0;
    let mut v = 1usize;
    while v < k {
        v = v.checked_mul(b as usize)?;
        m += 1;
    }
    (v == k).then_some(m)
}

fn net_for_k(source: &NetSource, s: usize, k: usize) -> Result<DigitalNet> {
    match source {
        NetSource::Faure { b } => {
            let m = is_power_of(k, *b).ok_or_else(|| {
                Error::Parameter(format!("K = {k} is not a power of b = {b}"))
            })?;
            generate_points(&faure_matrices(*b, m, s.max(*b as usize))?, s)
        }
        NetSource::File { path } => {
            let set = load_matrices(path)?;
            let l = (set.b as usize).checked_pow(set.m as u32);
            if l != Some(k) {
                return Err(Error::Parameter(format!(
                    "matrix file provides b^m = {}^{} points, K = {k} requested",
                    set.b, set.m
                )));
            }
            generate_points(&set, s)
        }
    }
}

struct MethodOutcome {
    abs_error: f64,
    seconds: f64,
}

fn run_method<F: Fn(&[f64]) -> f64>(
    method: Method,
    data: &Dataset,
    f: &F,
    empirical: f64,
    net: Option<&DigitalNet>,
    lambda: Option<f64>,
    k: usize,
    seed: u64,
) -> Result<MethodOutcome> {
    let start = Instant::now();
    let model = match method {
        Method::Supercompress => cluster::supercompress(data, k, seed)?,
        Method::RobustSupercompress => {
            let lam = lambda.unwrap_or(1.0 / (data.s as f64 + 1.0));
            cluster::robust_supercompress(data, k, lam, seed)?
        }
        Method::KMeans => cluster::kmeans(data, k, seed)?,
        Method::QmcVoronoi => cluster::qmc_voronoi(data, net.expect("net built"))?,
    };
    let seconds = start.elapsed().as_secs_f64();
    let f_at: Vec<f64> = model.centers.iter().map(|c| f(c)).collect();
    Ok(MethodOutcome {
        abs_error: (empirical - cluster::app_clst(&f_at, &model.responses)?).abs(),
        seconds,
    })
}

/// The weighted route is separate: its construction step is the weight
/// computation, its evaluation is app_avg.
fn run_averaging<F: Fn(&[f64]) -> f64>(
    data: &Dataset,
    f: &F,
    empirical: f64,
    net: &DigitalNet,
    nu_override: Option<u32>,
) -> Result<MethodOutcome> {
    let nu = nu_override
        .unwrap_or_else(|| default_nu(net.m, net.t.unwrap_or(0), net.alpha));
    let start = Instant::now();
    let weights = compute_weights(data, net, nu)?;
    let seconds = start.elapsed().as_secs_f64();
    let f_vals: Vec<f64> = net.points.iter().map(|z| f(z)).collect();
    let f_sq: Vec<f64> = f_vals.iter().map(|v| v * v).collect();
    let app = app_avg(&f_vals, &f_sq, &weights)?;
    Ok(MethodOutcome { abs_error: (empirical - app).abs(), seconds })
}

/// Method label used in reports; QMC-averaging is reported alongside the
/// clustering methods even though it produces weights, not responses.
pub const QMC_AVERAGING: &str = "qmc-averaging";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    Cluster(Method),
    QmcAveraging,
}

impl BenchMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BenchMethod::Cluster(m) => m.name(),
            BenchMethod::QmcAveraging => QMC_AVERAGING,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "supercompress" => BenchMethod::Cluster(Method::Supercompress),
            "robust" | "robust-supercompress" => BenchMethod::Cluster(Method::RobustSupercompress),
            "voronoi" | "qmc-voronoi" => BenchMethod::Cluster(Method::QmcVoronoi),
            "kmeans" | "k-means" => BenchMethod::Cluster(Method::KMeans),
            "qmc-avg" | "qmc-averaging" | "averaging" => BenchMethod::QmcAveraging,
            other => return Err(Error::Parameter(format!("unknown method {other:?}"))),
        })
    }
}

/// Builds compressions per repetition and averages |err - app| per method
/// and K. Scaling by gamma (when given) multiplies the function by
/// gamma / sup(f)^2 before responses are generated.
fn run_experiment_core(
    config: &ExperimentConfig,
    methods: &[BenchMethod],
    gamma: Option<f64>,
    record_time: bool,
) -> Result<ExperimentReport> {
    if config.repetitions == 0 {
        return Err(Error::Parameter("repetitions must be >= 1".into()));
    }
    if config.n == 0 || config.s == 0 {
        return Err(Error::Range("n and s must be positive".into()));
    }
    let base = TestFunction::with_defaults(config.function, config.s);
    let scale = gamma.map(|g| g / base.sup_norm(config.s).powi(2)).unwrap_or(1.0);
    let f = |x: &[f64]| scale * base.eval(x);

    let mut report = ExperimentReport::default();
    for &k in &config.k_grid {
        let needs_net = methods
            .iter()
            .any(|m| matches!(m, BenchMethod::QmcAveraging | BenchMethod::Cluster(Method::QmcVoronoi)));
        let net = if needs_net { Some(net_for_k(&config.net_source, config.s, k)?) } else { None };

        let mut err_sums: Vec<KahanSum> = vec![KahanSum::new(); methods.len()];
        let mut time_sums: Vec<KahanSum> = vec![KahanSum::new(); methods.len()];
        // one discarded warm-up repetition when timing
        let reps: Vec<u64> = if record_time {
            (0..=config.repetitions as u64).collect()
        } else {
            (1..=config.repetitions as u64).collect()
        };
        for (pos, &rep) in reps.iter().enumerate() {
            let warmup = record_time && pos == 0;
            let rep_seed = derive_seed(config.seed, rep.wrapping_mul(1024) ^ k as u64);
            let points = generate_uniform(config.n, config.s, rep_seed)?;
            let clean: Vec<f64> = points.iter().map(|p| f(p)).collect();
            let responses = if config.scale_before_noise && gamma.is_some() {
                let unscaled: Vec<f64> = points.iter().map(|p| base.eval(p)).collect();
                add_noise(&unscaled, config.noise_variance, derive_seed(rep_seed, 1))?
                    .into_iter()
                    .map(|y| scale * y)
                    .collect()
            } else {
                add_noise(&clean, config.noise_variance, derive_seed(rep_seed, 1))?
            };
            let data = Dataset::new(points, responses)?;
            let empirical = err(&f, &data);

            for (mi, method) in methods.iter().enumerate() {
                let seed = derive_seed(rep_seed, 2 + mi as u64);
                let outcome = match method {
                    BenchMethod::QmcAveraging => run_averaging(
                        &data,
                        &f,
                        empirical,
                        net.as_ref().expect("net built"),
                        config.nu,
                    )?,
                    BenchMethod::Cluster(m) => run_method(
                        *m,
                        &data,
                        &f,
                        empirical,
                        net.as_ref(),
                        config.lambda,
                        k,
                        seed,
                    )?,
                };
                if !warmup {
                    err_sums[mi].add(outcome.abs_error);
                    time_sums[mi].add(outcome.seconds);
                }
            }
        }
        for (mi, method) in methods.iter().enumerate() {
            report.rows.push(ReportRow {
                method: method.name().to_string(),
                function: config.function.name().to_string(),
                n: config.n,
                s: config.s,
                k,
                gamma,
                mean_abs_error: Some(err_sums[mi].value() / config.repetitions as f64),
                mean_time_s: record_time
                    .then(|| time_sums[mi].value() / config.repetitions as f64),
            });
        }
    }
    Ok(report)
}

/// |err - app| comparison across methods and K values.
pub fn run_error_experiment(
    config: &ExperimentConfig,
    methods: &[BenchMethod],
) -> Result<ExperimentReport> {
    run_experiment_core(config, methods, None, false)
}

/// Scaled-response variant: one report per gamma.
pub fn run_scale_experiment(
    config: &ExperimentConfig,
    methods: &[BenchMethod],
    gammas: &[f64],
) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::default();
    for &gamma in gammas {
        let sub = run_experiment_core(config, methods, Some(gamma), false)?;
        report.rows.extend(sub.rows);
    }
    Ok(report)
}

/// Mean wall time of compression construction only (data generation and
/// function evaluation excluded; one warm-up repetition discarded).
pub fn run_timing_experiment(
    config: &ExperimentConfig,
    methods: &[BenchMethod],
) -> Result<ExperimentReport> {
    run_experiment_core(config, methods, None, true)
}
