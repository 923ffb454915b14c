//! Command-line interface: net generation, weight computation, compression,
//! benchmarking and MLP train/eval, all seeded for reproducibility.
//! Outputs are assembled in memory and written in one shot, so a failing
//! pipeline never leaves partial files behind.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cluster::{self, Method};
use crate::dataset;
use crate::error::{Error, Result};
use crate::mlp::{self, LossMode, MlpModel, TrainConfig};
use crate::net::{self, DigitalNet};
use crate::testbed::{
    self, BenchMethod, ExperimentConfig, FunctionKind, NetSource,
};
use crate::weights;

#[derive(Debug, Parser)]
#[command(
    name = "qmc-compress",
    about = "Dataset compression with digital nets, weighted QMC averaging and supervised clustering",
    version
)]
struct Cli {
    /// Cap rayon parallelism (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Read additional key=value flags from a file (one per line, # comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate digital-net points and write them as CSV.
    Net(NetArgs),
    /// Compute QMC-averaging weights for a dataset over a digital net.
    Weights(WeightsArgs),
    /// Compress a dataset with one of the clustering/net methods.
    Compress(CompressArgs),
    /// Run error/scale/timing benchmark experiments.
    Bench(BenchArgs),
    /// Train an MLP on full, clustered, or weighted data.
    Train(TrainArgs),
    /// Evaluate a trained model on a labeled test set.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Clone)]
struct NetSpecArgs {
    /// Prime base of the net.
    #[arg(long, default_value_t = 2)]
    b: u32,

    /// Size exponent: the net has b^m points.
    #[arg(long)]
    m: Option<usize>,

    /// Use the Faure construction (default when no matrix file is given).
    #[arg(long, default_value_t = false)]
    faure: bool,

    /// Generating-matrix file (first line "b m s alpha", then row blocks).
    #[arg(long)]
    matrices: Option<PathBuf>,

    /// Interlacing order applied to Faure matrices.
    #[arg(long, default_value_t = 1)]
    alpha: usize,
}

impl NetSpecArgs {
    /// Builds the net from the matrix file if given, otherwise from the
    /// Faure construction (--faure just makes the default explicit).
    fn build(&self, s: usize) -> Result<DigitalNet> {
        let set = match &self.matrices {
            Some(path) => net::load_matrices(path)?,
            None => {
                let m = self.m.ok_or_else(|| {
                    Error::Parameter("--m is required for the Faure construction".into())
                })?;
                if (self.b as usize) < s {
                    eprintln!(
                        "warning: Faure base {} below dimension {s}; net quality degrades (t > 0)",
                        self.b
                    );
                }
                let set = net::faure_matrices(self.b, m, s.max(self.b as usize) * self.alpha)?;
                if self.alpha > 1 {
                    let subset = net::GeneratingMatrixSet {
                        b: set.b,
                        m: set.m,
                        alpha: 1,
                        matrices: set.matrices[..s * self.alpha].to_vec(),
                        known_t: None,
                    };
                    net::interlace(&subset, self.alpha)?
                } else {
                    set
                }
            }
        };
        net::generate_points(&set, s)
    }
}

#[derive(Debug, Args)]
struct NetArgs {
    #[command(flatten)]
    spec: NetSpecArgs,

    /// Dimension of the generated points.
    #[arg(long)]
    s: usize,

    /// Verify the net property exhaustively and report the minimal t.
    #[arg(long, default_value_t = false)]
    verify: bool,

    /// Output CSV path (net points, one row per point).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WeightsArgs {
    /// Input dataset CSV (columns x1..xs,y).
    #[arg(long)]
    data: PathBuf,

    #[command(flatten)]
    spec: NetSpecArgs,

    /// Refinement level; defaults to the rule m/2 (alpha = 1) or
    /// alpha*m/(alpha+1), clamped to [0, m - t].
    #[arg(long)]
    nu: Option<u32>,

    /// Output CSV path (columns l, z1..zs, wx, wxy).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompressArgs {
    /// supercompress | robust | voronoi | kmeans
    #[arg(long)]
    method: String,

    /// Input dataset CSV.
    #[arg(long)]
    data: PathBuf,

    /// Number of compressed points (clustering methods).
    #[arg(long)]
    k: Option<usize>,

    #[command(flatten)]
    spec: NetSpecArgs,

    /// Robust-supercompress trade-off weight in [0,1]; default 1/(s+1).
    #[arg(long)]
    lambda: Option<f64>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Round responses to integer digit labels (MNIST-style pipelines).
    #[arg(long, default_value_t = false)]
    round_responses: bool,

    /// Output CSV path (centers + response, plus net_index for voronoi).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// error | scale | timing
    #[arg(long, default_value = "error")]
    kind: String,

    /// f1 | f2 | f3
    #[arg(long, default_value = "f1")]
    function: String,

    #[arg(long, default_value_t = 3000)]
    n: usize,

    #[arg(long, default_value_t = 2)]
    s: usize,

    /// Comma-separated compressed sizes, e.g. 128,256,512.
    #[arg(long, default_value = "256", value_delimiter = ',')]
    k: Vec<usize>,

    #[arg(long, default_value_t = 20)]
    reps: usize,

    /// Comma-separated methods: supercompress,robust,voronoi,kmeans,qmc-avg.
    #[arg(long, default_value = "supercompress,qmc-avg", value_delimiter = ',')]
    methods: Vec<String>,

    /// Noise variance added to responses.
    #[arg(long, default_value_t = testbed::DEFAULT_NOISE_VARIANCE)]
    noise_var: f64,

    /// Scales for the scale experiment.
    #[arg(long, value_delimiter = ',', default_value = "100,10,1")]
    gammas: Vec<f64>,

    /// Add noise before applying the response scale (scale experiment).
    #[arg(long, default_value_t = false)]
    scale_before_noise: bool,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Override nu for QMC averaging.
    #[arg(long)]
    nu: Option<u32>,

    /// Robust-supercompress lambda.
    #[arg(long)]
    lambda: Option<f64>,

    /// Matrix file for the QMC methods (default: Faure base 2).
    #[arg(long)]
    matrices: Option<PathBuf>,

    /// csv | json
    #[arg(long, default_value = "csv")]
    format: String,

    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// full | clustered | weighted
    #[arg(long, default_value = "full")]
    mode: String,

    /// Training dataset CSV: raw data (full/weighted) or centers (clustered).
    #[arg(long)]
    data: PathBuf,

    #[command(flatten)]
    spec: NetSpecArgs,

    /// nu for the weighted mode.
    #[arg(long)]
    nu: Option<u32>,

    /// scalar | classes: scalar regression with round-and-clamp prediction,
    /// or a 10-score head trained on rounded labels (argmax prediction).
    /// Weighted mode is always scalar.
    #[arg(long, default_value = "classes")]
    output: String,

    #[arg(long, default_value_t = 100)]
    epochs: usize,

    #[arg(long, default_value_t = 64)]
    hidden: usize,

    #[arg(long, default_value_t = 32)]
    batch: usize,

    #[arg(long, default_value_t = 1e-3)]
    lr: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Model output path.
    #[arg(long, short)]
    out: PathBuf,

    /// Optional CSV path for the per-epoch loss trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,

    /// Labeled test dataset CSV.
    #[arg(long)]
    data: PathBuf,

    /// Report JSON path.
    #[arg(long, short)]
    out: PathBuf,

    /// Optional confusion-matrix CSV path.
    #[arg(long)]
    confusion: Option<PathBuf>,
}

/// Expands `--config file` into the argument list: each `key=value` line
/// becomes `--key value` (value `true` becomes a bare switch, `false` is
/// dropped), inserted where the flag appeared.
fn expand_config_args(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(argv.len());
    let mut iter = argv.into_iter().peekable();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            let path = iter
                .next()
                .ok_or_else(|| Error::Parameter("--config needs a file path".into()))?;
            let text = fs::read_to_string(&path)?;
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| Error::Format(format!("config line {line:?} is not key=value")))?;
                let key = key.trim();
                let value = value.trim();
                match value {
                    "true" => out.push(format!("--{key}").into()),
                    "false" => {}
                    _ => {
                        out.push(format!("--{key}").into());
                        out.push(value.into());
                    }
                }
            }
        } else {
            out.push(arg);
        }
    }
    Ok(out)
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, contents)?;
    Ok(())
}

fn points_csv(points: &[Vec<f64>]) -> String {
    let mut out = String::new();
    if let Some(first) = points.first() {
        let header: Vec<String> = (1..=first.len()).map(|j| format!("z{j}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
    }
    for p in points {
        let row: Vec<String> = p.iter().map(|c| c.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn run_net(args: &NetArgs) -> Result<()> {
    let net = args.spec.build(args.s)?;
    if args.verify {
        let t = net::min_t(&net);
        println!("minimal verified t: {t} (L = {}^{})", net.b, net.m);
    }
    write_atomic(&args.out, &points_csv(&net.points))
}

fn run_weights(args: &WeightsArgs) -> Result<()> {
    let data = dataset::read_csv(&args.data)?;
    let net = args.spec.build(data.s)?;
    let nu = args
        .nu
        .unwrap_or_else(|| weights::default_nu(net.m, net.t.unwrap_or(0), net.alpha));
    let w = weights::compute_weights(&data, &net, nu)?;
    let mut out = String::from("l,");
    out.push_str(&(1..=net.s).map(|j| format!("z{j}")).collect::<Vec<_>>().join(","));
    out.push_str(",wx,wxy\n");
    for (l, (p, (wx, wxy))) in
        net.points.iter().zip(w.wx.iter().zip(&w.wxy)).enumerate()
    {
        let coords: Vec<String> = p.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("{},{},{wx},{wxy}\n", l + 1, coords.join(",")));
    }
    write_atomic(&args.out, &out)
}

fn round_label(y: f64) -> f64 {
    (y + 0.5).floor().clamp(0.0, 9.0)
}

fn run_compress(args: &CompressArgs) -> Result<()> {
    let data = dataset::read_csv(&args.data)?;
    let need_k = || {
        args.k.ok_or_else(|| Error::Parameter("--k is required for this method".into()))
    };
    let model = match args.method.as_str() {
        "supercompress" => cluster::supercompress(&data, need_k()?, args.seed)?,
        "robust" | "robust-supercompress" => {
            let lambda = args.lambda.unwrap_or(1.0 / (data.s as f64 + 1.0));
            cluster::robust_supercompress(&data, need_k()?, lambda, args.seed)?
        }
        "voronoi" | "qmc-voronoi" => {
            let net = args.spec.build(data.s)?;
            cluster::qmc_voronoi(&data, &net)?
        }
        "kmeans" | "k-means" => cluster::kmeans(&data, need_k()?, args.seed)?,
        other => return Err(Error::Parameter(format!("unknown method {other:?}"))),
    };
    if model.exhausted {
        eprintln!(
            "warning: only {} of the requested clusters could be split",
            model.k()
        );
    }
    let mut out = String::new();
    let header: Vec<String> = (1..=data.s).map(|j| format!("x{j}")).collect();
    out.push_str(&header.join(","));
    out.push_str(",y");
    let voronoi = model.method == Method::QmcVoronoi;
    if voronoi {
        out.push_str(",net_index");
    }
    out.push('\n');
    for (i, (c, &w)) in model.centers.iter().zip(&model.responses).enumerate() {
        let coords: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        let y = if args.round_responses { round_label(w) } else { w };
        out.push_str(&coords.join(","));
        out.push_str(&format!(",{y}"));
        if voronoi {
            out.push_str(&format!(",{}", model.net_indices.as_ref().unwrap()[i] + 1));
        }
        out.push('\n');
    }
    write_atomic(&args.out, &out)
}

fn parse_function(name: &str) -> Result<FunctionKind> {
    Ok(match name {
        "f1" => FunctionKind::F1,
        "f2" => FunctionKind::F2,
        "f3" => FunctionKind::F3,
        other => return Err(Error::Parameter(format!("unknown function {other:?}"))),
    })
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    let methods: Vec<BenchMethod> =
        args.methods.iter().map(|m| BenchMethod::parse(m)).collect::<Result<_>>()?;
    let mut config = ExperimentConfig::new(parse_function(&args.function)?, args.n, args.s, args.k.clone());
    config.repetitions = args.reps;
    config.seed = args.seed;
    config.noise_variance = args.noise_var;
    config.nu = args.nu;
    config.lambda = args.lambda;
    config.scale_before_noise = args.scale_before_noise;
    if let Some(path) = &args.matrices {
        config.net_source = NetSource::File { path: path.display().to_string() };
    }
    let (report, include_time) = match args.kind.as_str() {
        "error" => (testbed::run_error_experiment(&config, &methods)?, false),
        "scale" => (testbed::run_scale_experiment(&config, &methods, &args.gammas)?, false),
        "timing" => (testbed::run_timing_experiment(&config, &methods)?, true),
        other => return Err(Error::Parameter(format!("unknown bench kind {other:?}"))),
    };
    let body = match args.format.as_str() {
        "csv" => report.to_csv_string(include_time),
        "json" => report.to_json_string()?,
        other => return Err(Error::Parameter(format!("unknown format {other:?}"))),
    };
    write_atomic(&args.out, &body)
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let data = dataset::read_csv(&args.data)?;
    let mode = match args.mode.as_str() {
        "full" => LossMode::Full,
        "clustered" => LossMode::Clustered,
        "weighted" => LossMode::Weighted,
        other => return Err(Error::Parameter(format!("unknown mode {other:?}"))),
    };
    let scalar = match args.output.as_str() {
        "scalar" => true,
        "classes" => false,
        other => return Err(Error::Parameter(format!("unknown output head {other:?}"))),
    };
    let mut cfg = TrainConfig::new(mode);
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch;
    cfg.learning_rate = args.lr;
    cfg.seed = crate::derive_seed(args.seed, 1);

    let (model, trace) = match mode {
        LossMode::Full | LossMode::Clustered => {
            let out_dim = if scalar { 1 } else { 10 };
            let mut model = MlpModel::new(data.s, args.hidden, out_dim, args.seed)?;
            let trace = mlp::train(&mut model, &data, &cfg)?;
            (model, trace)
        }
        LossMode::Weighted => {
            let net = args.spec.build(data.s)?;
            let nu = args
                .nu
                .unwrap_or_else(|| weights::default_nu(net.m, net.t.unwrap_or(0), net.alpha));
            let w = weights::compute_weights(&data, &net, nu)?;
            let mut model = MlpModel::new(data.s, args.hidden, 1, args.seed)?;
            let trace = mlp::train_weighted(&mut model, &net.points, &w, &cfg)?;
            (model, trace)
        }
    };
    model.save(&args.out)?;
    if let Some(trace_path) = &args.trace {
        let mut body = String::from("epoch,loss\n");
        for (e, l) in trace.iter().enumerate() {
            body.push_str(&format!("{},{l}\n", e + 1));
        }
        write_atomic(trace_path, &body)?;
    }
    if let Some(last) = trace.last() {
        println!("final loss: {last}");
    }
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let model = MlpModel::load(&args.model)?;
    let data = dataset::read_csv(&args.data)?;
    let report = mlp::evaluate(&model, &data)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    write_atomic(&args.out, &json)?;
    if let Some(conf) = &args.confusion {
        write_atomic(conf, &report.confusion_csv())?;
    }
    println!("accuracy: {}", report.accuracy);
    Ok(())
}

/// Parses argv and runs the requested pipeline. Returns the process exit
/// code: 0 on success, 1 on pipeline errors, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let expanded = match expand_config_args(raw) {
        Ok(args) => args,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(expanded) {
        Ok(cli) => cli,
        Err(e) => {
            // clap reports usage errors on stderr with exit code 2 and
            // --help/--version on stdout with exit code 0
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let result = match &cli.command {
        Command::Net(args) => run_net(args),
        Command::Weights(args) => run_weights(args),
        Command::Compress(args) => run_compress(args),
        Command::Bench(args) => run_bench(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_expansion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flags.conf");
        std::fs::write(&path, "# comment\nb=2\nm=3\nfaure=true\nverify=false\n").unwrap();
        let argv: Vec<OsString> =
            ["net", "--config", path.to_str().unwrap(), "--s", "1"].iter().map(Into::into).collect();
        let out = expand_config_args(argv).unwrap();
        let strings: Vec<String> =
            out.iter().map(|o| o.to_string_lossy().into_owned()).collect();
        assert_eq!(strings, vec!["net", "--b", "2", "--m", "3", "--faure", "--s", "1"]);
    }

    #[test]
    fn bad_config_line_is_rejected()  {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flags.conf");
        std::fs::write(&path, "not a key value\n").unwrap();
        let argv: Vec<OsString> = ["x", "--config", path.to_str().unwrap()].iter().map(Into::into).collect();
        assert!(expand_config_args(argv).is_err());
    }
}
