use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kdkmeans::datagen::{generate, GenSpec};
use kdkmeans::harness::experiment::{save_report, DEFAULT_DIM_SWEEP, DEFAULT_K_SWEEP};
use kdkmeans::harness::memory::{estimate_worst_case_bytes, worst_case_entries, EntrySize, MIB};
use kdkmeans::harness::{
    load_dataset, run_experiment, run_single, save_dataset, save_result, Algorithm, DataSource,
    DatasetFormat, ExperimentConfig, OutputFormat, Sweep,
};
use kdkmeans::{Metric, Result};

#[derive(Parser)]
#[command(name = "kdkmeans", version, about = "kd-tree filtering k-means and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-clump dataset
    Generate(GenerateArgs),
    /// Cluster one dataset
    Cluster(ClusterArgs),
    /// Sweep the cluster count or the dimensionality
    Sweep(SweepArgs),
    /// Worst-case memory of a degenerate tree
    EstimateMem(EstimateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Lloyd,
    Filter,
    #[value(name = "two_level", alias = "two-level")]
    TwoLevel,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Lloyd => Algorithm::Lloyd,
            AlgorithmArg::Filter => Algorithm::Filter,
            AlgorithmArg::TwoLevel => Algorithm::TwoLevel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Manhattan,
    Chebyshev,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Manhattan => Metric::Manhattan,
            MetricArg::Chebyshev => Metric::Chebyshev,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DataFormatArg {
    Csv,
    Binary,
}

#[derive(Args)]
struct GenFlags {
    /// Number of points
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 15)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    clumps: usize,
    #[arg(long, default_value_t = 1.0)]
    stddev_min: f64,
    #[arg(long, default_value_t = 5.0)]
    stddev_max: f64,
    /// Clump means are drawn from [0, side]^dim
    #[arg(long, default_value_t = 1000.0)]
    side: f64,
    /// Use 10^6 points
    #[arg(long)]
    stress: bool,
}

impl GenFlags {
    fn spec(&self, seed: u64) -> Result<GenSpec> {
        let n = if self.stress { 1_000_000 } else { self.n };
        GenSpec::in_cube(n, self.dim, self.clumps, self.side, (self.stddev_min, self.stddev_max), seed)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    gen: GenFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    format: DataFormatArg,
    /// Where to write clump means, spreads and labels as JSON
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct RunFlags {
    #[arg(long, value_enum, default_value = "two_level")]
    algorithm: AlgorithmArg,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, value_enum, default_value = "euclidean")]
    metric: MetricArg,
    #[arg(long, default_value_t = 4)]
    partitions: usize,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    #[arg(long = "max-iters", default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    leaf_capacity: usize,
    /// Shuffle points before sharding
    #[arg(long)]
    shuffle: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

impl RunFlags {
    fn config(&self, baseline: bool) -> ExperimentConfig {
        ExperimentConfig {
            algorithm: self.algorithm.into(),
            k: self.k,
            metric: self.metric.into(),
            partitions: self.partitions,
            workers: self.workers,
            epsilon: self.epsilon,
            max_iterations: self.max_iters,
            seed: self.seed,
            leaf_capacity: self.leaf_capacity,
            shuffle: self.shuffle,
            baseline,
        }
    }
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    K,
    Dim,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunFlags,
    #[arg(long, value_enum, default_value = "k")]
    axis: Axis,
    /// Comma-separated values of the swept parameter
    #[arg(long, value_delimiter = ',')]
    values: Vec<usize>,
    /// Dataset to sweep over; generated data is used when absent
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    gen: GenFlags,
    /// Skip the paired Lloyd runs
    #[arg(long)]
    no_baseline: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    #[arg(long, default_value_t = 1024)]
    k: u64,
    /// Count one bit per entry
    #[arg(long, conflicts_with = "bytes_per_entry")]
    bits: bool,
    #[arg(long, default_value_t = 1)]
    bytes_per_entry: u64,
}

fn generate_cmd(args: GenerateArgs) -> Result<()> {
    let spec = args.gen.spec(args.seed)?;
    let (data, truth) = generate(&spec)?;
    match args.format {
        DataFormatArg::Csv => {
            let header = format!(
                "generator={} seed={} n={} dim={} clumps={}",
                truth.generator, truth.seed, spec.n, spec.dim, spec.n_clumps
            );
            save_dataset(&data, &args.output, DatasetFormat::Csv, Some(&header))?;
        }
        DataFormatArg::Binary => save_dataset(&data, &args.output, DatasetFormat::Binary, None)?,
    }
    if let Some(path) = args.truth {
        let doc = serde_json::json!({ "spec": spec, "truth": truth });
        std::fs::write(&path, serde_json::to_string_pretty(&doc).expect("serializable"))
            .map_err(|e| kdkmeans::Error::Io { path, source: e })?;
    }
    eprintln!("wrote {} points of dimension {} to {}", data.len(), data.dim(), args.output.display());
    Ok(())
}

fn cluster_cmd(args: ClusterArgs) -> Result<()> {
    let points = load_dataset(&args.input)?;
    let cfg = args.run.config(false);
    let result = run_single(&points, &cfg, cfg.algorithm)?;
    let echo = serde_json::json!({ "input": args.input, "experiment": cfg });
    save_result(&result, &echo, &args.output, args.run.format.into())?;
    eprintln!(
        "{}: {} iterations, {} distance evaluations, {:.3} s",
        cfg.algorithm, result.metrics.iterations, result.metrics.counters.distance_evaluations, result.metrics.wall_seconds
    );
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> Result<()> {
    let cfg = args.run.config(!args.no_baseline);
    let source = match &args.input {
        Some(path) => DataSource::File(path.clone()),
        None => DataSource::Generated(args.gen.spec(args.run.seed)?),
    };
    let sweep = match (args.axis, args.values.is_empty()) {
        (Axis::K, true) => Sweep::K(DEFAULT_K_SWEEP.to_vec()),
        (Axis::K, false) => Sweep::K(args.values),
        (Axis::Dim, true) => Sweep::Dim(DEFAULT_DIM_SWEEP.to_vec()),
        (Axis::Dim, false) => Sweep::Dim(args.values),
    };
    let rows = run_experiment(&cfg, &source, &sweep)?;
    save_report(&rows, &args.output, args.run.format.into())?;
    for r in &rows {
        eprintln!(
            "k={:<4} dim={:<3} iterations={:<4} dist_evals={:<12} wall={:.4}s speedup={}",
            r.k,
            r.dim,
            r.iterations,
            r.distance_evaluations,
            r.wall_seconds,
            r.speedup.map(|s| format!("{s:.2}x")).unwrap_or_else(|| "-".into())
        );
    }
    Ok(())
}

fn estimate_cmd(args: EstimateArgs) -> Result<()> {
    let entry = if args.bits { EntrySize::Bits } else { EntrySize::Bytes(args.bytes_per_entry) };
    let entries = worst_case_entries(args.n, args.k)?;
    let bytes = estimate_worst_case_bytes(args.n, args.k, entry)?;
    println!("entries: {entries:.0}");
    println!("bytes: {bytes:.0}");
    println!("MiB: {:.2}", bytes / MIB);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => generate_cmd(a),
        Command::Cluster(a) => cluster_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::EstimateMem(a) => estimate_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
