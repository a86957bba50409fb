//! Single runs and parameter sweeps with paired Lloyd baselines.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::{lloyd_init, run_lloyd};
use crate::datagen::{generate, GenSpec};
use crate::error::{Error, Result};
use crate::filtering::{cluster_filtering, FilterConfig};
use crate::geometry::{BoundingBox, Dataset, Metric};
use crate::harness::io::{load_dataset, OutputFormat};
use crate::result::ClusteringResult;
use crate::twolevel::{run_two_level, TwoLevelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Lloyd,
    Filter,
    TwoLevel,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Lloyd => "lloyd",
            Algorithm::Filter => "filter",
            Algorithm::TwoLevel => "two_level",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lloyd" => Ok(Algorithm::Lloyd),
            "filter" => Ok(Algorithm::Filter),
            "two_level" | "two-level" | "twolevel" => Ok(Algorithm::TwoLevel),
            other => Err(Error::config(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    File(PathBuf),
    Generated(GenSpec),
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::File(path) => load_dataset(path),
            DataSource::Generated(spec) => Ok(generate(spec)?.0),
        }
    }

    /// Same generator settings in another dimensionality.
    fn with_dim(&self, dim: usize) -> Result<DataSource> {
        match self {
            DataSource::Generated(spec) => {
                let (lo, hi) = (spec.domain.lo()[0], spec.domain.hi()[0]);
                Ok(DataSource::Generated(GenSpec {
                    dim,
                    domain: BoundingBox::new(vec![lo; dim], vec![hi; dim])?,
                    ..spec.clone()
                }))
            }
            DataSource::File(_) => Err(Error::config("a dimension sweep needs generated data")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub metric: Metric,
    pub partitions: usize,
    pub workers: usize,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub leaf_capacity: usize,
    pub shuffle: bool,
    /// Also run Lloyd from the same initialization and report the speedup.
    pub baseline: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let filter = FilterConfig::default();
        ExperimentConfig {
            algorithm: Algorithm::TwoLevel,
            k: 8,
            metric: filter.metric,
            partitions: 4,
            workers: 4,
            epsilon: filter.epsilon,
            max_iterations: filter.max_iterations,
            seed: 0,
            leaf_capacity: 1,
            shuffle: false,
            baseline: false,
        }
    }
}

impl ExperimentConfig {
    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            metric: self.metric,
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
        }
    }

    pub fn two_level_config(&self) -> TwoLevelConfig {
        TwoLevelConfig {
            partitions: self.partitions,
            k: self.k,
            filter: self.filter_config(),
            seed: self.seed,
            shuffle: self.shuffle,
            workers: self.workers,
            leaf_capacity: self.leaf_capacity,
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        self.two_level_config().pool()
    }
}

/// Runs one algorithm once on `points`.
pub fn run_single(points: &Dataset, cfg: &ExperimentConfig, algorithm: Algorithm) -> Result<ClusteringResult> {
    match algorithm {
        Algorithm::Lloyd => {
            let init = lloyd_init(points, cfg.k, cfg.seed)?;
            cfg.pool()?.install(|| run_lloyd(points, init, &cfg.filter_config()))
        }
        Algorithm::Filter => {
            let init = lloyd_init(points, cfg.k, cfg.seed)?;
            cluster_filtering(points, init, &cfg.filter_config(), cfg.leaf_capacity)
        }
        Algorithm::TwoLevel => run_two_level(points, &cfg.two_level_config()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algorithm: Algorithm,
    pub n: usize,
    pub dim: usize,
    pub k: usize,
    pub partitions: usize,
    pub workers: usize,
    pub seed: u64,
    pub iterations: usize,
    pub iterations_level2: usize,
    pub distance_evaluations: u64,
    pub cell_distance_evaluations: u64,
    pub node_visits: u64,
    pub wall_seconds: f64,
    pub baseline_wall_seconds: Option<f64>,
    pub baseline_distance_evaluations: Option<u64>,
    /// Baseline wall time over this run's wall time.
    pub speedup: Option<f64>,
}

impl ReportRow {
    fn new(points: &Dataset, cfg: &ExperimentConfig, algorithm: Algorithm, r: &ClusteringResult) -> Self {
        ReportRow {
            algorithm,
            n: points.len(),
            dim: points.dim(),
            k: cfg.k,
            partitions: if algorithm == Algorithm::TwoLevel { cfg.partitions } else { 1 },
            workers: cfg.workers,
            seed: cfg.seed,
            iterations: r.metrics.iterations,
            iterations_level2: r.iterations_level2,
            distance_evaluations: r.metrics.counters.distance_evaluations,
            cell_distance_evaluations: r.metrics.counters.cell_distance_evaluations,
            node_visits: r.metrics.counters.node_visits,
            wall_seconds: r.metrics.wall_seconds,
            baseline_wall_seconds: None,
            baseline_distance_evaluations: None,
            speedup: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Single,
    K(Vec<usize>),
    Dim(Vec<usize>),
}

/// Cluster counts swept by default (2 up to 100).
pub const DEFAULT_K_SWEEP: [usize; 8] = [2, 4, 6, 10, 20, 40, 70, 100];
pub const DEFAULT_DIM_SWEEP: [usize; 6] = [2, 4, 6, 8, 12, 15];

fn run_point(points: &Dataset, cfg: &ExperimentConfig) -> Result<ReportRow> {
    let result = run_single(points, cfg, cfg.algorithm)?;
    let mut row = ReportRow::new(points, cfg, cfg.algorithm, &result);
    if cfg.baseline && cfg.algorithm != Algorithm::Lloyd {
        let base = run_single(points, cfg, Algorithm::Lloyd)?;
        let t = base.metrics.wall_seconds;
        row.baseline_wall_seconds = Some(t);
        row.baseline_distance_evaluations = Some(base.metrics.counters.distance_evaluations);
        row.speedup = Some(t / row.wall_seconds);
    }
    Ok(row)
}

/// Executes `cfg` once or over a sweep, one row per configuration.
pub fn run_experiment(cfg: &ExperimentConfig, data: &DataSource, sweep: &Sweep) -> Result<Vec<ReportRow>> {
    match sweep {
        Sweep::Single => {
            let points = data.load()?;
            Ok(vec![run_point(&points, cfg)?])
        }
        Sweep::K(ks) => {
            let points = data.load()?;
            ks.iter()
                .map(|&k| run_point(&points, &ExperimentConfig { k, ..cfg.clone() }))
                .collect()
        }
        Sweep::Dim(dims) => dims
            .iter()
            .map(|&dim| {
                let points = data.with_dim(dim)?.load()?;
                run_point(&points, cfg)
            })
            .collect(),
    }
}

const CSV_COLUMNS: &str = "algorithm,n,dim,k,partitions,workers,seed,iterations,iterations_level2,\
distance_evaluations,cell_distance_evaluations,node_visits,wall_seconds,baseline_wall_seconds,\
baseline_distance_evaluations,speedup";

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_report<W: Write>(rows: &[ReportRow], format: OutputFormat, mut w: W) -> std::io::Result<()> {
    match format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
        }
        OutputFormat::Csv => {
            writeln!(w, "{CSV_COLUMNS}")?;
            for r in rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.algorithm,
                    r.n,
                    r.dim,
                    r.k,
                    r.partitions,
                    r.workers,
                    r.seed,
                    r.iterations,
                    r.iterations_level2,
                    r.distance_evaluations,
                    r.cell_distance_evaluations,
                    r.node_visits,
                    r.wall_seconds,
                    opt(r.baseline_wall_seconds),
                    opt(r.baseline_distance_evaluations),
                    opt(r.speedup),
                )?;
            }
        }
    }
    w.flush()
}

pub fn save_report(rows: &[ReportRow], path: &Path, format: OutputFormat) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_report(rows, format, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
