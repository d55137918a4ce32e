//! Experiment harness: config-driven sweeps over missingness levels and
//! methods, repeated runs, aggregation and plot-ready output.

pub mod idx;
pub mod synthetic;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    apply_mar_quadrant, apply_mcar, apply_nmar_censor, impute, load_csv_with, remove_zero_variance,
    standardize_observed, CsvOptions, ImputationStrategy, IncompleteMatrix,
};
use crate::error::{Error, Result};
use crate::evaluation::clustering_accuracy;
use crate::kernel::{build_kernel, EnsembleConfig, KernelMatrix};
use crate::spectral::{kernel_pca, kmeans, median_heuristic_sigma, rbf_kernel, spectral_cluster};
use crate::seed;

pub use idx::{load_idx_digits, read_idx_images, read_idx_labels, IdxImages};
pub use synthetic::{labelled_csv, two_blobs};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A clustering method of the comparison matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Pckid,
    /// Impute, then spectral clustering on an RBF kernel.
    Rbf(ImputationStrategy),
    /// Impute, then k-means on the raw features.
    KMeans(ImputationStrategy),
}

impl Method {
    /// PCKID followed by the eight imputation baselines.
    pub fn all() -> Vec<Method> {
        let mut out = vec![Method::Pckid];
        out.extend(ImputationStrategy::ALL.iter().map(|&s| Method::Rbf(s)));
        out.extend(ImputationStrategy::ALL.iter().map(|&s| Method::KMeans(s)));
        out
    }

    pub fn has_kernel(self) -> bool {
        !matches!(self, Method::KMeans(_))
    }

    fn code(self) -> u64 {
        let strategy = |s: ImputationStrategy| {
            ImputationStrategy::ALL.iter().position(|&t| t == s).unwrap() as u64
        };
        match self {
            Method::Pckid => 0,
            Method::Rbf(s) => 1 + strategy(s),
            Method::KMeans(s) => 5 + strategy(s),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Pckid => f.write_str("pckid"),
            Method::Rbf(s) => write!(f, "rbf+{}", s.name()),
            Method::KMeans(s) => write!(f, "kmeans+{}", s.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "pckid" {
            return Ok(Method::Pckid);
        }
        let unknown = || {
            Error::Config(format!(
                "unknown method `{s}`; expected pckid, rbf+<imputer> or kmeans+<imputer> \
                 with imputer one of zero, mean, median, most_frequent"
            ))
        };
        let (base, imputer) = s.split_once('+').ok_or_else(unknown)?;
        let strategy: ImputationStrategy = imputer.parse().map_err(|_| unknown())?;
        match base {
            "rbf" => Ok(Method::Rbf(strategy)),
            "kmeans" | "k-means" => Ok(Method::KMeans(strategy)),
            _ => Err(unknown()),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Idx,
    Csv,
}

/// Where the data comes from and which rows to sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub format: DataFormat,
    /// CSV file (format = "csv").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// IDX image and label files (format = "idx").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Zero-based label column of a CSV; defaults to the last column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<usize>,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default = "default_missing_token")]
    pub missing_token: String,
    /// Labels to keep; empty keeps every label present.
    #[serde(default)]
    pub classes: Vec<usize>,
    /// Rows drawn per class and run; absent uses every row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<usize>,
    #[serde(default)]
    pub standardize: bool,
}

fn default_missing_token() -> String {
    "NaN".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Mcar,
    MarQuadrant,
    /// Values above the column's `1 - p_m` quantile go missing.
    NmarCensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingnessSpec {
    pub mechanism: Mechanism,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    /// Image side for quadrant removal; inferred when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
}

fn default_levels() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

impl Default for MissingnessSpec {
    fn default() -> Self {
        Self {
            mechanism: Mechanism::Mcar,
            levels: default_levels(),
            side: None,
        }
    }
}

/// A full sweep. Relative data paths resolve against the directory of the
/// config file when loaded with [`ExperimentConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub missingness: MissingnessSpec,
    #[serde(default = "Method::all")]
    pub methods: Vec<Method>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Cluster count; defaults to the number of classes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// The harness overrides `base_seed` with a per-run, per-method seed.
    #[serde(default = "desk_scale_ensemble")]
    pub ensemble: EnsembleConfig,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_runs() -> usize {
    10
}

fn default_restarts() -> usize {
    100
}

pub fn desk_scale_ensemble() -> EnsembleConfig {
    EnsembleConfig {
        initializations: 10,
        max_components: 10,
        ..EnsembleConfig::default()
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.restarts < 1 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods listed".into()));
        }
        if self.missingness.levels.is_empty() {
            return Err(Error::Config("no missingness levels listed".into()));
        }
        for &p in &self.missingness.levels {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("missingness level {p} is outside [0, 1]")));
            }
            if self.missingness.mechanism == Mechanism::NmarCensor && p >= 1.0 {
                return Err(Error::Config("censoring needs levels below 1".into()));
            }
        }
        if self.k == Some(0) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let ds = &self.dataset;
        match ds.format {
            DataFormat::Idx if ds.images.is_none() || ds.labels.is_none() => {
                return Err(Error::Config("idx datasets need `images` and `labels` paths".into()))
            }
            DataFormat::Csv if ds.path.is_none() => {
                return Err(Error::Config("csv datasets need a `path`".into()))
            }
            _ => {}
        }
        self.ensemble
            .validate()
            .map_err(|e| Error::Config(format!("ensemble: {e}")))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}

/// Candidate rows for sampling, with raw labels.
struct Pool {
    data: IncompleteMatrix,
    labels: Vec<usize>,
    classes: Vec<usize>,
    side: Option<usize>,
}

impl Pool {
    fn load(config: &ExperimentConfig) -> Result<Self> {
        let ds = &config.dataset;
        let (data, labels, side) = match ds.format {
            DataFormat::Idx => {
                let images_path = config.resolve(ds.images.as_deref().unwrap());
                let labels_path = config.resolve(ds.labels.as_deref().unwrap());
                let images = read_idx_images(&images_path)?;
                let labels = read_idx_labels(&labels_path)?;
                if images.count != labels.len() {
                    return Err(Error::Format {
                        path: labels_path,
                        message: format!("{} labels for {} images", labels.len(), images.count),
                    });
                }
                let keep: Vec<usize> = (0..labels.len())
                    .filter(|&i| ds.classes.is_empty() || ds.classes.contains(&(labels[i] as usize)))
                    .collect();
                let d = images.rows * images.cols;
                let values =
                    DMatrix::from_fn(keep.len(), d, |r, j| images.image(keep[r])[j] as f64 / 255.0);
                let y = keep.iter().map(|&i| labels[i] as usize).collect();
                let side = (images.rows == images.cols).then_some(images.rows);
                (IncompleteMatrix::complete(values), y, side)
            }
            DataFormat::Csv => {
                let path = config.resolve(ds.path.as_deref().unwrap());
                let options = CsvOptions {
                    missing_token: ds.missing_token.clone(),
                    has_header: ds.has_header,
                };
                let table = load_csv_with(&path, &options)?;
                let (data, labels) = split_label_column(&table, ds.label_column, &path)?;
                let d = data.ncols();
                let side = (1..=d).find(|s| s * s >= d).filter(|s| s * s == d);
                (data, labels, side)
            }
        };
        let classes = if ds.classes.is_empty() {
            let mut c = labels.clone();
            c.sort_unstable();
            c.dedup();
            c
        } else {
            ds.classes.clone()
        };
        for c in &classes {
            if !labels.contains(c) {
                return Err(Error::Config(format!("class {c} does not occur in the data")));
            }
        }
        Ok(Pool {
            data,
            labels,
            classes,
            side,
        })
    }

    /// Balanced subset; labels come back as positions in `classes`.
    fn draw(&self, per_class: Option<usize>, seed: u64) -> Result<(IncompleteMatrix, Vec<usize>)> {
        let rows = idx::balanced_indices(&self.labels, &self.classes, per_class, seed)?;
        let y = rows
            .iter()
            .map(|&i| self.classes.iter().position(|&c| c == self.labels[i]).unwrap())
            .collect();
        Ok((self.data.select_rows(&rows), y))
    }
}

fn split_label_column(
    table: &IncompleteMatrix,
    column: Option<usize>,
    path: &Path,
) -> Result<(IncompleteMatrix, Vec<usize>)> {
    let d = table.ncols();
    if d < 2 {
        return Err(Error::Config(format!(
            "{}: need at least one feature column plus a label column",
            path.display()
        )));
    }
    let col = column.unwrap_or(d - 1);
    if col >= d {
        return Err(Error::Config(format!(
            "label_column {col} out of range for {d} columns"
        )));
    }
    let mut labels = Vec::with_capacity(table.nrows());
    for i in 0..table.nrows() {
        match table.get(i, col) {
            Some(v) if v >= 0.0 && v.fract() == 0.0 => labels.push(v as usize),
            _ => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("row {}: label must be a non-negative integer", i + 1),
                })
            }
        }
    }
    let features: Vec<usize> = (0..d).filter(|&j| j != col).collect();
    Ok((table.select_columns(&features), labels))
}

fn inject(config: &ExperimentConfig, pool: &Pool, data: &IncompleteMatrix, p_m: f64, seed: u64) -> Result<IncompleteMatrix> {
    match config.missingness.mechanism {
        Mechanism::Mcar => apply_mcar(data, p_m, seed),
        Mechanism::MarQuadrant => {
            let side = config.missingness.side.or(pool.side).ok_or_else(|| {
                Error::Config("quadrant removal needs square images; set missingness.side".into())
            })?;
            apply_mar_quadrant(data, p_m, side, seed)
        }
        Mechanism::NmarCensor if p_m == 0.0 => Ok(data.clone()),
        Mechanism::NmarCensor => apply_nmar_censor(data, 1.0 - p_m),
    }
}

/// Prepared input of one (run, p_m) cell.
struct CellInput {
    data: IncompleteMatrix,
    truth: Vec<usize>,
    run_seed: u64,
    dims_kept: usize,
    digest: String,
}

fn prepare(config: &ExperimentConfig, pool: &Pool, run: usize, p_m: f64) -> Result<CellInput> {
    let run_seed = seed::derive(config.base_seed, &[run as u64]);
    let (subset, truth) = pool.draw(config.dataset.per_class, seed::derive(run_seed, &[0]))?;
    let injected = inject(config, pool, &subset, p_m, seed::derive(run_seed, &[1, p_m.to_bits()]))?;
    let (reduced, kept) = remove_zero_variance(&injected)?;
    let data = if config.dataset.standardize {
        standardize_observed(&reduced)?.0
    } else {
        reduced
    };
    let digest = hex(&Sha256::digest(data.canonical_bytes()));
    Ok(CellInput {
        data,
        truth,
        run_seed,
        dims_kept: kept.len(),
        digest,
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn method_seed(run_seed: u64, p_m: f64, method: Method) -> u64 {
    seed::derive(run_seed, &[2, p_m.to_bits(), method.code()])
}

struct KernelOutcome {
    kernel: KernelMatrix,
    members: Option<(usize, usize)>,
}

fn method_kernel(config: &ExperimentConfig, method: Method, data: &IncompleteMatrix, seed: u64) -> Result<KernelOutcome> {
    match method {
        Method::Pckid => {
            let ensemble = EnsembleConfig {
                base_seed: seed,
                ..config.ensemble.clone()
            };
            let pk = build_kernel(data, &ensemble)?;
            Ok(KernelOutcome {
                kernel: pk.kernel,
                members: Some((pk.members, pk.skipped)),
            })
        }
        Method::Rbf(strategy) => {
            let x = impute(data, strategy)?;
            let sigma = median_heuristic_sigma(&x)?;
            Ok(KernelOutcome {
                kernel: rbf_kernel(&x, sigma)?,
                members: None,
            })
        }
        Method::KMeans(_) => Err(Error::UnsupportedMethod(format!("{method} has no kernel"))),
    }
}

struct MethodOutcome {
    labels: Vec<usize>,
    members: Option<(usize, usize)>,
}

fn run_method(config: &ExperimentConfig, method: Method, data: &IncompleteMatrix, k: usize, seed: u64) -> Result<MethodOutcome> {
    let cluster_seed = seed::derive(seed, &[1]);
    match method {
        Method::KMeans(strategy) => {
            let x = impute(data, strategy)?;
            Ok(MethodOutcome {
                labels: kmeans(&x, k, config.restarts, cluster_seed)?.labels,
                members: None,
            })
        }
        _ => {
            let ko = method_kernel(config, method, data, seed)?;
            Ok(MethodOutcome {
                labels: spectral_cluster(&ko.kernel, k, config.restarts, cluster_seed)?,
                members: ko.members,
            })
        }
    }
}

/// Aggregated accuracy of one method at one missingness level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub method: Method,
    pub p_m: f64,
    pub mean_acc: f64,
    /// Population standard deviation over runs.
    pub std_acc: f64,
    pub accs: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Surviving / skipped ensemble members per run (PCKID only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<Vec<usize>>,
}

/// Provenance of the data every method saw in one (run, p_m) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub run: usize,
    pub p_m: f64,
    pub run_seed: u64,
    pub rows: usize,
    pub dims_kept: usize,
    pub missing_fraction: f64,
    /// SHA-256 of the prepared matrix (values where observed plus mask).
    pub digest: String,
}

/// Wall-clock seconds per run for one (method, p_m) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub method: Method,
    pub p_m: f64,
    pub seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub library_version: String,
    pub config: ExperimentConfig,
    pub k: usize,
    pub cells: Vec<ReportCell>,
    pub inputs: Vec<InputRecord>,
    /// Not part of the JSON document so reports stay reproducible.
    #[serde(skip)]
    pub timings: Vec<CellTiming>,
}

impl ExperimentReport {
    pub fn cell(&self, method: Method, p_m: f64) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.method == method && c.p_m == p_m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn timings_json(&self) -> String {
        serde_json::to_string_pretty(&self.timings).expect("timings serialize")
    }

    /// One line per cell: `method,p_m,mean_acc,std_acc,runs`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,p_m,mean_acc,std_acc,runs\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.method,
                c.p_m,
                c.mean_acc,
                c.std_acc,
                c.accs.len()
            ));
        }
        out
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct MethodResult {
    acc: f64,
    seed: u64,
    members: Option<(usize, usize)>,
    seconds: f64,
}

struct TaskResult {
    input: InputRecord,
    methods: Vec<MethodResult>,
}

/// Run every method on every (run, p_m) cell and aggregate accuracies.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let pool = Pool::load(config)?;
    let k = config.k.unwrap_or(pool.classes.len());
    let levels = &config.missingness.levels;
    let tasks: Vec<(usize, usize)> = (0..config.runs)
        .flat_map(|r| (0..levels.len()).map(move |l| (r, l)))
        .collect();

    let results: Vec<TaskResult> = tasks
        .par_iter()
        .map(|&(run, li)| -> Result<TaskResult> {
            let p_m = levels[li];
            let input = prepare(config, &pool, run, p_m)?;
            let mut methods = Vec::with_capacity(config.methods.len());
            for &method in &config.methods {
                let start = Instant::now();
                let s = method_seed(input.run_seed, p_m, method);
                let outcome = run_method(config, method, &input.data, k, s)
                    .and_then(|o| Ok((clustering_accuracy(&input.truth, &o.labels)?, o.members)))
                    .map_err(|e| Error::Experiment {
                        method: method.to_string(),
                        run,
                        p_m,
                        source: Box::new(e),
                    })?;
                methods.push(MethodResult {
                    acc: outcome.0,
                    seed: s,
                    members: outcome.1,
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
            let n = input.data.nrows();
            let d = input.data.ncols();
            Ok(TaskResult {
                input: InputRecord {
                    run,
                    p_m,
                    run_seed: input.run_seed,
                    rows: n,
                    dims_kept: input.dims_kept,
                    missing_fraction: 1.0 - input.data.observed_count() as f64 / (n * d) as f64,
                    digest: input.digest,
                },
                methods,
            })
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut timings = Vec::new();
    for (mi, &method) in config.methods.iter().enumerate() {
        for (li, &p_m) in levels.iter().enumerate() {
            // tasks are run-major, so this visits runs in order
            let per_run: Vec<&MethodResult> = results
                .iter()
                .zip(&tasks)
                .filter(|(_, &(_, l))| l == li)
                .map(|(t, _)| &t.methods[mi])
                .collect();
            let accs: Vec<f64> = per_run.iter().map(|m| m.acc).collect();
            let (mean_acc, std_acc) = mean_std(&accs);
            let members = per_run.iter().map(|m| m.members).collect::<Option<Vec<_>>>();
            cells.push(ReportCell {
                method,
                p_m,
                mean_acc,
                std_acc,
                accs,
                seeds: per_run.iter().map(|m| m.seed).collect(),
                members: members.as_ref().map(|v| v.iter().map(|m| m.0).collect()),
                skipped: members.as_ref().map(|v| v.iter().map(|m| m.1).collect()),
            });
            timings.push(CellTiming {
                method,
                p_m,
                seconds: per_run.iter().map(|m| m.seconds).collect(),
            });
        }
    }

    Ok(ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        k,
        cells,
        inputs: results.into_iter().map(|t| t.input).collect(),
        timings,
    })
}

/// 2-d kernel-PCA coordinates with true and predicted labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub coords: DMatrix<f64>,
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
}

impl EmbeddingTable {
    /// Header `x,y,y_true,y_pred`, one row per data point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Argument(format!("writing embedding: {e}"));
        w.write_record(["x", "y", "y_true", "y_pred"]).map_err(io)?;
        for i in 0..self.coords.nrows() {
            w.write_record([
                self.coords[(i, 0)].to_string(),
                self.coords[(i, 1)].to_string(),
                self.y_true[i].to_string(),
                self.y_pred[i].to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Argument(format!("writing embedding: {e}")))
    }
}

/// Embedding of the data of `run` at level `p_m`, prepared exactly as in
/// [`run_experiment`]; `y_pred` reproduces the labels scored there.
pub fn emit_embedding(config: &ExperimentConfig, method: Method, p_m: f64, run: usize) -> Result<EmbeddingTable> {
    config.validate()?;
    if !method.has_kernel() {
        return Err(Error::UnsupportedMethod(format!(
            "{method} clusters raw features and has no kernel to embed"
        )));
    }
    if !(0.0..=1.0).contains(&p_m) {
        return Err(Error::Argument(format!("p_m must lie in [0, 1], got {p_m}")));
    }
    let pool = Pool::load(config)?;
    let k = config.k.unwrap_or(pool.classes.len());
    let input = prepare(config, &pool, run, p_m)?;
    let s = method_seed(input.run_seed, p_m, method);
    let ko = method_kernel(config, method, &input.data, s)?;
    let y_pred = spectral_cluster(&ko.kernel, k, config.restarts, seed::derive(s, &[1]))?;
    let embedding = kernel_pca(&ko.kernel, 2)?;
    Ok(EmbeddingTable {
        coords: embedding.coords,
        y_true: input.truth,
        y_pred,
    })
}
