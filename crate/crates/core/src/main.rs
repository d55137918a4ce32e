use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pckid::dataset::{apply_mar_quadrant, apply_mcar, apply_nmar_censor, load_csv_with, write_csv, write_mask_csv, CsvOptions};
use pckid::evaluation::clustering_accuracy;
use pckid::gmm::CovarianceKind;
use pckid::harness::{emit_embedding, run_experiment, ExperimentConfig, Method};
use pckid::kernel::{build_kernel, EnsembleConfig};

/// Clustering of incomplete data with the PCKID ensemble kernel.
#[derive(Parser)]
#[command(name = "pckid", version, about)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run or inspect a configured experiment sweep.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Data preparation utilities.
    #[command(subcommand)]
    Data(DataCommand),
    /// Kernel construction.
    #[command(subcommand)]
    Kernel(KernelCommand),
    /// Evaluation of cluster labels.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Run every method at every missingness level and write the report.
    Run {
        /// TOML experiment config.
        config: PathBuf,
        /// JSON report (stdout when absent).
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// CSV summary with one line per (method, p_m).
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Per-run wall-clock timings as JSON.
        #[arg(long)]
        timings: Option<PathBuf>,
    },
    /// Write 2-d kernel-PCA coordinates with true and predicted labels.
    Embed {
        config: PathBuf,
        /// Kernel method: pckid or rbf+<imputer>.
        #[arg(long, default_value = "pckid")]
        method: String,
        /// Missingness level.
        #[arg(long = "p-m", default_value_t = 0.0)]
        p_m: f64,
        /// Run index whose subset and seeds are used.
        #[arg(long, default_value_t = 0)]
        run: usize,
        /// Output CSV (stdout when absent).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    Mcar,
    MarQuadrant,
    NmarCensor,
}

#[derive(Args)]
struct CsvArgs {
    /// Token that marks a missing cell (empty cells are always missing).
    #[arg(long, default_value = "NaN")]
    missing_token: String,
    /// The first line is a header.
    #[arg(long)]
    has_header: bool,
}

impl CsvArgs {
    fn options(&self) -> CsvOptions {
        CsvOptions {
            missing_token: self.missing_token.clone(),
            has_header: self.has_header,
        }
    }
}

#[derive(Subcommand)]
enum DataCommand {
    /// Remove entries of a CSV under a synthetic missingness mechanism.
    InjectMissing {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "mcar")]
        mechanism: MechanismArg,
        /// Missing rate (mcar), fraction of images (mar-quadrant) or
        /// censored upper tail (nmar-censor: values above the 1-rate quantile).
        #[arg(long)]
        rate: f64,
        /// Image side for mar-quadrant; inferred from a square row length.
        #[arg(long)]
        side: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        csv: CsvArgs,
        /// Output CSV (stdout when absent).
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Also write the observed mask as 0/1 CSV.
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelFormat {
    Csv,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum CovarianceArg {
    Diagonal,
    Full,
}

#[derive(Subcommand)]
enum KernelCommand {
    /// Build the PCKID kernel of a CSV with missing entries.
    Build {
        input: PathBuf,
        /// Initializations per mixture order.
        #[arg(long, default_value_t = 30)]
        q: usize,
        /// Largest mixture order (orders run from 2).
        #[arg(long, default_value_t = 30)]
        g: usize,
        #[arg(long, default_value_t = 0.5)]
        subsample_fraction: f64,
        #[arg(long, default_value_t = 10)]
        em_iterations: usize,
        #[arg(long, value_enum, default_value = "diagonal")]
        covariance: CovarianceArg,
        #[arg(long, default_value_t = 1e-6)]
        variance_floor: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        csv: CsvArgs,
        #[arg(long, value_enum, default_value = "csv")]
        format: KernelFormat,
        /// Output file (stdout when absent; binary requires a file).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Clustering accuracy under the best one-to-one label matching.
    Acc {
        /// True labels, one non-negative integer per line.
        truth: PathBuf,
        /// Predicted labels, same layout.
        predicted: PathBuf,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .with_context(|| format!("{}:{}: `{}` is not a label", path.display(), i + 1, l.trim()))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Experiment(ExperimentCommand::Run {
            config,
            out,
            summary,
            timings,
        }) => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg)?;
            let mut w = output(out.as_deref())?;
            writeln!(w, "{}", report.to_json())?;
            w.flush()?;
            if let Some(p) = summary {
                fs::write(&p, report.summary_csv()).with_context(|| format!("writing {}", p.display()))?;
            }
            if let Some(p) = timings {
                fs::write(&p, report.timings_json()).with_context(|| format!("writing {}", p.display()))?;
            }
            for c in &report.cells {
                eprintln!("{:<22} p_m={:<4} acc={:.4} ± {:.4}", c.method.to_string(), c.p_m, c.mean_acc, c.std_acc);
            }
        }
        Command::Experiment(ExperimentCommand::Embed {
            config,
            method,
            p_m,
            run,
            out,
        }) => {
            let cfg = ExperimentConfig::load(&config)?;
            let method: Method = method.parse()?;
            let table = emit_embedding(&cfg, method, p_m, run)?;
            table.write_csv(output(out.as_deref())?)?;
        }
        Command::Data(DataCommand::InjectMissing {
            input,
            mechanism,
            rate,
            side,
            seed,
            csv,
            out,
            mask_out,
        }) => {
            let data = load_csv_with(&input, &csv.options())?;
            let result = match mechanism {
                MechanismArg::Mcar => apply_mcar(&data, rate, seed)?,
                MechanismArg::MarQuadrant => {
                    let d = data.ncols();
                    let side = match side {
                        Some(s) => s,
                        None => match (1..=d).find(|s| s * s >= d) {
                            Some(s) if s * s == d => s,
                            _ => bail!("rows of length {d} are not square images; pass --side"),
                        },
                    };
                    apply_mar_quadrant(&data, rate, side, seed)?
                }
                MechanismArg::NmarCensor if rate == 0.0 => data,
                MechanismArg::NmarCensor => apply_nmar_censor(&data, 1.0 - rate)?,
            };
            write_csv(&result, &csv.missing_token, output(out.as_deref())?)?;
            if let Some(p) = mask_out {
                write_mask_csv(&result, output(Some(&p))?)?;
            }
        }
        Command::Kernel(KernelCommand::Build {
            input,
            q,
            g,
            subsample_fraction,
            em_iterations,
            covariance,
            variance_floor,
            seed,
            csv,
            format,
            out,
        }) => {
            let data = load_csv_with(&input, &csv.options())?;
            let config = EnsembleConfig {
                initializations: q,
                max_components: g,
                subsample_fraction,
                em_iterations,
                covariance_kind: match covariance {
                    CovarianceArg::Diagonal => CovarianceKind::Diagonal,
                    CovarianceArg::Full => CovarianceKind::Full,
                },
                variance_floor,
                base_seed: seed,
            };
            let pk = build_kernel(&data, &config)?;
            match format {
                KernelFormat::Csv => pk.kernel.write_csv(output(out.as_deref())?)?,
                KernelFormat::Binary => {
                    let Some(p) = out else {
                        bail!("binary output needs --out");
                    };
                    pk.kernel.write_binary(output(Some(&p))?)?;
                }
            }
            eprintln!(
                "kernel {}x{}: {} members, {} skipped, {} retries",
                pk.kernel.size(),
                pk.kernel.size(),
                pk.members,
                pk.skipped,
                pk.retries
            );
        }
        Command::Eval(EvalCommand::Acc { truth, predicted }) => {
            let t = read_labels(&truth)?;
            let p = read_labels(&predicted)?;
            println!("{}", clustering_accuracy(&t, &p)?);
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
