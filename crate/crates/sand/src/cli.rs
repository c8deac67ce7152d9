//! Argument parsing and dispatch for the `sand` binary.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use sand_core::check::GRAD_CHECK_TOLERANCE;
use sand_core::trainer::{SplitFractions, TrainConfig};
use sand_core::GradCheckInstance;

use crate::csvio::TaskKind;
use crate::error::{CliError, Result};
use crate::output::{write_json, write_text, ConfigEcho};
use crate::parallel::thread_count;
use crate::run::{self, DataSource, SweepParam, SweepPlan};

#[derive(Debug, Parser)]
#[command(name = "sand", version, about = "Feature selection with trainable gated noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train with the selection layer and keep the top-k features.
    Select(SelectArgs),
    /// Compare the selection of a linear model with exhaustive best-subset search.
    Oracle(OracleArgs),
    /// Repeat selection over a list of k or sigma values and trial seeds.
    Sweep(SweepArgs),
    /// Write a synthetic dataset and its planted support.
    Gen(GenArgs),
    /// Check backward rules of a random layer + MLP against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "input")]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON synthetic dataset spec.
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Target column name (default: last column).
    #[arg(long)]
    pub target: Option<String>,
    /// Task for CSV data (default: inferred from the target column).
    #[arg(long, value_enum)]
    pub task: Option<TaskKind>,
    #[arg(long, default_value_t = 1.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long = "lr", default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Epochs between gain snapshots.
    #[arg(long, default_value_t = 10)]
    pub trajectory_every: usize,
    /// Hidden width (default: round(n/3), at least 1).
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Use a linear model instead of the MLP.
    #[arg(long)]
    pub linear: bool,
    /// Train/validation/test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.7, 0.1, 0.2])]
    pub split: Vec<f64>,
}

impl TrainArgs {
    fn config(&self, k: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            k,
            sigma: self.sigma,
            alpha: self.alpha,
            trajectory_every: self.trajectory_every,
            split: SplitFractions {
                train: self.split[0],
                val: self.split[1],
                test: self.split[2],
            },
            hidden: self.hidden,
            linear: self.linear,
        }
    }

    fn source(&self, data: &DataArgs) -> DataSource {
        match (&data.data, &data.synthetic) {
            (Some(path), _) => DataSource::Csv {
                path: path.clone(),
                target: self.target.clone(),
                task: self.task,
            },
            (None, Some(path)) => DataSource::Synthetic(path.clone()),
            (None, None) => unreachable!("clap enforces one input"),
        }
    }
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of features to keep.
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value = "sand-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Also check the noise-variance decomposition at the trained weights.
    #[arg(long)]
    pub identity_check: bool,
    /// Monte-Carlo draws for the identity check.
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    #[arg(long, default_value = "sand-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[group(id = "sweep_list", required = true, multiple = false, args = ["k_list", "sigma_list"])]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated k values.
    #[arg(long)]
    pub k_list: Option<String>,
    /// Comma-separated sigma values.
    #[arg(long)]
    pub sigma_list: Option<String>,
    /// k used with --sigma-list.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub trials: usize,
    /// Fraction of the schedule at which polarization is reported.
    #[arg(long, default_value_t = 0.25)]
    pub polarization_at: f64,
    /// Add one run without the layer per trial.
    #[arg(long)]
    pub baseline: bool,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value = "sand-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

fn parse_list<T: std::str::FromStr>(text: &str, flag: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::Config(format!("{flag} is empty")));
    }
    items
        .iter()
        .map(|s| s.parse::<T>().map_err(|_| CliError::Config(format!("{flag}: cannot parse {s:?}"))))
        .collect()
}

/// Runs a parsed command; returns the process exit code.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Select(a) => {
            let (raw, data_cfg) = run::load(&a.train.source(&a.data))?;
            let data = run::prepare(&raw)?;
            let echo = ConfigEcho {
                command: "select".into(),
                data: data_cfg,
                train: a.train.config(a.k),
            };
            let (report, _) = run::select(&data, echo, &a.out)?;
            let _ = writeln!(out, "selected: {:?}", report.selected_indices);
            let _ = writeln!(out, "test {}: {}", report.metric, report.test_metric_masked);
            Ok(0)
        }
        Command::Oracle(a) => {
            let (raw, data_cfg) = run::load(&a.train.source(&a.data))?;
            let data = run::prepare(&raw)?;
            let echo = ConfigEcho {
                command: "oracle".into(),
                data: data_cfg,
                train: a.train.config(a.k),
            };
            let r = run::oracle(&data, echo, a.identity_check.then_some(a.draws), &a.out)?;
            let c = &r.comparison;
            let _ = writeln!(out, "sand subset: {:?} loss {}", c.sand_subset, c.sand_loss);
            let _ = writeln!(out, "oracle subset: {:?} loss {}", c.oracle_subset, c.oracle_loss);
            let _ = writeln!(out, "relative gap: {}", c.relative_gap);
            if let Some(id) = r.identity_check {
                let _ = writeln!(
                    out,
                    "identity check: {} (lhs {} rhs {} std_err {})",
                    if id.passed { "pass" } else { "fail" },
                    id.lhs_mc,
                    id.rhs_analytic,
                    id.std_err
                );
            }
            Ok(0)
        }
        Command::Sweep(a) => {
            let param = match (&a.k_list, &a.sigma_list) {
                (Some(k), _) => SweepParam::K(parse_list(k, "--k-list")?),
                (None, Some(s)) => SweepParam::Sigma(parse_list(s, "--sigma-list")?),
                (None, None) => unreachable!("clap enforces one list"),
            };
            let k = match (&param, a.k) {
                (_, Some(k)) => k,
                (SweepParam::K(v), None) => v[0],
                (SweepParam::Sigma(_), None) => {
                    return Err(CliError::Config("--sigma-list needs --k".into()));
                }
            };
            let (raw, data_cfg) = run::load(&a.train.source(&a.data))?;
            let data = run::prepare(&raw)?;
            let base = a.train.config(k);
            let plan = SweepPlan {
                param,
                trials: a.trials,
                polarization_at: a.polarization_at,
                baseline: a.baseline,
            };
            let rows = run::sweep(&data, &base, &plan, thread_count())?;
            std::fs::create_dir_all(&a.out).map_err(CliError::io(&a.out))?;
            write_text(&a.out.join("sweep.csv"), &run::sweep_csv(&rows))?;
            let echo = ConfigEcho {
                command: "sweep".into(),
                data: data_cfg,
                train: base,
            };
            write_json(
                &a.out.join("report.json"),
                &serde_json::json!({
                    "runs": rows.len(),
                    "failed": rows.iter().filter(|r| r.status != "ok").count(),
                    "trials": plan.trials,
                    "polarization_at": plan.polarization_at,
                    "baseline": plan.baseline,
                    "config": echo,
                }),
            )?;
            let _ = writeln!(out, "{} runs written to {}", rows.len(), a.out.join("sweep.csv").display());
            Ok(0)
        }
        Command::Gen(a) => {
            let spec = run::read_spec(&a.spec)?;
            let truth = run::gen(&spec, &a.out)?;
            let _ = writeln!(out, "wrote {} and {}", a.out.display(), truth.display());
            Ok(0)
        }
        Command::Gradcheck(a) => {
            let instance = GradCheckInstance::random(a.seed);
            let r = instance.check(a.corrupt_backward)?;
            let _ = writeln!(
                out,
                "n={} hidden={} batch={} k={} alpha={} coordinates={}",
                instance.n, instance.hidden, instance.batch, instance.k, instance.alpha, r.coordinates
            );
            let _ = writeln!(out, "max relative error: {:e}", r.max_rel_error);
            Ok(if r.max_rel_error < GRAD_CHECK_TOLERANCE { 0 } else { 1 })
        }
    }
}

/// Parses `args`, runs, and reports errors on `err`.
pub fn main_with<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return 2;
            }
            let _ = write!(out, "{}", e.render());
            return 0;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
