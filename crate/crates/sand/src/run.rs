//! Command bodies shared by the binary and the tests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sand_core::linreg::{self, OracleComparison};
use sand_core::trainer::{snapshot_at_fraction, train_baseline, TrainConfig};
use sand_core::{train, Dataset, NoiseSource, SyntheticSpec, TargetData, Task, TrainOutcome};

use crate::csvio::{load_csv, save_csv, TaskKind};
use crate::error::{CliError, Result};
use crate::output::{metrics_csv, read_json, trajectory_csv, write_json, write_text, Checkpoint, ConfigEcho, SelectReport};
use crate::parallel::map_indexed;

/// Noise stream used by the identity check.
const IDENTITY_STREAM: u64 = 4;

/// Where a dataset comes from, as echoed in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataConfig {
    Csv {
        path: String,
        target: String,
        task: TaskKind,
    },
    Synthetic {
        path: String,
        spec: SyntheticSpec,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        target: Option<String>,
        task: Option<TaskKind>,
    },
    Synthetic(PathBuf),
}

pub fn read_spec(path: &Path) -> Result<SyntheticSpec> {
    read_json(path)
}

/// Loads the raw dataset and the resolved description of its source.
pub fn load(source: &DataSource) -> Result<(Dataset, DataConfig)> {
    match source {
        DataSource::Csv { path, target, task } => {
            let data = load_csv(path, target.as_deref(), *task)?;
            let task = match data.task {
                Task::Classification { .. } => TaskKind::Classification,
                Task::Regression { .. } => TaskKind::Regression,
            };
            let config = DataConfig::Csv {
                path: path.display().to_string(),
                target: data.target_name.clone().unwrap_or_default(),
                task,
            };
            Ok((data, config))
        }
        DataSource::Synthetic(path) => {
            let spec = read_spec(path)?;
            let data = spec.generate()?;
            Ok((
                data,
                DataConfig::Synthetic {
                    path: path.display().to_string(),
                    spec,
                },
            ))
        }
    }
}

/// Standardizes features, and targets for regression.
pub fn prepare(raw: &Dataset) -> Result<Dataset> {
    Ok(raw.standardize()?.standardize_targets()?)
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(CliError::io(out))
}

/// Trains, finalizes and writes `report.json`, `trajectory.csv`,
/// `metrics.csv` and `checkpoint.json` into `out`.
pub fn select(data: &Dataset, echo: ConfigEcho, out: &Path) -> Result<(SelectReport, TrainOutcome)> {
    let outcome = train(echo.train.clone(), data)?;
    create_dir(out)?;
    let names = data.feature_names.as_deref();
    let report = SelectReport::new(&outcome, names, echo);
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("trajectory.csv"), &trajectory_csv(&outcome.trajectory, data.n_features()))?;
    write_text(&out.join("metrics.csv"), &metrics_csv(&outcome.metrics))?;
    Checkpoint::new(&outcome, names, data.feature_stats.as_ref(), data.target_stats.as_ref()).save(&out.join("checkpoint.json"))?;
    Ok((report, outcome))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub lhs_mc: f64,
    pub rhs_analytic: f64,
    pub std_err: f64,
    pub draws: usize,
    pub passed: bool,
}

/// `comparison.json` of `oracle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    #[serde(flatten)]
    pub comparison: OracleComparison,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub identity_check: Option<IdentityRecord>,
    pub config: ConfigEcho,
}

/// Compares the trained selection with the exhaustive best subset. With
/// `identity_draws`, also checks the loss decomposition at the trained
/// weights and gains.
pub fn oracle(data: &Dataset, echo: ConfigEcho, identity_draws: Option<usize>, out: &Path) -> Result<OracleRecord> {
    let TargetData::Values(y) = &data.targets else {
        return Err(CliError::Config("oracle needs a regression dataset (--task regression)".into()));
    };
    let mut echo = echo;
    echo.train.linear = true;
    let (comparison, outcome) = linreg::sand_vs_oracle(data, echo.train.k, &echo.train)?;
    let identity_check = match identity_draws {
        None => None,
        Some(draws) => {
            let layer = &outcome.model.layers()[0];
            let w = linreg::transpose(&layer.weight);
            let mut noise = NoiseSource::with_stream(echo.train.seed, IDENTITY_STREAM);
            let c = linreg::verify_variance_identity(
                &w,
                layer.bias.values(),
                &outcome.report.gains,
                echo.train.sigma,
                &data.features,
                y,
                draws,
                &mut noise,
            )?;
            Some(IdentityRecord {
                lhs_mc: c.lhs_mc,
                rhs_analytic: c.rhs_analytic,
                std_err: c.std_err,
                draws,
                passed: c.passes(),
            })
        }
    };
    create_dir(out)?;
    let record = OracleRecord {
        comparison,
        identity_check,
        config: echo,
    };
    write_json(&out.join("comparison.json"), &record)?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepParam {
    K(Vec<usize>),
    Sigma(Vec<f64>),
}

impl SweepParam {
    fn len(&self) -> usize {
        match self {
            SweepParam::K(v) => v.len(),
            SweepParam::Sigma(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// `k`, `sigma`, or `baseline` for runs without the layer.
    pub param: String,
    pub value: String,
    pub trial: usize,
    pub metric: Option<f64>,
    pub polarization: Option<f64>,
    /// `ok`, or the failure message.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub param: SweepParam,
    pub trials: usize,
    /// Schedule fraction at which polarization is read.
    pub polarization_at: f64,
    /// Adds one run without the layer per trial.
    pub baseline: bool,
}

/// Runs every value × trial with seed `base.seed + trial`. Failed runs
/// become rows with a status message.
pub fn sweep(data: &Dataset, base: &TrainConfig, plan: &SweepPlan, threads: usize) -> Result<Vec<SweepRow>> {
    if plan.param.len() == 0 {
        return Err(CliError::Config("sweep list is empty".into()));
    }
    if plan.trials < 1 {
        return Err(CliError::Config("--trials must be ≥ 1".into()));
    }
    if !(0.0..=1.0).contains(&plan.polarization_at) {
        return Err(CliError::Config("--polarization-at must lie in [0, 1]".into()));
    }
    let values = plan.param.len();
    let jobs = values * plan.trials + if plan.baseline { plan.trials } else { 0 };
    let rows = map_indexed(jobs, threads, |j| {
        let trial = j % plan.trials;
        let mut cfg = base.clone();
        cfg.seed = base.seed.wrapping_add(trial as u64);
        if j >= values * plan.trials {
            let result = train_baseline(cfg, data);
            return SweepRow {
                param: "baseline".into(),
                value: "none".into(),
                trial,
                metric: result.as_ref().ok().map(|o| o.test_metric),
                polarization: None,
                status: result.map_or_else(|e| e.to_string(), |_| "ok".into()),
            };
        }
        let (param, value) = match &plan.param {
            SweepParam::K(v) => {
                cfg.k = v[j / plan.trials];
                ("k", cfg.k.to_string())
            }
            SweepParam::Sigma(v) => {
                cfg.sigma = v[j / plan.trials];
                ("sigma", format!("{}", cfg.sigma))
            }
        };
        let epochs = cfg.epochs;
        match train(cfg, data) {
            Ok(o) => SweepRow {
                param: param.into(),
                value,
                trial,
                metric: Some(o.test_metric_masked),
                polarization: snapshot_at_fraction(&o.trajectory, epochs, plan.polarization_at).map(|r| r.polarization()),
                status: "ok".into(),
            },
            Err(e) => SweepRow {
                param: param.into(),
                value,
                trial,
                metric: None,
                polarization: None,
                status: e.to_string(),
            },
        }
    });
    Ok(rows)
}

/// `param,value,trial,metric,polarization,status`; missing numbers are empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v}"));
    let mut out = String::from("param,value,trial,metric,polarization,status\n");
    for r in rows {
        let status = if r.status.contains([',', '"', '\n']) {
            format!("\"{}\"", r.status.replace('"', "\"\"").replace('\n', " "))
        } else {
            r.status.clone()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.param,
            r.value,
            r.trial,
            opt(r.metric),
            opt(r.polarization),
            status
        ));
    }
    out
}

/// `ground_truth.json` written next to generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub support: Vec<usize>,
    pub spec: SyntheticSpec,
}

/// Generates the dataset described by `spec` into `out_csv` and writes
/// `ground_truth.json` in the same directory.
pub fn gen(spec: &SyntheticSpec, out_csv: &Path) -> Result<PathBuf> {
    let data = spec.generate()?;
    let dir = match out_csv.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    create_dir(&dir)?;
    save_csv(&data, out_csv)?;
    let truth_path = dir.join("ground_truth.json");
    write_json(
        &truth_path,
        &GroundTruth {
            support: data.ground_truth.clone().unwrap_or_default(),
            spec: spec.clone(),
        },
    )?;
    Ok(truth_path)
}
