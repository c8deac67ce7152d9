//! Report, log and checkpoint files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sand_core::data::Standardization;
use sand_core::model::{accuracy, mae, Dense};
use sand_core::sand::Mode;
use sand_core::trainer::{metric_name, MetricRow, TrainConfig, TrajectoryRow};
use sand_core::{Graph, MlpModel, SandLayer, TargetData, Task, Tensor, TrainOutcome};

use crate::error::{CliError, Result};
use crate::run::DataConfig;

pub const CHECKPOINT_FORMAT: &str = "sand-ckpt-v1";

/// Fully resolved settings of one command, echoed into its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub command: String,
    pub data: DataConfig,
    pub train: TrainConfig,
}

/// `report.json` of `select`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectReport {
    pub selected_indices: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selected_names: Option<Vec<String>>,
    pub gains: Vec<f64>,
    pub polarization: f64,
    pub k: usize,
    pub sigma: f64,
    pub alpha: f64,
    /// `accuracy` or `mae`.
    pub metric: String,
    pub test_metric_masked: f64,
    pub test_metric_unmasked: f64,
    pub val_metric_final: f64,
    pub config: ConfigEcho,
}

impl SelectReport {
    pub fn new(outcome: &TrainOutcome, feature_names: Option<&[String]>, config: ConfigEcho) -> Self {
        let r = &outcome.report;
        Self {
            selected_names: feature_names
                .map(|names| r.selected_indices.iter().map(|&i| names[i].clone()).collect()),
            selected_indices: r.selected_indices.clone(),
            gains: r.gains.clone(),
            polarization: r.polarization,
            k: r.k,
            sigma: r.sigma,
            alpha: r.alpha,
            metric: metric_name(outcome.model.task()).to_string(),
            test_metric_masked: outcome.test_metric_masked,
            test_metric_unmasked: outcome.test_metric_unmasked,
            val_metric_final: outcome.val_metric_final,
            config,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// `epoch,g1,...,gn` with gains sorted descending.
pub fn trajectory_csv(rows: &[TrajectoryRow], n: usize) -> String {
    let mut out = String::from("epoch");
    for i in 1..=n {
        let _ = write!(out, ",g{i}");
    }
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{}", row.epoch);
        for g in &row.gains {
            let _ = write!(out, ",{g}");
        }
        out.push('\n');
    }
    out
}

/// `epoch,train_loss,val_metric`.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("epoch,train_loss,val_metric\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_metric);
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(CliError::io(path))
}

/// Trained weights, gains and mask plus what is needed to apply them to raw
/// features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: TrainConfig,
    pub task: Task,
    pub layers: Vec<Dense>,
    pub raw_gains: Vec<f64>,
    pub mask: Vec<bool>,
    pub feature_stats: Option<Standardization>,
    pub target_stats: Option<Standardization>,
    pub feature_names: Option<Vec<String>>,
}

impl Checkpoint {
    pub fn new(outcome: &TrainOutcome, feature_names: Option<&[String]>, feature_stats: Option<&Standardization>, target_stats: Option<&Standardization>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            config: outcome.config.clone(),
            task: outcome.model.task(),
            layers: outcome.model.layers().to_vec(),
            raw_gains: outcome.layer.raw_gains().values().to_vec(),
            mask: outcome.layer.mask().map(<[bool]>::to_vec).unwrap_or_default(),
            feature_stats: feature_stats.cloned(),
            target_stats: target_stats.cloned(),
            feature_names: feature_names.map(<[String]>::to_vec),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = read_json(path)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(CliError::Config(format!(
                "{}: unsupported checkpoint format {:?}",
                path.display(),
                ckpt.format
            )));
        }
        Ok(ckpt)
    }

    /// Rebuilds the model and the finalized layer.
    pub fn restore(&self) -> Result<(MlpModel, SandLayer)> {
        let model = MlpModel::from_layers(self.task, self.layers.clone())?;
        let c = &self.config;
        let mut layer = SandLayer::new(self.raw_gains.len(), c.k, c.sigma, c.alpha)?.with_gains(self.raw_gains.clone())?;
        layer.restore_mask(self.mask.clone())?;
        Ok((model, layer))
    }

    /// Outputs for already standardized features, with the mask applied.
    pub fn predict(&self, features: &Tensor) -> Result<Tensor> {
        let (model, layer) = self.restore()?;
        debug_assert_eq!(layer.mode(), Mode::Finalized);
        let mut g = Graph::new();
        let x = g.constant(features.clone());
        let gains = g.constant(layer.raw_gains().clone());
        let gated = layer.forward_with_noise(&mut g, x, gains, None)?;
        let bound = model.bind_frozen(&mut g);
        let out = model.forward(&mut g, &bound, gated)?;
        Ok(g.value(out).clone())
    }

    /// Accuracy or MAE of [`predict`](Self::predict) against `targets`.
    pub fn evaluate(&self, features: &Tensor, targets: &TargetData) -> Result<f64> {
        let out = self.predict(features)?;
        Ok(match targets {
            TargetData::Labels { labels, .. } => accuracy(&out, labels)?,
            TargetData::Values(t) => mae(out.values(), t.values())?,
        })
    }
}
