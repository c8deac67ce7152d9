//! Adam, data splits and the joint gain + network training loop.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::data::{Dataset, TargetData};
use crate::error::{Error, Result};
use crate::model::{self, default_hidden_width, Architecture, MlpModel, Targets, Task};
use crate::sand::{Mode, NoiseSource, SandLayer, SelectionReport};
use crate::tensor::Tensor;

/// Stream ids under the run seed. Each consumer owns one stream so that e.g.
/// changing `sigma` leaves initialization and batch order untouched.
const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config(format!("split fractions must lie in [0, 1]: {all:?}")));
        }
        if libm::fabs(all.iter().sum::<f64>() - 1.0) > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1: {all:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub k: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub trajectory_every: usize,
    pub split: SplitFractions,
    /// Hidden width override; `None` means `max(1, round(n/3))`.
    pub hidden: Option<usize>,
    /// Replace the hidden layer by the identity (linear model).
    pub linear: bool,
}

impl TrainConfig {
    /// Defaults: batch 64, learning rate 1e-3, σ = 1.5, α = 2, snapshots
    /// every 10 epochs, 70/10/20 split.
    pub fn new(k: usize, epochs: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size: 64,
            learning_rate: 1e-3,
            seed,
            k,
            sigma: 1.5,
            alpha: 2.0,
            trajectory_every: 10,
            split: SplitFractions::default(),
            hidden: None,
            linear: false,
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if self.trajectory_every < 1 {
            return Err(Error::Config("trajectory_every must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.k < 1 || self.k > n_features {
            return Err(Error::Config(format!(
                "k must satisfy 1 ≤ k ≤ n (k = {}, n = {n_features})",
                self.k
            )));
        }
        if self.hidden == Some(0) {
            return Err(Error::Config("hidden width must be ≥ 1".into()));
        }
        self.split.validate()
    }

    pub fn architecture(&self, n_features: usize) -> Architecture {
        if self.linear {
            Architecture::Linear
        } else {
            Architecture::Mlp {
                hidden: self.hidden.unwrap_or_else(|| default_hidden_width(n_features)),
            }
        }
    }
}

/// Bias-corrected Adam with one moment pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// Zeroed moments for parameters of the given element counts.
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One in-place update. Nothing is modified if any gradient is non-finite.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[&[f64]],
        names: &[&str],
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Dimension {
                op: "adam_step",
                lhs: vec![self.m.len()],
                rhs: vec![params.len(), grads.len()],
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(Error::Dimension {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
            if let Some(j) = g.iter().position(|x| !x.is_finite()) {
                let name = names.get(i).copied().unwrap_or("?");
                return Err(Error::NonFinite(format!(
                    "gradient of parameter '{name}' at index {j} is {}",
                    g[j]
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(self.beta1, t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, t as f64);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in p.values_mut().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= lr * m_hat / (libm::sqrt(v_hat) + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Row indices of the train / validation / test partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded partition of `0..rows`. Validation and test get
/// `floor(fraction · rows)` rows; the remainder goes to training.
pub fn split_dataset(rows: usize, fractions: &SplitFractions, seed: u64) -> Result<Split> {
    fractions.validate()?;
    if rows == 0 {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    let size = |f: f64| libm::floor(f * rows as f64 + 1e-9) as usize;
    let (n_val, n_test) = (size(fractions.val), size(fractions.test));
    if n_val + n_test >= rows || n_val == 0 || n_test == 0 {
        return Err(Error::Config(format!(
            "split of {rows} rows into {:?} leaves an empty partition",
            [fractions.train, fractions.val, fractions.test]
        )));
    }
    let n_train = rows - n_val - n_test;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    let mut perm: Vec<usize> = (0..rows).collect();
    perm.shuffle(&mut rng);
    let test = perm.split_off(n_train + n_val);
    let val = perm.split_off(n_train);
    Ok(Split {
        train: perm,
        val,
        test,
    })
}

/// Effective gains at one epoch, sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub epoch: usize,
    pub gains: Vec<f64>,
}

impl TrajectoryRow {
    pub fn polarization(&self) -> f64 {
        crate::sand::polarization(&self.gains)
    }
}

/// Recorded snapshot whose epoch is closest to `epoch`; the earlier one wins
/// ties.
pub fn snapshot_near(trajectory: &[TrajectoryRow], epoch: usize) -> Option<&TrajectoryRow> {
    trajectory.iter().min_by_key(|r| r.epoch.abs_diff(epoch))
}

/// Snapshot nearest `fraction` of an `epochs`-long schedule.
pub fn snapshot_at_fraction(trajectory: &[TrajectoryRow], epochs: usize, fraction: f64) -> Option<&TrajectoryRow> {
    snapshot_near(trajectory, libm::round(fraction * epochs as f64) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches; at epoch 0 the noiseless
    /// loss of the untrained model on the training split.
    pub train_loss: f64,
    pub val_metric: f64,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub config: TrainConfig,
    pub report: SelectionReport,
    /// Test metric with the mask applied (accuracy or MAE).
    pub test_metric_masked: f64,
    /// Test metric in eval mode immediately before masking.
    pub test_metric_unmasked: f64,
    pub val_metric_final: f64,
    pub trajectory: Vec<TrajectoryRow>,
    pub metrics: Vec<MetricRow>,
    pub model: MlpModel,
    pub layer: SandLayer,
    pub split: Split,
}

/// Outcome of a run without the selection layer.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub test_metric: f64,
    pub val_metric_final: f64,
    pub metrics: Vec<MetricRow>,
    pub model: MlpModel,
}

/// Name of the metric used for a task: accuracy (higher is better) or MAE.
pub fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Classification { .. } => "accuracy",
        Task::Regression { .. } => "mae",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
    Test,
}

/// State of one training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    config: TrainConfig,
    model: MlpModel,
    layer: Option<SandLayer>,
    adam: Adam,
    shuffle_rng: ChaCha8Rng,
    noise: NoiseSource,
    split: Split,
    train: Dataset,
    val: Dataset,
    test: Dataset,
    epoch: usize,
    trajectory: Vec<TrajectoryRow>,
    metrics: Vec<MetricRow>,
}

impl TrainRun {
    /// Splits the data and initializes model and layer. `data` is expected
    /// to be standardized already.
    pub fn new(config: TrainConfig, data: &Dataset) -> Result<Self> {
        Self::build(config, data, true)
    }

    /// Same setup without the selection layer; shares initialization and
    /// batch order with the layered run of the same config.
    pub fn without_selection(config: TrainConfig, data: &Dataset) -> Result<Self> {
        Self::build(config, data, false)
    }

    fn build(config: TrainConfig, data: &Dataset, with_layer: bool) -> Result<Self> {
        let n = data.n_features();
        config.validate(n)?;
        let split = split_dataset(data.rows(), &config.split, config.seed)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        init_rng.set_stream(INIT_STREAM);
        let model = MlpModel::new(n, data.task, config.architecture(n), &mut init_rng)?;
        let layer = if with_layer {
            Some(SandLayer::new(n, config.k, config.sigma, config.alpha)?)
        } else {
            None
        };
        let mut sizes = Vec::new();
        if let Some(l) = &layer {
            sizes.push(l.n());
        }
        sizes.extend(model.named_parameters().iter().map(|(_, t)| t.len()));
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle_rng.set_stream(SHUFFLE_STREAM);
        let mut run = Self {
            adam: Adam::new(&sizes),
            shuffle_rng,
            noise: NoiseSource::with_stream(config.seed, NOISE_STREAM),
            train: data.subset(&split.train),
            val: data.subset(&split.val),
            test: data.subset(&split.test),
            split,
            model,
            layer,
            config,
            epoch: 0,
            trajectory: Vec::new(),
            metrics: Vec::new(),
        };
        let loss0 = run.evaluate_loss(&run.train)?;
        run.record(0, loss0)?;
        Ok(run)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn layer(&self) -> Option<&SandLayer> {
        self.layer.as_ref()
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn metrics(&self) -> &[MetricRow] {
        &self.metrics
    }

    /// Sorted effective-gain snapshots recorded so far.
    pub fn record_trajectory(&self) -> &[TrajectoryRow] {
        &self.trajectory
    }

    /// Runs every remaining epoch.
    pub fn run_to_end(&mut self) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    /// One pass over the shuffled training rows, last partial batch included.
    pub fn run_epoch(&mut self) -> Result<f64> {
        if self.epoch >= self.config.epochs {
            return Err(Error::State("all epochs have already run".into()));
        }
        if let Some(l) = &mut self.layer {
            l.set_mode(Mode::Training)?;
        }
        let mut order: Vec<usize> = (0..self.train.rows()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let epoch = self.epoch + 1;
        let mut total = 0.0;
        for (b, rows) in order.chunks(self.config.batch_size).enumerate() {
            let batch = self.train.subset(rows);
            let loss = self.train_step(&batch).map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch}, batch {b}: {msg}")),
                other => other,
            })?;
            total += loss * rows.len() as f64;
        }
        self.epoch = epoch;
        let mean_loss = total / self.train.rows() as f64;
        if epoch.is_multiple_of(self.config.trajectory_every) || epoch == self.config.epochs {
            self.record(epoch, mean_loss)?;
        }
        Ok(mean_loss)
    }

    fn train_step(&mut self, batch: &Dataset) -> Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(batch.features.clone());
        let gains = self.layer.as_ref().map(|l| g.param(l.raw_gains().clone()));
        let input = match (&self.layer, gains) {
            (Some(l), Some(a)) => l.forward(&mut g, x, a, &mut self.noise)?,
            _ => x,
        };
        let bound = self.model.bind(&mut g);
        let out = self.model.forward(&mut g, &bound, input)?;
        let loss = self.model.loss(&mut g, out, &targets(&batch.targets))?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("training loss is {value}")));
        }
        g.backward(loss)?;

        let mut vars: Vec<Var> = gains.into_iter().collect();
        vars.extend(bound.vars());
        let grads: Vec<Vec<f64>> = vars
            .iter()
            .map(|&v| g.grad(v).map_or_else(|| vec![0.0; g.value(v).len()], <[f64]>::to_vec))
            .collect();
        let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();

        let mut names: Vec<String> = Vec::new();
        if self.layer.is_some() {
            names.push("gains".into());
        }
        names.extend(self.model.named_parameters().into_iter().map(|(n, _)| n));
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();

        let mut params: Vec<&mut Tensor> = Vec::new();
        if let Some(l) = &mut self.layer {
            params.push(l.raw_gains_mut());
        }
        params.extend(self.model.parameters_mut());
        self.adam
            .step(&mut params, &grad_refs, &name_refs, self.config.learning_rate)?;
        if let Some(l) = &mut self.layer {
            l.clip_gains();
        }
        if !self.model.is_finite() {
            return Err(Error::NonFinite("model parameters after update".into()));
        }
        Ok(value)
    }

    fn record(&mut self, epoch: usize, train_loss: f64) -> Result<()> {
        let val_metric = self.evaluate_metric(&self.val)?;
        self.metrics.push(MetricRow {
            epoch,
            train_loss,
            val_metric,
        });
        if let Some(l) = &self.layer {
            let mut gains = l.reported_gains()?;
            gains.sort_by(|a, b| b.total_cmp(a));
            self.trajectory.push(TrajectoryRow { epoch, gains });
        }
        Ok(())
    }

    /// Noiseless forward of `data` in the layer's current non-training mode.
    fn predict(&self, data: &Dataset) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(data.features.clone());
        let input = match &self.layer {
            Some(l) => {
                let mut l = l.clone();
                if l.mode() == Mode::Training {
                    l.set_mode(Mode::Eval)?;
                }
                let a = g.constant(l.raw_gains().clone());
                l.forward_with_noise(&mut g, x, a, None)?
            }
            None => x,
        };
        let bound = self.model.bind_frozen(&mut g);
        let out = self.model.forward(&mut g, &bound, input)?;
        Ok(g.value(out).clone())
    }

    /// Metric of the current model on one partition, without noise.
    pub fn metric_on(&self, part: Part) -> Result<f64> {
        let data = match part {
            Part::Train => &self.train,
            Part::Val => &self.val,
            Part::Test => &self.test,
        };
        self.evaluate_metric(data)
    }

    fn evaluate_metric(&self, data: &Dataset) -> Result<f64> {
        let out = self.predict(data)?;
        match &data.targets {
            TargetData::Labels { labels, .. } => model::accuracy(&out, labels),
            TargetData::Values(t) => model::mae(out.values(), t.values()),
        }
    }

    fn evaluate_loss(&self, data: &Dataset) -> Result<f64> {
        let out = self.predict(data)?;
        let mut g = Graph::new();
        let o = g.constant(out);
        let loss = self.model.loss(&mut g, o, &targets(&data.targets))?;
        Ok(g.scalar(loss))
    }

    /// Masks all but the top-`k` gains and evaluates the test split.
    pub fn finish(mut self) -> Result<TrainOutcome> {
        if self.epoch < self.config.epochs {
            return Err(Error::State(format!(
                "run stopped at epoch {} of {}",
                self.epoch, self.config.epochs
            )));
        }
        let Some(mut layer) = self.layer.take() else {
            return Err(Error::State("run has no selection layer; use finish_baseline".into()));
        };
        layer.set_mode(Mode::Eval)?;
        self.layer = Some(layer);
        let val_metric_final = self.evaluate_metric(&self.val)?;
        let test_metric_unmasked = self.evaluate_metric(&self.test)?;
        let mut layer = self.layer.take().expect("present");
        let report = layer.finalize_selection()?;
        self.layer = Some(layer);
        let test_metric_masked = self.evaluate_metric(&self.test)?;
        Ok(TrainOutcome {
            config: self.config,
            report,
            test_metric_masked,
            test_metric_unmasked,
            val_metric_final,
            trajectory: self.trajectory,
            metrics: self.metrics,
            model: self.model,
            layer: self.layer.expect("present"),
            split: self.split,
        })
    }

    pub fn finish_baseline(self) -> Result<BaselineOutcome> {
        if self.layer.is_some() {
            return Err(Error::State("run has a selection layer; use finish".into()));
        }
        Ok(BaselineOutcome {
            test_metric: self.evaluate_metric(&self.test)?,
            val_metric_final: self.evaluate_metric(&self.val)?,
            metrics: self.metrics,
            model: self.model,
        })
    }
}

fn targets(t: &TargetData) -> Targets<'_> {
    match t {
        TargetData::Labels { labels, .. } => Targets::Labels(labels),
        TargetData::Values(v) => Targets::Values(v),
    }
}

/// Trains the selection layer jointly with the network and finalizes the
/// top-`k` selection.
pub fn train(config: TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    let mut run = TrainRun::new(config, data)?;
    run.run_to_end()?;
    run.finish()
}

/// Trains the same network on all features, without the selection layer.
pub fn train_baseline(config: TrainConfig, data: &Dataset) -> Result<BaselineOutcome> {
    let mut run = TrainRun::without_selection(config, data)?;
    run.run_to_end()?;
    run.finish_baseline()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;
    use proptest::prelude::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = Tensor::vector(vec![1.0, -2.0]);
        let mut adam = Adam::new(&[2]);
        let lr = 1e-3;
        adam.step(&mut [&mut p], &[&[0.37, -5.0]], &["p"], lr).unwrap();
        assert!((p.values()[0] - (1.0 - lr)).abs() < 1e-6 * lr);
        assert!((p.values()[1] - (-2.0 + lr)).abs() < 1e-6 * lr);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn adam_zero_grad_is_noop() {
        let mut p = Tensor::vector(vec![0.25, 4.0]);
        let mut adam = Adam::new(&[2]);
        adam.step(&mut [&mut p], &[&[0.0, 0.0]], &["p"], 0.1).unwrap();
        assert_eq!(p.values(), &[0.25, 4.0]);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = Tensor::vector(vec![0.0]);
        let mut adam = Adam::new(&[1]);
        for _ in 0..500 {
            let g = 2.0 * (p.values()[0] - 3.0);
            adam.step(&mut [&mut p], &[&[g]], &["p"], 0.1).unwrap();
        }
        assert!((p.values()[0] - 3.0).abs() < 0.01, "{}", p.values()[0]);
    }

    #[test]
    fn adam_rejects_non_finite_and_names_parameter() {
        let mut p = Tensor::vector(vec![1.0]);
        let mut adam = Adam::new(&[1]);
        let err = adam.step(&mut [&mut p], &[&[f64::NAN]], &["w2"], 0.1).unwrap_err();
        match err {
            Error::NonFinite(msg) => assert!(msg.contains("w2")),
            e => panic!("{e:?}"),
        }
        assert_eq!(p.values(), &[1.0]);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn split_sizes_of_ten() {
        let s = split_dataset(10, &SplitFractions::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 1, 2));
        assert_eq!(s, split_dataset(10, &SplitFractions::default(), 1).unwrap());
    }

    #[test]
    fn split_rejects_empty_partitions() {
        assert!(matches!(
            split_dataset(5, &SplitFractions::default(), 0),
            Err(Error::Config(_))
        ));
        let bad = SplitFractions { train: 0.5, val: 0.1, test: 0.1 };
        assert!(matches!(split_dataset(100, &bad, 0), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(rows in 10usize..2000, seed in any::<u64>()) {
            let s = split_dataset(rows, &SplitFractions::default(), seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..rows).collect::<Vec<_>>());
            prop_assert_eq!(s.val.len(), (0.1 * rows as f64 + 1e-9) as usize);
            prop_assert_eq!(s.test.len(), (0.2 * rows as f64 + 1e-9) as usize);
        }
    }

    fn small_task(seed: u64) -> Dataset {
        SyntheticSpec::planted_linear(300, 6, 2, 0.1, seed)
            .unwrap()
            .generate()
            .unwrap()
            .standardize()
            .unwrap()
            .standardize_targets()
            .unwrap()
    }

    #[test]
    fn nearest_snapshot() {
        let rows: Vec<TrajectoryRow> = [0, 10, 20, 25]
            .iter()
            .map(|&epoch| TrajectoryRow { epoch, gains: vec![] })
            .collect();
        assert_eq!(snapshot_near(&rows, 14).unwrap().epoch, 10);
        assert_eq!(snapshot_near(&rows, 15).unwrap().epoch, 10);
        assert_eq!(snapshot_near(&rows, 23).unwrap().epoch, 25);
        assert_eq!(snapshot_at_fraction(&rows, 40, 0.25).unwrap().epoch, 10);
        assert!(snapshot_near(&[], 3).is_none());
    }

    #[test]
    fn zero_epochs_rejected() {
        let data = small_task(0);
        let cfg = TrainConfig::new(2, 0, 0);
        assert!(matches!(train(cfg, &data), Err(Error::Config(_))));
    }

    #[test]
    fn one_epoch_run_is_valid() {
        let data = small_task(1);
        let out = train(TrainConfig::new(2, 1, 3), &data).unwrap();
        assert_eq!(out.report.selected_indices.len(), 2);
        let epochs: Vec<usize> = out.trajectory.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 1]);
        let init = (2.0f64 / 6.0).sqrt();
        assert!(out.trajectory[0].gains.iter().all(|g| (g - init).abs() < 1e-12));
        assert_eq!(out.metrics.len(), 2);
    }

    #[test]
    fn gains_stay_clipped_and_params_finite() {
        let data = small_task(2);
        let mut cfg = TrainConfig::new(2, 100, 4);
        cfg.learning_rate = 0.05;
        let mut run = TrainRun::new(cfg, &data).unwrap();
        for _ in 0..100 {
            run.run_epoch().unwrap();
            let l = run.layer().unwrap();
            assert!(l.raw_gains().values().iter().all(|g| (0.0..=1.0).contains(g)));
            assert!(run.model().is_finite());
        }
    }

    #[test]
    fn trajectory_rows_are_sorted() {
        let data = small_task(3);
        let out = train(TrainConfig::new(2, 20, 5), &data).unwrap();
        for row in &out.trajectory {
            assert!(row.gains.windows(2).all(|w| w[0] >= w[1]));
        }
        let epochs: Vec<usize> = out.trajectory.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 10, 20]);
    }

    #[test]
    fn identical_configs_are_bitwise_deterministic() {
        let data = small_task(4);
        let a = train(TrainConfig::new(2, 15, 6), &data).unwrap();
        let b = train(TrainConfig::new(2, 15, 6), &data).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn sigma_does_not_change_init_or_split() {
        let data = small_task(5);
        let mut c1 = TrainConfig::new(2, 1, 7);
        c1.sigma = 1.0;
        let mut c2 = c1.clone();
        c2.sigma = 2.0;
        let r1 = TrainRun::new(c1, &data).unwrap();
        let r2 = TrainRun::new(c2, &data).unwrap();
        assert_eq!(r1.model(), r2.model());
        assert_eq!(r1.split(), r2.split());
    }

    #[test]
    fn finish_before_last_epoch_is_a_state_error() {
        let data = small_task(6);
        let run = TrainRun::new(TrainConfig::new(2, 3, 0), &data).unwrap();
        assert!(matches!(run.finish(), Err(Error::State(_))));
    }

    #[test]
    fn baseline_trains_on_blobs() {
        let spec = SyntheticSpec::NuisanceBlobs {
            n_samples: 1000,
            n_informative: 2,
            n_nuisance: 0,
            classes: 2,
            nuisance_variance: 0.1,
            min_center_distance: 6.0,
            center_spread: 4.0,
            permute: false,
            seed: 8,
        };
        let data = spec.generate().unwrap().standardize().unwrap();
        let mut cfg = TrainConfig::new(2, 200, 1);
        cfg.hidden = Some(4);
        let mut run = TrainRun::without_selection(cfg, &data).unwrap();
        run.run_to_end().unwrap();
        let acc = run.metric_on(Part::Train).unwrap();
        assert!(acc >= 0.99, "{acc}");
    }
}
