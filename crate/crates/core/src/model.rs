//! One-hidden-layer ReLU network, its linear special case, losses and metrics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Task {
    Classification { classes: usize },
    Regression { outputs: usize },
}

impl Task {
    pub fn outputs(&self) -> usize {
        match *self {
            Task::Classification { classes } => classes,
            Task::Regression { outputs } => outputs,
        }
    }

    pub fn loss_kind(&self) -> LossKind {
        match self {
            Task::Classification { .. } => LossKind::CrossEntropy,
            Task::Regression { .. } => LossKind::MeanSquaredError,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    CrossEntropy,
    MeanSquaredError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    /// `relu(x·W1 + b1)·W2 + b2`.
    Mlp { hidden: usize },
    /// Hidden layer replaced by the identity: `x·W + b`.
    Linear,
}

/// Hidden width `max(1, round(n/3))`, rounding halves up.
pub fn default_hidden_width(n: usize) -> usize {
    ((2 * n + 3) / 6).max(1)
}

/// Weight matrix `fan_in × fan_out` and bias `fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let values = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weight: Tensor::matrix(fan_in, fan_out, values).expect("sized"),
            bias: Tensor::zeros(&[fan_out]),
        }
    }
}

/// Graph leaves for a bound model, one `(weight, bias)` per layer.
#[derive(Debug, Clone)]
pub struct BoundModel {
    layers: Vec<(Var, Var)>,
}

impl BoundModel {
    /// Leaves in parameter order (`w1, b1, w2, b2` or `w, b`).
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    task: Task,
    architecture: Architecture,
    inputs: usize,
    layers: Vec<Dense>,
}

impl MlpModel {
    pub fn new<R: Rng + ?Sized>(
        inputs: usize,
        task: Task,
        architecture: Architecture,
        rng: &mut R,
    ) -> Result<Self> {
        if inputs == 0 || task.outputs() == 0 {
            return Err(Error::Config("model needs at least one input and one output".into()));
        }
        if let Task::Classification { classes } = task {
            if classes < 2 {
                return Err(Error::Config(format!("classification needs ≥ 2 classes, got {classes}")));
            }
        }
        let outputs = task.outputs();
        let layers = match architecture {
            Architecture::Mlp { hidden } => {
                if hidden == 0 {
                    return Err(Error::Config("hidden width must be ≥ 1".into()));
                }
                vec![Dense::init(inputs, hidden, rng), Dense::init(hidden, outputs, rng)]
            }
            Architecture::Linear => vec![Dense::init(inputs, outputs, rng)],
        };
        Ok(Self {
            task,
            architecture,
            inputs,
            layers,
        })
    }

    /// Builds a model from explicit layers, checking that shapes chain.
    pub fn from_layers(task: Task, layers: Vec<Dense>) -> Result<Self> {
        let architecture = match layers.len() {
            1 => Architecture::Linear,
            2 => Architecture::Mlp {
                hidden: layers[0].weight.cols(),
            },
            n => return Err(Error::Config(format!("expected 1 or 2 layers, got {n}"))),
        };
        let inputs = layers[0].weight.rows();
        let mut width = inputs;
        for (i, l) in layers.iter().enumerate() {
            let ws = l.weight.shape();
            if ws.len() != 2 || ws[0] != width || l.bias.shape() != [ws[1]] {
                return Err(Error::Dimension {
                    op: "from_layers",
                    lhs: ws.to_vec(),
                    rhs: l.bias.shape().to_vec(),
                });
            }
            width = ws[1];
            if i + 1 == layers.len() && width != task.outputs() {
                return Err(Error::Dimension {
                    op: "from_layers",
                    lhs: vec![width],
                    rhs: vec![task.outputs()],
                });
            }
        }
        Ok(Self {
            task,
            architecture,
            inputs,
            layers,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// Parameters with their conventional names, in binding order.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        let single = self.layers.len() == 1;
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let suffix = if single { String::new() } else { format!("{}", i + 1) };
            out.push((format!("w{suffix}"), &l.weight));
            out.push((format!("b{suffix}"), &l.bias));
        }
        out
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Tensor> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.is_finite())
    }

    /// Registers every parameter as a gradient-receiving leaf.
    pub fn bind(&self, graph: &mut Graph) -> BoundModel {
        self.bind_with(graph, true)
    }

    /// Registers every parameter as a constant leaf.
    pub fn bind_frozen(&self, graph: &mut Graph) -> BoundModel {
        self.bind_with(graph, false)
    }

    fn bind_with(&self, graph: &mut Graph, trainable: bool) -> BoundModel {
        let leaf = |g: &mut Graph, t: &Tensor| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        BoundModel {
            layers: self
                .layers
                .iter()
                .map(|l| (leaf(graph, &l.weight), leaf(graph, &l.bias)))
                .collect(),
        }
    }

    /// Logits (classification) or predictions (regression) for a batch.
    pub fn forward(&self, graph: &mut Graph, bound: &BoundModel, x: Var) -> Result<Var> {
        forward_layers(graph, &bound.layers, x)
    }

    /// Training loss for a batch.
    pub fn loss(&self, graph: &mut Graph, output: Var, targets: &Targets<'_>) -> Result<Var> {
        match (self.task, targets) {
            (Task::Classification { .. }, Targets::Labels(labels)) => {
                graph.cross_entropy(output, labels)
            }
            (Task::Regression { .. }, Targets::Values(values)) => {
                let t = graph.constant((*values).clone());
                mse_loss(graph, output, t)
            }
            _ => Err(Error::Contract("loss kind does not match the task".into())),
        }
    }
}

/// Forward through `(weight, bias)` leaves with ReLU between layers.
pub fn forward_layers(graph: &mut Graph, layers: &[(Var, Var)], x: Var) -> Result<Var> {
    let mut h = x;
    for (i, &(w, b)) in layers.iter().enumerate() {
        let z = graph.matmul(h, w)?;
        h = graph.add(z, b)?;
        if i + 1 < layers.len() {
            h = graph.relu(h);
        }
    }
    Ok(h)
}

/// Targets for a batch, borrowed from a dataset.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Labels(&'a [usize]),
    Values(&'a Tensor),
}

/// `mean((pred − target)²)` over every element.
pub fn mse_loss(graph: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    let d = graph.sub(pred, target)?;
    let sq = graph.square(d);
    Ok(graph.mean(sq))
}

fn same_len(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::Dimension {
            op,
            lhs: vec![a.len()],
            rhs: vec![b.len()],
        })
    }
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    same_len("mse", pred, target)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / pred.len() as f64)
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    same_len("mae", pred, target)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = pred.iter().zip(target).map(|(p, t)| libm::fabs(p - t)).sum();
    Ok(s / pred.len() as f64)
}

/// Index of the largest entry; lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::Dimension {
            op: "accuracy",
            lhs: logits.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(r, &l)| argmax(logits.row(r)) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = Vec::with_capacity(logits.len());
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|&x| libm::exp(x - max)));
        let z: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|p| *p /= z);
    }
    Tensor::new(logits.shape().to_vec(), out).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::sand::NoiseSource;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hidden_width_rounding() {
        assert_eq!(default_hidden_width(1), 1);
        assert_eq!(default_hidden_width(2), 1);
        assert_eq!(default_hidden_width(3), 1);
        assert_eq!(default_hidden_width(4), 1);
        assert_eq!(default_hidden_width(5), 2);
        assert_eq!(default_hidden_width(20), 7);
        assert_eq!(default_hidden_width(106), 35);
        // 7.5 rounds up
        assert_eq!(default_hidden_width(22), 7);
        assert_eq!(default_hidden_width(23), 8);
    }

    #[test]
    fn zero_model_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = MlpModel::new(3, Task::Regression { outputs: 2 }, Architecture::Mlp { hidden: 2 }, &mut rng)
            .unwrap();
        for p in m.parameters_mut() {
            p.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let bound = m.bind(&mut g);
        let x = g.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]).unwrap());
        let out = m.forward(&mut g, &bound, x).unwrap();
        assert_eq!(g.value(out).values(), &[0.0; 4]);
    }

    #[test]
    fn hand_computed_single_hidden_unit() {
        // x = (2, −1), W1 = (0.5, 1)ᵀ, b1 = 0.25 → h = relu(1 − 1 + 0.25) = 0.25
        // W2 = 4, b2 = −1 → 0.25·4 − 1 = 0
        // second sample x = (3, 1): h = relu(1.5 + 1 + 0.25) = 2.75 → 10
        let layers = vec![
            Dense {
                weight: Tensor::matrix(2, 1, vec![0.5, 1.0]).unwrap(),
                bias: Tensor::vector(vec![0.25]),
            },
            Dense {
                weight: Tensor::matrix(1, 1, vec![4.0]).unwrap(),
                bias: Tensor::vector(vec![-1.0]),
            },
        ];
        let m = MlpModel::from_layers(Task::Regression { outputs: 1 }, layers).unwrap();
        let mut g = Graph::new();
        let bound = m.bind_frozen(&mut g);
        let x = g.constant(Tensor::matrix(2, 2, vec![2.0, -1.0, 3.0, 1.0]).unwrap());
        let out = m.forward(&mut g, &bound, x).unwrap();
        assert_eq!(g.value(out).values(), &[0.0, 10.0]);
    }

    #[test]
    fn input_width_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = MlpModel::new(3, Task::Regression { outputs: 1 }, Architecture::Linear, &mut rng).unwrap();
        let mut g = Graph::new();
        let bound = m.bind(&mut g);
        let x = g.constant(Tensor::zeros(&[2, 4]));
        assert!(matches!(m.forward(&mut g, &bound, x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = MlpModel::new(10, Task::Classification { classes: 3 }, Architecture::Mlp { hidden: 4 }, &mut rng)
            .unwrap();
        let limit = (6.0f64 / 14.0).sqrt();
        assert!(m.layers()[0].weight.values().iter().all(|w| w.abs() <= limit));
        assert!(m.layers()[0].bias.values().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn metric_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert_eq!(mae(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 2.0);
        let logits = Tensor::matrix(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(accuracy(&logits, &[1, 0]).unwrap(), 1.0);
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn accuracy_tie_goes_to_lowest_index() {
        let logits = Tensor::matrix(1, 3, vec![2.0, 2.0, 1.0]).unwrap();
        assert_eq!(accuracy(&logits, &[0]).unwrap(), 1.0);
        assert_eq!(accuracy(&logits, &[1]).unwrap(), 0.0);
    }

    #[test]
    fn mean_predictor_mse_is_population_variance() {
        let mut noise = NoiseSource::new(3);
        let mut y = noise.gaussian(5000, 2.0);
        let m = y.iter().sum::<f64>() / y.len() as f64;
        y.iter_mut().for_each(|v| *v -= m);
        let var = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        let pred = vec![0.0; y.len()];
        assert!((mse(&pred, &y).unwrap() - var).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Tensor::matrix(2, 3, vec![1000.0, 0.0, -3.0, 0.1, 0.2, 0.3]).unwrap();
        let p = softmax_rows(&logits);
        for r in 0..2 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_grad_matches_finite_differences() {
        let logits = Tensor::matrix(3, 4, vec![0.3, -1.2, 0.8, 0.1, 1.5, 0.2, -0.4, 0.0, -0.7, 0.9, 0.6, -1.8]).unwrap();
        let labels = [2usize, 0, 1];
        let r = grad_check(&[logits], 1e-5, |g, v| g.cross_entropy(v[0], &labels)).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn loss_and_forward_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for task in [Task::Classification { classes: 3 }, Task::Regression { outputs: 2 }] {
            let m = MlpModel::new(5, task, Architecture::Mlp { hidden: 3 }, &mut rng).unwrap();
            let x = Tensor::matrix(4, 5, (0..20).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect()).unwrap();
            let labels = [0usize, 2, 1, 2];
            let values = Tensor::matrix(4, 2, vec![0.5, -1.0, 1.5, 0.0, -0.3, 0.2, 1.0, 1.0]).unwrap();
            let params: Vec<Tensor> = m.named_parameters().into_iter().map(|(_, t)| t.clone()).collect();
            let r = grad_check(&params, 1e-5, |g, v| {
                let xv = g.constant(x.clone());
                let out = forward_layers(g, &[(v[0], v[1]), (v[2], v[3])], xv)?;
                match task {
                    Task::Classification { .. } => g.cross_entropy(out, &labels),
                    Task::Regression { .. } => {
                        let t = g.constant(values.clone());
                        mse_loss(g, out, t)
                    }
                }
            })
            .unwrap();
            assert!(r.max_rel_error < 1e-4, "{task:?}: {r:?}");
        }
    }
}
