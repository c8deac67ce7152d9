//! Seeded end-to-end gradient check of the selection layer feeding a model.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check_with, GradCheck, GraphOptions};
use crate::model::{forward_layers, mse_loss, Architecture, MlpModel, Task};
use crate::sand::{NoiseSource, SandLayer};
use crate::tensor::Tensor;
use crate::Result;

/// Central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Pass threshold on the maximum relative error.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

/// Shape of one random instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckInstance {
    pub seed: u64,
    pub n: usize,
    pub hidden: usize,
    pub batch: usize,
    pub k: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub task: Task,
}

impl GradCheckInstance {
    /// Draws `n ≤ 12`, `hidden ≤ 4`, `batch ≤ 4`, `k ≤ n`, `α ∈ {1, 2}` and a
    /// classification or regression head from `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=12);
        let task = if rng.random::<bool>() {
            Task::Classification { classes: rng.random_range(2..=4) }
        } else {
            Task::Regression { outputs: rng.random_range(1..=2) }
        };
        Self {
            seed,
            n,
            hidden: rng.random_range(1..=4),
            batch: rng.random_range(1..=4),
            k: rng.random_range(1..=n),
            alpha: if rng.random::<bool>() { 1.0 } else { 2.0 },
            sigma: 1.5,
            task,
        }
    }

    /// Runs the check with noise drawn once and held fixed. `corrupt` swaps
    /// in a wrong matmul backward rule.
    pub fn check(&self, corrupt: bool) -> Result<GradCheck> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let model = MlpModel::new(self.n, self.task, Architecture::Mlp { hidden: self.hidden }, &mut rng)?;
        let gains: Vec<f64> = (0..self.n).map(|_| rng.random_range(0.05..1.0)).collect();
        let layer = SandLayer::new(self.n, self.k, self.sigma, self.alpha)?;
        let mut noise = NoiseSource::with_stream(self.seed, 2);
        let x = Tensor::matrix(self.batch, self.n, noise.gaussian(self.batch * self.n, 1.0))?;
        let z = Tensor::matrix(self.batch, self.n, noise.gaussian(self.batch * self.n, self.sigma))?;
        let outputs = self.task.outputs();
        let labels: Vec<usize> = (0..self.batch).map(|_| rng.random_range(0..outputs)).collect();
        let targets = Tensor::matrix(self.batch, outputs, noise.gaussian(self.batch * outputs, 1.0))?;

        let mut params = Vec::with_capacity(5);
        params.push(Tensor::vector(gains));
        params.extend(model.named_parameters().into_iter().map(|(_, t)| t.clone()));
        let options = GraphOptions {
            corrupt_matmul_backward: corrupt,
        };
        grad_check_with(options, &params, GRAD_CHECK_STEP, |g, v| {
            let xv = g.constant(x.clone());
            let gated = layer.forward_with_noise(g, xv, v[0], Some(z.clone()))?;
            let out = forward_layers(g, &[(v[1], v[2]), (v[3], v[4])], gated)?;
            match self.task {
                Task::Classification { .. } => g.cross_entropy(out, &labels),
                Task::Regression { .. } => {
                    let t = g.constant(targets.clone());
                    mse_loss(g, out, t)
                }
            }
        })
    }
}
