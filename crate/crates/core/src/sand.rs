//! The additive-noise-distortion selection layer.
//!
//! Each feature is scaled by a trainable gain and mixed with Gaussian noise
//! in proportion to one minus that gain:
//!
//! ```text
//! x̃ = â ⊙ x + (1 − â) ⊙ z,    z ~ N(0, σ²),    â = a · k^(1/α) / ‖a‖_α
//! ```
//!
//! The normalization pins `‖â‖_α^α = k` by construction, so raising the gain of
//! one feature forces the others down and makes them noisier. Training drives
//! `k` gains towards one and the rest towards zero.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{alpha_norm_value, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Norms at or below this are treated as an all-zero gain vector.
pub const MIN_GAIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Normalized gains plus fresh noise on every forward pass.
    Training,
    /// Normalized gains, no noise.
    Eval,
    /// Only the `k` selected features pass, no noise.
    Finalized,
}

/// Seeded stream of i.i.d. standard normal draws.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent sub-stream `stream` of the generator keyed by `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// `len` draws from `N(0, sigma²)`.
    pub fn gaussian(&mut self, len: usize, sigma: f64) -> Vec<f64> {
        (0..len).map(|_| sigma * self.standard_normal()).collect()
    }
}

/// Rescales `a` so that `‖â‖_α^α = k`.
pub fn normalize_gains(a: &[f64], alpha: f64, k: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Contract(format!("norm order must be positive, got {alpha}")));
    }
    if k > a.len() {
        return Err(Error::Contract(format!(
            "k must satisfy 1 ≤ k ≤ n (k = {k}, n = {})",
            a.len()
        )));
    }
    let norm = alpha_norm_value(a, alpha);
    if !(norm > MIN_GAIN_NORM) {
        return Err(degenerate(norm));
    }
    let scale = target_norm(k, alpha) / norm;
    Ok(a.iter().map(|x| x * scale).collect())
}

fn degenerate(norm: f64) -> Error {
    Error::DegenerateGains(format!(
        "gain norm {norm:e} is not above {MIN_GAIN_NORM:e}; re-initialize the gains"
    ))
}

/// `k^(1/α)`, the norm every normalized gain vector has.
fn target_norm(k: usize, alpha: f64) -> f64 {
    libm::pow(k as f64, 1.0 / alpha)
}

/// Mean distance of each gain from the nearest of {0, 1}; lies in `[0, 0.5]`
/// for gains in `[0, 1]`.
pub fn polarization(gains: &[f64]) -> f64 {
    if gains.is_empty() {
        return 0.0;
    }
    gains.iter().map(|&g| f64::min(g, 1.0 - g)).sum::<f64>() / gains.len() as f64
}

/// Outcome of freezing the top-`k` gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Selected feature indices, 0-based ascending.
    pub selected_indices: Vec<usize>,
    /// Effective (normalized) gains for every feature.
    pub gains: Vec<f64>,
    pub polarization: f64,
    pub k: usize,
    pub sigma: f64,
    pub alpha: f64,
}

/// Selection layer state: raw gains, hyperparameters and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SandLayer {
    gains: Tensor,
    k: usize,
    sigma: f64,
    alpha: f64,
    mode: Mode,
    mask: Option<Vec<bool>>,
}

impl SandLayer {
    /// New layer over `n` features with every raw gain at `(k/n)^(1/α)`, which
    /// already satisfies the norm constraint.
    pub fn new(n: usize, k: usize, sigma: f64, alpha: f64) -> Result<Self> {
        if k < 1 || k > n {
            return Err(Error::Config(format!("k must satisfy 1 ≤ k ≤ n (k = {k}, n = {n})")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be a finite value ≥ 0, got {sigma}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be a finite value > 0, got {alpha}")));
        }
        let init = libm::pow(k as f64 / n as f64, 1.0 / alpha);
        Ok(Self {
            gains: Tensor::filled(&[n], init),
            k,
            sigma,
            alpha,
            mode: Mode::Training,
            mask: None,
        })
    }

    /// Replaces the raw gains, e.g. when restoring a checkpoint.
    pub fn with_gains(mut self, gains: Vec<f64>) -> Result<Self> {
        if gains.len() != self.n() {
            return Err(Error::Dimension {
                op: "with_gains",
                lhs: vec![self.n()],
                rhs: vec![gains.len()],
            });
        }
        self.gains = Tensor::vector(gains);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.gains.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn raw_gains(&self) -> &Tensor {
        &self.gains
    }

    pub fn raw_gains_mut(&mut self) -> &mut Tensor {
        &mut self.gains
    }

    /// Switches mode. `Finalized` is only reachable once a mask exists.
    pub fn set_mode(&mut self, mode: Mode) -> Result<()> {
        if mode == Mode::Finalized && self.mask.is_none() {
            return Err(Error::State(
                "finalized mode requires finalize_selection first".into(),
            ));
        }
        self.mode = mode;
        Ok(())
    }

    pub fn effective_gains(&self) -> Result<Vec<f64>> {
        normalize_gains(self.gains.values(), self.alpha, self.k)
    }

    /// Effective gains clamped to `[0, 1]`, the range polarization is defined on.
    pub fn reported_gains(&self) -> Result<Vec<f64>> {
        Ok(self
            .effective_gains()?
            .into_iter()
            .map(|g| g.clamp(0.0, 1.0))
            .collect())
    }

    /// Projects raw gains back onto `[0, 1]`. Runs after every optimizer step.
    pub fn clip_gains(&mut self) {
        for g in self.gains.values_mut() {
            *g = g.clamp(0.0, 1.0);
        }
    }

    pub fn polarization(&self) -> Result<f64> {
        Ok(polarization(&self.reported_gains()?))
    }

    /// Keeps the `k` largest effective gains (lowest index wins ties) and
    /// switches to `Finalized`.
    pub fn finalize_selection(&mut self) -> Result<SelectionReport> {
        if self.mode == Mode::Finalized {
            return Err(Error::State("selection is already finalized".into()));
        }
        let gains = self.effective_gains()?;
        let selected = top_k(&gains, self.k);
        let mut mask = vec![false; self.n()];
        for &i in &selected {
            mask[i] = true;
        }
        let clamped: Vec<f64> = gains.iter().map(|g| g.clamp(0.0, 1.0)).collect();
        self.mask = Some(mask);
        self.mode = Mode::Finalized;
        Ok(SelectionReport {
            selected_indices: selected,
            polarization: polarization(&clamped),
            gains,
            k: self.k,
            sigma: self.sigma,
            alpha: self.alpha,
        })
    }

    /// Restores a finalized state from a stored mask.
    pub fn restore_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.n() || mask.iter().filter(|&&m| m).count() != self.k {
            return Err(Error::Contract(format!(
                "mask must have length {} with exactly {} entries set",
                self.n(),
                self.k
            )));
        }
        self.mask = Some(mask);
        self.mode = Mode::Finalized;
        Ok(())
    }

    /// Adds the effective-gain computation to `graph`, differentiable with
    /// respect to the raw-gain leaf `gains`.
    pub fn normalized_gains(&self, graph: &mut Graph, gains: Var) -> Result<Var> {
        let norm = graph.alpha_norm(gains, self.alpha)?;
        let value = graph.scalar(norm);
        if !(value > MIN_GAIN_NORM) {
            return Err(degenerate(value));
        }
        let unit = graph.div_scalar(gains, norm)?;
        Ok(graph.scalar_mul(unit, target_norm(self.k, self.alpha)))
    }

    /// Applies the layer to a `batch × n` input, drawing fresh noise from
    /// `noise` in training mode.
    pub fn forward(
        &self,
        graph: &mut Graph,
        x: Var,
        gains: Var,
        noise: &mut NoiseSource,
    ) -> Result<Var> {
        let z = if self.mode == Mode::Training && self.sigma > 0.0 {
            let shape = graph.value(x).shape().to_vec();
            let len = graph.value(x).len();
            Some(Tensor::new(shape, noise.gaussian(len, self.sigma))?)
        } else {
            None
        };
        self.forward_with_noise(graph, x, gains, z)
    }

    /// Same as [`forward`](Self::forward) with the noise supplied explicitly.
    /// `z` already carries the `σ` scale and is ignored outside training mode.
    pub fn forward_with_noise(
        &self,
        graph: &mut Graph,
        x: Var,
        gains: Var,
        z: Option<Tensor>,
    ) -> Result<Var> {
        let xs = graph.value(x).shape();
        if xs.len() != 2 || xs[1] != self.n() {
            return Err(Error::Dimension {
                op: "sand_forward",
                lhs: xs.to_vec(),
                rhs: vec![self.n()],
            });
        }
        let a_hat = self.normalized_gains(graph, gains)?;
        match self.mode {
            Mode::Training => {
                let signal = graph.mul(x, a_hat)?;
                let Some(z) = z else {
                    return Ok(signal);
                };
                if z.shape() != graph.value(x).shape() {
                    return Err(Error::Dimension {
                        op: "sand_noise",
                        lhs: graph.value(x).shape().to_vec(),
                        rhs: z.shape().to_vec(),
                    });
                }
                let z = graph.constant(z);
                let neg = graph.scalar_mul(a_hat, -1.0);
                let keep_noise = graph.add_scalar(neg, 1.0);
                let distortion = graph.mul(z, keep_noise)?;
                graph.add(signal, distortion)
            }
            Mode::Eval => graph.mul(x, a_hat),
            Mode::Finalized => {
                let mask = self.mask.as_ref().ok_or_else(|| {
                    Error::State("finalized mode requires finalize_selection first".into())
                })?;
                let m = graph.constant(Tensor::vector(
                    mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
                ));
                let masked = graph.mul(a_hat, m)?;
                graph.mul(x, masked)
            }
        }
    }
}

/// Indices of the `k` largest values, ascending; lowest index wins ties.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let mut selected: Vec<usize> = order.into_iter().take(k).collect();
    selected.sort_unstable();
    selected
}
