//! In-memory datasets, standardization and synthetic generators.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Task;
use crate::tensor::Tensor;

/// Targets of a dataset: class ids or real-valued outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetData {
    /// Dense 0-based class ids; `names[id]` is the original label text.
    Labels { labels: Vec<usize>, names: Vec<String> },
    /// `N × c` real targets.
    Values(Tensor),
}

impl TargetData {
    pub fn len(&self) -> usize {
        match self {
            TargetData::Labels { labels, .. } => labels.len(),
            TargetData::Values(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> TargetData {
        match self {
            TargetData::Labels { labels, names } => TargetData::Labels {
                labels: rows.iter().map(|&r| labels[r]).collect(),
                names: names.clone(),
            },
            TargetData::Values(t) => TargetData::Values(t.select_rows(rows)),
        }
    }
}

/// Per-column affine transform `(x − mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns detected as constant; they map to exactly zero.
    #[serde(default)]
    pub constant: Vec<bool>,
}

impl Standardization {
    /// Population statistics of each column. Columns whose spread is
    /// negligible relative to their mean get `std = 1`.
    pub fn fit(x: &Tensor) -> Result<Self> {
        let (rows, cols) = (x.rows(), x.cols());
        if rows < 2 {
            return Err(Error::Config(format!(
                "standardization needs at least 2 rows, got {rows}"
            )));
        }
        let mut mean = vec![0.0; cols];
        for r in 0..rows {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; cols];
        for r in 0..rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut std = Vec::with_capacity(cols);
        let mut constant = Vec::with_capacity(cols);
        for (s, m) in var.iter().zip(&mean) {
            let sd = libm::sqrt(s / rows as f64);
            let flat = sd <= 1e-12 * f64::max(1.0, libm::fabs(*m));
            constant.push(flat);
            std.push(if flat { 1.0 } else { sd });
        }
        Ok(Self {
            mean,
            std,
            constant,
        })
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let c = self.mean.len();
        let values = x
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let j = i % c;
                if self.constant.get(j).copied().unwrap_or(false) {
                    0.0
                } else {
                    (v - self.mean[j]) / self.std[j]
                }
            })
            .collect();
        Tensor::new(x.shape().to_vec(), values).expect("shape preserved")
    }

    pub fn invert(&self, x: &Tensor) -> Tensor {
        let c = self.mean.len();
        let values = x
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.std[i % c] + self.mean[i % c])
            .collect();
        Tensor::new(x.shape().to_vec(), values).expect("shape preserved")
    }
}

/// A feature matrix with its targets and bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// `N × n` features.
    pub features: Tensor,
    pub targets: TargetData,
    pub task: Task,
    pub feature_names: Option<Vec<String>>,
    pub target_name: Option<String>,
    /// Set once features were standardized.
    pub feature_stats: Option<Standardization>,
    /// Set once regression targets were standardized.
    pub target_stats: Option<Standardization>,
    /// Planted informative feature indices, ascending, for synthetic data.
    pub ground_truth: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(features: Tensor, targets: TargetData) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::Dimension {
                op: "dataset",
                lhs: features.shape().to_vec(),
                rhs: vec![2],
            });
        }
        if features.rows() != targets.len() {
            return Err(Error::Dimension {
                op: "dataset",
                lhs: vec![features.rows()],
                rhs: vec![targets.len()],
            });
        }
        let task = match &targets {
            TargetData::Labels { names, .. } => Task::Classification {
                classes: names.len(),
            },
            TargetData::Values(t) => Task::Regression { outputs: t.cols() },
        };
        Ok(Self {
            features,
            targets,
            task,
            feature_names: None,
            target_name: None,
            feature_stats: None,
            target_stats: None,
            ground_truth: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Rows `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows),
            targets: self.targets.select(rows),
            task: self.task,
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            feature_stats: self.feature_stats.clone(),
            target_stats: self.target_stats.clone(),
            ground_truth: self.ground_truth.clone(),
        }
    }

    /// Zero mean, unit population std for every feature column.
    pub fn standardize(&self) -> Result<Dataset> {
        let stats = Standardization::fit(&self.features)?;
        let mut out = self.clone();
        out.features = stats.apply(&self.features);
        out.feature_stats = Some(stats);
        Ok(out)
    }

    /// Standardizes regression targets; classification data is returned as is.
    pub fn standardize_targets(&self) -> Result<Dataset> {
        let TargetData::Values(t) = &self.targets else {
            return Ok(self.clone());
        };
        let stats = Standardization::fit(t)?;
        let mut out = self.clone();
        out.targets = TargetData::Values(stats.apply(t));
        out.target_stats = Some(stats);
        Ok(out)
    }

    /// Undoes feature standardization.
    pub fn raw_features(&self) -> Tensor {
        match &self.feature_stats {
            Some(s) => s.invert(&self.features),
            None => self.features.clone(),
        }
    }
}

/// Replace column `target` by `column[source] + N(0, noise_std²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub source: usize,
    pub target: usize,
    pub noise_std: f64,
}

/// Replayable description of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SyntheticSpec {
    /// `y = Σ_{i∈support} c_i x_i + ε` over i.i.d. standard normal features.
    SparseLinear {
        n_samples: usize,
        n_features: usize,
        support: Vec<usize>,
        coefficients: Vec<f64>,
        noise_std: f64,
        #[serde(default)]
        correlations: Vec<Correlation>,
        seed: u64,
    },
    /// Class-conditional Gaussian blobs in the informative dimensions plus
    /// class-independent nuisance dimensions, columns shuffled.
    NuisanceBlobs {
        n_samples: usize,
        n_informative: usize,
        n_nuisance: usize,
        classes: usize,
        #[serde(default = "default_nuisance_variance")]
        nuisance_variance: f64,
        #[serde(default = "default_min_center_distance")]
        min_center_distance: f64,
        #[serde(default = "default_center_spread")]
        center_spread: f64,
        #[serde(default = "default_true")]
        permute: bool,
        seed: u64,
    },
}

fn default_nuisance_variance() -> f64 {
    0.1
}

fn default_min_center_distance() -> f64 {
    2.0
}

fn default_center_spread() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

impl SyntheticSpec {
    /// Sparse-linear spec whose support and coefficients are drawn from
    /// `seed`: `support_size` distinct indices, magnitudes uniform in
    /// `[1, 3]` with random signs.
    pub fn planted_linear(
        n_samples: usize,
        n_features: usize,
        support_size: usize,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if support_size > n_features {
            return Err(Error::Config(format!(
                "support size {support_size} exceeds {n_features} features"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        let mut idx: Vec<usize> = (0..n_features).collect();
        idx.shuffle(&mut rng);
        let mut support: Vec<usize> = idx.into_iter().take(support_size).collect();
        support.sort_unstable();
        let coefficients = support
            .iter()
            .map(|_| {
                let mag: f64 = rng.random_range(1.0..=3.0);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        Ok(SyntheticSpec::SparseLinear {
            n_samples,
            n_features,
            support,
            coefficients,
            noise_std,
            correlations: Vec::new(),
            seed,
        })
    }

    pub fn seed(&self) -> u64 {
        match self {
            SyntheticSpec::SparseLinear { seed, .. } | SyntheticSpec::NuisanceBlobs { seed, .. } => {
                *seed
            }
        }
    }

    pub fn generate(&self) -> Result<Dataset> {
        match self {
            SyntheticSpec::SparseLinear { .. } => gen_sparse_linear(self),
            SyntheticSpec::NuisanceBlobs { .. } => gen_nuisance_blobs(self),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn feature_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

/// Generates an i.i.d. Gaussian design with a planted sparse linear response.
pub fn gen_sparse_linear(spec: &SyntheticSpec) -> Result<Dataset> {
    let SyntheticSpec::SparseLinear {
        n_samples,
        n_features,
        support,
        coefficients,
        noise_std,
        correlations,
        seed,
    } = spec
    else {
        return Err(Error::Config("expected a SparseLinear spec".into()));
    };
    let (n_samples, n) = (*n_samples, *n_features);
    if support.len() > n {
        return Err(Error::Config(format!(
            "support size {} exceeds {n} features",
            support.len()
        )));
    }
    if support.len() != coefficients.len() {
        return Err(Error::Config("support and coefficients differ in length".into()));
    }
    let mut sorted = support.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != support.len() || sorted.last().is_some_and(|&i| i >= n) {
        return Err(Error::Config("support indices must be distinct and < n_features".into()));
    }
    if coefficients.iter().any(|&c| c == 0.0 || !c.is_finite()) {
        return Err(Error::Config("planted coefficients must be finite and nonzero".into()));
    }
    if !(*noise_std >= 0.0) {
        return Err(Error::Config("noise_std must be ≥ 0".into()));
    }
    for c in correlations {
        if c.source >= n || c.target >= n || c.source == c.target || !(c.noise_std >= 0.0) {
            return Err(Error::Config(format!("invalid correlation {c:?}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
    let mut x: Vec<f64> = (0..n_samples * n).map(|_| normal(&mut rng)).collect();
    for c in correlations {
        for r in 0..n_samples {
            x[r * n + c.target] = x[r * n + c.source] + c.noise_std * normal(&mut rng);
        }
    }
    let y: Vec<f64> = (0..n_samples)
        .map(|r| {
            let signal: f64 = support
                .iter()
                .zip(coefficients)
                .map(|(&i, c)| c * x[r * n + i])
                .sum();
            signal + noise_std * normal(&mut rng)
        })
        .collect();
    let mut data = Dataset::new(
        Tensor::matrix(n_samples, n, x)?,
        TargetData::Values(Tensor::matrix(n_samples, 1, y)?),
    )?;
    data.feature_names = Some(feature_names(n));
    data.target_name = Some("target".to_string());
    data.ground_truth = Some(sorted);
    Ok(data)
}

/// Bounded rejection sampling of class centers in `[-spread, spread]^d`.
fn place_centers(
    rng: &mut ChaCha8Rng,
    classes: usize,
    dims: usize,
    spread: f64,
    min_distance: f64,
) -> Result<Vec<Vec<f64>>> {
    const ATTEMPTS: usize = 1000;
    for _ in 0..ATTEMPTS {
        let centers: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..dims).map(|_| rng.random_range(-spread..=spread)).collect())
            .collect();
        let ok = (0..classes).all(|a| {
            (a + 1..classes).all(|b| {
                let d2: f64 = centers[a]
                    .iter()
                    .zip(&centers[b])
                    .map(|(u, v)| (u - v) * (u - v))
                    .sum();
                libm::sqrt(d2) >= min_distance
            })
        });
        if ok {
            return Ok(centers);
        }
    }
    Err(Error::Generation(format!(
        "could not place {classes} centers at distance ≥ {min_distance} in [-{spread}, {spread}]^{dims} after {ATTEMPTS} attempts"
    )))
}

/// Generates Gaussian class blobs padded with nuisance dimensions.
pub fn gen_nuisance_blobs(spec: &SyntheticSpec) -> Result<Dataset> {
    let SyntheticSpec::NuisanceBlobs {
        n_samples,
        n_informative,
        n_nuisance,
        classes,
        nuisance_variance,
        min_center_distance,
        center_spread,
        permute,
        seed,
    } = spec
    else {
        return Err(Error::Config("expected a NuisanceBlobs spec".into()));
    };
    let (rows, inf, nui, classes) = (*n_samples, *n_informative, *n_nuisance, *classes);
    if classes < 2 {
        return Err(Error::Config(format!("need ≥ 2 classes, got {classes}")));
    }
    if inf == 0 {
        return Err(Error::Config("need ≥ 1 informative feature".into()));
    }
    if !(*nuisance_variance >= 0.0) || !(*center_spread > 0.0) {
        return Err(Error::Config("nuisance variance must be ≥ 0 and spread > 0".into()));
    }
    let n = inf + nui;
    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
    let centers = place_centers(&mut rng, classes, inf, *center_spread, *min_center_distance)?;
    // the permutation is drawn even when unused so that both variants share
    // every other draw
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    if !*permute {
        perm = (0..n).collect();
    }
    let nuisance_std = libm::sqrt(*nuisance_variance);
    let mut x = vec![0.0; rows * n];
    let mut labels = Vec::with_capacity(rows);
    for r in 0..rows {
        let label = rng.random_range(0..classes);
        labels.push(label);
        // original column j lands at position perm[j]
        for (j, c) in centers[label].iter().enumerate() {
            x[r * n + perm[j]] = c + normal(&mut rng);
        }
        for j in inf..n {
            x[r * n + perm[j]] = nuisance_std * normal(&mut rng);
        }
    }
    let mut truth: Vec<usize> = perm[..inf].to_vec();
    truth.sort_unstable();
    // class ids in order of first appearance, as a CSV loader would assign them
    let mut remap = vec![usize::MAX; classes];
    let mut next = 0;
    for l in labels.iter_mut() {
        if remap[*l] == usize::MAX {
            remap[*l] = next;
            next += 1;
        }
        *l = remap[*l];
    }
    let mut data = Dataset::new(
        Tensor::matrix(rows, n, x)?,
        TargetData::Labels {
            labels,
            names: (0..classes).map(|c| c.to_string()).collect(),
        },
    )?;
    data.feature_names = Some(feature_names(n));
    data.target_name = Some("target".to_string());
    data.ground_truth = Some(truth);
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(t: &Tensor, j: usize) -> Vec<f64> {
        (0..t.rows()).map(|r| t.get(r, j)).collect()
    }

    fn mean_std(v: &[f64]) -> (f64, f64) {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let s = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt();
        (m, s)
    }

    fn regression(x: Vec<Vec<f64>>) -> Dataset {
        let rows = x.len();
        Dataset::new(
            Tensor::from_rows(&x).unwrap(),
            TargetData::Values(Tensor::zeros(&[rows, 1])),
        )
        .unwrap()
    }

    #[test]
    fn standardize_hand_column() {
        let d = regression(vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]);
        let s = d.standardize().unwrap();
        let c0 = column(&s.features, 0);
        let want = 1.5f64.sqrt();
        assert!((c0[0] + want).abs() < 1e-12 && c0[1].abs() < 1e-15 && (c0[2] - want).abs() < 1e-12);
        assert_eq!(column(&s.features, 1), vec![0.0; 3]);
        let stats = s.feature_stats.as_ref().unwrap();
        assert!((stats.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(stats.std[1], 1.0);
    }

    #[test]
    fn standardize_constant_inexact_column() {
        let d = regression(vec![vec![0.1], vec![0.1], vec![0.1]]);
        let s = d.standardize().unwrap();
        assert_eq!(column(&s.features, 0), vec![0.0; 3]);
    }

    #[test]
    fn standardize_needs_two_rows() {
        let d = regression(vec![vec![1.0]]);
        assert!(matches!(d.standardize(), Err(Error::Config(_))));
    }

    #[test]
    fn standardize_is_idempotent_and_invertible() {
        let spec = SyntheticSpec::planted_linear(500, 6, 2, 0.1, 4).unwrap();
        let mut raw = spec.generate().unwrap();
        // shift and scale to make the transform nontrivial
        raw.features.values_mut().iter_mut().enumerate().for_each(|(i, v)| *v = *v * (1.0 + (i % 6) as f64) + 3.0);
        let once = raw.standardize().unwrap();
        for j in 0..6 {
            let (m, s) = mean_std(&column(&once.features, j));
            assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-6);
        }
        let twice = once.standardize().unwrap();
        for (a, b) in once.features.values().iter().zip(twice.features.values()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in once.raw_features().values().iter().zip(raw.features.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sparse_linear_ols_recovers_coefficients() {
        // closed-form OLS oracle on the full design
        let spec = SyntheticSpec::SparseLinear {
            n_samples: 2000,
            n_features: 6,
            support: vec![0, 3],
            coefficients: vec![2.0, -3.0],
            noise_std: 0.01,
            correlations: vec![],
            seed: 1,
        };
        let d = spec.generate().unwrap();
        let TargetData::Values(y) = &d.targets else { unreachable!() };
        let fit = crate::linreg::ols_fit(&d.features, y).unwrap();
        let want = [2.0, 0.0, 0.0, -3.0, 0.0, 0.0];
        for (w, t) in fit.weights.values().iter().zip(want) {
            assert!((w - t).abs() < 0.02, "{w} vs {t}");
        }
        assert_eq!(d.ground_truth, Some(vec![0, 3]));
    }

    #[test]
    fn empty_support_noiseless_is_zero() {
        let spec = SyntheticSpec::SparseLinear {
            n_samples: 50,
            n_features: 4,
            support: vec![],
            coefficients: vec![],
            noise_std: 0.0,
            correlations: vec![],
            seed: 2,
        };
        let d = spec.generate().unwrap();
        let TargetData::Values(y) = &d.targets else { unreachable!() };
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oversized_support_rejected() {
        assert!(SyntheticSpec::planted_linear(10, 3, 4, 0.1, 0).is_err());
        let spec = SyntheticSpec::SparseLinear {
            n_samples: 10,
            n_features: 2,
            support: vec![0, 1, 2],
            coefficients: vec![1.0, 1.0, 1.0],
            noise_std: 0.0,
            correlations: vec![],
            seed: 0,
        };
        assert!(matches!(spec.generate(), Err(Error::Config(_))));
    }

    #[test]
    fn generators_are_deterministic() {
        let a = SyntheticSpec::planted_linear(100, 8, 3, 0.1, 9).unwrap();
        assert_eq!(a.generate().unwrap(), a.generate().unwrap());
        let b = blobs(500, 3, 10, true, 5);
        assert_eq!(b.generate().unwrap(), b.generate().unwrap());
    }

    fn blobs(n_samples: usize, inf: usize, nui: usize, permute: bool, seed: u64) -> SyntheticSpec {
        SyntheticSpec::NuisanceBlobs {
            n_samples,
            n_informative: inf,
            n_nuisance: nui,
            classes: 4,
            nuisance_variance: 0.1,
            min_center_distance: 2.0,
            center_spread: 2.0,
            permute,
            seed,
        }
    }

    #[test]
    fn nuisance_std_is_sqrt_variance() {
        let d = blobs(10_000, 2, 3, false, 1).generate().unwrap();
        let want = 0.1f64.sqrt();
        // standard error of a sample std ≈ σ/√(2N)
        let se = want / (2.0 * 10_000f64).sqrt();
        for j in 2..5 {
            let (_, s) = mean_std(&column(&d.features, j));
            assert!((s - want).abs() <= 3.0 * se, "column {j}: {s}");
        }
    }

    #[test]
    fn ground_truth_matches_permutation() {
        let plain = blobs(200, 6, 20, false, 3).generate().unwrap();
        let perm = blobs(200, 6, 20, true, 3).generate().unwrap();
        assert_eq!(plain.ground_truth, Some((0..6).collect()));
        let truth = perm.ground_truth.clone().unwrap();
        assert_eq!(truth.len(), 6);
        // each informative column of the unpermuted data appears verbatim at
        // one of the ground-truth positions
        for j in 0..6 {
            let col = column(&plain.features, j);
            assert!(truth.iter().any(|&t| column(&perm.features, t) == col), "column {j}");
        }
        assert_eq!(plain.targets, perm.targets);
    }

    #[test]
    fn infeasible_centers_fail() {
        let spec = SyntheticSpec::NuisanceBlobs {
            n_samples: 10,
            n_informative: 1,
            n_nuisance: 0,
            classes: 5,
            nuisance_variance: 0.1,
            min_center_distance: 10.0,
            center_spread: 1.0,
            permute: true,
            seed: 0,
        };
        assert!(matches!(spec.generate(), Err(Error::Generation(_))));
    }
}
