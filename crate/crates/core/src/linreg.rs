//! Closed-form and exhaustive ground truth for linear regression.
//!
//! For a linear model `y ≈ W x + b` fed through the selection layer with
//! fixed gains `a`, the expected squared loss over the noise splits as
//!
//! ```text
//! E‖y − W(a⊙x + (1−a)⊙z) − b‖² = E‖y − W(a⊙x) − b‖² + σ² Σ_i ‖W_{:,i}‖² (1 − a_i)²
//! ```
//!
//! so the layer acts as a penalty that is smallest when gains sit at 0 or 1.
//! [`verify_variance_identity`] checks this by Monte Carlo and
//! [`brute_force_best_subset`] gives the best `k`-subset a trained layer
//! should find.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TargetData};
use crate::error::{Error, Result};
use crate::sand::NoiseSource;
use crate::tensor::Tensor;
use crate::trainer::{train, TrainConfig};

/// Largest condition number accepted for the normal equations.
pub const MAX_CONDITION: f64 = 1e12;

/// Largest number of subsets the exhaustive search will enumerate.
pub const MAX_SUBSETS: u128 = 1_000_000;

/// Least-squares fit with intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// `c × m` coefficients.
    pub weights: Tensor,
    pub bias: Vec<f64>,
    /// Mean over samples of the squared residual norm.
    pub loss: f64,
    /// Condition number of the augmented normal-equation matrix.
    pub condition: f64,
}

/// Solves the normal equations of `y ≈ X Wᵀ + b` for `X: N × m`, `y: N × c`.
pub fn ols_fit(x: &Tensor, y: &Tensor) -> Result<OlsFit> {
    let (rows, m) = (x.rows(), x.cols());
    let c = y.cols();
    if y.rows() != rows {
        return Err(Error::Dimension {
            op: "ols_fit",
            lhs: x.shape().to_vec(),
            rhs: y.shape().to_vec(),
        });
    }
    if rows <= m {
        return Err(Error::Config(format!(
            "least squares needs more rows than features (N = {rows}, m = {m})"
        )));
    }
    let a = DMatrix::from_fn(rows, m + 1, |r, j| if j < m { x.get(r, j) } else { 1.0 });
    let target = DMatrix::from_row_slice(rows, c, y.values());
    let normal = a.transpose() * &a;
    let eig = normal.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular {
            condition,
            limit: MAX_CONDITION,
        });
    }
    let chol = normal.cholesky().ok_or(Error::Singular {
        condition,
        limit: MAX_CONDITION,
    })?;
    let beta = chol.solve(&(a.transpose() * &target));
    let resid = &target - &a * &beta;
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / rows as f64;
    let mut weights = Vec::with_capacity(c * m);
    for o in 0..c {
        weights.extend((0..m).map(|j| beta[(j, o)]));
    }
    Ok(OlsFit {
        weights: Tensor::matrix(c, m, weights)?,
        bias: (0..c).map(|o| beta[(m, o)]).collect(),
        loss,
        condition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetLoss {
    pub subset: Vec<usize>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSearchResult {
    pub best_subset: Vec<usize>,
    pub best_loss: f64,
    /// Every `k`-subset in lexicographic order.
    pub table: Vec<SubsetLoss>,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Fails with [`Error::SearchTooLarge`] when `C(n, k)` exceeds [`MAX_SUBSETS`].
pub fn check_search_size(n: usize, k: usize) -> Result<u128> {
    if k < 1 || k > n {
        return Err(Error::Contract(format!("k must satisfy 1 ≤ k ≤ n (k = {k}, n = {n})")));
    }
    let count = binomial(n, k);
    if count > MAX_SUBSETS {
        return Err(Error::SearchTooLarge {
            n,
            k,
            count,
            limit: MAX_SUBSETS,
        });
    }
    Ok(count)
}

/// Next `k`-combination of `0..n` in lexicographic order.
fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    for i in (0..k).rev() {
        if comb[i] < n - k + i {
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Fits OLS on every `k`-subset of columns. The first subset in
/// lexicographic order wins exact ties.
pub fn brute_force_best_subset(x: &Tensor, y: &Tensor, k: usize) -> Result<SubsetSearchResult> {
    let n = x.cols();
    let count = check_search_size(n, k)?;
    let mut table = Vec::with_capacity(count as usize);
    let mut comb: Vec<usize> = (0..k).collect();
    let mut best: Option<(usize, f64)> = None;
    loop {
        let fit = ols_fit(&x.select_cols(&comb), y)?;
        if best.is_none_or(|(_, l)| fit.loss < l) {
            best = Some((table.len(), fit.loss));
        }
        table.push(SubsetLoss {
            subset: comb.clone(),
            loss: fit.loss,
        });
        if !next_combination(&mut comb, n) {
            break;
        }
    }
    let (idx, best_loss) = best.expect("at least one subset");
    Ok(SubsetSearchResult {
        best_subset: table[idx].subset.clone(),
        best_loss,
        table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// Monte-Carlo estimate of the noisy loss.
    pub lhs_mc: f64,
    /// Noiseless loss plus `σ² Σ w_i² (1 − a_i)²`.
    pub rhs_analytic: f64,
    /// Standard error of `lhs_mc`.
    pub std_err: f64,
}

impl IdentityCheck {
    /// `|lhs − rhs| ≤ 3·std_err`; exact equality is required when the noise
    /// term vanishes.
    pub fn passes(&self) -> bool {
        libm::fabs(self.lhs_mc - self.rhs_analytic) <= 3.0 * self.std_err
    }
}

/// Minimum number of Monte-Carlo draws for the identity check.
pub const MIN_IDENTITY_DRAWS: usize = 10_000;

/// Checks the loss decomposition for `W: c × n`, `b: c`, gains `a: n`.
///
/// Each draw averages the noisy loss over every sample with fresh noise per
/// sample; `lhs_mc` is the mean over draws.
#[allow(clippy::too_many_arguments)]
pub fn verify_variance_identity(
    w: &Tensor,
    b: &[f64],
    a: &[f64],
    sigma: f64,
    x: &Tensor,
    y: &Tensor,
    n_draws: usize,
    noise: &mut NoiseSource,
) -> Result<IdentityCheck> {
    let (rows, n) = (x.rows(), x.cols());
    let c = y.cols();
    if w.shape() != [c, n] || b.len() != c || a.len() != n || y.rows() != rows {
        return Err(Error::Dimension {
            op: "verify_variance_identity",
            lhs: w.shape().to_vec(),
            rhs: vec![c, n, b.len(), a.len(), rows],
        });
    }
    if n_draws < MIN_IDENTITY_DRAWS {
        return Err(Error::Contract(format!(
            "identity check needs ≥ {MIN_IDENTITY_DRAWS} draws, got {n_draws}"
        )));
    }
    // residuals of the noiseless gated model
    let mut resid = vec![0.0; rows * c];
    for r in 0..rows {
        let xr = x.row(r);
        for o in 0..c {
            let pred: f64 = (0..n).map(|i| w.get(o, i) * a[i] * xr[i]).sum::<f64>() + b[o];
            resid[r * c + o] = y.get(r, o) - pred;
        }
    }
    let clean = resid.iter().map(|v| v * v).sum::<f64>() / rows as f64;
    let penalty: f64 = (0..n)
        .map(|i| {
            let col: f64 = (0..c).map(|o| w.get(o, i) * w.get(o, i)).sum();
            col * (1.0 - a[i]) * (1.0 - a[i])
        })
        .sum::<f64>()
        * sigma
        * sigma;
    let rhs = clean + penalty;
    let noisy_dims: Vec<usize> = (0..n).filter(|&i| a[i] != 1.0).collect();
    if sigma == 0.0 || noisy_dims.is_empty() {
        return Ok(IdentityCheck {
            lhs_mc: clean,
            rhs_analytic: rhs,
            std_err: 0.0,
        });
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut u = vec![0.0; n];
    for _ in 0..n_draws {
        let mut draw = 0.0;
        for r in 0..rows {
            for &i in &noisy_dims {
                u[i] = (1.0 - a[i]) * sigma * noise.standard_normal();
            }
            for o in 0..c {
                let wu: f64 = noisy_dims.iter().map(|&i| w.get(o, i) * u[i]).sum();
                let e = resid[r * c + o] - wu;
                draw += e * e;
            }
        }
        draw /= rows as f64;
        sum += draw;
        sum_sq += draw * draw;
    }
    let d = n_draws as f64;
    let mean = sum / d;
    let var = f64::max(0.0, (sum_sq - d * mean * mean) / (d - 1.0));
    Ok(IdentityCheck {
        lhs_mc: mean,
        rhs_analytic: rhs,
        std_err: libm::sqrt(var / d),
    })
}

/// Selection by a trained linear model next to the exhaustive optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub sand_subset: Vec<usize>,
    /// OLS loss on the selected subset.
    pub sand_loss: f64,
    pub oracle_subset: Vec<usize>,
    pub oracle_loss: f64,
    /// `(sand_loss − oracle_loss) / oracle_loss`.
    pub relative_gap: f64,
    pub seed: u64,
}

/// `(candidate − best) / best`, with an exact zero best treated specially.
pub fn relative_gap(candidate: f64, best: f64) -> f64 {
    if best > 0.0 {
        (candidate - best) / best
    } else if candidate <= best {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Trains the layer in front of a linear model on `data`, then compares the
/// chosen subset with the best `k`-subset. Both losses are OLS refits on the
/// full dataset.
pub fn sand_vs_oracle(
    data: &Dataset,
    k: usize,
    config: &TrainConfig,
) -> Result<(OracleComparison, crate::trainer::TrainOutcome)> {
    let TargetData::Values(y) = &data.targets else {
        return Err(Error::Config("oracle comparison needs a regression dataset".into()));
    };
    check_search_size(data.n_features(), k)?;
    let mut cfg = config.clone();
    cfg.k = k;
    cfg.linear = true;
    let outcome = train(cfg, data)?;
    let sand_subset = outcome.report.selected_indices.clone();
    let sand_loss = ols_fit(&data.features.select_cols(&sand_subset), y)?.loss;
    let oracle = brute_force_best_subset(&data.features, y, k)?;
    Ok((
        OracleComparison {
            relative_gap: relative_gap(sand_loss, oracle.best_loss),
            sand_subset,
            sand_loss,
            oracle_subset: oracle.best_subset,
            oracle_loss: oracle.best_loss,
            seed: config.seed,
        },
        outcome,
    ))
}

/// Columns of a linear model's `n × c` input weights as the `c × n` matrix
/// used by [`verify_variance_identity`].
pub fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    let mut out = Vec::with_capacity(r * c);
    for j in 0..c {
        out.extend((0..r).map(|i| t.get(i, j)));
    }
    Tensor::matrix(c, r, out).expect("sized")
}

/// Column vector view of a slice, for callers building `y` by hand.
pub fn column(values: Vec<f64>) -> Tensor {
    let n = values.len();
    Tensor::matrix(n, 1, values).expect("sized")
}
