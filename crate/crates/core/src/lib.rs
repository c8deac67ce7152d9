//! Feature selection by learned gated noise.
//!
//! A [`SandLayer`] multiplies each input by a learned gain and fills the
//! remainder with Gaussian noise. Gains are normalized so that their
//! `α`-norm equals `k^{1/α}`, which pushes training toward `k` open gates.
//! After training the top `k` gains form the selection.
//!
//! The crate is `no_std` with `alloc`. Enable `std` for `std::error::Error`.
#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod check;
pub mod data;
pub mod error;
pub mod linreg;
pub mod model;
pub mod sand;
pub mod tensor;
pub mod trainer;

pub use autodiff::{grad_check, GradCheck, Graph, Var};
pub use check::GradCheckInstance;
pub use data::{Dataset, Standardization, SyntheticSpec, TargetData};
pub use error::{Error, Result};
pub use linreg::{brute_force_best_subset, ols_fit, sand_vs_oracle, verify_variance_identity};
pub use model::{Architecture, MlpModel, Task};
pub use sand::{Mode, NoiseSource, SandLayer, SelectionReport};
pub use tensor::Tensor;
pub use trainer::{train, train_baseline, TrainConfig, TrainOutcome};
