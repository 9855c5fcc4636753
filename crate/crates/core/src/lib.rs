//! Kernel support vector machines trained on mixed supervision.
//!
//! A training set carries two kinds of targets: hard class labels
//! `y ∈ {-1, +1}`, handled by the usual hinge constraints, and posterior
//! probabilities `p ∈ [0, 1]`, handled by an ε-insensitive band on the
//! decision score. The band is the preimage of `[p - η, p + η]` under the
//! sigmoid link `1 / (1 + exp(-a s))` with `a = ln(1/η - 1)`, so that the
//! margins `s = ±1` map to probabilities `1 - η` and `η`.
//!
//! Both constraint families lead to a single dual QP
//!
//! ```text
//! min_Γ  ½ Γᵀ G Γ - ẽᵀ Γ    s.t.  fᵀ Γ = 0,  0 ≤ Γ ≤ u
//! ```
//!
//! over `Γ = [α; μ⁺; μ⁻]`, which [`qp::solve_smo`] solves with a
//! maximal-violating-pair SMO method. The trained [`model::PsvmModel`]
//! yields scores, class predictions and probabilities straight from the
//! link, without a post-hoc calibration step. The classical SVM is the
//! special case with no soft points, and [`calibration`] provides Platt
//! scaling for it as the baseline.
//!
//! Modules, bottom up:
//!
//! - [`dataset`]: training-set types, Gaussian generators, labeling schemes, CSV format.
//! - [`bounds`]: precision config, sigmoid link and score bands.
//! - [`kernel`]: kernels, Gram blocks and dual problem assembly.
//! - [`qp`]: SMO solver, projected-gradient reference solver, KKT residual.
//! - [`model`]: training, bias recovery, prediction, primal/dual audit.
//! - [`calibration`]: Platt scaling.
//! - [`eval`]: accuracy and KL metrics.
//! - [`experiment`]: the synthetic benchmark protocols.
//! - [`report`]: plot-ready CSV outputs.

pub mod bounds;
pub mod calibration;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod kernel;
pub mod model;
pub mod qp;
pub mod report;

pub use bounds::{band, link_param, prob_from_score, PrecisionConfig, SigmoidLink, TargetBand};
pub use calibration::{apply_platt, fit_platt, PlattParams};
pub use dataset::{GaussianSpec, Label, LabeledRow, Sample, TrainingSet};
pub use error::{Error, Result};
pub use eval::{accuracy, kl_truncated, MetricsReport};
pub use kernel::{DualProblem, GramBlocks, KernelSpec};
pub use model::{PsvmModel, TrainConfig};
pub use qp::{QPSolution, SolverConfig};
