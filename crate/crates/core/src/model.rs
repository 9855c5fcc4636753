//! Training, bias recovery, prediction and primal/dual audit.
//!
//! The decision function is the kernel expansion
//! `s(x) = Σ θ_i k(x_i, x) + b` with `θ_i = α_i y_i` on hard points and
//! `θ_i = -(μ⁺_i - μ⁻_i)` on soft points. Probabilities come straight from
//! the sigmoid link fixed at training time; the classical SVM (no soft
//! points) is the same code path.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::{band, link_param, PrecisionConfig, SigmoidLink, TargetBand};
use crate::calibration::{apply_platt, PlattParams};
use crate::dataset::{Sample, TrainingSet};
use crate::error::{Error, Result};
use crate::kernel::{assemble, build_blocks, DualProblem, KernelSpec, Multiplier};
use crate::qp::{solve_smo, QPSolution, SolverConfig};

/// Relative size below which an expansion coefficient is dropped.
const PRUNE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Cost of hinge slack on hard points.
    pub c: f64,
    /// Cost of band slack on soft points.
    pub c_tilde: f64,
    pub kernel: KernelSpec,
    pub precision: PrecisionConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl TrainConfig {
    pub fn new(c: f64, c_tilde: f64, kernel: KernelSpec, eta: f64) -> Result<Self> {
        let cfg = TrainConfig {
            c,
            c_tilde,
            kernel,
            precision: PrecisionConfig::from_eta(eta)?,
            solver: SolverConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c_tilde > 0.0 && self.c.is_finite() && self.c_tilde.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "C = {} and C̃ = {} must be positive",
                self.c, self.c_tilde
            )));
        }
        self.kernel.validate()?;
        self.precision.validate()?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Psvm,
    Csvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub converged: bool,
    pub iterations: u64,
    pub kkt_residual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub method: Method,
    pub c: f64,
    pub c_tilde: f64,
    pub eta: f64,
    pub seed: Option<u64>,
    pub n_hard: usize,
    pub n_soft: usize,
    pub diagnostics: SolverDiagnostics,
    /// Set when the solver stopped before reaching the KKT tolerance.
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsvmModel {
    /// Feature dimension of the training data.
    pub input_dim: usize,
    pub kernel: KernelSpec,
    pub support_points: Vec<Sample>,
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub link: SigmoidLink,
    /// Platt mapping fitted after training; only set for the C-SVM baseline.
    #[serde(default)]
    pub calibration: Option<PlattParams>,
    pub metadata: TrainingMetadata,
}

impl PsvmModel {
    pub fn dim(&self) -> usize {
        self.input_dim
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, found: x.len() });
        }
        Ok(())
    }

    /// `Σ θ_i k(x_i, x) + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.decision_unchecked(x))
    }

    fn decision_unchecked(&self, x: &[f64]) -> f64 {
        self.support_points
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, theta)| theta * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// Sign of the decision value; a score of exactly zero maps to `+1`.
    pub fn predict_class(&self, x: &[f64]) -> Result<i8> {
        Ok(class_of_score(self.decision(x)?))
    }

    /// Probability through the link: `1 / (1 + exp(-a s(x)))`.
    pub fn predict_prob(&self, x: &[f64]) -> Result<f64> {
        Ok(self.link.prob(self.decision(x)?))
    }

    /// Probability from the Platt mapping when one is attached, otherwise
    /// from the link.
    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        Ok(self.probability_of_score(self.decision(x)?))
    }

    /// [`Self::probability`] for an already computed decision value.
    pub fn probability_of_score(&self, score: f64) -> f64 {
        match &self.calibration {
            Some(platt) => apply_platt(platt, score),
            None => self.link.prob(score),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }
}

pub fn class_of_score(score: f64) -> i8 {
    if score >= 0.0 {
        1
    } else {
        -1
    }
}

/// Everything produced by a training run.
#[derive(Debug, Clone)]
pub struct Fit {
    pub model: PsvmModel,
    pub problem: DualProblem,
    pub solution: QPSolution,
    pub bands: Vec<TargetBand>,
}

pub fn soft_bands(train: &TrainingSet, precision: &PrecisionConfig) -> Result<Vec<TargetBand>> {
    train.soft().iter().map(|&(_, p)| band(p, precision)).collect()
}

/// Assembles and solves the dual, then builds the model.
pub fn fit_psvm(train: &TrainingSet, cfg: &TrainConfig) -> Result<Fit> {
    fit_with_method(train, cfg, Method::Psvm)
}

fn fit_with_method(train: &TrainingSet, cfg: &TrainConfig, method: Method) -> Result<Fit> {
    cfg.validate()?;
    let link = link_param(&cfg.precision)?;
    let bands = soft_bands(train, &cfg.precision)?;
    let blocks = build_blocks(train, &cfg.kernel)?;
    let problem = assemble(&blocks, &bands, cfg.c, cfg.c_tilde, &train.labels())?;
    let solution = solve_smo(&problem, &cfg.solver)?;

    let n = train.n();
    let s = train.n_soft();
    let gamma = &solution.gamma;
    let scores = scores_without_bias(&problem, gamma);
    let tolerance = if solution.converged {
        (10.0 * cfg.solver.kkt_tolerance).max(1e-9)
    } else {
        f64::INFINITY
    };
    let bias = recover_bias(&problem, &solution, &scores, tolerance)?;

    let mut support_points = Vec::new();
    let mut coefficients = Vec::new();
    for (i, (x, y)) in train.hard().iter().enumerate() {
        let theta = gamma[i] * f64::from(*y);
        if theta.abs() >= PRUNE_THRESHOLD * cfg.c {
            support_points.push(x.clone());
            coefficients.push(theta);
        }
    }
    for (i, (x, _)) in train.soft().iter().enumerate() {
        let theta = -(gamma[n + i] - gamma[n + s + i]);
        if theta.abs() >= PRUNE_THRESHOLD * cfg.c_tilde {
            support_points.push(x.clone());
            coefficients.push(theta);
        }
    }

    let warning = (!solution.converged).then(|| {
        format!(
            "solver stopped after {} iterations with KKT residual {:e}",
            solution.iterations, solution.kkt_residual
        )
    });
    let model = PsvmModel {
        input_dim: train.dim(),
        kernel: cfg.kernel,
        support_points,
        coefficients,
        bias,
        link,
        calibration: None,
        metadata: TrainingMetadata {
            method,
            c: cfg.c,
            c_tilde: cfg.c_tilde,
            eta: cfg.precision.eta(),
            seed: None,
            n_hard: n,
            n_soft: s,
            diagnostics: SolverDiagnostics {
                converged: solution.converged,
                iterations: solution.iterations,
                kkt_residual: solution.kkt_residual,
                objective: solution.objective,
            },
            warning,
        },
    };
    Ok(Fit { model, problem, solution, bands })
}

pub fn train_psvm(train: &TrainingSet, cfg: &TrainConfig) -> Result<PsvmModel> {
    fit_psvm(train, cfg).map(|f| f.model)
}

/// Classical SVM: the same dual with an empty soft block.
pub fn train_csvm(train: &TrainingSet, cfg: &TrainConfig) -> Result<PsvmModel> {
    fit_csvm(train, cfg).map(|f| f.model)
}

pub fn fit_csvm(train: &TrainingSet, cfg: &TrainConfig) -> Result<Fit> {
    if train.n_soft() > 0 {
        return Err(Error::InvalidArgument(format!(
            "C-SVM needs hard labels only, found {} soft points",
            train.n_soft()
        )));
    }
    fit_with_method(train, cfg, Method::Csvm)
}

/// `Σ_j θ_j k(x_j, x_i)` at every training point, read off `GΓ`: hard
/// rows carry a factor `y_i`, and the `μ⁻` rows equal the score directly.
pub fn scores_without_bias(problem: &DualProblem, gamma: &[f64]) -> Vec<f64> {
    let n = problem.n_hard();
    let s = problem.n_soft();
    let gg = &problem.g * nalgebra::DVector::from_column_slice(gamma);
    (0..n).map(|i| problem.f[i] * gg[i]).chain((0..s).map(|i| gg[n + s + i])).collect()
}

/// Bias from the KKT conditions.
///
/// Each coordinate `t` proposes `b_t = target_t - score(point_t)`, with
/// target `y_i`, `z⁺_i` or `z⁻_i`. Free multipliers pin `b` exactly and
/// their proposals are averaged. Bound multipliers only give one-sided
/// limits; when nothing is free the midpoint of the resulting interval is
/// used (or its finite end if the other is unbounded, or 0 if both are).
pub fn recover_bias(
    problem: &DualProblem,
    solution: &QPSolution,
    scores_without_b: &[f64],
    tolerance: f64,
) -> Result<f64> {
    let gamma = &solution.gamma;
    let n = problem.n_hard();
    if gamma.len() != problem.len() || scores_without_b.len() != n + problem.n_soft() {
        return Err(Error::InvalidArgument("solution does not match problem".into()));
    }
    let mut low = f64::NEG_INFINITY;
    let mut high = f64::INFINITY;
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for t in 0..gamma.len() {
        let u = problem.upper[t];
        if u <= 0.0 {
            continue;
        }
        let (target, point) = match problem.multiplier(t) {
            Multiplier::Margin(i) => (problem.f[t], i),
            Multiplier::Upper(i) => (-problem.e_tilde[t], n + i),
            Multiplier::Lower(i) => (problem.e_tilde[t], n + i),
        };
        let candidate = target - scores_without_b[point];
        let eps = 1e-12 * u;
        let at_lower = gamma[t] <= eps;
        let at_upper = gamma[t] >= u - eps;
        if !at_lower && !at_upper {
            free_sum += candidate;
            free_count += 1;
            low = low.max(candidate);
            high = high.min(candidate);
            continue;
        }
        // Room to grow along +f gives a lower limit on b, room along -f an upper one.
        let f = problem.f[t];
        let grows_with_f = if f > 0.0 { at_lower } else { at_upper };
        if grows_with_f {
            low = low.max(candidate);
        } else {
            high = high.min(candidate);
        }
    }
    if low > high + tolerance {
        return Err(Error::NumericalInconsistency { low, high });
    }
    Ok(if free_count > 0 {
        free_sum / free_count as f64
    } else {
        match (low.is_finite(), high.is_finite()) {
            (true, true) => 0.5 * (low + high),
            (true, false) => low,
            (false, true) => high,
            (false, false) => 0.0,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalAudit {
    pub xi: Vec<f64>,
    pub xi_minus: Vec<f64>,
    pub xi_plus: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
}

/// Rebuilds the minimal primal slacks for the model's `(w, b)` and
/// compares the primal objective with the dual value.
pub fn audit(
    train: &TrainingSet,
    cfg: &TrainConfig,
    model: &PsvmModel,
    solution: &QPSolution,
) -> Result<PrimalAudit> {
    let n = train.n();
    let s = train.n_soft();
    if solution.gamma.len() != n + 2 * s {
        return Err(Error::InvalidArgument("solution does not match training set".into()));
    }
    let bands = soft_bands(train, &cfg.precision)?;
    let mut w_sq = 0.0;
    for (xi, ti) in model.support_points.iter().zip(&model.coefficients) {
        for (xj, tj) in model.support_points.iter().zip(&model.coefficients) {
            w_sq += ti * tj * model.kernel.eval(xi, xj);
        }
    }
    let xi: Vec<f64> = train
        .hard()
        .iter()
        .map(|(x, y)| (1.0 - f64::from(*y) * model.decision_unchecked(x)).max(0.0))
        .collect();
    let soft_scores: Vec<f64> = train.soft().iter().map(|(x, _)| model.decision_unchecked(x)).collect();
    let xi_minus: Vec<f64> =
        soft_scores.iter().zip(&bands).map(|(sc, b)| (b.z_minus - sc).max(0.0)).collect();
    let xi_plus: Vec<f64> =
        soft_scores.iter().zip(&bands).map(|(sc, b)| (sc - b.z_plus).max(0.0)).collect();

    let primal_objective = 0.5 * w_sq
        + cfg.c * xi.iter().sum::<f64>()
        + cfg.c_tilde * (xi_minus.iter().sum::<f64>() + xi_plus.iter().sum::<f64>());

    let gamma = &solution.gamma;
    let mut dual_objective = -0.5 * w_sq + gamma[..n].iter().sum::<f64>();
    for (i, b) in bands.iter().enumerate() {
        if b.lower_active() {
            dual_objective += gamma[n + s + i] * b.z_minus;
        }
        if b.upper_active() {
            dual_objective -= gamma[n + i] * b.z_plus;
        }
    }
    Ok(PrimalAudit {
        xi,
        xi_minus,
        xi_plus,
        primal_objective,
        dual_objective,
        gap: primal_objective - dual_objective,
    })
}
