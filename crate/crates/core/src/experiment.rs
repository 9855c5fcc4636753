//! Synthetic benchmark protocols comparing the mixed-label SVM with a
//! classical SVM calibrated by Platt scaling.
//!
//! One trial draws a learning set and a test set from a two-Gaussian
//! mixture, optionally perturbs the learning posteriors with uniform
//! noise, and labels them twice: by thresholding at 0.5 (C-SVM input) and
//! by the semi-hard scheme that keeps posteriors within `η` of the middle
//! as soft labels (P-SVM input). Test points are labeled by thresholding
//! their exact posterior.
//!
//! Every trial owns an RNG stream derived from `(seed, trial index)`, so
//! trials run in parallel and are merged by index.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{apply_platt, fit_platt, PlattParams};
use crate::dataset::{
    add_uniform_noise_with, gen_gaussian, label_hard, label_semi, GaussianSpec, Label, LabeledRow,
    Sample, TrainingSet,
};
use crate::error::{Error, Result};
use crate::eval::{MetricsReport, PointRecord};
use crate::kernel::KernelSpec;
use crate::model::{class_of_score, train_csvm, train_psvm, Method, PsvmModel, TrainConfig};
use crate::qp::SolverConfig;

const PLATT_NEWTON_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// 1D, clean posteriors.
    Repro1d,
    /// 2D, noisy posteriors.
    Repro2d,
    /// 2D, grid of noise amplitudes with repetitions.
    NoiseSweep,
}

/// Which scores the Platt map is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlattMode {
    /// Scores of the C-SVM on its own training points.
    #[default]
    Training,
    /// Out-of-fold scores from k-fold cross-validation.
    CrossValidated { folds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n_learn: usize,
    pub n_test: usize,
    pub eta: f64,
    pub c: f64,
    pub c_tilde: f64,
    pub sigma: f64,
    /// Noise amplitude for the single-setting experiments.
    pub noise_amplitude: f64,
    /// Amplitudes visited by the sweep.
    pub sweep: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
    #[serde(default)]
    pub platt: PlattMode,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    /// Defaults: 200 learning and 1000 test points, `C = C̃ = 100`,
    /// `η = 0.1`, RBF width 0.5 in 1D and 1.0 in 2D.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let (sigma, noise, repetitions) = match kind {
            ExperimentKind::Repro1d => (0.5, 0.0, 1),
            ExperimentKind::Repro2d => (1.0, 0.1, 1),
            ExperimentKind::NoiseSweep => (1.0, 0.0, 30),
        };
        ExperimentConfig {
            experiment: kind,
            n_learn: 200,
            n_test: 1000,
            eta: 0.1,
            c: 100.0,
            c_tilde: 100.0,
            sigma,
            noise_amplitude: noise,
            sweep: (0..=10).map(|k| f64::from(k) * 0.05).collect(),
            repetitions,
            seed: 0,
            platt: PlattMode::Training,
            solver: SolverConfig::default(),
        }
    }

    pub fn gaussian(&self) -> GaussianSpec {
        match self.experiment {
            ExperimentKind::Repro1d => GaussianSpec::one_d(),
            ExperimentKind::Repro2d | ExperimentKind::NoiseSweep => GaussianSpec::two_d(),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::new(self.c, self.c_tilde, KernelSpec::Rbf { sigma: self.sigma }, self.eta)?;
        cfg.solver = self.solver;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_learn == 0 || self.n_test == 0 {
            return Err(Error::InvalidArgument("sample counts must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
        }
        if let PlattMode::CrossValidated { folds } = self.platt {
            if folds < 2 {
                return Err(Error::InvalidArgument("cross-validation needs at least 2 folds".into()));
            }
        }
        let amplitudes = std::iter::once(&self.noise_amplitude).chain(&self.sweep);
        if amplitudes.into_iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::InvalidArgument("noise amplitudes must be >= 0".into()));
        }
        self.train_config().map(|_| ())
    }
}

/// Independent seed for job `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Learning data under both labeling schemes, plus the test set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub train_hard: Vec<LabeledRow>,
    pub train_semi: Vec<LabeledRow>,
    pub test: Vec<LabeledRow>,
}

pub fn make_trial_data(
    spec: &GaussianSpec,
    n_learn: usize,
    n_test: usize,
    eta: f64,
    noise_amplitude: f64,
    seed: u64,
) -> Result<TrialData> {
    let learn = gen_gaussian(spec, n_learn, derive_seed(seed, 0))?;
    let test = gen_gaussian(spec, n_test, derive_seed(seed, 1))?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let mut train_hard = Vec::with_capacity(n_learn);
    let mut train_semi = Vec::with_capacity(n_learn);
    for (x, p) in learn {
        let noisy = add_uniform_noise_with(p, noise_amplitude, &mut noise_rng)?;
        train_hard.push(LabeledRow { features: x.clone(), label: label_hard(noisy)?, true_posterior: Some(p) });
        train_semi.push(LabeledRow { features: x, label: label_semi(noisy, eta)?, true_posterior: Some(p) });
    }
    let test = test
        .into_iter()
        .map(|(x, p)| Ok(LabeledRow { features: x, label: label_hard(p)?, true_posterior: Some(p) }))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialData { train_hard, train_semi, test })
}

/// Class truth for an evaluation row: the hard label, or a thresholded soft one.
pub fn truth_of(row: &LabeledRow) -> i8 {
    match row.label {
        Label::Hard(y) => y,
        Label::Soft(p) => {
            if p > 0.5 {
                1
            } else {
                -1
            }
        }
    }
}

/// Scores `rows` with `model`, taking probabilities from `prob`.
pub fn evaluate<F>(model: &PsvmModel, rows: &[LabeledRow], keep_points: bool, prob: F) -> Result<MetricsReport>
where
    F: Fn(f64) -> f64,
{
    let points = rows
        .iter()
        .map(|row| {
            let s = model.decision(&row.features)?;
            Ok(PointRecord {
                true_p: row.true_posterior,
                predicted_p: prob(s),
                true_y: truth_of(row),
                predicted_y: class_of_score(s),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_points(points, keep_points)
}

/// Trains the C-SVM baseline and attaches its Platt map.
pub fn train_calibrated_csvm(train: &TrainingSet, cfg: &TrainConfig, mode: PlattMode) -> Result<PsvmModel> {
    let mut model = train_csvm(train, cfg)?;
    let (scores, labels) = match mode {
        PlattMode::Training => {
            let scores = train
                .hard()
                .iter()
                .map(|(x, _)| model.decision(x))
                .collect::<Result<Vec<_>>>()?;
            (scores, train.hard().iter().map(|&(_, y)| y).collect::<Vec<_>>())
        }
        PlattMode::CrossValidated { folds } => out_of_fold_scores(train, cfg, folds)?,
    };
    model.calibration = Some(fit_platt(&scores, &labels, PLATT_NEWTON_STEPS)?);
    Ok(model)
}

fn out_of_fold_scores(train: &TrainingSet, cfg: &TrainConfig, folds: usize) -> Result<(Vec<f64>, Vec<i8>)> {
    let hard = train.hard();
    let mut scores = Vec::with_capacity(hard.len());
    let mut labels = Vec::with_capacity(hard.len());
    for k in 0..folds {
        let fit_part: Vec<(Sample, i8)> =
            hard.iter().enumerate().filter(|(i, _)| i % folds != k).map(|(_, r)| r.clone()).collect();
        let model = train_csvm(&TrainingSet::new(fit_part, Vec::new())?, cfg)?;
        for (_, (x, y)) in hard.iter().enumerate().filter(|(i, _)| i % folds == k) {
            scores.push(model.decision(x)?);
            labels.push(*y);
        }
    }
    Ok((scores, labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub noise_amplitude: f64,
    pub psvm: MetricsReport,
    pub csvm: MetricsReport,
    pub platt: PlattParams,
    pub psvm_converged: bool,
    pub csvm_converged: bool,
    #[serde(skip)]
    pub test_features: Option<Vec<Sample>>,
}

impl TrialOutcome {
    pub fn report(&self, method: Method) -> &MetricsReport {
        match method {
            Method::Psvm => &self.psvm,
            Method::Csvm => &self.csvm,
        }
    }
}

pub fn run_trial(cfg: &ExperimentConfig, noise_amplitude: f64, seed: u64, keep_points: bool) -> Result<TrialOutcome> {
    let train_cfg = cfg.train_config()?;
    let data = make_trial_data(&cfg.gaussian(), cfg.n_learn, cfg.n_test, cfg.eta, noise_amplitude, seed)?;

    let psvm = train_psvm(&TrainingSet::from_rows(&data.train_semi)?, &train_cfg)?;
    let csvm = train_calibrated_csvm(&TrainingSet::from_rows(&data.train_hard)?, &train_cfg, cfg.platt)?;
    let platt = csvm.calibration.expect("calibrated above");

    let psvm_report = evaluate(&psvm, &data.test, keep_points, |s| psvm.link.prob(s))?;
    let csvm_report = evaluate(&csvm, &data.test, keep_points, |s| apply_platt(&platt, s))?;
    Ok(TrialOutcome {
        seed,
        noise_amplitude,
        psvm: psvm_report,
        csvm: csvm_report,
        platt,
        psvm_converged: psvm.metadata.diagnostics.converged,
        csvm_converged: csvm.metadata.diagnostics.converged,
        test_features: keep_points.then(|| data.test.into_iter().map(|r| r.features).collect()),
    })
}

/// Runs `repetitions` trials at one noise level. Trial `r` uses seed
/// `derive_seed(cfg.seed, r)`; only the first keeps per-point records.
pub fn run_repro(cfg: &ExperimentConfig) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| run_trial(cfg, cfg.noise_amplitude, derive_seed(cfg.seed, r as u64), r == 0))
        .collect()
}

/// Mean and sample standard deviation per (amplitude, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub amplitude: f64,
    pub method: Method,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub kl_mean: f64,
    pub kl_std: f64,
}

/// One row per (amplitude, method), amplitudes in the configured order,
/// P-SVM before C-SVM. Cell `(a, r)` uses seed
/// `derive_seed(cfg.seed, a * repetitions + r)`.
pub fn run_noise_sweep(cfg: &ExperimentConfig) -> Result<(Vec<SweepRow>, Vec<TrialOutcome>)> {
    cfg.validate()?;
    let reps = cfg.repetitions;
    let jobs: Vec<(usize, f64)> =
        cfg.sweep.iter().enumerate().flat_map(|(a, &amp)| (0..reps).map(move |r| (a * reps + r, amp))).collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(cell, amp)| run_trial(cfg, amp, derive_seed(cfg.seed, cell as u64), false))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(2 * cfg.sweep.len());
    for (a, &amp) in cfg.sweep.iter().enumerate() {
        let cell = &outcomes[a * reps..(a + 1) * reps];
        for method in [Method::Psvm, Method::Csvm] {
            let acc: Vec<f64> = cell.iter().map(|o| o.report(method).accuracy).collect();
            let kl: Vec<f64> = cell.iter().map(|o| o.report(method).kl.unwrap_or(f64::NAN)).collect();
            let (acc_mean, acc_std) = mean_std(&acc);
            let (kl_mean, kl_std) = mean_std(&kl);
            rows.push(SweepRow { amplitude: amp, method, acc_mean, acc_std, kl_mean, kl_std });
        }
    }
    Ok((rows, outcomes))
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
