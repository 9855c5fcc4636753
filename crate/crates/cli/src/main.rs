//! `psvm`: generate the synthetic data sets, train and apply models, and
//! run the benchmark protocols.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver did not
//! converge under `--strict`.

mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psvm::calibration::fit_platt;
use psvm::dataset::{read_dataset_csv, read_features_csv, write_dataset_csv, LabeledRow, TrainingSet};
use psvm::eval::MetricsReport;
use psvm::experiment::{
    derive_seed, evaluate, make_trial_data, median, run_noise_sweep, run_repro, ExperimentConfig, ExperimentKind,
    PlattMode, SweepRow, TrialOutcome,
};
use psvm::kernel::KernelSpec;
use psvm::model::{train_csvm, train_psvm, Method, PsvmModel, TrainConfig};
use psvm::report::{write_comparison_csv, write_curves_csv, write_predictions_csv, write_sweep_csv};
use serde::Serialize;

use config::{FileConfig, KernelName};

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum KindArg {
    Repro1d,
    Repro2d,
    NoiseSweep,
}

impl From<KindArg> for ExperimentKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Repro1d => ExperimentKind::Repro1d,
            KindArg::Repro2d => ExperimentKind::Repro2d,
            KindArg::NoiseSweep => ExperimentKind::NoiseSweep,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Psvm,
    Csvm,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Psvm => Method::Psvm,
            MethodArg::Csvm => Method::Csvm,
        }
    }
}

const DEFAULT_C: f64 = 100.0;
const DEFAULT_ETA: f64 = 0.1;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    NotConverged(String),
}

impl From<psvm::Error> for Failure {
    fn from(e: psvm::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "psvm", version, about = "SVM training on hard and probabilistic labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ModelFlags {
    /// TOML file with defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long = "C-tilde")]
    c_tilde: Option<f64>,
    /// RBF width (default 0.5 for 1-D data, 1.0 otherwise).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct DataFlags {
    #[arg(long, value_enum)]
    experiment: Option<KindArg>,
    #[arg(long)]
    n_learn: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write train_hard.csv, train_semi.csv and test.csv for one trial.
    Gen {
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        noise_amplitude: Option<f64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write it as JSON.
    Train {
        /// Dataset CSV.
        data: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, value_enum)]
        kernel: Option<KernelName>,
        #[command(flatten)]
        model: ModelFlags,
        /// Exit with status 3 if the solver does not converge.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a CSV of points: x1..xd,score,prob,class.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Dataset CSV or plain numeric CSV.
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy and KL on a labeled CSV; writes metrics.json and curves.csv.
    Eval {
        #[arg(long)]
        model: PathBuf,
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark protocol and write its summary.
    Experiment {
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        model: ModelFlags,
        /// One amplitude, or a comma-separated grid for noise_sweep.
        #[arg(long, value_delimiter = ',')]
        noise_amplitude: Option<Vec<f64>>,
        #[arg(long)]
        repetitions: Option<usize>,
        /// Fit Platt scaling on k-fold out-of-fold scores instead of training scores.
        #[arg(long)]
        platt_folds: Option<usize>,
        #[arg(long)]
        strict: bool,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("PSVM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("PSVM_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Gen { data, model, noise_amplitude, out } => cmd_gen(&data, &model, noise_amplitude, out),
        Command::Train { data, method, kernel, model, strict, out } => {
            cmd_train(&data, method.map(Method::from), kernel, &model, strict, &out)
        }
        Command::Predict { model, data, out } => cmd_predict(&model, &data, &out),
        Command::Eval { model, data, out } => cmd_eval(&model, &data, &out),
        Command::Experiment { data, model, noise_amplitude, repetitions, platt_folds, strict, out } => {
            cmd_experiment(&data, &model, noise_amplitude, repetitions, platt_folds, strict, out)
        }
    }
}

fn load_file(flags: &ModelFlags) -> CliResult<FileConfig> {
    FileConfig::load(flags.config.as_deref()).map_err(Failure::Usage)
}

/// Flags, then the config file, then the per-experiment defaults.
fn experiment_config(
    data: &DataFlags,
    flags: &ModelFlags,
    file: &FileConfig,
    noise: Option<Vec<f64>>,
    repetitions: Option<usize>,
    platt_folds: Option<usize>,
) -> CliResult<ExperimentConfig> {
    let kind = data
        .experiment
        .map(ExperimentKind::from)
        .or(file.experiment)
        .ok_or_else(|| Failure::Usage("--experiment is required (repro1d, repro2d, noise-sweep)".into()))?;
    let mut cfg = ExperimentConfig::defaults(kind);
    cfg.n_learn = data.n_learn.or(file.n_learn).unwrap_or(cfg.n_learn);
    cfg.n_test = data.n_test.or(file.n_test).unwrap_or(cfg.n_test);
    cfg.eta = flags.eta.or(file.eta).unwrap_or(cfg.eta);
    cfg.c = flags.c.or(file.c).unwrap_or(cfg.c);
    cfg.c_tilde = flags.c_tilde.or(file.c_tilde).unwrap_or(cfg.c_tilde);
    cfg.sigma = flags.sigma.or(file.sigma).unwrap_or(cfg.sigma);
    cfg.seed = flags.seed.or(file.seed).unwrap_or(cfg.seed);
    cfg.repetitions = repetitions.or(file.repetitions).unwrap_or(cfg.repetitions);
    if let Some(tol) = file.kkt_tolerance {
        cfg.solver.kkt_tolerance = tol;
    }
    if let Some(max) = file.max_iterations {
        cfg.solver.max_iterations = max;
    }
    if let Some(folds) = platt_folds.or(file.platt_folds) {
        cfg.platt = PlattMode::CrossValidated { folds };
    }
    if let Some(sweep) = file.sweep.clone() {
        cfg.sweep = sweep;
    }
    if let Some(a) = file.noise_amplitude {
        cfg.noise_amplitude = a;
    }
    match (noise, kind) {
        (Some(list), ExperimentKind::NoiseSweep) => cfg.sweep = list,
        (Some(list), _) if list.len() == 1 => cfg.noise_amplitude = list[0],
        (Some(_), _) => {
            return Err(Failure::Usage("a list of noise amplitudes only applies to noise-sweep".into()));
        }
        (None, _) => {}
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn output_dir(flag: Option<PathBuf>, file: &FileConfig) -> CliResult<PathBuf> {
    let dir = flag
        .or_else(|| file.output_dir.clone())
        .ok_or_else(|| Failure::Usage("--out is required".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn cmd_gen(data: &DataFlags, flags: &ModelFlags, noise: Option<f64>, out: Option<PathBuf>) -> CliResult<()> {
    let file = load_file(flags)?;
    let cfg = experiment_config(data, flags, &file, noise.map(|a| vec![a]), None, None)?;
    let dir = output_dir(out, &file)?;
    // Same draw as trial 0 of `experiment` with this seed.
    let trial = make_trial_data(
        &cfg.gaussian(),
        cfg.n_learn,
        cfg.n_test,
        cfg.eta,
        cfg.noise_amplitude,
        derive_seed(cfg.seed, 0),
    )?;
    write_dataset_csv(create(&dir.join("train_hard.csv"))?, &trial.train_hard)?;
    write_dataset_csv(create(&dir.join("train_semi.csv"))?, &trial.train_semi)?;
    write_dataset_csv(create(&dir.join("test.csv"))?, &trial.test)?;
    println!(
        "wrote {} training and {} test rows to {}",
        trial.train_hard.len(),
        trial.test.len(),
        dir.display()
    );
    Ok(())
}

fn read_rows(path: &Path) -> CliResult<Vec<LabeledRow>> {
    let rows = read_dataset_csv(open(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(Failure::Data(format!("{}: no rows", path.display())));
    }
    Ok(rows)
}

fn cmd_train(
    data: &Path,
    method: Option<Method>,
    kernel: Option<KernelName>,
    flags: &ModelFlags,
    strict: bool,
    out: &Path,
) -> CliResult<()> {
    let file = load_file(flags)?;
    let rows = read_rows(data)?;
    let train = TrainingSet::from_rows(&rows)?;
    let method = method.or(file.method).unwrap_or(Method::Psvm);
    let sigma = flags.sigma.or(file.sigma).unwrap_or(if train.dim() == 1 { 0.5 } else { 1.0 });
    let kernel = match kernel.or(file.kernel).unwrap_or(KernelName::Rbf) {
        KernelName::Rbf => KernelSpec::Rbf { sigma },
        KernelName::Linear => KernelSpec::Linear,
    };
    let mut cfg = TrainConfig::new(
        flags.c.or(file.c).unwrap_or(DEFAULT_C),
        flags.c_tilde.or(file.c_tilde).unwrap_or(DEFAULT_C),
        kernel,
        flags.eta.or(file.eta).unwrap_or(DEFAULT_ETA),
    )
    .map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(tol) = file.kkt_tolerance {
        cfg.solver.kkt_tolerance = tol;
    }
    if let Some(max) = file.max_iterations {
        cfg.solver.max_iterations = max;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let mut model = match method {
        Method::Psvm => train_psvm(&train, &cfg)?,
        Method::Csvm => {
            if train.n_soft() > 0 {
                return Err(Failure::Data(format!(
                    "{}: C-SVM needs hard labels only, found {} soft rows",
                    data.display(),
                    train.n_soft()
                )));
            }
            let mut model = train_csvm(&train, &cfg)?;
            let scores = train.hard().iter().map(|(x, _)| model.decision(x)).collect::<psvm::Result<Vec<_>>>()?;
            let labels: Vec<i8> = train.hard().iter().map(|&(_, y)| y).collect();
            model.calibration = Some(fit_platt(&scores, &labels, 100)?);
            model
        }
    };
    model.metadata.seed = flags.seed.or(file.seed);
    model.save(out)?;
    let d = &model.metadata.diagnostics;
    println!(
        "trained {:?} on {} hard / {} soft points: {} support points, {} iterations, KKT residual {:e}",
        method,
        train.n(),
        train.n_soft(),
        model.support_points.len(),
        d.iterations,
        d.kkt_residual
    );
    if let Some(w) = &model.metadata.warning {
        eprintln!("warning: {w}");
        if strict {
            return Err(Failure::NotConverged(w.clone()));
        }
    }
    Ok(())
}

fn load_model(path: &Path) -> CliResult<PsvmModel> {
    PsvmModel::load(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn cmd_predict(model_path: &Path, data: &Path, out: &Path) -> CliResult<()> {
    let model = load_model(model_path)?;
    let features =
        read_features_csv(open(data)?).map_err(|e| Failure::Data(format!("{}: {e}", data.display())))?;
    let scores = features.iter().map(|x| model.decision(x)).collect::<psvm::Result<Vec<_>>>()?;
    let probs: Vec<f64> = scores.iter().map(|&s| model.probability_of_score(s)).collect();
    let classes: Vec<i8> = scores.iter().map(|&s| psvm::model::class_of_score(s)).collect();
    write_predictions_csv(create(out)?, &features, &scores, &probs, &classes)?;
    println!("wrote {} predictions to {}", features.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct ConfigEcho {
    kernel: KernelSpec,
    c: f64,
    c_tilde: f64,
    eta: f64,
    calibration: Option<psvm::PlattParams>,
    model: PathBuf,
    data: PathBuf,
}

#[derive(Serialize)]
struct MetricsFile {
    accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    kl: Option<f64>,
    count: usize,
    method: Method,
    seed: Option<u64>,
    config: ConfigEcho,
}

fn cmd_eval(model_path: &Path, data: &Path, out: &Path) -> CliResult<()> {
    let model = load_model(model_path)?;
    let rows = read_rows(data)?;
    let report = evaluate(&model, &rows, true, |s| model.probability_of_score(s))?;
    let dir = output_dir(Some(out.to_path_buf()), &FileConfig::default())?;
    let features: Vec<_> = rows.iter().map(|r| r.features.clone()).collect();
    write_curves_csv(create(&dir.join("curves.csv"))?, &features, report.per_point.as_deref().unwrap_or(&[]))?;
    let md = &model.metadata;
    let metrics = MetricsFile {
        accuracy: report.accuracy,
        kl: report.kl,
        count: report.count,
        method: md.method,
        seed: md.seed,
        config: ConfigEcho {
            kernel: model.kernel,
            c: md.c,
            c_tilde: md.c_tilde,
            eta: md.eta,
            calibration: model.calibration,
            model: model_path.to_path_buf(),
            data: data.to_path_buf(),
        },
    };
    write_json(&dir.join("metrics.json"), &metrics)?;
    match report.kl {
        Some(kl) => println!("accuracy {:.4}, KL {kl:.4} over {} points", report.accuracy, report.count),
        None => println!("accuracy {:.4} over {} points (no true posteriors, KL omitted)", report.accuracy, report.count),
    }
    Ok(())
}

#[derive(Serialize)]
struct MethodSummary {
    accuracy: f64,
    kl: f64,
}

#[derive(Serialize)]
struct ReproSummary<'a> {
    config: &'a ExperimentConfig,
    median: [(Method, MethodSummary); 2],
    trials: &'a [TrialOutcome],
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    config: &'a ExperimentConfig,
    rows: &'a [SweepRow],
}

fn medians(trials: &[TrialOutcome], method: Method) -> MethodSummary {
    let pick = |f: &dyn Fn(&MetricsReport) -> f64| median(&trials.iter().map(|t| f(t.report(method))).collect::<Vec<_>>());
    MethodSummary { accuracy: pick(&|r| r.accuracy), kl: pick(&|r| r.kl.unwrap_or(f64::NAN)) }
}

fn cmd_experiment(
    data: &DataFlags,
    flags: &ModelFlags,
    noise: Option<Vec<f64>>,
    repetitions: Option<usize>,
    platt_folds: Option<usize>,
    strict: bool,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let file = load_file(flags)?;
    let cfg = experiment_config(data, flags, &file, noise, repetitions, platt_folds)?;
    let dir = output_dir(out, &file)?;
    let trials = match cfg.experiment {
        ExperimentKind::Repro1d | ExperimentKind::Repro2d => {
            let mut trials = run_repro(&cfg)?;
            let first = &trials[0];
            if let (Some(x), Some(p), Some(c)) =
                (&first.test_features, &first.psvm.per_point, &first.csvm.per_point)
            {
                write_comparison_csv(create(&dir.join("curves.csv"))?, x, p, c)?;
            }
            for t in &mut trials {
                t.psvm.per_point = None;
                t.csvm.per_point = None;
            }
            let summary = ReproSummary {
                config: &cfg,
                median: [(Method::Psvm, medians(&trials, Method::Psvm)), (Method::Csvm, medians(&trials, Method::Csvm))],
                trials: &trials,
            };
            write_json(&dir.join("summary.json"), &summary)?;
            for (m, s) in &summary.median {
                println!("{m:?}: median accuracy {:.4}, median KL {:.4}", s.accuracy, s.kl);
            }
            trials
        }
        ExperimentKind::NoiseSweep => {
            let (rows, trials) = run_noise_sweep(&cfg)?;
            write_sweep_csv(create(&dir.join("summary.csv"))?, &rows)?;
            write_json(&dir.join("summary.json"), &SweepSummary { config: &cfg, rows: &rows })?;
            for r in &rows {
                println!(
                    "amplitude {:.2} {:?}: accuracy {:.4} ± {:.4}, KL {:.3} ± {:.3}",
                    r.amplitude, r.method, r.acc_mean, r.acc_std, r.kl_mean, r.kl_std
                );
            }
            trials
        }
    };
    println!("results written to {}", dir.display());
    let stalled = trials.iter().filter(|t| !t.psvm_converged || !t.csvm_converged).count();
    if stalled > 0 {
        let msg = format!("{stalled} of {} trials stopped before the solver converged", trials.len());
        eprintln!("warning: {msg}");
        if strict {
            return Err(Failure::NotConverged(msg));
        }
    }
    Ok(())
}

