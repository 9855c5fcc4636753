#![allow(dead_code)]

use psvm::bounds::{band, PrecisionConfig};
use psvm::dataset::{gen_gaussian_with, GaussianSpec, TrainingSet};
use psvm::kernel::{assemble, build_blocks, DualProblem, KernelSpec};
use psvm::model::TrainConfig;
use rand::Rng;
use rand_distr::StandardNormal;

pub const ETAS: [f64; 3] = [0.05, 0.1, 0.25];

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

pub fn random_point<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn random_kernel<R: Rng>(rng: &mut R) -> KernelSpec {
    if rng.random_bool(0.5) {
        KernelSpec::Linear
    } else {
        KernelSpec::Rbf { sigma: rng.random_range(0.3..2.0) }
    }
}

/// Soft label drawn so that some bands are clamped at 0 or 1.
pub fn random_soft_label<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..6) {
        0 => rng.random_range(0.0..0.05),
        1 => rng.random_range(0.95..1.0),
        _ => rng.random_range(0.0..1.0),
    }
}

pub fn random_training_set<R: Rng>(rng: &mut R, n_hard: usize, n_soft: usize, dim: usize) -> TrainingSet {
    let hard = (0..n_hard).map(|_| (random_point(rng, dim), if rng.random_bool(0.5) { 1 } else { -1 })).collect();
    let soft = (0..n_soft).map(|_| (random_point(rng, dim), random_soft_label(rng))).collect();
    TrainingSet::new(hard, soft).unwrap()
}

/// Mixture sample with hard labels drawn from the posterior on the first
/// `n_hard` points and the posterior itself on the rest.
pub fn mixture_training_set<R: Rng>(rng: &mut R, n_hard: usize, n_soft: usize) -> TrainingSet {
    let spec = GaussianSpec::two_d();
    let draws = gen_gaussian_with(&spec, n_hard + n_soft, rng).unwrap();
    let mut hard = Vec::new();
    let mut soft = Vec::new();
    for (k, (x, p)) in draws.into_iter().enumerate() {
        if k < n_hard {
            hard.push((x, if rng.random::<f64>() < p { 1 } else { -1 }));
        } else {
            soft.push((x, p));
        }
    }
    TrainingSet::new(hard, soft).unwrap()
}

pub struct Instance {
    pub train: TrainingSet,
    pub cfg: TrainConfig,
    pub problem: DualProblem,
}

/// Random small dual: up to 8 hard and 6 soft points.
pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let (n_hard, n_soft) = loop {
        let pair = (rng.random_range(0..=8), rng.random_range(0..=6));
        if pair.0 + pair.1 > 0 {
            break pair;
        }
    };
    let dim = rng.random_range(1..=3);
    let train = random_training_set(rng, n_hard, n_soft, dim);
    let eta = ETAS[rng.random_range(0..ETAS.len())];
    let cfg = TrainConfig::new(log_uniform(rng, 0.1, 100.0), log_uniform(rng, 0.1, 100.0), random_kernel(rng), eta)
        .unwrap();
    let problem = assemble_for(&train, &cfg);
    Instance { train, cfg, problem }
}

pub fn assemble_for(train: &TrainingSet, cfg: &TrainConfig) -> DualProblem {
    let precision = PrecisionConfig::from_eta(cfg.precision.eta()).unwrap();
    let bands: Vec<_> = train.soft().iter().map(|&(_, p)| band(p, &precision).unwrap()).collect();
    let blocks = build_blocks(train, &cfg.kernel).unwrap();
    assemble(&blocks, &bands, cfg.c, cfg.c_tilde, &train.labels()).unwrap()
}

/// Box and equality feasibility of a dual point.
pub fn feasibility_violation(problem: &DualProblem, gamma: &[f64]) -> Option<String> {
    for (t, (&g, &u)) in gamma.iter().zip(&problem.upper).enumerate() {
        if !(0.0..=u).contains(&g) {
            return Some(format!("coordinate {t} = {g} outside [0, {u}]"));
        }
    }
    let l1: f64 = gamma.iter().sum();
    let balance = problem.balance(gamma);
    if balance.abs() > 1e-9 * (1.0 + l1) {
        return Some(format!("equality residual {balance:e}"));
    }
    None
}
