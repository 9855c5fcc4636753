//! Training sets, synthetic Gaussian generators and labeling schemes.
//!
//! Training points come in two blocks: hard-labeled points first
//! (indices `0..n`), then soft-labeled points (`n..m`). Everything
//! downstream relies on that ordering.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature vector of one point.
pub type Sample = Vec<f64>;

/// Target attached to a training point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Label {
    /// Class label, `-1` or `+1`.
    Hard(i8),
    /// Posterior probability of class `+1`.
    Soft(f64),
}

impl Label {
    pub fn hard(y: i8) -> Result<Self> {
        if y == 1 || y == -1 {
            Ok(Label::Hard(y))
        } else {
            Err(Error::InvalidArgument(format!("hard label must be ±1, got {y}")))
        }
    }

    pub fn soft(p: f64) -> Result<Self> {
        check_probability(p)?;
        Ok(Label::Soft(p))
    }

    pub fn is_hard(&self) -> bool {
        matches!(self, Label::Hard(_))
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")))
    }
}

/// Mixed-supervision training set: hard block then soft block.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    hard: Vec<(Sample, i8)>,
    soft: Vec<(Sample, f64)>,
    dim: usize,
}

impl TrainingSet {
    pub fn new(hard: Vec<(Sample, i8)>, soft: Vec<(Sample, f64)>) -> Result<Self> {
        let dim = hard
            .first()
            .map(|(x, _)| x.len())
            .or_else(|| soft.first().map(|(x, _)| x.len()))
            .ok_or(Error::EmptyTrainingSet)?;
        for x in hard.iter().map(|(x, _)| x).chain(soft.iter().map(|(x, _)| x)) {
            if x.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: x.len() });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite feature value".into()));
            }
        }
        for &(_, y) in &hard {
            Label::hard(y)?;
        }
        for &(_, p) in &soft {
            check_probability(p)?;
        }
        Ok(TrainingSet { hard, soft, dim })
    }

    /// Splits labeled rows into the two blocks, keeping relative order.
    pub fn from_labeled<I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Sample, Label)>,
    {
        let mut hard = Vec::new();
        let mut soft = Vec::new();
        for (x, label) in rows {
            match label {
                Label::Hard(y) => hard.push((x, y)),
                Label::Soft(p) => soft.push((x, p)),
            }
        }
        TrainingSet::new(hard, soft)
    }

    pub fn from_rows(rows: &[LabeledRow]) -> Result<Self> {
        TrainingSet::from_labeled(rows.iter().map(|r| (r.features.clone(), r.label)))
    }

    /// Number of hard-labeled points.
    pub fn n(&self) -> usize {
        self.hard.len()
    }

    /// Total number of points.
    pub fn m(&self) -> usize {
        self.hard.len() + self.soft.len()
    }

    pub fn n_soft(&self) -> usize {
        self.soft.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hard(&self) -> &[(Sample, i8)] {
        &self.hard
    }

    pub fn soft(&self) -> &[(Sample, f64)] {
        &self.soft
    }

    /// Hard labels as reals, in block order.
    pub fn labels(&self) -> Vec<f64> {
        self.hard.iter().map(|&(_, y)| f64::from(y)).collect()
    }

    /// All feature vectors in index order (hard block first).
    pub fn points(&self) -> impl Iterator<Item = &Sample> + '_ {
        self.hard.iter().map(|(x, _)| x).chain(self.soft.iter().map(|(x, _)| x))
    }
}

/// Two isotropic Gaussian classes with a shared variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean_neg: Vec<f64>,
    pub mean_pos: Vec<f64>,
    pub variance: f64,
    #[serde(default = "default_prior")]
    pub prior_pos: f64,
}

fn default_prior() -> f64 {
    0.5
}

impl GaussianSpec {
    /// Unidimensional benchmark: means ±0.5, variance 0.3.
    pub fn one_d() -> Self {
        GaussianSpec { mean_neg: vec![-0.5], mean_pos: vec![0.5], variance: 0.3, prior_pos: 0.5 }
    }

    /// Two-dimensional benchmark: means ±(0.3, 0.5), variance 0.7.
    pub fn two_d() -> Self {
        GaussianSpec {
            mean_neg: vec![-0.3, -0.5],
            mean_pos: vec![0.3, 0.5],
            variance: 0.7,
            prior_pos: 0.5,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean_pos.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean_neg.len() != self.mean_pos.len() || self.mean_pos.is_empty() {
            return Err(Error::InvalidSpec(format!(
                "class means have dimensions {} and {}",
                self.mean_neg.len(),
                self.mean_pos.len()
            )));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::InvalidSpec(format!("variance {} must be positive", self.variance)));
        }
        if !(self.prior_pos > 0.0 && self.prior_pos < 1.0) {
            return Err(Error::InvalidSpec(format!("prior {} outside (0, 1)", self.prior_pos)));
        }
        Ok(())
    }
}

/// Draws `count` points from the mixture, each paired with its Bayes
/// posterior for class `+1`.
pub fn gen_gaussian(spec: &GaussianSpec, count: usize, seed: u64) -> Result<Vec<(Sample, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_gaussian_with(spec, count, &mut rng)
}

pub fn gen_gaussian_with<R: Rng + ?Sized>(
    spec: &GaussianSpec,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(Sample, f64)>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let sd = spec.variance.sqrt();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mean = if rng.random::<f64>() < spec.prior_pos { &spec.mean_pos } else { &spec.mean_neg };
        let x: Sample = mean
            .iter()
            .map(|&mu| mu + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let p = true_posterior(&x, spec)?;
        out.push((x, p));
    }
    Ok(out)
}

/// Bayes posterior `P(y = +1 | x)` under the mixture.
///
/// With equal isotropic variances the log-odds are linear in `x`:
/// `ln(π/(1-π)) + (‖x-μ₋‖² - ‖x-μ₊‖²) / (2σ²)`.
pub fn true_posterior(x: &[f64], spec: &GaussianSpec) -> Result<f64> {
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: x.len() });
    }
    let d_neg: f64 = x.iter().zip(&spec.mean_neg).map(|(a, b)| (a - b).powi(2)).sum();
    let d_pos: f64 = x.iter().zip(&spec.mean_pos).map(|(a, b)| (a - b).powi(2)).sum();
    let log_odds =
        (spec.prior_pos / (1.0 - spec.prior_pos)).ln() + (d_neg - d_pos) / (2.0 * spec.variance);
    Ok(logistic(log_odds))
}

pub(crate) fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Thresholds a posterior at 0.5; ties go to `-1`.
pub fn label_hard(p: f64) -> Result<Label> {
    check_probability(p)?;
    Ok(Label::Hard(if p > 0.5 { 1 } else { -1 }))
}

/// Keeps `p` as a soft label unless it is within `eta` of 0 or 1.
pub fn label_semi(p: f64, eta: f64) -> Result<Label> {
    check_probability(p)?;
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::InvalidArgument(format!("eta {eta} outside (0, 0.5)")));
    }
    Ok(if p > 1.0 - eta {
        Label::Hard(1)
    } else if p < eta {
        Label::Hard(-1)
    } else {
        Label::Soft(p)
    })
}

/// `clamp(p + δ, 0, 1)` with `δ ~ U[-amplitude, amplitude]`.
pub fn add_uniform_noise(p: f64, amplitude: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_uniform_noise_with(p, amplitude, &mut rng)
}

pub fn add_uniform_noise_with<R: Rng + ?Sized>(p: f64, amplitude: f64, rng: &mut R) -> Result<f64> {
    check_probability(p)?;
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise amplitude {amplitude} must be >= 0")));
    }
    if amplitude == 0.0 {
        return Ok(p);
    }
    let delta = rng.random_range(-amplitude..=amplitude);
    Ok((p + delta).clamp(0.0, 1.0))
}

/// One line of the dataset CSV format.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub features: Sample,
    pub label: Label,
    pub true_posterior: Option<f64>,
}

/// Writes rows as `x1,...,xd,label_kind,label_value,true_posterior`.
pub fn write_dataset_csv<W: Write>(writer: W, rows: &[LabeledRow]) -> Result<()> {
    let dim = rows.first().map(|r| r.features.len()).ok_or(Error::EmptyTrainingSet)?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    header.extend(["label_kind", "label_value", "true_posterior"].map(String::from));
    w.write_record(&header)?;
    for row in rows {
        if row.features.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: row.features.len() });
        }
        let mut record: Vec<String> = row.features.iter().map(|v| v.to_string()).collect();
        match row.label {
            Label::Hard(y) => {
                record.push("hard".into());
                record.push(y.to_string());
            }
            Label::Soft(p) => {
                record.push("soft".into());
                record.push(p.to_string());
            }
        }
        record.push(row.true_posterior.map(|p| p.to_string()).unwrap_or_default());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(reader: R) -> Result<Vec<LabeledRow>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = r.headers()?.clone();
    let kind_col = header
        .iter()
        .position(|h| h == "label_kind")
        .ok_or_else(|| Error::Format("missing label_kind column".into()))?;
    if header.get(kind_col + 1) != Some("label_value") {
        return Err(Error::Format("label_value must follow label_kind".into()));
    }
    let posterior_col = header.iter().position(|h| h == "true_posterior");
    let parse = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("line {line}: cannot parse number {s:?}")))
    };
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let features = (0..kind_col)
            .map(|c| parse(&record[c], line))
            .collect::<Result<Vec<_>>>()?;
        let value = &record[kind_col + 1];
        let label = match &record[kind_col] {
            "hard" => {
                let y = parse(value, line)?;
                if y != 1.0 && y != -1.0 {
                    return Err(Error::Format(format!("line {line}: hard label {value}")));
                }
                Label::Hard(y as i8)
            }
            "soft" => Label::soft(parse(value, line)?)?,
            other => return Err(Error::Format(format!("line {line}: label kind {other:?}"))),
        };
        let true_posterior = match posterior_col.map(|c| record.get(c).unwrap_or("")) {
            Some(s) if !s.is_empty() => Some(parse(s, line)?),
            _ => None,
        };
        rows.push(LabeledRow { features, label, true_posterior });
    }
    Ok(rows)
}

/// Feature vectors from either a dataset CSV (columns before
/// `label_kind`) or a plain numeric CSV (every column).
pub fn read_features_csv<R: Read>(reader: R) -> Result<Vec<Sample>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = r.headers()?.clone();
    let dim = header.iter().position(|h| h == "label_kind").unwrap_or(header.len());
    if dim == 0 {
        return Err(Error::Format("no feature columns".into()));
    }
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let x = (0..dim)
            .map(|c| {
                let s = record.get(c).unwrap_or("");
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: cannot parse number {s:?}", i + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_pdf(x: &[f64], mean: &[f64], var: f64) -> f64 {
        let d2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum();
        let k = x.len() as f64;
        (-d2 / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).powf(k / 2.0)
    }

    #[test]
    fn posterior_is_half_at_midpoint() {
        let p = true_posterior(&[0.0], &GaussianSpec::one_d()).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn posterior_matches_density_ratio() {
        let spec = GaussianSpec::one_d();
        let x = [0.3];
        let pos = normal_pdf(&x, &spec.mean_pos, spec.variance);
        let neg = normal_pdf(&x, &spec.mean_neg, spec.variance);
        let direct = pos / (pos + neg);
        let closed = 1.0 / (1.0 + (-1.0f64).exp());
        let p = true_posterior(&x, &spec).unwrap();
        assert!((direct - closed).abs() < 1e-12);
        assert!((p - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((p - direct).abs() < 1e-12);
    }

    #[test]
    fn posterior_density_ratio_2d_with_prior() {
        let mut spec = GaussianSpec::two_d();
        spec.prior_pos = 0.3;
        for x in [[0.1, -0.4], [1.5, 2.0], [-2.0, 0.7]] {
            let pos = 0.3 * normal_pdf(&x, &spec.mean_pos, spec.variance);
            let neg = 0.7 * normal_pdf(&x, &spec.mean_neg, spec.variance);
            let p = true_posterior(&x, &spec).unwrap();
            assert!((p - pos / (pos + neg)).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_mirror_symmetry() {
        let spec = GaussianSpec::one_d();
        let a = true_posterior(&spec.mean_pos, &spec).unwrap();
        let b = true_posterior(&spec.mean_neg, &spec).unwrap();
        assert!((a + b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn posterior_dimension_checked() {
        assert!(matches!(
            true_posterior(&[0.0, 1.0], &GaussianSpec::one_d()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn generator_rejects_bad_input() {
        assert!(matches!(
            gen_gaussian(&GaussianSpec::one_d(), 0, 1),
            Err(Error::InvalidArgument(_))
        ));
        let mut spec = GaussianSpec::one_d();
        spec.variance = 0.0;
        assert!(matches!(gen_gaussian(&spec, 10, 1), Err(Error::InvalidSpec(_))));
        spec.variance = -1.0;
        assert!(matches!(gen_gaussian(&spec, 10, 1), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn generator_is_deterministic() {
        let a = gen_gaussian(&GaussianSpec::two_d(), 50, 42).unwrap();
        let b = gen_gaussian(&GaussianSpec::two_d(), 50, 42).unwrap();
        let c = gen_gaussian(&GaussianSpec::two_d(), 50, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn generator_class_balance() {
        // Fraction of points right of the midpoint, pooled over seeds.
        let spec = GaussianSpec::one_d();
        let mut pos = 0usize;
        let mut total = 0usize;
        for seed in 0..50 {
            let data = gen_gaussian(&spec, 200, seed).unwrap();
            assert_eq!(data.len(), 200);
            pos += data.iter().filter(|(_, p)| *p > 0.5).count();
            total += data.len();
        }
        let frac = pos as f64 / total as f64;
        assert!((frac - 0.5).abs() < 0.02, "fraction {frac}");
    }

    #[test]
    fn hard_labeling() {
        assert_eq!(label_hard(0.9).unwrap(), Label::Hard(1));
        assert_eq!(label_hard(0.5).unwrap(), Label::Hard(-1));
        assert_eq!(label_hard(0.0).unwrap(), Label::Hard(-1));
        assert!(label_hard(1.2).is_err());
        assert!(label_hard(-0.1).is_err());
    }

    #[test]
    fn semi_labeling() {
        assert_eq!(label_semi(0.95, 0.1).unwrap(), Label::Hard(1));
        assert_eq!(label_semi(0.05, 0.1).unwrap(), Label::Hard(-1));
        assert_eq!(label_semi(0.5, 0.1).unwrap(), Label::Soft(0.5));
        assert_eq!(label_semi(0.9, 0.1).unwrap(), Label::Soft(0.9));
        assert!(label_semi(0.5, 0.5).is_err());
        assert!(label_semi(0.5, 0.0).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        assert_eq!(add_uniform_noise(0.37, 0.0, 9).unwrap(), 0.37);
    }

    #[test]
    fn noise_clamps() {
        for seed in 0..200 {
            let v = add_uniform_noise(1.0, 0.3, seed).unwrap();
            assert!((0.7..=1.0).contains(&v));
            let v = add_uniform_noise(0.0, 0.3, seed).unwrap();
            assert!((0.0..=0.3).contains(&v));
        }
        assert!(add_uniform_noise(0.5, -0.1, 0).is_err());
    }

    #[test]
    fn noise_is_centered() {
        // U[-a, a] has standard deviation a/√3.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let amp = 0.1;
        let mean = (0..draws)
            .map(|_| add_uniform_noise_with(0.5, amp, &mut rng).unwrap() - 0.5)
            .sum::<f64>()
            / draws as f64;
        let se = amp / 3f64.sqrt() / (draws as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn training_set_blocks() {
        let set = TrainingSet::from_labeled(vec![
            (vec![1.0], Label::Soft(0.4)),
            (vec![2.0], Label::Hard(1)),
            (vec![3.0], Label::Hard(-1)),
        ])
        .unwrap();
        assert_eq!(set.n(), 2);
        assert_eq!(set.m(), 3);
        let xs: Vec<f64> = set.points().map(|x| x[0]).collect();
        assert_eq!(xs, vec![2.0, 3.0, 1.0]);
        assert!(TrainingSet::new(vec![], vec![]).is_err());
        assert!(matches!(
            TrainingSet::new(vec![(vec![1.0], 1)], vec![(vec![1.0, 2.0], 0.5)]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(TrainingSet::new(vec![(vec![1.0], 2)], vec![]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            LabeledRow { features: vec![0.1, -2.5], label: Label::Hard(-1), true_posterior: Some(0.2) },
            LabeledRow {
                features: vec![1.0 / 3.0, 7.0],
                label: Label::Soft(0.123_456_789_012_345_67),
                true_posterior: None,
            },
        ];
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,label_kind,label_value,true_posterior\n"));
        assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn csv_without_posterior_column() {
        let text = "x1,label_kind,label_value\n0.5,hard,1\n-0.5,soft,0.3\n";
        let rows = read_dataset_csv(text.as_bytes()).unwrap();
        assert_eq!(rows[0].label, Label::Hard(1));
        assert_eq!(rows[1].label, Label::Soft(0.3));
        assert!(rows.iter().all(|r| r.true_posterior.is_none()));
        assert!(read_dataset_csv("x1,label_kind,label_value\n0.5,hard,2\n".as_bytes()).is_err());
        assert!(read_dataset_csv("x1,label_kind,label_value\n0.5,soft,1.5\n".as_bytes()).is_err());
    }

    #[test]
    fn features_from_either_layout() {
        let labeled = "x1,x2,label_kind,label_value,true_posterior\n1,2,hard,1,\n3,4,soft,0.5,0.5\n";
        assert_eq!(read_features_csv(labeled.as_bytes()).unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let plain = "a,b,c\n1,2,3\n";
        assert_eq!(read_features_csv(plain.as_bytes()).unwrap(), vec![vec![1.0, 2.0, 3.0]]);
        assert!(read_features_csv("x1\nfoo\n".as_bytes()).is_err());
    }
}
