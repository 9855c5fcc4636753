//! Accuracy and the KL score used in the benchmarks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to predicted probabilities before taking ratios.
pub const PREDICTION_FLOOR: f64 = 1e-12;

pub fn accuracy(predicted: &[i8], truth: &[i8]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), found: predicted.len() });
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// `Σ p_i ln(p_i / q_i)` over points, positive class only.
///
/// This is not the full binary divergence: the `(1-p) ln((1-p)/(1-q))`
/// term is absent, so individual terms (and the sum) can be negative when
/// predictions overshoot. Terms with `p_i = 0` count as zero.
pub fn kl_truncated(true_p: &[f64], pred_p: &[f64]) -> Result<f64> {
    if true_p.len() != pred_p.len() {
        return Err(Error::DimensionMismatch { expected: true_p.len(), found: pred_p.len() });
    }
    Ok(true_p
        .iter()
        .zip(pred_p)
        .filter(|(p, _)| **p > 0.0)
        .map(|(&p, &q)| p * (p / q.clamp(PREDICTION_FLOOR, 1.0)).ln())
        .sum())
}

/// Full Bernoulli divergence summed over points; diagnostic only.
pub fn kl_binary(true_p: &[f64], pred_p: &[f64]) -> Result<f64> {
    if true_p.len() != pred_p.len() {
        return Err(Error::DimensionMismatch { expected: true_p.len(), found: pred_p.len() });
    }
    let term = |p: f64, q: f64| if p > 0.0 { p * (p / q).ln() } else { 0.0 };
    Ok(true_p
        .iter()
        .zip(pred_p)
        .map(|(&p, &q)| {
            let q = q.clamp(PREDICTION_FLOOR, 1.0 - PREDICTION_FLOOR);
            term(p, q) + term(1.0 - p, 1.0 - q)
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub true_p: Option<f64>,
    pub predicted_p: f64,
    pub true_y: i8,
    pub predicted_y: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Absent when the evaluated set has no true posteriors.
    pub kl: Option<f64>,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_point: Option<Vec<PointRecord>>,
}

impl MetricsReport {
    /// KL is reported only when every point carries a true posterior.
    pub fn from_points(points: Vec<PointRecord>, keep_points: bool) -> Result<Self> {
        let count = points.len();
        let truth: Vec<i8> = points.iter().map(|p| p.true_y).collect();
        let pred: Vec<i8> = points.iter().map(|p| p.predicted_y).collect();
        let accuracy = accuracy(&pred, &truth)?;
        let true_p: Option<Vec<f64>> = points.iter().map(|p| p.true_p).collect();
        let kl = match true_p {
            Some(tp) if !tp.is_empty() => {
                let q: Vec<f64> = points.iter().map(|p| p.predicted_p).collect();
                Some(kl_truncated(&tp, &q)?)
            }
            _ => None,
        };
        Ok(MetricsReport { accuracy, kl, count, per_point: keep_points.then_some(points) })
    }
}
