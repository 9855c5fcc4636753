//! Platt scaling: `P(y = 1 | s) = 1 / (1 + exp(A s + B))`.
//!
//! Fitted by Newton's method with backtracking on the cross-entropy
//! against Platt's smoothed targets `t⁺ = (N⁺ + 1)/(N⁺ + 2)` and
//! `t⁻ = 1/(N⁻ + 2)`, following Lin, Lin and Weng's stable formulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRADIENT_TOLERANCE: f64 = 1e-8;
const MIN_STEP: f64 = 1e-10;
const HESSIAN_RIDGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    /// Score-independent map predicting `rate` everywhere.
    pub fn constant(rate: f64) -> Self {
        PlattParams { a: 0.0, b: ((1.0 - rate) / rate).ln() }
    }
}

pub fn apply_platt(params: &PlattParams, score: f64) -> f64 {
    let z = params.a * score + params.b;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Smoothed targets `(t⁻, t⁺)` for the given class counts.
pub fn platt_targets(n_neg: usize, n_pos: usize) -> (f64, f64) {
    (1.0 / (n_neg as f64 + 2.0), (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0))
}

fn targets(labels: &[i8]) -> Result<Vec<f64>> {
    let n_pos = labels.iter().filter(|&&y| y > 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("Platt scaling needs both classes".into()));
    }
    let (lo, hi) = platt_targets(n_neg, n_pos);
    Ok(labels.iter().map(|&y| if y > 0 { hi } else { lo }).collect())
}

fn nll_with_targets(a: f64, b: f64, scores: &[f64], t: &[f64]) -> f64 {
    scores
        .iter()
        .zip(t)
        .map(|(&s, &ti)| {
            let z = s * a + b;
            if z >= 0.0 {
                ti * z + (-z).exp().ln_1p()
            } else {
                (ti - 1.0) * z + z.exp().ln_1p()
            }
        })
        .sum()
}

/// Cross-entropy of `params` against the smoothed targets.
pub fn platt_nll(params: &PlattParams, scores: &[f64], labels: &[i8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), found: labels.len() });
    }
    Ok(nll_with_targets(params.a, params.b, scores, &targets(labels)?))
}

pub fn fit_platt(scores: &[f64], labels: &[i8], max_newton_steps: usize) -> Result<PlattParams> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), found: labels.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score".into()));
    }
    let t = targets(labels)?;
    let n_pos = labels.iter().filter(|&&y| y > 0).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;

    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let mut fval = nll_with_targets(a, b, scores, &t);

    for _ in 0..max_newton_steps {
        let (mut h11, mut h22, mut h21) = (HESSIAN_RIDGE, HESSIAN_RIDGE, 0.0);
        let (mut g1, mut g2) = (0.0, 0.0);
        for (&s, &ti) in scores.iter().zip(&t) {
            let z = s * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += s * s * d2;
            h22 += d2;
            h21 += s * d2;
            let d1 = ti - p;
            g1 += s * d1;
            g2 += d1;
        }
        if g1.abs() < GRADIENT_TOLERANCE && g2.abs() < GRADIENT_TOLERANCE {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;

        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = nll_with_targets(na, nb, scores, &t);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    Ok(PlattParams { a, b })
}
