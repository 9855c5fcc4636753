//! Sigmoid link and the score bands that encode soft labels.

use serde::{Deserialize, Serialize};

use crate::dataset::logistic;
use crate::error::{Error, Result};

/// Labelling precision `epsilon` and confidence `delta`. Their sum `eta`
/// is the tolerated probability error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionConfig {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrecisionConfig {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && delta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "precision {epsilon} and confidence {delta} must be non-negative"
            )));
        }
        let cfg = PrecisionConfig { epsilon, delta };
        cfg.validate()?;
        Ok(cfg)
    }

    /// All tolerance attributed to precision, none to confidence.
    pub fn from_eta(eta: f64) -> Result<Self> {
        PrecisionConfig::new(eta, 0.0)
    }

    pub fn eta(&self) -> f64 {
        self.epsilon + self.delta
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.eta();
        if eta > 0.0 && eta < 0.5 {
            Ok(())
        } else {
            Err(Error::DegenerateLink { eta })
        }
    }
}

/// `p(s) = 1 / (1 + exp(-a s))` with `a = ln(1/η - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidLink {
    pub a: f64,
}

impl SigmoidLink {
    pub fn prob(&self, score: f64) -> f64 {
        logistic(self.a * score)
    }

    /// Inverse of [`SigmoidLink::prob`]; `q` must lie in (0, 1).
    pub fn score(&self, q: f64) -> f64 {
        (q / (1.0 - q)).ln() / self.a
    }
}

pub fn link_param(cfg: &PrecisionConfig) -> Result<SigmoidLink> {
    cfg.validate()?;
    let eta = cfg.eta();
    Ok(SigmoidLink { a: (1.0 / eta - 1.0).ln() })
}

pub fn prob_from_score(score: f64, link: &SigmoidLink) -> f64 {
    link.prob(score)
}

/// Score interval whose sigmoid image is `[p - η, p + η]`. An end is
/// infinite when the matching probability bound reaches 0 or 1; the
/// corresponding constraint is then absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetBand {
    pub z_minus: f64,
    pub z_plus: f64,
}

impl TargetBand {
    pub fn lower_active(&self) -> bool {
        self.z_minus.is_finite()
    }

    pub fn upper_active(&self) -> bool {
        self.z_plus.is_finite()
    }

    pub fn contains(&self, score: f64) -> bool {
        self.z_minus <= score && score <= self.z_plus
    }
}

pub fn band(p: f64, cfg: &PrecisionConfig) -> Result<TargetBand> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    let link = link_param(cfg)?;
    let eta = cfg.eta();
    let lo = p - eta;
    let hi = p + eta;
    Ok(TargetBand {
        z_minus: if lo > 0.0 { link.score(lo) } else { f64::NEG_INFINITY },
        z_plus: if hi < 1.0 { link.score(hi) } else { f64::INFINITY },
    })
}
