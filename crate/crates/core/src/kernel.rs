//! Kernels and assembly of the dual QP.
//!
//! The dual variable is `Γ = [α (n); μ⁺ (m-n); μ⁻ (m-n)]`. With the
//! expansion `w = Σ α_i y_i φ(x_i) - Σ (μ⁺_i - μ⁻_i) φ(x_i)`, the Hessian
//! `G` has the block layout
//!
//! ```text
//!  K1   -K2   K2
//! -K2ᵀ   K3  -K3
//!  K2ᵀ  -K3   K3
//! ```
//!
//! with `K1 = (y_i y_j k_ij)`, `K2 = (y_i k_ij)` and `K3 = (k_ij)`.
//! `G` is stored densely; lazy row evaluation would be needed for much
//! larger sets than the ones targeted here.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::TargetBand;
use crate::dataset::TrainingSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    /// `exp(-‖u - v‖² / (2σ²))`
    Rbf { sigma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidArgument(format!("rbf sigma {sigma} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Unchecked evaluation; callers guarantee equal lengths.
    #[inline]
    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), v.len());
        match *self {
            KernelSpec::Linear => u.iter().zip(v).map(|(a, b)| a * b).sum(),
            KernelSpec::Rbf { sigma } => {
                let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

pub fn eval_kernel(spec: &KernelSpec, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), found: v.len() });
    }
    spec.validate()?;
    Ok(spec.eval(u, v))
}

/// Full kernel matrix over a list of points.
pub fn gram(spec: &KernelSpec, points: &[&[f64]]) -> DMatrix<f64> {
    let m = points.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = spec.eval(points[i], points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramBlocks {
    /// `y_i y_j k(x_i, x_j)` over the hard block.
    pub k1: DMatrix<f64>,
    /// `y_i k(x_i, x_j)`, hard rows, soft columns.
    pub k2: DMatrix<f64>,
    /// `k(x_i, x_j)` over the soft block.
    pub k3: DMatrix<f64>,
}

pub fn build_blocks(train: &TrainingSet, spec: &KernelSpec) -> Result<GramBlocks> {
    spec.validate()?;
    if train.m() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let n = train.n();
    let s = train.n_soft();
    let points: Vec<&[f64]> = train.points().map(|x| x.as_slice()).collect();
    let k = gram(spec, &points);
    let y = train.labels();
    let k1 = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let k2 = DMatrix::from_fn(n, s, |i, j| y[i] * k[(i, n + j)]);
    let k3 = k.view((n, n), (s, s)).into_owned();
    Ok(GramBlocks { k1, k2, k3 })
}

/// `min ½ ΓᵀGΓ - ẽᵀΓ  s.t.  fᵀΓ = 0, 0 ≤ Γ ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualProblem {
    pub g: DMatrix<f64>,
    pub e_tilde: Vec<f64>,
    pub f: Vec<f64>,
    pub upper: Vec<f64>,
    /// Per soft point: whether the `μ⁺` (first) and `μ⁻` (second)
    /// constraints exist.
    pub band_active: Vec<(bool, bool)>,
    n_hard: usize,
    n_soft: usize,
}

/// What a dual coordinate multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Multiplier {
    /// `α_i` for hard point `i`.
    Margin(usize),
    /// `μ⁺_i` for soft point `i` (index within the soft block).
    Upper(usize),
    /// `μ⁻_i` for soft point `i`.
    Lower(usize),
}

impl DualProblem {
    /// A bare QP in the same form, without the training-set layout: every
    /// coordinate is treated as a margin multiplier.
    pub fn from_parts(
        g: DMatrix<f64>,
        e_tilde: Vec<f64>,
        f: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let len = e_tilde.len();
        let problem =
            DualProblem { g, e_tilde, f, upper, band_active: Vec::new(), n_hard: len, n_soft: 0 };
        problem.validate()?;
        Ok(problem)
    }

    pub fn len(&self) -> usize {
        self.e_tilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_tilde.is_empty()
    }

    pub fn n_hard(&self) -> usize {
        self.n_hard
    }

    pub fn n_soft(&self) -> usize {
        self.n_soft
    }

    pub fn multiplier(&self, t: usize) -> Multiplier {
        let (n, s) = (self.n_hard, self.n_soft);
        if t < n {
            Multiplier::Margin(t)
        } else if t < n + s {
            Multiplier::Upper(t - n)
        } else {
            Multiplier::Lower(t - n - s)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.len();
        if self.g.nrows() != len || self.g.ncols() != len {
            return Err(Error::InvalidArgument(format!(
                "G is {}x{}, expected {len}x{len}",
                self.g.nrows(),
                self.g.ncols()
            )));
        }
        if self.f.len() != len || self.upper.len() != len {
            return Err(Error::InvalidArgument("f, ẽ and upper must have equal length".into()));
        }
        if self.n_hard + 2 * self.n_soft != len {
            return Err(Error::InvalidArgument("layout does not match problem size".into()));
        }
        if self.f.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidArgument("f entries must be ±1".into()));
        }
        if self.upper.iter().any(|&u| !(u >= 0.0 && u.is_finite())) {
            return Err(Error::InvalidArgument("upper bounds must be finite and >= 0".into()));
        }
        if self.e_tilde.iter().any(|v| !v.is_finite()) || self.g.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite problem data".into()));
        }
        Ok(())
    }

    pub fn objective(&self, gamma: &[f64]) -> f64 {
        let gg = &self.g * nalgebra::DVector::from_column_slice(gamma);
        let quad: f64 = gamma.iter().zip(gg.iter()).map(|(a, b)| a * b).sum();
        let lin: f64 = gamma.iter().zip(&self.e_tilde).map(|(a, b)| a * b).sum();
        0.5 * quad - lin
    }

    /// `GΓ - ẽ`.
    pub fn gradient(&self, gamma: &[f64]) -> Vec<f64> {
        let gg = &self.g * nalgebra::DVector::from_column_slice(gamma);
        gg.iter().zip(&self.e_tilde).map(|(a, e)| a - e).collect()
    }

    /// `fᵀΓ`.
    pub fn balance(&self, gamma: &[f64]) -> f64 {
        gamma.iter().zip(&self.f).map(|(a, b)| a * b).sum()
    }
}

/// Builds `G`, `ẽ`, `f` and the box from the Gram blocks and bands.
/// Band ends at infinity pin the matching multiplier to zero.
pub fn assemble(
    blocks: &GramBlocks,
    bands: &[TargetBand],
    c: f64,
    c_tilde: f64,
    y: &[f64],
) -> Result<DualProblem> {
    if !(c > 0.0 && c.is_finite() && c_tilde > 0.0 && c_tilde.is_finite()) {
        return Err(Error::InvalidArgument(format!("C = {c} and C̃ = {c_tilde} must be positive")));
    }
    let n = blocks.k1.nrows();
    let s = blocks.k3.nrows();
    if y.len() != n || bands.len() != s || blocks.k2.shape() != (n, s) {
        return Err(Error::InvalidArgument(format!(
            "inconsistent sizes: {n} hard, {s} soft, {} labels, {} bands",
            y.len(),
            bands.len()
        )));
    }
    let len = n + 2 * s;
    let mut g = DMatrix::zeros(len, len);
    let (up, lo) = (n, n + s);
    g.view_mut((0, 0), (n, n)).copy_from(&blocks.k1);
    g.view_mut((0, up), (n, s)).copy_from(&(-&blocks.k2));
    g.view_mut((0, lo), (n, s)).copy_from(&blocks.k2);
    let k2t = blocks.k2.transpose();
    g.view_mut((up, 0), (s, n)).copy_from(&(-&k2t));
    g.view_mut((lo, 0), (s, n)).copy_from(&k2t);
    g.view_mut((up, up), (s, s)).copy_from(&blocks.k3);
    g.view_mut((up, lo), (s, s)).copy_from(&(-&blocks.k3));
    g.view_mut((lo, up), (s, s)).copy_from(&(-&blocks.k3));
    g.view_mut((lo, lo), (s, s)).copy_from(&blocks.k3);

    let mut e_tilde = vec![1.0; len];
    let mut f = vec![0.0; len];
    let mut upper = vec![c; len];
    f[..n].copy_from_slice(y);
    let mut band_active = Vec::with_capacity(s);
    for (i, b) in bands.iter().enumerate() {
        f[up + i] = -1.0;
        f[lo + i] = 1.0;
        let (ua, la) = (b.upper_active(), b.lower_active());
        e_tilde[up + i] = if ua { -b.z_plus } else { 0.0 };
        e_tilde[lo + i] = if la { b.z_minus } else { 0.0 };
        upper[up + i] = if ua { c_tilde } else { 0.0 };
        upper[lo + i] = if la { c_tilde } else { 0.0 };
        band_active.push((ua, la));
    }
    let problem = DualProblem { g, e_tilde, f, upper, band_active, n_hard: n, n_soft: s };
    problem.validate()?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{band, PrecisionConfig};

    #[test]
    fn kernel_values() {
        let rbf = KernelSpec::Rbf { sigma: 1.0 };
        assert_eq!(eval_kernel(&rbf, &[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        let v = eval_kernel(&rbf, &[0.0], &[2.0]).unwrap();
        assert!((v - 0.135_335_283_236_612_7).abs() < 1e-15);
        assert_eq!(eval_kernel(&KernelSpec::Linear, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert!(matches!(
            eval_kernel(&KernelSpec::Linear, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(eval_kernel(&KernelSpec::Rbf { sigma: 0.0 }, &[1.0], &[1.0]).is_err());
    }

    fn tiny_set() -> TrainingSet {
        TrainingSet::new(vec![(vec![1.0], 1)], vec![(vec![2.0], 0.5)]).unwrap()
    }

    #[test]
    fn blocks_by_hand() {
        let b = build_blocks(&tiny_set(), &KernelSpec::Linear).unwrap();
        assert_eq!(b.k1, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(b.k2, DMatrix::from_element(1, 1, 2.0));
        assert_eq!(b.k3, DMatrix::from_element(1, 1, 4.0));
    }

    #[test]
    fn label_flip_flips_signs() {
        let hard = vec![(vec![1.0], 1), (vec![-0.5], -1), (vec![0.2], 1)];
        let soft = vec![(vec![0.7], 0.3), (vec![-1.2], 0.6)];
        let spec = KernelSpec::Rbf { sigma: 0.8 };
        let a = build_blocks(&TrainingSet::new(hard.clone(), soft.clone()).unwrap(), &spec).unwrap();
        let mut flipped = hard;
        flipped[1].1 = 1;
        let b = build_blocks(&TrainingSet::new(flipped, soft).unwrap(), &spec).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let sign = if (i == 1) ^ (j == 1) { -1.0 } else { 1.0 };
                assert_eq!(b.k1[(i, j)], sign * a.k1[(i, j)]);
            }
            for j in 0..2 {
                let sign = if i == 1 { -1.0 } else { 1.0 };
                assert_eq!(b.k2[(i, j)], sign * a.k2[(i, j)]);
            }
        }
        assert_eq!(a.k3, b.k3);
    }

    #[test]
    fn assembled_g_by_hand() {
        let blocks = build_blocks(&tiny_set(), &KernelSpec::Linear).unwrap();
        let cfg = PrecisionConfig::from_eta(0.1).unwrap();
        let bands = vec![band(0.5, &cfg).unwrap()];
        let p = assemble(&blocks, &bands, 100.0, 50.0, &[1.0]).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 2.0, -2.0, 4.0, -4.0, 2.0, -4.0, 4.0]);
        assert_eq!(p.g, expected);
        assert_eq!(p.f, vec![1.0, -1.0, 1.0]);
        assert_eq!(p.upper, vec![100.0, 50.0, 50.0]);
        assert_eq!(p.e_tilde[0], 1.0);
        assert_eq!(p.e_tilde[1], -bands[0].z_plus);
        assert_eq!(p.e_tilde[2], bands[0].z_minus);
        assert_eq!(p.multiplier(0), Multiplier::Margin(0));
        assert_eq!(p.multiplier(1), Multiplier::Upper(0));
        assert_eq!(p.multiplier(2), Multiplier::Lower(0));
    }

    #[test]
    fn hard_only_is_classical_dual() {
        let set = TrainingSet::new(vec![(vec![1.0, 0.0], 1), (vec![0.0, 1.0], -1)], vec![]).unwrap();
        let blocks = build_blocks(&set, &KernelSpec::Rbf { sigma: 1.0 }).unwrap();
        assert_eq!(blocks.k2.shape(), (2, 0));
        assert_eq!(blocks.k3.shape(), (0, 0));
        let p = assemble(&blocks, &[], 10.0, 10.0, &set.labels()).unwrap();
        assert_eq!(p.g, blocks.k1);
        assert_eq!(p.e_tilde, vec![1.0, 1.0]);
        assert_eq!(p.f, vec![1.0, -1.0]);
    }

    #[test]
    fn clamped_band_pins_multiplier() {
        let set = TrainingSet::new(vec![], vec![(vec![0.0], 0.95), (vec![1.0], 0.02)]).unwrap();
        let cfg = PrecisionConfig::from_eta(0.1).unwrap();
        let bands: Vec<_> = set.soft().iter().map(|&(_, p)| band(p, &cfg).unwrap()).collect();
        let blocks = build_blocks(&set, &KernelSpec::Linear).unwrap();
        let p = assemble(&blocks, &bands, 1.0, 1.0, &[]).unwrap();
        // Layout: [μ⁺_0, μ⁺_1, μ⁻_0, μ⁻_1].
        assert_eq!(p.upper, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(p.band_active, vec![(false, true), (true, false)]);
        assert!(p.e_tilde.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn assemble_rejects_bad_costs() {
        let blocks = build_blocks(&tiny_set(), &KernelSpec::Linear).unwrap();
        let cfg = PrecisionConfig::from_eta(0.1).unwrap();
        let bands = vec![band(0.5, &cfg).unwrap()];
        assert!(assemble(&blocks, &bands, 0.0, 1.0, &[1.0]).is_err());
        assert!(assemble(&blocks, &bands, 1.0, -1.0, &[1.0]).is_err());
        assert!(assemble(&blocks, &[], 1.0, 1.0, &[1.0]).is_err());
    }
}
