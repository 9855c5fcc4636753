//! Solvers for `min ½ ΓᵀGΓ - ẽᵀΓ  s.t.  fᵀΓ = 0, 0 ≤ Γ ≤ u` with `f ∈ {±1}ⁿ`.
//!
//! [`solve_smo`] is the production solver: a two-coordinate working-set
//! method with maximal-violating-pair selection. [`solve_reference`] is a
//! slow accelerated projected-gradient method used as a test oracle; it
//! shares nothing with the SMO path except [`kkt_residual`].
//!
//! Optimality is measured by the first-order pair gap. With
//! `v_t = -f_t ∇_t`, let `I_up` hold the coordinates that can move in the
//! `+f` direction and `I_low` those that can move in the `-f` direction:
//!
//! ```text
//! I_up  = { t : f_t = +1, Γ_t < u_t } ∪ { t : f_t = -1, Γ_t > 0 }
//! I_low = { t : f_t = +1, Γ_t > 0   } ∪ { t : f_t = -1, Γ_t < u_t }
//! ```
//!
//! Γ is a KKT point iff `max_{I_up} v ≤ min_{I_low} v`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::DualProblem;

/// Curvature below which a pair step is treated as linear.
const CURVATURE_FLOOR: f64 = 1e-12;
/// How often (in pair updates) the equality drift is checked.
const DRIFT_CHECK_INTERVAL: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kkt_tolerance: f64,
    /// Pair updates allowed in [`solve_smo`].
    pub max_iterations: u64,
    /// Gradient steps allowed in [`solve_reference`].
    pub reference_step_budget: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { kkt_tolerance: 1e-5, max_iterations: 10_000_000, reference_step_budget: 200_000 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tolerance > 0.0 && self.kkt_tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kkt tolerance {} must be positive",
                self.kkt_tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QPSolution {
    /// `[α; μ⁺; μ⁻]`.
    pub gamma: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: u64,
    pub converged: bool,
}

/// Returns `(i, j, gap)`: the maximal violating pair and its gap. `None`
/// when either candidate set is empty (no feasible pair direction).
fn select_pair(problem: &DualProblem, gamma: &[f64], grad: &[f64]) -> Option<(usize, usize, f64)> {
    let mut up = (usize::MAX, f64::NEG_INFINITY);
    let mut low = (usize::MAX, f64::INFINITY);
    for t in 0..gamma.len() {
        let u = problem.upper[t];
        if u <= 0.0 {
            continue;
        }
        let f = problem.f[t];
        let v = -f * grad[t];
        let (can_up, can_low) = if f > 0.0 {
            (gamma[t] < u, gamma[t] > 0.0)
        } else {
            (gamma[t] > 0.0, gamma[t] < u)
        };
        if can_up && v > up.1 {
            up = (t, v);
        }
        if can_low && v < low.1 {
            low = (t, v);
        }
    }
    if up.0 == usize::MAX || low.0 == usize::MAX {
        None
    } else {
        Some((up.0, low.0, up.1 - low.1))
    }
}

/// Maximal-violating-pair gap at `gamma`, floored at zero.
pub fn kkt_residual(problem: &DualProblem, gamma: &[f64]) -> f64 {
    let grad = problem.gradient(gamma);
    residual_from_gradient(problem, gamma, &grad)
}

fn residual_from_gradient(problem: &DualProblem, gamma: &[f64], grad: &[f64]) -> f64 {
    select_pair(problem, gamma, grad).map_or(0.0, |(_, _, gap)| gap.max(0.0))
}

/// Sequential minimal optimization from `Γ = 0`.
///
/// Each step moves `Γ_i += f_i t`, `Γ_j -= f_j t`, which keeps `fᵀΓ`
/// fixed, and takes the exact minimizer along that line clipped to the
/// box. Running out of iterations is not an error: the returned solution
/// has `converged = false` and carries the last (and best) iterate.
pub fn solve_smo(problem: &DualProblem, cfg: &SolverConfig) -> Result<QPSolution> {
    solve_smo_observed(problem, cfg, &mut |_| {})
}

/// [`solve_smo`], calling `observer` with every iterate after each pair update.
pub fn solve_smo_observed(
    problem: &DualProblem,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&[f64]),
) -> Result<QPSolution> {
    problem.validate()?;
    cfg.validate()?;
    let len = problem.len();
    let g = &problem.g;
    let mut gamma = vec![0.0; len];
    let mut grad: Vec<f64> = problem.e_tilde.iter().map(|e| -e).collect();
    let mut iterations = 0u64;
    let mut gap;
    let mut converged = false;

    loop {
        let Some((i, j, pair_gap)) = select_pair(problem, &gamma, &grad) else {
            gap = 0.0;
            converged = true;
            break;
        };
        gap = pair_gap.max(0.0);
        if pair_gap <= cfg.kkt_tolerance {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iterations {
            break;
        }
        iterations += 1;

        let (fi, fj) = (problem.f[i], problem.f[j]);
        let room_i = if fi > 0.0 { problem.upper[i] - gamma[i] } else { gamma[i] };
        let room_j = if fj > 0.0 { gamma[j] } else { problem.upper[j] - gamma[j] };
        let room = room_i.min(room_j);
        let curvature = g[(i, i)] + g[(j, j)] - 2.0 * fi * fj * g[(i, j)];
        let step = if curvature > CURVATURE_FLOOR { (pair_gap / curvature).min(room) } else { room };

        let old_i = gamma[i];
        let old_j = gamma[j];
        if step == room_i {
            gamma[i] = if fi > 0.0 { problem.upper[i] } else { 0.0 };
        } else {
            gamma[i] = (old_i + fi * step).clamp(0.0, problem.upper[i]);
        }
        if step == room_j {
            gamma[j] = if fj > 0.0 { 0.0 } else { problem.upper[j] };
        } else {
            gamma[j] = (old_j - fj * step).clamp(0.0, problem.upper[j]);
        }
        let di = gamma[i] - old_i;
        let dj = gamma[j] - old_j;
        let col_i = g.column(i);
        let col_j = g.column(j);
        for (t, gr) in grad.iter_mut().enumerate() {
            *gr += col_i[t] * di + col_j[t] * dj;
        }

        if iterations.is_multiple_of(DRIFT_CHECK_INTERVAL) && !balanced(problem, &gamma) {
            gamma = project_feasible(&gamma, &problem.f, &problem.upper)?;
            grad = problem.gradient(&gamma);
        }
        observer(&gamma);
    }

    if !balanced(problem, &gamma) {
        gamma = project_feasible(&gamma, &problem.f, &problem.upper)?;
        grad = problem.gradient(&gamma);
        gap = residual_from_gradient(problem, &gamma, &grad);
        converged = gap <= cfg.kkt_tolerance;
    }
    // ½ΓᵀGΓ - ẽᵀΓ = ½ Γᵀ(∇ - ẽ)
    let objective = 0.5
        * gamma
            .iter()
            .zip(grad.iter().zip(&problem.e_tilde))
            .map(|(a, (gr, e))| a * (gr - e))
            .sum::<f64>();
    Ok(QPSolution { gamma, objective, kkt_residual: gap, iterations, converged })
}

fn balanced(problem: &DualProblem, gamma: &[f64]) -> bool {
    let l1: f64 = gamma.iter().sum();
    problem.balance(gamma).abs() <= 1e-10 * (1.0 + l1)
}

/// Euclidean projection onto `{ 0 ≤ x ≤ upper, fᵀx = 0 }` for `f ∈ {±1}`.
///
/// The projection is `x(λ) = clamp(v - λ f, 0, upper)` where `λ` zeroes the
/// nonincreasing, piecewise-linear function `h(λ) = fᵀx(λ)`; `λ` is found
/// exactly by scanning the sorted breakpoints.
pub fn project_feasible(v: &[f64], f: &[f64], upper: &[f64]) -> Result<Vec<f64>> {
    if v.len() != f.len() || v.len() != upper.len() {
        return Err(Error::InvalidArgument("projection inputs differ in length".into()));
    }
    let clamp_at = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(f)
            .zip(upper)
            .map(|((&vi, &fi), &ui)| (vi - lambda * fi).clamp(0.0, ui))
            .collect()
    };
    let h = |lambda: f64| -> f64 { clamp_at(lambda).iter().zip(f).map(|(x, fi)| x * fi).sum() };

    let mut breaks: Vec<f64> = v
        .iter()
        .zip(f)
        .zip(upper)
        .flat_map(|((&vi, &fi), &ui)| [vi / fi, (vi - ui) / fi])
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    if breaks.is_empty() {
        return Ok(Vec::new());
    }

    let values: Vec<f64> = breaks.iter().map(|&b| h(b)).collect();
    let k = values.iter().position(|&hv| hv <= 0.0).unwrap_or(breaks.len() - 1);
    let lambda = if k == 0 || values[k] > 0.0 {
        breaks[k]
    } else {
        let (b0, b1) = (breaks[k - 1], breaks[k]);
        let (h0, h1) = (values[k - 1], values[k]);
        if h0 == h1 { b1 } else { b0 + h0 * (b1 - b0) / (h0 - h1) }
    };
    let mut x = clamp_at(lambda);

    // Remove leftover rounding in fᵀx by nudging one interior coordinate.
    let residual: f64 = x.iter().zip(f).map(|(a, b)| a * b).sum();
    if residual != 0.0 {
        if let Some(t) = (0..x.len()).find(|&t| {
            let moved = x[t] - residual * f[t];
            x[t] > 0.0 && x[t] < upper[t] && (0.0..=upper[t]).contains(&moved)
        }) {
            x[t] -= residual * f[t];
        }
    }
    Ok(x)
}

/// Test oracle: accelerated projected gradient with adaptive restart,
/// followed by an equality-constrained polish on the free set. Intended
/// for problems with at most a few dozen variables.
pub fn solve_reference(problem: &DualProblem, cfg: &SolverConfig) -> Result<QPSolution> {
    problem.validate()?;
    cfg.validate()?;
    let len = problem.len();
    let (f, upper) = (&problem.f, &problem.upper);
    let lipschitz = lipschitz_bound(&problem.g);
    let inner_tol = cfg.kkt_tolerance * 1e-3;

    let mut x = project_feasible(&vec![0.0; len], f, upper)?;
    let mut fx = problem.objective(&x);
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut steps = 0u64;

    if lipschitz > 0.0 {
        while steps < cfg.reference_step_budget {
            steps += 1;
            let grad = problem.gradient(&y);
            let trial: Vec<f64> = y.iter().zip(&grad).map(|(a, g)| a - g / lipschitz).collect();
            let x_new = project_feasible(&trial, f, upper)?;
            let f_new = problem.objective(&x_new);
            if f_new > fx {
                // Restart momentum from the last accepted point.
                y.clone_from(&x);
                momentum = 1.0;
                continue;
            }
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            let moved = x_new.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            y = x_new.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
            x = x_new;
            fx = f_new;
            momentum = next;
            if steps.is_multiple_of(50) && kkt_residual(problem, &x) <= inner_tol {
                break;
            }
            if moved == 0.0 && beta == 0.0 {
                break;
            }
        }
    } else {
        // G = 0: a linear program over the feasible polytope; one projected
        // step of any length lands on the optimal face, so take a long one.
        let scale = upper.iter().fold(1.0, |a: f64, &b| a.max(b)) * 1e3;
        let trial: Vec<f64> = problem.e_tilde.iter().map(|e| e * scale).collect();
        x = project_feasible(&trial, f, upper)?;
    }

    for _ in 0..5 {
        match polish(problem, &x)? {
            Some(p) if problem.objective(&p) <= problem.objective(&x) + 1e-14 * (1.0 + fx.abs()) => {
                if p == x {
                    break;
                }
                x = p;
            }
            _ => break,
        }
    }

    let residual = kkt_residual(problem, &x);
    Ok(QPSolution {
        objective: problem.objective(&x),
        gamma: x,
        kkt_residual: residual,
        iterations: steps,
        converged: residual <= cfg.kkt_tolerance,
    })
}

/// Smallest of the Gershgorin and Frobenius bounds on `λ_max(G)`.
fn lipschitz_bound(g: &DMatrix<f64>) -> f64 {
    let gersh = g.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    gersh.min(g.norm())
}

/// Solves the QP restricted to the affine hull of the current face: bound
/// coordinates stay fixed, free ones satisfy the stationarity and balance
/// equations. Returns `None` when the result leaves the box.
fn polish(problem: &DualProblem, x: &[f64]) -> Result<Option<Vec<f64>>> {
    let (f, upper) = (&problem.f, &problem.upper);
    let snap = |t: usize| -> Option<f64> {
        let tol = 1e-9 * upper[t].max(1.0);
        if x[t] <= tol {
            Some(0.0)
        } else if x[t] >= upper[t] - tol {
            Some(upper[t])
        } else {
            None
        }
    };
    let mut base: Vec<f64> = x.to_vec();
    let mut free = Vec::new();
    for t in 0..x.len() {
        match snap(t) {
            Some(b) => base[t] = b,
            None => free.push(t),
        }
    }
    if free.is_empty() {
        return Ok(project_feasible(&base, f, upper).ok());
    }
    let k = free.len();
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for (a, &ta) in free.iter().enumerate() {
        for (b, &tb) in free.iter().enumerate() {
            kkt[(a, b)] = problem.g[(ta, tb)];
        }
        kkt[(a, k)] = f[ta];
        kkt[(k, a)] = f[ta];
        let fixed: f64 = (0..x.len())
            .filter(|t| !free.contains(t))
            .map(|t| problem.g[(ta, t)] * base[t])
            .sum();
        rhs[a] = problem.e_tilde[ta] - fixed;
    }
    rhs[k] = -(0..x.len()).filter(|t| !free.contains(t)).map(|t| f[t] * base[t]).sum::<f64>();
    let svd = kkt.svd(true, true);
    let Ok(sol) = svd.solve(&rhs, 1e-12) else {
        return Ok(None);
    };
    for (a, &t) in free.iter().enumerate() {
        let v = sol[a];
        if !(v >= -1e-12 && v <= upper[t] + 1e-12) {
            return Ok(None);
        }
        base[t] = v.clamp(0.0, upper[t]);
    }
    let balance: f64 = base.iter().zip(f).map(|(a, b)| a * b).sum();
    if balance.abs() > 1e-9 {
        return Ok(None);
    }
    Ok(Some(project_feasible(&base, f, upper)?))
}
