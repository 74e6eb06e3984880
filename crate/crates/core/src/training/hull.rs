//! Nearest point to the origin in the convex hull of `z_i = y_i phi(x_i)`.
//!
//! If `w* = sum_i lambda_i z_i` is that point, the hard-margin problem
//! `min |theta| s.t. z_i . theta >= 1` is solved by
//! `theta* = w* / |w*|^2`, i.e. dual weights `alpha = lambda / |w*|^2`.
//! The points are separable with positive margin iff `|w*| > 0`.
//!
//! Both solvers work on the simplex-constrained quadratic
//! `min 1/2 lambda' G lambda` and finish with an exact active-set solve of
//! the KKT system on the identified support.

use nalgebra::{DMatrix, DVector};

use super::gram::Gram;
use super::Solver;

#[derive(Clone, Debug)]
pub(crate) struct HullPoint {
    pub lambda: Vec<f64>,
    /// `|w*|^2 = lambda' G lambda`.
    pub sq_norm: f64,
    /// `G lambda`.
    pub grad: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) enum HullFailure {
    Stalled { iterations: usize, gap: f64 },
}

/// Relative tolerance used when checking the polished KKT conditions.
const POLISH_TOL: f64 = 1e-11;

pub(crate) fn nearest_point(
    gram: &Gram<'_>,
    solver: Solver,
    max_iter: usize,
    kkt_tol: f64,
) -> Result<HullPoint, HullFailure> {
    let n = gram.len();
    assert!(n > 0);
    let scale = gram.max_diag().max(f64::MIN_POSITIVE);

    let start = (0..n)
        .min_by(|&a, &b| gram.entry(a, a).total_cmp(&gram.entry(b, b)))
        .unwrap_or(0);
    let mut lambda = vec![0.0; n];
    lambda[start] = 1.0;
    let mut grad = vec![0.0; n];
    gram.axpy_column(start, 1.0, &mut grad);

    let step = match solver {
        Solver::ProjectedGradient => 1.0 / spectral_bound(gram),
        Solver::DualAscent => 0.0,
    };

    let floor_tol = kkt_tol * scale;
    let mut stage_tol = (1e-6 * scale).max(floor_tol);
    let mut iterations = 0;
    loop {
        let gap = duality_gap(&lambda, &grad);
        if gap <= stage_tol || iterations >= max_iter {
            if let Some(p) = polish(gram, &lambda, scale) {
                return Ok(p);
            }
            if gap <= floor_tol {
                let sq_norm = lambda.iter().zip(&grad).map(|(l, g)| l * g).sum();
                return Ok(HullPoint {
                    lambda,
                    sq_norm,
                    grad,
                });
            }
            if iterations >= max_iter {
                return Err(HullFailure::Stalled { iterations, gap });
            }
            stage_tol = (gap * 1e-2).max(floor_tol);
        }
        match solver {
            Solver::DualAscent => pairwise_step(gram, &mut lambda, &mut grad),
            Solver::ProjectedGradient => projected_step(gram, &mut lambda, &mut grad, step),
        }
        iterations += 1;
    }
}

/// `max_{lambda_i > 0} g_i - min_i g_i`; zero exactly at the optimum.
fn duality_gap(lambda: &[f64], grad: &[f64]) -> f64 {
    let low = grad.iter().copied().fold(f64::INFINITY, f64::min);
    let up = lambda
        .iter()
        .zip(grad)
        .filter(|(l, _)| **l > 0.0)
        .map(|(_, g)| *g)
        .fold(f64::NEG_INFINITY, f64::max);
    (up - low).max(0.0)
}

/// Moves mass from the worst support point to the best vertex
/// (an SMO-style two-coordinate update that stays on the simplex).
fn pairwise_step(gram: &Gram<'_>, lambda: &mut [f64], grad: &mut [f64]) {
    let mut low = 0;
    let mut up = usize::MAX;
    for i in 0..lambda.len() {
        if grad[i] < grad[low] {
            low = i;
        }
        if lambda[i] > 0.0 && (up == usize::MAX || grad[i] > grad[up]) {
            up = i;
        }
    }
    if up == low || up == usize::MAX {
        return;
    }
    let gap = grad[up] - grad[low];
    let curvature = gram.entry(up, up) + gram.entry(low, low) - 2.0 * gram.entry(up, low);
    let delta = if curvature > 0.0 {
        (gap / curvature).min(lambda[up])
    } else {
        lambda[up]
    };
    if delta <= 0.0 {
        return;
    }
    if delta >= lambda[up] {
        lambda[low] += lambda[up];
        lambda[up] = 0.0;
    } else {
        lambda[up] -= delta;
        lambda[low] += delta;
    }
    gram.axpy_column(low, delta, grad);
    gram.axpy_column(up, -delta, grad);
}

fn projected_step(gram: &Gram<'_>, lambda: &mut Vec<f64>, grad: &mut Vec<f64>, step: f64) {
    let target: Vec<f64> = lambda
        .iter()
        .zip(grad.iter())
        .map(|(l, g)| l - step * g)
        .collect();
    *lambda = project_to_simplex(&target);
    *grad = gram.mul(lambda);
}

/// Euclidean projection onto `{lambda >= 0, sum lambda = 1}`.
pub(crate) fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if s - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

/// Upper bound on the largest eigenvalue of `G` via power iteration,
/// padded so the gradient step stays stable.
fn spectral_bound(gram: &Gram<'_>) -> f64 {
    let n = gram.len();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut estimate = gram.max_diag();
    for _ in 0..50 {
        let w = gram.mul(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        estimate = estimate.max(norm);
        v = w.into_iter().map(|x| x / norm).collect();
    }
    1.05 * estimate.max(f64::MIN_POSITIVE)
}

/// Exact solve of the KKT system on the current support, with a few
/// add/drop corrections. Returns `None` if the support is not yet right.
fn polish(gram: &Gram<'_>, lambda: &[f64], scale: f64) -> Option<HullPoint> {
    let n = gram.len();
    let mut active: Vec<usize> = (0..n).filter(|&i| lambda[i] > 0.0).collect();
    let tol = POLISH_TOL * scale;
    for _ in 0..8 {
        if active.is_empty() {
            return None;
        }
        let a = active.len();
        let mut system = DMatrix::<f64>::zeros(a + 1, a + 1);
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                system[(r, c)] = gram.entry(i, j);
            }
            system[(r, a)] = -1.0;
            system[(a, r)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(a + 1);
        rhs[a] = 1.0;
        let solution = system
            .svd(true, true)
            .solve(&rhs, 1e-13 * scale.max(1.0))
            .ok()?;

        let negative: Vec<usize> = (0..a)
            .filter(|&r| solution[r] < -1e-12)
            .map(|r| active[r])
            .collect();
        if !negative.is_empty() {
            active.retain(|i| !negative.contains(i));
            continue;
        }
        let mut candidate = vec![0.0; n];
        for (r, &i) in active.iter().enumerate() {
            candidate[i] = solution[r].max(0.0);
        }
        let total: f64 = candidate.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        candidate.iter_mut().for_each(|l| *l /= total);
        let grad = gram.mul(&candidate);
        let sq_norm: f64 = candidate.iter().zip(&grad).map(|(l, g)| l * g).sum();
        let (worst, worst_grad) = grad
            .iter()
            .enumerate()
            .map(|(i, &g)| (i, g))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        if worst_grad >= sq_norm - tol {
            return Some(HullPoint {
                lambda: candidate,
                sq_norm,
                grad,
            });
        }
        if active.contains(&worst) {
            return None;
        }
        active.push(worst);
    }
    None
}
