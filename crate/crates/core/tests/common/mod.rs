//! Helpers shared by the integration tests: reference solvers written
//! independently of the crate's own, plus instance generators.

#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use strategic_usage::data::{models_from_prior, reveal_seed_users};
use strategic_usage::models::FeatureMap;
use strategic_usage::{Dataset, Model, ModelFamily, TrainerConfig, UserRecord};

pub const AFFINE: ModelFamily = ModelFamily::Linear {
    feature_map: FeatureMap::AppendOne,
};

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `1e-12` (singular system).
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - tail) / a[r][r];
    }
    Some(x)
}

/// Minimum-norm `theta` with `z_i . theta >= 1` for all rows `z_i`, by
/// enumerating every candidate active set. Exponential; meant for at most
/// a handful of constraints.
pub fn kkt_min_norm(z: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = z.len();
    let d = z.first()?.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let active: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let gram: Vec<Vec<f64>> = active
            .iter()
            .map(|&i| active.iter().map(|&j| dot(&z[i], &z[j])).collect())
            .collect();
        let Some(mu) = gauss_solve(gram, vec![1.0; active.len()]) else {
            continue;
        };
        if mu.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let mut theta = vec![0.0; d];
        for (&i, &m) in active.iter().zip(&mu) {
            for k in 0..d {
                theta[k] += m * z[i][k];
            }
        }
        if z.iter().any(|row| dot(row, &theta) < 1.0 - 1e-9) {
            continue;
        }
        let norm = dot(&theta, &theta);
        if best.as_ref().is_none_or(|(b, _)| norm < *b) {
            best = Some((norm, theta));
        }
    }
    best.map(|(_, theta)| theta)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Signed augmented rows `y (x, 1)` for an affine classifier.
pub fn affine_rows(data: &Dataset) -> Vec<Vec<f64>> {
    data.users()
        .iter()
        .map(|u| {
            let mut z: Vec<f64> = u.features.iter().map(|x| u.label.sign() * x).collect();
            z.push(u.label.sign());
            z
        })
        .collect()
}

/// `n` points in `dim` dimensions labelled by a random hyperplane, with
/// every point at least `gap` away from it. Both labels appear.
pub fn separable_instance(rng: &mut ChaCha8Rng, n: usize, dim: usize, gap: f64) -> Dataset {
    loop {
        let w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let scale = dot(&w, &w).sqrt();
        let b: f64 = rng.random_range(-0.5..0.5);
        let mut users = Vec::with_capacity(n);
        while users.len() < n {
            let x: Vec<f64> = (0..dim)
                .map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let f = dot(&w, &x) / scale + b;
            if f.abs() >= gap {
                let label = if f > 0.0 { 1 } else { -1 };
                users.push((x, label));
            }
        }
        let data = Dataset::from_pairs(&users).unwrap();
        if data.count_label(strategic_usage::Label::Positive) > 0
            && data.count_label(strategic_usage::Label::Negative) > 0
        {
            return data;
        }
    }
}

/// A random realizable instance with initial models fitted to one seed
/// user of each class per service.
pub struct RandomInstance {
    pub dataset: Dataset,
    pub models: Vec<Arc<Model>>,
    pub prior: strategic_usage::MemoryMatrix,
}

pub fn random_instance(seed: u64, n: usize, m: usize) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dataset = separable_instance(&mut rng, n, 2, 0.2);
    let prior = reveal_seed_users(&dataset, m, seed).unwrap();
    let models = models_from_prior(&dataset, &prior, AFFINE, &TrainerConfig::default()).unwrap();
    RandomInstance {
        dataset,
        models,
        prior,
    }
}

pub fn five_point() -> Dataset {
    Dataset::from_pairs(&[
        (vec![1.0, 1.0], 1),
        (vec![1.0, 1.0], 1),
        (vec![-1.0, 1.0], -1),
        (vec![1.0, -1.0], -1),
        (vec![-1.0, -1.0], -1),
    ])
    .unwrap()
}

pub fn records(data: &Dataset) -> Vec<&UserRecord> {
    data.users().iter().collect()
}

/// Largest absolute entry-wise difference between two row lists.
pub fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}
