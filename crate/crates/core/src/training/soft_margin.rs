//! Soft-margin classifier `min 1/2 |theta|^2 + C sum_i xi_i`, solved by
//! dual coordinate descent on `0 <= alpha_i <= C`. Used only to decide
//! which points to drop when forcing a dataset to be separable.

use super::gram::{AugmentedKernel, Gram};

pub(crate) struct SoftMarginFit {
    /// `y_i f(x_i)` for every training point.
    pub margins: Vec<f64>,
}

pub(crate) fn fit(
    points: Vec<&[f64]>,
    signs: Vec<f64>,
    kernel: AugmentedKernel,
    c: f64,
    max_sweeps: usize,
    tol: f64,
) -> SoftMarginFit {
    let n = points.len();
    match kernel {
        AugmentedKernel::Linear { intercept } => {
            fit_primal(&points, &signs, intercept, c, max_sweeps, tol)
        }
        AugmentedKernel::Rbf { .. } => {
            let gram = Gram::new(points, signs, kernel);
            let mut alpha = vec![0.0; n];
            // q = G alpha, so the margin of point i is q_i.
            let mut q = vec![0.0; n];
            let mut sweeps = 0;
            while sweeps < max_sweeps {
                sweeps += 1;
                let mut worst: f64 = 0.0;
                for i in 0..n {
                    let g = q[i] - 1.0;
                    let pg = projected(g, alpha[i], c);
                    worst = worst.max(pg.abs());
                    if pg == 0.0 {
                        continue;
                    }
                    let qii = gram.entry(i, i);
                    let new = (alpha[i] - g / qii).clamp(0.0, c);
                    let delta = new - alpha[i];
                    if delta != 0.0 {
                        alpha[i] = new;
                        gram.axpy_column(i, delta, &mut q);
                    }
                }
                if worst <= tol {
                    break;
                }
            }
            SoftMarginFit { margins: q }
        }
    }
}

fn projected(g: f64, alpha: f64, c: f64) -> f64 {
    if alpha <= 0.0 {
        g.min(0.0)
    } else if alpha >= c {
        g.max(0.0)
    } else {
        g
    }
}

/// Linear case keeps `theta = sum alpha_i z_i` explicitly.
fn fit_primal(
    points: &[&[f64]],
    signs: &[f64],
    intercept: bool,
    c: f64,
    max_sweeps: usize,
    tol: f64,
) -> SoftMarginFit {
    let n = points.len();
    let d = points.first().map_or(0, |p| p.len()) + usize::from(intercept);
    let z: Vec<Vec<f64>> = points
        .iter()
        .zip(signs)
        .map(|(x, &s)| {
            let mut v: Vec<f64> = x.iter().map(|v| s * v).collect();
            if intercept {
                v.push(s);
            }
            v
        })
        .collect();
    let qdiag: Vec<f64> = z.iter().map(|v| v.iter().map(|x| x * x).sum()).collect();
    let mut theta = vec![0.0; d];
    let mut alpha = vec![0.0; n];
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            if qdiag[i] == 0.0 {
                continue;
            }
            let g = z[i].iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() - 1.0;
            let pg = projected(g, alpha[i], c);
            worst = worst.max(pg.abs());
            if pg == 0.0 {
                continue;
            }
            let new = (alpha[i] - g / qdiag[i]).clamp(0.0, c);
            let delta = new - alpha[i];
            if delta != 0.0 {
                alpha[i] = new;
                theta
                    .iter_mut()
                    .zip(&z[i])
                    .for_each(|(t, v)| *t += delta * v);
            }
        }
        if worst <= tol {
            break;
        }
    }
    let margins = z
        .iter()
        .map(|v| v.iter().zip(&theta).map(|(a, b)| a * b).sum())
        .collect();
    SoftMarginFit { margins }
}
