use crate::models::{dot, FeatureMap, Kernel, ModelFamily};

/// Above this many points the Gram matrix is evaluated on demand instead
/// of being cached (the cache is `n^2` doubles).
const DENSE_LIMIT: usize = 3000;

/// Kernel of the augmented feature space the trainer works in. For
/// families with an intercept the intercept is one more feature, so it is
/// regularised together with the weights.
#[derive(Clone, Copy, Debug)]
pub(crate) enum AugmentedKernel {
    Linear { intercept: bool },
    Rbf { gamma: f64 },
}

impl AugmentedKernel {
    pub(crate) fn for_family(family: ModelFamily) -> Option<Self> {
        match family {
            ModelFamily::Linear { feature_map } => Some(AugmentedKernel::Linear {
                intercept: feature_map == FeatureMap::AppendOne,
            }),
            ModelFamily::Rbf { gamma } => Some(AugmentedKernel::Rbf { gamma }),
            ModelFamily::Threshold => None,
        }
    }

    #[inline]
    pub(crate) fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            AugmentedKernel::Linear { intercept } => dot(a, b) + if intercept { 1.0 } else { 0.0 },
            AugmentedKernel::Rbf { gamma } => Kernel::Rbf { gamma }.eval(a, b) + 1.0,
        }
    }
}

/// Signed Gram matrix `G_ij = y_i y_j K(x_i, x_j)` of the points
/// `z_i = y_i phi(x_i)`.
pub(crate) struct Gram<'a> {
    points: Vec<&'a [f64]>,
    signs: Vec<f64>,
    kernel: AugmentedKernel,
    dense: Option<Vec<f64>>,
}

impl<'a> Gram<'a> {
    pub(crate) fn new(points: Vec<&'a [f64]>, signs: Vec<f64>, kernel: AugmentedKernel) -> Self {
        let n = points.len();
        let mut gram = Self {
            points,
            signs,
            kernel,
            dense: None,
        };
        if n <= DENSE_LIMIT {
            let mut data = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = gram.compute(i, j);
                    data[i * n + j] = v;
                    data[j * n + i] = v;
                }
            }
            gram.dense = Some(data);
        }
        gram
    }

    #[inline]
    fn compute(&self, i: usize, j: usize) -> f64 {
        self.signs[i] * self.signs[j] * self.kernel.eval(self.points[i], self.points[j])
    }

    pub(crate) fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub(crate) fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.dense {
            Some(d) => d[i * self.points.len() + j],
            None => self.compute(i, j),
        }
    }

    /// `out[k] += scale * G[k, j]` for every `k`.
    pub(crate) fn axpy_column(&self, j: usize, scale: f64, out: &mut [f64]) {
        let n = self.points.len();
        match &self.dense {
            Some(d) => {
                for (o, g) in out.iter_mut().zip(&d[j * n..(j + 1) * n]) {
                    *o += scale * g;
                }
            }
            None => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o += scale * self.compute(k, j);
                }
            }
        }
    }

    pub(crate) fn mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0.0 {
                self.axpy_column(j, vj, &mut out);
            }
        }
        out
    }

    pub(crate) fn max_diag(&self) -> f64 {
        (0..self.len())
            .map(|i| self.entry(i, i))
            .fold(0.0, f64::max)
    }
}
