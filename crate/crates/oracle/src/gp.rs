//! Brute-force Gaussian-process posterior via a dense LU solve.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct DensePosterior {
    pub mean: Vec<f64>,
    /// Full posterior covariance over the query points.
    pub covariance: DMatrix<f64>,
}

impl DensePosterior {
    pub fn variance(&self, i: usize) -> f64 {
        self.covariance[(i, i)]
    }
}

/// Posterior of a zero-mean GP at `queries` given noisy observations
/// `(train[i], y[i])`. Returns `None` if the regularized Gram matrix is singular.
pub fn dense_posterior<P, K>(
    kernel: K,
    noise_variance: f64,
    train: &[P],
    y: &[f64],
    queries: &[P],
) -> Option<DensePosterior>
where
    K: Fn(&P, &P) -> f64,
{
    let t = train.len();
    let q = queries.len();
    let prior = DMatrix::from_fn(q, q, |i, j| kernel(&queries[i], &queries[j]));
    if t == 0 {
        return Some(DensePosterior {
            mean: vec![0.0; q],
            covariance: prior,
        });
    }
    let gram = DMatrix::from_fn(t, t, |i, j| {
        kernel(&train[i], &train[j]) + if i == j { noise_variance } else { 0.0 }
    });
    let cross = DMatrix::from_fn(t, q, |i, j| kernel(&train[i], &queries[j]));
    let lu = gram.full_piv_lu();
    let yv = DVector::from_column_slice(y);
    let weights = lu.solve(&yv)?;
    let solved = lu.solve(&cross)?;
    let mean = (cross.transpose() * weights).iter().copied().collect();
    let covariance = prior - cross.transpose() * solved;
    Some(DensePosterior { mean, covariance })
}
