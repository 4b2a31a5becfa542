//! Gaussian-process regression over a finite product grid.
//!
//! The posterior is kept in a form that makes one new observation cost
//! `O(t · |X × Ω|)`: the Cholesky factor `L` of `K_t + σ²_noise I`, the
//! projections `v_i = L⁻¹ k_t(p_i)` for every grid point `p_i`, and
//! `a = L⁻¹ y_t`. Posterior means and variances over the whole grid are then
//! `μ_i = v_i · a` and `σ²_i = k(p_i, p_i) − |v_i|²`, both maintained in place.
//!
//! Appending an observation at grid point `n` extends `L` by the row
//! `(v_n, ρ)` with `ρ² = σ²_t(p_n) + σ²_noise`, so the pivot is bounded below
//! by the noise variance.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpace;

/// Squared-exponential kernel `σ² exp(−‖θ − θ'‖² / L)` on `θ = (x, w)`, plus
/// the observation-noise variance used by the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(signal_variance: f64, length_scale: f64, noise_variance: f64) -> Result<Self> {
        let p = KernelParams {
            signal_variance,
            length_scale,
            noise_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("signal_variance", self.signal_variance),
            ("length_scale", self.length_scale),
            ("noise_variance", self.noise_variance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "kernel {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let dx = a.0 - b.0;
        let dw = a.1 - b.1;
        self.signal_variance * (-(dx * dx + dw * dw) / self.length_scale).exp()
    }
}

/// Covariance between two grid points under `params`.
pub fn kernel_eval(params: &KernelParams, a: (f64, f64), b: (f64, f64)) -> f64 {
    params.eval(a, b)
}

/// Smallest prior variance over the grid. The kernel is stationary, so this is
/// the signal variance whenever the grid is non-empty.
pub fn prior_variance_min(kernel: &KernelParams, grid: &GridSpace) -> f64 {
    grid.points()
        .into_iter()
        .map(|p| kernel.eval(p, p))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x_index: usize,
    pub w_index: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: KernelParams,
    n_w: usize,
    points: Arc<Vec<(f64, f64)>>,
    observations: Vec<Observation>,
    /// Rows of the lower-triangular factor; row `r` has length `r + 1`.
    chol: Vec<Vec<f64>>,
    weights: Vec<f64>,
    proj: Vec<Vec<f64>>,
    mean: Vec<f64>,
    var: Vec<f64>,
    jitter: f64,
}

impl GpPosterior {
    /// Prior state: zero mean, prior variance everywhere.
    pub fn new(kernel: KernelParams, grid: &GridSpace) -> Result<Self> {
        kernel.validate()?;
        let points = Arc::new(grid.points());
        let var = points.iter().map(|&p| kernel.eval(p, p)).collect();
        Ok(GpPosterior {
            kernel,
            n_w: grid.n_w(),
            mean: vec![0.0; points.len()],
            proj: vec![Vec::new(); points.len()],
            points,
            observations: Vec::new(),
            chol: Vec::new(),
            weights: Vec::new(),
            var,
            jitter: 0.0,
        })
    }

    /// Builds the posterior from a full observation list.
    pub fn from_observations(
        kernel: KernelParams,
        grid: &GridSpace,
        observations: &[Observation],
    ) -> Result<Self> {
        let mut gp = GpPosterior::new(kernel, grid)?;
        for o in observations {
            gp.add_observation(o.x_index, o.w_index, o.value)?;
        }
        Ok(gp)
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    /// Diagonal regularization on top of the noise variance (zero unless a
    /// factorization had to be retried).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn flat(&self, ix: usize, iw: usize) -> usize {
        ix * self.n_w + iw
    }

    #[inline]
    pub fn mean(&self, idx: usize) -> f64 {
        self.mean[idx]
    }

    #[inline]
    pub fn variance(&self, idx: usize) -> f64 {
        self.var[idx].max(0.0)
    }

    #[inline]
    pub fn std_dev(&self, idx: usize) -> f64 {
        self.variance(idx).sqrt()
    }

    /// `(mean, variance)` at grid point `(ix, iw)`.
    pub fn posterior(&self, ix: usize, iw: usize) -> (f64, f64) {
        let i = self.flat(ix, iw);
        (self.mean(i), self.variance(i))
    }

    /// `(mean, variance)` at an arbitrary point, on or off the grid.
    pub fn posterior_at(&self, q: (f64, f64)) -> (f64, f64) {
        let t = self.observations.len();
        let k: Vec<f64> = self
            .observations
            .iter()
            .map(|o| self.kernel.eval(self.points[self.flat(o.x_index, o.w_index)], q))
            .collect();
        // forward substitution L v = k
        let mut v = vec![0.0; t];
        for r in 0..t {
            let row = &self.chol[r];
            let s: f64 = row[..r].iter().zip(&v[..r]).map(|(a, b)| a * b).sum();
            v[r] = (k[r] - s) / row[r];
        }
        let mean = dot(&v, &self.weights);
        let var = self.kernel.eval(q, q) - dot(&v, &v);
        (mean, var.max(0.0))
    }

    /// Posterior covariance between grid points `i` and `j` (flat indices).
    #[inline]
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.kernel.eval(self.points[i], self.points[j]) - dot(&self.proj[i], &self.proj[j])
    }

    /// Posterior covariance matrix over the environment slice `{(ix, w) : w ∈ Ω}`.
    pub fn slice_covariance(&self, ix: usize) -> DMatrix<f64> {
        let base = ix * self.n_w;
        let mut m = DMatrix::zeros(self.n_w, self.n_w);
        for a in 0..self.n_w {
            for b in a..self.n_w {
                let c = if a == b {
                    self.variance(base + a)
                } else {
                    self.covariance(base + a, base + b)
                };
                m[(a, b)] = c;
                m[(b, a)] = c;
            }
        }
        m
    }

    /// Posterior covariances between the flat index sets `rows` and `cols`.
    pub fn cross_covariance(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let t = self.observations.len();
        let mut m = DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
            self.kernel.eval(self.points[rows[r]], self.points[cols[c]])
        });
        if t > 0 {
            let a = DMatrix::from_fn(rows.len(), t, |r, k| self.proj[rows[r]][k]);
            let b = DMatrix::from_fn(t, cols.len(), |k, c| self.proj[cols[c]][k]);
            m.gemm(-1.0, &a, &b, 1.0);
        }
        m
    }

    /// Posterior means over the environment slice at `ix`.
    pub fn slice_mean(&self, ix: usize) -> &[f64] {
        &self.mean[ix * self.n_w..(ix + 1) * self.n_w]
    }

    /// Adds a noisy observation `y` at grid point `(ix, iw)`.
    pub fn add_observation(&mut self, ix: usize, iw: usize, y: f64) -> Result<()> {
        if ix * self.n_w + iw >= self.len() || iw >= self.n_w {
            return Err(Error::InvalidParameter(format!(
                "observation ({ix}, {iw}) lies outside the grid"
            )));
        }
        if !y.is_finite() {
            return Err(Error::InvalidParameter(format!("observation value {y} is not finite")));
        }
        let obs = Observation {
            x_index: ix,
            w_index: iw,
            value: y,
        };
        if self.try_append(obs).is_ok() {
            return Ok(());
        }
        if self.jitter > 0.0 {
            return Err(Error::NotPositiveDefinite {
                index: self.observations.len(),
                pivot: f64::NAN,
            });
        }
        let mut all = self.observations.clone();
        all.push(obs);
        let mut fresh = GpPosterior {
            kernel: self.kernel,
            n_w: self.n_w,
            points: Arc::clone(&self.points),
            observations: Vec::new(),
            chol: Vec::new(),
            weights: Vec::new(),
            proj: vec![Vec::new(); self.points.len()],
            mean: vec![0.0; self.points.len()],
            var: self.points.iter().map(|&p| self.kernel.eval(p, p)).collect(),
            jitter: 1e-10 * self.kernel.signal_variance,
        };
        for o in all {
            fresh.try_append(o)?;
        }
        *self = fresh;
        Ok(())
    }

    /// Copy of this posterior with one more observation.
    pub fn with_observation(&self, ix: usize, iw: usize, y: f64) -> Result<Self> {
        let mut next = self.clone();
        next.add_observation(ix, iw, y)?;
        Ok(next)
    }

    fn try_append(&mut self, obs: Observation) -> Result<()> {
        let n = self.flat(obs.x_index, obs.w_index);
        let p_new = self.points[n];
        let l = self.proj[n].clone();
        let pivot_sq =
            self.kernel.eval(p_new, p_new) + self.kernel.noise_variance + self.jitter - dot(&l, &l);
        if !(pivot_sq.is_finite() && pivot_sq > 0.0) {
            return Err(Error::NotPositiveDefinite {
                index: self.observations.len(),
                pivot: pivot_sq,
            });
        }
        let pivot = pivot_sq.sqrt();
        let a_new = (obs.value - dot(&l, &self.weights)) / pivot;
        for i in 0..self.points.len() {
            let v = (self.kernel.eval(p_new, self.points[i]) - dot(&l, &self.proj[i])) / pivot;
            self.proj[i].push(v);
            self.mean[i] += v * a_new;
            self.var[i] -= v * v;
        }
        let mut row = l;
        row.push(pivot);
        self.chol.push(row);
        self.weights.push(a_new);
        self.observations.push(obs);
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use drccbo_oracle::dense_posterior;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(nx: usize, nw: usize) -> GridSpace {
        GridSpace::new(make_grid(-2.0, 2.0, nx).unwrap(), make_grid(-1.0, 1.0, nw).unwrap()).unwrap()
    }

    fn oracle(gp: &GpPosterior, grid: &GridSpace) -> drccbo_oracle::DensePosterior {
        let k = *gp.kernel();
        let train: Vec<(f64, f64)> =
            gp.observations().iter().map(|o| grid.point(o.x_index, o.w_index)).collect();
        let y: Vec<f64> = gp.observations().iter().map(|o| o.value).collect();
        dense_posterior(
            |a: &(f64, f64), b: &(f64, f64)| k.eval(*a, *b),
            k.noise_variance + gp.jitter(),
            &train,
            &y,
            &grid.points(),
        )
        .unwrap()
    }

    #[test]
    fn cross_covariance_matches_pointwise() {
        let g = grid(4, 3);
        let k = KernelParams::new(1.5, 2.0, 1e-3).unwrap();
        let mut gp = GpPosterior::new(k, &g).unwrap();
        assert_eq!(gp.cross_covariance(&[0, 5], &[5])[(1, 0)], 1.5);
        for (ix, iw, y) in [(0, 0, 1.0), (3, 2, -1.0), (1, 1, 0.5)] {
            gp.add_observation(ix, iw, y).unwrap();
        }
        let rows = [0, 4, 11];
        let cols: Vec<usize> = (0..12).collect();
        let m = gp.cross_covariance(&rows, &cols);
        for (r, &i) in rows.iter().enumerate() {
            for &j in &cols {
                assert!((m[(r, j)] - gp.covariance(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kernel_examples() {
        let p = KernelParams::new(1.0, 3.0, 1e-8).unwrap();
        assert_eq!(kernel_eval(&p, (0.0, 0.0), (0.0, 0.0)), 1.0);
        let q = KernelParams::new(2500.0, 4.0, 1e-4).unwrap();
        assert_eq!(kernel_eval(&q, (0.0, 0.0), (0.0, 0.0)), 2500.0);
        // exp(-2/3)
        assert!((kernel_eval(&p, (0.0, 0.0), (1.0, 1.0)) - 0.513_417_119_032_592).abs() < 1e-12);
        assert_eq!(
            kernel_eval(&p, (0.3, -1.2), (2.0, 0.7)),
            kernel_eval(&p, (2.0, 0.7), (0.3, -1.2))
        );
    }

    #[test]
    fn kernel_rejects_nonpositive() {
        assert!(KernelParams::new(0.0, 1.0, 1.0).is_err());
        assert!(KernelParams::new(1.0, -1.0, 1.0).is_err());
        assert!(KernelParams::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn prior_state() {
        let g = grid(4, 3);
        let gp = GpPosterior::new(KernelParams::new(2.0, 1.0, 0.1).unwrap(), &g).unwrap();
        for ix in 0..4 {
            for iw in 0..3 {
                assert_eq!(gp.posterior(ix, iw), (0.0, 2.0));
            }
        }
        assert_eq!(gp.posterior_at((10.0, 10.0)), (0.0, 2.0));
    }

    #[test]
    fn single_observation_closed_form() {
        let g = grid(3, 3);
        let k = KernelParams::new(1.5, 1.0, 0.2).unwrap();
        let mut gp = GpPosterior::new(k, &g).unwrap();
        gp.add_observation(1, 2, 0.7).unwrap();
        let (m, v) = gp.posterior(1, 2);
        assert!((m - 0.7 * 1.5 / 1.7).abs() < 1e-14);
        assert!((v - (1.5 - 1.5 * 1.5 / 1.7)).abs() < 1e-14);
        let dense = oracle(&gp, &g);
        let i = g.flat(1, 2);
        assert!((dense.mean[i] - m).abs() < 1e-14);
        assert!((dense.variance(i) - v).abs() < 1e-14);
    }

    #[test]
    fn matches_dense_solve_on_random_observations() {
        let g = grid(5, 5);
        let k = KernelParams::new(1.0, 3.0, 1e-4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut gp = GpPosterior::new(k, &g).unwrap();
        for _ in 0..5 {
            gp.add_observation(rng.random_range(0..5), rng.random_range(0..5), rng.random::<f64>())
                .unwrap();
        }
        let dense = oracle(&gp, &g);
        for i in 0..g.len() {
            assert!((gp.mean(i) - dense.mean[i]).abs() < 1e-10);
            assert!((gp.variance(i) - dense.variance(i).max(0.0)).abs() < 1e-10);
        }
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert!((gp.covariance(i, j) - dense.covariance[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn off_grid_query_matches_grid_cache() {
        let g = grid(6, 4);
        let k = KernelParams::new(1.0, 0.7, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut gp = GpPosterior::new(k, &g).unwrap();
        for _ in 0..12 {
            gp.add_observation(rng.random_range(0..6), rng.random_range(0..4), rng.random::<f64>())
                .unwrap();
        }
        for ix in 0..6 {
            for iw in 0..4 {
                let (m, v) = gp.posterior(ix, iw);
                let (m2, v2) = gp.posterior_at(g.point(ix, iw));
                assert!((m - m2).abs() < 1e-10 && (v - v2).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn far_point_keeps_prior_variance() {
        let g = GridSpace::new(vec![0.0, 100.0], vec![0.0]).unwrap();
        let mut gp = GpPosterior::new(KernelParams::new(1.0, 1.0, 1e-6).unwrap(), &g).unwrap();
        gp.add_observation(0, 0, 3.0).unwrap();
        let (m, v) = gp.posterior(1, 0);
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_observation_interpolates() {
        let g = grid(3, 2);
        let mut gp = GpPosterior::new(KernelParams::new(1.0, 1.0, 1e-8).unwrap(), &g).unwrap();
        for _ in 0..3 {
            gp.add_observation(2, 1, 0.42).unwrap();
        }
        assert!((gp.posterior(2, 1).0 - 0.42).abs() < 1e-7);
    }

    #[test]
    fn rejects_out_of_grid_and_nonfinite() {
        let g = grid(2, 2);
        let mut gp = GpPosterior::new(KernelParams::new(1.0, 1.0, 1e-2).unwrap(), &g).unwrap();
        assert!(gp.add_observation(2, 0, 1.0).is_err());
        assert!(gp.add_observation(0, 2, 1.0).is_err());
        assert!(gp.add_observation(0, 0, f64::NAN).is_err());
        assert!(gp.observations().is_empty());
    }

    #[test]
    fn incremental_matches_rebuild_on_fifty_observations() {
        let g = grid(7, 6);
        let k = KernelParams::new(1.0, 2.0, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut gp = GpPosterior::new(k, &g).unwrap();
        for _ in 0..50 {
            gp.add_observation(rng.random_range(0..7), rng.random_range(0..6), rng.random::<f64>() * 4.0 - 2.0)
                .unwrap();
        }
        let dense = oracle(&gp, &g);
        for i in 0..g.len() {
            assert!((gp.mean(i) - dense.mean[i]).abs() < 1e-8, "mean {i}");
            assert!((gp.variance(i) - dense.variance(i).max(0.0)).abs() < 1e-8, "var {i}");
        }
    }

    #[test]
    fn slice_covariance_is_symmetric_with_posterior_diagonal() {
        let g = grid(3, 4);
        let mut gp = GpPosterior::new(KernelParams::new(1.0, 1.0, 1e-3).unwrap(), &g).unwrap();
        gp.add_observation(1, 1, 0.5).unwrap();
        let s = gp.slice_covariance(1);
        for a in 0..4 {
            assert_eq!(s[(a, a)], gp.variance(g.flat(1, a)));
            for b in 0..4 {
                assert_eq!(s[(a, b)], s[(b, a)]);
            }
        }
    }

    #[test]
    fn prior_variance_min_is_signal_variance() {
        let g = grid(4, 4);
        assert_eq!(prior_variance_min(&KernelParams::new(1.0, 1.0, 1.0).unwrap(), &g), 1.0);
        assert_eq!(prior_variance_min(&KernelParams::new(2500.0, 4.0, 1e-4).unwrap(), &g), 2500.0);
    }
}
