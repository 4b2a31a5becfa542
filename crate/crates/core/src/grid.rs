//! Finite design × environment grids.

use crate::error::{Error, Result};

/// The finite design set and environment set, each a strictly increasing list
/// of coordinates. Product points are indexed row-major: `ix * n_w + iw`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpace {
    x_values: Vec<f64>,
    w_values: Vec<f64>,
}

impl GridSpace {
    pub fn new(x_values: Vec<f64>, w_values: Vec<f64>) -> Result<Self> {
        for (name, v) in [("design", &x_values), ("environment", &w_values)] {
            if v.is_empty() {
                return Err(Error::InvalidParameter(format!("{name} grid is empty")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} grid has non-finite values")));
            }
            if v.windows(2).any(|p| p[0] >= p[1]) {
                return Err(Error::InvalidParameter(format!(
                    "{name} grid must be strictly increasing"
                )));
            }
        }
        Ok(GridSpace { x_values, w_values })
    }

    pub fn x_values(&self) -> &[f64] {
        &self.x_values
    }

    pub fn w_values(&self) -> &[f64] {
        &self.w_values
    }

    pub fn n_x(&self) -> usize {
        self.x_values.len()
    }

    pub fn n_w(&self) -> usize {
        self.w_values.len()
    }

    /// `|X × Ω|`.
    pub fn len(&self) -> usize {
        self.n_x() * self.n_w()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn flat(&self, ix: usize, iw: usize) -> usize {
        debug_assert!(ix < self.n_x() && iw < self.n_w());
        ix * self.n_w() + iw
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> (usize, usize) {
        (idx / self.n_w(), idx % self.n_w())
    }

    #[inline]
    pub fn point(&self, ix: usize, iw: usize) -> (f64, f64) {
        (self.x_values[ix], self.w_values[iw])
    }

    /// All product points in flat order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for &x in &self.x_values {
            for &w in &self.w_values {
                out.push((x, w));
            }
        }
        out
    }
}

/// `n` equally spaced values from `lo` to `hi`, both endpoints included.
pub fn make_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("grid needs n >= 2, got {n}")));
    }
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("grid needs lo < hi, got [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    v[n - 1] = hi;
    Ok(v)
}
