//! Uniform B-spline bases on a clamped domain.
//!
//! The knot vector is uniform with spacing `h = (max - min) / G`, extended
//! `k` knots past each end of the domain, giving `G + k` basis functions of
//! degree `k`. Inputs outside the domain are clamped to it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BSplineConfig {
    pub grid_size: usize,
    pub spline_order: usize,
    pub grid_min: f64,
    pub grid_max: f64,
}

impl Default for BSplineConfig {
    fn default() -> Self {
        BSplineConfig { grid_size: 10, spline_order: 3, grid_min: -3.0, grid_max: 3.0 }
    }
}

/// The `k + 1` basis functions that can be nonzero at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseBasis {
    /// Index of the first active basis function.
    pub start: usize,
    /// Active values; only the first `k + 1` entries are used.
    pub values: [f64; MAX_ORDER + 1],
    /// `d/dx` of the active values, zero where the input was clamped.
    pub derivs: [f64; MAX_ORDER + 1],
}

pub const MAX_ORDER: usize = 7;

impl BSplineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 {
            return Err(Error::InvalidConfig("grid_size must be at least 1".into()));
        }
        if self.spline_order > MAX_ORDER {
            return Err(Error::InvalidConfig(format!("spline_order above {MAX_ORDER}")));
        }
        if !(self.grid_min < self.grid_max) {
            return Err(Error::InvalidConfig("grid_min must be below grid_max".into()));
        }
        Ok(())
    }

    pub fn n_basis(&self) -> usize {
        self.grid_size + self.spline_order
    }

    pub fn spacing(&self) -> f64 {
        (self.grid_max - self.grid_min) / self.grid_size as f64
    }

    /// Knot `m`, for `m` in `0..=G + 2k`.
    pub fn knot(&self, m: usize) -> f64 {
        self.grid_min + (m as f64 - self.spline_order as f64) * self.spacing()
    }

    pub fn knots(&self) -> Vec<f64> {
        (0..=self.grid_size + 2 * self.spline_order).map(|m| self.knot(m)).collect()
    }

    /// Distance from `x` to the nearest knot inside the domain, in units of
    /// the spacing. Inputs outside the domain measure to its nearer end.
    pub fn knot_distance(&self, x: f64) -> f64 {
        let f = (x - self.grid_min) / self.spacing();
        let g = self.grid_size as f64;
        if f < 0.0 {
            -f
        } else if f > g {
            f - g
        } else {
            (f - f.round()).abs()
        }
    }

    /// Active basis values and derivatives at `x` (de Boor's triangular
    /// scheme restricted to the knot span containing `x`).
    pub fn sparse(&self, x: f64) -> SparseBasis {
        let k = self.spline_order;
        let h = self.spacing();
        let clamped = !(x > self.grid_min && x < self.grid_max);
        let x = x.clamp(self.grid_min, self.grid_max);
        let cell = (((x - self.grid_min) / h).floor() as usize).min(self.grid_size - 1);
        let span = cell + k;

        // n[r] holds degree-j values of basis span-j+r.
        let mut n = [0.0; MAX_ORDER + 2];
        let mut left = [0.0; MAX_ORDER + 2];
        let mut right = [0.0; MAX_ORDER + 2];
        let mut lower = [0.0; MAX_ORDER + 2];
        n[0] = 1.0;
        for j in 1..=k {
            left[j] = x - self.knot(span + 1 - j);
            right[j] = self.knot(span + j) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
            if j == k - 1 {
                lower[..k].copy_from_slice(&n[..k]);
            }
        }
        if k == 1 {
            lower[0] = 1.0;
        }

        let mut out = SparseBasis {
            start: cell,
            values: [0.0; MAX_ORDER + 1],
            derivs: [0.0; MAX_ORDER + 1],
        };
        out.values[..=k].copy_from_slice(&n[..=k]);
        if k > 0 && !clamped {
            // B'_{j,k} = (B_{j,k-1} - B_{j+1,k-1}) / h; lower[r] is degree
            // k-1 basis cell+1+r, i.e. active slot r+1 of the degree-k set.
            for r in 0..=k {
                let a = if r >= 1 { lower[r - 1] } else { 0.0 };
                let b = if r < k { lower[r] } else { 0.0 };
                out.derivs[r] = (a - b) / h;
            }
        }
        out
    }
}

/// Uniform draws in the domain that stay at least `margin·h` away from every
/// knot. Near a knot the outermost active basis value shrinks like
/// `(d/h)^k / k!`, and a gradient that small sits below the round-off floor of
/// a central difference, so gradient checks sample their inputs from here.
pub fn knot_avoiding_tensor(shape: &[usize], config: &BSplineConfig, margin: f64, rng: &mut impl Rng) -> Tensor {
    let h = config.spacing();
    let mut t = Tensor::zeros(shape);
    for v in t.data.iter_mut() {
        let cell = rng.gen_range(0..config.grid_size) as f64;
        let frac = rng.gen_range(margin..1.0 - margin);
        *v = config.grid_min + (cell + frac) * h;
    }
    t
}

/// All `G + k` basis values at `x`.
pub fn bspline_basis(x: f64, config: &BSplineConfig) -> Vec<f64> {
    let s = config.sparse(x);
    let mut out = vec![0.0; config.n_basis()];
    for r in 0..=config.spline_order {
        out[s.start + r] = s.values[r];
    }
    out
}
