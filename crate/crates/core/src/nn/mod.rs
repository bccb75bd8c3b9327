//! Minimal dense neural kernel: linear layers, MLPs, scaled dot-product
//! attention, Adam, and a finite-difference gradient checker. Reverse-mode
//! gradients are hand-written per operation; no external ML framework.

mod adam;
mod attention;
mod gradcheck;
mod linear;
mod mlp;

pub use adam::{AdamHyper, AdamState};
pub use attention::{softmax, Attention, AttentionCache, AttentionGrads};
pub use gradcheck::{grad_check, grad_check_block};
pub use linear::{LinearCache, LinearGrads, LinearLayer};
pub use mlp::{Mlp, MlpCache, MlpGrads};

use crate::error::CoreError;
use crate::Result;
use rand::Rng;

/// Dense row-major matrix of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut values = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
            values.extend_from_slice(row);
        }
        DenseMatrix {
            rows: r,
            cols: c,
            values,
        }
    }

    /// Identity matrix (square).
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// Fan-in-scaled uniform initialization: U(-1/sqrt(cols), 1/sqrt(cols)).
    pub fn init_fan_in(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (cols.max(1) as f64).sqrt();
        let values = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        DenseMatrix { rows, cols, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[i] = acc;
        }
        y
    }

    /// y = A^T x.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for (yj, a) in y.iter_mut().zip(row) {
                *yj += xi * a;
            }
        }
        y
    }

    /// A += u v^T (outer-product accumulate).
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            let ui = u[i];
            if ui == 0.0 {
                continue;
            }
            let row = &mut self.values[i * self.cols..(i + 1) * self.cols];
            for (r, vj) in row.iter_mut().zip(v) {
                *r += ui * vj;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Smooth ramp nonlinearity used between MLP layers: x * sigmoid(x).
#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Derivative of [`silu`].
#[inline]
pub fn silu_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_dim(context: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(CoreError::DimensionMismatch {
            context: context.to_string(),
            expected,
            actual,
        });
    }
    Ok(())
}

/// Concatenate named parameter blocks into one flat vector (block order).
pub fn flatten_blocks(blocks: &[(String, &[f64])]) -> Vec<f64> {
    let total: usize = blocks.iter().map(|(_, b)| b.len()).sum();
    let mut flat = Vec::with_capacity(total);
    for (_, b) in blocks {
        flat.extend_from_slice(b);
    }
    flat
}

/// Scatter a flat vector back into named blocks (inverse of [`flatten_blocks`]).
pub fn unflatten_blocks(blocks: &mut [(String, &mut [f64])], flat: &[f64]) {
    let mut offset = 0;
    for (_, b) in blocks.iter_mut() {
        b.copy_from_slice(&flat[offset..offset + b.len()]);
        offset += b.len();
    }
    assert_eq!(offset, flat.len(), "flat vector length mismatch");
}
