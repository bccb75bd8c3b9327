//! Affine layer y = W x + b with exact reverse-mode gradients.

use super::{check_dim, DenseMatrix};
use crate::Result;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub w: DenseMatrix,
    pub bias: Vec<f64>,
}

/// Retains the input for the backward pass.
#[derive(Debug, Clone)]
pub struct LinearCache {
    pub x: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub dw: DenseMatrix,
    pub dbias: Vec<f64>,
}

impl LinearLayer {
    pub fn new(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        LinearLayer {
            w: DenseMatrix::init_fan_in(out_dim, in_dim, rng),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        LinearLayer {
            w: DenseMatrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows
    }

    pub fn param_count(&self) -> usize {
        self.w.values.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, LinearCache)> {
        check_dim("linear_forward input", self.in_dim(), x.len())?;
        let mut y = self.w.matvec(x);
        for (yi, bi) in y.iter_mut().zip(&self.bias) {
            *yi += bi;
        }
        Ok((y, LinearCache { x: x.to_vec() }))
    }

    /// Gradients of a scalar loss w.r.t. (W, bias, x) given dL/dy.
    pub fn backward(&self, cache: &LinearCache, dy: &[f64]) -> Result<(LinearGrads, Vec<f64>)> {
        check_dim("linear_backward cotangent", self.out_dim(), dy.len())?;
        let mut dw = DenseMatrix::zeros(self.out_dim(), self.in_dim());
        dw.add_outer(dy, &cache.x);
        let dx = self.w.matvec_t(dy);
        Ok((
            LinearGrads {
                dw,
                dbias: dy.to_vec(),
            },
            dx,
        ))
    }
}

impl LinearGrads {
    pub fn zeros_like(layer: &LinearLayer) -> Self {
        LinearGrads {
            dw: DenseMatrix::zeros(layer.out_dim(), layer.in_dim()),
            dbias: vec![0.0; layer.out_dim()],
        }
    }

    pub fn accumulate(&mut self, other: &LinearGrads) {
        for (a, b) in self.dw.values.iter_mut().zip(&other.dw.values) {
            *a += b;
        }
        for (a, b) in self.dbias.iter_mut().zip(&other.dbias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.dw.values.iter_mut() {
            *v *= c;
        }
        for v in self.dbias.iter_mut() {
            *v *= c;
        }
    }
}
