//! Regularized matrix factorization reference recommender.
//!
//! Plain rating regression: minimize the squared error over observed
//! training cells plus an L2 penalty on the factors, by mini-batch gradient
//! descent. Ratings are predicted as the inner product of user and item
//! factors and denormalized for reporting.

use crate::data::{DatasetSplit, InteractionMatrix};
use crate::error::CoreError;
use crate::eval::PredictionMatrix;
use crate::nn::DenseMatrix;
use crate::rng;
use crate::Result;
use rand::seq::SliceRandom;

#[derive(Debug, Clone)]
pub struct MfConfig {
    pub factors: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MfConfig {
    fn default() -> Self {
        MfConfig {
            factors: 20,
            lambda: 0.1,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MfParams {
    /// User factors P, n x f.
    pub user_factors: DenseMatrix,
    /// Item factors Q, m x f.
    pub item_factors: DenseMatrix,
    pub lambda: f64,
}

impl MfParams {
    pub fn init(n_users: usize, n_items: usize, factors: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, "mf-init", 0);
        MfParams {
            user_factors: DenseMatrix::init_fan_in(n_users, factors, &mut r),
            item_factors: DenseMatrix::init_fan_in(n_items, factors, &mut r),
            lambda: 0.0,
        }
    }

    #[inline]
    pub fn score(&self, item: usize, user: usize) -> f64 {
        let f = self.user_factors.cols;
        let p = &self.user_factors.values[user * f..(user + 1) * f];
        let q = &self.item_factors.values[item * f..(item + 1) * f];
        p.iter().zip(q).map(|(a, b)| a * b).sum()
    }
}

/// Mean over the batch of (r - p.q)^2 + lambda(|p|^2 + |q|^2) and its exact
/// gradients with respect to the touched factor rows.
pub fn mf_batch_loss_and_grads(
    params: &MfParams,
    cells: &[(usize, usize, f64)],
    lambda: f64,
) -> (f64, DenseMatrix, DenseMatrix) {
    let f = params.user_factors.cols;
    let mut dp = DenseMatrix::zeros(params.user_factors.rows, f);
    let mut dq = DenseMatrix::zeros(params.item_factors.rows, f);
    let inv = 1.0 / cells.len() as f64;
    let mut loss = 0.0;
    for &(item, user, r) in cells {
        let p = &params.user_factors.values[user * f..(user + 1) * f];
        let q = &params.item_factors.values[item * f..(item + 1) * f];
        let pred: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
        let e = r - pred;
        let p_norm2: f64 = p.iter().map(|v| v * v).sum();
        let q_norm2: f64 = q.iter().map(|v| v * v).sum();
        loss += e * e + lambda * (p_norm2 + q_norm2);
        for c in 0..f {
            dp.values[user * f + c] += inv * (-2.0 * e * q[c] + 2.0 * lambda * p[c]);
            dq.values[item * f + c] += inv * (-2.0 * e * p[c] + 2.0 * lambda * q[c]);
        }
    }
    (loss * inv, dp, dq)
}

/// Train on the normalized training cells. Returns the fitted factors and
/// the per-epoch mean batch loss.
pub fn train_mf(
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    config: &MfConfig,
) -> Result<(MfParams, Vec<f64>)> {
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    for user in 0..matrix.n_users {
        let train = split.train_col(user);
        for item in 0..matrix.n_items {
            if train[item] == 1 {
                cells.push((item, user, matrix.value(item, user)));
            }
        }
    }
    if cells.is_empty() {
        return Err(CoreError::Dataset("empty training split".to_string()));
    }

    let mut params = MfParams::init(matrix.n_users, matrix.n_items, config.factors, config.seed);
    params.lambda = config.lambda;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        cells.shuffle(&mut rng::stream(config.seed, "mf-shuffle", epoch as u64));
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in cells.chunks(config.batch_size) {
            let (loss, dp, dq) = mf_batch_loss_and_grads(&params, batch, config.lambda);
            if !loss.is_finite() {
                return Err(CoreError::NonFiniteLoss {
                    epoch,
                    batch: batches,
                    param_norms: format!(
                        "P={:.3e}, Q={:.3e}",
                        params.user_factors.values.iter().map(|v| v * v).sum::<f64>().sqrt(),
                        params.item_factors.values.iter().map(|v| v * v).sum::<f64>().sqrt()
                    ),
                });
            }
            let lr = config.learning_rate;
            for (v, g) in params.user_factors.values.iter_mut().zip(&dp.values) {
                *v -= lr * g;
            }
            for (v, g) in params.item_factors.values.iter_mut().zip(&dq.values) {
                *v -= lr * g;
            }
            epoch_loss += loss;
            batches += 1;
        }
        history.push(epoch_loss / batches as f64);
    }
    Ok((params, history))
}

/// Dense denormalized predictions P Q^T.
pub fn predict_mf(params: &MfParams, matrix: &InteractionMatrix) -> PredictionMatrix {
    let (m, n) = (matrix.n_items, matrix.n_users);
    let norm = matrix.normalization;
    let mut values = vec![0.0; m * n];
    for user in 0..n {
        for item in 0..m {
            values[user * m + item] = norm.denormalize(params.score(item, user));
        }
    }
    PredictionMatrix {
        n_items: m,
        n_users: n,
        values,
        normalization: norm,
    }
}
