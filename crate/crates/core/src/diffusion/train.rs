//! Masked diffusion training.
//!
//! Per batch element: draw a step t uniformly on {1..T} and a Gaussian
//! noise vector, noise the user's train-masked rating column with the
//! closed-form forward process (noise restricted to observed coordinates,
//! so masked-out noise coordinates cannot influence anything), predict the
//! noise conditioned on the user's counterfactual group vector, and descend
//! the train-masked squared error with Adam.

use super::{q_sample, NoiseSchedule};
use crate::data::{DatasetSplit, InteractionMatrix};
use crate::error::CoreError;
use crate::groups::CounterfactualTargets;
use crate::model::{NoisePredictor, PredictorGrads};
use crate::nn::AdamState;
use crate::rng;
use crate::Result;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

/// Fixed work-chunk size for deterministic parallel gradient reduction:
/// chunk partials are summed in index order, so results do not depend on
/// the number of worker threads.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// Per-epoch mean of the per-element masked losses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub per_epoch: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Epochs actually run in this call (resume runs fewer).
    pub epochs_run: usize,
}

/// Sampled randomness for one batch: one (step, noise) pair per user.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub users: Vec<usize>,
    pub steps: Vec<usize>,
    pub noises: Vec<Vec<f64>>,
}

/// Draw the batch randomness. Streams are keyed by (epoch, user), so the
/// draws are independent of batch composition and parallel schedule.
pub fn sample_batch(
    users: &[usize],
    epoch: usize,
    seed: u64,
    sched: &NoiseSchedule,
    n_items: usize,
) -> TrainBatch {
    let mut steps = Vec::with_capacity(users.len());
    let mut noises = Vec::with_capacity(users.len());
    for &user in users {
        let mut r = rng::stream2(seed, "train-noise", epoch as u64, user as u64);
        steps.push(r.random_range(1..=sched.t_max));
        noises.push(rng::normal_vec(&mut r, n_items));
    }
    TrainBatch {
        users: users.to_vec(),
        steps,
        noises,
    }
}

/// Mean masked loss over the batch and the matching parameter gradients.
pub fn batch_loss_and_grads(
    model: &NoisePredictor,
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    targets: &CounterfactualTargets,
    sched: &NoiseSchedule,
    batch: &TrainBatch,
) -> Result<(f64, PredictorGrads)> {
    let m = matrix.n_items;
    let chunks: Vec<Result<(f64, PredictorGrads)>> = batch
        .users
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(chunk_idx, users)| {
            let mut chunk_loss = 0.0;
            let mut chunk_grads = PredictorGrads::zeros_like(model);
            for (offset, &user) in users.iter().enumerate() {
                let elem = chunk_idx * GRAD_CHUNK + offset;
                let t = batch.steps[elem];
                let eps = &batch.noises[elem];
                let train_mask = split.train_col(user);
                let values = matrix.user_column(user);

                let x0: Vec<f64> = (0..m)
                    .map(|i| if train_mask[i] == 1 { values[i] } else { 0.0 })
                    .collect();
                let masked_eps: Vec<f64> = (0..m)
                    .map(|i| if train_mask[i] == 1 { eps[i] } else { 0.0 })
                    .collect();
                let x_t = q_sample(&x0, t, &masked_eps, sched)?;

                let y = targets.column(user);
                let (eps_hat, cache) = model.forward(&x_t, t, y)?;

                let mut loss = 0.0;
                let mut d_eps = vec![0.0; m];
                for i in 0..m {
                    if train_mask[i] == 1 {
                        let r = eps[i] - eps_hat[i];
                        loss += r * r;
                        d_eps[i] = -2.0 * r;
                    }
                }
                chunk_loss += loss;
                let g = model.backward(&cache, &d_eps)?;
                chunk_grads.accumulate(&g);
            }
            Ok((chunk_loss, chunk_grads))
        })
        .collect();

    let mut total_loss = 0.0;
    let mut grads = PredictorGrads::zeros_like(model);
    for chunk in chunks {
        let (l, g) = chunk?;
        total_loss += l;
        grads.accumulate(&g);
    }
    let inv = 1.0 / batch.users.len() as f64;
    grads.scale(inv);
    Ok((total_loss * inv, grads))
}

/// Run epochs `start_epoch..config.epochs`, appending one mean loss per
/// epoch to `history`. On a non-finite loss the error carries diagnostics
/// and the model keeps the parameters from before the offending batch.
pub fn train(
    model: &mut NoisePredictor,
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    targets: &CounterfactualTargets,
    sched: &NoiseSchedule,
    config: &TrainConfig,
    adam: &mut AdamState,
    start_epoch: usize,
    history: &mut LossHistory,
) -> Result<TrainOutcome> {
    if config.batch_size == 0 {
        return Err(CoreError::InvalidArgument(
            "batch size must be positive".to_string(),
        ));
    }
    let active_users: Vec<usize> = (0..matrix.n_users)
        .filter(|&u| split.train_col(u).iter().any(|&v| v == 1))
        .collect();
    if active_users.is_empty() {
        return Err(CoreError::Dataset(
            "no users with training interactions".to_string(),
        ));
    }

    let mut epochs_run = 0;
    for epoch in start_epoch..config.epochs {
        let mut order = active_users.clone();
        order.shuffle(&mut rng::stream(config.seed, "train-shuffle", epoch as u64));

        let mut epoch_loss_sum = 0.0;
        for (batch_idx, users) in order.chunks(config.batch_size).enumerate() {
            let batch = sample_batch(users, epoch, config.seed, sched, matrix.n_items);
            let (batch_loss, grads) =
                batch_loss_and_grads(model, matrix, split, targets, sched, &batch)?;
            if !batch_loss.is_finite() {
                return Err(CoreError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    param_norms: model.block_norms(),
                });
            }
            epoch_loss_sum += batch_loss * users.len() as f64;

            let grad_blocks = grads.blocks();
            let grad_owned: Vec<(String, &[f64])> = grad_blocks;
            adam.step(&mut model.blocks_mut(), &grad_owned)?;
        }
        history
            .per_epoch
            .push(epoch_loss_sum / active_users.len() as f64);
        epochs_run += 1;
    }
    Ok(TrainOutcome { epochs_run })
}
