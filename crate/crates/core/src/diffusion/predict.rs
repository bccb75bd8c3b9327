//! Per-user rating reconstruction.
//!
//! The user's train-masked rating vector is noised forward to `t_start`
//! (noise restricted to observed coordinates, matching training) and then
//! denoised step by step, conditioning each noise prediction on the user's
//! counterfactual group vector. The reconstruction is denormalized back to
//! the dataset's rating scale.

use super::{q_sample, reverse_step, NoiseSchedule};
use crate::data::{DatasetSplit, InteractionMatrix, Normalization};
use crate::error::CoreError;
use crate::groups::CounterfactualTargets;
use crate::model::NoisePredictor;
use crate::rng;
use crate::Result;
use rand::Rng;
use rayon::prelude::*;

/// Reverse-process reconstruction on the normalized scale.
pub fn predict_user_normalized(
    model: &NoisePredictor,
    sched: &NoiseSchedule,
    x0_obs: &[f64],
    train_mask: &[u8],
    y: &[f64],
    t_start: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if t_start < 1 || t_start > sched.t_max {
        return Err(CoreError::InvalidArgument(format!(
            "t_start {t_start} out of range 1..={}",
            sched.t_max
        )));
    }
    let m = x0_obs.len();
    let eps: Vec<f64> = rng::normal_vec(rng, m)
        .into_iter()
        .enumerate()
        .map(|(i, e)| if train_mask[i] == 1 { e } else { 0.0 })
        .collect();
    let mut x = q_sample(x0_obs, t_start, &eps, sched)?;
    for t in (1..=t_start).rev() {
        let eps_hat = model.predict_noise(&x, t, y)?;
        let z = if t == 1 {
            vec![0.0; m]
        } else {
            rng::normal_vec(rng, m)
        };
        x = reverse_step(&x, t, &eps_hat, &z, sched)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                context: "predict_user".to_string(),
                detail: format!("non-finite sample at step {t}"),
            });
        }
    }
    Ok(x)
}

/// Single reconstruction, denormalized to the rating scale.
pub fn predict_user(
    model: &NoisePredictor,
    sched: &NoiseSchedule,
    x0_obs: &[f64],
    train_mask: &[u8],
    y: &[f64],
    t_start: usize,
    rng: &mut impl Rng,
    norm: &Normalization,
) -> Result<Vec<f64>> {
    let x = predict_user_normalized(model, sched, x0_obs, train_mask, y, t_start, rng)?;
    Ok(x.iter().map(|&v| norm.denormalize(v)).collect())
}

/// Mean of `n_samples` independent reconstructions, each on its own
/// seed-derived stream.
#[allow(clippy::too_many_arguments)]
pub fn predict_ensemble(
    model: &NoisePredictor,
    sched: &NoiseSchedule,
    x0_obs: &[f64],
    train_mask: &[u8],
    y: &[f64],
    t_start: usize,
    n_samples: usize,
    seed: u64,
    user_index: usize,
    norm: &Normalization,
) -> Result<Vec<f64>> {
    if n_samples < 1 {
        return Err(CoreError::InvalidArgument(
            "ensemble size must be at least 1".to_string(),
        ));
    }
    let m = x0_obs.len();
    let mut mean = vec![0.0; m];
    for sample in 0..n_samples {
        let mut stream = rng::stream2(seed, "predict", sample as u64, user_index as u64);
        let pred = predict_user(
            model, sched, x0_obs, train_mask, y, t_start, &mut stream, norm,
        )?;
        for (acc, p) in mean.iter_mut().zip(&pred) {
            *acc += p;
        }
    }
    let inv = 1.0 / n_samples as f64;
    for v in mean.iter_mut() {
        *v *= inv;
    }
    Ok(mean)
}

/// Dense denormalized prediction matrix (column-major items x users),
/// computed in parallel across users with per-user streams.
#[allow(clippy::too_many_arguments)]
pub fn predict_matrix(
    model: &NoisePredictor,
    sched: &NoiseSchedule,
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    targets: &CounterfactualTargets,
    t_start: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let m = matrix.n_items;
    let norm = matrix.normalization;
    let columns: Vec<Result<Vec<f64>>> = (0..matrix.n_users)
        .into_par_iter()
        .map(|user| {
            let train_mask = split.train_col(user);
            let values = matrix.user_column(user);
            let x0: Vec<f64> = (0..m)
                .map(|i| if train_mask[i] == 1 { values[i] } else { 0.0 })
                .collect();
            predict_ensemble(
                model,
                sched,
                &x0,
                train_mask,
                targets.column(user),
                t_start,
                n_samples,
                seed,
                user,
                &norm,
            )
        })
        .collect();

    let mut out = vec![0.0; m * matrix.n_users];
    for (user, col) in columns.into_iter().enumerate() {
        out[user * m..(user + 1) * m].copy_from_slice(&col?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::build_schedule;
    use crate::model::{ModelDims, ModelVariant, NoisePredictor};

    fn tiny_model(m: usize, t_max: usize, seed: u64) -> NoisePredictor {
        NoisePredictor::new(
            ModelDims {
                n_items: m,
                t_max,
                time_dim: 6,
                mlp1_hidden: 12,
                feat_dim: 8,
                enc_hidden: 8,
                mlp3_hidden: 12,
                attn_tokens: 2,
                attn_token_dim: 4,
            },
            ModelVariant::Base,
            seed,
        )
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let m = 10;
        let sched = build_schedule(12, 1e-2, 1e-3).unwrap();
        let model = tiny_model(m, 12, 4);
        let x0 = crate::rng::normal_vec(&mut crate::rng::stream(1, "x", 0), m);
        let mask = vec![1u8; m];
        let y = crate::rng::normal_vec(&mut crate::rng::stream(1, "y", 0), m);
        let norm = crate::data::Normalization {
            scheme: crate::data::NormalizationScheme::MinMax,
            lo: -1.0,
            hi: 1.0,
        };
        let a = predict_user(
            &model, &sched, &x0, &mask, &y, 12,
            &mut crate::rng::stream(9, "p", 0), &norm,
        )
        .unwrap();
        let b = predict_user(
            &model, &sched, &x0, &mask, &y, 12,
            &mut crate::rng::stream(9, "p", 0), &norm,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn telescoping_recovers_input_without_noise() {
        // eps_hat == 0 and all stochastic terms zeroed: iterating the reverse
        // step divides out exactly the forward scaling.
        let m = 5;
        let t_start = 9;
        let sched = build_schedule(t_start, 1e-2, 1e-3).unwrap();
        let x0 = vec![0.4, -0.2, 0.9, 0.0, -1.0];
        let x_start = q_sample(&x0, t_start, &vec![0.0; m], &sched).unwrap();
        let mut x = x_start;
        for t in (1..=t_start).rev() {
            x = reverse_step(&x, t, &vec![0.0; m], &vec![0.0; m], &sched).unwrap();
        }
        for (a, b) in x.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-10, "telescoping failed: {a} vs {b}");
        }
    }

    #[test]
    fn ensemble_of_one_equals_single_run() {
        let m = 8;
        let sched = build_schedule(6, 1e-2, 1e-3).unwrap();
        let model = tiny_model(m, 6, 4);
        let x0 = crate::rng::normal_vec(&mut crate::rng::stream(2, "x", 0), m);
        let mask = vec![1u8; m];
        let y = crate::rng::normal_vec(&mut crate::rng::stream(2, "y", 0), m);
        let norm = crate::data::Normalization {
            scheme: crate::data::NormalizationScheme::MinMax,
            lo: 1.0,
            hi: 5.0,
        };
        let single = predict_user(
            &model, &sched, &x0, &mask, &y, 6,
            &mut crate::rng::stream2(77, "predict", 0, 3), &norm,
        )
        .unwrap();
        let ens = predict_ensemble(&model, &sched, &x0, &mask, &y, 6, 1, 77, 3, &norm).unwrap();
        assert_eq!(single, ens);
    }

    #[test]
    fn ensemble_mean_variance_shrinks_with_samples() {
        // Monte Carlo: variance of the ensemble mean falls roughly like 1/n.
        let m = 6;
        let sched = build_schedule(10, 5e-2, 1e-3).unwrap(); // larger noise scale
        let model = tiny_model(m, 10, 8);
        let x0 = vec![0.5, -0.5, 0.2, 0.0, 0.9, -0.1];
        let mask = vec![1u8; m];
        let y = crate::rng::normal_vec(&mut crate::rng::stream(3, "y", 0), m);
        let norm = crate::data::Normalization {
            scheme: crate::data::NormalizationScheme::MinMax,
            lo: -1.0,
            hi: 1.0,
        };
        let reps = 24;
        let var_of = |n_samples: usize| -> f64 {
            let preds: Vec<Vec<f64>> = (0..reps)
                .map(|rep| {
                    predict_ensemble(
                        &model, &sched, &x0, &mask, &y, 10, n_samples,
                        1000 + rep as u64, 0, &norm,
                    )
                    .unwrap()
                })
                .collect();
            // Mean per-coordinate variance across repetitions.
            let mut total = 0.0;
            for i in 0..m {
                let mean: f64 = preds.iter().map(|p| p[i]).sum::<f64>() / reps as f64;
                let var: f64 = preds.iter().map(|p| (p[i] - mean).powi(2)).sum::<f64>()
                    / (reps - 1) as f64;
                total += var;
            }
            total / m as f64
        };
        let v1 = var_of(1);
        let v4 = var_of(4);
        let v16 = var_of(16);
        assert!(v4 < v1, "v4 {v4} !< v1 {v1}");
        assert!(v16 < v4, "v16 {v16} !< v4 {v4}");
        // Roughly 1/n: allow generous slack for Monte Carlo noise.
        assert!(v16 < v1 / 4.0, "v16 {v16} not ~ v1/16 (v1 = {v1})");
    }
}
