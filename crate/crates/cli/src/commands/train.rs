//! Training: group vectors, the conditional noise predictor (or the MF
//! baseline), per-epoch checkpoints, and the loss history file.

use super::{dataset_dir, diffusion_ckpt_path, loss_history_path, mf_ckpt_path};
use crate::config::{ModelKind, RunConfig};
use crate::manifest::RunManifest;
use anyhow::{bail, Context, Result};
use fdrec_core::baseline::{train_mf, MfConfig};
use fdrec_core::data::GroupAssignment;
use fdrec_core::diffusion::{build_schedule, train, LossHistory, TrainConfig};
use fdrec_core::groups::{mean_pool, pca_first_pc, CounterfactualTargets, GroupVectorMethod};
use fdrec_core::io::{load_dump, save_loss_history, save_vector_text, DatasetDump};
use fdrec_core::io::{DiffusionCheckpoint, MfCheckpoint};
use fdrec_core::model::NoisePredictor;
use fdrec_core::nn::{AdamHyper, AdamState};
use std::path::PathBuf;

#[derive(Debug)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub loss_history: PathBuf,
    pub epochs_done: usize,
    pub final_loss: Option<f64>,
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainOutput> {
    let mut manifest = RunManifest::start("train", config);
    manifest.write(&config.out_dir)?;

    let dump = load_dump(&dataset_dir(&config.out_dir)).context("loading dataset dump")?;
    manifest.fingerprint("dataset", &dump.fingerprint);

    let result = match config.model {
        ModelKind::Diffusion => train_diffusion(config, &dump),
        ModelKind::Mf => train_mf_baseline(config, &dump),
    };
    match result {
        Ok(out) => {
            manifest.artifact(&out.checkpoint);
            manifest.artifact(&out.loss_history);
            manifest.complete(&config.out_dir)?;
            Ok(out)
        }
        Err(e) => {
            manifest.abort(&config.out_dir, &e.to_string())?;
            Err(e)
        }
    }
}

pub fn train_diffusion(config: &RunConfig, dump: &DatasetDump) -> Result<TrainOutput> {
    let ckpt_path = diffusion_ckpt_path(&config.out_dir);
    let dims = config.model_dims(dump.matrix.n_items);
    let sched = build_schedule(config.t_steps, config.variance_scale, config.beta_min)?;

    // Resume if a compatible checkpoint is already present.
    let (mut model, mut adam, vectors, start_epoch, mut history) = if ckpt_path.exists() {
        let ckpt = DiffusionCheckpoint::load(&ckpt_path)?;
        if ckpt.dataset_fingerprint != dump.fingerprint {
            bail!(
                "checkpoint/dataset fingerprint mismatch: checkpoint has {}, dataset has {}",
                ckpt.dataset_fingerprint,
                dump.fingerprint
            );
        }
        if ckpt.model.dims != dims
            || ckpt.model.variant != config.variant
            || ckpt.variance_scale != config.variance_scale
            || ckpt.beta_min != config.beta_min
            || ckpt.vectors.method != config.group_method
            || ckpt.seed != config.seed
        {
            bail!(
                "existing checkpoint at {} was trained under a different configuration; \
                 remove it or change out_dir",
                ckpt_path.display()
            );
        }
        let history = load_loss_history(&loss_history_path(&config.out_dir), ckpt.epochs_done)?;
        (ckpt.model, ckpt.adam, ckpt.vectors, ckpt.epochs_done, history)
    } else {
        let assignment =
            GroupAssignment::from_labels(&dump.matrix, &dump.labels, config.attribute);
        let vectors = match config.group_method {
            GroupVectorMethod::MeanPool => mean_pool(&dump.matrix, &dump.split, &assignment)?,
            GroupVectorMethod::Pca => pca_first_pc(
                &dump.matrix,
                &dump.split,
                &assignment,
                config.pca_tol,
                config.pca_max_iter,
            )?,
        };
        let model = NoisePredictor::new(dims, config.variant, config.seed);
        let adam = AdamState::new(
            AdamHyper {
                learning_rate: config.learning_rate,
                ..AdamHyper::default()
            },
            &model.block_layout(),
        );
        (model, adam, vectors, 0, LossHistory::default())
    };

    save_vector_text(&config.out_dir.join("group_a.txt"), &vectors.a)?;
    save_vector_text(&config.out_dir.join("group_b.txt"), &vectors.b)?;

    let targets = CounterfactualTargets::from_labels(dump.labels.clone(), &vectors);
    let train_config = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        seed: config.seed,
    };

    // One core call per epoch so a checkpoint lands after every epoch; a
    // non-finite abort then leaves the previous epoch's file untouched.
    for epoch in start_epoch..config.epochs {
        let mut upto = train_config.clone();
        upto.epochs = epoch + 1;
        train(
            &mut model,
            &dump.matrix,
            &dump.split,
            &targets,
            &sched,
            &upto,
            &mut adam,
            epoch,
            &mut history,
        )?;
        let ckpt = DiffusionCheckpoint {
            model: model.clone(),
            adam: adam.clone(),
            vectors: vectors.clone(),
            epochs_done: epoch + 1,
            variance_scale: config.variance_scale,
            beta_min: config.beta_min,
            dataset_fingerprint: dump.fingerprint.clone(),
            seed: config.seed,
        };
        ckpt.save(&ckpt_path)?;
        save_loss_history(&loss_history_path(&config.out_dir), &history.per_epoch)?;
    }

    Ok(TrainOutput {
        checkpoint: ckpt_path,
        loss_history: loss_history_path(&config.out_dir),
        epochs_done: config.epochs,
        final_loss: history.per_epoch.last().copied(),
    })
}

fn load_loss_history(path: &std::path::Path, expected_epochs: usize) -> Result<LossHistory> {
    let mut history = LossHistory::default();
    if path.exists() {
        for line in std::fs::read_to_string(path)?.lines() {
            if let Some((_, loss)) = line.split_once(' ') {
                history.per_epoch.push(loss.parse()?);
            }
        }
    }
    if history.per_epoch.len() != expected_epochs {
        bail!(
            "loss history at {} has {} epochs but the checkpoint reports {}",
            path.display(),
            history.per_epoch.len(),
            expected_epochs
        );
    }
    Ok(history)
}

pub fn train_mf_baseline(config: &RunConfig, dump: &DatasetDump) -> Result<TrainOutput> {
    let mf_config = MfConfig {
        factors: config.mf_factors,
        lambda: config.mf_lambda,
        learning_rate: config.learning_rate,
        batch_size: config.batch_size,
        epochs: config.mf_epochs,
        seed: config.seed,
    };
    let (params, history) = train_mf(&dump.matrix, &dump.split, &mf_config)?;
    let ckpt_path = mf_ckpt_path(&config.out_dir);
    MfCheckpoint {
        params,
        epochs_done: config.mf_epochs,
        dataset_fingerprint: dump.fingerprint.clone(),
        seed: config.seed,
    }
    .save(&ckpt_path)?;
    let history_path = config.out_dir.join("mf_loss_history.txt");
    save_loss_history(&history_path, &history)?;
    Ok(TrainOutput {
        checkpoint: ckpt_path,
        loss_history: history_path,
        epochs_done: config.mf_epochs,
        final_loss: history.last().copied(),
    })
}
