//! Prediction: reconstruct every user's rating vector from the trained
//! model and write the dense prediction file.

use super::{dataset_dir, diffusion_ckpt_path, mf_ckpt_path, predictions_path};
use crate::config::{ModelKind, RunConfig};
use crate::manifest::RunManifest;
use anyhow::{bail, Context, Result};
use fdrec_core::baseline::predict_mf;
use fdrec_core::diffusion::{build_schedule, predict_matrix};
use fdrec_core::eval::PredictionMatrix;
use fdrec_core::groups::CounterfactualTargets;
use fdrec_core::io::{load_dump, save_predictions, DiffusionCheckpoint, MfCheckpoint};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug)]
pub struct PredictOutput {
    pub predictions: PathBuf,
}

pub fn cmd_predict(config: &RunConfig) -> Result<PredictOutput> {
    let mut manifest = RunManifest::start("predict", config);
    manifest.write(&config.out_dir)?;

    let dump = load_dump(&dataset_dir(&config.out_dir)).context("loading dataset dump")?;
    manifest.fingerprint("dataset", &dump.fingerprint);

    let mut meta = BTreeMap::new();
    meta.insert("dataset_fingerprint".to_string(), dump.fingerprint.clone());
    meta.insert("seed".to_string(), config.seed.to_string());

    let preds: PredictionMatrix = match config.model {
        ModelKind::Diffusion => {
            let ckpt_path = diffusion_ckpt_path(&config.out_dir);
            let ckpt = DiffusionCheckpoint::load(&ckpt_path).context("loading checkpoint")?;
            if ckpt.dataset_fingerprint != dump.fingerprint {
                bail!(
                    "refusing stale artifacts: checkpoint was trained on dataset {} \
                     but the dump here is {}",
                    ckpt.dataset_fingerprint,
                    dump.fingerprint
                );
            }
            let t_max = ckpt.model.dims.t_max;
            let t_start = if config.t_start == 0 {
                t_max
            } else {
                config.t_start
            };
            if t_start > t_max {
                bail!("t_start {t_start} exceeds the checkpoint's T = {t_max}");
            }
            let sched = build_schedule(t_max, ckpt.variance_scale, ckpt.beta_min)?;
            let targets = CounterfactualTargets::from_labels(dump.labels.clone(), &ckpt.vectors);
            meta.insert("model".to_string(), "diffusion".to_string());
            meta.insert("t_start".to_string(), t_start.to_string());
            meta.insert("ensemble".to_string(), config.ensemble.to_string());
            let values = predict_matrix(
                &ckpt.model,
                &sched,
                &dump.matrix,
                &dump.split,
                &targets,
                t_start,
                config.ensemble,
                config.seed,
            )?;
            PredictionMatrix {
                n_items: dump.matrix.n_items,
                n_users: dump.matrix.n_users,
                values,
                normalization: dump.matrix.normalization,
            }
        }
        ModelKind::Mf => {
            let ckpt_path = mf_ckpt_path(&config.out_dir);
            let ckpt = MfCheckpoint::load(&ckpt_path).context("loading MF checkpoint")?;
            if ckpt.dataset_fingerprint != dump.fingerprint {
                bail!(
                    "refusing stale artifacts: MF checkpoint was trained on dataset {} \
                     but the dump here is {}",
                    ckpt.dataset_fingerprint,
                    dump.fingerprint
                );
            }
            meta.insert("model".to_string(), "mf".to_string());
            predict_mf(&ckpt.params, &dump.matrix)
        }
    };

    let path = predictions_path(&config.out_dir);
    save_predictions(&path, &preds, &meta)?;
    manifest.artifact(&path);
    manifest.complete(&config.out_dir)?;
    Ok(PredictOutput { predictions: path })
}
