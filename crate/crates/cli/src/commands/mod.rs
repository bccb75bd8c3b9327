//! Command implementations. Every command is deterministic under fixed
//! (inputs, config, seed); artifacts land under the config's output
//! directory with fixed names.

mod ablate;
mod evaluate;
mod gradcheck;
mod ingest;
mod predict;
mod sparsity;
mod sweep;
mod train;

pub use ablate::{cmd_ablate, AblateOutput};
pub use evaluate::{cmd_eval, EvalOutput};
pub use gradcheck::{cmd_gradcheck, GradcheckReport};
pub use ingest::{cmd_ingest, IngestOutput};
pub use predict::{cmd_predict, PredictOutput};
pub use sparsity::{cmd_sparsity, SparsityOutput};
pub use sweep::{cmd_sweep, SweepOutput, SweepParam};
pub use train::{cmd_train, TrainOutput};

use anyhow::{Context, Result};
use std::path::{Path, PathBuf};

pub fn dataset_dir(out: &Path) -> PathBuf {
    out.join("dataset")
}

/// Byte-for-byte copy of an ingested dataset dump into a sub-run directory,
/// so the sub-run sees the identical fingerprint.
pub(crate) fn copy_dump(src: &Path, dst: &Path) -> Result<()> {
    std::fs::create_dir_all(dst)?;
    for name in ["header.txt", "items.txt", "users.txt", "ratings.bin"] {
        std::fs::copy(src.join(name), dst.join(name))
            .with_context(|| format!("copying dump file {name}"))?;
    }
    Ok(())
}

pub fn diffusion_ckpt_path(out: &Path) -> PathBuf {
    out.join("model.ckpt")
}

pub fn mf_ckpt_path(out: &Path) -> PathBuf {
    out.join("mf.ckpt")
}

pub fn loss_history_path(out: &Path) -> PathBuf {
    out.join("loss_history.txt")
}

pub fn predictions_path(out: &Path) -> PathBuf {
    out.join("predictions.bin")
}

pub fn metrics_json_path(out: &Path) -> PathBuf {
    out.join("metrics.json")
}

pub fn metrics_txt_path(out: &Path) -> PathBuf {
    out.join("metrics.txt")
}
