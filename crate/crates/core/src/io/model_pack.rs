//! Packing models, optimizer state, and group vectors into the checkpoint
//! container and back.

use super::checkpoint::Checkpoint;
use crate::baseline::MfParams;
use crate::groups::{GroupVectorMethod, GroupVectors};
use crate::model::{ModelDims, ModelVariant, NoisePredictor};
use crate::nn::{AdamHyper, AdamState, DenseMatrix};
use crate::Result;
use std::path::Path;

pub const DIFFUSION_SCHEMA: &str = "diffusion-v1";
pub const MF_SCHEMA: &str = "mf-v1";

/// Everything the training and prediction stages need to persist for the
/// diffusion model.
pub struct DiffusionCheckpoint {
    pub model: NoisePredictor,
    pub adam: AdamState,
    pub vectors: GroupVectors,
    pub epochs_done: usize,
    pub variance_scale: f64,
    pub beta_min: f64,
    pub dataset_fingerprint: String,
    pub seed: u64,
}

impl DiffusionCheckpoint {
    pub fn to_container(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        ckpt.set("schema", DIFFUSION_SCHEMA);
        let d = self.model.dims;
        ckpt.set("variant", self.model.variant.name());
        ckpt.set("m", d.n_items);
        ckpt.set("t_max", d.t_max);
        ckpt.set("time_dim", d.time_dim);
        ckpt.set("mlp1_hidden", d.mlp1_hidden);
        ckpt.set("feat_dim", d.feat_dim);
        ckpt.set("enc_hidden", d.enc_hidden);
        ckpt.set("mlp3_hidden", d.mlp3_hidden);
        ckpt.set("attn_tokens", d.attn_tokens);
        ckpt.set("attn_token_dim", d.attn_token_dim);
        ckpt.set("variance_scale", self.variance_scale);
        ckpt.set("beta_min", self.beta_min);
        ckpt.set("group_method", self.vectors.method.name());
        ckpt.set("degenerate_a", self.vectors.degenerate_a);
        ckpt.set("degenerate_b", self.vectors.degenerate_b);
        ckpt.set("dataset_fingerprint", &self.dataset_fingerprint);
        ckpt.set("epochs_done", self.epochs_done);
        ckpt.set("seed", self.seed);
        ckpt.set("adam_step", self.adam.step);
        ckpt.set("adam_lr", self.adam.hyper.learning_rate);
        ckpt.set("adam_beta1", self.adam.hyper.beta1);
        ckpt.set("adam_beta2", self.adam.hyper.beta2);
        ckpt.set("adam_epsilon", self.adam.hyper.epsilon);

        for (name, values) in self.model.persistent_blocks() {
            ckpt.blocks.insert(name, values);
        }
        for (name, m, v) in self.adam.moments() {
            ckpt.blocks.insert(format!("adam.m.{name}"), m.clone());
            ckpt.blocks.insert(format!("adam.v.{name}"), v.clone());
        }
        ckpt.blocks.insert("group.a".to_string(), self.vectors.a.clone());
        ckpt.blocks.insert("group.b".to_string(), self.vectors.b.clone());
        ckpt
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<DiffusionCheckpoint> {
        let ckpt = Checkpoint::load(path)?;
        let schema = ckpt.meta_str("schema", path)?;
        if schema != DIFFUSION_SCHEMA {
            return Err(super::format_err(
                "checkpoint",
                path,
                format!("expected schema {DIFFUSION_SCHEMA}, found '{schema}'"),
            ));
        }
        let dims = ModelDims {
            n_items: ckpt.meta_parse("m", path)?,
            t_max: ckpt.meta_parse("t_max", path)?,
            time_dim: ckpt.meta_parse("time_dim", path)?,
            mlp1_hidden: ckpt.meta_parse("mlp1_hidden", path)?,
            feat_dim: ckpt.meta_parse("feat_dim", path)?,
            enc_hidden: ckpt.meta_parse("enc_hidden", path)?,
            mlp3_hidden: ckpt.meta_parse("mlp3_hidden", path)?,
            attn_tokens: ckpt.meta_parse("attn_tokens", path)?,
            attn_token_dim: ckpt.meta_parse("attn_token_dim", path)?,
        };
        let variant = ModelVariant::parse(ckpt.meta_str("variant", path)?)?;
        let seed: u64 = ckpt.meta_parse("seed", path)?;
        let mut model = NoisePredictor::new(dims, variant, seed);
        model.load_persistent_blocks(&ckpt.blocks)?;

        let hyper = AdamHyper {
            learning_rate: ckpt.meta_parse("adam_lr", path)?,
            beta1: ckpt.meta_parse("adam_beta1", path)?,
            beta2: ckpt.meta_parse("adam_beta2", path)?,
            epsilon: ckpt.meta_parse("adam_epsilon", path)?,
        };
        let step: u64 = ckpt.meta_parse("adam_step", path)?;
        let mut moments = Vec::new();
        for (name, len) in model.block_layout() {
            let m = ckpt.block(&format!("adam.m.{name}"), path)?.clone();
            let v = ckpt.block(&format!("adam.v.{name}"), path)?.clone();
            if m.len() != len || v.len() != len {
                return Err(super::format_err(
                    "checkpoint",
                    path,
                    format!("optimizer moment size mismatch for block '{name}'"),
                ));
            }
            moments.push((name, m, v));
        }
        let adam = AdamState::restore(hyper, step, moments);

        let vectors = GroupVectors {
            a: ckpt.block("group.a", path)?.clone(),
            b: ckpt.block("group.b", path)?.clone(),
            method: GroupVectorMethod::parse(ckpt.meta_str("group_method", path)?)?,
            degenerate_a: ckpt.meta_parse("degenerate_a", path)?,
            degenerate_b: ckpt.meta_parse("degenerate_b", path)?,
        };

        Ok(DiffusionCheckpoint {
            model,
            adam,
            vectors,
            epochs_done: ckpt.meta_parse("epochs_done", path)?,
            variance_scale: ckpt.meta_parse("variance_scale", path)?,
            beta_min: ckpt.meta_parse("beta_min", path)?,
            dataset_fingerprint: ckpt.meta_str("dataset_fingerprint", path)?.to_string(),
            seed,
        })
    }
}

/// MF checkpoint: same container, distinct schema tag.
pub struct MfCheckpoint {
    pub params: MfParams,
    pub epochs_done: usize,
    pub dataset_fingerprint: String,
    pub seed: u64,
}

impl MfCheckpoint {
    pub fn to_container(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        ckpt.set("schema", MF_SCHEMA);
        ckpt.set("n_users", self.params.user_factors.rows);
        ckpt.set("n_items", self.params.item_factors.rows);
        ckpt.set("factors", self.params.user_factors.cols);
        ckpt.set("lambda", self.params.lambda);
        ckpt.set("epochs_done", self.epochs_done);
        ckpt.set("dataset_fingerprint", &self.dataset_fingerprint);
        ckpt.set("seed", self.seed);
        ckpt.blocks
            .insert("mf.p".to_string(), self.params.user_factors.values.clone());
        ckpt.blocks
            .insert("mf.q".to_string(), self.params.item_factors.values.clone());
        ckpt
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<MfCheckpoint> {
        let ckpt = Checkpoint::load(path)?;
        let schema = ckpt.meta_str("schema", path)?;
        if schema != MF_SCHEMA {
            return Err(super::format_err(
                "checkpoint",
                path,
                format!("expected schema {MF_SCHEMA}, found '{schema}'"),
            ));
        }
        let n_users: usize = ckpt.meta_parse("n_users", path)?;
        let n_items: usize = ckpt.meta_parse("n_items", path)?;
        let factors: usize = ckpt.meta_parse("factors", path)?;
        let p = ckpt.block("mf.p", path)?.clone();
        let q = ckpt.block("mf.q", path)?.clone();
        if p.len() != n_users * factors || q.len() != n_items * factors {
            return Err(super::format_err(
                "checkpoint",
                path,
                "factor block sizes disagree with header",
            ));
        }
        Ok(MfCheckpoint {
            params: MfParams {
                user_factors: DenseMatrix {
                    rows: n_users,
                    cols: factors,
                    values: p,
                },
                item_factors: DenseMatrix {
                    rows: n_items,
                    cols: factors,
                    values: q,
                },
                lambda: ckpt.meta_parse("lambda", path)?,
            },
            epochs_done: ckpt.meta_parse("epochs_done", path)?,
            dataset_fingerprint: ckpt.meta_str("dataset_fingerprint", path)?.to_string(),
            seed: ckpt.meta_parse("seed", path)?,
        })
    }
}
