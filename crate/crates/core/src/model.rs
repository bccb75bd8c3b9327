//! The conditional noise predictor.
//!
//! Composition: a learned time embedding is concatenated to the noised
//! rating vector and passed through MLP1 to produce the user feature z;
//! the conditioning group vector y goes through the condition encoder
//! (MLP2) to form the attention query; attention over (query=Enc(y),
//! key=z, value=z) yields the counterfactual feature z'; MLP3 maps z'
//! back to an m-dimensional noise estimate.
//!
//! Two ablation variants are provided: `NoEncoder` replaces the condition
//! encoder with a fixed, untrained random resize of y, and
//! `NoCounterfactual` removes the condition path and attention entirely
//! (MLP3 then reads z directly).

use crate::error::CoreError;
use crate::nn::{
    Attention, AttentionCache, AttentionGrads, DenseMatrix, LinearLayer, Mlp, MlpCache, MlpGrads,
};
use crate::rng;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    Base,
    NoEncoder,
    NoCounterfactual,
}

impl ModelVariant {
    pub fn name(&self) -> &'static str {
        match self {
            ModelVariant::Base => "base",
            ModelVariant::NoEncoder => "no_encoder",
            ModelVariant::NoCounterfactual => "no_counterfactual",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(ModelVariant::Base),
            "no_encoder" => Ok(ModelVariant::NoEncoder),
            "no_counterfactual" => Ok(ModelVariant::NoCounterfactual),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown model variant '{other}'"
            ))),
        }
    }
}

/// Network widths. Attention emits `attn_tokens * attn_token_dim` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n_items: usize,
    pub t_max: usize,
    pub time_dim: usize,
    pub mlp1_hidden: usize,
    /// Output width of MLP1 and of the condition encoder.
    pub feat_dim: usize,
    pub enc_hidden: usize,
    pub mlp3_hidden: usize,
    pub attn_tokens: usize,
    pub attn_token_dim: usize,
}

impl ModelDims {
    pub fn defaults(n_items: usize, t_max: usize) -> Self {
        ModelDims {
            n_items,
            t_max,
            time_dim: 64,
            mlp1_hidden: 512,
            feat_dim: 256,
            enc_hidden: 256,
            mlp3_hidden: 512,
            attn_tokens: 4,
            attn_token_dim: 64,
        }
    }

    pub fn attn_out(&self) -> usize {
        self.attn_tokens * self.attn_token_dim
    }
}

/// Learned table applied to the one-hot step indicator: row t-1 is the
/// embedding of step t.
#[derive(Debug, Clone)]
pub struct TimeEmbedding {
    pub table: DenseMatrix,
}

impl TimeEmbedding {
    fn new(t_max: usize, time_dim: usize, rng: &mut impl rand::Rng) -> Self {
        TimeEmbedding {
            table: DenseMatrix::init_fan_in(t_max, time_dim, rng),
        }
    }

    pub fn embed(&self, t: usize) -> &[f64] {
        self.table.row(t - 1)
    }
}

#[derive(Debug, Clone)]
pub enum ConditionEncoder {
    /// The learned encoder (MLP2).
    Learned(Mlp),
    /// Fixed seeded random resize, untrained. Dimension-preserving stand-in
    /// for the encoder in the `NoEncoder` ablation.
    Frozen(LinearLayer),
}

impl ConditionEncoder {
    fn forward(&self, y: &[f64]) -> Result<(Vec<f64>, EncoderCache)> {
        match self {
            ConditionEncoder::Learned(mlp) => {
                let (out, cache) = mlp.forward(y)?;
                Ok((out, EncoderCache::Learned(cache)))
            }
            ConditionEncoder::Frozen(layer) => {
                let (out, _) = layer.forward(y)?;
                Ok((out, EncoderCache::Frozen))
            }
        }
    }
}

#[derive(Debug, Clone)]
enum EncoderCache {
    Learned(MlpCache),
    Frozen,
}

#[derive(Debug, Clone)]
pub enum CounterfactualPath {
    Enabled {
        encoder: ConditionEncoder,
        attention: Attention,
    },
    Disabled,
}

/// The full conditional noise predictor.
#[derive(Debug, Clone)]
pub struct NoisePredictor {
    pub dims: ModelDims,
    pub variant: ModelVariant,
    pub time: TimeEmbedding,
    pub mlp1: Mlp,
    pub path: CounterfactualPath,
    pub mlp3: Mlp,
}

#[derive(Debug, Clone)]
pub struct PredictorCache {
    mlp1: MlpCache,
    encoder: Option<EncoderCache>,
    attention: Option<AttentionCache>,
    mlp3: MlpCache,
    t: usize,
}

#[derive(Debug, Clone)]
pub struct PredictorGrads {
    pub time: DenseMatrix,
    pub mlp1: MlpGrads,
    pub encoder: Option<MlpGrads>,
    pub attention: Option<AttentionGrads>,
    pub mlp3: MlpGrads,
}

impl NoisePredictor {
    /// Seeded construction. Each block derives its own init stream from its
    /// name, so blocks shared across variants initialize identically.
    pub fn new(dims: ModelDims, variant: ModelVariant, seed: u64) -> Self {
        let block_rng = |name: &str| rng::stream(seed, &format!("model-init:{name}"), 0);
        let m = dims.n_items;
        let time = TimeEmbedding::new(dims.t_max, dims.time_dim, &mut block_rng("time"));
        let mlp1 = Mlp::new(
            &[m + dims.time_dim, dims.mlp1_hidden, dims.feat_dim],
            &mut block_rng("mlp1"),
        );
        let (path, mlp3_in) = match variant {
            ModelVariant::Base => (
                CounterfactualPath::Enabled {
                    encoder: ConditionEncoder::Learned(Mlp::new(
                        &[m, dims.enc_hidden, dims.feat_dim],
                        &mut block_rng("enc"),
                    )),
                    attention: Attention::new(
                        dims.attn_tokens,
                        dims.attn_token_dim,
                        dims.feat_dim,
                        dims.feat_dim,
                        dims.feat_dim,
                        &mut block_rng("attn"),
                    ),
                },
                dims.attn_out(),
            ),
            ModelVariant::NoEncoder => (
                CounterfactualPath::Enabled {
                    encoder: ConditionEncoder::Frozen(LinearLayer::new(
                        dims.feat_dim,
                        m,
                        &mut block_rng("enc_frozen"),
                    )),
                    attention: Attention::new(
                        dims.attn_tokens,
                        dims.attn_token_dim,
                        dims.feat_dim,
                        dims.feat_dim,
                        dims.feat_dim,
                        &mut block_rng("attn"),
                    ),
                },
                dims.attn_out(),
            ),
            ModelVariant::NoCounterfactual => (CounterfactualPath::Disabled, dims.feat_dim),
        };
        let mlp3 = Mlp::new(&[mlp3_in, dims.mlp3_hidden, m], &mut block_rng("mlp3"));
        NoisePredictor {
            dims,
            variant,
            time,
            mlp1,
            path,
            mlp3,
        }
    }

    /// Rebuild this model's architecture as an ablation variant, sharing the
    /// construction seed so common blocks start identical.
    pub fn ablation_variant(&self, variant: ModelVariant, seed: u64) -> NoisePredictor {
        NoisePredictor::new(self.dims, variant, seed)
    }

    /// The condition encoder output for a group vector.
    pub fn encode_condition(&self, y: &[f64]) -> Result<Vec<f64>> {
        match &self.path {
            CounterfactualPath::Enabled { encoder, .. } => Ok(encoder.forward(y)?.0),
            CounterfactualPath::Disabled => Err(CoreError::InvalidArgument(
                "model variant has no condition path".to_string(),
            )),
        }
    }

    /// z' = Atten(Enc(y), z, z).
    pub fn counterfactual_map(&self, z: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        match &self.path {
            CounterfactualPath::Enabled { encoder, attention } => {
                let (query, _) = encoder.forward(y)?;
                let (out, _) = attention.forward(&query, z, z)?;
                Ok(out)
            }
            CounterfactualPath::Disabled => Err(CoreError::InvalidArgument(
                "model variant has no counterfactual path".to_string(),
            )),
        }
    }

    /// Full forward pass with cache: eps_hat = MLP3(C(MLP1(x_t, t), y)).
    pub fn forward(&self, x_t: &[f64], t: usize, y: &[f64]) -> Result<(Vec<f64>, PredictorCache)> {
        if t < 1 || t > self.dims.t_max {
            return Err(CoreError::InvalidArgument(format!(
                "step {t} out of range 1..={}",
                self.dims.t_max
            )));
        }
        if x_t.len() != self.dims.n_items {
            return Err(CoreError::DimensionMismatch {
                context: "predict_noise input".to_string(),
                expected: self.dims.n_items,
                actual: x_t.len(),
            });
        }
        let mut input1 = Vec::with_capacity(x_t.len() + self.dims.time_dim);
        input1.extend_from_slice(x_t);
        input1.extend_from_slice(self.time.embed(t));
        let (z, c1) = self.mlp1.forward(&input1)?;

        let (zp, enc_cache, attn_cache) = match &self.path {
            CounterfactualPath::Enabled { encoder, attention } => {
                let (query, ec) = encoder.forward(y)?;
                let (out, ac) = attention.forward(&query, &z, &z)?;
                (out, Some(ec), Some(ac))
            }
            CounterfactualPath::Disabled => (z, None, None),
        };

        let (eps_hat, c3) = self.mlp3.forward(&zp)?;
        if eps_hat.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                context: "predict_noise".to_string(),
                detail: format!("non-finite output at step {t}"),
            });
        }
        Ok((
            eps_hat,
            PredictorCache {
                mlp1: c1,
                encoder: enc_cache,
                attention: attn_cache,
                mlp3: c3,
                t,
            },
        ))
    }

    /// Predicted noise without cache.
    pub fn predict_noise(&self, x_t: &[f64], t: usize, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x_t, t, y)?.0)
    }

    /// Reverse-mode gradients of a scalar loss given d(loss)/d(eps_hat).
    pub fn backward(&self, cache: &PredictorCache, d_eps: &[f64]) -> Result<PredictorGrads> {
        let (g3, dzp) = self.mlp3.backward(&cache.mlp3, d_eps)?;

        let (dz, enc_grads, attn_grads) = match (&self.path, &cache.attention) {
            (CounterfactualPath::Enabled { encoder, attention }, Some(ac)) => {
                let (ga, d_query, dk, dv) = attention.backward(ac, &dzp)?;
                let dz: Vec<f64> = dk.iter().zip(&dv).map(|(a, b)| a + b).collect();
                let enc_grads = match (encoder, cache.encoder.as_ref().unwrap()) {
                    (ConditionEncoder::Learned(mlp), EncoderCache::Learned(ec)) => {
                        let (g2, _dy) = mlp.backward(ec, &d_query)?;
                        Some(g2)
                    }
                    // Frozen encoder: no gradient flows into it.
                    (ConditionEncoder::Frozen(_), EncoderCache::Frozen) => None,
                    _ => unreachable!("encoder/cache kind mismatch"),
                };
                (dz, enc_grads, Some(ga))
            }
            (CounterfactualPath::Disabled, _) => (dzp, None, None),
            _ => unreachable!("path/cache mismatch"),
        };

        let (g1, d_input1) = self.mlp1.backward(&cache.mlp1, &dz)?;
        let mut d_time = DenseMatrix::zeros(self.dims.t_max, self.dims.time_dim);
        let row_start = (cache.t - 1) * self.dims.time_dim;
        d_time.values[row_start..row_start + self.dims.time_dim]
            .copy_from_slice(&d_input1[self.dims.n_items..]);

        Ok(PredictorGrads {
            time: d_time,
            mlp1: g1,
            encoder: enc_grads,
            attention: attn_grads,
            mlp3: g3,
        })
    }

    /// Trainable blocks in deterministic order. Frozen blocks are excluded.
    pub fn block_layout(&self) -> Vec<(String, usize)> {
        let mut out = vec![("time.table".to_string(), self.time.table.values.len())];
        push_mlp_layout(&mut out, "mlp1", &self.mlp1);
        if let CounterfactualPath::Enabled { encoder, attention } = &self.path {
            if let ConditionEncoder::Learned(mlp) = encoder {
                push_mlp_layout(&mut out, "enc", mlp);
            }
            out.push(("attn.wq".to_string(), attention.wq.values.len()));
            out.push(("attn.wk".to_string(), attention.wk.values.len()));
            out.push(("attn.wv".to_string(), attention.wv.values.len()));
        }
        push_mlp_layout(&mut out, "mlp3", &self.mlp3);
        out
    }

    /// Mutable views of the trainable blocks, matching `block_layout`.
    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![(
            "time.table".to_string(),
            self.time.table.values.as_mut_slice(),
        )];
        push_mlp_blocks_mut(&mut out, "mlp1", &mut self.mlp1);
        if let CounterfactualPath::Enabled { encoder, attention } = &mut self.path {
            if let ConditionEncoder::Learned(mlp) = encoder {
                push_mlp_blocks_mut(&mut out, "enc", mlp);
            }
            out.push(("attn.wq".to_string(), attention.wq.values.as_mut_slice()));
            out.push(("attn.wk".to_string(), attention.wk.values.as_mut_slice()));
            out.push(("attn.wv".to_string(), attention.wv.values.as_mut_slice()));
        }
        push_mlp_blocks_mut(&mut out, "mlp3", &mut self.mlp3);
        out
    }

    /// Read-only views of the trainable blocks, matching `block_layout`.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> =
            vec![("time.table".to_string(), self.time.table.values.as_slice())];
        push_mlp_blocks(&mut out, "mlp1", &self.mlp1);
        if let CounterfactualPath::Enabled { encoder, attention } = &self.path {
            if let ConditionEncoder::Learned(mlp) = encoder {
                push_mlp_blocks(&mut out, "enc", mlp);
            }
            out.push(("attn.wq".to_string(), attention.wq.values.as_slice()));
            out.push(("attn.wk".to_string(), attention.wk.values.as_slice()));
            out.push(("attn.wv".to_string(), attention.wv.values.as_slice()));
        }
        push_mlp_blocks(&mut out, "mlp3", &self.mlp3);
        out
    }

    /// All persistent blocks including frozen ones (checkpoint payload).
    pub fn persistent_blocks(&self) -> Vec<(String, Vec<f64>)> {
        let mut out: Vec<(String, Vec<f64>)> = self
            .blocks()
            .into_iter()
            .map(|(n, b)| (n, b.to_vec()))
            .collect();
        if let CounterfactualPath::Enabled {
            encoder: ConditionEncoder::Frozen(layer),
            ..
        } = &self.path
        {
            out.push(("enc_frozen.w".to_string(), layer.w.values.clone()));
            out.push(("enc_frozen.b".to_string(), layer.bias.clone()));
        }
        out
    }

    /// Load persistent blocks produced by `persistent_blocks`.
    pub fn load_persistent_blocks(
        &mut self,
        blocks: &std::collections::BTreeMap<String, Vec<f64>>,
    ) -> Result<()> {
        for (name, view) in self.blocks_mut() {
            let data = blocks.get(&name).ok_or_else(|| {
                CoreError::Format {
                    format: "checkpoint".to_string(),
                    path: String::new(),
                    message: format!("missing parameter block '{name}'"),
                }
            })?;
            if data.len() != view.len() {
                return Err(CoreError::DimensionMismatch {
                    context: format!("checkpoint block '{name}'"),
                    expected: view.len(),
                    actual: data.len(),
                });
            }
            view.copy_from_slice(data);
        }
        if let CounterfactualPath::Enabled {
            encoder: ConditionEncoder::Frozen(layer),
            ..
        } = &mut self.path
        {
            for (name, target) in [
                ("enc_frozen.w", &mut layer.w.values),
                ("enc_frozen.b", &mut layer.bias),
            ] {
                let data = blocks.get(name).ok_or_else(|| CoreError::Format {
                    format: "checkpoint".to_string(),
                    path: String::new(),
                    message: format!("missing parameter block '{name}'"),
                })?;
                if data.len() != target.len() {
                    return Err(CoreError::DimensionMismatch {
                        context: format!("checkpoint block '{name}'"),
                        expected: target.len(),
                        actual: data.len(),
                    });
                }
                target.copy_from_slice(data);
            }
        }
        Ok(())
    }

    pub fn trainable_param_count(&self) -> usize {
        self.block_layout().iter().map(|(_, len)| len).sum()
    }

    /// L2 norm per top-level block, for non-finite-loss diagnostics.
    pub fn block_norms(&self) -> String {
        self.blocks()
            .iter()
            .map(|(name, b)| {
                let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                format!("{name}={norm:.3e}")
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn push_mlp_layout(out: &mut Vec<(String, usize)>, prefix: &str, mlp: &Mlp) {
    for (i, layer) in mlp.layers.iter().enumerate() {
        out.push((format!("{prefix}.{i}.w"), layer.w.values.len()));
        out.push((format!("{prefix}.{i}.b"), layer.bias.len()));
    }
}

fn push_mlp_blocks_mut<'a>(
    out: &mut Vec<(String, &'a mut [f64])>,
    prefix: &str,
    mlp: &'a mut Mlp,
) {
    for (i, layer) in mlp.layers.iter_mut().enumerate() {
        out.push((format!("{prefix}.{i}.w"), layer.w.values.as_mut_slice()));
        out.push((format!("{prefix}.{i}.b"), layer.bias.as_mut_slice()));
    }
}

fn push_mlp_blocks<'a>(out: &mut Vec<(String, &'a [f64])>, prefix: &str, mlp: &'a Mlp) {
    for (i, layer) in mlp.layers.iter().enumerate() {
        out.push((format!("{prefix}.{i}.w"), layer.w.values.as_slice()));
        out.push((format!("{prefix}.{i}.b"), layer.bias.as_slice()));
    }
}

impl PredictorGrads {
    pub fn zeros_like(model: &NoisePredictor) -> Self {
        PredictorGrads {
            time: DenseMatrix::zeros(model.dims.t_max, model.dims.time_dim),
            mlp1: MlpGrads::zeros_like(&model.mlp1),
            encoder: match &model.path {
                CounterfactualPath::Enabled {
                    encoder: ConditionEncoder::Learned(mlp),
                    ..
                } => Some(MlpGrads::zeros_like(mlp)),
                _ => None,
            },
            attention: match &model.path {
                CounterfactualPath::Enabled { attention, .. } => {
                    Some(AttentionGrads::zeros_like(attention))
                }
                CounterfactualPath::Disabled => None,
            },
            mlp3: MlpGrads::zeros_like(&model.mlp3),
        }
    }

    pub fn accumulate(&mut self, other: &PredictorGrads) {
        for (a, b) in self.time.values.iter_mut().zip(&other.time.values) {
            *a += b;
        }
        self.mlp1.accumulate(&other.mlp1);
        if let (Some(a), Some(b)) = (self.encoder.as_mut(), other.encoder.as_ref()) {
            a.accumulate(b);
        }
        if let (Some(a), Some(b)) = (self.attention.as_mut(), other.attention.as_ref()) {
            a.accumulate(b);
        }
        self.mlp3.accumulate(&other.mlp3);
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.time.values.iter_mut() {
            *v *= c;
        }
        self.mlp1.scale(c);
        if let Some(e) = self.encoder.as_mut() {
            e.scale(c);
        }
        if let Some(a) = self.attention.as_mut() {
            a.scale(c);
        }
        self.mlp3.scale(c);
    }

    /// Gradient views in the same order as the model's `block_layout`.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> =
            vec![("time.table".to_string(), self.time.values.as_slice())];
        for (i, layer) in self.mlp1.layers.iter().enumerate() {
            out.push((format!("mlp1.{i}.w"), layer.dw.values.as_slice()));
            out.push((format!("mlp1.{i}.b"), layer.dbias.as_slice()));
        }
        if let Some(enc) = &self.encoder {
            for (i, layer) in enc.layers.iter().enumerate() {
                out.push((format!("enc.{i}.w"), layer.dw.values.as_slice()));
                out.push((format!("enc.{i}.b"), layer.dbias.as_slice()));
            }
        }
        if let Some(attn) = &self.attention {
            out.push(("attn.wq".to_string(), attn.dwq.values.as_slice()));
            out.push(("attn.wk".to_string(), attn.dwk.values.as_slice()));
            out.push(("attn.wv".to_string(), attn.dwv.values.as_slice()));
        }
        for (i, layer) in self.mlp3.layers.iter().enumerate() {
            out.push((format!("mlp3.{i}.w"), layer.dw.values.as_slice()));
            out.push((format!("mlp3.{i}.b"), layer.dbias.as_slice()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_dims() -> ModelDims {
        ModelDims {
            n_items: 12,
            t_max: 5,
            time_dim: 8,
            mlp1_hidden: 16,
            feat_dim: 10,
            enc_hidden: 9,
            mlp3_hidden: 14,
            attn_tokens: 2,
            attn_token_dim: 5,
        }
    }

    #[test]
    fn output_has_item_dimension() {
        let model = NoisePredictor::new(small_dims(), ModelVariant::Base, 3);
        let x = crate::rng::normal_vec(&mut crate::rng::stream(1, "t", 0), 12);
        let y = crate::rng::normal_vec(&mut crate::rng::stream(1, "t", 1), 12);
        let eps = model.predict_noise(&x, 3, &y).unwrap();
        assert_eq!(eps.len(), 12);
    }

    #[test]
    fn forward_is_pure() {
        let model = NoisePredictor::new(small_dims(), ModelVariant::Base, 3);
        let x = crate::rng::normal_vec(&mut crate::rng::stream(2, "t", 0), 12);
        let y = crate::rng::normal_vec(&mut crate::rng::stream(2, "t", 1), 12);
        let a = model.predict_noise(&x, 2, &y).unwrap();
        let b = model.predict_noise(&x, 2, &y).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_counterfactual_ignores_condition() {
        let model = NoisePredictor::new(small_dims(), ModelVariant::NoCounterfactual, 3);
        let x = crate::rng::normal_vec(&mut crate::rng::stream(3, "t", 0), 12);
        let ya = crate::rng::normal_vec(&mut crate::rng::stream(3, "t", 1), 12);
        let yb = crate::rng::normal_vec(&mut crate::rng::stream(3, "t", 2), 12);
        let ea = model.predict_noise(&x, 1, &ya).unwrap();
        let eb = model.predict_noise(&x, 1, &yb).unwrap();
        assert_eq!(ea, eb);
    }

    #[test]
    fn base_variant_is_condition_sensitive() {
        let model = NoisePredictor::new(small_dims(), ModelVariant::Base, 3);
        let x = crate::rng::normal_vec(&mut crate::rng::stream(4, "t", 0), 12);
        let ya = crate::rng::normal_vec(&mut crate::rng::stream(4, "t", 1), 12);
        let yb = crate::rng::normal_vec(&mut crate::rng::stream(4, "t", 2), 12);
        let ea = model.predict_noise(&x, 1, &ya).unwrap();
        let eb = model.predict_noise(&x, 1, &yb).unwrap();
        let max_diff = ea
            .iter()
            .zip(&eb)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 0.0, "condition swap had no effect");
    }

    #[test]
    fn no_encoder_variant_still_differentiates_groups() {
        let model = NoisePredictor::new(small_dims(), ModelVariant::NoEncoder, 3);
        let x = crate::rng::normal_vec(&mut crate::rng::stream(5, "t", 0), 12);
        let ya = crate::rng::normal_vec(&mut crate::rng::stream(5, "t", 1), 12);
        let yb = crate::rng::normal_vec(&mut crate::rng::stream(5, "t", 2), 12);
        let ea = model.predict_noise(&x, 1, &ya).unwrap();
        let eb = model.predict_noise(&x, 1, &yb).unwrap();
        let max_diff = ea
            .iter()
            .zip(&eb)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 0.0);
    }

    #[test]
    fn param_counts_differ_by_encoder_size() {
        let dims = small_dims();
        let base = NoisePredictor::new(dims, ModelVariant::Base, 3);
        let no_enc = NoisePredictor::new(dims, ModelVariant::NoEncoder, 3);
        let enc_params = (dims.n_items * dims.enc_hidden + dims.enc_hidden)
            + (dims.enc_hidden * dims.feat_dim + dims.feat_dim);
        assert_eq!(
            base.trainable_param_count() - no_enc.trainable_param_count(),
            enc_params
        );
    }

    #[test]
    fn single_token_counterfactual_map_is_value_projection() {
        let mut dims = small_dims();
        dims.attn_tokens = 1;
        dims.attn_token_dim = 10;
        let model = NoisePredictor::new(dims, ModelVariant::Base, 7);
        let z = crate::rng::normal_vec(&mut crate::rng::stream(6, "t", 0), dims.feat_dim);
        let y = crate::rng::normal_vec(&mut crate::rng::stream(6, "t", 1), 12);
        let zp = model.counterfactual_map(&z, &y).unwrap();
        if let CounterfactualPath::Enabled { attention, .. } = &model.path {
            let expected = attention.wv.matvec(&z);
            for (a, b) in zp.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-14);
            }
        } else {
            panic!("base model must have a counterfactual path");
        }
    }

    #[test]
    fn zero_user_features_annihilate_counterfactual_map() {
        let model = NoisePredictor::new(small_dims(), ModelVariant::Base, 3);
        let z = vec![0.0; small_dims().feat_dim];
        let y = crate::rng::normal_vec(&mut crate::rng::stream(7, "t", 0), 12);
        let zp = model.counterfactual_map(&z, &y).unwrap();
        assert!(zp.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn condition_encode_zero_weights_gives_zero() {
        let mut model = NoisePredictor::new(small_dims(), ModelVariant::Base, 3);
        if let CounterfactualPath::Enabled {
            encoder: ConditionEncoder::Learned(mlp),
            ..
        } = &mut model.path
        {
            for layer in mlp.layers.iter_mut() {
                layer.w.values.iter_mut().for_each(|v| *v = 0.0);
                layer.bias.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let y = crate::rng::normal_vec(&mut crate::rng::stream(8, "t", 0), 12);
        let g = model.encode_condition(&y).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn every_trainable_block_gets_gradient() {
        // Dead-path detector on a random batch element.
        for variant in [
            ModelVariant::Base,
            ModelVariant::NoEncoder,
            ModelVariant::NoCounterfactual,
        ] {
            let model = NoisePredictor::new(small_dims(), variant, 3);
            let x = crate::rng::normal_vec(&mut crate::rng::stream(9, "t", 0), 12);
            let y = crate::rng::normal_vec(&mut crate::rng::stream(9, "t", 1), 12);
            let (eps_hat, cache) = model.forward(&x, 2, &y).unwrap();
            let d_eps: Vec<f64> = eps_hat.iter().map(|v| 2.0 * v).collect();
            let grads = model.backward(&cache, &d_eps).unwrap();
            for (name, block) in grads.blocks() {
                if name == "time.table" {
                    // Only the active step's row is touched; check that row.
                    let row = &block[8..16]; // t=2 with time_dim 8
                    assert!(
                        row.iter().any(|&v| v != 0.0),
                        "{}: dead time row for {variant:?}",
                        name
                    );
                } else {
                    assert!(
                        block.iter().any(|&v| v != 0.0),
                        "dead gradient block {name} for {variant:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn composed_gradient_matches_finite_differences() {
        // Full eps_theta grad check at small dims through a masked loss.
        use crate::nn::{flatten_blocks, grad_check, unflatten_blocks};
        let model = NoisePredictor::new(small_dims(), ModelVariant::Base, 3);
        let mut rng = crate::rng::stream(10, "t", 0);
        let x = crate::rng::normal_vec(&mut rng, 12);
        let y = crate::rng::normal_vec(&mut rng, 12);
        let eps = crate::rng::normal_vec(&mut rng, 12);
        let mask: Vec<f64> = (0..12).map(|i| if i % 3 == 0 { 0.0 } else { 1.0 }).collect();
        let t = 4;

        let loss_of = |m: &NoisePredictor| -> f64 {
            let e = m.predict_noise(&x, t, &y).unwrap();
            e.iter()
                .zip(&eps)
                .zip(&mask)
                .map(|((ehat, e), mk)| mk * (e - ehat) * (e - ehat))
                .sum()
        };

        let (eps_hat, cache) = model.forward(&x, t, &y).unwrap();
        let d_eps: Vec<f64> = eps_hat
            .iter()
            .zip(&eps)
            .zip(&mask)
            .map(|((ehat, e), mk)| 2.0 * mk * (ehat - e))
            .collect();
        let grads = model.backward(&cache, &d_eps).unwrap();

        let theta = flatten_blocks(&model.blocks());
        let analytic = flatten_blocks(&grads.blocks());
        let f = |t_flat: &[f64]| -> f64 {
            let mut m2 = model.clone();
            unflatten_blocks(&mut m2.blocks_mut(), t_flat);
            loss_of(&m2)
        };
        let mut probe_rng = crate::rng::stream(10, "t", 1);
        let err = grad_check(f, &theta, &analytic, 300, 1e-5, &mut probe_rng);
        assert!(err < 1e-4, "composed gradcheck failed: {err}");
    }
}
