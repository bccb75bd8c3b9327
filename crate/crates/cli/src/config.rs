//! Flat key=value run configuration with typed validation.
//!
//! Unknown keys and out-of-range values are rejected before any compute
//! starts. Command-line flags override file values.

use anyhow::{bail, Context, Result};
use fdrec_core::data::{Attribute, GroupThresholds, NormalizationScheme, SplitRatios};
use fdrec_core::groups::GroupVectorMethod;
use fdrec_core::model::{ModelDims, ModelVariant};
use fdrec_core::synth::SynthConfig;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic,
    MovieLens,
    LastFm,
}

impl DatasetKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(DatasetKind::Synthetic),
            "movielens" => Ok(DatasetKind::MovieLens),
            "lastfm" => Ok(DatasetKind::LastFm),
            other => bail!("unknown dataset kind '{other}'"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Synthetic => "synthetic",
            DatasetKind::MovieLens => "movielens",
            DatasetKind::LastFm => "lastfm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Diffusion,
    Mf,
}

impl ModelKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "diffusion" => Ok(ModelKind::Diffusion),
            "mf" => Ok(ModelKind::Mf),
            other => bail!("unknown model kind '{other}'"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Diffusion => "diffusion",
            ModelKind::Mf => "mf",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    // dataset
    pub dataset: DatasetKind,
    pub ratings_path: Option<PathBuf>,
    pub users_path: Option<PathBuf>,
    pub user_artists_path: Option<PathBuf>,
    pub user_tags_path: Option<PathBuf>,
    pub attribute: Attribute,
    pub normalization: NormalizationScheme,
    pub thresholds: GroupThresholds,
    pub split: SplitRatios,
    pub min_train: usize,

    // synthetic generator
    pub synth_users: usize,
    pub synth_items: usize,
    pub synth_minority_frac: f64,
    pub synth_bias: f64,
    pub synth_obs_min: usize,
    pub synth_obs_max: usize,
    pub synth_clusters: usize,

    // group vectors
    pub group_method: GroupVectorMethod,
    pub pca_tol: f64,
    pub pca_max_iter: usize,

    // diffusion
    pub t_steps: usize,
    pub variance_scale: f64,
    pub beta_min: f64,
    /// 0 means "start from T".
    pub t_start: usize,
    pub ensemble: usize,

    // model
    pub variant: ModelVariant,
    pub time_dim: usize,
    pub mlp1_hidden: usize,
    pub feat_dim: usize,
    pub enc_hidden: usize,
    pub mlp3_hidden: usize,
    pub attn_tokens: usize,
    pub attn_token_dim: usize,

    // training
    pub model: ModelKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,

    // MF baseline
    pub mf_factors: usize,
    pub mf_lambda: f64,
    pub mf_epochs: usize,

    // evaluation
    pub k: usize,

    // run
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetKind::Synthetic,
            ratings_path: None,
            users_path: None,
            user_artists_path: None,
            user_tags_path: None,
            attribute: Attribute::Gender,
            normalization: NormalizationScheme::MinMax,
            thresholds: GroupThresholds::default(),
            split: SplitRatios::default(),
            min_train: 10,
            synth_users: 60,
            synth_items: 50,
            synth_minority_frac: 0.3,
            synth_bias: 1.2,
            synth_obs_min: 16,
            synth_obs_max: 30,
            synth_clusters: 8,
            group_method: GroupVectorMethod::MeanPool,
            pca_tol: 1e-8,
            pca_max_iter: 10_000,
            t_steps: 100,
            variance_scale: 1e-4,
            beta_min: 1e-5,
            t_start: 0,
            ensemble: 1,
            variant: ModelVariant::Base,
            time_dim: 64,
            mlp1_hidden: 512,
            feat_dim: 256,
            enc_hidden: 256,
            mlp3_hidden: 512,
            attn_tokens: 4,
            attn_token_dim: 64,
            model: ModelKind::Diffusion,
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            mf_factors: 20,
            mf_lambda: 0.1,
            mf_epochs: 50,
            k: 7,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parse a config file, then apply `key=value` overrides in order.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("config line {} is not key=value: '{line}'", lineno + 1))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        pairs.extend_from_slice(overrides);
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        for (key, value) in pairs {
            config.apply(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| anyhow::anyhow!("key '{key}' has unparsable value '{value}'"))
        }
        match key {
            "dataset" => self.dataset = DatasetKind::parse(value)?,
            "ratings_path" => self.ratings_path = Some(PathBuf::from(value)),
            "users_path" => self.users_path = Some(PathBuf::from(value)),
            "user_artists_path" => self.user_artists_path = Some(PathBuf::from(value)),
            "user_tags_path" => self.user_tags_path = Some(PathBuf::from(value)),
            "attribute" => self.attribute = Attribute::parse(value)?,
            "normalization" => self.normalization = NormalizationScheme::parse(value)?,
            "age_threshold" => self.thresholds.age = num(key, value)?,
            "plays_threshold" => self.thresholds.plays = num(key, value)?,
            "tags_threshold" => self.thresholds.tags = num(key, value)?,
            "split_train" => self.split.train = num(key, value)?,
            "split_val" => self.split.val = num(key, value)?,
            "split_test" => self.split.test = num(key, value)?,
            "min_train" => self.min_train = num(key, value)?,
            "synth_users" => self.synth_users = num(key, value)?,
            "synth_items" => self.synth_items = num(key, value)?,
            "synth_minority_frac" => self.synth_minority_frac = num(key, value)?,
            "synth_bias" => self.synth_bias = num(key, value)?,
            "synth_obs_min" => self.synth_obs_min = num(key, value)?,
            "synth_obs_max" => self.synth_obs_max = num(key, value)?,
            "synth_clusters" => self.synth_clusters = num(key, value)?,
            "group_method" => self.group_method = GroupVectorMethod::parse(value)?,
            "pca_tol" => self.pca_tol = num(key, value)?,
            "pca_max_iter" => self.pca_max_iter = num(key, value)?,
            "t_steps" => self.t_steps = num(key, value)?,
            "variance_scale" => self.variance_scale = num(key, value)?,
            "beta_min" => self.beta_min = num(key, value)?,
            "t_start" => self.t_start = num(key, value)?,
            "ensemble" => self.ensemble = num(key, value)?,
            "variant" => self.variant = ModelVariant::parse(value)?,
            "time_dim" => self.time_dim = num(key, value)?,
            "mlp1_hidden" => self.mlp1_hidden = num(key, value)?,
            "feat_dim" => self.feat_dim = num(key, value)?,
            "enc_hidden" => self.enc_hidden = num(key, value)?,
            "mlp3_hidden" => self.mlp3_hidden = num(key, value)?,
            "attn_tokens" => self.attn_tokens = num(key, value)?,
            "attn_token_dim" => self.attn_token_dim = num(key, value)?,
            "model" => self.model = ModelKind::parse(value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "mf_factors" => self.mf_factors = num(key, value)?,
            "mf_lambda" => self.mf_lambda = num(key, value)?,
            "mf_epochs" => self.mf_epochs = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let checks: &[(bool, &str)] = &[
            (self.t_steps >= 1, "t_steps must be >= 1"),
            (
                self.variance_scale > 0.0 && self.variance_scale + self.beta_min < 1.0,
                "variance_scale must be in (0, 1 - beta_min)",
            ),
            (self.beta_min >= 0.0, "beta_min must be >= 0"),
            (
                self.t_start <= self.t_steps,
                "t_start must be <= t_steps (0 selects t_steps)",
            ),
            (self.ensemble >= 1, "ensemble must be >= 1"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.learning_rate > 0.0, "learning_rate must be positive"),
            (self.k >= 1, "k must be >= 1"),
            (self.min_train >= 1, "min_train must be >= 1"),
            (self.mf_factors >= 1, "mf_factors must be >= 1"),
            (self.mf_lambda >= 0.0, "mf_lambda must be >= 0"),
            (self.mf_epochs >= 1, "mf_epochs must be >= 1"),
            (self.pca_tol > 0.0, "pca_tol must be positive"),
            (self.pca_max_iter >= 1, "pca_max_iter must be >= 1"),
            (self.time_dim >= 1, "time_dim must be >= 1"),
            (self.mlp1_hidden >= 1, "mlp1_hidden must be >= 1"),
            (self.feat_dim >= 1, "feat_dim must be >= 1"),
            (self.enc_hidden >= 1, "enc_hidden must be >= 1"),
            (self.mlp3_hidden >= 1, "mlp3_hidden must be >= 1"),
            (self.attn_tokens >= 1, "attn_tokens must be >= 1"),
            (self.attn_token_dim >= 1, "attn_token_dim must be >= 1"),
            (
                (self.split.train + self.split.val + self.split.test - 1.0).abs() < 1e-9,
                "split ratios must sum to 1",
            ),
            (
                self.synth_minority_frac > 0.0 && self.synth_minority_frac < 1.0,
                "synth_minority_frac must be in (0, 1)",
            ),
            (
                self.synth_obs_min >= self.min_train + 3,
                "synth_obs_min must allow the split floor (min_train + 3)",
            ),
            (
                self.synth_obs_min <= self.synth_obs_max,
                "synth_obs_min must be <= synth_obs_max",
            ),
            (self.synth_clusters >= 2, "synth_clusters must be >= 2"),
        ];
        for (ok, msg) in checks {
            if !ok {
                bail!("config validation: {msg}");
            }
        }
        match self.dataset {
            DatasetKind::MovieLens => {
                if self.ratings_path.is_none() || self.users_path.is_none() {
                    bail!("movielens dataset needs ratings_path and users_path");
                }
            }
            DatasetKind::LastFm => {
                if self.user_artists_path.is_none() {
                    bail!("lastfm dataset needs user_artists_path");
                }
                if self.attribute == Attribute::InterestDiversity && self.user_tags_path.is_none()
                {
                    bail!("interest_diversity grouping needs user_tags_path");
                }
            }
            DatasetKind::Synthetic => {}
        }
        Ok(())
    }

    pub fn effective_t_start(&self) -> usize {
        if self.t_start == 0 {
            self.t_steps
        } else {
            self.t_start
        }
    }

    pub fn model_dims(&self, n_items: usize) -> ModelDims {
        ModelDims {
            n_items,
            t_max: self.t_steps,
            time_dim: self.time_dim,
            mlp1_hidden: self.mlp1_hidden,
            feat_dim: self.feat_dim,
            enc_hidden: self.enc_hidden,
            mlp3_hidden: self.mlp3_hidden,
            attn_tokens: self.attn_tokens,
            attn_token_dim: self.attn_token_dim,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_users: self.synth_users,
            n_items: self.synth_items,
            minority_frac: self.synth_minority_frac,
            bias: self.synth_bias,
            obs_min: self.synth_obs_min,
            obs_max: self.synth_obs_max,
            n_clusters: self.synth_clusters,
            seed: self.seed,
        }
    }

    /// Canonical serialization used for the config hash and the manifest.
    pub fn canonical(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("dataset", self.dataset.name().to_string());
        if let Some(p) = &self.ratings_path {
            put("ratings_path", p.display().to_string());
        }
        if let Some(p) = &self.users_path {
            put("users_path", p.display().to_string());
        }
        if let Some(p) = &self.user_artists_path {
            put("user_artists_path", p.display().to_string());
        }
        if let Some(p) = &self.user_tags_path {
            put("user_tags_path", p.display().to_string());
        }
        put("attribute", self.attribute.name().to_string());
        put("normalization", self.normalization.name().to_string());
        put("age_threshold", self.thresholds.age.to_string());
        put("plays_threshold", self.thresholds.plays.to_string());
        put("tags_threshold", self.thresholds.tags.to_string());
        put("split_train", self.split.train.to_string());
        put("split_val", self.split.val.to_string());
        put("split_test", self.split.test.to_string());
        put("min_train", self.min_train.to_string());
        put("synth_users", self.synth_users.to_string());
        put("synth_items", self.synth_items.to_string());
        put("synth_minority_frac", self.synth_minority_frac.to_string());
        put("synth_bias", self.synth_bias.to_string());
        put("synth_obs_min", self.synth_obs_min.to_string());
        put("synth_obs_max", self.synth_obs_max.to_string());
        put("synth_clusters", self.synth_clusters.to_string());
        put("group_method", self.group_method.name().to_string());
        put("pca_tol", self.pca_tol.to_string());
        put("pca_max_iter", self.pca_max_iter.to_string());
        put("t_steps", self.t_steps.to_string());
        put("variance_scale", self.variance_scale.to_string());
        put("beta_min", self.beta_min.to_string());
        put("t_start", self.t_start.to_string());
        put("ensemble", self.ensemble.to_string());
        put("variant", self.variant.name().to_string());
        put("time_dim", self.time_dim.to_string());
        put("mlp1_hidden", self.mlp1_hidden.to_string());
        put("feat_dim", self.feat_dim.to_string());
        put("enc_hidden", self.enc_hidden.to_string());
        put("mlp3_hidden", self.mlp3_hidden.to_string());
        put("attn_tokens", self.attn_tokens.to_string());
        put("attn_token_dim", self.attn_token_dim.to_string());
        put("model", self.model.name().to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("mf_factors", self.mf_factors.to_string());
        put("mf_lambda", self.mf_lambda.to_string());
        put("mf_epochs", self.mf_epochs.to_string());
        put("k", self.k.to_string());
        put("seed", self.seed.to_string());
        put("out_dir", self.out_dir.display().to_string());
        m
    }

    pub fn hash(&self) -> String {
        let text: String = self
            .canonical()
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        fdrec_core::io::sha256_hex(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(dir: &tempfile::TempDir, content: &str) -> PathBuf {
        let path = dir.path().join("run.conf");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn parses_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(
            &dir,
            "dataset = synthetic\nseed = 7\nk = 5\n# comment\nepochs = 3\n",
        );
        let config = RunConfig::load(
            &path,
            &[("k".to_string(), "9".to_string())],
        )
        .unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.k, 9); // override wins
        assert_eq!(config.epochs, 3);
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(&dir, "dataset = synthetic\nbogus_key = 1\n");
        let err = RunConfig::load(&path, &[]).unwrap_err();
        assert!(err.to_string().contains("bogus_key"));
    }

    #[test]
    fn out_of_range_rejected_before_compute() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(&dir, "dataset = synthetic\nt_steps = 0\n");
        let err = RunConfig::load(&path, &[]).unwrap_err();
        assert!(err.to_string().contains("t_steps"));
    }

    #[test]
    fn dataset_path_requirements() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(&dir, "dataset = movielens\n");
        assert!(RunConfig::load(&path, &[]).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
