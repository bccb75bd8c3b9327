//! Ablation harness: train the base model and both ablation variants with
//! shared seeds on the same ingested dataset, and report metrics side by
//! side.

use super::{copy_dump, dataset_dir, evaluate, predict, train};
use crate::config::{ModelKind, RunConfig};
use crate::manifest::RunManifest;
use anyhow::{Context, Result};
use fdrec_core::eval::MetricsReport;
use fdrec_core::io::atomic_write;
use fdrec_core::model::ModelVariant;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Serialize)]
pub struct AblateRow {
    pub variant: String,
    pub metrics: MetricsReport,
}

#[derive(Debug)]
pub struct AblateOutput {
    pub rows: Vec<AblateRow>,
    pub json_path: PathBuf,
    pub txt_path: PathBuf,
}

/// Run train + predict + eval for one variant in its own subdirectory,
/// sharing the parent's ingested dataset byte for byte.
fn run_variant(parent: &RunConfig, variant: ModelVariant) -> Result<MetricsReport> {
    let mut config = parent.clone();
    config.variant = variant;
    config.model = ModelKind::Diffusion;
    config.out_dir = parent.out_dir.join("ablate").join(variant.name());
    copy_dump(
        &dataset_dir(&parent.out_dir),
        &dataset_dir(&config.out_dir),
    )?;
    train::cmd_train(&config)?;
    predict::cmd_predict(&config)?;
    Ok(evaluate::cmd_eval(&config)?.report)
}

pub fn cmd_ablate(config: &RunConfig) -> Result<AblateOutput> {
    let mut manifest = RunManifest::start("ablate", config);
    manifest.write(&config.out_dir)?;

    let mut rows = Vec::new();
    for variant in [
        ModelVariant::Base,
        ModelVariant::NoEncoder,
        ModelVariant::NoCounterfactual,
    ] {
        let metrics = run_variant(config, variant)
            .with_context(|| format!("ablation variant {}", variant.name()))?;
        rows.push(AblateRow {
            variant: variant.name().to_string(),
            metrics,
        });
    }

    let json_path = config.out_dir.join("ablate.json");
    let txt_path = config.out_dir.join("ablate.txt");
    atomic_write(&json_path, serde_json::to_string_pretty(&rows)?.as_bytes())?;
    atomic_write(&txt_path, render_table(&rows).as_bytes())?;
    manifest.artifact(&json_path);
    manifest.artifact(&txt_path);
    manifest.complete(&config.out_dir)?;
    Ok(AblateOutput {
        rows,
        json_path,
        txt_path,
    })
}

fn render_table(rows: &[AblateRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<18} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "variant", "recall", "ndcg", "a_at_k", "e_at_k", "dist_gap"
    )
    .unwrap();
    for row in rows {
        let m = &row.metrics;
        writeln!(
            out,
            "{:<18} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            row.variant, m.recall, m.ndcg, m.a_at_k, m.e_at_k, m.dist_gap
        )
        .unwrap();
    }
    out
}
