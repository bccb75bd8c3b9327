//! Group-sparsity robustness: under-sample the minority group's users at
//! each ratio, re-ingest, retrain, and report all metrics per ratio next
//! to the unperturbed base run.

use super::{evaluate, ingest, predict, train};
use crate::config::{ModelKind, RunConfig};
use crate::manifest::RunManifest;
use anyhow::{Context, Result};
use fdrec_core::data::RatingDataset;
use fdrec_core::eval::MetricsReport;
use fdrec_core::io::atomic_write;
use rand::seq::SliceRandom;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Serialize)]
pub struct SparsityRow {
    pub ratio: f64,
    pub minority_removed: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug)]
pub struct SparsityOutput {
    pub rows: Vec<SparsityRow>,
    pub json_path: PathBuf,
    pub txt_path: PathBuf,
}

/// Remove `ratio` of the minority group's users, seeded. Ratio 0 is the
/// identity.
pub fn under_sample_minority(
    dataset: &RatingDataset,
    config: &RunConfig,
    ratio: f64,
) -> Result<(RatingDataset, usize)> {
    if ratio == 0.0 {
        return Ok((dataset.clone(), 0));
    }
    let groups = fdrec_core::data::assign_groups(dataset, config.attribute, config.thresholds)?;
    let (minority_ids, _) = if groups.group_a_ids.len() <= groups.group_b_ids.len() {
        (&groups.group_a_ids, &groups.group_b_ids)
    } else {
        (&groups.group_b_ids, &groups.group_a_ids)
    };
    let mut ids: Vec<u32> = minority_ids.iter().copied().collect();
    let mut rng = fdrec_core::rng::stream(config.seed, "sparsity", (ratio * 1000.0) as u64);
    ids.shuffle(&mut rng);
    let n_remove = ((ids.len() as f64) * ratio).floor() as usize;
    let removed: std::collections::BTreeSet<u32> = ids.into_iter().take(n_remove).collect();

    let filtered = RatingDataset {
        events: dataset
            .events
            .iter()
            .filter(|e| !removed.contains(&e.user_id))
            .cloned()
            .collect(),
        users: dataset
            .users
            .iter()
            .filter(|(u, _)| !removed.contains(u))
            .map(|(u, m)| (*u, m.clone()))
            .collect(),
    };
    Ok((filtered, n_remove))
}

pub fn cmd_sparsity(config: &RunConfig, ratios: &[f64]) -> Result<SparsityOutput> {
    let mut manifest = RunManifest::start("sparsity", config);
    manifest.write(&config.out_dir)?;

    let raw = ingest::load_raw_dataset(config)?;
    let mut rows = Vec::new();

    // Base run plus one run per under-sampling ratio.
    let mut all_ratios = vec![0.0];
    all_ratios.extend_from_slice(ratios);
    for ratio in all_ratios {
        let mut sub = config.clone();
        sub.model = ModelKind::Diffusion;
        sub.out_dir = config
            .out_dir
            .join("sparsity")
            .join(format!("sr_{ratio}"));
        let (dataset, removed) = under_sample_minority(&raw, config, ratio)?;
        ingest::ingest_dataset(&sub, &dataset)
            .with_context(|| format!("ingesting at ratio {ratio}"))?;
        train::cmd_train(&sub)?;
        predict::cmd_predict(&sub)?;
        let metrics = evaluate::cmd_eval(&sub)?.report;
        rows.push(SparsityRow {
            ratio,
            minority_removed: removed,
            metrics,
        });
    }

    let json_path = config.out_dir.join("sparsity.json");
    let txt_path = config.out_dir.join("sparsity.txt");
    atomic_write(&json_path, serde_json::to_string_pretty(&rows)?.as_bytes())?;
    atomic_write(&txt_path, render_table(&rows).as_bytes())?;
    manifest.artifact(&json_path);
    manifest.artifact(&txt_path);
    manifest.complete(&config.out_dir)?;
    Ok(SparsityOutput {
        rows,
        json_path,
        txt_path,
    })
}

fn render_table(rows: &[SparsityRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "ratio", "removed", "recall", "ndcg", "a_at_k", "e_at_k"
    )
    .unwrap();
    for row in rows {
        let m = &row.metrics;
        writeln!(
            out,
            "{:<8} {:>8} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            row.ratio, row.minority_removed, m.recall, m.ndcg, m.a_at_k, m.e_at_k
        )
        .unwrap();
    }
    out
}
