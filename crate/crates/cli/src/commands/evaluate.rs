//! Evaluation: all five metrics with per-group breakdowns, written as JSON
//! and as an aligned text table.

use super::{dataset_dir, metrics_json_path, metrics_txt_path, predictions_path};
use crate::config::RunConfig;
use crate::manifest::RunManifest;
use anyhow::{bail, Context, Result};
use fdrec_core::eval::{compute_report, MetricsReport};
use fdrec_core::io::{atomic_write, load_dump, load_predictions};
use std::path::PathBuf;

#[derive(Debug)]
pub struct EvalOutput {
    pub report: MetricsReport,
    pub json_path: PathBuf,
    pub txt_path: PathBuf,
}

pub fn cmd_eval(config: &RunConfig) -> Result<EvalOutput> {
    let mut manifest = RunManifest::start("eval", config);
    manifest.write(&config.out_dir)?;

    let dump = load_dump(&dataset_dir(&config.out_dir)).context("loading dataset dump")?;
    let (preds, meta) =
        load_predictions(&predictions_path(&config.out_dir)).context("loading predictions")?;
    manifest.fingerprint("dataset", &dump.fingerprint);

    if let Some(fp) = meta.get("dataset_fingerprint") {
        if fp != &dump.fingerprint {
            bail!(
                "refusing stale artifacts: predictions carry dataset fingerprint {} \
                 but the dump here is {}",
                fp,
                dump.fingerprint
            );
        }
    } else {
        bail!("prediction file lacks a dataset fingerprint");
    }
    if preds.n_items != dump.matrix.n_items || preds.n_users != dump.matrix.n_users {
        bail!(
            "prediction shape {}x{} disagrees with dataset {}x{}",
            preds.n_items,
            preds.n_users,
            dump.matrix.n_items,
            dump.matrix.n_users
        );
    }

    let report = compute_report(
        &preds,
        &dump.matrix,
        &dump.split,
        &dump.labels,
        config.k,
        &dump.attribute,
        config.seed,
        &config.hash(),
    )?;

    let json_path = metrics_json_path(&config.out_dir);
    let txt_path = metrics_txt_path(&config.out_dir);
    atomic_write(&json_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    atomic_write(&txt_path, report.to_table().as_bytes())?;
    manifest.artifact(&json_path);
    manifest.artifact(&txt_path);
    manifest.complete(&config.out_dir)?;
    Ok(EvalOutput {
        report,
        json_path,
        txt_path,
    })
}
