//! Dataset ingestion: parse or generate, assign groups, build the matrix,
//! split, and write the canonical dump.

use super::dataset_dir;
use crate::config::{DatasetKind, RunConfig};
use crate::manifest::RunManifest;
use anyhow::{Context, Result};
use fdrec_core::data::{assign_groups, build_matrix, split, RatingDataset};
use fdrec_core::io::save_dump;
use fdrec_core::synth;

#[derive(Debug)]
pub struct IngestOutput {
    pub dump_dir: std::path::PathBuf,
    pub fingerprint: String,
    pub n_users: usize,
    pub n_items: usize,
    pub n_events: usize,
    pub dropped_users: usize,
}

/// Parse (or generate) the raw dataset for this config.
pub fn load_raw_dataset(config: &RunConfig) -> Result<RatingDataset> {
    match config.dataset {
        DatasetKind::Synthetic => Ok(synth::generate(&config.synth_config())),
        DatasetKind::MovieLens => {
            let ratings = config.ratings_path.as_ref().unwrap();
            let users = config.users_path.as_ref().unwrap();
            Ok(fdrec_core::data::parse_movielens(ratings, users)?)
        }
        DatasetKind::LastFm => {
            let artists = config.user_artists_path.as_ref().unwrap();
            Ok(fdrec_core::data::parse_lastfm(
                artists,
                config.user_tags_path.as_deref(),
            )?)
        }
    }
}

/// Build and persist the dump from an already-loaded dataset. Used directly
/// by the sparsity harness, which perturbs the dataset first.
pub fn ingest_dataset(config: &RunConfig, dataset: &RatingDataset) -> Result<IngestOutput> {
    // Users that cannot satisfy the split floor are removed up front so
    // group vectors and metrics see a consistent population.
    let (dataset, dropped) = dataset.filter_min_interactions(config.min_train + 3);
    let groups = assign_groups(&dataset, config.attribute, config.thresholds)
        .context("assigning groups")?;
    let matrix = build_matrix(&dataset, config.normalization).context("building matrix")?;
    let the_split = split(&matrix, config.split, config.min_train, config.seed)?;
    let labels = groups.column_labels(&matrix)?;

    let dir = dataset_dir(&config.out_dir);
    let fingerprint = save_dump(&dir, &matrix, &the_split, &labels, config.attribute.name())?;
    Ok(IngestOutput {
        dump_dir: dir,
        fingerprint,
        n_users: matrix.n_users,
        n_items: matrix.n_items,
        n_events: matrix.observed_count(),
        dropped_users: dropped,
    })
}

pub fn cmd_ingest(config: &RunConfig) -> Result<IngestOutput> {
    let mut manifest = RunManifest::start("ingest", config);
    manifest.write(&config.out_dir)?;

    let dataset = load_raw_dataset(config)?;
    let out = ingest_dataset(config, &dataset)?;

    manifest.fingerprint("dataset", &out.fingerprint);
    manifest.artifact(&out.dump_dir);
    manifest.complete(&config.out_dir)?;
    Ok(out)
}
