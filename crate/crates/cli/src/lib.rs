//! Command suite wiring the fair diffusion recommender end to end:
//! ingest, train, predict, evaluate, ablate, sweep, sparsity, gradcheck.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::*;
pub use config::{DatasetKind, ModelKind, RunConfig};
pub use manifest::RunManifest;
