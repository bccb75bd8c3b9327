//! Core library of the fair diffusion recommender.
//!
//! The pipeline is: parse a ratings dataset into an [`data::InteractionMatrix`],
//! assign users to two groups by a sensitive attribute, build per-group summary
//! vectors ([`groups`]), train a conditional denoising model whose noise
//! predictor is conditioned on the *opposite* group's vector ([`model`],
//! [`diffusion`]), generate rating reconstructions per user, and score them
//! with utility and fairness metrics ([`eval`]). A regularized matrix
//! factorization baseline lives in [`baseline`].
//!
//! Everything is `f64`, deterministic under a fixed root seed (see [`rng`]),
//! and free of external ML frameworks: the dense kernel in [`nn`] carries its
//! own reverse-mode gradients.

pub mod baseline;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod groups;
pub mod io;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synth;

pub use error::CoreError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
