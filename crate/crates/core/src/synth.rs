//! Synthetic rating data with a planted group bias.
//!
//! Two user groups receive deliberately shifted preference distributions
//! over two item blocks, and each user's observed items lean toward their
//! group's preferred block. Useful for directional fairness experiments
//! where real datasets are too large or unavailable.

use crate::data::{RatingDataset, RatingEvent, UserMeta};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Fraction of users in the minority group.
    pub minority_frac: f64,
    /// Strength of the planted group bias in [0, 2]: 0 makes taste clusters
    /// group-neutral, 2 draws every user's liked clusters from their own
    /// group's item block.
    pub bias: f64,
    /// Observed interactions per user, inclusive range.
    pub obs_min: usize,
    pub obs_max: usize,
    /// Item taste clusters; each user likes a couple of them.
    pub n_clusters: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 60,
            n_items: 50,
            minority_frac: 0.3,
            bias: 1.2,
            obs_min: 16,
            obs_max: 30,
            n_clusters: 8,
            seed: 0,
        }
    }
}

/// Generate the dataset.
///
/// Items are partitioned into taste clusters; the first half of the
/// clusters forms item block one, the rest block two. Each user likes two
/// clusters, drawn from their own group's block with probability
/// 0.5 + bias/4 (minority users lean toward block two), rates liked items
/// high and the rest low, and observes items leaning toward the liked
/// clusters. The cluster structure gives a collaborative model per-user
/// signal to learn; the block skew plants the group bias.
///
/// Minority users carry gender 'F' and age 60; majority users carry 'M'
/// and age 20, so both attributes reproduce the same partition.
pub fn generate(config: &SynthConfig) -> RatingDataset {
    let mut ds = RatingDataset::default();
    let n_minority = ((config.n_users as f64) * config.minority_frac).round() as usize;
    let n_clusters = config.n_clusters.max(2).min(config.n_items);
    let cluster_of = |item: usize| item * n_clusters / config.n_items;
    let own_block_prob = (0.5 + config.bias / 4.0).clamp(0.0, 1.0);

    for j in 0..config.n_users {
        let user_id = j as u32 + 1;
        let minority = j < n_minority;
        ds.users.insert(
            user_id,
            UserMeta {
                gender: Some(if minority { 'F' } else { 'M' }),
                age: Some(if minority { 60 } else { 20 }),
                ..Default::default()
            },
        );

        let mut r = rng::stream(config.seed, "synth-user", j as u64);

        // Two liked clusters, leaning toward the user's group block.
        let own_block: Vec<usize> = if minority {
            (n_clusters / 2..n_clusters).collect()
        } else {
            (0..n_clusters / 2).collect()
        };
        let other_block: Vec<usize> = if minority {
            (0..n_clusters / 2).collect()
        } else {
            (n_clusters / 2..n_clusters).collect()
        };
        let mut liked = std::collections::BTreeSet::new();
        while liked.len() < 2.min(n_clusters) {
            let pool = if r.random_range(0.0..1.0) < own_block_prob {
                &own_block
            } else {
                &other_block
            };
            liked.insert(pool[r.random_range(0..pool.len())]);
        }

        // Observations lean toward the liked clusters.
        let mut liked_items: Vec<usize> = (0..config.n_items)
            .filter(|&i| liked.contains(&cluster_of(i)))
            .collect();
        let mut other_items: Vec<usize> = (0..config.n_items)
            .filter(|&i| !liked.contains(&cluster_of(i)))
            .collect();
        liked_items.shuffle(&mut r);
        other_items.shuffle(&mut r);
        let n_obs = r.random_range(config.obs_min..=config.obs_max.min(config.n_items));
        let n_liked_obs = ((n_obs as f64) * 0.6).round() as usize;
        let mut items: Vec<usize> = liked_items
            .iter()
            .take(n_liked_obs.min(n_obs))
            .chain(other_items.iter())
            .take(n_obs)
            .copied()
            .collect();
        items.sort_unstable();

        for item in items {
            let base = if liked.contains(&cluster_of(item)) {
                4.6
            } else {
                1.4
            };
            let rating = (base + 0.5 * rng::normal(&mut r)).round().clamp(1.0, 5.0);
            ds.events.push(RatingEvent {
                user_id,
                item_id: item as u32,
                rating,
                timestamp: Some(j as i64 * 1000 + item as i64),
            });
        }
    }
    ds
}

/// Write the dataset in MovieLens file format ("::"-delimited ratings and
/// users files), so the full parsing path can be exercised on it.
pub fn write_movielens_format(
    dataset: &RatingDataset,
    ratings_path: &Path,
    users_path: &Path,
) -> crate::Result<()> {
    use std::fmt::Write as _;
    let mut users_text = String::new();
    for (&user_id, meta) in &dataset.users {
        let gender = meta.gender.unwrap_or('M');
        let age = meta.age.unwrap_or(25);
        writeln!(users_text, "{user_id}::{gender}::{age}::0::00000").unwrap();
    }
    let mut ratings_text = String::new();
    for e in &dataset.events {
        writeln!(
            ratings_text,
            "{}::{}::{}::{}",
            e.user_id,
            e.item_id,
            e.rating as i64,
            e.timestamp.unwrap_or(0)
        )
        .unwrap();
    }
    std::fs::write(users_path, users_text)
        .map_err(|e| crate::CoreError::io(users_path.display().to_string(), e))?;
    std::fs::write(ratings_path, ratings_text)
        .map_err(|e| crate::CoreError::io(ratings_path.display().to_string(), e))?;
    Ok(())
}
