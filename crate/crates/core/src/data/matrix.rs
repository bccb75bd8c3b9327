//! Item-by-user interaction matrix with normalization and observation mask.

use super::RatingDataset;
use crate::error::CoreError;
use crate::Result;
use std::collections::HashMap;

/// How raw ratings map to the centered model scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationScheme {
    /// Min-max onto [-1, 1] over observed ratings.
    MinMax,
    /// log1p first, then min-max onto [-1, 1]. For long-tailed play counts.
    Log1pMinMax,
}

impl NormalizationScheme {
    pub fn name(&self) -> &'static str {
        match self {
            NormalizationScheme::MinMax => "minmax",
            NormalizationScheme::Log1pMinMax => "log1p_minmax",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(NormalizationScheme::MinMax),
            "log1p_minmax" => Ok(NormalizationScheme::Log1pMinMax),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown normalization scheme '{other}'"
            ))),
        }
    }
}

/// Normalization constants. `lo`/`hi` bound the (possibly log1p-transformed)
/// observed ratings; a degenerate range maps every observed value to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub scheme: NormalizationScheme,
    pub lo: f64,
    pub hi: f64,
}

impl Normalization {
    fn transform(&self, r: f64) -> f64 {
        match self.scheme {
            NormalizationScheme::MinMax => r,
            NormalizationScheme::Log1pMinMax => r.ln_1p(),
        }
    }

    fn untransform(&self, u: f64) -> f64 {
        match self.scheme {
            NormalizationScheme::MinMax => u,
            NormalizationScheme::Log1pMinMax => u.exp_m1(),
        }
    }

    pub fn normalize(&self, r: f64) -> f64 {
        let u = self.transform(r);
        if self.hi == self.lo {
            0.0
        } else {
            2.0 * (u - self.lo) / (self.hi - self.lo) - 1.0
        }
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        let u = if self.hi == self.lo {
            self.lo
        } else {
            self.lo + (x + 1.0) * (self.hi - self.lo) / 2.0
        };
        self.untransform(u)
    }
}

/// Dense m-items x n-users rating matrix. Values are stored column-major so
/// each user's rating vector is contiguous.
#[derive(Debug, Clone)]
pub struct InteractionMatrix {
    pub n_items: usize,
    pub n_users: usize,
    values: Vec<f64>,
    mask: Vec<u8>,
    pub item_ids: Vec<u32>,
    pub user_ids: Vec<u32>,
    item_index: HashMap<u32, usize>,
    user_index: HashMap<u32, usize>,
    pub normalization: Normalization,
}

impl InteractionMatrix {
    #[inline]
    pub fn value(&self, item: usize, user: usize) -> f64 {
        self.values[user * self.n_items + item]
    }

    #[inline]
    pub fn observed(&self, item: usize, user: usize) -> bool {
        self.mask[user * self.n_items + item] == 1
    }

    /// Normalized rating vector of one user (length m).
    #[inline]
    pub fn user_column(&self, user: usize) -> &[f64] {
        &self.values[user * self.n_items..(user + 1) * self.n_items]
    }

    /// Observation mask of one user (length m).
    #[inline]
    pub fn mask_column(&self, user: usize) -> &[u8] {
        &self.mask[user * self.n_items..(user + 1) * self.n_items]
    }

    pub fn item_row_of(&self, item_id: u32) -> Option<usize> {
        self.item_index.get(&item_id).copied()
    }

    pub fn user_col_of(&self, user_id: u32) -> Option<usize> {
        self.user_index.get(&user_id).copied()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Observed cells of one user as item-row indices, ascending.
    pub fn observed_items_of(&self, user: usize) -> Vec<usize> {
        self.mask_column(user)
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 1)
            .map(|(i, _)| i)
            .collect()
    }

    /// Construct directly from already-normalized parts. Used by the dump
    /// loader; invariants are checked.
    pub fn from_parts(
        item_ids: Vec<u32>,
        user_ids: Vec<u32>,
        triplets: &[(u32, u32, f64)],
        normalization: Normalization,
    ) -> Result<InteractionMatrix> {
        let n_items = item_ids.len();
        let n_users = user_ids.len();
        let item_index: HashMap<u32, usize> =
            item_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let user_index: HashMap<u32, usize> =
            user_ids.iter().enumerate().map(|(j, &id)| (id, j)).collect();
        let mut values = vec![0.0; n_items * n_users];
        let mut mask = vec![0u8; n_items * n_users];
        for &(row, col, v) in triplets {
            let (i, j) = (row as usize, col as usize);
            if i >= n_items || j >= n_users {
                return Err(CoreError::Dataset(format!(
                    "triplet ({row}, {col}) outside {n_items}x{n_users} matrix"
                )));
            }
            let idx = j * n_items + i;
            if mask[idx] == 1 {
                return Err(CoreError::Dataset(format!(
                    "duplicate cell (item row {i}, user col {j})"
                )));
            }
            values[idx] = v;
            mask[idx] = 1;
        }
        Ok(InteractionMatrix {
            n_items,
            n_users,
            values,
            mask,
            item_ids,
            user_ids,
            item_index,
            user_index,
            normalization,
        })
    }

    /// Sparse (row, col, normalized value) triplets in column-major order.
    pub fn triplets(&self) -> Vec<(u32, u32, f64)> {
        let mut out = Vec::with_capacity(self.observed_count());
        for j in 0..self.n_users {
            for i in 0..self.n_items {
                if self.observed(i, j) {
                    out.push((i as u32, j as u32, self.value(i, j)));
                }
            }
        }
        out
    }
}

/// Build the normalized interaction matrix. Items and users are ordered by
/// ascending id; duplicate (user, item) events are an error (parsers
/// aggregate duplicates before this point).
pub fn build_matrix(
    dataset: &RatingDataset,
    scheme: NormalizationScheme,
) -> Result<InteractionMatrix> {
    if dataset.events.is_empty() {
        return Err(CoreError::Dataset("dataset has no events".to_string()));
    }
    let mut item_ids: Vec<u32> = dataset.events.iter().map(|e| e.item_id).collect();
    item_ids.sort_unstable();
    item_ids.dedup();
    let user_ids: Vec<u32> = dataset.users.keys().copied().collect();

    let pre = Normalization {
        scheme,
        lo: 0.0,
        hi: 0.0,
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for e in &dataset.events {
        let u = pre.transform(e.rating);
        lo = lo.min(u);
        hi = hi.max(u);
    }
    let normalization = Normalization { scheme, lo, hi };

    let item_index: HashMap<u32, usize> =
        item_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let user_index: HashMap<u32, usize> =
        user_ids.iter().enumerate().map(|(j, &id)| (id, j)).collect();

    let (n_items, n_users) = (item_ids.len(), user_ids.len());
    let mut values = vec![0.0; n_items * n_users];
    let mut mask = vec![0u8; n_items * n_users];
    for e in &dataset.events {
        let i = item_index[&e.item_id];
        let j = *user_index.get(&e.user_id).ok_or_else(|| {
            CoreError::Dataset(format!("event references unknown user {}", e.user_id))
        })?;
        let idx = j * n_items + i;
        if mask[idx] == 1 {
            return Err(CoreError::Dataset(format!(
                "duplicate (user {}, item {}) after aggregation",
                e.user_id, e.item_id
            )));
        }
        values[idx] = normalization.normalize(e.rating);
        mask[idx] = 1;
    }

    Ok(InteractionMatrix {
        n_items,
        n_users,
        values,
        mask,
        item_ids,
        user_ids,
        item_index,
        user_index,
        normalization,
    })
}
