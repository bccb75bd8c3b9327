//! Deterministic per-user train/validation/test splits.

use super::InteractionMatrix;
use crate::error::CoreError;
use crate::rng;
use crate::Result;
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// Binary masks over the matrix cells, column-major like the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub n_items: usize,
    pub n_users: usize,
    pub train: Vec<u8>,
    pub val: Vec<u8>,
    pub test: Vec<u8>,
    /// User columns with too few observations to satisfy the split; their
    /// cells are excluded from all three masks.
    pub dropped_users: Vec<usize>,
}

impl DatasetSplit {
    #[inline]
    pub fn train_col(&self, user: usize) -> &[u8] {
        &self.train[user * self.n_items..(user + 1) * self.n_items]
    }

    #[inline]
    pub fn val_col(&self, user: usize) -> &[u8] {
        &self.val[user * self.n_items..(user + 1) * self.n_items]
    }

    #[inline]
    pub fn test_col(&self, user: usize) -> &[u8] {
        &self.test[user * self.n_items..(user + 1) * self.n_items]
    }

    pub fn is_train(&self, item: usize, user: usize) -> bool {
        self.train[user * self.n_items + item] == 1
    }

    pub fn is_test(&self, item: usize, user: usize) -> bool {
        self.test[user * self.n_items + item] == 1
    }
}

/// Per-user random partition of the observed cells. Each kept user gets at
/// least `min_train` training cells (rebalanced from val/test when rounding
/// falls short); users with fewer than `min_train + 3` observations are
/// dropped and counted.
pub fn split(
    matrix: &InteractionMatrix,
    ratios: SplitRatios,
    min_train: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    let sum = ratios.train + ratios.val + ratios.test;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CoreError::InvalidArgument(format!(
            "split ratios sum to {sum}, expected 1"
        )));
    }
    if ratios.train <= 0.0 || ratios.val < 0.0 || ratios.test < 0.0 {
        return Err(CoreError::InvalidArgument(
            "split ratios must be non-negative with positive train share".to_string(),
        ));
    }

    let (m, n) = (matrix.n_items, matrix.n_users);
    let mut out = DatasetSplit {
        n_items: m,
        n_users: n,
        train: vec![0u8; m * n],
        val: vec![0u8; m * n],
        test: vec![0u8; m * n],
        dropped_users: Vec::new(),
    };

    // A user needs min_train in train plus at least one val and one test cell.
    let min_obs = min_train + 3;

    for user in 0..n {
        let mut observed = matrix.observed_items_of(user);
        if observed.len() < min_obs {
            out.dropped_users.push(user);
            continue;
        }
        let mut user_rng = rng::stream(seed, "split", user as u64);
        observed.shuffle(&mut user_rng);

        let total = observed.len();
        let mut n_val = (ratios.val * total as f64).floor() as usize;
        let mut n_test = (ratios.test * total as f64).floor() as usize;
        // Rebalance toward train if rounding violates the floor.
        while total - n_val - n_test < min_train && (n_val > 1 || n_test > 1) {
            if n_val >= n_test && n_val > 1 {
                n_val -= 1;
            } else {
                n_test -= 1;
            }
        }
        let n_train = total - n_val - n_test;

        for (pos, &item) in observed.iter().enumerate() {
            let idx = user * m + item;
            if pos < n_train {
                out.train[idx] = 1;
            } else if pos < n_train + n_val {
                out.val[idx] = 1;
            } else {
                out.test[idx] = 1;
            }
        }
    }

    Ok(out)
}
