//! Utility and fairness metrics over predicted ratings.
//!
//! Ranking metrics (recall, ndcg, equal opportunity) operate on per-user
//! top-k lists over candidate items the user did not interact with in
//! training. Absolute equality compares per-group mean absolute rating
//! errors on held-out test cells. The distribution gap is a two-sample
//! Kolmogorov-Smirnov statistic between the groups' pooled predictions,
//! standing in for an exact prediction-bias probability which has no
//! tractable estimator in high dimension.

use crate::data::{DatasetSplit, InteractionMatrix, Normalization};
use crate::error::CoreError;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Dense denormalized predictions, column-major items x users.
#[derive(Debug, Clone)]
pub struct PredictionMatrix {
    pub n_items: usize,
    pub n_users: usize,
    pub values: Vec<f64>,
    pub normalization: Normalization,
}

impl PredictionMatrix {
    #[inline]
    pub fn value(&self, item: usize, user: usize) -> f64 {
        self.values[user * self.n_items + item]
    }

    #[inline]
    pub fn user_column(&self, user: usize) -> &[f64] {
        &self.values[user * self.n_items..(user + 1) * self.n_items]
    }
}

/// Per-user top-k item lists (item row indices, best first).
#[derive(Debug, Clone)]
pub struct RankedLists {
    pub k: usize,
    pub lists: Vec<Vec<usize>>,
    /// Users whose candidate pool was smaller than k (lists truncated).
    pub truncated_users: usize,
}

/// Descending-score top-k per user over items outside the training set;
/// ties break by ascending item index.
pub fn rank_topk(
    preds: &PredictionMatrix,
    split: &DatasetSplit,
    k: usize,
) -> Result<RankedLists> {
    if k == 0 {
        return Err(CoreError::InvalidArgument("k must be positive".to_string()));
    }
    let m = preds.n_items;
    let mut lists = Vec::with_capacity(preds.n_users);
    let mut truncated = 0usize;
    for user in 0..preds.n_users {
        let train = split.train_col(user);
        let col = preds.user_column(user);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                context: "rank_topk".to_string(),
                detail: format!("non-finite prediction for user {user}"),
            });
        }
        let mut candidates: Vec<usize> = (0..m).filter(|&i| train[i] == 0).collect();
        candidates.sort_by(|&a, &b| {
            col[b]
                .partial_cmp(&col[a])
                .unwrap()
                .then_with(|| a.cmp(&b))
        });
        if candidates.len() < k {
            truncated += 1;
        }
        candidates.truncate(k);
        lists.push(candidates);
    }
    Ok(RankedLists {
        k,
        lists,
        truncated_users: truncated,
    })
}

fn eligible_users(split: &DatasetSplit) -> Vec<usize> {
    (0..split.n_users)
        .filter(|&u| split.test_col(u).iter().any(|&v| v == 1))
        .collect()
}

/// Mean over users with at least one test positive of
/// |top-k intersect test positives| / min(k, #test positives).
pub fn recall_at_k(lists: &RankedLists, split: &DatasetSplit) -> Result<f64> {
    recall_over(lists, split, &eligible_users(split))
}

fn recall_over(lists: &RankedLists, split: &DatasetSplit, users: &[usize]) -> Result<f64> {
    if users.is_empty() {
        return Err(CoreError::Eval(
            "no users with test positives".to_string(),
        ));
    }
    let mut total = 0.0;
    for &user in users {
        let test = split.test_col(user);
        let positives = test.iter().filter(|&&v| v == 1).count();
        let hits = lists.lists[user]
            .iter()
            .filter(|&&i| test[i] == 1)
            .count();
        total += hits as f64 / positives.min(lists.k) as f64;
    }
    Ok(total / users.len() as f64)
}

/// Binary-relevance NDCG with a log2(rank + 1) discount, normalized by the
/// ideal DCG, averaged over users with at least one test positive.
pub fn ndcg_at_k(lists: &RankedLists, split: &DatasetSplit) -> Result<f64> {
    ndcg_over(lists, split, &eligible_users(split))
}

fn ndcg_over(lists: &RankedLists, split: &DatasetSplit, users: &[usize]) -> Result<f64> {
    if users.is_empty() {
        return Err(CoreError::Eval(
            "no users with test positives".to_string(),
        ));
    }
    let mut total = 0.0;
    for &user in users {
        let test = split.test_col(user);
        let positives = test.iter().filter(|&&v| v == 1).count();
        let mut dcg = 0.0;
        for (rank0, &item) in lists.lists[user].iter().enumerate() {
            if test[item] == 1 {
                dcg += 1.0 / ((rank0 + 2) as f64).log2();
            }
        }
        let ideal: f64 = (0..positives.min(lists.k))
            .map(|r| 1.0 / ((r + 2) as f64).log2())
            .sum();
        total += dcg / ideal;
    }
    Ok(total / users.len() as f64)
}

/// Per-group mean absolute errors over test cells and their gap.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GroupMae {
    pub mae_a: f64,
    pub mae_b: f64,
    /// |mae_a - mae_b|.
    pub gap: f64,
}

/// Absolute equality on the denormalized rating scale: the gap between the
/// two groups' MAEs over their held-out test cells.
pub fn abs_equality(
    preds: &PredictionMatrix,
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    labels: &[u8],
) -> Result<GroupMae> {
    mae_gap(preds, matrix, split, labels, false)
}

/// Same gap measured on the normalized model scale.
pub fn abs_equality_normalized(
    preds: &PredictionMatrix,
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    labels: &[u8],
) -> Result<GroupMae> {
    mae_gap(preds, matrix, split, labels, true)
}

fn mae_gap(
    preds: &PredictionMatrix,
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    labels: &[u8],
    normalized: bool,
) -> Result<GroupMae> {
    let norm = matrix.normalization;
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for user in 0..matrix.n_users {
        let g = labels[user] as usize;
        let test = split.test_col(user);
        for item in 0..matrix.n_items {
            if test[item] == 1 {
                let (p, r) = if normalized {
                    (norm.normalize(preds.value(item, user)), matrix.value(item, user))
                } else {
                    (preds.value(item, user), norm.denormalize(matrix.value(item, user)))
                };
                sums[g] += (p - r).abs();
                counts[g] += 1;
            }
        }
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(CoreError::Eval(format!(
            "a group has no test cells (A: {}, B: {})",
            counts[0], counts[1]
        )));
    }
    let mae_a = sums[0] / counts[0] as f64;
    let mae_b = sums[1] / counts[1] as f64;
    Ok(GroupMae {
        mae_a,
        mae_b,
        gap: (mae_a - mae_b).abs(),
    })
}

/// Per-group pooled rate of top-k items that are not test positives, and
/// the equal-opportunity statistic sqrt(|e_A - e_B|).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EqualOpportunity {
    pub incorrect_rate_a: f64,
    pub incorrect_rate_b: f64,
    pub e_at_k: f64,
}

pub fn equal_opportunity(
    lists: &RankedLists,
    split: &DatasetSplit,
    labels: &[u8],
) -> Result<EqualOpportunity> {
    let mut incorrect = [0usize; 2];
    let mut total = [0usize; 2];
    for (user, list) in lists.lists.iter().enumerate() {
        let g = labels[user] as usize;
        let test = split.test_col(user);
        total[g] += list.len();
        incorrect[g] += list.iter().filter(|&&i| test[i] == 0).count();
    }
    if total[0] == 0 || total[1] == 0 {
        return Err(CoreError::Eval(
            "a group has no ranked items".to_string(),
        ));
    }
    let e_a = incorrect[0] as f64 / total[0] as f64;
    let e_b = incorrect[1] as f64 / total[1] as f64;
    Ok(EqualOpportunity {
        incorrect_rate_a: e_a,
        incorrect_rate_b: e_b,
        e_at_k: (e_a - e_b).abs().sqrt(),
    })
}

/// Two-sample Kolmogorov-Smirnov statistic between the pooled per-cell
/// predictions of the two groups.
pub fn distribution_gap(preds: &PredictionMatrix, labels: &[u8]) -> Result<f64> {
    let mut a: Vec<f64> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    for user in 0..preds.n_users {
        let col = preds.user_column(user);
        if labels[user] == 0 {
            a.extend_from_slice(col);
        } else {
            b.extend_from_slice(col);
        }
    }
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::Eval("a group has no predictions".to_string()));
    }
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Full metrics bundle with per-group breakdowns and run metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub attribute: String,
    pub recall: f64,
    pub ndcg: f64,
    pub recall_group_a: f64,
    pub recall_group_b: f64,
    pub ndcg_group_a: f64,
    pub ndcg_group_b: f64,
    /// Absolute equality on the rating scale.
    pub a_at_k: f64,
    pub mae_group_a: f64,
    pub mae_group_b: f64,
    /// Absolute equality on the normalized model scale.
    pub a_at_k_normalized: f64,
    pub e_at_k: f64,
    pub incorrect_rate_a: f64,
    pub incorrect_rate_b: f64,
    pub dist_gap: f64,
    pub truncated_users: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// Compute every metric at once.
pub fn compute_report(
    preds: &PredictionMatrix,
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    labels: &[u8],
    k: usize,
    attribute: &str,
    seed: u64,
    config_hash: &str,
) -> Result<MetricsReport> {
    let lists = rank_topk(preds, split, k)?;
    let recall = recall_at_k(&lists, split)?;
    let ndcg = ndcg_at_k(&lists, split)?;

    let eligible = eligible_users(split);
    let group_users = |g: u8| -> Vec<usize> {
        eligible
            .iter()
            .copied()
            .filter(|&u| labels[u] == g)
            .collect()
    };
    let a_users = group_users(0);
    let b_users = group_users(1);
    let recall_group_a = recall_over(&lists, split, &a_users)?;
    let recall_group_b = recall_over(&lists, split, &b_users)?;
    let ndcg_group_a = ndcg_over(&lists, split, &a_users)?;
    let ndcg_group_b = ndcg_over(&lists, split, &b_users)?;

    let mae = abs_equality(preds, matrix, split, labels)?;
    let mae_norm = abs_equality_normalized(preds, matrix, split, labels)?;
    let eo = equal_opportunity(&lists, split, labels)?;
    let dist_gap = distribution_gap(preds, labels)?;

    Ok(MetricsReport {
        k,
        attribute: attribute.to_string(),
        recall,
        ndcg,
        recall_group_a,
        recall_group_b,
        ndcg_group_a,
        ndcg_group_b,
        a_at_k: mae.gap,
        mae_group_a: mae.mae_a,
        mae_group_b: mae.mae_b,
        a_at_k_normalized: mae_norm.gap,
        e_at_k: eo.e_at_k,
        incorrect_rate_a: eo.incorrect_rate_a,
        incorrect_rate_b: eo.incorrect_rate_b,
        dist_gap,
        truncated_users: lists.truncated_users,
        seed,
        config_hash: config_hash.to_string(),
    })
}

impl MetricsReport {
    /// Human-readable aligned table.
    pub fn to_table(&self) -> String {
        let rows = [
            ("recall", self.recall),
            ("ndcg", self.ndcg),
            ("recall_group_a", self.recall_group_a),
            ("recall_group_b", self.recall_group_b),
            ("ndcg_group_a", self.ndcg_group_a),
            ("ndcg_group_b", self.ndcg_group_b),
            ("a_at_k", self.a_at_k),
            ("mae_group_a", self.mae_group_a),
            ("mae_group_b", self.mae_group_b),
            ("a_at_k_normalized", self.a_at_k_normalized),
            ("e_at_k", self.e_at_k),
            ("incorrect_rate_a", self.incorrect_rate_a),
            ("incorrect_rate_b", self.incorrect_rate_b),
            ("dist_gap", self.dist_gap),
        ];
        let mut out = format!(
            "metric                value     (k = {}, attribute = {})\n",
            self.k, self.attribute
        );
        for (name, value) in rows {
            out.push_str(&format!("{name:<20}  {value:>10.6}\n"));
        }
        out
    }
}
