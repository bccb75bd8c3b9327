//! Dataset ingestion: raw file parsing, the item-by-user interaction matrix
//! with its observation mask, sensitive-attribute group assignment, and
//! deterministic train/validation/test splits.

mod matrix;
mod parse;
mod split;

pub use matrix::{build_matrix, InteractionMatrix, Normalization, NormalizationScheme};
pub use parse::{parse_lastfm, parse_movielens};
pub use split::{split, DatasetSplit, SplitRatios};

use crate::error::CoreError;
use crate::Result;
use std::collections::BTreeMap;

/// One observed (user, item, rating) interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingEvent {
    pub user_id: u32,
    pub item_id: u32,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Per-user metadata retained for group assignment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserMeta {
    pub gender: Option<char>,
    pub age: Option<u32>,
    pub total_plays: Option<f64>,
    pub distinct_tags: Option<usize>,
}

/// Aggregated dataset: unique (user, item) events plus user metadata.
#[derive(Debug, Clone, Default)]
pub struct RatingDataset {
    pub events: Vec<RatingEvent>,
    pub users: BTreeMap<u32, UserMeta>,
}

impl RatingDataset {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        let mut items: Vec<u32> = self.events.iter().map(|e| e.item_id).collect();
        items.sort_unstable();
        items.dedup();
        items.len()
    }

    /// Drop users with fewer than `min_events` interactions. Returns the
    /// filtered dataset and the number of users removed.
    pub fn filter_min_interactions(&self, min_events: usize) -> (RatingDataset, usize) {
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for e in &self.events {
            *counts.entry(e.user_id).or_insert(0) += 1;
        }
        let keep: std::collections::BTreeSet<u32> = counts
            .iter()
            .filter(|(_, &c)| c >= min_events)
            .map(|(&u, _)| u)
            .collect();
        let dropped = self.users.keys().filter(|u| !keep.contains(u)).count();
        let filtered = RatingDataset {
            events: self
                .events
                .iter()
                .filter(|e| keep.contains(&e.user_id))
                .cloned()
                .collect(),
            users: self
                .users
                .iter()
                .filter(|(u, _)| keep.contains(u))
                .map(|(u, m)| (*u, m.clone()))
                .collect(),
        };
        (filtered, dropped)
    }
}

/// Sensitive attribute used to partition users into two groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attribute {
    Gender,
    Age,
    ActivityLevel,
    InterestDiversity,
}

impl Attribute {
    pub fn name(&self) -> &'static str {
        match self {
            Attribute::Gender => "gender",
            Attribute::Age => "age",
            Attribute::ActivityLevel => "activity_level",
            Attribute::InterestDiversity => "interest_diversity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gender" => Ok(Attribute::Gender),
            "age" => Ok(Attribute::Age),
            "activity_level" | "activity" => Ok(Attribute::ActivityLevel),
            "interest_diversity" | "interest" => Ok(Attribute::InterestDiversity),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown attribute '{other}'"
            ))),
        }
    }
}

/// Thresholds for the numeric attributes; a boundary value joins group B.
#[derive(Debug, Clone, Copy)]
pub struct GroupThresholds {
    pub age: u32,
    pub plays: f64,
    pub tags: usize,
}

impl Default for GroupThresholds {
    fn default() -> Self {
        GroupThresholds {
            age: 50,
            plays: 15_000.0,
            tags: 300,
        }
    }
}

/// Binary partition of the user set. Group A carries label s = 0,
/// group B carries s = 1.
#[derive(Debug, Clone)]
pub struct GroupAssignment {
    pub attribute: Attribute,
    pub group_a_ids: std::collections::BTreeSet<u32>,
    pub group_b_ids: std::collections::BTreeSet<u32>,
}

impl GroupAssignment {
    /// Rebuild an assignment from per-column labels (dataset dump path).
    pub fn from_labels(
        matrix: &InteractionMatrix,
        labels: &[u8],
        attribute: Attribute,
    ) -> GroupAssignment {
        let mut group_a = std::collections::BTreeSet::new();
        let mut group_b = std::collections::BTreeSet::new();
        for (&user_id, &s) in matrix.user_ids.iter().zip(labels) {
            if s == 0 {
                group_a.insert(user_id);
            } else {
                group_b.insert(user_id);
            }
        }
        GroupAssignment {
            attribute,
            group_a_ids: group_a,
            group_b_ids: group_b,
        }
    }

    pub fn label(&self, user_id: u32) -> Option<u8> {
        if self.group_a_ids.contains(&user_id) {
            Some(0)
        } else if self.group_b_ids.contains(&user_id) {
            Some(1)
        } else {
            None
        }
    }

    /// Per-column s labels aligned with the matrix user order.
    pub fn column_labels(&self, matrix: &InteractionMatrix) -> Result<Vec<u8>> {
        matrix
            .user_ids
            .iter()
            .map(|&u| {
                self.label(u).ok_or_else(|| {
                    CoreError::Groups(format!("user {u} missing from group assignment"))
                })
            })
            .collect()
    }

    /// Swap A and B. Useful for symmetry checks.
    pub fn swapped(&self) -> GroupAssignment {
        GroupAssignment {
            attribute: self.attribute,
            group_a_ids: self.group_b_ids.clone(),
            group_b_ids: self.group_a_ids.clone(),
        }
    }
}

/// Partition users by the chosen attribute. The boundary value (age 50,
/// 15,000 plays, 300 tags) goes to the high side, group B.
pub fn assign_groups(
    dataset: &RatingDataset,
    attribute: Attribute,
    thresholds: GroupThresholds,
) -> Result<GroupAssignment> {
    let mut group_a = std::collections::BTreeSet::new();
    let mut group_b = std::collections::BTreeSet::new();
    for (&user_id, meta) in &dataset.users {
        let missing = || {
            CoreError::Groups(format!(
                "user {user_id} lacks metadata for attribute '{}'",
                attribute.name()
            ))
        };
        let in_b = match attribute {
            Attribute::Gender => match meta.gender.ok_or_else(missing)? {
                'F' | 'f' => false,
                'M' | 'm' => true,
                other => {
                    return Err(CoreError::Groups(format!(
                        "user {user_id} has unrecognized gender '{other}'"
                    )))
                }
            },
            Attribute::Age => meta.age.ok_or_else(missing)? >= thresholds.age,
            Attribute::ActivityLevel => meta.total_plays.ok_or_else(missing)? >= thresholds.plays,
            Attribute::InterestDiversity => {
                meta.distinct_tags.ok_or_else(missing)? >= thresholds.tags
            }
        };
        if in_b {
            group_b.insert(user_id);
        } else {
            group_a.insert(user_id);
        }
    }
    if group_a.is_empty() || group_b.is_empty() {
        return Err(CoreError::Groups(format!(
            "attribute '{}' produces an empty group ({} / {})",
            attribute.name(),
            group_a.len(),
            group_b.len()
        )));
    }
    Ok(GroupAssignment {
        attribute,
        group_a_ids: group_a,
        group_b_ids: group_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta_age(age: u32) -> UserMeta {
        UserMeta {
            age: Some(age),
            ..Default::default()
        }
    }

    #[test]
    fn age_boundary_joins_high_group() {
        let mut ds = RatingDataset::default();
        ds.users.insert(1, meta_age(49));
        ds.users.insert(2, meta_age(50));
        ds.users.insert(3, meta_age(51));
        let g = assign_groups(&ds, Attribute::Age, GroupThresholds::default()).unwrap();
        assert_eq!(g.label(1), Some(0));
        assert_eq!(g.label(2), Some(1));
        assert_eq!(g.label(3), Some(1));
    }

    #[test]
    fn plays_boundary_is_inclusive_on_high_side() {
        let mut ds = RatingDataset::default();
        ds.users.insert(
            1,
            UserMeta {
                total_plays: Some(15_000.0),
                ..Default::default()
            },
        );
        ds.users.insert(
            2,
            UserMeta {
                total_plays: Some(14_999.0),
                ..Default::default()
            },
        );
        let g = assign_groups(&ds, Attribute::ActivityLevel, GroupThresholds::default()).unwrap();
        assert_eq!(g.label(1), Some(1));
        assert_eq!(g.label(2), Some(0));
    }

    #[test]
    fn uniform_attribute_yields_empty_group_error() {
        let mut ds = RatingDataset::default();
        for u in 1..=4 {
            ds.users.insert(u, meta_age(30));
        }
        let err = assign_groups(&ds, Attribute::Age, GroupThresholds::default()).unwrap_err();
        assert!(err.to_string().contains("empty group"));
    }

    #[test]
    fn missing_metadata_is_an_error() {
        let mut ds = RatingDataset::default();
        ds.users.insert(1, UserMeta::default());
        ds.users.insert(2, meta_age(60));
        assert!(assign_groups(&ds, Attribute::Age, GroupThresholds::default()).is_err());
        assert!(assign_groups(&ds, Attribute::Gender, GroupThresholds::default()).is_err());
    }

    #[test]
    fn partition_covers_all_users_exactly_once() {
        let mut ds = RatingDataset::default();
        for u in 0..20 {
            ds.users.insert(u, meta_age(if u % 3 == 0 { 60 } else { 20 }));
        }
        let g = assign_groups(&ds, Attribute::Age, GroupThresholds::default()).unwrap();
        assert_eq!(g.group_a_ids.len() + g.group_b_ids.len(), 20);
        assert!(g.group_a_ids.is_disjoint(&g.group_b_ids));
    }

    #[test]
    fn filter_min_interactions_drops_sparse_users() {
        let mut ds = RatingDataset::default();
        ds.users.insert(1, UserMeta::default());
        ds.users.insert(2, UserMeta::default());
        for i in 0..13 {
            ds.events.push(RatingEvent {
                user_id: 1,
                item_id: i,
                rating: 1.0,
                timestamp: None,
            });
        }
        ds.events.push(RatingEvent {
            user_id: 2,
            item_id: 0,
            rating: 1.0,
            timestamp: None,
        });
        let (filtered, dropped) = ds.filter_min_interactions(13);
        assert_eq!(dropped, 1);
        assert_eq!(filtered.n_users(), 1);
        assert!(filtered.events.iter().all(|e| e.user_id == 1));
    }
}
