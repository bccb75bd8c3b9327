//! Raw dataset file parsers.
//!
//! MovieLens files are "::"-delimited without a header; LastFM files are
//! tab-delimited with one header row. Files are decoded as UTF-8 with a
//! Latin-1 fallback.

use super::{RatingDataset, RatingEvent, UserMeta};
use crate::error::CoreError;
use crate::Result;
use std::collections::BTreeMap;
use std::path::Path;

fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    match String::from_utf8(bytes) {
        Ok(s) => Ok(s),
        // Latin-1: every byte maps directly to the code point of equal value.
        Err(e) => Ok(e.into_bytes().iter().map(|&b| b as char).collect()),
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> CoreError {
    CoreError::Parse {
        file: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Parse MovieLens ratings (`UserID::MovieID::Rating::Timestamp`) and user
/// metadata (`UserID::Gender::Age::Occupation::Zip`). Duplicate (user, item)
/// pairs keep the event with the latest timestamp.
pub fn parse_movielens(ratings_path: &Path, users_path: &Path) -> Result<RatingDataset> {
    let users_text = read_text(users_path)?;
    let mut users: BTreeMap<u32, UserMeta> = BTreeMap::new();
    for (idx, line) in users_text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 5 {
            return Err(parse_err(
                users_path,
                lineno,
                format!("expected 5 '::'-delimited fields, got {}", fields.len()),
            ));
        }
        let user_id: u32 = fields[0]
            .parse()
            .map_err(|_| parse_err(users_path, lineno, "non-numeric user id"))?;
        let gender = fields[1].chars().next().ok_or_else(|| {
            parse_err(users_path, lineno, "empty gender field")
        })?;
        let age: u32 = fields[2]
            .parse()
            .map_err(|_| parse_err(users_path, lineno, "non-numeric age"))?;
        users.insert(
            user_id,
            UserMeta {
                gender: Some(gender),
                age: Some(age),
                ..Default::default()
            },
        );
    }
    if users.is_empty() {
        return Err(CoreError::Dataset(format!(
            "users file {} contains no users",
            users_path.display()
        )));
    }

    let ratings_text = read_text(ratings_path)?;
    let mut events: Vec<RatingEvent> = Vec::new();
    for (idx, line) in ratings_text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(parse_err(
                ratings_path,
                lineno,
                format!("expected 4 '::'-delimited fields, got {}", fields.len()),
            ));
        }
        let user_id: u32 = fields[0]
            .parse()
            .map_err(|_| parse_err(ratings_path, lineno, "non-numeric user id"))?;
        let item_id: u32 = fields[1]
            .parse()
            .map_err(|_| parse_err(ratings_path, lineno, "non-numeric item id"))?;
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(ratings_path, lineno, "non-numeric rating"))?;
        let timestamp: i64 = fields[3]
            .parse()
            .map_err(|_| parse_err(ratings_path, lineno, "non-numeric timestamp"))?;
        if rating < 0.0 {
            return Err(parse_err(ratings_path, lineno, "negative rating"));
        }
        if !users.contains_key(&user_id) {
            return Err(parse_err(
                ratings_path,
                lineno,
                format!("user {user_id} not present in users file"),
            ));
        }
        events.push(RatingEvent {
            user_id,
            item_id,
            rating,
            timestamp: Some(timestamp),
        });
    }
    if events.is_empty() {
        return Err(CoreError::Dataset(format!(
            "ratings file {} contains no events",
            ratings_path.display()
        )));
    }

    // Keep the last event by timestamp per (user, item).
    events.sort_by_key(|e| (e.user_id, e.item_id, e.timestamp));
    events.dedup_by(|next, prev| {
        if next.user_id == prev.user_id && next.item_id == prev.item_id {
            // `next` has the later timestamp after the sort; keep it.
            std::mem::swap(prev, next);
            true
        } else {
            false
        }
    });

    // Only keep metadata for users that actually rated something.
    let rated: std::collections::BTreeSet<u32> = events.iter().map(|e| e.user_id).collect();
    users.retain(|u, _| rated.contains(u));

    Ok(RatingDataset { events, users })
}

/// Parse LastFM play counts (`userID\tartistID\tweight`, one header row) and
/// optionally the tag file (`userID\tartistID\ttagID\t...`). The rating is
/// the play count; duplicate (user, artist) rows sum their weights. Users
/// with no artist rows are excluded.
pub fn parse_lastfm(
    user_artists_path: &Path,
    user_tags_path: Option<&Path>,
) -> Result<RatingDataset> {
    let text = read_text(user_artists_path)?;
    let mut weights: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if idx == 0 || line.trim().is_empty() {
            continue; // header
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                user_artists_path,
                lineno,
                format!("expected 3 tab-separated fields, got {}", fields.len()),
            ));
        }
        let user_id: u32 = fields[0]
            .parse()
            .map_err(|_| parse_err(user_artists_path, lineno, "non-numeric user id"))?;
        let item_id: u32 = fields[1]
            .parse()
            .map_err(|_| parse_err(user_artists_path, lineno, "non-numeric artist id"))?;
        let weight: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(user_artists_path, lineno, "non-numeric weight"))?;
        if weight < 0.0 {
            return Err(parse_err(user_artists_path, lineno, "negative weight"));
        }
        *weights.entry((user_id, item_id)).or_insert(0.0) += weight;
    }
    if weights.is_empty() {
        return Err(CoreError::Dataset(format!(
            "file {} contains no interactions",
            user_artists_path.display()
        )));
    }

    let mut total_plays: BTreeMap<u32, f64> = BTreeMap::new();
    let events: Vec<RatingEvent> = weights
        .iter()
        .map(|(&(user_id, item_id), &rating)| {
            *total_plays.entry(user_id).or_insert(0.0) += rating;
            RatingEvent {
                user_id,
                item_id,
                rating,
                timestamp: None,
            }
        })
        .collect();

    let mut tag_sets: BTreeMap<u32, std::collections::BTreeSet<u32>> = BTreeMap::new();
    if let Some(tags_path) = user_tags_path {
        let text = read_text(tags_path)?;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 3 {
                return Err(parse_err(
                    tags_path,
                    lineno,
                    format!("expected >= 3 tab-separated fields, got {}", fields.len()),
                ));
            }
            let user_id: u32 = fields[0]
                .parse()
                .map_err(|_| parse_err(tags_path, lineno, "non-numeric user id"))?;
            let tag_id: u32 = fields[2]
                .parse()
                .map_err(|_| parse_err(tags_path, lineno, "non-numeric tag id"))?;
            tag_sets.entry(user_id).or_default().insert(tag_id);
        }
    }

    let users: BTreeMap<u32, UserMeta> = total_plays
        .iter()
        .map(|(&user_id, &plays)| {
            (
                user_id,
                UserMeta {
                    total_plays: Some(plays),
                    distinct_tags: if user_tags_path.is_some() {
                        Some(tag_sets.get(&user_id).map_or(0, |s| s.len()))
                    } else {
                        None
                    },
                    ..Default::default()
                },
            )
        })
        .collect();

    Ok(RatingDataset { events, users })
}
