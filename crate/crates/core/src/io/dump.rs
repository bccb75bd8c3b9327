//! Canonical dataset dump: a directory holding the matrix dimensions, id
//! maps, group labels, normalization constants, and the observed cells as
//! (row, col, value, split-tag) records in a little-endian binary layout.
//!
//! Layout:
//!   header.txt   key=value lines (version, m, n, scheme, lo, hi,
//!                attribute, records, dropped_users)
//!   items.txt    one item id per matrix row
//!   users.txt    "user_id s" per matrix column (s = 0 for group A, 1 for B)
//!   ratings.bin  records of u32 row, u32 col, f64 normalized value,
//!                u8 split tag (0 train, 1 val, 2 test, 3 unsplit)

use super::{atomic_write, format_err, sha256_hex};
use crate::data::{DatasetSplit, InteractionMatrix, Normalization, NormalizationScheme};
use crate::error::CoreError;
use crate::Result;
use std::collections::BTreeMap;
use std::path::Path;

const VERSION: &str = "1";
const RECORD_LEN: usize = 4 + 4 + 8 + 1;

#[derive(Debug, Clone)]
pub struct DatasetDump {
    pub matrix: InteractionMatrix,
    pub split: DatasetSplit,
    /// Group label per user column.
    pub labels: Vec<u8>,
    pub attribute: String,
    /// Content hash of the dump; identifies the dataset everywhere.
    pub fingerprint: String,
}

fn split_tag(split: &DatasetSplit, item: usize, user: usize) -> u8 {
    let idx = user * split.n_items + item;
    if split.train[idx] == 1 {
        0
    } else if split.val[idx] == 1 {
        1
    } else if split.test[idx] == 1 {
        2
    } else {
        3
    }
}

fn encode_records(matrix: &InteractionMatrix, split: &DatasetSplit) -> Vec<u8> {
    let mut out = Vec::with_capacity(matrix.observed_count() * RECORD_LEN);
    for user in 0..matrix.n_users {
        for item in 0..matrix.n_items {
            if matrix.observed(item, user) {
                out.extend_from_slice(&(item as u32).to_le_bytes());
                out.extend_from_slice(&(user as u32).to_le_bytes());
                out.extend_from_slice(&matrix.value(item, user).to_le_bytes());
                out.push(split_tag(split, item, user));
            }
        }
    }
    out
}

fn canonical_fingerprint(
    matrix: &InteractionMatrix,
    labels: &[u8],
    attribute: &str,
    records: &[u8],
) -> String {
    let norm = matrix.normalization;
    let mut canon = format!(
        "m={} n={} scheme={} lo={:x} hi={:x} attribute={attribute}\n",
        matrix.n_items,
        matrix.n_users,
        norm.scheme.name(),
        norm.lo.to_bits(),
        norm.hi.to_bits(),
    )
    .into_bytes();
    for &id in &matrix.item_ids {
        canon.extend_from_slice(&id.to_le_bytes());
    }
    for (&id, &s) in matrix.user_ids.iter().zip(labels) {
        canon.extend_from_slice(&id.to_le_bytes());
        canon.push(s);
    }
    canon.extend_from_slice(records);
    sha256_hex(&canon)
}

pub fn save_dump(
    dir: &Path,
    matrix: &InteractionMatrix,
    split: &DatasetSplit,
    labels: &[u8],
    attribute: &str,
) -> Result<String> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir.display().to_string(), e))?;
    let records = encode_records(matrix, split);
    let norm = matrix.normalization;

    let mut header = BTreeMap::new();
    header.insert("version", VERSION.to_string());
    header.insert("m", matrix.n_items.to_string());
    header.insert("n", matrix.n_users.to_string());
    header.insert("scheme", norm.scheme.name().to_string());
    header.insert("lo", norm.lo.to_string());
    header.insert("hi", norm.hi.to_string());
    header.insert("attribute", attribute.to_string());
    header.insert("records", (records.len() / RECORD_LEN).to_string());
    header.insert("dropped_users", split.dropped_users.len().to_string());
    let header_text: String = header
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();

    let items_text: String = matrix
        .item_ids
        .iter()
        .map(|id| format!("{id}\n"))
        .collect();
    let users_text: String = matrix
        .user_ids
        .iter()
        .zip(labels)
        .map(|(id, s)| format!("{id} {s}\n"))
        .collect();

    atomic_write(&dir.join("header.txt"), header_text.as_bytes())?;
    atomic_write(&dir.join("items.txt"), items_text.as_bytes())?;
    atomic_write(&dir.join("users.txt"), users_text.as_bytes())?;
    atomic_write(&dir.join("ratings.bin"), &records)?;

    Ok(canonical_fingerprint(matrix, labels, attribute, &records))
}

pub fn load_dump(dir: &Path) -> Result<DatasetDump> {
    let header_path = dir.join("header.txt");
    let header_text = std::fs::read_to_string(&header_path)
        .map_err(|e| CoreError::io(header_path.display().to_string(), e))?;
    let mut header = BTreeMap::new();
    for line in header_text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            format_err("dump header", &header_path, format!("malformed line '{line}'"))
        })?;
        header.insert(k.to_string(), v.to_string());
    }
    let get = |key: &str| -> Result<&String> {
        header
            .get(key)
            .ok_or_else(|| format_err("dump header", &header_path, format!("missing key '{key}'")))
    };
    let version = get("version")?;
    if version != VERSION {
        return Err(format_err(
            "dump header",
            &header_path,
            format!("unsupported version '{version}'"),
        ));
    }
    let m: usize = get("m")?.parse().map_err(|_| {
        format_err("dump header", &header_path, "non-numeric m")
    })?;
    let n: usize = get("n")?.parse().map_err(|_| {
        format_err("dump header", &header_path, "non-numeric n")
    })?;
    let scheme = NormalizationScheme::parse(get("scheme")?)?;
    let lo: f64 = get("lo")?.parse().map_err(|_| {
        format_err("dump header", &header_path, "non-numeric lo")
    })?;
    let hi: f64 = get("hi")?.parse().map_err(|_| {
        format_err("dump header", &header_path, "non-numeric hi")
    })?;
    let attribute = get("attribute")?.clone();
    let n_records: usize = get("records")?.parse().map_err(|_| {
        format_err("dump header", &header_path, "non-numeric record count")
    })?;

    let items_path = dir.join("items.txt");
    let item_ids: Vec<u32> = std::fs::read_to_string(&items_path)
        .map_err(|e| CoreError::io(items_path.display().to_string(), e))?
        .lines()
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| format_err("dump items", &items_path, format!("bad id '{l}'")))
        })
        .collect::<Result<_>>()?;

    let users_path = dir.join("users.txt");
    let mut user_ids = Vec::new();
    let mut labels = Vec::new();
    for line in std::fs::read_to_string(&users_path)
        .map_err(|e| CoreError::io(users_path.display().to_string(), e))?
        .lines()
    {
        let (id, s) = line.split_once(' ').ok_or_else(|| {
            format_err("dump users", &users_path, format!("malformed line '{line}'"))
        })?;
        user_ids.push(id.parse().map_err(|_| {
            format_err("dump users", &users_path, format!("bad user id '{id}'"))
        })?);
        labels.push(s.parse().map_err(|_| {
            format_err("dump users", &users_path, format!("bad label '{s}'"))
        })?);
    }

    if item_ids.len() != m || user_ids.len() != n {
        return Err(format_err(
            "dump",
            dir,
            format!(
                "id map sizes ({}, {}) disagree with header ({m}, {n})",
                item_ids.len(),
                user_ids.len()
            ),
        ));
    }

    let ratings_path = dir.join("ratings.bin");
    let records = std::fs::read(&ratings_path)
        .map_err(|e| CoreError::io(ratings_path.display().to_string(), e))?;
    if records.len() != n_records * RECORD_LEN {
        return Err(format_err(
            "dump ratings",
            &ratings_path,
            format!(
                "expected {} bytes for {n_records} records, found {}",
                n_records * RECORD_LEN,
                records.len()
            ),
        ));
    }

    let normalization = Normalization { scheme, lo, hi };
    let mut triplets = Vec::with_capacity(n_records);
    let mut split = DatasetSplit {
        n_items: m,
        n_users: n,
        train: vec![0; m * n],
        val: vec![0; m * n],
        test: vec![0; m * n],
        dropped_users: Vec::new(),
    };
    let mut user_has_split = vec![false; n];
    let mut user_has_obs = vec![false; n];
    for chunk in records.chunks_exact(RECORD_LEN) {
        let row = u32::from_le_bytes(chunk[0..4].try_into().unwrap());
        let col = u32::from_le_bytes(chunk[4..8].try_into().unwrap());
        let value = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
        let tag = chunk[16];
        triplets.push((row, col, value));
        let idx = (col as usize) * m + row as usize;
        user_has_obs[col as usize] = true;
        match tag {
            0 => split.train[idx] = 1,
            1 => split.val[idx] = 1,
            2 => split.test[idx] = 1,
            3 => {}
            other => {
                return Err(format_err(
                    "dump ratings",
                    &ratings_path,
                    format!("unknown split tag {other}"),
                ));
            }
        }
        if tag != 3 {
            user_has_split[col as usize] = true;
        }
    }
    for user in 0..n {
        if user_has_obs[user] && !user_has_split[user] {
            split.dropped_users.push(user);
        }
    }

    let matrix = InteractionMatrix::from_parts(item_ids, user_ids, &triplets, normalization)?;
    let fingerprint = canonical_fingerprint(&matrix, &labels, &attribute, &records);
    Ok(DatasetDump {
        matrix,
        split,
        labels,
        attribute,
        fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        assign_groups, build_matrix, split as make_split, Attribute, GroupThresholds,
        SplitRatios,
    };
    use crate::synth::{generate, SynthConfig};

    #[test]
    fn dump_roundtrip_preserves_matrix_and_split() {
        let ds = generate(&SynthConfig {
            n_users: 12,
            n_items: 18,
            ..Default::default()
        });
        let matrix = build_matrix(&ds, NormalizationScheme::MinMax).unwrap();
        let split = make_split(&matrix, SplitRatios::default(), 10, 7).unwrap();
        let groups = assign_groups(&ds, Attribute::Gender, GroupThresholds::default()).unwrap();
        let labels = groups.column_labels(&matrix).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let fp = save_dump(dir.path(), &matrix, &split, &labels, "gender").unwrap();
        let dump = load_dump(dir.path()).unwrap();

        assert_eq!(dump.fingerprint, fp);
        assert_eq!(dump.attribute, "gender");
        assert_eq!(dump.labels, labels);
        assert_eq!(dump.matrix.n_items, matrix.n_items);
        assert_eq!(dump.matrix.n_users, matrix.n_users);
        assert_eq!(dump.matrix.item_ids, matrix.item_ids);
        assert_eq!(dump.matrix.user_ids, matrix.user_ids);
        assert_eq!(dump.split, split);
        for user in 0..matrix.n_users {
            for item in 0..matrix.n_items {
                assert_eq!(dump.matrix.observed(item, user), matrix.observed(item, user));
                assert_eq!(dump.matrix.value(item, user), matrix.value(item, user));
            }
        }
        let (n1, n2) = (dump.matrix.normalization, matrix.normalization);
        assert_eq!(n1, n2);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let ds = generate(&SynthConfig {
            n_users: 10,
            n_items: 16,
            ..Default::default()
        });
        let matrix = build_matrix(&ds, NormalizationScheme::MinMax).unwrap();
        let split = make_split(&matrix, SplitRatios::default(), 10, 7).unwrap();
        let labels = vec![0u8; matrix.n_users];
        let dir = tempfile::tempdir().unwrap();
        let fp1 = save_dump(dir.path(), &matrix, &split, &labels, "gender").unwrap();
        // Same content, same fingerprint (idempotence).
        let fp2 = save_dump(dir.path(), &matrix, &split, &labels, "gender").unwrap();
        assert_eq!(fp1, fp2);
        // Different split seed changes the fingerprint.
        let split2 = make_split(&matrix, SplitRatios::default(), 10, 8).unwrap();
        let fp3 = save_dump(dir.path(), &matrix, &split2, &labels, "gender").unwrap();
        assert_ne!(fp1, fp3);
    }
}
