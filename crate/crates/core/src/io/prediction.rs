//! Dense prediction file: plain-text header, then m x n little-endian f64
//! values in column-major (items x users) order, denormalized.

use super::{atomic_write, f64s_to_le_bytes, format_err, le_bytes_to_f64s, Cursor};
use crate::data::{Normalization, NormalizationScheme};
use crate::error::CoreError;
use crate::eval::PredictionMatrix;
use crate::Result;
use std::collections::BTreeMap;
use std::path::Path;

const MAGIC: &str = "fdrec-predictions v1";

pub fn save_predictions(
    path: &Path,
    preds: &PredictionMatrix,
    extra_meta: &BTreeMap<String, String>,
) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    let norm = preds.normalization;
    let mut meta = extra_meta.clone();
    meta.insert("m".to_string(), preds.n_items.to_string());
    meta.insert("n".to_string(), preds.n_users.to_string());
    meta.insert("scheme".to_string(), norm.scheme.name().to_string());
    meta.insert("lo".to_string(), norm.lo.to_string());
    meta.insert("hi".to_string(), norm.hi.to_string());
    for (k, v) in &meta {
        out.extend_from_slice(format!("{k}={v}\n").as_bytes());
    }
    out.extend_from_slice(b"#values\n");
    out.extend_from_slice(&f64s_to_le_bytes(&preds.values));
    atomic_write(path, &out)
}

pub fn load_predictions(path: &Path) -> Result<(PredictionMatrix, BTreeMap<String, String>)> {
    let bytes =
        std::fs::read(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut cursor = Cursor::new(&bytes);
    let magic = cursor
        .line()
        .ok_or_else(|| format_err("predictions", path, "empty file"))?;
    if magic != MAGIC {
        return Err(format_err(
            "predictions",
            path,
            format!("bad magic line '{magic}'"),
        ));
    }
    let mut meta = BTreeMap::new();
    loop {
        let line = cursor
            .line()
            .ok_or_else(|| format_err("predictions", path, "truncated header"))?;
        if line == "#values" {
            break;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            format_err("predictions", path, format!("malformed header line '{line}'"))
        })?;
        meta.insert(k.to_string(), v.to_string());
    }
    let get = |key: &str| -> Result<&String> {
        meta.get(key)
            .ok_or_else(|| format_err("predictions", path, format!("missing key '{key}'")))
    };
    let m: usize = get("m")?
        .parse()
        .map_err(|_| format_err("predictions", path, "non-numeric m"))?;
    let n: usize = get("n")?
        .parse()
        .map_err(|_| format_err("predictions", path, "non-numeric n"))?;
    let scheme = NormalizationScheme::parse(get("scheme")?)?;
    let lo: f64 = get("lo")?
        .parse()
        .map_err(|_| format_err("predictions", path, "non-numeric lo"))?;
    let hi: f64 = get("hi")?
        .parse()
        .map_err(|_| format_err("predictions", path, "non-numeric hi"))?;
    let payload = cursor
        .take(m * n * 8)
        .ok_or_else(|| format_err("predictions", path, "truncated value payload"))?;
    let values = le_bytes_to_f64s(payload);
    Ok((
        PredictionMatrix {
            n_items: m,
            n_users: n,
            values,
            normalization: Normalization { scheme, lo, hi },
        },
        meta,
    ))
}
