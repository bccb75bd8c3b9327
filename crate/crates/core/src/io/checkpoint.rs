//! Versioned checkpoint container: a plain-text `key=value` header followed
//! by named little-endian f64 parameter blocks.

use super::{atomic_write, f64s_to_le_bytes, format_err, le_bytes_to_f64s, Cursor};
use crate::Result;
use std::collections::BTreeMap;
use std::path::Path;

const MAGIC: &str = "fdrec-checkpoint v1";

#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub blocks: BTreeMap<String, Vec<f64>>,
}

impl Checkpoint {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta_str(&self, key: &str, path: &Path) -> Result<&str> {
        self.meta
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| format_err("checkpoint", path, format!("missing header key '{key}'")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        let raw = self.meta_str(key, path)?;
        raw.parse().map_err(|_| {
            format_err(
                "checkpoint",
                path,
                format!("header key '{key}' has unparsable value '{raw}'"),
            )
        })
    }

    pub fn block(&self, name: &str, path: &Path) -> Result<&Vec<f64>> {
        self.blocks
            .get(name)
            .ok_or_else(|| format_err("checkpoint", path, format!("missing block '{name}'")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(MAGIC.as_bytes());
        out.push(b'\n');
        for (k, v) in &self.meta {
            out.extend_from_slice(format!("{k}={v}\n").as_bytes());
        }
        out.extend_from_slice(format!("#blocks {}\n", self.blocks.len()).as_bytes());
        for (name, values) in &self.blocks {
            out.extend_from_slice(format!("{name} {}\n", values.len()).as_bytes());
            out.extend_from_slice(&f64s_to_le_bytes(values));
            out.push(b'\n');
        }
        atomic_write(path, &out)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)
            .map_err(|e| crate::CoreError::io(path.display().to_string(), e))?;
        let mut cursor = Cursor::new(&bytes);
        let magic = cursor
            .line()
            .ok_or_else(|| format_err("checkpoint", path, "empty file"))?;
        if magic != MAGIC {
            return Err(format_err(
                "checkpoint",
                path,
                format!("bad magic line '{magic}'"),
            ));
        }
        let mut meta = BTreeMap::new();
        let n_blocks: usize;
        loop {
            let line = cursor
                .line()
                .ok_or_else(|| format_err("checkpoint", path, "truncated header"))?;
            if let Some(rest) = line.strip_prefix("#blocks ") {
                n_blocks = rest.parse().map_err(|_| {
                    format_err("checkpoint", path, format!("bad block count '{rest}'"))
                })?;
                break;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                format_err("checkpoint", path, format!("malformed header line '{line}'"))
            })?;
            meta.insert(k.to_string(), v.to_string());
        }
        let mut blocks = BTreeMap::new();
        for _ in 0..n_blocks {
            let line = cursor
                .line()
                .ok_or_else(|| format_err("checkpoint", path, "truncated block header"))?;
            let (name, len_str) = line.rsplit_once(' ').ok_or_else(|| {
                format_err("checkpoint", path, format!("malformed block line '{line}'"))
            })?;
            let len: usize = len_str.parse().map_err(|_| {
                format_err("checkpoint", path, format!("bad block length '{len_str}'"))
            })?;
            let payload = cursor
                .take(len * 8)
                .ok_or_else(|| format_err("checkpoint", path, "truncated block payload"))?;
            if !cursor.expect_newline() {
                return Err(format_err("checkpoint", path, "missing block terminator"));
            }
            blocks.insert(name.to_string(), le_bytes_to_f64s(payload));
        }
        Ok(Checkpoint { meta, blocks })
    }
}
