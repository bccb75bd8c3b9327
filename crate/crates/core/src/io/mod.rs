//! On-disk artifact formats: the canonical dataset dump, model checkpoints,
//! and dense prediction files. All formats pair a plain-text header with
//! little-endian 64-bit binary payloads, and every writer is atomic
//! (write-temp-then-rename).

mod checkpoint;
mod dump;
mod model_pack;
mod prediction;

pub use checkpoint::Checkpoint;
pub use dump::{load_dump, save_dump, DatasetDump};
pub use model_pack::{DiffusionCheckpoint, MfCheckpoint, DIFFUSION_SCHEMA, MF_SCHEMA};
pub use prediction::{load_predictions, save_predictions};

use crate::error::CoreError;
use crate::Result;
use sha2::{Digest, Sha256};
use std::path::Path;

/// Hex-encoded SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write a file atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir.display().to_string(), e))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| "artifact".to_string())
    ));
    std::fs::write(&tmp, bytes).map_err(|e| CoreError::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(())
}

/// Two-column plain-text loss history (epoch index, loss).
pub fn save_loss_history(path: &Path, losses: &[f64]) -> Result<()> {
    let mut text = String::new();
    for (epoch, loss) in losses.iter().enumerate() {
        text.push_str(&format!("{epoch} {loss}\n"));
    }
    atomic_write(path, text.as_bytes())
}

/// One-value-per-line vector export for inspection.
pub fn save_vector_text(path: &Path, values: &[f64]) -> Result<()> {
    let mut text = String::new();
    for v in values {
        text.push_str(&format!("{v}\n"));
    }
    atomic_write(path, text.as_bytes())
}

pub(crate) fn format_err(format: &str, path: &Path, message: impl Into<String>) -> CoreError {
    CoreError::Format {
        format: format.to_string(),
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Byte cursor for parsing mixed text/binary files.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    /// Read up to the next newline, consuming it; returns the line text.
    pub fn line(&mut self) -> Option<&'a str> {
        if self.pos >= self.bytes.len() {
            return None;
        }
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n')?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).ok()
    }

    pub fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return None;
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Some(out)
    }

    pub fn expect_newline(&mut self) -> bool {
        if self.bytes.get(self.pos) == Some(&b'\n') {
            self.pos += 1;
            true
        } else {
            false
        }
    }
}

pub(crate) fn f64s_to_le_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn le_bytes_to_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}
