//! Atomic file output and content digests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    write_with(path, |tmp| fs::write(tmp, bytes).map_err(|e| CliError::runtime(e.to_string())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Runs `write` against a temporary path in the destination directory and
/// renames the result onto `path` only if it succeeds.
pub fn write_with<F>(path: &Path, write: F) -> CliResult<()>
where
    F: FnOnce(&Path) -> CliResult<()>,
{
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = tempfile::Builder::new()
        .prefix(".partial-")
        .tempfile_in(dir)
        .map_err(|e| CliError::runtime(format!("cannot create a file in {}: {e}", dir.display())))?
        .into_temp_path();
    write(&tmp)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&tmp, fs::Permissions::from_mode(0o644))
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    tmp.persist(path).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Incremental digest over text fragments.
#[derive(Default)]
pub struct Digester(Sha256);

impl Digester {
    pub fn line(&mut self, text: &str) {
        self.0.update(text.as_bytes());
        self.0.update(b"\n");
    }

    pub fn finish(self) -> String {
        hex(&self.0.finalize())
    }
}

/// A written file and its digest, as listed in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct FileEntry {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(role: &str, dir: &Path, file: &str) -> CliResult<Self> {
        Ok(Self { role: role.into(), file: file.into(), sha256: file_sha256(&dir.join(file))? })
    }
}

/// Magic bytes opening a pointwise log-likelihood file.
pub const LOGLIK_MAGIC: &[u8; 8] = b"ASIRLL01";

/// Little-endian layout: magic, `n_draws` (u64), `n_cells` (u64), then the
/// row-major `n_draws × n_cells` matrix of f64.
pub fn encode_loglik(rows: &[&[f64]], n_cells: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + rows.iter().map(|r| r.len() * 8).sum::<usize>());
    out.extend_from_slice(LOGLIK_MAGIC);
    let n_draws: usize = rows.iter().map(|r| r.len() / n_cells.max(1)).sum();
    out.write_all(&(n_draws as u64).to_le_bytes()).expect("vec write");
    out.write_all(&(n_cells as u64).to_le_bytes()).expect("vec write");
    for row in rows {
        for v in *row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Inverse of [`encode_loglik`]: returns `(n_draws, n_cells, values)`.
pub fn decode_loglik(bytes: &[u8]) -> CliResult<(usize, usize, Vec<f64>)> {
    let bad = || CliError::data("log-likelihood file is malformed");
    if bytes.len() < 24 || &bytes[..8] != LOGLIK_MAGIC {
        return Err(bad());
    }
    let n_draws = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let n_cells = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let body = &bytes[24..];
    if body.len() != n_draws * n_cells * 8 {
        return Err(bad());
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((n_draws, n_cells, values))
}

/// `p` relative to `base` when both are absolute, else `p` unchanged.
pub fn relative_to(base: &Path, p: &Path) -> PathBuf {
    pathdiff::diff_paths(p, base).unwrap_or_else(|| p.to_path_buf())
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
