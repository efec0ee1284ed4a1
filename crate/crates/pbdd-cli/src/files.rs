//! Output-path resolution and instance hashing.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Environment variable naming the directory relative output paths land in.
pub const OUT_DIR_VAR: &str = "PBDD_OUT_DIR";

/// Absolute paths pass through; relative ones are joined onto `PBDD_OUT_DIR`
/// when it is set.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) => PathBuf::from(dir).join(path),
        None => path.to_path_buf(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
