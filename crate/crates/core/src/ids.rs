use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Stable identifier derived from `(run_id, stage, ordinal)`.
///
/// Reruns of the same pipeline produce the same identifiers, which keeps
/// reports byte-identical across executions.
pub fn content_id(run_id: &str, stage: &str, ordinal: usize) -> String {
    let mut hasher = Sha256::new();
    hasher.update(run_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(stage.as_bytes());
    hasher.update([0u8]);
    hasher.update(ordinal.to_le_bytes());
    let full = hex::encode(hasher.finalize());
    full[..16].to_string()
}
