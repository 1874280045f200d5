//! SHA-256 content digests used for pool identity, seeding and the run ledger.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};

/// Incremental digest with length-prefixed fields so that `("ab", "c")` and
/// `("a", "bc")` never collide.
#[derive(Clone, Default)]
pub struct ContentHasher {
    inner: Sha256,
}

impl ContentHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(&mut self, bytes: impl AsRef<[u8]>) -> &mut Self {
        let bytes = bytes.as_ref();
        self.inner.update((bytes.len() as u64).to_le_bytes());
        self.inner.update(bytes);
        self
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, value: &T) -> &mut Self {
        let bytes = serde_json::to_vec(value).expect("in-memory values serialize");
        self.field(bytes)
    }

    pub fn finish(&self) -> String {
        hex::encode(self.inner.clone().finalize())
    }

    /// First eight bytes of the digest, for seeding RNGs.
    pub fn finish_u64(&self) -> u64 {
        let out = self.inner.clone().finalize();
        u64::from_le_bytes(out[..8].try_into().expect("sha256 is 32 bytes"))
    }
}

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(bytes))
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    ContentHasher::new()
        .field(seed.to_le_bytes())
        .field(label)
        .finish_u64()
}
