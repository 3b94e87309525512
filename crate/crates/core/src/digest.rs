use sha2::{Digest as _, Sha256};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Incremental hasher for digests composed from several parts.
///
/// Each part is length-prefixed so that `("ab", "c")` and `("a", "bc")` differ.
#[derive(Default, Clone)]
pub struct DigestBuilder {
    inner: Sha256,
}

impl DigestBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn part(mut self, bytes: &[u8]) -> Self {
        self.inner.update((bytes.len() as u64).to_be_bytes());
        self.inner.update(bytes);
        self
    }

    pub fn str(self, s: &str) -> Self {
        self.part(s.as_bytes())
    }

    pub fn finish(self) -> String {
        hex::encode(self.inner.finalize())
    }
}
