//! Stable content fingerprints.

use sha2::{Digest, Sha256};

/// Incremental fingerprint builder over a SHA-256 stream.
#[derive(Clone, Default)]
pub struct Fingerprinter(Sha256);

impl Fingerprinter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, data: &[u8]) -> &mut Self {
        self.0.update((data.len() as u64).to_le_bytes());
        self.0.update(data);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn f64s(&mut self, values: &[f64]) -> &mut Self {
        self.0.update((values.len() as u64).to_le_bytes());
        for v in values {
            self.0.update(v.to_bits().to_le_bytes());
        }
        self
    }

    /// First 16 hex digits of the digest.
    pub fn finish(&self) -> String {
        let out = self.0.clone().finalize();
        out[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn finish_u64(&self) -> u64 {
        let out = self.0.clone().finalize();
        u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// Derives an independent child seed from a parent seed and a label.
pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    Fingerprinter::new()
        .u64(parent)
        .bytes(label.as_bytes())
        .u64(index)
        .finish_u64()
}
