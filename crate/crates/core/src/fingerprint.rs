//! Stable content hashes used to chain artifacts across stages.

use sha2::{Digest, Sha256};

/// Incremental SHA-256 over length-prefixed fields, rendered as the first
/// 16 bytes in hex.
#[derive(Default)]
pub struct Fingerprinter {
    hasher: Sha256,
}

impl Fingerprinter {
    pub fn new(domain: &str) -> Self {
        let mut fp = Fingerprinter::default();
        fp.str(domain);
        fp
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.hasher.update((b.len() as u64).to_le_bytes());
        self.hasher.update(b);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.hasher.update(v.to_le_bytes());
        self
    }

    pub fn finish(self) -> String {
        let digest = self.hasher.finalize();
        hex::encode(&digest[..16])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_prefix_separates_fields() {
        let mut a = Fingerprinter::new("t");
        a.str("ab").str("c");
        let mut b = Fingerprinter::new("t");
        b.str("a").str("bc");
        assert_ne!(a.finish(), b.finish());
    }

    #[test]
    fn stable_value() {
        let mut a = Fingerprinter::new("t");
        a.u64(7);
        let mut b = Fingerprinter::new("t");
        b.u64(7);
        let s = a.finish();
        assert_eq!(s.len(), 32);
        assert_eq!(s, b.finish());
    }
}
