//! Child seeds derived from one master seed by hashing a label path, so adding a
//! new consumer never shifts the streams of existing ones.

use sha2::{Digest, Sha256};

/// First eight bytes (little-endian) of `SHA-256(master || label)`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest holds 32 bytes"))
}

/// Seed for the `index`-th member of a labelled family.
pub fn derive_indexed(master: u64, label: &str, index: usize) -> u64 {
    derive_seed(master, &format!("{label}/{index}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_separate_streams() {
        assert_eq!(derive_seed(1, "scene"), derive_seed(1, "scene"));
        assert_ne!(derive_seed(1, "scene"), derive_seed(2, "scene"));
        assert_ne!(derive_seed(1, "scene"), derive_seed(1, "agent"));
        assert_ne!(derive_indexed(1, "agent", 0), derive_indexed(1, "agent", 1));
        assert_eq!(derive_indexed(5, "agent", 3), derive_seed(5, "agent/3"));
    }
}
