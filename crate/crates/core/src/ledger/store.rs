use std::collections::BTreeMap;

use super::Digest;

/// Byte blobs keyed by their SHA-256 digest.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContentStore {
    blobs: BTreeMap<Digest, Vec<u8>>,
}

impl ContentStore {
    /// Stores `bytes` and returns their digest; storing twice is a no-op.
    pub fn put(&mut self, bytes: &[u8]) -> Digest {
        let d = Digest::of(bytes);
        self.blobs.entry(d).or_insert_with(|| bytes.to_vec());
        d
    }

    pub fn get(&self, digest: &Digest) -> Option<&[u8]> {
        self.blobs.get(digest).map(Vec::as_slice)
    }

    pub fn contains(&self, digest: &Digest) -> bool {
        self.blobs.contains_key(digest)
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Digest, &[u8])> {
        self.blobs.iter().map(|(d, b)| (d, b.as_slice()))
    }
}
