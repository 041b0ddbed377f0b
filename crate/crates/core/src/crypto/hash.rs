//! Domain-separated hashing over length-prefixed canonical encodings.

use sha2::{Digest, Sha256};

use super::group::{GroupParams, Scalar};

/// 32-byte SHA-256 digest.
pub type Digest32 = [u8; 32];

/// SHA-256 with an unambiguous framing: the domain tag and every input are
/// written as `len (u32 BE) ‖ bytes`.
#[derive(Clone)]
pub struct DomainHasher {
    inner: Sha256,
}

impl DomainHasher {
    pub fn new(domain_tag: &[u8]) -> Self {
        let mut hasher = DomainHasher { inner: Sha256::new() };
        hasher.update(domain_tag);
        hasher
    }

    pub fn update(&mut self, data: &[u8]) {
        self.inner.update((data.len() as u32).to_be_bytes());
        self.inner.update(data);
    }

    pub fn finalize(self) -> Digest32 {
        self.inner.finalize().into()
    }
}

/// First 16 bytes of the digest as a big-endian integer.
pub(crate) fn hash_to_scalar_wide(hasher: DomainHasher) -> u128 {
    let digest = hasher.finalize();
    let mut buf = [0u8; 16];
    buf.copy_from_slice(&digest[..16]);
    u128::from_be_bytes(buf)
}

/// Fiat-Shamir challenge derivation. The 128-bit intermediate keeps the
/// reduction bias below `2^-64` for every supported `q`. Panics on an empty
/// domain tag.
pub fn hash_to_scalar(params: &GroupParams, domain_tag: &[u8], inputs: &[&[u8]]) -> Scalar {
    assert!(!domain_tag.is_empty(), "hash_to_scalar needs a domain tag");
    let mut hasher = DomainHasher::new(domain_tag);
    hasher.update(&params.canonical());
    for input in inputs {
        hasher.update(input);
    }
    params.scalar_from_u128(hash_to_scalar_wide(hasher))
}

/// Plain SHA-256 of a tag and a list of inputs, framed like [`DomainHasher`].
pub fn tagged_digest(domain_tag: &[u8], inputs: &[&[u8]]) -> Digest32 {
    let mut hasher = DomainHasher::new(domain_tag);
    for input in inputs {
        hasher.update(input);
    }
    hasher.finalize()
}
