//! CKKS approximate homomorphic encryption, restricted to what weighted
//! aggregation needs: encode/decode, key generation, encryption, addition,
//! plaintext multiplication and rescaling.
//!
//! Ring elements are kept in RNS form over a chain of NTT-friendly primes.
//! Randomness comes only from explicit seeds (ChaCha20 streams), so every
//! operation is reproducible. Noise sampling favours reproducibility over
//! cryptographic hardening; this is a research simulator, not a vetted
//! cryptographic library.

pub mod arith;
mod cipher;
pub mod encoder;
pub mod ntt;
mod params;
pub mod poly;
pub mod serial;

pub use cipher::{Ciphertext, CkksContext, KeyPair, Plaintext, PublicKey, SecretKey, SCALE_TOLERANCE};
pub use params::CkksParams;
pub use poly::PolyRns;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CkksError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("capacity exceeded: {requested} values for {slots} slots")]
    Capacity { requested: usize, slots: usize },
    #[error("value out of encodable range: {0}")]
    Range(String),
    #[error("operands not aligned: {0}")]
    Alignment(String),
    #[error("no modulus left to rescale by")]
    DepthExhausted,
    #[error("malformed serialization: {0}")]
    Format(String),
}
