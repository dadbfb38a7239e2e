//! Permutated Cipher Technique (PCT).
//!
//! A session-keyed, bit-level block cipher. The key is a shuffled partition of
//! the plaintext length into power-of-two byte blocks; each block has its odd
//! bits inverted, its even bits shuffled by a multiplicative stride, and is
//! then XORed with the SHA-512 digest of the serialized key.
//!
//! The crate is split into:
//!
//! * [`keygen`]: length decomposition, randomized repartitioning and the
//!   `PCTK` key file format.
//! * [`cipher`]: per-block transforms and the per-block-size constants.
//! * [`codec`]: whole-stream encryption and the `PCTC` container format.
//! * [`metrics`]: avalanche, strict avalanche, bit independence, chi-square,
//!   byte histograms and timing over a pluggable [`metrics::CipherAdapter`].
//! * [`arith`]: modular arithmetic helpers, generic over unsigned integers.

pub mod arith;
pub mod cipher;
pub mod codec;
mod error;
pub mod keygen;
pub mod metrics;
mod rng;

pub use cipher::{BitBlock, PermutationSpec};
pub use codec::CipherContainer;
pub use error::{Error, Result};
pub use keygen::{generate_session_key, LengthArray, SessionKey};
pub use rng::RandomSource;

/// Block-size exponent: `n` denotes a block of `2^(n-1)` bytes.
pub type Exponent = u8;

/// SHA-512 digest of a serialized session key.
pub type Digest = [u8; 64];

/// Largest permitted exponent (blocks of at most 1 MiB).
pub const CAP: Exponent = 21;
