use sha2::{Digest as _, Sha512};

use crate::codec::{self, CipherContainer, CONTAINER_HEADER_LEN};
use crate::{generate_session_key, Error, RandomSource, Result, SessionKey};

/// Serialized key material; its meaning is private to the adapter.
pub type KeyHandle = Vec<u8>;

/// A cipher the analysis harness can drive.
///
/// `encrypt` must be deterministic for a fixed `(plaintext, key)` and may
/// return more bytes than it was given.
pub trait CipherAdapter {
    fn name(&self) -> &str;

    fn keygen(&self, plaintext_len: usize, rng: &mut RandomSource) -> Result<KeyHandle>;

    fn encrypt(&self, plaintext: &[u8], key: &KeyHandle) -> Result<Vec<u8>>;

    fn decrypt(&self, ciphertext: &[u8], key: &KeyHandle) -> Result<Vec<u8>>;

    /// Leading bytes of `encrypt`'s output that are framing rather than
    /// ciphertext. The estimators skip them.
    fn framing_len(&self) -> usize {
        0
    }
}

/// The permutation cipher, producing serialized `PCTC` containers.
#[derive(Debug, Default, Clone, Copy)]
pub struct PctAdapter;

impl CipherAdapter for PctAdapter {
    fn name(&self) -> &str {
        "pct"
    }

    fn keygen(&self, plaintext_len: usize, rng: &mut RandomSource) -> Result<KeyHandle> {
        Ok(generate_session_key(plaintext_len as u64, rng)?.to_bytes())
    }

    fn encrypt(&self, plaintext: &[u8], key: &KeyHandle) -> Result<Vec<u8>> {
        let key = SessionKey::from_bytes(key)?;
        Ok(codec::encrypt_bytes(plaintext, &key, false)?.to_bytes())
    }

    fn decrypt(&self, ciphertext: &[u8], key: &KeyHandle) -> Result<Vec<u8>> {
        let key = SessionKey::from_bytes(key)?;
        let container = CipherContainer::from_bytes(ciphertext)?;
        codec::decrypt_container(&container, &key)
    }

    fn framing_len(&self) -> usize {
        CONTAINER_HEADER_LEN
    }
}

/// Random-oracle reference: the output is a SHA-512 counter-mode stream
/// keyed by `(key, SHA-512(plaintext))`, so any input change yields a fresh
/// uniformly random ciphertext. Not invertible.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdealAdapter;

impl CipherAdapter for IdealAdapter {
    fn name(&self) -> &str {
        "ideal"
    }

    fn keygen(&self, _plaintext_len: usize, rng: &mut RandomSource) -> Result<KeyHandle> {
        use rand::RngCore;
        let mut key = vec![0u8; 32];
        rng.fill_bytes(&mut key);
        Ok(key)
    }

    fn encrypt(&self, plaintext: &[u8], key: &KeyHandle) -> Result<Vec<u8>> {
        let input_digest = Sha512::digest(plaintext);
        let mut out = Vec::with_capacity(plaintext.len() + 64);
        let mut counter = 0u64;
        while out.len() < plaintext.len() {
            let mut h = Sha512::new();
            h.update(key);
            h.update(input_digest);
            h.update(counter.to_le_bytes());
            out.extend_from_slice(&h.finalize());
            counter += 1;
        }
        out.truncate(plaintext.len());
        Ok(out)
    }

    fn decrypt(&self, _ciphertext: &[u8], _key: &KeyHandle) -> Result<Vec<u8>> {
        Err(Error::Unsupported {
            adapter: self.name().into(),
        })
    }
}

pub const ADAPTER_NAMES: &[&str] = &["pct", "ideal"];

pub fn adapter_by_name(name: &str) -> Option<Box<dyn CipherAdapter>> {
    match name {
        "pct" => Some(Box::new(PctAdapter)),
        "ideal" => Some(Box::new(IdealAdapter)),
        _ => None,
    }
}
