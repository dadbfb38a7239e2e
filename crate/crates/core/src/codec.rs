//! Whole-input encryption following a key's block partition, and the `PCTC`
//! container format.
//!
//! Container layout: magic `PCTC` (4 bytes), version `0x01` (1 byte), the
//! plaintext length as u64 little-endian (8 bytes), then the ciphertext. The
//! ciphertext is exactly as long as the key's blocks; it is longer than the
//! plaintext only when a key for a longer input is reused with padding.

use std::io::{self, Read, Write};

use crate::cipher::{decrypt_block, encrypt_block, PermutationSpec};
use crate::{Error, Result, SessionKey};

pub const CONTAINER_MAGIC: &[u8; 4] = b"PCTC";
pub const CONTAINER_VERSION: u8 = 0x01;
pub const CONTAINER_HEADER_LEN: usize = 13;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherContainer {
    pub original_len: u64,
    pub payload: Vec<u8>,
}

impl CipherContainer {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CONTAINER_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&header(self.original_len));
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let original_len = parse_header(bytes)?;
        let payload = bytes[CONTAINER_HEADER_LEN..].to_vec();
        if original_len > payload.len() as u64 {
            return Err(Error::CorruptContainer(format!(
                "header claims {original_len} bytes but payload has {}",
                payload.len()
            )));
        }
        Ok(Self {
            original_len,
            payload,
        })
    }
}

fn header(original_len: u64) -> [u8; CONTAINER_HEADER_LEN] {
    let mut h = [0u8; CONTAINER_HEADER_LEN];
    h[..4].copy_from_slice(CONTAINER_MAGIC);
    h[4] = CONTAINER_VERSION;
    h[5..].copy_from_slice(&original_len.to_le_bytes());
    h
}

/// Validates magic and version and returns the recorded plaintext length.
pub fn parse_header(bytes: &[u8]) -> Result<u64> {
    if bytes.len() >= 4 && &bytes[..4] != CONTAINER_MAGIC {
        return Err(Error::UnknownFormat(format!(
            "bad container magic {:02x?}",
            &bytes[..4]
        )));
    }
    if bytes.len() < CONTAINER_HEADER_LEN {
        return Err(Error::Truncated {
            offset: bytes.len(),
            needed: CONTAINER_HEADER_LEN - bytes.len(),
        });
    }
    if bytes[4] != CONTAINER_VERSION {
        return Err(Error::UnknownFormat(format!(
            "unsupported container version {}",
            bytes[4]
        )));
    }
    Ok(u64::from_le_bytes(bytes[5..13].try_into().unwrap()))
}

fn check_plaintext_len(input_len: u64, key: &SessionKey, pad: bool) -> Result<()> {
    let fits = if pad {
        input_len as u128 <= key.mass()
    } else {
        input_len == key.original_len()
    };
    if !fits || input_len == 0 {
        return Err(Error::KeyFileMismatch {
            key_len: key.original_len(),
            input_len,
        });
    }
    Ok(())
}

/// Encrypts an in-memory plaintext.
///
/// Without `pad` the plaintext must be exactly as long as the key; with it,
/// shorter plaintexts are zero-filled up to the key's length.
pub fn encrypt_bytes(plaintext: &[u8], key: &SessionKey, pad: bool) -> Result<CipherContainer> {
    check_plaintext_len(plaintext.len() as u64, key, pad)?;
    let mut payload = plaintext.to_vec();
    payload.resize(key.mass() as usize, 0);
    for_each_block(&mut payload, key, encrypt_block)?;
    Ok(CipherContainer {
        original_len: plaintext.len() as u64,
        payload,
    })
}

pub fn decrypt_container(container: &CipherContainer, key: &SessionKey) -> Result<Vec<u8>> {
    check_payload(container, key)?;
    let mut plain = container.payload.clone();
    for_each_block(&mut plain, key, decrypt_block)?;
    plain.truncate(container.original_len as usize);
    Ok(plain)
}

fn check_payload(container: &CipherContainer, key: &SessionKey) -> Result<()> {
    if container.payload.len() as u128 != key.mass() {
        return Err(Error::CorruptContainer(format!(
            "payload is {} bytes but key covers {}",
            container.payload.len(),
            key.mass()
        )));
    }
    if container.original_len > container.payload.len() as u64 {
        return Err(Error::CorruptContainer(format!(
            "header claims {} bytes but payload has {}",
            container.original_len,
            container.payload.len()
        )));
    }
    Ok(())
}

type BlockFn = fn(&mut [u8], &PermutationSpec, &crate::Digest) -> Result<()>;

fn for_each_block(buf: &mut [u8], key: &SessionKey, f: BlockFn) -> Result<()> {
    let mut offset = 0;
    for (idx, &e) in key.exponents().iter().enumerate() {
        let spec = PermutationSpec::derive(e, idx as u64)?;
        let len = spec.block_len();
        f(&mut buf[offset..offset + len], &spec, key.digest())?;
        offset += len;
    }
    debug_assert_eq!(offset, buf.len());
    Ok(())
}

/// Streams `input_len` bytes from `reader` into a container on `writer`,
/// holding at most one block in memory.
///
/// Returns the number of bytes written.
pub fn encrypt_stream<R: Read, W: Write>(
    mut reader: R,
    input_len: u64,
    key: &SessionKey,
    pad: bool,
    mut writer: W,
) -> Result<u64> {
    check_plaintext_len(input_len, key, pad)?;
    writer.write_all(&header(input_len))?;
    let mut written = CONTAINER_HEADER_LEN as u64;
    let mut remaining = input_len;
    let mut buf = Vec::new();
    for (idx, &e) in key.exponents().iter().enumerate() {
        let spec = PermutationSpec::derive(e, idx as u64)?;
        let len = spec.block_len();
        buf.clear();
        buf.resize(len, 0);
        let take = remaining.min(len as u64) as usize;
        reader
            .read_exact(&mut buf[..take])
            .map_err(|err| match err.kind() {
                io::ErrorKind::UnexpectedEof => Error::KeyFileMismatch {
                    key_len: key.original_len(),
                    input_len: input_len - remaining,
                },
                _ => Error::Io(err),
            })?;
        remaining -= take as u64;
        encrypt_block(&mut buf, &spec, key.digest())?;
        writer.write_all(&buf)?;
        written += len as u64;
    }
    if has_more(&mut reader)? {
        return Err(Error::KeyFileMismatch {
            key_len: key.original_len(),
            input_len: input_len + 1,
        });
    }
    writer.flush()?;
    Ok(written)
}

/// Streams a container from `reader`, writing the recovered plaintext to
/// `writer`. Returns the plaintext length.
pub fn decrypt_stream<R: Read, W: Write>(
    mut reader: R,
    key: &SessionKey,
    mut writer: W,
) -> Result<u64> {
    let mut head = [0u8; CONTAINER_HEADER_LEN];
    let got = read_up_to(&mut reader, &mut head)?;
    let original_len = parse_header(&head[..got])?;
    if original_len as u128 > key.mass() {
        return Err(Error::CorruptContainer(format!(
            "header claims {original_len} bytes but key covers {}",
            key.mass()
        )));
    }
    let mut remaining = original_len;
    let mut buf = Vec::new();
    for (idx, &e) in key.exponents().iter().enumerate() {
        let spec = PermutationSpec::derive(e, idx as u64)?;
        buf.clear();
        buf.resize(spec.block_len(), 0);
        reader
            .read_exact(&mut buf)
            .map_err(|err| match err.kind() {
                io::ErrorKind::UnexpectedEof => {
                    Error::CorruptContainer("payload is shorter than the key's blocks".into())
                }
                _ => Error::Io(err),
            })?;
        decrypt_block(&mut buf, &spec, key.digest())?;
        let keep = remaining.min(buf.len() as u64) as usize;
        writer.write_all(&buf[..keep])?;
        remaining -= keep as u64;
    }
    if has_more(&mut reader)? {
        return Err(Error::CorruptContainer(
            "payload is longer than the key's blocks".into(),
        ));
    }
    writer.flush()?;
    Ok(original_len)
}

fn read_up_to<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

fn has_more<R: Read>(reader: &mut R) -> Result<bool> {
    let mut probe = [0u8; 1];
    Ok(read_up_to(reader, &mut probe)? > 0)
}
