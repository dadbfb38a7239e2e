//! Session key generation.
//!
//! A key starts life as the binary expansion of the plaintext length, viewed
//! as a multiset of power-of-two blocks: cell `i` counts blocks of
//! `2^(i-1)` bytes. Mass is then moved from larger cells into smaller ones a
//! random number of times (each unit of cell `h` becomes `2^(h-l)` units of
//! cell `l`), the cells are written out as a flat exponent sequence, and the
//! sequence is shuffled. Every step preserves
//! `sum(a[i] * 2^(i-1)) == total_len`.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest as _, Sha512};

use crate::{Digest, Error, Exponent, Result, CAP};

/// Absolute upper bound on the number of blocks randomization may grow a key
/// to.
///
/// Without a bound a multi-gigabyte file can be repartitioned into billions of
/// one-byte blocks, which makes the key as large as the file.
pub const BLOCK_BUDGET: u64 = 1 << 16;

/// Block-count budget for a plaintext of `len` bytes: one block per eight
/// bytes on average, at most [`BLOCK_BUDGET`], never below `bitlen(len)`.
///
/// Unbounded repartitioning drains almost all mass into one-byte blocks,
/// which are never permuted and all share the first digest byte.
pub fn block_budget(len: u64) -> u64 {
    (len / 8).min(BLOCK_BUDGET).max(bit_length(len) as u64)
}

/// Counts of power-of-two blocks, indexed from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthArray {
    cells: Vec<u64>,
    total_len: u64,
}

impl LengthArray {
    /// Binary expansion of `len`: `a[i]` is bit `i` (1-based, from the LSB).
    pub fn decompose(len: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyInput);
        }
        let bits = bit_length(len) as usize;
        let cells = (0..bits).map(|b| (len >> b) & 1).collect();
        Ok(Self {
            cells,
            total_len: len,
        })
    }

    /// Builds an array from explicit counts (`counts[0]` is `a[1]`), deriving
    /// the total length from them.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let mass = mass_of(counts);
        let total_len = u64::try_from(mass)
            .map_err(|_| Error::InvalidArgument(format!("mass {mass} exceeds u64")))?;
        if total_len == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            cells: counts.to_vec(),
            total_len,
        })
    }

    pub fn total_len(&self) -> u64 {
        self.total_len
    }

    /// Count in cell `index` (1-based). Cells past the end read as zero.
    pub fn get(&self, index: usize) -> u64 {
        index
            .checked_sub(1)
            .and_then(|i| self.cells.get(i))
            .copied()
            .unwrap_or(0)
    }

    /// Highest cell index that is currently allocated.
    pub fn max_index(&self) -> usize {
        self.cells.len()
    }

    /// Highest index holding a nonzero count.
    pub fn highest_occupied(&self) -> Option<usize> {
        self.cells.iter().rposition(|&c| c > 0).map(|i| i + 1)
    }

    pub fn counts(&self) -> &[u64] {
        &self.cells
    }

    /// `sum(a[i] * 2^(i-1))`, computed without overflow.
    pub fn mass(&self) -> u128 {
        mass_of(&self.cells)
    }

    /// Number of blocks, `sum(a[i])`.
    pub fn block_count(&self) -> u128 {
        self.cells.iter().map(|&c| c as u128).sum()
    }

    /// Moves `x` units out of cell `high` into cell `low`, where each unit
    /// becomes `2^(high-low)` units.
    pub fn redistribute(&mut self, high: usize, low: usize, x: u64) -> Result<()> {
        if low < 1 || high <= low {
            return Err(Error::BadIndices { high, low });
        }
        let available = self.get(high);
        if x > available {
            return Err(Error::InsufficientMass {
                index: high,
                available,
                requested: x,
            });
        }
        let gained = 1u64
            .checked_shl((high - low) as u32)
            .filter(|_| high - low < 64)
            .and_then(|f| x.checked_mul(f))
            .and_then(|g| g.checked_add(self.get(low)))
            .ok_or(Error::Overflow { high, low })?;
        self.cells[high - 1] -= x;
        self.cells[low - 1] = gained;
        Ok(())
    }

    /// Drains every cell above `cap` into cell `cap`.
    pub fn normalize_cap(&mut self, cap: usize) -> Result<()> {
        if cap < 1 {
            return Err(Error::InvalidArgument("cap must be at least 1".into()));
        }
        if self.cells.len() < cap {
            self.cells.resize(cap, 0);
        }
        for high in (cap + 1)..=self.cells.len() {
            let x = self.get(high);
            if x > 0 {
                self.redistribute(high, cap, x)?;
            }
        }
        self.cells
            .truncate(cap.max(self.highest_occupied().unwrap_or(1)));
        Ok(())
    }

    /// Applies a random number of random redistributions.
    ///
    /// The round count is uniform in `[bitlen(L), 4 * bitlen(L)]`. Each round
    /// picks the source cell uniformly among occupied cells with index >= 2
    /// and a target below it: `high - 1` with probability 1/2, `high - 2` with
    /// 1/4 and so on, cell 1 taking the remaining mass. The amount is uniform
    /// in `[1, a[high]]`, narrowed only when the move would push the block
    /// count past [`block_budget`] (or the starting count, if larger).
    pub fn randomize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let bits = bit_length(self.total_len) as u64;
        let rounds = rng.gen_range(bits..=4 * bits);
        let budget = (block_budget(self.total_len) as u128).max(self.block_count());
        let mut blocks = self.block_count();
        let mut candidates = Vec::with_capacity(self.cells.len());

        for _ in 0..rounds {
            candidates.clear();
            candidates.extend((2..=self.cells.len()).filter(|&i| self.get(i) > 0));
            if candidates.is_empty() {
                continue;
            }
            let high = candidates[rng.gen_range(0..candidates.len())];
            let mut low = high - 1;
            while low > 1 && rng.gen_bool(0.5) {
                low -= 1;
            }
            let growth_per_unit = (1u128 << (high - low)) - 1;
            let budget_cap = (budget - blocks) / growth_per_unit;
            let x_max = (self.get(high) as u128).min(budget_cap) as u64;
            if x_max == 0 {
                continue;
            }
            let x = rng.gen_range(1..=x_max);
            self.redistribute(high, low, x)
                .expect("indices and amount are in range by construction");
            blocks += x as u128 * growth_per_unit;
        }
    }

    /// Writes index `i` out `a[i]` times, in ascending order.
    pub fn expand(&self) -> Result<Vec<Exponent>> {
        let n = self.block_count();
        if n > u32::MAX as u128 {
            return Err(Error::InvalidArgument(format!(
                "{n} blocks do not fit in a key file"
            )));
        }
        if self.max_index() > Exponent::MAX as usize {
            return Err(Error::BadExponent(self.max_index() as u32));
        }
        let mut seq = Vec::with_capacity(n as usize);
        for (i, &count) in self.cells.iter().enumerate() {
            seq.extend(std::iter::repeat_n((i + 1) as Exponent, count as usize));
        }
        Ok(seq)
    }
}

fn mass_of(counts: &[u64]) -> u128 {
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (c as u128) << i)
        .sum()
}

pub(crate) fn bit_length(x: u64) -> u32 {
    u64::BITS - x.leading_zeros()
}

/// Uniform in-place permutation (Fisher-Yates).
pub fn shuffle<R: Rng + ?Sized>(seq: &mut [Exponent], rng: &mut R) {
    seq.shuffle(rng);
}

const KEY_MAGIC: &[u8; 4] = b"PCTK";
const KEY_VERSION: u8 = 0x01;
const KEY_HEADER_LEN: usize = 4 + 1 + 8 + 4;

/// The complete secret: an ordered partition of the plaintext length into
/// blocks of `2^(e-1)` bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey {
    exponents: Vec<Exponent>,
    original_len: u64,
    digest: Digest,
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionKey")
            .field("original_len", &self.original_len)
            .field("blocks", &self.exponents.len())
            .finish_non_exhaustive()
    }
}

impl SessionKey {
    /// Validates the exponent sequence against `original_len` and computes
    /// the digest.
    pub fn new(exponents: Vec<Exponent>, original_len: u64) -> Result<Self> {
        if original_len == 0 || exponents.is_empty() {
            return Err(Error::EmptyInput);
        }
        if exponents.len() > u32::MAX as usize {
            return Err(Error::InvalidKey("more than u32::MAX blocks".into()));
        }
        if let Some(&e) = exponents.iter().find(|&&e| !(1..=CAP).contains(&e)) {
            return Err(Error::BadExponent(e as u32));
        }
        let mass = sequence_mass(&exponents);
        if mass != original_len as u128 {
            return Err(Error::InvalidKey(format!(
                "blocks cover {mass} bytes but key claims {original_len}"
            )));
        }
        let mut key = Self {
            exponents,
            original_len,
            digest: [0; 64],
        };
        key.digest = Sha512::digest(key.to_bytes()).into();
        Ok(key)
    }

    pub fn exponents(&self) -> &[Exponent] {
        &self.exponents
    }

    pub fn original_len(&self) -> u64 {
        self.original_len
    }

    pub fn digest(&self) -> &Digest {
        &self.digest
    }

    pub fn block_count(&self) -> usize {
        self.exponents.len()
    }

    /// Total bytes covered by the blocks.
    pub fn mass(&self) -> u128 {
        sequence_mass(&self.exponents)
    }

    /// Number of blocks per exponent; index 0 is exponent 1.
    pub fn partition_histogram(&self) -> [u64; CAP as usize] {
        let mut hist = [0u64; CAP as usize];
        for &e in &self.exponents {
            hist[e as usize - 1] += 1;
        }
        hist
    }

    /// Serializes to the `PCTK` key file layout:
    /// magic, version, original length (u64 LE), block count (u32 LE), then
    /// one byte per exponent.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(KEY_HEADER_LEN + self.exponents.len());
        out.extend_from_slice(KEY_MAGIC);
        out.push(KEY_VERSION);
        out.extend_from_slice(&self.original_len.to_le_bytes());
        out.extend_from_slice(&(self.exponents.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.exponents);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let need = |offset: usize, n: usize| -> Result<()> {
            if bytes.len() < offset + n {
                Err(Error::Truncated {
                    offset: bytes.len(),
                    needed: offset + n - bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(0, 4)?;
        if &bytes[..4] != KEY_MAGIC {
            return Err(Error::UnknownFormat(format!(
                "bad key magic {:02x?}",
                &bytes[..4]
            )));
        }
        need(4, 1)?;
        if bytes[4] != KEY_VERSION {
            return Err(Error::UnknownFormat(format!(
                "unsupported key version {}",
                bytes[4]
            )));
        }
        need(5, 8)?;
        let original_len = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
        need(13, 4)?;
        let n = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
        need(KEY_HEADER_LEN, n)?;
        if bytes.len() > KEY_HEADER_LEN + n {
            return Err(Error::InvalidKey(format!(
                "{} trailing byte(s) after offset {}",
                bytes.len() - KEY_HEADER_LEN - n,
                KEY_HEADER_LEN + n
            )));
        }
        Self::new(bytes[KEY_HEADER_LEN..].to_vec(), original_len)
    }
}

fn sequence_mass(exponents: &[Exponent]) -> u128 {
    exponents.iter().map(|&e| 1u128 << (e.max(1) - 1)).sum()
}

/// Generates a fresh key for a plaintext of `len` bytes.
pub fn generate_session_key<R: Rng + ?Sized>(len: u64, rng: &mut R) -> Result<SessionKey> {
    let mut arr = LengthArray::decompose(len)?;
    arr.normalize_cap(CAP as usize)?;
    arr.randomize(rng);
    let mut seq = arr.expand()?;
    shuffle(&mut seq, rng);
    SessionKey::new(seq, len)
}
