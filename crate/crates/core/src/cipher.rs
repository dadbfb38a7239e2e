//! Per-block transforms.
//!
//! Bits inside a block are numbered `1..=B` MSB-first in buffer order, so
//! position `p` lives in byte `(p-1)/8` under mask `0x80 >> ((p-1) % 8)`.
//! Odd positions are the `0xAA` bits of every byte, even positions the `0x55`
//! bits. The even positions form `E = B/2` slots; slot `k` is position
//! `2(k+1)`.
//!
//! Encryption inverts the odd bits, moves the even-slot value at `k` to
//! `k * nbsk mod E` (repeated `e_iter` times) and XORs the block with the key
//! digest. Decryption undoes the XOR, applies the same forward stride
//! `d_iter` more times to close the permutation cycle, and inverts the odd
//! bits again.

use crate::arith::{gcd, order_mod_pow2, pow_mod};
use crate::{Digest, Error, Exponent, Result, CAP};

const ODD_MASK: u8 = 0xAA;

/// Constants governing one block size, plus the iteration split for one
/// block position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationSpec {
    /// Block exponent `n`; the block holds `2^(n-1)` bytes.
    pub exponent: Exponent,
    /// Bits per block, `2^(n+2)`.
    pub bits: u64,
    /// Even-slot count, `bits / 2`.
    pub even_slots: u64,
    /// Stride ("number of bits to skip"), `2n + 3`.
    pub nbsk: u64,
    /// Order of `nbsk` modulo `even_slots`.
    pub max_iter: u64,
    pub e_iter: u64,
    pub d_iter: u64,
}

impl PermutationSpec {
    /// Derives the constants for exponent `n` and the iteration split for the
    /// block at `block_index` (0-based, in key order).
    pub fn derive(n: Exponent, block_index: u64) -> Result<Self> {
        if !(1..=CAP).contains(&n) {
            return Err(Error::BadExponent(n as u32));
        }
        let bits = 1u64 << (n as u32 + 2);
        let even_slots = bits / 2;
        let nbsk = 2 * n as u64 + 3;
        debug_assert_eq!(gcd(nbsk, even_slots), 1);
        let max_iter = order_mod_pow2(nbsk, even_slots).expect("odd stride, power-of-two modulus");
        let (e_iter, d_iter) = if max_iter == 1 {
            (0, 0)
        } else {
            let e = 1 + (block_index.wrapping_add(n as u64)) % (max_iter - 1);
            (e, max_iter - e)
        };
        Ok(Self {
            exponent: n,
            bits,
            even_slots,
            nbsk,
            max_iter,
            e_iter,
            d_iter,
        })
    }

    pub fn block_len(&self) -> usize {
        1usize << (self.exponent - 1)
    }
}

/// A block buffer with 1-based, MSB-first bit addressing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitBlock {
    bytes: Vec<u8>,
}

impl BitBlock {
    pub fn new(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn zeroed(len: usize) -> Self {
        Self {
            bytes: vec![0; len],
        }
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8
    }

    /// Bit at position `p`, `1 <= p <= bit_len()`.
    pub fn bit(&self, p: usize) -> bool {
        let (byte, mask) = locate(p);
        self.bytes[byte] & mask != 0
    }

    pub fn set_bit(&mut self, p: usize, value: bool) {
        let (byte, mask) = locate(p);
        if value {
            self.bytes[byte] |= mask;
        } else {
            self.bytes[byte] &= !mask;
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn as_mut_bytes(&mut self) -> &mut [u8] {
        &mut self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn encrypt(mut self, spec: &PermutationSpec, digest: &Digest) -> Result<Self> {
        encrypt_block(&mut self.bytes, spec, digest)?;
        Ok(self)
    }

    pub fn decrypt(mut self, spec: &PermutationSpec, digest: &Digest) -> Result<Self> {
        decrypt_block(&mut self.bytes, spec, digest)?;
        Ok(self)
    }
}

fn locate(p: usize) -> (usize, u8) {
    assert!(p >= 1, "bit positions start at 1");
    ((p - 1) / 8, 0x80 >> ((p - 1) % 8))
}

pub fn flip_odd_bits(block: &mut [u8]) {
    for b in block {
        *b ^= ODD_MASK;
    }
}

/// XORs byte `j` with `digest[j % 64]`.
pub fn xor_digest(block: &mut [u8], digest: &Digest) {
    for chunk in block.chunks_mut(digest.len()) {
        for (b, d) in chunk.iter_mut().zip(digest) {
            *b ^= d;
        }
    }
}

/// Applies the even-slot stride map `iterations` times.
///
/// `k` iterations of `slot -> slot * nbsk` are a single multiplication by
/// `nbsk^k`, so the work is one pass regardless of the count. The pass gathers:
/// destination slot `j` reads source slot `j * nbsk^(-k)`.
pub fn stride_permute(block: &mut [u8], spec: &PermutationSpec, iterations: u64) -> Result<()> {
    check_len(block, spec)?;
    let steps = iterations % spec.max_iter;
    if steps == 0 {
        return Ok(());
    }
    let mask = spec.even_slots - 1;
    let inverse = pow_mod(spec.nbsk, spec.max_iter - steps, spec.even_slots);
    let src = block.to_vec();
    let mut k: u64 = 0;
    for out in block.iter_mut() {
        let mut byte = *out & ODD_MASK;
        for r in 0..4 {
            let slot = k as usize;
            let bit = (src[slot >> 2] >> (6 - 2 * (slot & 3))) & 1;
            byte |= bit << (6 - 2 * r);
            k = (k + inverse) & mask;
        }
        *out = byte;
    }
    Ok(())
}

fn check_len(block: &[u8], spec: &PermutationSpec) -> Result<()> {
    if block.len() != spec.block_len() {
        return Err(Error::BadBlockLength {
            expected: spec.block_len(),
            actual: block.len(),
        });
    }
    Ok(())
}

pub fn encrypt_block(block: &mut [u8], spec: &PermutationSpec, digest: &Digest) -> Result<()> {
    check_len(block, spec)?;
    flip_odd_bits(block);
    stride_permute(block, spec, spec.e_iter)?;
    xor_digest(block, digest);
    Ok(())
}

pub fn decrypt_block(block: &mut [u8], spec: &PermutationSpec, digest: &Digest) -> Result<()> {
    check_len(block, spec)?;
    xor_digest(block, digest);
    stride_permute(block, spec, spec.d_iter)?;
    flip_odd_bits(block);
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, RngCore};

    use super::*;
    use crate::RandomSource;

    /// Even-slot vector, read position by position.
    fn even_slots(b: &BitBlock) -> Vec<bool> {
        (1..=b.bit_len() / 2).map(|k| b.bit(2 * k)).collect()
    }

    /// One literal application of `v'[(k * s) mod E] = v[k]`.
    fn step_oracle(v: &[bool], s: u64) -> Vec<bool> {
        let e = v.len() as u64;
        let mut out = vec![false; v.len()];
        for (k, &bit) in v.iter().enumerate() {
            out[((k as u64 * s) % e) as usize] = bit;
        }
        out
    }

    fn permute_oracle(block: &[u8], spec: &PermutationSpec, iterations: u64) -> Vec<u8> {
        let mut b = BitBlock::new(block.to_vec());
        let mut v = even_slots(&b);
        for _ in 0..iterations {
            v = step_oracle(&v, spec.nbsk);
        }
        for (k, bit) in v.into_iter().enumerate() {
            b.set_bit(2 * (k + 1), bit);
        }
        b.into_bytes()
    }

    fn brute_order(s: u64, e: u64) -> u64 {
        let mut x = s % e;
        let mut m = 1;
        while x != 1 % e {
            x = x * s % e;
            m += 1;
        }
        m
    }

    fn random_block(n: Exponent, rng: &mut RandomSource) -> Vec<u8> {
        let mut v = vec![0u8; 1 << (n - 1)];
        rng.fill_bytes(&mut v);
        v
    }

    #[test]
    fn derive_one_byte_block() {
        let s = PermutationSpec::derive(1, 0).unwrap();
        assert_eq!((s.bits, s.even_slots, s.nbsk), (8, 4, 5));
        assert_eq!(s.max_iter, 1);
        assert_eq!((s.e_iter, s.d_iter), (0, 0));
    }

    #[test]
    fn derive_two_byte_block() {
        let s = PermutationSpec::derive(2, 5).unwrap();
        assert_eq!((s.bits, s.even_slots, s.nbsk), (16, 8, 7));
        assert_eq!(s.max_iter, 2);
        assert_eq!((s.e_iter, s.d_iter), (1, 1));
    }

    #[test]
    fn derive_orders_match_brute_force() {
        for n in 1..=CAP {
            let s = PermutationSpec::derive(n, 0).unwrap();
            assert_eq!(gcd(s.nbsk, s.even_slots), 1);
            assert_eq!(s.max_iter, brute_order(s.nbsk, s.even_slots), "n={n}");
            assert_eq!((s.e_iter + s.d_iter) % s.max_iter, 0);
            assert!(s.e_iter < s.max_iter);
        }
    }

    #[test]
    fn derive_iteration_split_depends_on_position() {
        let a = PermutationSpec::derive(6, 0).unwrap();
        let b = PermutationSpec::derive(6, 1).unwrap();
        assert_eq!(a.max_iter, b.max_iter);
        assert_ne!(a.e_iter, b.e_iter);
        for idx in 0..50 {
            let s = PermutationSpec::derive(6, idx).unwrap();
            assert!((1..s.max_iter).contains(&s.e_iter));
            assert_eq!(s.e_iter + s.d_iter, s.max_iter);
        }
    }

    #[test]
    fn derive_rejects_out_of_range() {
        assert!(matches!(
            PermutationSpec::derive(0, 0),
            Err(Error::BadExponent(0))
        ));
        assert!(matches!(
            PermutationSpec::derive(22, 0),
            Err(Error::BadExponent(22))
        ));
    }

    #[test]
    fn flip_odd_bits_bytes() {
        let mut b = [0xFFu8, 0x00];
        flip_odd_bits(&mut b);
        assert_eq!(b, [0x55, 0xAA]);
    }

    #[test]
    fn bit_addressing_is_msb_first() {
        let mut b = BitBlock::zeroed(2);
        b.set_bit(1, true);
        b.set_bit(16, true);
        assert_eq!(b.as_bytes(), &[0x80, 0x01]);
        assert!(b.bit(1) && b.bit(16) && !b.bit(2));
    }

    #[test]
    fn xor_digest_cases() {
        let digest: Digest = std::array::from_fn(|i| (i * 7 + 3) as u8);
        let mut zero = [0u8; 64];
        xor_digest(&mut zero, &digest);
        assert_eq!(zero, digest);

        let mut one = [0x5Au8];
        xor_digest(&mut one, &digest);
        assert_eq!(one[0], 0x5A ^ digest[0]);

        let mut long = vec![0u8; 200];
        xor_digest(&mut long, &digest);
        assert_eq!(long[130], digest[2]);
    }

    #[test]
    fn stride_two_byte_slot_map() {
        let spec = PermutationSpec::derive(2, 0).unwrap();
        // Mark slot k with a distinct pattern by testing each slot alone.
        for k in 0..8u64 {
            let mut b = BitBlock::zeroed(2);
            b.set_bit(2 * (k as usize + 1), true);
            let mut bytes = b.into_bytes();
            stride_permute(&mut bytes, &spec, 1).unwrap();
            let out = BitBlock::new(bytes);
            let dest = (7 * k) % 8;
            assert_eq!(
                even_slots(&out),
                (0..8).map(|j| j == dest).collect::<Vec<_>>(),
                "slot {k}"
            );
        }
    }

    #[test]
    fn stride_two_byte_vector_form() {
        // v' = (v0, v7, v6, v5, v4, v3, v2, v1)
        let spec = PermutationSpec::derive(2, 0).unwrap();
        let v = [true, false, true, true, false, false, true, false];
        let mut b = BitBlock::zeroed(2);
        for (k, &bit) in v.iter().enumerate() {
            b.set_bit(2 * (k + 1), bit);
        }
        let mut bytes = b.into_bytes();
        stride_permute(&mut bytes, &spec, 1).unwrap();
        let got = even_slots(&BitBlock::new(bytes));
        let want = [v[0], v[7], v[6], v[5], v[4], v[3], v[2], v[1]];
        assert_eq!(got, want);
    }

    #[test]
    fn stride_matches_iterative_oracle() {
        let mut rng = RandomSource::seeded_u64(21);
        for n in 1..=10u8 {
            let spec = PermutationSpec::derive(n, 0).unwrap();
            for iterations in [
                0,
                1,
                2,
                3,
                spec.max_iter - 1,
                spec.max_iter,
                spec.max_iter + 1,
            ] {
                let block = random_block(n, &mut rng);
                let mut fast = block.clone();
                stride_permute(&mut fast, &spec, iterations).unwrap();
                assert_eq!(
                    fast,
                    permute_oracle(&block, &spec, iterations),
                    "n={n} it={iterations}"
                );
            }
        }
    }

    #[test]
    fn stride_cycle_returns_to_identity() {
        let mut rng = RandomSource::seeded_u64(4);
        for n in 1..=12u8 {
            let spec = PermutationSpec::derive(n, 0).unwrap();
            let block = random_block(n, &mut rng);
            let mut b = block.clone();
            stride_permute(&mut b, &spec, 0).unwrap();
            assert_eq!(b, block);
            stride_permute(&mut b, &spec, spec.max_iter).unwrap();
            assert_eq!(b, block);
        }
    }

    #[test]
    fn odd_even_separation() {
        let mut rng = RandomSource::seeded_u64(8);
        for n in 1..=8u8 {
            let spec = PermutationSpec::derive(n, 3).unwrap();
            let block = random_block(n, &mut rng);
            let mut permuted = block.clone();
            stride_permute(&mut permuted, &spec, rng.gen_range(0..spec.max_iter + 3)).unwrap();
            for (a, b) in block.iter().zip(&permuted) {
                assert_eq!(a & ODD_MASK, b & ODD_MASK);
            }
            let mut flipped = block.clone();
            flip_odd_bits(&mut flipped);
            for (a, b) in block.iter().zip(&flipped) {
                assert_eq!(a & !ODD_MASK, b & !ODD_MASK);
            }
        }
    }

    #[test]
    fn one_byte_block_is_flip_then_xor() {
        let digest: Digest = std::array::from_fn(|i| i as u8 ^ 0x3C);
        let spec = PermutationSpec::derive(1, 9).unwrap();
        for x in 0..=255u8 {
            let mut b = [x];
            encrypt_block(&mut b, &spec, &digest).unwrap();
            assert_eq!(b[0], x ^ 0xAA ^ digest[0]);
        }
        let mut zero = [0u8];
        encrypt_block(&mut zero, &spec, &digest).unwrap();
        decrypt_block(&mut zero, &spec, &digest).unwrap();
        assert_eq!(zero, [0]);
    }

    #[test]
    fn block_round_trip_all_small_exponents() {
        let mut rng = RandomSource::seeded_u64(77);
        let digest: Digest = std::array::from_fn(|_| rng.gen());
        for n in 1..=12u8 {
            for trial in 0..40u64 {
                let spec = PermutationSpec::derive(n, trial).unwrap();
                let plain = random_block(n, &mut rng);
                let mut b = plain.clone();
                encrypt_block(&mut b, &spec, &digest).unwrap();
                let once = b.clone();
                let mut again = plain.clone();
                encrypt_block(&mut again, &spec, &digest).unwrap();
                assert_eq!(once, again);
                decrypt_block(&mut b, &spec, &digest).unwrap();
                assert_eq!(b, plain, "n={n}");
            }
        }
    }

    #[test]
    fn bitblock_wrappers_round_trip() {
        let digest = [0x11; 64];
        let spec = PermutationSpec::derive(4, 2).unwrap();
        let plain = BitBlock::new((0..8).collect());
        let ct = plain.clone().encrypt(&spec, &digest).unwrap();
        assert_ne!(ct, plain);
        assert_eq!(ct.decrypt(&spec, &digest).unwrap(), plain);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let spec = PermutationSpec::derive(3, 0).unwrap();
        let mut b = [0u8; 3];
        assert!(matches!(
            encrypt_block(&mut b, &spec, &[0; 64]),
            Err(Error::BadBlockLength {
                expected: 4,
                actual: 3
            })
        ));
        assert!(matches!(
            decrypt_block(&mut b, &spec, &[0; 64]),
            Err(Error::BadBlockLength { .. })
        ));
    }

    proptest! {
        #[test]
        fn involutions(bytes in prop::collection::vec(any::<u8>(), 0..300), d in prop::array::uniform32(any::<u8>())) {
            let mut digest = [0u8; 64];
            digest[..32].copy_from_slice(&d);
            digest[32..].copy_from_slice(&d);
            let mut b = bytes.clone();
            flip_odd_bits(&mut b);
            flip_odd_bits(&mut b);
            prop_assert_eq!(&b, &bytes);
            xor_digest(&mut b, &digest);
            xor_digest(&mut b, &digest);
            prop_assert_eq!(&b, &bytes);
        }

        #[test]
        fn round_trip_random_positions(n in 1u8..=12, idx in any::<u64>(), seed in any::<u64>()) {
            let mut rng = RandomSource::seeded_u64(seed);
            let digest: Digest = std::array::from_fn(|_| rng.gen());
            let spec = PermutationSpec::derive(n, idx).unwrap();
            let plain = random_block(n, &mut rng);
            let mut b = plain.clone();
            encrypt_block(&mut b, &spec, &digest).unwrap();
            decrypt_block(&mut b, &spec, &digest).unwrap();
            prop_assert_eq!(b, plain);
        }
    }
}
