//! Modular arithmetic over any unsigned primitive integer.

use num_traits::{PrimInt, Unsigned};

pub fn gcd<T: PrimInt + Unsigned>(mut a: T, mut b: T) -> T {
    while !b.is_zero() {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// `a * b mod m`, falling back to double-and-add when the product overflows `T`.
pub fn mul_mod<T: PrimInt + Unsigned>(a: T, b: T, m: T) -> T {
    let (a, b) = (a % m, b % m);
    if let Some(p) = a.checked_mul(&b) {
        return p % m;
    }
    let mut acc = T::zero();
    let mut base = a;
    let mut k = b;
    while !k.is_zero() {
        if (k & T::one()) == T::one() {
            acc = add_mod(acc, base, m);
        }
        base = add_mod(base, base, m);
        k = k >> 1;
    }
    acc
}

fn add_mod<T: PrimInt + Unsigned>(a: T, b: T, m: T) -> T {
    // a, b < m
    if a >= m - b {
        a - (m - b)
    } else {
        a + b
    }
}

pub fn pow_mod<T: PrimInt + Unsigned>(base: T, mut exp: u64, m: T) -> T {
    if m == T::one() {
        return T::zero();
    }
    let mut result = T::one();
    let mut b = base % m;
    while exp > 0 {
        if exp & 1 == 1 {
            result = mul_mod(result, b, m);
        }
        b = mul_mod(b, b, m);
        exp >>= 1;
    }
    result
}

/// Multiplicative order of `a` modulo a power of two `m`.
///
/// The unit group mod `2^k` has order `2^(k-1)`, so the order of any unit is a
/// power of two; it is found by halving from the group order while the
/// half-power still yields 1. Returns `None` if `a` is even or `m` is not a
/// power of two.
pub fn order_mod_pow2<T: PrimInt + Unsigned>(a: T, m: T) -> Option<u64> {
    if m.is_zero() || m.count_ones() != 1 {
        return None;
    }
    if m == T::one() {
        return Some(1);
    }
    if (a & T::one()).is_zero() {
        return None;
    }
    let mut ord: u64 = 1u64 << (m.trailing_zeros() - 1);
    while ord > 1 && pow_mod(a, ord / 2, m) == T::one() {
        ord /= 2;
    }
    Some(ord)
}
