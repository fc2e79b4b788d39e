//! Reference models written independently of the library: a field-by-field
//! posit decoder over exact rationals, and round-to-nearest by searching the
//! ordered set of patterns.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Exact value of an `n`-bit posit pattern with `es` exponent bits, or
/// `None` for NaR.
pub fn decode(bits: u64, n: u32, es: u32) -> Option<BigRational> {
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let bits = bits & mask;
    if bits == 0 {
        return Some(BigRational::zero());
    }
    if bits == 1u64 << (n - 1) {
        return None;
    }
    let negative = bits >> (n - 1) & 1 == 1;
    let mag = if negative { bits.wrapping_neg() & mask } else { bits };

    // Walk the bits after the sign, most significant first.
    let body: Vec<u8> = (0..n - 1).rev().map(|i| (mag >> i & 1) as u8).collect();
    let first = body[0];
    let run = body.iter().take_while(|&&b| b == first).count();
    let k: i64 = if first == 1 { run as i64 - 1 } else { -(run as i64) };
    let mut pos = (run + 1).min(body.len());

    let mut exp: i64 = 0;
    for _ in 0..es {
        exp <<= 1;
        if pos < body.len() {
            exp |= body[pos] as i64;
            pos += 1;
        }
    }
    let frac_bits = &body[pos.min(body.len())..];
    let mut frac = BigRational::zero();
    let mut weight = BigRational::new(BigInt::one(), BigInt::from(2));
    for &b in frac_bits {
        if b == 1 {
            frac += weight.clone();
        }
        weight /= BigInt::from(2);
    }
    let scale = k * (1i64 << es) + exp;
    let value = (BigRational::one() + frac) * pow2(scale);
    Some(if negative { -value } else { value })
}

pub fn pow2(e: i64) -> BigRational {
    if e >= 0 {
        BigRational::from_integer(BigInt::one() << e as usize)
    } else {
        BigRational::new(BigInt::one(), BigInt::one() << (-e) as usize)
    }
}

/// Largest positive pattern `p` (1..=maxpos) whose value is <= `x`, for
/// `x` at or above minpos. Patterns of positive posits sort like values.
fn floor_pattern(x: &BigRational, n: u32, es: u32) -> u64 {
    let (mut lo, mut hi) = (1u64, (1u64 << (n - 1)) - 1);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if decode(mid, n, es).expect("positive pattern") <= *x {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Rounds an exact rational to the nearest `n`-bit posit, ties to the even
/// pattern, never to zero or NaR. The midpoint between neighbours `p` and
/// `p + 1` is the value of the `(n+1)`-bit pattern `2p + 1`.
pub fn round(x: &BigRational, n: u32, es: u32) -> u64 {
    if x.is_zero() {
        return 0;
    }
    let mask = (1u64 << n) - 1;
    let mag = x.abs();
    let maxpos = (1u64 << (n - 1)) - 1;
    let minpos_value = decode(1, n, es).unwrap();
    let maxpos_value = decode(maxpos, n, es).unwrap();
    let pattern = if mag <= minpos_value {
        1
    } else if mag >= maxpos_value {
        maxpos
    } else {
        let p = floor_pattern(&mag, n, es);
        let below = decode(p, n, es).unwrap();
        if below == mag {
            p
        } else {
            let mid = decode(2 * p + 1, n + 1, es).unwrap();
            if mag < mid {
                p
            } else if mag > mid {
                p + 1
            } else if p.is_multiple_of(2) {
                p
            } else {
                p + 1
            }
        }
    };
    if x.is_negative() {
        pattern.wrapping_neg() & mask
    } else {
        pattern
    }
}

/// Exact value of a finite binary32 or binary64 number.
pub fn rational_of_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Rounds an exact rational to binary32 (round to nearest even), assuming
/// the result is a normal number.
pub fn round_f32(x: &BigRational) -> f32 {
    if x.is_zero() {
        return 0.0;
    }
    // Neighbouring candidates from the f64 approximation, then an exact
    // three-way choice among them.
    let approx = num_traits::ToPrimitive::to_f64(x).unwrap() as f32;
    let mut best = approx;
    let mut best_err = (rational_of_f64(best as f64) - x).abs();
    for cand in [f32::from_bits(approx.to_bits().wrapping_sub(1)), f32::from_bits(approx.to_bits() + 1)] {
        let err = (rational_of_f64(cand as f64) - x).abs();
        if err < best_err || (err == best_err && cand.to_bits() % 2 == 0) {
            best = cand;
            best_err = err;
        }
    }
    best
}
