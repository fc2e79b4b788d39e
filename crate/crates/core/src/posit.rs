//! Posit formats of arbitrary width: field extraction, normalization with
//! round-to-nearest-even, and conversion to and from IEEE binary32/binary64.
//!
//! A posit of width `n` carries a sign bit, a run-length encoded regime, up to
//! `es` exponent bits and whatever fraction bits remain. Negative posits are
//! stored as the two's complement of the whole word, so posit order equals
//! signed integer order of the bit patterns.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

/// Widest fraction the normalizer keeps before folding low bits into a
/// sticky bit. Large enough for any product of two 64-bit posits.
const MAX_WORKING_FRAC: u32 = 120;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("posit width {0} is outside 2..=64")]
    Width(u32),
    #[error("exponent size {0} is outside 0..=4")]
    ExponentSize(u32),
}

/// The `(n, es)` pair that defines a posit format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PositConfig {
    n: u32,
    es: u32,
}

impl PositConfig {
    pub const P8: PositConfig = PositConfig { n: 8, es: 0 };
    pub const P16: PositConfig = PositConfig { n: 16, es: 1 };
    pub const P24: PositConfig = PositConfig { n: 24, es: 2 };
    pub const P32: PositConfig = PositConfig { n: 32, es: 2 };

    pub fn new(n: u32, es: u32) -> Result<Self, ConfigError> {
        if !(2..=64).contains(&n) {
            return Err(ConfigError::Width(n));
        }
        if es > 4 {
            return Err(ConfigError::ExponentSize(es));
        }
        Ok(PositConfig { n, es })
    }

    /// Configuration with the customary exponent size for a width:
    /// 8 -> 0, 16 -> 1, 24 and 32 -> 2.
    pub fn with_default_es(n: u32) -> Result<Self, ConfigError> {
        let es = match n {
            0..=8 => 0,
            9..=16 => 1,
            _ => 2,
        };
        Self::new(n, es)
    }

    #[inline]
    pub fn n(&self) -> u32 {
        self.n
    }

    #[inline]
    pub fn es(&self) -> u32 {
        self.es
    }

    /// log2 of useed = 2^(2^es).
    #[inline]
    pub fn useed_log2(&self) -> i32 {
        1 << self.es
    }

    /// Scale of maxpos, `(n - 2) * 2^es`.
    #[inline]
    pub fn max_scale(&self) -> i32 {
        ((self.n - 2) as i32) << self.es
    }

    #[inline]
    pub fn min_scale(&self) -> i32 {
        -self.max_scale()
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        if self.n == 64 {
            u64::MAX
        } else {
            (1u64 << self.n) - 1
        }
    }

    #[inline]
    pub fn nar_pattern(&self) -> u64 {
        1u64 << (self.n - 1)
    }

    #[inline]
    pub fn maxpos_pattern(&self) -> u64 {
        self.nar_pattern() - 1
    }

    #[inline]
    pub fn minpos_pattern(&self) -> u64 {
        1
    }

    /// Bytes one posit occupies in memory: 1, 2, 4 or 8.
    pub fn storage_bytes(&self) -> u32 {
        match self.n {
            0..=8 => 1,
            9..=16 => 2,
            17..=32 => 4,
            _ => 8,
        }
    }

    /// Nominal quire width, `n^2 / 2` bits.
    pub fn nominal_quire_width(&self) -> u32 {
        self.n * self.n / 2
    }

    /// Bits needed to hold every product of two posits exactly:
    /// `4 * max_scale + 1`.
    pub fn exact_product_span(&self) -> u32 {
        4 * self.max_scale() as u32 + 1
    }

    /// Width of the quire register. This is `n^2 / 2` whenever that covers
    /// the exact product span; otherwise (e.g. `(24, 2)`) the register is
    /// widened to the span plus `n - 1` carry guard bits, rounded up to a
    /// whole number of 32-bit segments.
    pub fn quire_width(&self) -> u32 {
        let nominal = self.nominal_quire_width();
        let span = self.exact_product_span();
        if nominal >= span {
            nominal
        } else {
            (span + self.n - 1).div_ceil(32) * 32
        }
    }

    /// Bits to the right of the quire's binary point: `2 * max_scale`, so
    /// that minpos^2 is the quire LSB.
    pub fn quire_frac_bits(&self) -> u32 {
        2 * self.max_scale() as u32
    }

    /// Carry guard bits above maxpos^2.
    pub fn quire_guard_bits(&self) -> u32 {
        self.quire_width() - self.exact_product_span()
    }
}

impl fmt::Display for PositConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "posit<{},{}>", self.n, self.es)
    }
}

/// A raw posit bit pattern tagged with its format. Bits above `n - 1` are
/// always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PositBits {
    pattern: u64,
    config: PositConfig,
}

impl PositBits {
    /// Wraps `pattern`, discarding any bits above the configured width.
    #[inline]
    pub fn new(pattern: u64, config: PositConfig) -> Self {
        PositBits {
            pattern: pattern & config.mask(),
            config,
        }
    }

    #[inline]
    pub fn zero(config: PositConfig) -> Self {
        PositBits { pattern: 0, config }
    }

    #[inline]
    pub fn nar(config: PositConfig) -> Self {
        PositBits {
            pattern: config.nar_pattern(),
            config,
        }
    }

    #[inline]
    pub fn maxpos(config: PositConfig) -> Self {
        PositBits {
            pattern: config.maxpos_pattern(),
            config,
        }
    }

    #[inline]
    pub fn minpos(config: PositConfig) -> Self {
        PositBits {
            pattern: 1,
            config,
        }
    }

    #[inline]
    pub fn pattern(&self) -> u64 {
        self.pattern
    }

    #[inline]
    pub fn config(&self) -> PositConfig {
        self.config
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.pattern == 0
    }

    #[inline]
    pub fn is_nar(&self) -> bool {
        self.pattern == self.config.nar_pattern()
    }

    /// The pattern sign-extended to a signed integer. Ordering of these
    /// integers is the ordering of the real values (NaR sorts lowest).
    #[inline]
    pub fn to_signed(&self) -> i64 {
        let shift = 64 - self.config.n;
        ((self.pattern << shift) as i64) >> shift
    }

    /// Exact negation (two's complement of the pattern).
    #[inline]
    pub fn negate(&self) -> Self {
        PositBits::new(self.pattern.wrapping_neg(), self.config)
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(*self)
    }

    pub fn from_f64(x: f64, config: PositConfig) -> Self {
        from_f64(x, config)
    }
}

impl fmt::Display for PositBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = self.config.n.div_ceil(4) as usize;
        write!(f, "0x{:0width$X}", self.pattern, width = digits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PositKind {
    Zero,
    NaR,
    Regular,
}

/// Decoded posit: `(-1)^negative * 2^scale * (1 + frac / 2^frac_width)`.
///
/// `scale` folds the regime and exponent together (`k * 2^es + exp`). The
/// fraction may be wider than any posit format can hold; rounding happens
/// in [`normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UnpackedPosit {
    pub kind: PositKind,
    pub negative: bool,
    pub scale: i32,
    pub frac: u128,
    pub frac_width: u32,
}

impl UnpackedPosit {
    pub const ZERO: UnpackedPosit = UnpackedPosit {
        kind: PositKind::Zero,
        negative: false,
        scale: 0,
        frac: 0,
        frac_width: 0,
    };

    pub const NAR: UnpackedPosit = UnpackedPosit {
        kind: PositKind::NaR,
        negative: false,
        scale: 0,
        frac: 0,
        frac_width: 0,
    };

    pub fn regular(negative: bool, scale: i32, frac: u128, frac_width: u32) -> Self {
        debug_assert!(frac_width <= 127);
        debug_assert!(frac_width == 127 || frac < (1u128 << frac_width));
        UnpackedPosit {
            kind: PositKind::Regular,
            negative,
            scale,
            frac,
            frac_width,
        }
    }

    #[inline]
    pub fn is_regular(&self) -> bool {
        self.kind == PositKind::Regular
    }

    /// Significand with the hidden bit restored: `2^frac_width + frac`.
    #[inline]
    pub fn significand(&self) -> u128 {
        (1u128 << self.frac_width) | self.frac
    }

    /// Drops trailing zero fraction bits.
    pub fn trimmed(mut self) -> Self {
        if self.is_regular() {
            if self.frac == 0 {
                self.frac_width = 0;
            } else {
                let tz = self.frac.trailing_zeros();
                self.frac >>= tz;
                self.frac_width -= tz;
            }
        }
        self
    }

    /// Regime value `k` and exponent `exp` implied by the scale.
    pub fn regime_and_exponent(&self, config: PositConfig) -> (i32, u32) {
        let useed = config.useed_log2();
        (
            self.scale.div_euclid(useed),
            self.scale.rem_euclid(useed) as u32,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("value is {0:?}, which has no real value")]
pub struct SpecialValue(pub PositKind);

/// Splits a pattern into sign, regime, exponent and fraction.
pub fn extract(p: PositBits) -> UnpackedPosit {
    let config = p.config;
    let n = config.n;
    let es = config.es;
    if p.pattern == 0 {
        return UnpackedPosit::ZERO;
    }
    if p.pattern == config.nar_pattern() {
        return UnpackedPosit::NAR;
    }
    let negative = p.pattern >> (n - 1) & 1 == 1;
    let magnitude = if negative {
        p.pattern.wrapping_neg() & config.mask()
    } else {
        p.pattern
    };
    // n - 1 body bits follow the sign; left-align them in a u64.
    let body_width = n - 1;
    let aligned = magnitude << (64 - body_width);
    let leading_one = aligned >> 63 == 1;
    let run = if leading_one {
        (!aligned).leading_zeros()
    } else {
        aligned.leading_zeros()
    }
    .min(body_width);
    let k = if leading_one {
        run as i32 - 1
    } else {
        -(run as i32)
    };
    let remaining = body_width.saturating_sub(run + 1);
    let exp_bits = es.min(remaining);
    let low = magnitude & low_mask(remaining);
    let exp = if exp_bits == 0 {
        0
    } else {
        ((low >> (remaining - exp_bits)) as u32) << (es - exp_bits)
    };
    let frac_width = remaining - exp_bits;
    let frac = (low & low_mask(frac_width)) as u128;
    UnpackedPosit::regular(negative, k * config.useed_log2() + exp as i32, frac, frac_width)
}

#[inline]
fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[inline]
fn low_mask128(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

/// Encodes an unpacked value into `config`, rounding to nearest with ties to
/// even on the pattern LSB. Magnitudes beyond maxpos saturate to maxpos and
/// nonzero magnitudes below minpos saturate to minpos, so a regular input
/// never yields zero or NaR.
pub fn normalize(u: UnpackedPosit, config: PositConfig) -> PositBits {
    match u.kind {
        PositKind::Zero => return PositBits::zero(config),
        PositKind::NaR => return PositBits::nar(config),
        PositKind::Regular => {}
    }
    let (mut frac, mut frac_width) = (u.frac, u.frac_width);
    if frac_width > MAX_WORKING_FRAC {
        let drop = frac_width - MAX_WORKING_FRAC;
        let sticky = frac & low_mask128(drop) != 0;
        frac = (frac >> drop) | sticky as u128;
        frac_width = MAX_WORKING_FRAC;
    }

    let body = encode_magnitude(u.scale, frac, frac_width, config);
    let pattern = if u.negative {
        body.wrapping_neg() & config.mask()
    } else {
        body
    };
    PositBits::new(pattern, config)
}

/// Positive pattern (sign bit clear) for `2^scale * 1.frac`.
fn encode_magnitude(scale: i32, frac: u128, frac_width: u32, config: PositConfig) -> u64 {
    let n = config.n;
    let es = config.es;
    let maxpos = config.maxpos_pattern();
    if scale > config.max_scale() {
        return maxpos;
    }
    if scale < config.min_scale() {
        return 1;
    }
    let k = scale.div_euclid(config.useed_log2());
    let exp = scale.rem_euclid(config.useed_log2()) as u128;
    if k == n as i32 - 2 {
        // The regime alone fills the word; anything above scale max_scale
        // was handled above, so this is maxpos or a value rounding to it.
        return maxpos;
    }
    let available = n - 1;
    let (regime, regime_len) = if k >= 0 {
        let ones = k as u32 + 1;
        (((1u64 << ones) - 1) << 1, ones + 1)
    } else {
        (1u64, (-k) as u32 + 1)
    };
    debug_assert!(regime_len <= available);
    let room = available - regime_len;
    let tail = (exp << frac_width) | frac;
    let tail_width = es + frac_width;

    let mut body = if tail_width <= room {
        (regime << room) | ((tail << (room - tail_width)) as u64)
    } else {
        let dropped = tail_width - room;
        let kept = (tail >> dropped) as u64;
        let guard = (tail >> (dropped - 1)) & 1 == 1;
        let sticky = tail & low_mask128(dropped - 1) != 0;
        let mut body = (regime << room) | kept;
        if guard && (sticky || body & 1 == 1) {
            body += 1;
        }
        body
    };
    body = body.clamp(1, maxpos);
    body
}

/// Exact rational value of a posit; NaR has none.
pub fn value_as_rational(u: &UnpackedPosit) -> Result<BigRational, SpecialValue> {
    if u.kind == PositKind::Zero {
        return Ok(BigRational::zero());
    }
    if !u.is_regular() {
        return Err(SpecialValue(u.kind));
    }
    let significand = BigInt::from(u.significand());
    let shift = u.scale - u.frac_width as i32;
    let mut value = if shift >= 0 {
        BigRational::from_integer(significand << shift as usize)
    } else {
        BigRational::new(significand, BigInt::one() << (-shift) as usize)
    };
    if u.negative {
        value = -value;
    }
    Ok(value)
}

/// Splits a finite nonzero IEEE value into (negative, scale, frac, width).
fn decompose_ieee(bits: u64, exp_bits: u32, man_bits: u32) -> Option<(bool, i32, u128, u32)> {
    let negative = bits >> (exp_bits + man_bits) & 1 == 1;
    let exp_field = (bits >> man_bits) & low_mask(exp_bits);
    let man = bits & low_mask(man_bits);
    let bias = (1i32 << (exp_bits - 1)) - 1;
    if exp_field == 0 {
        if man == 0 {
            return None;
        }
        // Subnormal: renormalize around the highest set bit.
        let top = 63 - man.leading_zeros();
        let scale = 1 - bias - man_bits as i32 + top as i32;
        Some((negative, scale, (man & low_mask(top)) as u128, top))
    } else {
        Some((negative, exp_field as i32 - bias, man as u128, man_bits))
    }
}

/// Rounds `(-1)^negative * 2^scale * 1.frac` to an IEEE format with
/// round-to-nearest-even, including gradual underflow and overflow to
/// infinity.
fn encode_ieee(
    negative: bool,
    scale: i32,
    frac: u128,
    frac_width: u32,
    exp_bits: u32,
    man_bits: u32,
) -> u64 {
    let sign = (negative as u64) << (exp_bits + man_bits);
    let bias = (1i32 << (exp_bits - 1)) - 1;
    let min_normal = 1 - bias;
    let significand = (1u128 << frac_width) | frac;
    let (shift, normal) = if scale >= min_normal {
        (frac_width as i32 - man_bits as i32, true)
    } else {
        (
            frac_width as i32 - man_bits as i32 + (min_normal - scale),
            false,
        )
    };
    let m: u128 = if shift <= 0 {
        significand << (-shift) as u32
    } else if shift as u32 > frac_width + 1 {
        0
    } else {
        let shift = shift as u32;
        let kept = significand >> shift;
        let guard = (significand >> (shift - 1)) & 1 == 1;
        let sticky = significand & low_mask128(shift - 1) != 0;
        if guard && (sticky || kept & 1 == 1) {
            kept + 1
        } else {
            kept
        }
    };
    let magnitude = if normal {
        // Adding the hidden bit into (biased - 1) carries into the exponent.
        (((scale + bias - 1) as u64) << man_bits) + m as u64
    } else {
        m as u64
    };
    let infinity = low_mask(exp_bits) << man_bits;
    sign | magnitude.min(infinity)
}

/// Converts an IEEE binary32 pattern. Zeros map to zero, infinities and NaNs
/// to NaR, everything else is rounded into the posit format.
pub fn posit_from_binary32(word: u32, config: PositConfig) -> PositBits {
    if (word >> 23) & 0xFF == 0xFF {
        return PositBits::nar(config);
    }
    match decompose_ieee(word as u64, 8, 23) {
        None => PositBits::zero(config),
        Some((negative, scale, frac, width)) => {
            normalize(UnpackedPosit::regular(negative, scale, frac, width), config)
        }
    }
}

/// Canonical quiet NaN used as the binary32 image of NaR.
pub const CANONICAL_NAN32: u32 = 0x7FC0_0000;

/// Converts to IEEE binary32 with round-to-nearest-even. Zero becomes +0.0
/// and NaR the canonical quiet NaN.
pub fn binary32_from_posit(p: PositBits) -> u32 {
    let u = extract(p);
    match u.kind {
        PositKind::Zero => 0,
        PositKind::NaR => CANONICAL_NAN32,
        PositKind::Regular => encode_ieee(u.negative, u.scale, u.frac, u.frac_width, 8, 23) as u32,
    }
}

/// Rounds a binary64 value into the posit format.
pub fn from_f64(x: f64, config: PositConfig) -> PositBits {
    if !x.is_finite() {
        return PositBits::nar(config);
    }
    match unpack_f64(x) {
        None => PositBits::zero(config),
        Some(u) => normalize(u, config),
    }
}

/// Exact unpacked form of a finite binary64 value (`None` for zero).
pub fn unpack_f64(x: f64) -> Option<UnpackedPosit> {
    debug_assert!(x.is_finite());
    decompose_ieee(x.to_bits(), 11, 52)
        .map(|(negative, scale, frac, width)| UnpackedPosit::regular(negative, scale, frac, width))
}

/// Value as binary64 (exact for every format up to 32 bits wide). NaR maps
/// to NaN.
pub fn to_f64(p: PositBits) -> f64 {
    unpacked_to_f64(&extract(p))
}

pub fn unpacked_to_f64(u: &UnpackedPosit) -> f64 {
    match u.kind {
        PositKind::Zero => 0.0,
        PositKind::NaR => f64::NAN,
        PositKind::Regular => {
            f64::from_bits(encode_ieee(u.negative, u.scale, u.frac, u.frac_width, 11, 52))
        }
    }
}

/// Rounds an unpacked value to binary32.
pub fn unpacked_to_f32(u: &UnpackedPosit) -> f32 {
    match u.kind {
        PositKind::Zero => 0.0,
        PositKind::NaR => f32::from_bits(CANONICAL_NAN32),
        PositKind::Regular => {
            f32::from_bits(encode_ieee(u.negative, u.scale, u.frac, u.frac_width, 8, 23) as u32)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p8(bits: u64) -> PositBits {
        PositBits::new(bits, PositConfig::P8)
    }

    #[test]
    fn config_bounds() {
        assert!(PositConfig::new(1, 0).is_err());
        assert!(PositConfig::new(65, 0).is_err());
        assert!(PositConfig::new(16, 5).is_err());
        assert_eq!(PositConfig::with_default_es(24).unwrap(), PositConfig::P24);
        assert_eq!(PositConfig::P32.max_scale(), 120);
        assert_eq!(PositConfig::P8.quire_width(), 32);
        assert_eq!(PositConfig::P16.quire_width(), 128);
        assert_eq!(PositConfig::P32.quire_width(), 512);
        assert_eq!(PositConfig::P24.quire_width(), 384);
        assert_eq!(PositConfig::P8.quire_guard_bits(), 7);
        assert_eq!(PositConfig::P16.quire_guard_bits(), 15);
        assert_eq!(PositConfig::P32.quire_guard_bits(), 31);
    }

    #[test]
    fn extract_specials_and_simple_values() {
        assert_eq!(extract(p8(0x00)).kind, PositKind::Zero);
        assert_eq!(extract(p8(0x80)).kind, PositKind::NaR);

        let one = extract(p8(0x40));
        assert!(one.is_regular() && !one.negative);
        assert_eq!((one.scale, one.frac), (0, 0));

        let maxpos = extract(p8(0x7F));
        assert_eq!((maxpos.negative, maxpos.scale, maxpos.frac), (false, 6, 0));

        let minus_one = extract(p8(0xC0));
        assert!(minus_one.negative);
        assert_eq!((minus_one.scale, minus_one.frac), (0, 0));
    }

    #[test]
    fn truncated_exponent_reads_as_zero_padded() {
        // posit<8,2>: 0 1111110 -> k = 5, no exponent bits left.
        let c = PositConfig::new(8, 2).unwrap();
        let u = extract(PositBits::new(0x7E, c));
        assert_eq!(u.scale, 20);
        // 0 111110 1 -> k = 4, one of two exponent bits present: exp = 0b10.
        let u = extract(PositBits::new(0x7D, c));
        assert_eq!(u.scale, 16 + 2);
    }

    #[test]
    fn normalize_rounds_ties_to_even() {
        // 9 = 1.001b * 2^3 lies halfway between 8 (0x78) and 10 (0x79).
        let nine = UnpackedPosit::regular(false, 3, 0b001, 3);
        assert_eq!(normalize(nine, PositConfig::P8).pattern(), 0x78);
        // 11 is halfway between 10 and 12; 12 has the even pattern.
        let eleven = UnpackedPosit::regular(false, 3, 0b011, 3);
        assert_eq!(normalize(eleven, PositConfig::P8).pattern(), 0x7A);
        let one = UnpackedPosit::regular(false, 0, 0, 0);
        assert_eq!(normalize(one, PositConfig::P8).pattern(), 0x40);
    }

    #[test]
    fn normalize_saturates() {
        let huge = UnpackedPosit::regular(false, 20, 0, 0);
        assert_eq!(normalize(huge, PositConfig::P8).pattern(), 0x7F);
        let tiny = UnpackedPosit::regular(true, -40, 0, 0);
        assert_eq!(normalize(tiny, PositConfig::P8).pattern(), 0xFF);
        // 96 = 1.1b * 2^6 is above maxpos = 64.
        let above = UnpackedPosit::regular(false, 6, 1, 1);
        assert_eq!(normalize(above, PositConfig::P8).pattern(), 0x7F);
    }

    #[test]
    fn eight_bit_round_trip_is_identity() {
        for bits in 0..=0xFFu64 {
            assert_eq!(normalize(extract(p8(bits)), PositConfig::P8), p8(bits));
        }
    }

    #[test]
    fn rational_values() {
        let r = |bits| value_as_rational(&extract(p8(bits))).unwrap();
        assert_eq!(r(0x40), BigRational::one());
        assert_eq!(r(0x01), BigRational::new(1.into(), 64.into()));
        assert_eq!(r(0x62), BigRational::new(9.into(), 4.into()));
        assert!(value_as_rational(&extract(p8(0x80))).is_err());
        assert_eq!(value_as_rational(&extract(p8(0x00))), Ok(BigRational::zero()));
    }

    #[test]
    fn binary32_conversions() {
        let one_and_half = 1.5f32.to_bits();
        assert_eq!(posit_from_binary32(one_and_half, PositConfig::P8).pattern(), 0x50);
        assert_eq!(posit_from_binary32(one_and_half, PositConfig::P16).pattern(), 0x4800);
        assert!(posit_from_binary32(f32::INFINITY.to_bits(), PositConfig::P8).is_nar());
        assert!(posit_from_binary32(f32::NAN.to_bits(), PositConfig::P16).is_nar());
        assert!(posit_from_binary32((-0.0f32).to_bits(), PositConfig::P16).is_zero());
        assert_eq!(binary32_from_posit(p8(0x7F)), 64.0f32.to_bits());
        assert_eq!(binary32_from_posit(p8(0x00)), 0);
        assert_eq!(binary32_from_posit(p8(0x80)), CANONICAL_NAN32);
        // Smallest subnormal lands on minpos.
        assert_eq!(posit_from_binary32(1, PositConfig::P32).pattern(), 1);
    }

    #[test]
    fn wide_posit_to_binary32_rounds() {
        // 1 + 2^-24 + 2^-26 in posit<32,2> has 27 fraction bits.
        let u = UnpackedPosit::regular(false, 0, (1 << 3) | 1, 27);
        let p = normalize(u, PositConfig::P32);
        assert_eq!(f32::from_bits(binary32_from_posit(p)), 1.0 + f32::EPSILON);
    }

    #[test]
    fn f64_round_trip_small_formats() {
        for bits in 0..=0xFFFFu64 {
            let p = PositBits::new(bits, PositConfig::P16);
            if p.is_nar() {
                assert!(p.to_f64().is_nan());
                continue;
            }
            assert_eq!(from_f64(p.to_f64(), PositConfig::P16), p);
        }
    }

    #[test]
    fn signed_order_matches_value_order() {
        let mut previous = f64::NEG_INFINITY;
        for signed in -127i64..=127 {
            let p = p8(signed as u64);
            let v = p.to_f64();
            assert!(v > previous, "{p} not above predecessor");
            previous = v;
        }
    }
}
