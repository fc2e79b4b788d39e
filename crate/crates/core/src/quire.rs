//! The quire: a two's-complement fixed-point accumulator wide enough to hold
//! any sum of posit products exactly, stored as 32-bit segments that each
//! carry a zero flag.
//!
//! The binary point sits `2 * max_scale` bits above the LSB, so minpos^2 is
//! the smallest representable increment. Products are added with no
//! rounding at all; the only rounding in a chain of fused operations happens
//! when the quire is read back as a posit.

use std::fmt;

use crate::posit::{normalize, PositBits, PositConfig, PositKind, UnpackedPosit};

/// Segment width in bits.
pub const SEGMENT_BITS: u32 = 32;

/// Extra quotient precision for fused divide operations: the quotient is
/// rounded to `QUOTIENT_FRAC_FACTOR * n` fraction bits before it is added.
pub const QUOTIENT_FRAC_FACTOR: u32 = 2;

/// Upper bound on the quotient fraction width.
const MAX_QUOTIENT_FRAC: u32 = 120;

/// Widest fraction handed to the normalizer on read-out; lower bits fold
/// into a sticky bit.
const READ_FRAC_BITS: u32 = 124;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusedOp {
    MulAdd,
    MulSub,
    DivAdd,
    DivSub,
}

impl FusedOp {
    fn subtracts(self) -> bool {
        matches!(self, FusedOp::MulSub | FusedOp::DivSub)
    }

    fn divides(self) -> bool {
        matches!(self, FusedOp::DivAdd | FusedOp::DivSub)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Quire {
    config: PositConfig,
    width: u32,
    frac_bits: u32,
    /// Least significant segment first.
    segments: Vec<u32>,
    seg_zero: Vec<bool>,
    nar: bool,
}

impl Quire {
    pub fn new(config: PositConfig) -> Self {
        let width = config.quire_width();
        let count = width.div_ceil(SEGMENT_BITS) as usize;
        Quire {
            config,
            width,
            frac_bits: config.quire_frac_bits(),
            segments: vec![0; count],
            seg_zero: vec![true; count],
            nar: false,
        }
    }

    #[inline]
    pub fn config(&self) -> PositConfig {
        self.config
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    #[inline]
    pub fn is_nar(&self) -> bool {
        self.nar
    }

    pub fn is_zero(&self) -> bool {
        !self.nar && self.seg_zero.iter().all(|&z| z)
    }

    /// Segments, least significant first.
    pub fn segments(&self) -> &[u32] {
        &self.segments
    }

    pub fn zero_flags(&self) -> &[bool] {
        &self.seg_zero
    }

    pub fn clear(&mut self) {
        self.segments.fill(0);
        self.seg_zero.fill(true);
        self.nar = false;
    }

    /// Loads the exact fixed-point image of `p`. NaR puts the quire in the
    /// sticky NaR state.
    pub fn init(&mut self, p: PositBits) {
        debug_assert_eq!(p.config(), self.config);
        self.init_unpacked(&crate::posit::extract(p));
    }

    pub fn init_unpacked(&mut self, u: &UnpackedPosit) {
        self.clear();
        match u.kind {
            PositKind::Zero => {}
            PositKind::NaR => self.nar = true,
            PositKind::Regular => {
                let position = u.scale as i64 - u.frac_width as i64 + self.frac_bits as i64;
                self.add_scaled(u.significand(), position, u.negative);
            }
        }
    }

    /// Fused multiply/divide and add/subtract into the quire.
    pub fn accumulate(&mut self, a: &UnpackedPosit, b: &UnpackedPosit, op: FusedOp) {
        if self.nar {
            return;
        }
        if a.kind == PositKind::NaR || b.kind == PositKind::NaR {
            self.nar = true;
            return;
        }
        if op.divides() {
            if b.kind == PositKind::Zero {
                self.nar = true;
                return;
            }
            if a.kind == PositKind::Zero {
                return;
            }
            let q = divide(a, b, self.quotient_frac_bits());
            let position = q.scale as i64 - q.frac_width as i64 + self.frac_bits as i64;
            self.add_scaled(q.significand(), position, q.negative ^ op.subtracts());
        } else {
            if a.kind == PositKind::Zero || b.kind == PositKind::Zero {
                return;
            }
            let product = a.significand() * b.significand();
            let position = a.scale as i64 + b.scale as i64
                - a.frac_width as i64
                - b.frac_width as i64
                + self.frac_bits as i64;
            self.add_scaled(product, position, a.negative ^ b.negative ^ op.subtracts());
        }
    }

    /// Convenience wrapper over [`Quire::accumulate`] taking bit patterns.
    pub fn accumulate_bits(&mut self, a: PositBits, b: PositBits, op: FusedOp) {
        let ua = crate::posit::extract(a);
        let ub = crate::posit::extract(b);
        self.accumulate(&ua, &ub, op);
    }

    pub fn quotient_frac_bits(&self) -> u32 {
        (QUOTIENT_FRAC_FACTOR * self.config.n()).min(MAX_QUOTIENT_FRAC)
    }

    /// Adds (or subtracts) `magnitude * 2^position` quire LSBs. A negative
    /// position only arises for quotients below minpos^2 and is rounded to
    /// nearest even at the quire LSB.
    fn add_scaled(&mut self, magnitude: u128, position: i64, subtract: bool) {
        let (magnitude, position) = if position < 0 {
            let shift = (-position) as u32;
            let rounded = if shift > 127 {
                0
            } else {
                let kept = magnitude >> shift;
                let guard = (magnitude >> (shift - 1)) & 1 == 1;
                let sticky = shift > 1 && magnitude & ((1u128 << (shift - 1)) - 1) != 0;
                if guard && (sticky || kept & 1 == 1) {
                    kept + 1
                } else {
                    kept
                }
            };
            (rounded, 0u64)
        } else {
            (magnitude, position as u64)
        };
        if magnitude == 0 {
            return;
        }
        let first = (position / SEGMENT_BITS as u64) as usize;
        let offset = (position % SEGMENT_BITS as u64) as u32;
        // Split magnitude << offset into 32-bit words (at most 5).
        let mut words = [0u32; 5];
        let low = magnitude << offset;
        let high = if offset == 0 { 0 } else { magnitude >> (128 - offset) };
        for (i, w) in words.iter_mut().enumerate().take(4) {
            *w = (low >> (32 * i)) as u32;
        }
        words[4] = high as u32;

        let count = self.segments.len();
        if first >= count {
            // Beyond the register entirely; wraps away like the hardware would.
            return;
        }
        let mut carry = 0u64;
        let mut i = first;
        let mut k = 0;
        while i < count {
            let operand = if k < words.len() { words[k] } else { 0 };
            if k >= words.len() && carry == 0 {
                break;
            }
            let seg = self.segments[i] as u64;
            let value = if subtract {
                // seg - operand - borrow; carry holds the borrow.
                let rhs = operand as u64 + carry;
                carry = (seg < rhs) as u64;
                (seg + (carry << 32)) - rhs
            } else {
                let sum = seg + operand as u64 + carry;
                carry = sum >> 32;
                sum & 0xFFFF_FFFF
            };
            self.segments[i] = value as u32;
            self.seg_zero[i] = value == 0;
            i += 1;
            k += 1;
        }
        self.mask_top();
    }

    fn mask_top(&mut self) {
        let used = self.width % SEGMENT_BITS;
        if used != 0 {
            let last = self.segments.len() - 1;
            self.segments[last] &= (1u32 << used) - 1;
            self.seg_zero[last] = self.segments[last] == 0;
        }
    }

    fn is_negative(&self) -> bool {
        let top = self.width - 1;
        let seg = self.segments[(top / SEGMENT_BITS) as usize];
        seg >> (top % SEGMENT_BITS) & 1 == 1
    }

    /// Magnitude segments (least significant first) and their zero flags.
    fn magnitude(&self) -> (bool, Vec<u32>, Vec<bool>) {
        let negative = self.is_negative();
        if !negative {
            return (false, self.segments.clone(), self.seg_zero.clone());
        }
        let mut mag = Vec::with_capacity(self.segments.len());
        let mut carry = 1u64;
        for &seg in &self.segments {
            let v = (!seg) as u64 + carry;
            carry = v >> 32;
            mag.push(v as u32);
        }
        let used = self.width % SEGMENT_BITS;
        if used != 0 {
            let last = mag.len() - 1;
            mag[last] &= (1u32 << used) - 1;
        }
        let flags = mag.iter().map(|&s| s == 0).collect();
        (true, mag, flags)
    }

    /// Leading zeros of the magnitude, found by skipping zero-flagged
    /// segments and scanning a single segment.
    pub fn leading_zero_count(&self) -> u32 {
        let (_, mag, flags) = self.magnitude();
        self.lzc_of(&mag, &flags)
    }

    fn lzc_of(&self, mag: &[u32], flags: &[bool]) -> u32 {
        let top_segment_bits = match self.width % SEGMENT_BITS {
            0 => SEGMENT_BITS,
            used => used,
        };
        let mut count = 0;
        for i in (0..mag.len()).rev() {
            let seg_bits = if i == mag.len() - 1 {
                top_segment_bits
            } else {
                SEGMENT_BITS
            };
            if flags[i] {
                count += seg_bits;
            } else {
                return count + mag[i].leading_zeros() - (SEGMENT_BITS - seg_bits);
            }
        }
        count
    }

    /// Reads the quire as an unpacked value ready for one final rounding.
    /// Bits below the retained fraction are folded into a sticky LSB.
    pub fn read_unpacked(&self) -> UnpackedPosit {
        if self.nar {
            return UnpackedPosit::NAR;
        }
        let (negative, mag, flags) = self.magnitude();
        let lzc = self.lzc_of(&mag, &flags);
        if lzc == self.width {
            return UnpackedPosit::ZERO;
        }
        let msb = self.width - 1 - lzc;
        let frac_width = msb.min(READ_FRAC_BITS);
        let lo = msb - frac_width;
        let mut frac = extract_bits(&mag, lo, frac_width);
        if lo > 0 && any_bits_below(&mag, &flags, lo) {
            frac |= 1;
        }
        UnpackedPosit::regular(negative, msb as i32 - self.frac_bits as i32, frac, frac_width)
    }

    /// Reads the quire as a posit (one RNE rounding, saturating).
    pub fn read(&self) -> PositBits {
        normalize(self.read_unpacked(), self.config)
    }

    /// Stable text image: segments most-significant first, then zero flags
    /// most-significant first, then the NaR flag.
    pub fn dump(&self) -> String {
        let segs: Vec<String> = self.segments.iter().rev().map(|s| format!("{s:08X}")).collect();
        let flags: String = self
            .seg_zero
            .iter()
            .rev()
            .map(|&z| if z { '1' } else { '0' })
            .collect();
        format!(
            "segments={} zero={} nar={}",
            segs.join("_"),
            flags,
            self.nar as u8
        )
    }

    /// True when every zero flag agrees with its segment.
    pub fn flags_consistent(&self) -> bool {
        self.segments
            .iter()
            .zip(&self.seg_zero)
            .all(|(&s, &z)| (s == 0) == z)
    }
}

impl fmt::Debug for Quire {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Quire<{}>({})", self.config, self.dump())
    }
}

/// `len` bits of `mag` starting at bit `lo` (len <= 128).
fn extract_bits(mag: &[u32], lo: u32, len: u32) -> u128 {
    if len == 0 {
        return 0;
    }
    let mut out = 0u128;
    let first = lo / SEGMENT_BITS;
    let last = (lo + len - 1) / SEGMENT_BITS;
    for seg in first..=last {
        let v = mag[seg as usize] as u128;
        let pos = (seg * SEGMENT_BITS) as i64 - lo as i64;
        if pos < 0 {
            out |= v >> (-pos);
        } else if pos < 128 {
            out |= v << pos;
        }
    }
    if len >= 128 {
        out
    } else {
        out & ((1u128 << len) - 1)
    }
}

fn any_bits_below(mag: &[u32], flags: &[bool], bit: u32) -> bool {
    let seg = (bit / SEGMENT_BITS) as usize;
    if flags[..seg].iter().any(|&z| !z) {
        return true;
    }
    let partial = bit % SEGMENT_BITS;
    partial != 0 && mag[seg] & ((1u32 << partial) - 1) != 0
}

/// Quotient `a / b` rounded to nearest even at `frac_bits` fraction bits.
fn divide(a: &UnpackedPosit, b: &UnpackedPosit, frac_bits: u32) -> UnpackedPosit {
    // Bring both significands to a common fixed point: x / y = 1.fa / 1.fb.
    let mut x = a.significand() << b.frac_width;
    let y = b.significand() << a.frac_width;
    let mut scale = a.scale - b.scale;
    if x < y {
        x <<= 1;
        scale -= 1;
    }
    // x / y is now in [1, 2); long division for frac_bits + 1 bits.
    let mut rem = x - y;
    let mut q = 0u128;
    for _ in 0..=frac_bits {
        rem <<= 1;
        q <<= 1;
        if rem >= y {
            rem -= y;
            q |= 1;
        }
    }
    let guard = q & 1 == 1;
    let mut frac = q >> 1;
    if guard && (rem != 0 || frac & 1 == 1) {
        frac += 1;
    }
    if frac >> frac_bits == 1 {
        frac = 0;
        scale += 1;
    }
    UnpackedPosit::regular(a.negative ^ b.negative, scale, frac, frac_bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posit::extract;

    fn p8(bits: u64) -> PositBits {
        PositBits::new(bits, PositConfig::P8)
    }

    #[test]
    fn init_zero_and_one() {
        let mut q = Quire::new(PositConfig::P8);
        q.init(p8(0));
        assert!(q.is_zero());
        assert!(q.zero_flags().iter().all(|&z| z));
        q.init(p8(0x40));
        assert_eq!(q.segments(), &[1 << 12]);
        assert_eq!(q.leading_zero_count(), 19);
        assert_eq!(q.dump(), "segments=00001000 zero=0 nar=0");
    }

    #[test]
    fn nar_is_sticky_until_init() {
        let mut q = Quire::new(PositConfig::P8);
        q.init(p8(0x80));
        assert!(q.read().is_nar());
        q.accumulate_bits(p8(0x40), p8(0x40), FusedOp::MulAdd);
        assert!(q.read().is_nar());
        q.init(p8(0x40));
        assert_eq!(q.read().pattern(), 0x40);
    }

    #[test]
    fn single_rounding_of_a_chain() {
        let mut q = Quire::new(PositConfig::P8);
        let one_and_half = p8(0x50);
        q.accumulate_bits(one_and_half, one_and_half, FusedOp::MulAdd);
        assert_eq!(q.read().pattern(), 0x62);
        for _ in 0..3 {
            q.accumulate_bits(one_and_half, one_and_half, FusedOp::MulAdd);
        }
        // exact 9.0, rounded once to 8.0
        assert_eq!(q.read().pattern(), 0x78);
    }

    #[test]
    fn maxpos_squared_fits_and_saturates_on_read() {
        let mut q = Quire::new(PositConfig::P8);
        q.accumulate_bits(p8(0x7F), p8(0x7F), FusedOp::MulAdd);
        // 4096 = 2^12 sits at bit 12 + 12.
        assert_eq!(q.segments(), &[1 << 24]);
        assert_eq!(q.read().pattern(), 0x7F);
    }

    #[test]
    fn zero_operand_contributes_nothing() {
        let mut q = Quire::new(PositConfig::P16);
        q.init(PositBits::new(0x4800, PositConfig::P16));
        let before = q.clone();
        q.accumulate_bits(PositBits::new(0x5555, PositConfig::P16), PositBits::zero(PositConfig::P16), FusedOp::MulAdd);
        assert_eq!(q, before);
    }

    #[test]
    fn negative_values_and_cancellation() {
        let mut q = Quire::new(PositConfig::P8);
        q.accumulate_bits(p8(0x40), p8(0x40), FusedOp::MulSub);
        assert_eq!(q.read().pattern(), 0xC0);
        assert!(q.flags_consistent());
        q.accumulate_bits(p8(0x40), p8(0x40), FusedOp::MulAdd);
        assert!(q.is_zero());
        assert!(q.read().is_zero());
    }

    #[test]
    fn division_by_zero_is_nar() {
        let mut q = Quire::new(PositConfig::P16);
        let one = PositBits::new(0x4000, PositConfig::P16);
        q.accumulate_bits(one, PositBits::zero(PositConfig::P16), FusedOp::DivAdd);
        assert!(q.is_nar());
    }

    #[test]
    fn division_exact_and_rounded() {
        let c = PositConfig::P16;
        let mut q = Quire::new(c);
        let three = crate::posit::from_f64(3.0, c);
        let six = crate::posit::from_f64(6.0, c);
        q.accumulate_bits(six, three, FusedOp::DivAdd);
        assert_eq!(q.read().to_f64(), 2.0);
        q.clear();
        let one = crate::posit::from_f64(1.0, c);
        q.accumulate_bits(one, three, FusedOp::DivAdd);
        assert_eq!(q.read(), crate::posit::from_f64(1.0 / 3.0, c));
        q.accumulate_bits(one, three, FusedOp::DivSub);
        assert!(q.is_zero());
    }

    #[test]
    fn divide_rounds_to_even() {
        let one = extract(PositBits::new(0x4000, PositConfig::P16));
        let three = extract(crate::posit::from_f64(3.0, PositConfig::P16));
        let q = divide(&one, &three, 4);
        // 1/3 = 0.010101..b = 1.0101|01..b * 2^-2 -> 1.0101b
        assert_eq!((q.scale, q.frac, q.frac_width), (-2, 0b0101, 4));
    }

    #[test]
    fn wide_quire_segment_counts() {
        assert_eq!(Quire::new(PositConfig::P8).segments().len(), 1);
        assert_eq!(Quire::new(PositConfig::P16).segments().len(), 4);
        assert_eq!(Quire::new(PositConfig::P32).segments().len(), 16);
    }

    #[test]
    fn carry_crosses_segments() {
        let c = PositConfig::P32;
        let mut q = Quire::new(c);
        let minpos = PositBits::minpos(c);
        let one = crate::posit::from_f64(1.0, c);
        q.init(one);
        q.accumulate_bits(minpos, minpos, FusedOp::MulSub);
        assert!(q.flags_consistent());
        q.accumulate_bits(minpos, minpos, FusedOp::MulAdd);
        assert_eq!(q.read(), one);
        let mut fresh = Quire::new(c);
        fresh.init(one);
        assert_eq!(q, fresh);
    }
}
