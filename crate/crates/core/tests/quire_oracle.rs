mod common;

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use posit_rv::posit::{PositBits, PositConfig};
use posit_rv::quire::{FusedOp, Quire};

fn value(p: PositBits) -> BigRational {
    let c = p.config();
    common::decode(p.pattern(), c.n(), c.es()).expect("not NaR")
}

fn random_posit(rng: &mut ChaCha8Rng, c: PositConfig) -> PositBits {
    loop {
        let p = PositBits::new(rng.gen::<u64>() & c.mask(), c);
        if !p.is_nar() {
            return p;
        }
    }
}

/// Rounds `x` to the nearest multiple of `ulp`, ties to an even multiple.
fn round_to_multiple(x: &BigRational, ulp: &BigRational) -> BigRational {
    let t = x / ulp;
    let floor = t.floor().to_integer();
    let rem = &t - BigRational::from_integer(floor.clone());
    let half = BigRational::new(1.into(), 2.into());
    let k = if rem > half || (rem == half && floor.is_odd()) {
        floor + 1
    } else {
        floor
    };
    BigRational::from_integer(k) * ulp
}

/// Quotient as the divider delivers it: `frac_bits` fraction bits below its
/// leading one, round to nearest even.
fn rounded_quotient(a: &BigRational, b: &BigRational, frac_bits: u32) -> BigRational {
    let q = a / b;
    let mag = q.abs();
    let mut scale: i64 = 0;
    while mag >= common::pow2(scale + 1) {
        scale += 1;
    }
    while mag < common::pow2(scale) {
        scale -= 1;
    }
    let r = round_to_multiple(&mag, &common::pow2(scale - frac_bits as i64));
    if q.is_negative() {
        -r
    } else {
        r
    }
}

fn dot_case(c: PositConfig, len: usize, rng: &mut ChaCha8Rng) -> (u64, u64) {
    let mut q = Quire::new(c);
    let init = random_posit(rng, c);
    q.init(init);
    let mut exact = value(init);
    for _ in 0..len {
        let (a, b) = (random_posit(rng, c), random_posit(rng, c));
        let op = if rng.gen() { FusedOp::MulAdd } else { FusedOp::MulSub };
        q.accumulate_bits(a, b, op);
        let prod = value(a) * value(b);
        if op == FusedOp::MulAdd {
            exact += prod;
        } else {
            exact -= prod;
        }
    }
    (q.read().pattern(), common::round(&exact, c.n(), c.es()))
}

#[test]
fn wide_formats_round_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for c in [PositConfig::P24, PositConfig::P32] {
        for case in 0..400 {
            let len = 1 + case % 48;
            let (got, want) = dot_case(c, len, &mut rng);
            assert_eq!(got, want, "{c} case {case}");
        }
    }
}

#[test]
fn cancellation_to_tiny_residues() {
    // Large terms that cancel exactly, leaving a small residue; a rounded
    // accumulator would lose the residue.
    for c in [PositConfig::P8, PositConfig::P16, PositConfig::P32] {
        let big = PositBits::maxpos(c);
        let tiny = PositBits::minpos(c);
        let one = posit_rv::posit::from_f64(1.0, c);
        let mut q = Quire::new(c);
        q.accumulate_bits(big, big, FusedOp::MulAdd);
        q.accumulate_bits(tiny, tiny, FusedOp::MulAdd);
        q.accumulate_bits(big, big, FusedOp::MulSub);
        // minpos^2 rounds up to minpos
        assert_eq!(q.read(), tiny, "{c}");
        q.accumulate_bits(tiny, one, FusedOp::MulAdd);
        let want = common::round(&(value(tiny) * value(tiny) + value(tiny)), c.n(), c.es());
        assert_eq!(q.read().pattern(), want, "{c}");
        assert!(q.flags_consistent());
    }
}

#[test]
fn divisions_match_the_pre_rounded_quotient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for c in [PositConfig::P8, PositConfig::P16, PositConfig::P32] {
        for case in 0..300 {
            let mut q = Quire::new(c);
            let mut exact = BigRational::zero();
            let lsb = common::pow2(-(q.frac_bits() as i64));
            for _ in 0..1 + case % 6 {
                let a = random_posit(&mut rng, c);
                let b = random_posit(&mut rng, c);
                if b.is_zero() {
                    continue;
                }
                let op = if rng.gen() { FusedOp::DivAdd } else { FusedOp::DivSub };
                q.accumulate_bits(a, b, op);
                if a.is_zero() {
                    continue;
                }
                let quotient = rounded_quotient(&value(a), &value(b), q.quotient_frac_bits());
                let term = round_to_multiple(&quotient, &lsb);
                if op == FusedOp::DivAdd {
                    exact += term;
                } else {
                    exact -= term;
                }
            }
            assert_eq!(q.read().pattern(), common::round(&exact, c.n(), c.es()), "{c} case {case}");
        }
    }
}

#[test]
fn nar_poisons_until_reinitialised() {
    let c = PositConfig::P16;
    let mut q = Quire::new(c);
    q.accumulate_bits(PositBits::nar(c), posit_rv::posit::from_f64(1.0, c), FusedOp::MulAdd);
    q.accumulate_bits(posit_rv::posit::from_f64(2.0, c), posit_rv::posit::from_f64(1.0, c), FusedOp::MulAdd);
    assert!(q.read().is_nar());
    q.init(PositBits::zero(c));
    assert!(q.read().is_zero());
    q.accumulate_bits(posit_rv::posit::from_f64(1.0, c), PositBits::zero(c), FusedOp::DivAdd);
    assert!(q.is_nar());
}

#[test]
fn segment_layout() {
    let c = PositConfig::P32;
    let mut q = Quire::new(c);
    assert_eq!(q.width(), 512);
    assert_eq!(q.segments().len(), 16);
    q.init(posit_rv::posit::from_f64(1.0, c));
    // 1.0 sits at bit frac_bits = 240: segment 7, bit 16.
    let mut want = [0u32; 16];
    want[7] = 1 << 16;
    assert_eq!(q.segments(), &want[..]);
    assert_eq!(q.zero_flags().iter().filter(|z| !**z).count(), 1);
    q.accumulate_bits(posit_rv::posit::from_f64(1.0, c), posit_rv::posit::from_f64(2.0, c), FusedOp::MulSub);
    // -1.0 in two's complement: all ones from bit 240 upward
    assert_eq!(q.segments()[7], 0xFFFF_0000);
    assert!(q.segments()[8..].iter().all(|&s| s == 0xFFFF_FFFF));
    assert_eq!(q.read().to_f64(), -1.0);
    assert!(q.flags_consistent());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn short_dots_match_the_oracle(
        c in prop_oneof![Just(PositConfig::P8), Just(PositConfig::P16), Just(PositConfig::P32)],
        terms in prop::collection::vec((any::<u64>(), any::<u64>(), any::<bool>()), 1..16),
    ) {
        let mut q = Quire::new(c);
        let mut exact = BigRational::zero();
        for (a, b, sub) in terms {
            let a = PositBits::new(a & c.mask(), c);
            let b = PositBits::new(b & c.mask(), c);
            prop_assume!(!a.is_nar() && !b.is_nar());
            q.accumulate_bits(a, b, if sub { FusedOp::MulSub } else { FusedOp::MulAdd });
            let p = value(a) * value(b);
            if sub { exact -= p } else { exact += p }
            prop_assert!(q.flags_consistent());
        }
        prop_assert_eq!(q.read().pattern(), common::round(&exact, c.n(), c.es()));
        let zero = exact.is_zero();
        prop_assert_eq!(q.is_zero(), zero);
    }
}
