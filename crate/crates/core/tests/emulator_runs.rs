use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use posit_rv::emulator::{run_source, Category, Halt, Machine, MachineConfig, Trap};
use posit_rv::isa;
use posit_rv::melodica::LatencyModel;
use posit_rv::numerics::{self, Mode};
use posit_rv::posit::{self, PositConfig};
use posit_rv::programs::{self, DotVariant};

fn inputs(len: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let b = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (a, b)
}

#[test]
fn listing_on_two_ones_leaves_two_in_the_destination() {
    let c = PositConfig::P8;
    let program = isa::assemble(programs::VDP_POSITS).unwrap();
    let mut m = Machine::new(MachineConfig::new(c)).unwrap();
    m.load_program(&program).unwrap();
    let one = posit::from_f64(1.0, c);
    m.write_posits(0x1000, &[one, one]).unwrap();
    m.write_posits(0x1010, &[one, one]).unwrap();
    for (r, v) in [(10, 0x1000), (11, 0x1010), (12, 2), (13, 0x1020), (14, 1)] {
        m.set_gpr(r, v);
    }
    let s = m.run(1000).unwrap();
    assert_eq!(s.halt, Halt::Breakpoint);
    assert_eq!(m.prf(3).to_f64(), 2.0);
    assert_eq!(m.read_posit(0x1020).unwrap().to_f64(), 2.0);
}

#[test]
fn runs_are_deterministic() {
    let c = PositConfig::P16;
    let (a, b) = inputs(100, 1);
    for v in DotVariant::ALL {
        let x = programs::run_dot(v, c, LatencyModel::for_config(c), &a, &b).unwrap();
        let y = programs::run_dot(v, c, LatencyModel::for_config(c), &a, &b).unwrap();
        assert_eq!((x.raw, x.summary), (y.raw, y.summary), "{v}");
    }
}

#[test]
fn timing_never_changes_values() {
    for c in [PositConfig::P8, PositConfig::P16, PositConfig::P24, PositConfig::P32] {
        let (a, b) = inputs(37, c.n() as u64);
        for v in DotVariant::ALL {
            let timed = programs::run_dot(v, c, LatencyModel::for_config(c), &a, &b).unwrap();
            let untimed = programs::run_dot(v, c, LatencyModel::null(), &a, &b).unwrap();
            assert_eq!(timed.raw, untimed.raw, "{v} {c}");
            assert_eq!(timed.summary.instructions, untimed.summary.instructions);
            assert!(timed.cycles() >= untimed.cycles());
        }
    }
}

#[test]
fn reads_see_every_queued_accumulation() {
    // Bursts of fused ops with random gaps, each followed by a read whose
    // result is used at once.
    let c = PositConfig::P32;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let burst = rng.gen_range(1..12);
        let mut src = String::from("fcvt.r.p p0\n");
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..burst {
            let (x, y) = (rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
            a.push(x);
            b.push(y);
            src.push_str(&format!("fma.p p{}, p{}\n", 2 * i + 1, 2 * i + 2));
            for _ in 0..rng.gen_range(0..3) {
                src.push_str("nop\n");
            }
        }
        src.push_str("fcvt.p.r p30\npmv.x.w a0, p30\nhalt\n");
        let program = isa::assemble(&src).unwrap();
        let mut m = Machine::new(MachineConfig::new(c)).unwrap();
        m.load_program(&program).unwrap();
        for i in 0..burst {
            m.set_prf(2 * i + 1, posit::from_f64(a[i], c));
            m.set_prf(2 * i + 2, posit::from_f64(b[i], c));
        }
        m.run(1000).unwrap();
        let qa: Vec<f64> = a.iter().map(|&x| posit::from_f64(x, c).to_f64()).collect();
        let qb: Vec<f64> = b.iter().map(|&x| posit::from_f64(x, c).to_f64()).collect();
        let want = posit::from_f64(numerics::xdot(&qa, &qb, Mode::Qn(c)).unwrap(), c);
        assert_eq!(m.gpr(10) as u64, want.pattern());
    }
}

#[test]
fn ledger_sums_to_the_cycle_counter() {
    let c = PositConfig::P8;
    let (a, b) = inputs(64, 3);
    for v in DotVariant::ALL {
        let r = programs::run_dot(v, c, LatencyModel::for_config(c), &a, &b).unwrap();
        assert_eq!(r.summary.ledger.total(), r.summary.cycles, "{v}");
    }
}

#[test]
fn category_shapes_of_the_dot_variants() {
    let c = PositConfig::P16;
    let (a, b) = inputs(256, 5);
    let lat = LatencyModel::for_config(c);
    let f = programs::run_dot(DotVariant::F32, c, lat, &a, &b).unwrap().summary.ledger;
    assert_eq!(f.get(Category::PositCompute) + f.get(Category::Interop) + f.get(Category::PositLdSt), 0);
    assert!(f.get(Category::FloatCompute) > 0 && f.get(Category::FloatLdSt) > 0);

    let p = programs::run_dot(DotVariant::PositViaGpr, c, lat, &a, &b).unwrap().summary.ledger;
    assert_eq!(p.get(Category::FloatCompute) + p.get(Category::FloatLdSt), 0);
    assert!(p.get(Category::PositLdSt) >= 2 * 256 * 2);
    assert!(p.get(Category::Interop) >= 2 * 256);

    let i = programs::run_dot(DotVariant::F32Posit, c, lat, &a, &b).unwrap().summary.ledger;
    assert!(i.get(Category::Interop) > i.get(Category::PositCompute));
    assert_eq!(i.get(Category::PositLdSt), 0);
}

#[test]
fn posit_compute_beats_float_compute_on_long_dots() {
    let (a, b) = inputs(4096, 8);
    for c in [PositConfig::P8, PositConfig::P16, PositConfig::P32] {
        let lat = LatencyModel::for_config(c);
        let f = programs::run_dot(DotVariant::F32, c, lat, &a, &b).unwrap();
        let p = programs::run_dot(DotVariant::PositViaGpr, c, lat, &a, &b).unwrap();
        assert!(
            p.summary.ledger.get(Category::PositCompute) < f.summary.ledger.get(Category::FloatCompute),
            "{c}"
        );
    }
}

#[test]
fn traps_report_the_pc() {
    let c = PositConfig::P8;
    let err = run_source("nop\n.word 0xffffffff", MachineConfig::new(c), 10).unwrap_err();
    assert!(err.to_string().contains("0x00000004"), "{err}");
    let err = run_source("li a0, 0x7ffffff0\nlw a1, 0(a0)", MachineConfig::new(c).memory_size(4096), 10).unwrap_err();
    assert!(matches!(err, posit_rv::emulator::RunError::Trap(Trap::OutOfBounds { .. })));
    let (_, s) = run_source("", MachineConfig::new(c), 10).unwrap();
    assert_eq!((s.instructions, s.cycles), (0, 0));
}

#[test]
fn budget_stops_runaway_programs() {
    let (m, s) = run_source("loop: addi a0, a0, 1\nj loop", MachineConfig::new(PositConfig::P8), 100).unwrap();
    assert_eq!(s.halt, Halt::Budget);
    assert_eq!(s.instructions, 100);
    assert_eq!(m.gpr(10), 50);
}

#[test]
fn twenty_four_bit_posits_use_word_slots() {
    let c = PositConfig::P24;
    let (a, b) = inputs(9, 4);
    let r = programs::run_dot(DotVariant::Posit, c, LatencyModel::for_config(c), &a, &b).unwrap();
    let native = numerics::xdot(&a, &b, Mode::Qn(c)).unwrap();
    assert_eq!(r.raw, posit::from_f64(native, c).pattern());
    assert!(r.raw < 1 << 24);
}
