//! Assembly programs for the cycle studies and a harness that lays out
//! their data, runs them and reads the result back.

use std::fmt;

use crate::emulator::{Machine, MachineConfig, RunError, RunSummary};
use crate::isa;
use crate::melodica::{LatencyModel, QuireCounts};
use crate::posit::{self, PositBits, PositConfig};

/// Dot product over posit vectors in memory, loaded with `plw`.
pub const VDP_POSITS: &str = include_str!("../programs/vdp-posits.s");
/// Dot product over binary32 vectors, converted per element and
/// accumulated in the quire.
pub const VDP_FLOATS: &str = include_str!("../programs/vdp-floats.s");

/// How the dot-product data is stored and where it is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DotVariant {
    /// binary32 data and `fmadd.s`.
    F32,
    /// binary32 data converted to posit and accumulated in the quire.
    F32Posit,
    /// Posit data moved with `plw`/`psw`.
    Posit,
    /// Posit data moved through the integer file (`lbu`/`lhu`/`lw` and
    /// `pmv`), as code without a posit type in the compiler does it.
    PositViaGpr,
}

impl DotVariant {
    pub const ALL: [DotVariant; 4] = [
        DotVariant::F32,
        DotVariant::F32Posit,
        DotVariant::Posit,
        DotVariant::PositViaGpr,
    ];

    fn float_data(self) -> bool {
        matches!(self, DotVariant::F32 | DotVariant::F32Posit)
    }

    pub fn label(self, config: PositConfig) -> String {
        match self {
            DotVariant::F32 => "f32".into(),
            DotVariant::F32Posit => format!("f32-p{}", config.n()),
            DotVariant::Posit => format!("p{}-plw", config.n()),
            DotVariant::PositViaGpr => format!("p{}", config.n()),
        }
    }
}

impl fmt::Display for DotVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DotVariant::F32 => "f32",
            DotVariant::F32Posit => "f32-posit",
            DotVariant::Posit => "posit",
            DotVariant::PositViaGpr => "posit-gpr",
        })
    }
}

const F32_LOOP: &str = "\
# binary32 dot product with a fused multiply-add chain.
        fmv.w.x   f3, zero
        beqz      a2, done
loop:
        flw       f1, 0(a0)
        flw       f2, 0(a1)
        fmadd.s   f3, f1, f2, f3
        add       a0, a0, a4
        add       a1, a1, a4
        addi      a2, a2, -1
        bnez      a2, loop
done:
        fsw       f3, 0(a3)
        halt
";

fn int_load(config: PositConfig) -> (&'static str, &'static str) {
    match config.storage_bytes() {
        1 => ("lbu", "sb"),
        2 => ("lhu", "sh"),
        _ => ("lw", "sw"),
    }
}

/// Source of the dot-product loop for `variant`.
pub fn dot_source(variant: DotVariant, config: PositConfig) -> String {
    match variant {
        DotVariant::F32 => F32_LOOP.to_string(),
        DotVariant::F32Posit => VDP_FLOATS.to_string(),
        DotVariant::Posit => VDP_POSITS.to_string(),
        DotVariant::PositViaGpr => {
            let (ld, st) = int_load(config);
            format!(
                "\
# posit dot product through the integer register file.
        pmv.w.x   p0, zero
        fcvt.r.p  p0
        beqz      a2, done
loop:
        {ld:<9} t0, 0(a0)
        {ld:<9} t1, 0(a1)
        pmv.w.x   p1, t0
        pmv.w.x   p2, t1
        fma.p     p1, p2
        add       a0, a0, a4
        add       a1, a1, a4
        addi      a2, a2, -1
        bnez      a2, loop
done:
        fcvt.p.r  p3
        pmv.x.w   t2, p3
        {st:<9} t2, 0(a3)
        halt
"
            )
        }
    }
}

/// Outcome of one emulated dot product.
#[derive(Debug, Clone)]
pub struct DotRun {
    /// Result as stored by the program: a posit pattern, or a binary32
    /// image for the float-data variants.
    pub raw: u64,
    pub value: f64,
    pub summary: RunSummary,
    pub quire: QuireCounts,
}

impl DotRun {
    pub fn cycles(&self) -> u64 {
        self.summary.cycles
    }
}

pub const CODE_BASE: u32 = 0;
pub const DATA_BASE: u32 = 0x1_0000;

/// Runs the dot-product program for `variant` on `a` and `b`, which are
/// first rounded into the variant's storage format.
pub fn run_dot(
    variant: DotVariant,
    config: PositConfig,
    latency: LatencyModel,
    a: &[f64],
    b: &[f64],
) -> Result<DotRun, RunError> {
    run_dot_source(&dot_source(variant, config), variant, config, latency, a, b)
}

/// Like [`run_dot`] with caller-supplied source following the same register
/// convention (a0/a1 inputs, a2 count, a3 output, a4 stride).
pub fn run_dot_source(
    source: &str,
    variant: DotVariant,
    config: PositConfig,
    latency: LatencyModel,
    a: &[f64],
    b: &[f64],
) -> Result<DotRun, RunError> {
    assert_eq!(a.len(), b.len(), "dot operands differ in length");
    let program = isa::assemble_at(source, CODE_BASE)?;
    let stride = if variant.float_data() { 4 } else { config.storage_bytes() };
    let len = a.len() as u32;
    let a_addr = DATA_BASE;
    let b_addr = a_addr + (len * stride).next_multiple_of(16);
    let out_addr = b_addr + (len * stride).next_multiple_of(16);
    let needed = out_addr as usize + 16;
    let mem = needed.next_power_of_two().max(1 << 20);

    let mut m = Machine::new(MachineConfig::new(config).memory_size(mem).latency(latency))?;
    m.load_program(&program)?;
    if variant.float_data() {
        let words = |v: &[f64]| v.iter().map(|&x| (x as f32).to_bits()).collect::<Vec<_>>();
        m.write_words(a_addr, &words(a))?;
        m.write_words(b_addr, &words(b))?;
    } else {
        let bits = |v: &[f64]| v.iter().map(|&x| posit::from_f64(x, config)).collect::<Vec<_>>();
        m.write_posits(a_addr, &bits(a))?;
        m.write_posits(b_addr, &bits(b))?;
    }
    for (reg, v) in [(10, a_addr), (11, b_addr), (12, len), (13, out_addr), (14, stride)] {
        m.set_gpr(reg, v);
    }
    let summary = m.run(u64::MAX)?;
    let (raw, value) = if variant.float_data() {
        let w = m.read_word(out_addr).unwrap_or(0);
        (w as u64, f32::from_bits(w) as f64)
    } else {
        let p = m.read_posit(out_addr).unwrap_or(PositBits::zero(config));
        (p.pattern(), p.to_f64())
    };
    Ok(DotRun {
        raw,
        value,
        summary,
        quire: m.quire_counts(),
    })
}

/// Straight-line dot product whose operands already sit in registers, as in
/// the short inner products of a Lucas-Kanade solve. Returns the source and
/// the machine with operands preloaded.
pub fn preloaded_dot(
    variant: DotVariant,
    config: PositConfig,
    latency: LatencyModel,
    a: &[f64],
    b: &[f64],
) -> Result<(Machine, isa::Program), RunError> {
    assert_eq!(a.len(), b.len());
    assert!(a.len() <= 15, "operands must fit the register file");
    let mut src = String::new();
    match variant {
        DotVariant::F32 => {
            src.push_str("fmv.w.x f0, zero\n");
            for i in 0..a.len() {
                src.push_str(&format!("fmadd.s f0, f{}, f{}, f0\n", 2 * i + 1, 2 * i + 2));
            }
        }
        DotVariant::F32Posit => {
            src.push_str("fcvt.r.p p0\n");
            for i in 0..a.len() {
                let (x, y) = (2 * i + 1, 2 * i + 2);
                src.push_str(&format!("fcvt.p.s p{x}, f{x}\nfcvt.p.s p{y}, f{y}\nfma.p p{x}, p{y}\n"));
            }
            src.push_str("fcvt.p.r p31\nfcvt.s.p f0, p31\n");
        }
        DotVariant::Posit | DotVariant::PositViaGpr => {
            src.push_str("fcvt.r.p p0\n");
            for i in 0..a.len() {
                src.push_str(&format!("fma.p p{}, p{}\n", 2 * i + 1, 2 * i + 2));
            }
            src.push_str("fcvt.p.r p31\n");
        }
    }
    let program = isa::assemble_at(&src, CODE_BASE)?;
    let mut m = Machine::new(MachineConfig::new(config).latency(latency))?;
    m.load_program(&program)?;
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        let (rx, ry) = (2 * i + 1, 2 * i + 2);
        if variant.float_data() {
            m.set_fpr(rx, x as f32);
            m.set_fpr(ry, y as f32);
        } else {
            m.set_prf(rx, posit::from_f64(x, config));
            m.set_prf(ry, posit::from_f64(y, config));
        }
    }
    Ok((m, program))
}
