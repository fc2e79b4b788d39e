//! Instruction encoding for the RV32IMF subset plus the ten posit
//! instructions, with a two-pass assembler and a disassembler.
//!
//! Every supported instruction is one row of [`OP_TABLE`]: a match/mask pair
//! over the 32-bit word, the operand syntax, and which register file each
//! operand names. Encoding, decoding, the assembler and the published
//! encoding table are all driven from that one table.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Lui,
    Auipc,
    Jal,
    Jalr,
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
    Lb,
    Lh,
    Lw,
    Lbu,
    Lhu,
    Sb,
    Sh,
    Sw,
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    Mul,
    Mulh,
    Mulhsu,
    Mulhu,
    Div,
    Divu,
    Rem,
    Remu,
    Ecall,
    Ebreak,
    Rdcycle,
    Flw,
    Fsw,
    FmaddS,
    FmsubS,
    FnmsubS,
    FnmaddS,
    FaddS,
    FsubS,
    FmulS,
    FdivS,
    FsqrtS,
    FsgnjS,
    FsgnjnS,
    FsgnjxS,
    FminS,
    FmaxS,
    FcvtWS,
    FcvtWuS,
    FmvXW,
    FclassS,
    FeqS,
    FltS,
    FleS,
    FcvtSW,
    FcvtSWu,
    FmvWX,
    FmaP,
    FmsP,
    FdaP,
    FdsP,
    FcvtRP,
    FcvtPR,
    FcvtPS,
    FcvtSP,
    PmvWX,
    PmvXW,
    Plw,
    Psw,
}

/// Register file an operand refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegFile {
    X,
    F,
    P,
}

impl RegFile {
    fn prefix(self) -> char {
        match self {
            RegFile::X => 'x',
            RegFile::F => 'f',
            RegFile::P => 'p',
        }
    }
}

/// Bit layout of the word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    R,
    R4,
    I,
    S,
    B,
    U,
    J,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Format::R => "R",
            Format::R4 => "R4",
            Format::I => "I",
            Format::S => "S",
            Format::B => "B",
            Format::U => "U",
            Format::J => "J",
        };
        f.write_str(s)
    }
}

/// Operand shape as written in assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Syntax {
    /// `op` with no operands.
    Bare,
    /// `op rd`
    Rd,
    /// `op rs1`
    Rs1,
    /// `op rs1, rs2`
    Rs1Rs2,
    /// `op rd, rs1`
    RdRs1,
    /// `op rd, rs1, rs2`
    RdRs1Rs2,
    /// `op rd, rs1, rs2, rs3`
    RdRs1Rs2Rs3,
    /// `op rd, rs1, imm`
    RdRs1Imm,
    /// `op rd, rs1, shamt`
    Shift,
    /// `op rd, imm(rs1)`
    Load,
    /// `op rs2, imm(rs1)`
    Store,
    /// `op rs1, rs2, target`
    Branch,
    /// `op rd, upper-immediate`
    Upper,
    /// `op rd, target`
    Jump,
}

#[derive(Debug, Clone, Copy)]
pub struct OpInfo {
    pub op: Op,
    pub mnemonic: &'static str,
    pub format: Format,
    pub syntax: Syntax,
    pub match_bits: u32,
    pub mask: u32,
    pub rd: Option<RegFile>,
    pub rs1: Option<RegFile>,
    pub rs2: Option<RegFile>,
    pub rs3: Option<RegFile>,
    /// Carries a rounding-mode field in bits 14:12.
    pub has_rm: bool,
}

impl OpInfo {
    pub fn opcode(&self) -> u32 {
        self.match_bits & 0x7F
    }

    /// funct3 when fixed by the encoding.
    pub fn funct3(&self) -> Option<u32> {
        (self.mask & 0x7000 == 0x7000).then_some((self.match_bits >> 12) & 7)
    }

    /// funct7 (R) or the funct2 format field (R4) when fixed.
    pub fn funct7(&self) -> Option<u32> {
        match self.format {
            Format::R => (self.mask & 0xFE00_0000 == 0xFE00_0000).then_some(self.match_bits >> 25),
            Format::R4 => Some((self.match_bits >> 25) & 3),
            _ => None,
        }
    }

    /// The fixed rs2 field, for R-format words that use it as a selector.
    pub fn fixed_rs2(&self) -> Option<u32> {
        (self.format == Format::R && self.rs2.is_none() && self.mask & 0x01F0_0000 == 0x01F0_0000)
            .then_some((self.match_bits >> 20) & 0x1F)
    }

    /// The two-bit fmt field (bits 26:25) of floating-point R/R4 words.
    pub fn fmt(&self) -> Option<u32> {
        matches!(self.opcode(), 0x53 | 0x43 | 0x47 | 0x4B | 0x4F).then_some((self.match_bits >> 25) & 3)
    }
}

const R_MASK: u32 = 0xFE00_707F;
const R_RM_MASK: u32 = 0xFE00_007F;
const R_RS2_MASK: u32 = 0xFFF0_707F;
const R_RS2_RM_MASK: u32 = 0xFFF0_007F;
const R4_MASK: u32 = 0x0600_007F;
const I_MASK: u32 = 0x0000_707F;
const U_MASK: u32 = 0x0000_007F;

const fn r(funct7: u32, rs2: u32, funct3: u32, opcode: u32) -> u32 {
    (funct7 << 25) | (rs2 << 20) | (funct3 << 12) | opcode
}

const X: Option<RegFile> = Some(RegFile::X);
const F: Option<RegFile> = Some(RegFile::F);
const P: Option<RegFile> = Some(RegFile::P);
const NO: Option<RegFile> = None;

macro_rules! row {
    ($op:ident, $m:literal, $fmt:ident, $syn:ident, $match:expr, $mask:expr,
     $rd:expr, $rs1:expr, $rs2:expr, $rs3:expr, $rm:expr) => {
        OpInfo {
            op: Op::$op,
            mnemonic: $m,
            format: Format::$fmt,
            syntax: Syntax::$syn,
            match_bits: $match,
            mask: $mask,
            rd: $rd,
            rs1: $rs1,
            rs2: $rs2,
            rs3: $rs3,
            has_rm: $rm,
        }
    };
}

/// Function-field codes of the posit instructions. They sit in the
/// floating-point operation space with fmt = 10.
#[allow(clippy::unusual_byte_groupings)] // funct5 _ fmt
pub mod posit_codes {
    pub const FMT_POSIT: u32 = 0b10;
    pub const RS2_POSIT: u32 = 0x10;
    pub const RS2_QUIRE: u32 = 0x11;
    pub const RS2_BINARY32: u32 = 0x00;
    pub const FUNCT7_FMA_P: u32 = 0b01100_10;
    pub const FUNCT7_FMS_P: u32 = 0b01101_10;
    pub const FUNCT7_FDA_P: u32 = 0b01110_10;
    pub const FUNCT7_FDS_P: u32 = 0b01111_10;
    /// Conversion group with the posit fmt.
    pub const FUNCT7_FCVT_TO_POSIT: u32 = 0b01000_10;
    /// Conversion group with the binary32 fmt.
    pub const FUNCT7_FCVT_S: u32 = 0b01000_00;
    pub const FUNCT7_PMV_X_W: u32 = 0b11100_10;
    pub const FUNCT7_PMV_W_X: u32 = 0b11110_10;
    /// Width code of PLW/PSW.
    pub const WIDTH_POSIT: u32 = 0b110;
}

use posit_codes::*;

pub static OP_TABLE: &[OpInfo] = &[
    row!(Lui, "lui", U, Upper, 0x37, U_MASK, X, NO, NO, NO, false),
    row!(Auipc, "auipc", U, Upper, 0x17, U_MASK, X, NO, NO, NO, false),
    row!(Jal, "jal", J, Jump, 0x6F, U_MASK, X, NO, NO, NO, false),
    row!(Jalr, "jalr", I, Load, 0x67, I_MASK, X, X, NO, NO, false),
    row!(Beq, "beq", B, Branch, 0x63, I_MASK, NO, X, X, NO, false),
    row!(Bne, "bne", B, Branch, 0x1063, I_MASK, NO, X, X, NO, false),
    row!(Blt, "blt", B, Branch, 0x4063, I_MASK, NO, X, X, NO, false),
    row!(Bge, "bge", B, Branch, 0x5063, I_MASK, NO, X, X, NO, false),
    row!(Bltu, "bltu", B, Branch, 0x6063, I_MASK, NO, X, X, NO, false),
    row!(Bgeu, "bgeu", B, Branch, 0x7063, I_MASK, NO, X, X, NO, false),
    row!(Lb, "lb", I, Load, 0x03, I_MASK, X, X, NO, NO, false),
    row!(Lh, "lh", I, Load, 0x1003, I_MASK, X, X, NO, NO, false),
    row!(Lw, "lw", I, Load, 0x2003, I_MASK, X, X, NO, NO, false),
    row!(Lbu, "lbu", I, Load, 0x4003, I_MASK, X, X, NO, NO, false),
    row!(Lhu, "lhu", I, Load, 0x5003, I_MASK, X, X, NO, NO, false),
    row!(Sb, "sb", S, Store, 0x23, I_MASK, NO, X, X, NO, false),
    row!(Sh, "sh", S, Store, 0x1023, I_MASK, NO, X, X, NO, false),
    row!(Sw, "sw", S, Store, 0x2023, I_MASK, NO, X, X, NO, false),
    row!(Addi, "addi", I, RdRs1Imm, 0x13, I_MASK, X, X, NO, NO, false),
    row!(Slti, "slti", I, RdRs1Imm, 0x2013, I_MASK, X, X, NO, NO, false),
    row!(Sltiu, "sltiu", I, RdRs1Imm, 0x3013, I_MASK, X, X, NO, NO, false),
    row!(Xori, "xori", I, RdRs1Imm, 0x4013, I_MASK, X, X, NO, NO, false),
    row!(Ori, "ori", I, RdRs1Imm, 0x6013, I_MASK, X, X, NO, NO, false),
    row!(Andi, "andi", I, RdRs1Imm, 0x7013, I_MASK, X, X, NO, NO, false),
    row!(Slli, "slli", I, Shift, 0x1013, R_MASK, X, X, NO, NO, false),
    row!(Srli, "srli", I, Shift, 0x5013, R_MASK, X, X, NO, NO, false),
    row!(Srai, "srai", I, Shift, 0x4000_5013, R_MASK, X, X, NO, NO, false),
    row!(Add, "add", R, RdRs1Rs2, r(0, 0, 0, 0x33), R_MASK, X, X, X, NO, false),
    row!(Sub, "sub", R, RdRs1Rs2, r(0x20, 0, 0, 0x33), R_MASK, X, X, X, NO, false),
    row!(Sll, "sll", R, RdRs1Rs2, r(0, 0, 1, 0x33), R_MASK, X, X, X, NO, false),
    row!(Slt, "slt", R, RdRs1Rs2, r(0, 0, 2, 0x33), R_MASK, X, X, X, NO, false),
    row!(Sltu, "sltu", R, RdRs1Rs2, r(0, 0, 3, 0x33), R_MASK, X, X, X, NO, false),
    row!(Xor, "xor", R, RdRs1Rs2, r(0, 0, 4, 0x33), R_MASK, X, X, X, NO, false),
    row!(Srl, "srl", R, RdRs1Rs2, r(0, 0, 5, 0x33), R_MASK, X, X, X, NO, false),
    row!(Sra, "sra", R, RdRs1Rs2, r(0x20, 0, 5, 0x33), R_MASK, X, X, X, NO, false),
    row!(Or, "or", R, RdRs1Rs2, r(0, 0, 6, 0x33), R_MASK, X, X, X, NO, false),
    row!(And, "and", R, RdRs1Rs2, r(0, 0, 7, 0x33), R_MASK, X, X, X, NO, false),
    row!(Mul, "mul", R, RdRs1Rs2, r(1, 0, 0, 0x33), R_MASK, X, X, X, NO, false),
    row!(Mulh, "mulh", R, RdRs1Rs2, r(1, 0, 1, 0x33), R_MASK, X, X, X, NO, false),
    row!(Mulhsu, "mulhsu", R, RdRs1Rs2, r(1, 0, 2, 0x33), R_MASK, X, X, X, NO, false),
    row!(Mulhu, "mulhu", R, RdRs1Rs2, r(1, 0, 3, 0x33), R_MASK, X, X, X, NO, false),
    row!(Div, "div", R, RdRs1Rs2, r(1, 0, 4, 0x33), R_MASK, X, X, X, NO, false),
    row!(Divu, "divu", R, RdRs1Rs2, r(1, 0, 5, 0x33), R_MASK, X, X, X, NO, false),
    row!(Rem, "rem", R, RdRs1Rs2, r(1, 0, 6, 0x33), R_MASK, X, X, X, NO, false),
    row!(Remu, "remu", R, RdRs1Rs2, r(1, 0, 7, 0x33), R_MASK, X, X, X, NO, false),
    row!(Ecall, "ecall", I, Bare, 0x0000_0073, 0xFFFF_FFFF, NO, NO, NO, NO, false),
    row!(Ebreak, "ebreak", I, Bare, 0x0010_0073, 0xFFFF_FFFF, NO, NO, NO, NO, false),
    row!(Rdcycle, "rdcycle", I, Rd, 0xC000_2073, 0xFFFF_F07F, X, NO, NO, NO, false),
    row!(Flw, "flw", I, Load, 0x2007, I_MASK, F, X, NO, NO, false),
    row!(Fsw, "fsw", S, Store, 0x2027, I_MASK, NO, X, F, NO, false),
    row!(FmaddS, "fmadd.s", R4, RdRs1Rs2Rs3, 0x43, R4_MASK, F, F, F, F, true),
    row!(FmsubS, "fmsub.s", R4, RdRs1Rs2Rs3, 0x47, R4_MASK, F, F, F, F, true),
    row!(FnmsubS, "fnmsub.s", R4, RdRs1Rs2Rs3, 0x4B, R4_MASK, F, F, F, F, true),
    row!(FnmaddS, "fnmadd.s", R4, RdRs1Rs2Rs3, 0x4F, R4_MASK, F, F, F, F, true),
    row!(FaddS, "fadd.s", R, RdRs1Rs2, r(0x00, 0, 0, 0x53), R_RM_MASK, F, F, F, NO, true),
    row!(FsubS, "fsub.s", R, RdRs1Rs2, r(0x04, 0, 0, 0x53), R_RM_MASK, F, F, F, NO, true),
    row!(FmulS, "fmul.s", R, RdRs1Rs2, r(0x08, 0, 0, 0x53), R_RM_MASK, F, F, F, NO, true),
    row!(FdivS, "fdiv.s", R, RdRs1Rs2, r(0x0C, 0, 0, 0x53), R_RM_MASK, F, F, F, NO, true),
    row!(FsqrtS, "fsqrt.s", R, RdRs1, r(0x2C, 0, 0, 0x53), R_RS2_RM_MASK, F, F, NO, NO, true),
    row!(FsgnjS, "fsgnj.s", R, RdRs1Rs2, r(0x10, 0, 0, 0x53), R_MASK, F, F, F, NO, false),
    row!(FsgnjnS, "fsgnjn.s", R, RdRs1Rs2, r(0x10, 0, 1, 0x53), R_MASK, F, F, F, NO, false),
    row!(FsgnjxS, "fsgnjx.s", R, RdRs1Rs2, r(0x10, 0, 2, 0x53), R_MASK, F, F, F, NO, false),
    row!(FminS, "fmin.s", R, RdRs1Rs2, r(0x14, 0, 0, 0x53), R_MASK, F, F, F, NO, false),
    row!(FmaxS, "fmax.s", R, RdRs1Rs2, r(0x14, 0, 1, 0x53), R_MASK, F, F, F, NO, false),
    row!(FcvtWS, "fcvt.w.s", R, RdRs1, r(0x60, 0, 0, 0x53), R_RS2_RM_MASK, X, F, NO, NO, true),
    row!(FcvtWuS, "fcvt.wu.s", R, RdRs1, r(0x60, 1, 0, 0x53), R_RS2_RM_MASK, X, F, NO, NO, true),
    row!(FmvXW, "fmv.x.w", R, RdRs1, r(0x70, 0, 0, 0x53), R_RS2_MASK, X, F, NO, NO, false),
    row!(FclassS, "fclass.s", R, RdRs1, r(0x70, 0, 1, 0x53), R_RS2_MASK, X, F, NO, NO, false),
    row!(FeqS, "feq.s", R, RdRs1Rs2, r(0x50, 0, 2, 0x53), R_MASK, X, F, F, NO, false),
    row!(FltS, "flt.s", R, RdRs1Rs2, r(0x50, 0, 1, 0x53), R_MASK, X, F, F, NO, false),
    row!(FleS, "fle.s", R, RdRs1Rs2, r(0x50, 0, 0, 0x53), R_MASK, X, F, F, NO, false),
    row!(FcvtSW, "fcvt.s.w", R, RdRs1, r(0x68, 0, 0, 0x53), R_RS2_RM_MASK, F, X, NO, NO, true),
    row!(FcvtSWu, "fcvt.s.wu", R, RdRs1, r(0x68, 1, 0, 0x53), R_RS2_RM_MASK, F, X, NO, NO, true),
    row!(FmvWX, "fmv.w.x", R, RdRs1, r(0x78, 0, 0, 0x53), R_RS2_MASK, F, X, NO, NO, false),
    // Posit extension. Fused ops write only the quire, so rd is fixed at 0.
    row!(FmaP, "fma.p", R, Rs1Rs2, r(FUNCT7_FMA_P, 0, 0, 0x53), 0xFE00_7FFF, NO, P, P, NO, false),
    row!(FmsP, "fms.p", R, Rs1Rs2, r(FUNCT7_FMS_P, 0, 0, 0x53), 0xFE00_7FFF, NO, P, P, NO, false),
    row!(FdaP, "fda.p", R, Rs1Rs2, r(FUNCT7_FDA_P, 0, 0, 0x53), 0xFE00_7FFF, NO, P, P, NO, false),
    row!(FdsP, "fds.p", R, Rs1Rs2, r(FUNCT7_FDS_P, 0, 0, 0x53), 0xFE00_7FFF, NO, P, P, NO, false),
    row!(FcvtRP, "fcvt.r.p", R, Rs1, r(FUNCT7_FCVT_TO_POSIT, RS2_POSIT, 0, 0x53), 0xFFF0_7FFF, NO, P, NO, NO, false),
    row!(FcvtPR, "fcvt.p.r", R, Rd, r(FUNCT7_FCVT_TO_POSIT, RS2_QUIRE, 0, 0x53), 0xFFFF_F07F, P, NO, NO, NO, false),
    row!(FcvtPS, "fcvt.p.s", R, RdRs1, r(FUNCT7_FCVT_TO_POSIT, RS2_BINARY32, 0, 0x53), R_RS2_MASK, P, F, NO, NO, false),
    row!(FcvtSP, "fcvt.s.p", R, RdRs1, r(FUNCT7_FCVT_S, RS2_POSIT, 0, 0x53), R_RS2_MASK, F, P, NO, NO, false),
    row!(PmvWX, "pmv.w.x", R, RdRs1, r(FUNCT7_PMV_W_X, 0, 0, 0x53), R_RS2_MASK, P, X, NO, NO, false),
    row!(PmvXW, "pmv.x.w", R, RdRs1, r(FUNCT7_PMV_X_W, RS2_POSIT, 0, 0x53), R_RS2_MASK, X, P, NO, NO, false),
    row!(Plw, "plw", I, Load, (WIDTH_POSIT << 12) | 0x07, I_MASK, P, X, NO, NO, false),
    row!(Psw, "psw", S, Store, (WIDTH_POSIT << 12) | 0x27, I_MASK, NO, X, P, NO, false),
];

impl Op {
    pub fn info(self) -> &'static OpInfo {
        // The table is ordered like the enum.
        let info = &OP_TABLE[self as usize];
        debug_assert_eq!(info.op, self);
        info
    }

    pub fn mnemonic(self) -> &'static str {
        self.info().mnemonic
    }

    pub fn from_mnemonic(name: &str) -> Option<Op> {
        OP_TABLE.iter().find(|i| i.mnemonic == name).map(|i| i.op)
    }

    pub fn is_posit(self) -> bool {
        self >= Op::FmaP
    }

    pub fn all() -> impl Iterator<Item = Op> {
        OP_TABLE.iter().map(|i| i.op)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Rounding-mode field value meaning "use the dynamic mode".
pub const RM_DYN: u8 = 7;

const RM_NAMES: [&str; 8] = ["rne", "rtz", "rdn", "rup", "rmm", "", "", "dyn"];

fn rm_valid(rm: u8) -> bool {
    rm <= 4 || rm == RM_DYN
}

/// A decoded instruction. Register fields an instruction does not use are
/// zero, and `rm` is zero for instructions without a rounding mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub op: Op,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub rs3: u8,
    pub imm: i32,
    pub rm: u8,
}

impl Instruction {
    pub fn new(op: Op) -> Self {
        Instruction {
            op,
            rd: 0,
            rs1: 0,
            rs2: 0,
            rs3: 0,
            imm: 0,
            rm: if op.info().has_rm { RM_DYN } else { 0 },
        }
    }

    pub fn rd(mut self, r: u8) -> Self {
        self.rd = r;
        self
    }

    pub fn rs1(mut self, r: u8) -> Self {
        self.rs1 = r;
        self
    }

    pub fn rs2(mut self, r: u8) -> Self {
        self.rs2 = r;
        self
    }

    pub fn rs3(mut self, r: u8) -> Self {
        self.rs3 = r;
        self
    }

    pub fn imm(mut self, imm: i32) -> Self {
        self.imm = imm;
        self
    }

    pub fn rm(mut self, rm: u8) -> Self {
        self.rm = rm;
        self
    }

    pub fn info(&self) -> &'static OpInfo {
        self.op.info()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("{op}: register index {index} out of range")]
    Register { op: Op, index: u8 },
    #[error("{op}: immediate {imm} out of range")]
    Immediate { op: Op, imm: i32 },
    #[error("{op}: invalid rounding mode {rm}")]
    RoundingMode { op: Op, rm: u8 },
    #[error("{op}: field {field} must be zero")]
    UnusedField { op: Op, field: &'static str },
}

/// A word that does not decode to a supported instruction.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("illegal instruction 0x{0:08x}")]
pub struct Illegal(pub u32);

fn imm_range(syntax: Syntax, format: Format) -> Option<(i64, i64, i64)> {
    // (min, max, required alignment)
    match (syntax, format) {
        (Syntax::Shift, _) => Some((0, 31, 1)),
        (_, Format::I) | (_, Format::S) => Some((-2048, 2047, 1)),
        (_, Format::B) => Some((-4096, 4094, 2)),
        (_, Format::J) => Some((-(1 << 20), (1 << 20) - 2, 2)),
        (_, Format::U) => Some((i32::MIN as i64, i32::MAX as i64, 4096)),
        _ => None,
    }
}

fn uses_imm(info: &OpInfo) -> bool {
    !matches!(
        info.syntax,
        Syntax::Bare | Syntax::Rd | Syntax::Rs1 | Syntax::Rs1Rs2 | Syntax::RdRs1 | Syntax::RdRs1Rs2 | Syntax::RdRs1Rs2Rs3
    )
}

pub fn encode(inst: &Instruction) -> Result<u32, EncodeError> {
    let info = inst.info();
    let op = inst.op;
    let regs = [
        ("rd", inst.rd, info.rd),
        ("rs1", inst.rs1, info.rs1),
        ("rs2", inst.rs2, info.rs2),
        ("rs3", inst.rs3, info.rs3),
    ];
    for (field, index, file) in regs {
        if file.is_some() && index > 31 {
            return Err(EncodeError::Register { op, index });
        }
        if file.is_none() && index != 0 {
            return Err(EncodeError::UnusedField { op, field });
        }
    }
    if info.has_rm {
        if !rm_valid(inst.rm) {
            return Err(EncodeError::RoundingMode { op, rm: inst.rm });
        }
    } else if inst.rm != 0 {
        return Err(EncodeError::UnusedField { op, field: "rm" });
    }
    let imm = inst.imm;
    if uses_imm(info) {
        if let Some((lo, hi, align)) = imm_range(info.syntax, info.format) {
            let v = imm as i64;
            if v < lo || v > hi || v % align != 0 {
                return Err(EncodeError::Immediate { op, imm });
            }
        }
    } else if imm != 0 {
        return Err(EncodeError::UnusedField { op, field: "imm" });
    }

    let mut w = info.match_bits;
    w |= (inst.rd as u32) << 7;
    w |= (inst.rs1 as u32) << 15;
    w |= (inst.rs2 as u32) << 20;
    w |= (inst.rs3 as u32) << 27;
    if info.has_rm {
        w |= (inst.rm as u32) << 12;
    }
    let u = imm as u32;
    w |= match (info.syntax, info.format) {
        (Syntax::Shift, _) => u << 20,
        (Syntax::Rd | Syntax::Bare, _) => 0,
        (_, Format::I) => u << 20,
        (_, Format::S) => ((u & 0xFE0) << 20) | ((u & 0x1F) << 7),
        (_, Format::B) => {
            ((u >> 12 & 1) << 31) | ((u >> 5 & 0x3F) << 25) | ((u >> 1 & 0xF) << 8) | ((u >> 11 & 1) << 7)
        }
        (_, Format::U) => u & 0xFFFF_F000,
        (_, Format::J) => {
            ((u >> 20 & 1) << 31) | ((u >> 1 & 0x3FF) << 21) | ((u >> 11 & 1) << 20) | (u & 0xFF000)
        }
        _ => 0,
    };
    debug_assert_eq!(w & info.mask, info.match_bits);
    Ok(w)
}

pub fn lookup(word: u32) -> Option<&'static OpInfo> {
    OP_TABLE.iter().find(|i| word & i.mask == i.match_bits)
}

pub fn decode(word: u32) -> Result<Instruction, Illegal> {
    let info = lookup(word).ok_or(Illegal(word))?;
    let mut inst = Instruction::new(info.op);
    let field = |shift: u32| ((word >> shift) & 0x1F) as u8;
    if info.rd.is_some() {
        inst.rd = field(7);
    }
    if info.rs1.is_some() {
        inst.rs1 = field(15);
    }
    if info.rs2.is_some() {
        inst.rs2 = field(20);
    }
    if info.rs3.is_some() {
        inst.rs3 = field(27);
    }
    if info.has_rm {
        let rm = ((word >> 12) & 7) as u8;
        if !rm_valid(rm) {
            return Err(Illegal(word));
        }
        inst.rm = rm;
    }
    let s = word as i32;
    inst.imm = match (info.syntax, info.format) {
        (Syntax::Shift, _) => ((word >> 20) & 0x1F) as i32,
        (Syntax::Rd | Syntax::Bare, _) => 0,
        (_, Format::I) => s >> 20,
        (_, Format::S) => ((s >> 25) << 5) | ((word >> 7) & 0x1F) as i32,
        (_, Format::B) => {
            ((s >> 31) << 12)
                | (((word >> 7) & 1) << 11) as i32
                | (((word >> 25) & 0x3F) << 5) as i32
                | (((word >> 8) & 0xF) << 1) as i32
        }
        (_, Format::U) => (word & 0xFFFF_F000) as i32,
        (_, Format::J) => {
            ((s >> 31) << 20)
                | (word & 0xFF000) as i32
                | (((word >> 20) & 1) << 11) as i32
                | (((word >> 21) & 0x3FF) << 1) as i32
        }
        _ => 0,
    };
    Ok(inst)
}

const X_ABI: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7",
    "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
];

const F_ABI: [&str; 32] = [
    "ft0", "ft1", "ft2", "ft3", "ft4", "ft5", "ft6", "ft7", "fs0", "fs1", "fa0", "fa1", "fa2", "fa3", "fa4", "fa5",
    "fa6", "fa7", "fs2", "fs3", "fs4", "fs5", "fs6", "fs7", "fs8", "fs9", "fs10", "fs11", "ft8", "ft9", "ft10",
    "ft11",
];

pub fn reg_name(file: RegFile, index: u8) -> String {
    match file {
        RegFile::X => X_ABI[index as usize & 31].to_string(),
        _ => format!("{}{}", file.prefix(), index),
    }
}

/// Parses a register name in the given file, accepting numeric and ABI names.
pub fn parse_reg(file: RegFile, name: &str) -> Option<u8> {
    let name = name.trim();
    if let Some(num) = name.strip_prefix(file.prefix()) {
        if let Ok(i) = num.parse::<u8>() {
            if i < 32 && !num.starts_with('+') && (num == "0" || !num.starts_with('0')) {
                return Some(i);
            }
        }
    }
    match file {
        RegFile::X => {
            if name == "fp" {
                return Some(8);
            }
            X_ABI.iter().position(|&n| n == name).map(|i| i as u8)
        }
        RegFile::F => F_ABI.iter().position(|&n| n == name).map(|i| i as u8),
        RegFile::P => None,
    }
}

/// Disassembles one instruction. Branch and jump targets print as
/// pc-relative offsets, which the assembler accepts back unchanged.
pub fn disassemble(inst: &Instruction) -> String {
    let info = inst.info();
    let name = |file: Option<RegFile>, idx: u8| reg_name(file.unwrap_or(RegFile::X), idx);
    let rd = name(info.rd, inst.rd);
    let rs1 = name(info.rs1, inst.rs1);
    let rs2 = name(info.rs2, inst.rs2);
    let rs3 = name(info.rs3, inst.rs3);
    let ops = match info.syntax {
        Syntax::Bare => String::new(),
        Syntax::Rd => rd,
        Syntax::Rs1 => rs1,
        Syntax::Rs1Rs2 => format!("{rs1}, {rs2}"),
        Syntax::RdRs1 => format!("{rd}, {rs1}"),
        Syntax::RdRs1Rs2 => format!("{rd}, {rs1}, {rs2}"),
        Syntax::RdRs1Rs2Rs3 => format!("{rd}, {rs1}, {rs2}, {rs3}"),
        Syntax::RdRs1Imm | Syntax::Shift => format!("{rd}, {rs1}, {}", inst.imm),
        Syntax::Load => format!("{rd}, {}({rs1})", inst.imm),
        Syntax::Store => format!("{rs2}, {}({rs1})", inst.imm),
        Syntax::Branch => format!("{rs1}, {rs2}, {}", inst.imm),
        Syntax::Upper => format!("{rd}, 0x{:x}", (inst.imm as u32) >> 12),
        Syntax::Jump => format!("{rd}, {}", inst.imm),
    };
    let mut text = if ops.is_empty() {
        info.mnemonic.to_string()
    } else {
        format!("{} {}", info.mnemonic, ops)
    };
    if info.has_rm && inst.rm != RM_DYN {
        text.push_str(", ");
        text.push_str(RM_NAMES[inst.rm as usize]);
    }
    text
}

pub fn disassemble_word(word: u32) -> String {
    match decode(word) {
        Ok(inst) => disassemble(&inst),
        Err(_) => format!(".word 0x{word:08x}"),
    }
}

/// Machine-readable encoding table, one row per instruction.
pub fn encoding_table_csv() -> String {
    let mut out = String::from("mnemonic,format,opcode,funct3,funct7,fmt,rs2,rd,rs1,rs2_reg,rs3,match,mask\n");
    let hex = |v: Option<u32>| v.map(|v| format!("0x{v:02x}")).unwrap_or_else(|| "-".into());
    let file = |f: Option<RegFile>| f.map(|f| f.prefix().to_string()).unwrap_or_else(|| "-".into());
    for info in OP_TABLE {
        let funct3 = if info.has_rm { None } else { info.funct3() };
        let rs2_fixed = if info.format == Format::R && info.rs2.is_none() && info.syntax != Syntax::Shift {
            info.fixed_rs2()
        } else {
            None
        };
        out.push_str(&format!(
            "{},{},0x{:02x},{},{},{},{},{},{},{},{},0x{:08x},0x{:08x}\n",
            info.mnemonic,
            info.format,
            info.opcode(),
            hex(funct3),
            hex(info.funct7()),
            info.fmt().map(|f| format!("{f:02b}")).unwrap_or_else(|| "-".into()),
            hex(rs2_fixed),
            file(info.rd),
            file(info.rs1),
            file(info.rs2),
            file(info.rs3),
            info.match_bits,
            info.mask
        ));
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct AsmError {
    pub line: usize,
    pub message: String,
}

/// Output of the assembler.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub base: u32,
    pub words: Vec<u32>,
    pub labels: BTreeMap<String, u32>,
    /// Source line of each emitted word (1-based).
    pub lines: Vec<usize>,
}

impl Program {
    pub fn bytes(&self) -> Vec<u8> {
        self.words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub fn end(&self) -> u32 {
        self.base + 4 * self.words.len() as u32
    }

    pub fn label(&self, name: &str) -> Option<u32> {
        self.labels.get(name).copied()
    }
}

pub fn assemble(text: &str) -> Result<Program, AsmError> {
    assemble_at(text, 0)
}

/// One source statement after label stripping.
struct Stmt<'a> {
    line: usize,
    addr: u32,
    mnemonic: String,
    args: Vec<&'a str>,
}

fn strip_comment(line: &str) -> &str {
    let mut end = line.len();
    for pat in ["#", ";", "//"] {
        if let Some(i) = line.find(pat) {
            end = end.min(i);
        }
    }
    &line[..end]
}

fn split_args(rest: &str) -> Vec<&str> {
    let rest = rest.trim();
    if rest.is_empty() {
        return Vec::new();
    }
    rest.split(',').map(str::trim).collect()
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$')
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(&h.replace('_', ""), 16).ok()?
    } else if let Some(b) = body.strip_prefix("0b") {
        i64::from_str_radix(&b.replace('_', ""), 2).ok()?
    } else {
        body.replace('_', "").parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

/// Number of words a statement occupies.
fn stmt_size(mnemonic: &str, args: &[&str], line: usize) -> Result<u32, AsmError> {
    Ok(match mnemonic {
        ".word" | ".float" => args.len() as u32,
        ".zero" | ".space" => {
            let n = args
                .first()
                .and_then(|a| parse_int(a))
                .filter(|&n| n >= 0 && n % 4 == 0)
                .ok_or_else(|| err(line, "expected a non-negative byte count divisible by 4"))?;
            (n / 4) as u32
        }
        ".text" | ".data" | ".globl" | ".global" | ".section" | ".align" | ".p2align" => 0,
        "la" | "call" | "tail" => 2,
        "li" => {
            let v = args
                .get(1)
                .and_then(|a| parse_int(a))
                .ok_or_else(|| err(line, "li expects a register and an integer"))?;
            if (-2048..=2047).contains(&v) {
                1
            } else {
                2
            }
        }
        _ => 1,
    })
}

fn err(line: usize, message: impl Into<String>) -> AsmError {
    AsmError {
        line,
        message: message.into(),
    }
}

/// Assembles `text` as if loaded at `base`.
pub fn assemble_at(text: &str, base: u32) -> Result<Program, AsmError> {
    let mut labels = BTreeMap::new();
    let mut stmts = Vec::new();
    let mut addr = base;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut rest = strip_comment(raw).trim();
        while let Some(colon) = rest.find(':') {
            let name = rest[..colon].trim();
            if !is_ident(name) {
                break;
            }
            if labels.insert(name.to_string(), addr).is_some() {
                return Err(err(line, format!("duplicate label `{name}`")));
            }
            rest = rest[colon + 1..].trim();
        }
        if rest.is_empty() {
            continue;
        }
        let (mnemonic, operands) = match rest.find(char::is_whitespace) {
            Some(i) => (&rest[..i], &rest[i..]),
            None => (rest, ""),
        };
        let mnemonic = mnemonic.to_ascii_lowercase();
        let args = split_args(operands);
        let size = stmt_size(&mnemonic, &args, line)?;
        stmts.push(Stmt {
            line,
            addr,
            mnemonic,
            args,
        });
        addr += 4 * size;
    }

    let mut program = Program {
        base,
        words: Vec::new(),
        labels,
        lines: Vec::new(),
    };
    for stmt in &stmts {
        let words = assemble_stmt(stmt, &program.labels)?;
        debug_assert_eq!(
            4 * words.len() as u32,
            4 * stmt_size(&stmt.mnemonic, &stmt.args, stmt.line).unwrap()
        );
        program.lines.extend(std::iter::repeat_n(stmt.line, words.len()));
        program.words.extend(words);
    }
    Ok(program)
}

struct Ctx<'a> {
    line: usize,
    addr: u32,
    labels: &'a BTreeMap<String, u32>,
}

impl Ctx<'_> {
    fn reg(&self, file: RegFile, s: &str) -> Result<u8, AsmError> {
        parse_reg(file, s).ok_or_else(|| {
            let expected = match file {
                RegFile::X => "integer",
                RegFile::F => "float",
                RegFile::P => "posit",
            };
            err(self.line, format!("expected {expected} register, found `{s}`"))
        })
    }

    fn imm(&self, s: &str) -> Result<i64, AsmError> {
        if let Some(v) = parse_int(s) {
            return Ok(v);
        }
        if let Some(&addr) = self.labels.get(s.trim()) {
            return Ok(addr as i64);
        }
        Err(err(self.line, format!("expected an immediate, found `{s}`")))
    }

    /// Label (absolute) or numeric (already pc-relative) target.
    fn target(&self, s: &str) -> Result<i64, AsmError> {
        let s = s.trim();
        if let Some(v) = parse_int(s) {
            return Ok(v);
        }
        match self.labels.get(s) {
            Some(&addr) => Ok(addr as i64 - self.addr as i64),
            None if is_ident(s) => Err(err(self.line, format!("undefined label `{s}`"))),
            None => Err(err(self.line, format!("expected a branch target, found `{s}`"))),
        }
    }

    /// `imm(reg)`, `(reg)` or `label`.
    fn mem(&self, s: &str) -> Result<(i64, u8), AsmError> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| err(self.line, format!("expected offset(register), found `{s}`")))?;
        if !s.ends_with(')') {
            return Err(err(self.line, format!("expected offset(register), found `{s}`")));
        }
        let off = s[..open].trim();
        let reg = self.reg(RegFile::X, &s[open + 1..s.len() - 1])?;
        let off = if off.is_empty() { 0 } else { self.imm(off)? };
        Ok((off, reg))
    }
}

fn want(args: &[&str], n: usize, ctx: &Ctx, mnemonic: &str) -> Result<(), AsmError> {
    if args.len() != n {
        return Err(err(
            ctx.line,
            format!("`{mnemonic}` expects {n} operand(s), found {}", args.len()),
        ));
    }
    Ok(())
}

fn finish(inst: Instruction, ctx: &Ctx) -> Result<u32, AsmError> {
    encode(&inst).map_err(|e| err(ctx.line, e.to_string()))
}

fn hi_lo(value: i64) -> (i32, i32) {
    let v = value as i32;
    let lo = (v << 20) >> 20;
    let hi = v.wrapping_sub(lo) as u32 & 0xFFFF_F000;
    (hi as i32, lo)
}

fn assemble_stmt(stmt: &Stmt, labels: &BTreeMap<String, u32>) -> Result<Vec<u32>, AsmError> {
    let ctx = Ctx {
        line: stmt.line,
        addr: stmt.addr,
        labels,
    };
    let args = &stmt.args[..];
    let m = stmt.mnemonic.as_str();
    let x = |s: &str| ctx.reg(RegFile::X, s);
    let one = |inst: Instruction| finish(inst, &ctx).map(|w| vec![w]);

    match m {
        ".text" | ".data" | ".globl" | ".global" | ".section" | ".align" | ".p2align" => return Ok(vec![]),
        ".word" => {
            return args
                .iter()
                .map(|a| {
                    let v = ctx.imm(a)?;
                    if v < i32::MIN as i64 || v > u32::MAX as i64 {
                        return Err(err(ctx.line, format!("`{a}` does not fit in 32 bits")));
                    }
                    Ok(v as u32)
                })
                .collect()
        }
        ".float" => {
            return args
                .iter()
                .map(|a| {
                    a.parse::<f32>()
                        .map(f32::to_bits)
                        .map_err(|_| err(ctx.line, format!("expected a float, found `{a}`")))
                })
                .collect()
        }
        ".zero" | ".space" => {
            let n = stmt_size(m, args, ctx.line)?;
            return Ok(vec![0; n as usize]);
        }
        "nop" => {
            want(args, 0, &ctx, m)?;
            return one(Instruction::new(Op::Addi));
        }
        "halt" => {
            want(args, 0, &ctx, m)?;
            return one(Instruction::new(Op::Ebreak));
        }
        "mv" => {
            want(args, 2, &ctx, m)?;
            return one(Instruction::new(Op::Addi).rd(x(args[0])?).rs1(x(args[1])?));
        }
        "not" => {
            want(args, 2, &ctx, m)?;
            return one(Instruction::new(Op::Xori).rd(x(args[0])?).rs1(x(args[1])?).imm(-1));
        }
        "neg" => {
            want(args, 2, &ctx, m)?;
            return one(Instruction::new(Op::Sub).rd(x(args[0])?).rs2(x(args[1])?));
        }
        "seqz" => {
            want(args, 2, &ctx, m)?;
            return one(Instruction::new(Op::Sltiu).rd(x(args[0])?).rs1(x(args[1])?).imm(1));
        }
        "snez" => {
            want(args, 2, &ctx, m)?;
            return one(Instruction::new(Op::Sltu).rd(x(args[0])?).rs2(x(args[1])?));
        }
        "li" => {
            want(args, 2, &ctx, m)?;
            let rd = x(args[0])?;
            let v = parse_int(args[1]).ok_or_else(|| err(ctx.line, "li expects an integer"))?;
            if v < i32::MIN as i64 || v > u32::MAX as i64 {
                return Err(err(ctx.line, format!("`{}` does not fit in 32 bits", args[1])));
            }
            if (-2048..=2047).contains(&v) {
                return one(Instruction::new(Op::Addi).rd(rd).imm(v as i32));
            }
            let (hi, lo) = hi_lo(v);
            return Ok(vec![
                finish(Instruction::new(Op::Lui).rd(rd).imm(hi), &ctx)?,
                finish(Instruction::new(Op::Addi).rd(rd).rs1(rd).imm(lo), &ctx)?,
            ]);
        }
        "la" => {
            want(args, 2, &ctx, m)?;
            let rd = x(args[0])?;
            let addr = ctx.imm(args[1])?;
            let (hi, lo) = hi_lo(addr);
            return Ok(vec![
                finish(Instruction::new(Op::Lui).rd(rd).imm(hi), &ctx)?,
                finish(Instruction::new(Op::Addi).rd(rd).rs1(rd).imm(lo), &ctx)?,
            ]);
        }
        "call" | "tail" => {
            want(args, 1, &ctx, m)?;
            // auipc + jalr reaches any address.
            let off = ctx.target(args[0])?;
            let (hi, lo) = hi_lo(off);
            let (link, scratch) = if m == "call" { (1, 1) } else { (0, 6) };
            return Ok(vec![
                finish(Instruction::new(Op::Auipc).rd(scratch).imm(hi), &ctx)?,
                finish(Instruction::new(Op::Jalr).rd(link).rs1(scratch).imm(lo), &ctx)?,
            ]);
        }
        "j" => {
            want(args, 1, &ctx, m)?;
            return one(Instruction::new(Op::Jal).imm(ctx.target(args[0])? as i32));
        }
        "jr" => {
            want(args, 1, &ctx, m)?;
            return one(Instruction::new(Op::Jalr).rs1(x(args[0])?));
        }
        "ret" => {
            want(args, 0, &ctx, m)?;
            return one(Instruction::new(Op::Jalr).rs1(1));
        }
        "beqz" | "bnez" | "bltz" | "bgez" | "blez" | "bgtz" => {
            want(args, 2, &ctx, m)?;
            let r = x(args[0])?;
            let off = ctx.target(args[1])? as i32;
            let (op, rs1, rs2) = match m {
                "beqz" => (Op::Beq, r, 0),
                "bnez" => (Op::Bne, r, 0),
                "bltz" => (Op::Blt, r, 0),
                "bgez" => (Op::Bge, r, 0),
                "blez" => (Op::Bge, 0, r),
                _ => (Op::Blt, 0, r),
            };
            return one(Instruction::new(op).rs1(rs1).rs2(rs2).imm(off));
        }
        "bgt" | "ble" | "bgtu" | "bleu" => {
            want(args, 3, &ctx, m)?;
            let a = x(args[0])?;
            let b = x(args[1])?;
            let off = ctx.target(args[2])? as i32;
            let op = match m {
                "bgt" => Op::Blt,
                "ble" => Op::Bge,
                "bgtu" => Op::Bltu,
                _ => Op::Bgeu,
            };
            return one(Instruction::new(op).rs1(b).rs2(a).imm(off));
        }
        "fmv.s" | "fneg.s" | "fabs.s" => {
            want(args, 2, &ctx, m)?;
            let rd = ctx.reg(RegFile::F, args[0])?;
            let rs = ctx.reg(RegFile::F, args[1])?;
            let op = match m {
                "fmv.s" => Op::FsgnjS,
                "fneg.s" => Op::FsgnjnS,
                _ => Op::FsgnjxS,
            };
            return one(Instruction::new(op).rd(rd).rs1(rs).rs2(rs));
        }
        _ => {}
    }

    let op = Op::from_mnemonic(m).ok_or_else(|| err(ctx.line, format!("unknown mnemonic `{m}`")))?;
    let info = op.info();
    let mut inst = Instruction::new(op);
    let mut args: Vec<&str> = args.to_vec();

    if info.has_rm {
        if let Some(last) = args.last() {
            if let Some(rm) = RM_NAMES.iter().position(|n| !n.is_empty() && n == last) {
                inst.rm = rm as u8;
                args.pop();
            }
        }
    }
    let rf = |f: Option<RegFile>| f.unwrap_or(RegFile::X);

    match info.syntax {
        Syntax::Bare => want(&args, 0, &ctx, m)?,
        Syntax::Rd => {
            want(&args, 1, &ctx, m)?;
            inst.rd = ctx.reg(rf(info.rd), args[0])?;
        }
        Syntax::Rs1 => {
            want(&args, 1, &ctx, m)?;
            inst.rs1 = ctx.reg(rf(info.rs1), args[0])?;
        }
        Syntax::Rs1Rs2 => {
            want(&args, 2, &ctx, m)?;
            inst.rs1 = ctx.reg(rf(info.rs1), args[0])?;
            inst.rs2 = ctx.reg(rf(info.rs2), args[1])?;
        }
        Syntax::RdRs1 => {
            want(&args, 2, &ctx, m)?;
            inst.rd = ctx.reg(rf(info.rd), args[0])?;
            inst.rs1 = ctx.reg(rf(info.rs1), args[1])?;
        }
        Syntax::RdRs1Rs2 => {
            want(&args, 3, &ctx, m)?;
            inst.rd = ctx.reg(rf(info.rd), args[0])?;
            inst.rs1 = ctx.reg(rf(info.rs1), args[1])?;
            inst.rs2 = ctx.reg(rf(info.rs2), args[2])?;
        }
        Syntax::RdRs1Rs2Rs3 => {
            want(&args, 4, &ctx, m)?;
            inst.rd = ctx.reg(rf(info.rd), args[0])?;
            inst.rs1 = ctx.reg(rf(info.rs1), args[1])?;
            inst.rs2 = ctx.reg(rf(info.rs2), args[2])?;
            inst.rs3 = ctx.reg(rf(info.rs3), args[3])?;
        }
        Syntax::RdRs1Imm | Syntax::Shift => {
            want(&args, 3, &ctx, m)?;
            inst.rd = ctx.reg(rf(info.rd), args[0])?;
            inst.rs1 = ctx.reg(rf(info.rs1), args[1])?;
            inst.imm = ctx.imm(args[2])? as i32;
        }
        Syntax::Load => {
            // jalr also accepts `jalr rs1` and `jalr rd, rs1, imm`.
            if op == Op::Jalr && args.len() == 1 {
                inst.rd = 1;
                inst.rs1 = x(args[0])?;
            } else if op == Op::Jalr && args.len() == 3 {
                inst.rd = x(args[0])?;
                inst.rs1 = x(args[1])?;
                inst.imm = ctx.imm(args[2])? as i32;
            } else {
                want(&args, 2, &ctx, m)?;
                inst.rd = ctx.reg(rf(info.rd), args[0])?;
                let (off, base) = ctx.mem(args[1])?;
                inst.rs1 = base;
                inst.imm = off as i32;
            }
        }
        Syntax::Store => {
            want(&args, 2, &ctx, m)?;
            inst.rs2 = ctx.reg(rf(info.rs2), args[0])?;
            let (off, base) = ctx.mem(args[1])?;
            inst.rs1 = base;
            inst.imm = off as i32;
        }
        Syntax::Branch => {
            want(&args, 3, &ctx, m)?;
            inst.rs1 = x(args[0])?;
            inst.rs2 = x(args[1])?;
            inst.imm = ctx.target(args[2])? as i32;
        }
        Syntax::Upper => {
            want(&args, 2, &ctx, m)?;
            inst.rd = x(args[0])?;
            let v = ctx.imm(args[1])?;
            if !(0..=0xFFFFF).contains(&v) {
                return Err(err(ctx.line, format!("upper immediate `{}` out of range", args[1])));
            }
            inst.imm = ((v as u32) << 12) as i32;
        }
        Syntax::Jump => {
            if args.len() == 1 {
                inst.rd = 1;
                inst.imm = ctx.target(args[0])? as i32;
            } else {
                want(&args, 2, &ctx, m)?;
                inst.rd = x(args[0])?;
                inst.imm = ctx.target(args[1])? as i32;
            }
        }
    }
    one(inst)
}

/// Disassembles a whole program, one instruction per line.
pub fn disassemble_program(words: &[u32]) -> String {
    let mut out = String::new();
    for &w in words {
        out.push_str(&disassemble_word(w));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_in_enum_order() {
        for (i, info) in OP_TABLE.iter().enumerate() {
            assert_eq!(info.op as usize, i, "{}", info.mnemonic);
        }
    }

    #[test]
    fn no_two_rows_overlap() {
        for (i, a) in OP_TABLE.iter().enumerate() {
            for b in &OP_TABLE[i + 1..] {
                let common = a.mask & b.mask;
                assert_ne!(
                    a.match_bits & common,
                    b.match_bits & common,
                    "{} overlaps {}",
                    a.mnemonic,
                    b.mnemonic
                );
            }
        }
    }

    #[test]
    fn standard_encodings() {
        let w = |s: &str| assemble(s).unwrap().words[0];
        assert_eq!(w("addi x1, x0, 5"), 0x0050_0093);
        assert_eq!(w("add a0, a1, a2"), 0x00C5_8533);
        assert_eq!(w("lw t0, 8(sp)"), 0x0081_2283);
        assert_eq!(w("sw t0, -4(sp)"), 0xFE51_2E23);
        assert_eq!(w("flw ft0, 0(a0)"), 0x0005_2007);
        assert_eq!(w("fmadd.s f1, f2, f3, f4"), 0x2031_70C3);
        assert_eq!(w("fadd.s f1, f2, f3, rne"), 0x0031_00D3);
        assert_eq!(w("ebreak"), 0x0010_0073);
        assert_eq!(w("rdcycle a0"), 0xC000_2573);
        assert_eq!(w("lui a0, 0x12345"), 0x1234_5537);
    }

    #[test]
    fn branches_resolve_labels() {
        let p = assemble("top: addi a0, a0, -1\n bnez a0, top\n j done\n nop\ndone: halt").unwrap();
        assert_eq!(decode(p.words[1]).unwrap().imm, -4);
        assert_eq!(decode(p.words[2]).unwrap().imm, 8);
        assert_eq!(p.label("done"), Some(16));
    }

    #[test]
    fn li_picks_size() {
        assert_eq!(assemble("li a0, 100").unwrap().words.len(), 1);
        let p = assemble("li a0, 0x12345FFF").unwrap();
        assert_eq!(p.words.len(), 2);
        let hi = decode(p.words[0]).unwrap().imm;
        let lo = decode(p.words[1]).unwrap().imm;
        assert_eq!(hi.wrapping_add(lo), 0x12345FFF);
    }

    #[test]
    fn rounding_modes_5_and_6_are_illegal() {
        let base = assemble("fadd.s f1, f2, f3").unwrap().words[0];
        for rm in 0..8u32 {
            let w = (base & !0x7000) | (rm << 12);
            assert_eq!(decode(w).is_ok(), rm != 5 && rm != 6, "rm {rm}");
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = assemble("nop\n\nfoo x1").unwrap_err();
        assert_eq!(e.line, 3);
        let e = assemble("beq x1, x2, nowhere").unwrap_err();
        assert!(e.message.contains("undefined label"));
        let e = assemble("fma.p x1, p2").unwrap_err();
        assert!(e.message.contains("posit register"));
        let e = assemble("a: nop\na: nop").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn empty_program() {
        let p = assemble("  # nothing here\n\n").unwrap();
        assert!(p.words.is_empty());
    }

    #[test]
    fn data_directives() {
        let p = assemble(".word 1, -1, 0xdeadbeef\n.float 1.5\n.zero 8").unwrap();
        assert_eq!(p.words, vec![1, 0xFFFF_FFFF, 0xDEAD_BEEF, 0x3FC0_0000, 0, 0]);
    }
}
