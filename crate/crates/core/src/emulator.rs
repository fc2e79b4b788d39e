//! Instruction-level RV32IMF machine with a posit register file, a quire
//! behind the [`Melodica`] model, and per-category cycle accounting.
//!
//! Timing is a scoreboard: an instruction issues once its source registers
//! are ready, then occupies the core for a fixed number of cycles. The stall
//! and the occupancy are both charged to the instruction's category, so the
//! ledger always sums to the cycle counter.

use std::fmt;

use thiserror::Error;

use crate::isa::{self, Illegal, Instruction, Op, Program, RM_DYN};
use crate::melodica::{Command, LatencyModel, Melodica, Opcode, Output, QuireCounts};
use crate::posit::{PositBits, PositConfig};

/// Cycle categories of the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    FloatCompute,
    FloatLdSt,
    PositCompute,
    Interop,
    PositLdSt,
    Others,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::FloatCompute,
        Category::FloatLdSt,
        Category::PositCompute,
        Category::Interop,
        Category::PositLdSt,
        Category::Others,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::FloatCompute => "float compute",
            Category::FloatLdSt => "float ld/st",
            Category::PositCompute => "posit compute",
            Category::Interop => "float-posit interop",
            Category::PositLdSt => "posit ld/st",
            Category::Others => "others",
        }
    }

    pub fn of(op: Op) -> Category {
        use Op::*;
        match op {
            Flw | Fsw => Category::FloatLdSt,
            FmaddS | FmsubS | FnmsubS | FnmaddS | FaddS | FsubS | FmulS | FdivS | FsqrtS | FsgnjS | FsgnjnS
            | FsgnjxS | FminS | FmaxS | FcvtWS | FcvtWuS | FmvXW | FclassS | FeqS | FltS | FleS | FcvtSW
            | FcvtSWu | FmvWX => Category::FloatCompute,
            FmaP | FmsP | FdaP | FdsP | FcvtRP | FcvtPR => Category::PositCompute,
            FcvtPS | FcvtSP | PmvWX | PmvXW => Category::Interop,
            Plw | Psw => Category::PositLdSt,
            _ => Category::Others,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Cycle totals per category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CycleLedger {
    totals: [u64; 6],
}

impl CycleLedger {
    pub fn get(&self, c: Category) -> u64 {
        self.totals[c as usize]
    }

    pub fn add(&mut self, c: Category, cycles: u64) {
        self.totals[c as usize] += cycles;
    }

    fn transfer(&mut self, from: Category, to: Category, cycles: u64) {
        self.totals[from as usize] -= cycles;
        self.totals[to as usize] += cycles;
    }

    pub fn total(&self) -> u64 {
        self.totals.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Category, u64)> + '_ {
        Category::ALL.iter().map(|&c| (c, self.get(c)))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,cycles\n");
        for (c, v) in self.iter() {
            out.push_str(&format!("{},{}\n", c.name(), v));
        }
        out.push_str(&format!("total,{}\n", self.total()));
        out
    }
}

impl fmt::Display for CycleLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, v) in self.iter() {
            writeln!(f, "{:<22}{:>12}", c.name(), v)?;
        }
        write!(f, "{:<22}{:>12}", "total", self.total())
    }
}

/// Core-side costs of the non-posit instructions. Posit instruction costs
/// come from the Melodica model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreTiming {
    pub alu: u64,
    pub mul: u64,
    pub div: u64,
    pub mem: u64,
    /// Occupancy and result latency of FMADD/FADD/FMUL.
    pub fpu_occupancy: u64,
    pub fpu_result: u64,
    pub fdiv_occupancy: u64,
    pub fdiv_result: u64,
    /// Moves, compares, sign injection and int/float conversions.
    pub fpu_simple: u64,
    pub pmv: u64,
}

impl Default for CoreTiming {
    fn default() -> Self {
        CoreTiming {
            alu: 1,
            mul: 2,
            div: 33,
            mem: 2,
            fpu_occupancy: 12,
            fpu_result: 14,
            fdiv_occupancy: 24,
            fdiv_result: 26,
            fpu_simple: 2,
            pmv: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineConfig {
    pub posit: PositConfig,
    pub memory_size: usize,
    pub latency: LatencyModel,
    pub timing: CoreTiming,
    pub trace: bool,
}

impl MachineConfig {
    pub fn new(posit: PositConfig) -> Self {
        MachineConfig {
            posit,
            memory_size: 1 << 20,
            latency: LatencyModel::for_config(posit),
            timing: CoreTiming::default(),
            trace: false,
        }
    }

    pub fn memory_size(mut self, bytes: usize) -> Self {
        self.memory_size = bytes;
        self
    }

    pub fn latency(mut self, latency: LatencyModel) -> Self {
        self.latency = latency;
        self
    }

    pub fn trace(mut self, on: bool) -> Self {
        self.trace = on;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Trap {
    #[error("pc 0x{pc:08x}: {source}")]
    Illegal { pc: u32, source: Illegal },
    #[error("pc 0x{pc:08x}: misaligned {width}-byte access at 0x{addr:08x}")]
    Misaligned { pc: u32, addr: u32, width: u32 },
    #[error("pc 0x{pc:08x}: access at 0x{addr:08x} outside memory")]
    OutOfBounds { pc: u32, addr: u32 },
    #[error("pc 0x{pc:08x}: rounding mode {rm} is not supported by {op}")]
    RoundingMode { pc: u32, op: Op, rm: u8 },
    #[error("posit width {0} does not fit the 32-bit register files")]
    Width(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Halt {
    /// `ebreak` (the assembler's `halt`).
    Breakpoint,
    Ecall,
    /// A jump to itself.
    SelfLoop,
    /// The pc ran off the end of the loaded program.
    EndOfProgram,
    /// The instruction budget ran out first.
    Budget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub pc: u32,
    pub inst: Instruction,
    pub category: Category,
    pub cost: u64,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:08x}  {:<32} {:<20} {}",
            self.pc,
            isa::disassemble(&self.inst),
            self.category.name(),
            self.cost
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub halt: Halt,
    pub instructions: u64,
    pub cycles: u64,
    pub ledger: CycleLedger,
}

/// A pending integer load whose value may turn out to be posit data.
#[derive(Debug, Clone, Copy)]
struct PendingLoad {
    cost: u64,
    trace_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Machine {
    config: MachineConfig,
    pub pc: u32,
    gpr: [u32; 32],
    fpr: [u32; 32],
    prf: [u64; 32],
    melodica: Melodica,
    memory: Vec<u8>,
    cycles: u64,
    retired: u64,
    ledger: CycleLedger,
    trace: Vec<TraceEntry>,
    ready_x: [u64; 32],
    ready_f: [u64; 32],
    ready_p: [u64; 32],
    code_end: Option<u32>,
    halted: Option<Halt>,
    pending_loads: [Option<PendingLoad>; 32],
    from_pmv: [bool; 32],
}

impl Machine {
    pub fn new(config: MachineConfig) -> Result<Self, Trap> {
        if config.posit.n() > 32 {
            return Err(Trap::Width(config.posit.n()));
        }
        Ok(Machine {
            config,
            pc: 0,
            gpr: [0; 32],
            fpr: [0; 32],
            prf: [0; 32],
            melodica: Melodica::with_latency(config.posit, config.latency),
            memory: vec![0; config.memory_size],
            cycles: 0,
            retired: 0,
            ledger: CycleLedger::default(),
            trace: Vec::new(),
            ready_x: [0; 32],
            ready_f: [0; 32],
            ready_p: [0; 32],
            code_end: None,
            halted: None,
            pending_loads: [None; 32],
            from_pmv: [false; 32],
        })
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    /// Copies the program into memory and points the pc at its first word.
    pub fn load_program(&mut self, program: &Program) -> Result<(), Trap> {
        self.write_bytes(program.base, &program.bytes())?;
        self.pc = program.base;
        self.code_end = Some(program.end());
        self.halted = None;
        Ok(())
    }

    pub fn write_bytes(&mut self, addr: u32, bytes: &[u8]) -> Result<(), Trap> {
        let start = addr as usize;
        let end = start + bytes.len();
        if end > self.memory.len() {
            return Err(Trap::OutOfBounds { pc: self.pc, addr: end as u32 });
        }
        self.memory[start..end].copy_from_slice(bytes);
        Ok(())
    }

    pub fn read_bytes(&self, addr: u32, len: usize) -> Option<&[u8]> {
        self.memory.get(addr as usize..addr as usize + len)
    }

    pub fn write_words(&mut self, addr: u32, words: &[u32]) -> Result<(), Trap> {
        let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        self.write_bytes(addr, &bytes)
    }

    /// Stores posit patterns in their memory image (1, 2 or 4 bytes each).
    pub fn write_posits(&mut self, addr: u32, values: &[PositBits]) -> Result<(), Trap> {
        let width = self.config.posit.storage_bytes() as usize;
        let mut bytes = Vec::with_capacity(values.len() * width);
        for v in values {
            bytes.extend_from_slice(&v.pattern().to_le_bytes()[..width]);
        }
        self.write_bytes(addr, &bytes)
    }

    pub fn read_posit(&self, addr: u32) -> Option<PositBits> {
        let width = self.config.posit.storage_bytes() as usize;
        let bytes = self.read_bytes(addr, width)?;
        let mut buf = [0u8; 8];
        buf[..width].copy_from_slice(bytes);
        Some(PositBits::new(u64::from_le_bytes(buf), self.config.posit))
    }

    pub fn read_word(&self, addr: u32) -> Option<u32> {
        self.read_bytes(addr, 4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn gpr(&self, i: usize) -> u32 {
        self.gpr[i]
    }

    pub fn set_gpr(&mut self, i: usize, v: u32) {
        if i != 0 {
            self.gpr[i] = v;
        }
    }

    pub fn fpr(&self, i: usize) -> f32 {
        f32::from_bits(self.fpr[i])
    }

    pub fn fpr_bits(&self, i: usize) -> u32 {
        self.fpr[i]
    }

    pub fn set_fpr(&mut self, i: usize, v: f32) {
        self.fpr[i] = v.to_bits();
    }

    pub fn prf(&self, i: usize) -> PositBits {
        PositBits::new(self.prf[i], self.config.posit)
    }

    pub fn set_prf(&mut self, i: usize, v: PositBits) {
        self.prf[i] = v.pattern() & self.config.posit.mask();
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn retired(&self) -> u64 {
        self.retired
    }

    pub fn ledger(&self) -> &CycleLedger {
        &self.ledger
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn quire_counts(&self) -> QuireCounts {
        self.melodica.counts()
    }

    pub fn melodica(&self) -> &Melodica {
        &self.melodica
    }

    pub fn halted(&self) -> Option<Halt> {
        self.halted
    }

    /// Steps until a halt condition or until `max_instructions` have retired.
    pub fn run(&mut self, max_instructions: u64) -> Result<RunSummary, Trap> {
        let mut budget = max_instructions;
        let halt = loop {
            if let Some(h) = self.halted {
                break h;
            }
            if budget == 0 {
                break Halt::Budget;
            }
            self.step()?;
            budget -= 1;
        };
        Ok(RunSummary {
            halt,
            instructions: self.retired,
            cycles: self.cycles,
            ledger: self.ledger,
        })
    }

    fn fetch(&self) -> Result<u32, Trap> {
        let pc = self.pc;
        if !pc.is_multiple_of(4) {
            return Err(Trap::Misaligned { pc, addr: pc, width: 4 });
        }
        self.read_word(pc).ok_or(Trap::OutOfBounds { pc, addr: pc })
    }

    /// Executes one instruction. Returns the halt reason once the machine
    /// stops.
    pub fn step(&mut self) -> Result<Option<Halt>, Trap> {
        if let Some(h) = self.halted {
            return Ok(Some(h));
        }
        if self.code_end == Some(self.pc) {
            self.halted = Some(Halt::EndOfProgram);
            return Ok(self.halted);
        }
        let pc = self.pc;
        let word = self.fetch()?;
        let inst = isa::decode(word).map_err(|source| Trap::Illegal { pc, source })?;
        self.execute(pc, inst)?;
        self.retired += 1;
        Ok(self.halted)
    }

    fn ready_of(&self, inst: &Instruction) -> u64 {
        let info = inst.info();
        let mut t = 0;
        for (file, r) in [(info.rs1, inst.rs1), (info.rs2, inst.rs2), (info.rs3, inst.rs3)] {
            t = t.max(match file {
                Some(isa::RegFile::X) => self.ready_x[r as usize],
                Some(isa::RegFile::F) => self.ready_f[r as usize],
                Some(isa::RegFile::P) => self.ready_p[r as usize],
                None => 0,
            });
        }
        t
    }

    fn addr(&self, inst: &Instruction) -> u32 {
        self.gpr[inst.rs1 as usize].wrapping_add(inst.imm as u32)
    }

    fn check(&self, pc: u32, addr: u32, width: u32) -> Result<usize, Trap> {
        if !addr.is_multiple_of(width) {
            return Err(Trap::Misaligned { pc, addr, width });
        }
        let a = addr as usize;
        if a + width as usize > self.memory.len() {
            return Err(Trap::OutOfBounds { pc, addr });
        }
        Ok(a)
    }

    fn load(&self, pc: u32, addr: u32, width: u32) -> Result<u64, Trap> {
        let a = self.check(pc, addr, width)?;
        let mut buf = [0u8; 8];
        buf[..width as usize].copy_from_slice(&self.memory[a..a + width as usize]);
        Ok(u64::from_le_bytes(buf))
    }

    fn store(&mut self, pc: u32, addr: u32, width: u32, value: u64) -> Result<(), Trap> {
        let a = self.check(pc, addr, width)?;
        self.memory[a..a + width as usize].copy_from_slice(&value.to_le_bytes()[..width as usize]);
        Ok(())
    }

    fn write_x(&mut self, r: u8, v: u32, ready: u64) {
        let r = r as usize;
        if r != 0 {
            self.gpr[r] = v;
            self.ready_x[r] = ready;
        }
        self.pending_loads[r] = None;
        self.from_pmv[r] = false;
    }

    fn write_f(&mut self, r: u8, v: u32, ready: u64) {
        self.fpr[r as usize] = v;
        self.ready_f[r as usize] = ready;
    }

    fn write_p(&mut self, r: u8, v: u64, ready: u64) {
        self.prf[r as usize] = v & self.config.posit.mask();
        self.ready_p[r as usize] = ready;
    }

    fn issue_command(&mut self, cmd: Command, at: u64) -> crate::melodica::Response {
        self.melodica
            .execute(cmd, at)
            .expect("the decoder only builds well-formed commands")
    }

    fn execute(&mut self, pc: u32, inst: Instruction) -> Result<(), Trap> {
        use Op::*;
        let t = self.config.timing;
        let issue = self.cycles.max(self.ready_of(&inst));
        let x1 = self.gpr[inst.rs1 as usize];
        let x2 = self.gpr[inst.rs2 as usize];
        let f1 = f32::from_bits(self.fpr[inst.rs1 as usize]);
        let f2 = f32::from_bits(self.fpr[inst.rs2 as usize]);
        let f3 = f32::from_bits(self.fpr[inst.rs3 as usize]);
        let mut next_pc = pc.wrapping_add(4);
        let mut category = Category::of(inst.op);
        let mut block_end = false;
        let mut pending: Option<u8> = None;

        // (occupancy, result latency)
        let (occupancy, result) = match inst.op {
            Lui => {
                self.write_x(inst.rd, inst.imm as u32, issue + t.alu);
                (t.alu, t.alu)
            }
            Auipc => {
                self.write_x(inst.rd, pc.wrapping_add(inst.imm as u32), issue + t.alu);
                (t.alu, t.alu)
            }
            Jal | Jalr => {
                let target = if inst.op == Jal {
                    pc.wrapping_add(inst.imm as u32)
                } else {
                    x1.wrapping_add(inst.imm as u32) & !1
                };
                self.write_x(inst.rd, pc.wrapping_add(4), issue + t.alu);
                if target == pc {
                    self.halted = Some(Halt::SelfLoop);
                }
                next_pc = target;
                block_end = true;
                (t.alu, t.alu)
            }
            Beq | Bne | Blt | Bge | Bltu | Bgeu => {
                let taken = match inst.op {
                    Beq => x1 == x2,
                    Bne => x1 != x2,
                    Blt => (x1 as i32) < (x2 as i32),
                    Bge => (x1 as i32) >= (x2 as i32),
                    Bltu => x1 < x2,
                    _ => x1 >= x2,
                };
                if taken {
                    next_pc = pc.wrapping_add(inst.imm as u32);
                    if next_pc == pc {
                        self.halted = Some(Halt::SelfLoop);
                    }
                }
                block_end = true;
                (t.alu, t.alu)
            }
            Lb | Lh | Lw | Lbu | Lhu => {
                let addr = self.addr(&inst);
                let v = match inst.op {
                    Lb => self.load(pc, addr, 1)? as u8 as i8 as i32 as u32,
                    Lh => self.load(pc, addr, 2)? as u16 as i16 as i32 as u32,
                    Lw => self.load(pc, addr, 4)? as u32,
                    Lbu => self.load(pc, addr, 1)? as u32,
                    _ => self.load(pc, addr, 2)? as u32,
                };
                self.write_x(inst.rd, v, issue + t.mem);
                pending = Some(inst.rd);
                (t.mem, t.mem)
            }
            Sb | Sh | Sw => {
                let addr = self.addr(&inst);
                let width = match inst.op {
                    Sb => 1,
                    Sh => 2,
                    _ => 4,
                };
                self.store(pc, addr, width, x2 as u64)?;
                if self.from_pmv[inst.rs2 as usize] {
                    category = Category::PositLdSt;
                }
                (t.mem, t.mem)
            }
            Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai => {
                let imm = inst.imm as u32;
                let v = match inst.op {
                    Addi => x1.wrapping_add(imm),
                    Slti => ((x1 as i32) < inst.imm) as u32,
                    Sltiu => (x1 < imm) as u32,
                    Xori => x1 ^ imm,
                    Ori => x1 | imm,
                    Andi => x1 & imm,
                    Slli => x1 << (imm & 31),
                    Srli => x1 >> (imm & 31),
                    _ => ((x1 as i32) >> (imm & 31)) as u32,
                };
                self.write_x(inst.rd, v, issue + t.alu);
                (t.alu, t.alu)
            }
            Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And => {
                let v = match inst.op {
                    Add => x1.wrapping_add(x2),
                    Sub => x1.wrapping_sub(x2),
                    Sll => x1 << (x2 & 31),
                    Slt => ((x1 as i32) < (x2 as i32)) as u32,
                    Sltu => (x1 < x2) as u32,
                    Xor => x1 ^ x2,
                    Srl => x1 >> (x2 & 31),
                    Sra => ((x1 as i32) >> (x2 & 31)) as u32,
                    Or => x1 | x2,
                    _ => x1 & x2,
                };
                self.write_x(inst.rd, v, issue + t.alu);
                (t.alu, t.alu)
            }
            Mul | Mulh | Mulhsu | Mulhu => {
                let v = match inst.op {
                    Mul => x1.wrapping_mul(x2),
                    Mulh => ((x1 as i32 as i64 * x2 as i32 as i64) >> 32) as u32,
                    Mulhsu => ((x1 as i32 as i64 * x2 as u64 as i64) >> 32) as u32,
                    _ => ((x1 as u64 * x2 as u64) >> 32) as u32,
                };
                self.write_x(inst.rd, v, issue + t.mul);
                (t.mul, t.mul)
            }
            Div | Divu | Rem | Remu => {
                let (a, b) = (x1 as i32, x2 as i32);
                let v = match inst.op {
                    Div if b == 0 => u32::MAX,
                    Div => a.wrapping_div(b) as u32,
                    Divu if x2 == 0 => u32::MAX,
                    Divu => x1 / x2,
                    Rem if b == 0 => x1,
                    Rem => a.wrapping_rem(b) as u32,
                    _ if x2 == 0 => x1,
                    _ => x1 % x2,
                };
                self.write_x(inst.rd, v, issue + t.div);
                (t.div, t.div)
            }
            Ecall => {
                self.halted = Some(Halt::Ecall);
                (t.alu, t.alu)
            }
            Ebreak => {
                self.halted = Some(Halt::Breakpoint);
                (t.alu, t.alu)
            }
            Rdcycle => {
                self.write_x(inst.rd, issue as u32, issue + t.alu);
                (t.alu, t.alu)
            }
            Flw => {
                let v = self.load(pc, self.addr(&inst), 4)? as u32;
                self.write_f(inst.rd, v, issue + t.mem);
                (t.mem, t.mem)
            }
            Fsw => {
                let addr = self.addr(&inst);
                self.store(pc, addr, 4, self.fpr[inst.rs2 as usize] as u64)?;
                (t.mem, t.mem)
            }
            FmaddS | FmsubS | FnmsubS | FnmaddS | FaddS | FsubS | FmulS | FdivS | FsqrtS => {
                if inst.rm != 0 && inst.rm != RM_DYN {
                    return Err(Trap::RoundingMode { pc, op: inst.op, rm: inst.rm });
                }
                let v = match inst.op {
                    FmaddS => f1.mul_add(f2, f3),
                    FmsubS => f1.mul_add(f2, -f3),
                    FnmsubS => (-f1).mul_add(f2, f3),
                    FnmaddS => (-f1).mul_add(f2, -f3),
                    FaddS => f1 + f2,
                    FsubS => f1 - f2,
                    FmulS => f1 * f2,
                    FdivS => f1 / f2,
                    _ => f1.sqrt(),
                };
                let (occ, res) = if matches!(inst.op, FdivS | FsqrtS) {
                    (t.fdiv_occupancy, t.fdiv_result)
                } else {
                    (t.fpu_occupancy, t.fpu_result)
                };
                self.write_f(inst.rd, canonical(v), issue + res);
                (occ, res)
            }
            FsgnjS | FsgnjnS | FsgnjxS | FminS | FmaxS => {
                let (a, b) = (f1.to_bits(), f2.to_bits());
                let sign = 0x8000_0000;
                let v = match inst.op {
                    FsgnjS => (a & !sign) | (b & sign),
                    FsgnjnS => (a & !sign) | (!b & sign),
                    FsgnjxS => a ^ (b & sign),
                    FminS => fmin_max(f1, f2, true),
                    _ => fmin_max(f1, f2, false),
                };
                self.write_f(inst.rd, v, issue + t.fpu_simple);
                (t.fpu_simple, t.fpu_simple)
            }
            FeqS | FltS | FleS | FclassS | FmvXW | FcvtWS | FcvtWuS => {
                let v = match inst.op {
                    FeqS => (f1 == f2) as u32,
                    FltS => (f1 < f2) as u32,
                    FleS => (f1 <= f2) as u32,
                    FclassS => fclass(f1),
                    FmvXW => f1.to_bits(),
                    FcvtWS => f32_to_int(f1, inst.rm, true),
                    _ => f32_to_int(f1, inst.rm, false),
                };
                self.write_x(inst.rd, v, issue + t.fpu_simple);
                (t.fpu_simple, t.fpu_simple)
            }
            FcvtSW | FcvtSWu | FmvWX => {
                if inst.op != FmvWX && inst.rm != 0 && inst.rm != RM_DYN {
                    return Err(Trap::RoundingMode { pc, op: inst.op, rm: inst.rm });
                }
                let v = match inst.op {
                    FcvtSW => (x1 as i32 as f32).to_bits(),
                    FcvtSWu => (x1 as f32).to_bits(),
                    _ => x1,
                };
                self.write_f(inst.rd, v, issue + t.fpu_simple);
                (t.fpu_simple, t.fpu_simple)
            }
            FmaP | FmsP | FdaP | FdsP => {
                let opcode = match inst.op {
                    FmaP => Opcode::FmaP,
                    FmsP => Opcode::FmsP,
                    FdaP => Opcode::FdaP,
                    _ => Opcode::FdsP,
                };
                let cmd = Command::new(
                    opcode,
                    Some(self.prf[inst.rs1 as usize]),
                    Some(self.prf[inst.rs2 as usize]),
                );
                let r = self.issue_command(cmd, issue);
                let occ = r.response_at.max(1);
                (occ, occ)
            }
            FcvtRP => {
                let r = self.issue_command(Command::unary(Opcode::FcvtRP, self.prf[inst.rs1 as usize]), issue);
                let occ = r.response_at.max(1);
                (occ, occ)
            }
            FcvtPR => {
                let r = self.issue_command(Command::read(), issue);
                let v = match r.output {
                    Some(Output::Posit(p)) => p.pattern(),
                    _ => unreachable!("quire read returns a posit"),
                };
                let occ = r.response_at.max(1);
                self.write_p(inst.rd, v, issue + occ);
                (occ, occ)
            }
            FcvtPS => {
                let r = self.issue_command(Command::unary(Opcode::FcvtPS, self.fpr[inst.rs1 as usize] as u64), issue);
                let v = match r.output {
                    Some(Output::Posit(p)) => p.pattern(),
                    _ => unreachable!("conversion returns a posit"),
                };
                let occ = r.response_at.max(1);
                self.write_p(inst.rd, v, issue + occ);
                (occ, occ)
            }
            FcvtSP => {
                let r = self.issue_command(Command::unary(Opcode::FcvtSP, self.prf[inst.rs1 as usize]), issue);
                let v = match r.output {
                    Some(Output::Binary32(w)) => w,
                    _ => unreachable!("conversion returns a binary32 word"),
                };
                let occ = r.response_at.max(1);
                self.write_f(inst.rd, v, issue + occ);
                (occ, occ)
            }
            PmvWX => {
                if let Some(load) = self.pending_loads[inst.rs1 as usize].take() {
                    self.ledger.transfer(Category::Others, Category::PositLdSt, load.cost);
                    if let Some(i) = load.trace_index {
                        self.trace[i].category = Category::PositLdSt;
                    }
                }
                self.write_p(inst.rd, x1 as u64, issue + t.pmv);
                (t.pmv, t.pmv)
            }
            PmvXW => {
                let v = self.prf[inst.rs1 as usize] as u32;
                self.write_x(inst.rd, v, issue + t.pmv);
                if inst.rd != 0 {
                    self.from_pmv[inst.rd as usize] = true;
                }
                (t.pmv, t.pmv)
            }
            Plw => {
                let width = self.config.posit.storage_bytes();
                let v = self.load(pc, self.addr(&inst), width)?;
                self.write_p(inst.rd, v, issue + t.mem);
                (t.mem, t.mem)
            }
            Psw => {
                let width = self.config.posit.storage_bytes();
                let addr = self.addr(&inst);
                self.store(pc, addr, width, self.prf[inst.rs2 as usize])?;
                (t.mem, t.mem)
            }
        };
        debug_assert!(result >= occupancy || matches!(inst.op, FmaP | FmsP | FdaP | FdsP | FcvtRP));

        let cost = issue - self.cycles + occupancy;
        self.cycles = issue + occupancy;
        self.ledger.add(category, cost);
        let trace_index = if self.config.trace {
            self.trace.push(TraceEntry {
                pc,
                inst,
                category,
                cost,
            });
            Some(self.trace.len() - 1)
        } else {
            None
        };
        if let Some(rd) = pending {
            if rd != 0 && category == Category::Others {
                self.pending_loads[rd as usize] = Some(PendingLoad { cost, trace_index });
            }
        }
        if block_end {
            self.pending_loads = [None; 32];
            self.from_pmv = [false; 32];
        }
        self.pc = next_pc;
        Ok(())
    }

    /// Human-readable final state: non-zero registers, the quire and the
    /// ledger.
    pub fn dump(&self) -> String {
        let mut out = format!("pc {:08x}  cycles {}  instructions {}\n", self.pc, self.cycles, self.retired);
        for (i, &v) in self.gpr.iter().enumerate() {
            if v != 0 {
                out.push_str(&format!("{:<5} 0x{:08x} ({})\n", isa::reg_name(isa::RegFile::X, i as u8), v, v as i32));
            }
        }
        for (i, &v) in self.fpr.iter().enumerate() {
            if v != 0 {
                out.push_str(&format!("f{:<4} 0x{:08x} ({})\n", i, v, f32::from_bits(v)));
            }
        }
        for (i, &v) in self.prf.iter().enumerate() {
            if v != 0 {
                let p = PositBits::new(v, self.config.posit);
                out.push_str(&format!("p{:<4} {} ({})\n", i, p, p.to_f64()));
            }
        }
        out.push_str(&format!("quire {}\n", self.melodica.quire().dump()));
        out.push_str(&self.ledger.to_string());
        out.push('\n');
        out
    }
}

fn canonical(v: f32) -> u32 {
    if v.is_nan() {
        crate::posit::CANONICAL_NAN32
    } else {
        v.to_bits()
    }
}

fn fmin_max(a: f32, b: f32, min: bool) -> u32 {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => crate::posit::CANONICAL_NAN32,
        (true, false) => b.to_bits(),
        (false, true) => a.to_bits(),
        _ if a == b => {
            // -0 orders below +0.
            if min {
                a.to_bits() | b.to_bits()
            } else {
                a.to_bits() & b.to_bits()
            }
        }
        _ => {
            if (a < b) == min {
                a.to_bits()
            } else {
                b.to_bits()
            }
        }
    }
}

fn fclass(v: f32) -> u32 {
    let neg = v.is_sign_negative();
    let bit = if v.is_nan() {
        if v.to_bits() & 0x0040_0000 != 0 {
            9
        } else {
            8
        }
    } else if v.is_infinite() {
        if neg {
            0
        } else {
            7
        }
    } else if v == 0.0 {
        if neg {
            3
        } else {
            4
        }
    } else if v.is_subnormal() {
        if neg {
            2
        } else {
            5
        }
    } else if neg {
        1
    } else {
        6
    };
    1 << bit
}

fn f32_to_int(v: f32, rm: u8, signed: bool) -> u32 {
    let x = v as f64;
    let r = match rm {
        1 => x.trunc(),
        2 => x.floor(),
        3 => x.ceil(),
        4 => x.round(),
        _ => x.round_ties_even(),
    };
    if signed {
        if v.is_nan() || r >= 2147483648.0 {
            i32::MAX as u32
        } else if r < -2147483648.0 {
            i32::MIN as u32
        } else {
            r as i32 as u32
        }
    } else if v.is_nan() || r >= 4294967296.0 {
        u32::MAX
    } else if r <= 0.0 {
        0
    } else {
        r as u32
    }
}

/// Assembles `source`, runs it on a fresh machine, and returns the machine.
pub fn run_source(source: &str, config: MachineConfig, max_instructions: u64) -> Result<(Machine, RunSummary), RunError> {
    let program = isa::assemble(source)?;
    let mut m = Machine::new(config)?;
    m.load_program(&program)?;
    let summary = m.run(max_instructions)?;
    Ok((m, summary))
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Asm(#[from] isa::AsmError),
    #[error(transparent)]
    Trap(#[from] Trap),
}
