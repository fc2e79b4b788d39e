//! Command-level model of the posit coprocessor: eight commands, their
//! functional effect on the quire, and when each one answers the core.

use std::fmt;

use thiserror::Error;

use crate::posit::{self, extract, PositBits, PositConfig};
use crate::quire::{FusedOp, Quire};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opcode {
    FmaP,
    FmsP,
    FdaP,
    FdsP,
    FcvtRP,
    FcvtPR,
    FcvtPS,
    FcvtSP,
}

impl Opcode {
    pub const ALL: [Opcode; 8] = [
        Opcode::FmaP,
        Opcode::FmsP,
        Opcode::FdaP,
        Opcode::FdsP,
        Opcode::FcvtRP,
        Opcode::FcvtPR,
        Opcode::FcvtPS,
        Opcode::FcvtSP,
    ];

    /// Number of operands the command carries.
    pub fn arity(self) -> usize {
        match self {
            Opcode::FmaP | Opcode::FmsP | Opcode::FdaP | Opcode::FdsP => 2,
            Opcode::FcvtRP | Opcode::FcvtPS | Opcode::FcvtSP => 1,
            Opcode::FcvtPR => 0,
        }
    }

    pub fn is_fused(self) -> bool {
        self.arity() == 2
    }

    /// Whether the command returns a value to the core's register files.
    pub fn has_output(self) -> bool {
        matches!(self, Opcode::FcvtPR | Opcode::FcvtPS | Opcode::FcvtSP)
    }

    fn fused_op(self) -> Option<FusedOp> {
        match self {
            Opcode::FmaP => Some(FusedOp::MulAdd),
            Opcode::FmsP => Some(FusedOp::MulSub),
            Opcode::FdaP => Some(FusedOp::DivAdd),
            Opcode::FdsP => Some(FusedOp::DivSub),
            _ => None,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Opcode::FmaP => "FMA_P",
            Opcode::FmsP => "FMS_P",
            Opcode::FdaP => "FDA_P",
            Opcode::FdsP => "FDS_P",
            Opcode::FcvtRP => "FCVT_R_P",
            Opcode::FcvtPR => "FCVT_P_R",
            Opcode::FcvtPS => "FCVT_P_S",
            Opcode::FcvtSP => "FCVT_S_P",
        };
        f.write_str(name)
    }
}

/// A command as it arrives from the core. Operands are raw words: posit
/// patterns, or a binary32 image for `FcvtPS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Command {
    pub opcode: Opcode,
    pub operand1: Option<u64>,
    pub operand2: Option<u64>,
}

impl Command {
    pub fn new(opcode: Opcode, operand1: Option<u64>, operand2: Option<u64>) -> Self {
        Command {
            opcode,
            operand1,
            operand2,
        }
    }

    pub fn fused(opcode: Opcode, a: PositBits, b: PositBits) -> Self {
        Command::new(opcode, Some(a.pattern()), Some(b.pattern()))
    }

    pub fn unary(opcode: Opcode, word: u64) -> Self {
        Command::new(opcode, Some(word), None)
    }

    pub fn read() -> Self {
        Command::new(Opcode::FcvtPR, None, None)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommandError {
    #[error("{opcode} takes {expected} operand(s), got {got}")]
    Arity {
        opcode: Opcode,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    Posit(PositBits),
    Binary32(u32),
}

/// Issue-relative timing of one command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Response {
    pub output: Option<Output>,
    /// Cycles after issue at which the core may proceed (and, for commands
    /// with an output, at which the value is available).
    pub response_at: u64,
    /// Cycles after issue at which the command's effect is complete.
    pub completes_at: u64,
}

/// Default fixed latency of the conversion commands.
pub const CONVERTER_LATENCY: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyModel {
    /// Cycles for a fused op to land in the quire.
    pub fused_latency: u64,
    /// Depth of the segmented accumulate pipeline.
    pub quire_stages: u64,
    /// Latency of FCVT.P.S, FCVT.S.P, quire init and quire read-out.
    pub converter_latency: u64,
    /// Minimum cycles between two accepted commands.
    pub issue_interval: u64,
}

impl LatencyModel {
    /// 12/20/36 cycle fused ops and 1/4/16 accumulate stages for 8/16/32-bit
    /// posits; other widths follow the same `n + 4` and `ceil(n^2/64)` rules.
    pub fn for_config(config: PositConfig) -> Self {
        let n = config.n() as u64;
        LatencyModel {
            fused_latency: n + 4,
            quire_stages: (n * n).div_ceil(64),
            converter_latency: CONVERTER_LATENCY,
            issue_interval: 1,
        }
    }

    pub fn with_converter_latency(mut self, cycles: u64) -> Self {
        self.converter_latency = cycles;
        self
    }

    /// Every command answers instantly; only useful to show values do not
    /// depend on timing.
    pub fn null() -> Self {
        LatencyModel {
            fused_latency: 0,
            quire_stages: 0,
            converter_latency: 0,
            issue_interval: 0,
        }
    }
}

/// One coprocessor instance: the quire plus the pipeline bookkeeping needed
/// to answer "when" as well as "what".
#[derive(Debug, Clone)]
pub struct Melodica {
    config: PositConfig,
    quire: Quire,
    latency: LatencyModel,
    /// Absolute cycle at which the last quire-updating command lands.
    quire_ready: u64,
    /// Absolute cycle at which the next command may enter the pipeline.
    next_accept: u64,
    audit: QuireCounts,
}

/// Running totals of quire traffic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QuireCounts {
    pub inits: u64,
    pub reads: u64,
    pub accumulations: u64,
}

impl Melodica {
    pub fn new(config: PositConfig) -> Self {
        Melodica::with_latency(config, LatencyModel::for_config(config))
    }

    pub fn with_latency(config: PositConfig, latency: LatencyModel) -> Self {
        Melodica {
            config,
            quire: Quire::new(config),
            latency,
            quire_ready: 0,
            next_accept: 0,
            audit: QuireCounts::default(),
        }
    }

    pub fn config(&self) -> PositConfig {
        self.config
    }

    pub fn latency(&self) -> LatencyModel {
        self.latency
    }

    pub fn quire(&self) -> &Quire {
        &self.quire
    }

    pub fn counts(&self) -> QuireCounts {
        self.audit
    }

    /// Executes `cmd` issued at absolute cycle `now`.
    pub fn execute(&mut self, cmd: Command, now: u64) -> Result<Response, CommandError> {
        let got = cmd.operand1.is_some() as usize + cmd.operand2.is_some() as usize;
        let expected = cmd.opcode.arity();
        let shape_ok = match expected {
            0 => got == 0,
            1 => cmd.operand1.is_some() && cmd.operand2.is_none(),
            _ => got == 2,
        };
        if !shape_ok {
            return Err(CommandError::Arity {
                opcode: cmd.opcode,
                expected,
                got,
            });
        }
        let lat = self.latency;
        let start = now.max(self.next_accept);
        let wait = start - now;
        let posit = |w: u64| PositBits::new(w, self.config);

        let response = if let Some(op) = cmd.opcode.fused_op() {
            let a = extract(posit(cmd.operand1.unwrap_or(0)));
            let b = extract(posit(cmd.operand2.unwrap_or(0)));
            self.quire.accumulate(&a, &b, op);
            self.audit.accumulations += 1;
            let lands = (start + lat.fused_latency).max(self.quire_ready);
            self.quire_ready = lands;
            self.next_accept = start + lat.issue_interval;
            Response {
                output: None,
                response_at: wait,
                completes_at: lands - now,
            }
        } else {
            match cmd.opcode {
                Opcode::FcvtRP => {
                    self.quire.init(posit(cmd.operand1.unwrap_or(0)));
                    self.audit.inits += 1;
                    let lands = (start + lat.converter_latency).max(self.quire_ready);
                    self.quire_ready = lands;
                    self.next_accept = start + lat.issue_interval;
                    Response {
                        output: None,
                        response_at: wait,
                        completes_at: lands - now,
                    }
                }
                Opcode::FcvtPR => {
                    // A read is a full barrier: it waits for every outstanding
                    // quire update, then normalizes.
                    let value = self.quire.read();
                    self.audit.reads += 1;
                    let done = start.max(self.quire_ready) + lat.converter_latency;
                    self.next_accept = done;
                    Response {
                        output: Some(Output::Posit(value)),
                        response_at: done - now,
                        completes_at: done - now,
                    }
                }
                Opcode::FcvtPS => {
                    let word = cmd.operand1.unwrap_or(0) as u32;
                    let value = posit::posit_from_binary32(word, self.config);
                    self.converted(Output::Posit(value), start, wait)
                }
                Opcode::FcvtSP => {
                    let value = posit::binary32_from_posit(posit(cmd.operand1.unwrap_or(0)));
                    self.converted(Output::Binary32(value), start, wait)
                }
                _ => unreachable!("fused opcodes handled above"),
            }
        };
        Ok(response)
    }

    fn converted(&mut self, output: Output, start: u64, wait: u64) -> Response {
        let lat = self.latency.converter_latency;
        self.next_accept = start + self.latency.issue_interval;
        Response {
            output: Some(output),
            response_at: wait + lat,
            completes_at: wait + lat,
        }
    }
}
