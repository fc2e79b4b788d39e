//! `posit-rv`: posit conversion, assembly, emulation and the accuracy and
//! cycle studies from one binary.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "posit-rv", version, about = "Posit arithmetic, a posit-extended RISC-V emulator and its studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Posit format selection shared by several subcommands.
#[derive(Debug, Clone, Copy, Args)]
pub struct Width {
    /// Posit width in bits (8, 16, 24 or 32).
    #[arg(long, short = 'n', default_value_t = 32)]
    pub n: u32,
    /// Exponent size; defaults to 0/1/2/2 for 8/16/24/32 bits.
    #[arg(long)]
    pub es: Option<u32>,
    /// Accept widths other than 8, 16, 24 and 32.
    #[arg(long)]
    pub allow_any_width: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode a posit pattern or round a real number into one.
    Convert {
        #[command(flatten)]
        width: Width,
        /// Pattern to decode (hex with 0x, or decimal).
        #[arg(long, conflicts_with = "from_real", required_unless_present = "from_real")]
        from_bits: Option<String>,
        /// Real number to round.
        #[arg(long, allow_hyphen_values = true)]
        from_real: Option<String>,
    },
    /// Assemble a source file and print address, word and disassembly.
    Asm {
        source: PathBuf,
        /// Write the little-endian binary image here.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Load address.
        #[arg(long, default_value = "0", value_parser = parse_u32)]
        base: u32,
    },
    /// Disassemble a file of hex words (one per line) or a binary image.
    Disasm {
        input: PathBuf,
        /// Treat the input as a little-endian binary image.
        #[arg(long)]
        binary: bool,
    },
    /// Assemble and run a program, then print the final state and the cycle ledger.
    Run {
        source: PathBuf,
        #[command(flatten)]
        width: Width,
        /// Instruction budget.
        #[arg(long, default_value_t = 10_000_000)]
        max_instructions: u64,
        /// Set a register before running, e.g. `a0=0x1000` or `p1=1.5`.
        #[arg(long = "set", value_name = "REG=VALUE")]
        set: Vec<String>,
        /// Load a binary file into memory, e.g. `0x1000=data.bin`.
        #[arg(long = "load", value_name = "ADDR=FILE")]
        load: Vec<String>,
        /// Print memory words after the run, e.g. `0x2000:4`.
        #[arg(long = "show", value_name = "ADDR:WORDS")]
        show: Vec<String>,
        /// Print one line per retired instruction.
        #[arg(long)]
        trace: bool,
        /// Write the ledger as CSV.
        #[arg(long)]
        ledger_csv: Option<PathBuf>,
        /// Converter latency in cycles for FCVT.P.S/FCVT.S.P and quire reads.
        #[arg(long)]
        converter_latency: Option<u64>,
        /// Memory size in bytes.
        #[arg(long, default_value_t = 1 << 20)]
        memory: usize,
    },
    /// Print the instruction encoding table as CSV.
    IsaTable {
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo accuracy study against a binary64 reference.
    Study {
        /// dot, gemv, gemm or givens.
        #[arg(long, default_value = "dot")]
        kernel: String,
        /// Comma-separated problem sizes.
        #[arg(long, default_value = "10,100,1000,10000", value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Input range `lo,hi` for uniform samples.
        #[arg(long, default_value = "0,1", allow_hyphen_values = true)]
        range: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Comma-separated modes: f64, f32, pN, qN, f32-qN.
        #[arg(long, default_value = "f32,p32,q32,q24", value_delimiter = ',')]
        modes: Vec<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the report CSV here as well as printing it.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Accept posit widths other than 8, 16, 24 and 32.
        #[arg(long)]
        allow_any_width: bool,
    },
    /// Lucas-Kanade velocity in several modes with error heat maps against binary64.
    Lk {
        /// First frame (binary PGM); omit both frames for a synthetic moving blob.
        #[arg(long, requires = "frame2")]
        frame1: Option<PathBuf>,
        #[arg(long, requires = "frame1")]
        frame2: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value = "f32,f32-q32,q32", value_delimiter = ',')]
        modes: Vec<String>,
        /// Scale pixels from 0..255 to 0..16 first.
        #[arg(long)]
        normalize: bool,
        /// Directory for heat-map CSVs (one per mode).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Size of the synthetic frames.
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        allow_any_width: bool,
    },
    /// Cycle ledger of the emulated dot-product variants.
    Cycles {
        /// Vector length.
        #[arg(long, default_value_t = 4096)]
        len: usize,
        #[command(flatten)]
        width: Width,
        /// Comma-separated variants: f32, f32-posit, posit, posit-gpr.
        #[arg(long, default_value = "f32,f32-posit,posit-gpr", value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        converter_latency: Option<u64>,
    },
}

fn parse_u32(s: &str) -> Result<u32, String> {
    commands::parse_int(s).and_then(|v| u32::try_from(v).map_err(|_| format!("{s} does not fit in 32 bits")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
