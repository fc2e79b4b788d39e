use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use posit_rv::emulator::{Machine, MachineConfig, RunError};
use posit_rv::isa::{self, RegFile};
use posit_rv::melodica::LatencyModel;
use posit_rv::numerics::{self, Frame, Kernel, Mode, StudyConfig, StudyError};
use posit_rv::posit::{self, PositBits, PositConfig, PositKind};
use posit_rv::programs::{self, DotVariant};

use crate::{Command, Width};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Asm(#[from] isa::AsmError),
    #[error("trap: {0}")]
    Run(String),
    #[error("{0}")]
    Study(#[from] StudyError),
    #[error("{0}")]
    Image(#[from] numerics::ImageError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Asm(_) | CliError::Run(_) => 2,
            CliError::Study(_) | CliError::Image(_) => 3,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Asm(a) => CliError::Asm(a),
            RunError::Trap(t) => CliError::Run(t.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, data).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses decimal, `0x` hex or `0b` binary, with an optional minus sign.
pub fn parse_int(s: &str) -> std::result::Result<i64, String> {
    let t = s.trim().replace('_', "");
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest.to_string()),
        None => (false, t.clone()),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(h, 16)
    } else if let Some(b) = body.strip_prefix("0b") {
        i64::from_str_radix(b, 2)
    } else {
        body.parse()
    }
    .map_err(|_| format!("`{s}` is not an integer"))?;
    Ok(if neg { -v } else { v })
}

fn posit_config(n: u32, es: Option<u32>, any_width: bool) -> Result<PositConfig> {
    if !any_width && ![8, 16, 24, 32].contains(&n) {
        return Err(usage(format!("width {n} is not one of 8, 16, 24, 32 (pass --allow-any-width)")));
    }
    match es {
        Some(es) => PositConfig::new(n, es),
        None => PositConfig::with_default_es(n),
    }
    .map_err(|e| usage(e.to_string()))
}

fn width_config(w: &Width) -> Result<PositConfig> {
    posit_config(w.n, w.es, w.allow_any_width)
}

fn check_mode_width(mode: Mode, any_width: bool) -> Result<()> {
    match mode.posit_config() {
        Some(c) if !any_width && ![8, 16, 24, 32].contains(&c.n()) => Err(usage(format!(
            "mode {mode}: width {} is not one of 8, 16, 24, 32 (pass --allow-any-width)",
            c.n()
        ))),
        _ => Ok(()),
    }
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Convert {
            width,
            from_bits,
            from_real,
        } => convert(&width, from_bits, from_real),
        Command::Asm { source, output, base } => asm(&source, output.as_deref(), base),
        Command::Disasm { input, binary } => disasm(&input, binary),
        Command::Run {
            source,
            width,
            max_instructions,
            set,
            load,
            show,
            trace,
            ledger_csv,
            converter_latency,
            memory,
        } => run(RunArgs {
            source,
            width,
            max_instructions,
            set,
            load,
            show,
            trace,
            ledger_csv,
            converter_latency,
            memory,
        }),
        Command::IsaTable { output } => {
            let table = isa::encoding_table_csv();
            match output {
                Some(p) => write(&p, table),
                None => {
                    print!("{table}");
                    Ok(())
                }
            }
        }
        Command::Study {
            kernel,
            sizes,
            range,
            trials,
            modes,
            seed,
            output,
            allow_any_width,
        } => study(&kernel, sizes, &range, trials, &modes, seed, output.as_deref(), allow_any_width),
        Command::Lk {
            frame1,
            frame2,
            window,
            modes,
            normalize,
            out_dir,
            size,
            allow_any_width,
        } => lk(frame1, frame2, window, &modes, normalize, out_dir.as_deref(), size, allow_any_width),
        Command::Cycles {
            len,
            width,
            variants,
            seed,
            converter_latency,
        } => cycles(len, &width, &variants, seed, converter_latency),
    }
}

fn describe(p: PositBits) -> String {
    let c = p.config();
    let digits = c.n().div_ceil(4) as usize;
    let mut out = format!("{c}\npattern  0x{:0digits$x}\n", p.pattern());
    let u = posit::extract(p);
    match u.kind {
        PositKind::Zero => out.push_str("value    0\n"),
        PositKind::NaR => out.push_str("value    NaR\n"),
        PositKind::Regular => {
            let (k, e) = u.regime_and_exponent(c);
            let frac = if u.frac_width == 0 {
                "-".to_string()
            } else {
                format!("{:0w$b}", u.frac, w = u.frac_width as usize)
            };
            let exact = posit::value_as_rational(&u).expect("regular");
            let _ = writeln!(out, "fields   s={} k={k} exp={e} f={frac}", u.negative as u8);
            let _ = writeln!(out, "scale    2^{}", u.scale);
            let _ = writeln!(out, "exact    {exact}");
            let _ = writeln!(out, "value    {:?}", p.to_f64());
        }
    }
    out
}

fn convert(width: &Width, from_bits: Option<String>, from_real: Option<String>) -> Result<()> {
    let c = width_config(width)?;
    let p = if let Some(bits) = from_bits {
        let v = parse_int(&bits).map_err(usage)?;
        if v < 0 || (v as u64) > c.mask() {
            return Err(usage(format!("pattern {bits} does not fit in {} bits", c.n())));
        }
        PositBits::new(v as u64, c)
    } else {
        let text = from_real.expect("clap requires one source");
        let x: f64 = match text.trim().to_ascii_lowercase().as_str() {
            "nar" | "nan" => f64::NAN,
            t => t.parse().map_err(|_| usage(format!("`{text}` is not a real number")))?,
        };
        posit::from_f64(x, c)
    };
    print!("{}", describe(p));
    Ok(())
}

fn asm(source: &Path, output: Option<&Path>, base: u32) -> Result<()> {
    let program = isa::assemble_at(&read_to_string(source)?, base)?;
    for (i, &w) in program.words.iter().enumerate() {
        println!("{:08x}: {w:08x}  {}", program.base + 4 * i as u32, isa::disassemble_word(w));
    }
    if let Some(out) = output {
        write(out, program.bytes())?;
    }
    Ok(())
}

fn disasm(input: &Path, binary: bool) -> Result<()> {
    let words: Vec<u32> = if binary {
        let bytes = read_bytes(input)?;
        if bytes.len() % 4 != 0 {
            return Err(usage(format!("{}: length {} is not a whole number of words", input.display(), bytes.len())));
        }
        bytes.chunks(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
    } else {
        let text = read_to_string(input)?;
        let mut words = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.split('#').next().unwrap_or("").trim();
            if t.is_empty() {
                continue;
            }
            let t = t.trim_start_matches("0x");
            let w = u32::from_str_radix(t, 16).map_err(|_| usage(format!("line {}: `{t}` is not a hex word", i + 1)))?;
            words.push(w);
        }
        words
    };
    for (i, w) in words.iter().enumerate() {
        println!("{:08x}: {w:08x}  {}", 4 * i, isa::disassemble_word(*w));
    }
    Ok(())
}

struct RunArgs {
    source: PathBuf,
    width: Width,
    max_instructions: u64,
    set: Vec<String>,
    load: Vec<String>,
    show: Vec<String>,
    trace: bool,
    ledger_csv: Option<PathBuf>,
    converter_latency: Option<u64>,
    memory: usize,
}

fn split_pair<'a>(s: &'a str, sep: char, what: &str) -> Result<(&'a str, &'a str)> {
    s.split_once(sep).ok_or_else(|| usage(format!("`{s}`: expected {what}")))
}

fn run(args: RunArgs) -> Result<()> {
    let c = width_config(&args.width)?;
    if c.n() > 32 {
        return Err(usage(format!("the emulator holds posits of at most 32 bits, not {}", c.n())));
    }
    let program = isa::assemble(&read_to_string(&args.source)?)?;
    let mut latency = LatencyModel::for_config(c);
    if let Some(l) = args.converter_latency {
        latency = latency.with_converter_latency(l);
    }
    let config = MachineConfig::new(c).memory_size(args.memory).latency(latency).trace(args.trace);
    let mut m = Machine::new(config).map_err(|e| CliError::Run(e.to_string()))?;
    m.load_program(&program).map_err(|e| CliError::Run(e.to_string()))?;

    for spec in &args.load {
        let (addr, file) = split_pair(spec, '=', "ADDR=FILE")?;
        let addr = parse_int(addr).map_err(usage)? as u32;
        let bytes = read_bytes(Path::new(file))?;
        m.write_bytes(addr, &bytes).map_err(|e| CliError::Run(e.to_string()))?;
    }
    for spec in &args.set {
        let (reg, value) = split_pair(spec, '=', "REG=VALUE")?;
        set_register(&mut m, c, reg.trim(), value.trim())?;
    }

    let summary = m.run(args.max_instructions).map_err(|e| CliError::Run(e.to_string()))?;
    if args.trace {
        for t in m.trace() {
            println!("{t}");
        }
    }
    println!("halt: {:?}", summary.halt);
    print!("{}", m.dump());
    for spec in &args.show {
        let (addr, count) = spec.split_once(':').unwrap_or((spec, "1"));
        let addr = parse_int(addr).map_err(usage)? as u32;
        let count = parse_int(count).map_err(usage)?;
        for i in 0..count as u32 {
            let a = addr + 4 * i;
            match m.read_word(a) {
                Some(w) => println!("mem[{a:08x}] = {w:08x}"),
                None => return Err(usage(format!("address 0x{a:08x} is outside memory"))),
            }
        }
    }
    if let Some(path) = args.ledger_csv {
        write(&path, summary.ledger.to_csv())?;
    }
    Ok(())
}

fn set_register(m: &mut Machine, c: PositConfig, reg: &str, value: &str) -> Result<()> {
    if let Some(i) = isa::parse_reg(RegFile::X, reg) {
        let v = parse_int(value).map_err(usage)?;
        m.set_gpr(i as usize, v as u32);
    } else if let Some(i) = isa::parse_reg(RegFile::F, reg) {
        let v: f32 = value.parse().map_err(|_| usage(format!("`{value}` is not a number")))?;
        m.set_fpr(i as usize, v);
    } else if let Some(i) = isa::parse_reg(RegFile::P, reg) {
        let p = match parse_int(value) {
            Ok(bits) if value.starts_with("0x") => PositBits::new(bits as u64 & c.mask(), c),
            _ => {
                let v: f64 = value.parse().map_err(|_| usage(format!("`{value}` is not a number")))?;
                posit::from_f64(v, c)
            }
        };
        m.set_prf(i as usize, p);
    } else {
        return Err(usage(format!("unknown register `{reg}`")));
    }
    Ok(())
}

fn parse_modes(modes: &[String], any_width: bool) -> Result<Vec<Mode>> {
    let mut out = Vec::new();
    for m in modes {
        let mode: Mode = m.parse()?;
        check_mode_width(mode, any_width)?;
        out.push(mode);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn study(
    kernel: &str,
    sizes: Vec<usize>,
    range: &str,
    trials: usize,
    modes: &[String],
    seed: u64,
    output: Option<&Path>,
    any_width: bool,
) -> Result<()> {
    let kernel: Kernel = kernel.parse()?;
    let (lo, hi) = range
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)))
        .ok_or_else(|| StudyError::Config(format!("range `{range}` is not `lo,hi`")))?;
    let modes = parse_modes(modes, any_width)?;
    let cfg = StudyConfig {
        kernel,
        sizes,
        range: (lo, hi),
        trials,
        modes,
        seed,
    };
    let reports = numerics::run_error_study(&cfg)?;
    let csv = numerics::reports_to_csv(&reports);
    print!("{csv}");
    if let Some(path) = output {
        write(path, &csv)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn lk(
    frame1: Option<PathBuf>,
    frame2: Option<PathBuf>,
    window: usize,
    modes: &[String],
    normalize: bool,
    out_dir: Option<&Path>,
    size: usize,
    any_width: bool,
) -> Result<()> {
    let modes = parse_modes(modes, any_width)?;
    let (f1, f2) = match (frame1, frame2) {
        (Some(a), Some(b)) => (Frame::from_pgm(&read_bytes(&a)?)?, Frame::from_pgm(&read_bytes(&b)?)?),
        _ => {
            let c = size as f64 / 2.0;
            let sigma = size as f64 / 8.0;
            (
                Frame::gaussian_blob(size, size, c - 0.5, c, sigma, 160.0).quantized(),
                Frame::gaussian_blob(size, size, c + 0.5, c, sigma, 160.0).quantized(),
            )
        }
    };
    let reference = numerics::lucas_kanade(&f1, &f2, window, Mode::F64Ref, normalize)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    println!("mode,valid_pixels,max_abs_error,rms_error,quire_reads,accumulations");
    for mode in modes {
        let field = numerics::lucas_kanade(&f1, &f2, window, mode, normalize)?;
        let errors = field.error_map(&reference);
        let stats = numerics::map_stats(&errors);
        println!(
            "{mode},{},{:.6e},{:.6e},{},{}",
            field.valid_count(),
            stats.max,
            stats.rms,
            field.audit.reads,
            field.audit.accumulations
        );
        if let Some(dir) = out_dir {
            write(&dir.join(format!("heat-{mode}.csv")), numerics::heat_map_csv(&errors, field.width))?;
        }
    }
    Ok(())
}

fn parse_variant(s: &str) -> Result<DotVariant> {
    DotVariant::ALL
        .into_iter()
        .find(|v| v.to_string() == s.trim())
        .ok_or_else(|| usage(format!("unknown variant `{s}` (expected f32, f32-posit, posit or posit-gpr)")))
}

fn cycles(len: usize, width: &Width, variants: &[String], seed: u64, converter_latency: Option<u64>) -> Result<()> {
    let c = width_config(width)?;
    if c.n() > 32 {
        return Err(usage(format!("the emulator holds posits of at most 32 bits, not {}", c.n())));
    }
    let mut latency = LatencyModel::for_config(c);
    if let Some(l) = converter_latency {
        latency = latency.with_converter_latency(l);
    }
    let variants: Vec<DotVariant> = variants.iter().map(|v| parse_variant(v)).collect::<Result<_>>()?;
    // values do not affect timing
    let a = numerics::sample_uniform(len, (0.0, 1.0), seed, 0);
    let b = numerics::sample_uniform(len, (0.0, 1.0), seed, 1);
    let categories = posit_rv::emulator::Category::ALL;
    let mut header = String::from("variant");
    for cat in categories {
        header.push(',');
        header.push_str(cat.name());
    }
    println!("{header},total,result");
    for v in variants {
        let r = programs::run_dot(v, c, latency, &a, &b)?;
        let mut row = v.label(c);
        for cat in categories {
            let _ = write!(row, ",{}", r.summary.ledger.get(cat));
        }
        println!("{row},{},{}", r.summary.cycles, r.value);
    }
    Ok(())
}
