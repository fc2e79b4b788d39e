//! Dot product, GEMV, GEMM, Givens QR and Lucas-Kanade velocity in every
//! numeric mode, plus the Monte Carlo error study that compares them with
//! a binary64 reference.
//!
//! Values travel as `f64` holding the exact value of the working format
//! (binary32 or posit), so every mode shares one data layout. Posit
//! widths here are limited to 32 bits, where that holds exactly.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::posit::{self, PositConfig, UnpackedPosit};
use crate::quire::{FusedOp, Quire};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Numeric mode of a kernel run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// binary64 throughout; the reference.
    F64Ref,
    /// binary32 data and fused multiply-add.
    F32,
    /// Posit data, every operation rounded (the quire holds one
    /// accumulation at a time).
    Pn(PositConfig),
    /// Posit data, accumulation through the quire with one final rounding.
    Qn(PositConfig),
    /// binary32 data converted to posit for quire accumulation.
    F32Qn(PositConfig),
}

impl Mode {
    pub fn posit_config(self) -> Option<PositConfig> {
        match self {
            Mode::Pn(c) | Mode::Qn(c) | Mode::F32Qn(c) => Some(c),
            _ => None,
        }
    }

    pub fn label(self) -> String {
        match self {
            Mode::F64Ref => "f64".into(),
            Mode::F32 => "f32".into(),
            Mode::Pn(c) => format!("p{}", c.n()),
            Mode::Qn(c) => format!("q{}", c.n()),
            Mode::F32Qn(c) => format!("f32-q{}", c.n()),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StudyError {
    #[error("unknown mode `{0}` (expected f64, f32, pN, qN or f32-qN)")]
    UnknownMode(String),
    #[error("unknown kernel `{0}` (expected dot, gemv, gemm or givens)")]
    UnknownKernel(String),
    #[error("posit width {0} is outside the supported 2..=32 range for numeric studies")]
    Width(u32),
    #[error("{kernel} cannot run in {mode} mode: {reason}")]
    Unsupported {
        kernel: Kernel,
        mode: String,
        reason: &'static str,
    },
    #[error("length mismatch: {0} vs {1}")]
    Shape(usize, usize),
    #[error("invalid study configuration: {0}")]
    Config(String),
}

impl FromStr for Mode {
    type Err = StudyError;

    /// Parses `f64`, `f32`, `p32`, `q24`, `f32-q16`, ... with the default es
    /// for the width.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let width = |digits: &str| -> Result<PositConfig, StudyError> {
            let n: u32 = digits.parse().map_err(|_| StudyError::UnknownMode(s.clone()))?;
            if !(2..=32).contains(&n) {
                return Err(StudyError::Width(n));
            }
            PositConfig::with_default_es(n).map_err(|_| StudyError::Width(n))
        };
        match s.as_str() {
            "f64" | "ref" => Ok(Mode::F64Ref),
            "f32" => Ok(Mode::F32),
            _ => {
                if let Some(rest) = s.strip_prefix("f32-q") {
                    Ok(Mode::F32Qn(width(rest)?))
                } else if let Some(rest) = s.strip_prefix('q') {
                    Ok(Mode::Qn(width(rest)?))
                } else if let Some(rest) = s.strip_prefix('p') {
                    Ok(Mode::Pn(width(rest)?))
                } else {
                    Err(StudyError::UnknownMode(s.clone()))
                }
            }
        }
    }
}

/// Quire traffic of a kernel run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QuireAudit {
    pub inits: u64,
    pub reads: u64,
    pub accumulations: u64,
}

impl QuireAudit {
    /// Average run of accumulations between two reads.
    pub fn accumulations_per_read(&self) -> f64 {
        if self.reads == 0 {
            0.0
        } else {
            self.accumulations as f64 / self.reads as f64
        }
    }
}

/// Arithmetic of one mode, with its quire and audit counters.
#[derive(Debug, Clone)]
pub struct Engine {
    mode: Mode,
    quire: Option<Quire>,
    audit: QuireAudit,
}

fn unpack(x: f64) -> UnpackedPosit {
    posit::unpack_f64(x).unwrap_or(UnpackedPosit::ZERO)
}

impl Engine {
    pub fn new(mode: Mode) -> Self {
        Engine {
            mode,
            quire: mode.posit_config().map(Quire::new),
            audit: QuireAudit::default(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn audit(&self) -> QuireAudit {
        self.audit
    }

    /// Rounds an input value into the mode's storage format.
    pub fn quantize(&self, x: f64) -> f64 {
        match self.mode {
            Mode::F64Ref => x,
            Mode::F32 | Mode::F32Qn(_) => x as f32 as f64,
            Mode::Pn(c) | Mode::Qn(c) => posit::from_f64(x, c).to_f64(),
        }
    }

    pub fn quantize_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.quantize(x)).collect()
    }

    /// Rounds a value computed elsewhere (e.g. a binary32 square root) into
    /// the storage format.
    fn store(&self, x: f64) -> f64 {
        self.quantize(x)
    }

    /// Operand as it enters the quire: binary32 data goes through the
    /// binary32-to-posit converter first.
    fn operand(&self, x: f64) -> UnpackedPosit {
        match self.mode {
            Mode::F32Qn(c) => posit::extract(posit::posit_from_binary32((x as f32).to_bits(), c)),
            _ => unpack(x),
        }
    }

    fn quire_init(&mut self, x: f64) {
        let u = self.operand(x);
        let q = self.quire.as_mut().expect("posit mode");
        q.init_unpacked(&u);
        self.audit.inits += 1;
    }

    fn quire_acc(&mut self, a: f64, b: f64, op: FusedOp) {
        let ua = self.operand(a);
        let ub = self.operand(b);
        let q = self.quire.as_mut().expect("posit mode");
        q.accumulate(&ua, &ub, op);
        self.audit.accumulations += 1;
    }

    fn quire_read(&mut self) -> f64 {
        let q = self.quire.as_ref().expect("posit mode");
        let p = q.read();
        self.audit.reads += 1;
        match self.mode {
            Mode::F32Qn(_) => f32::from_bits(posit::binary32_from_posit(p)) as f64,
            _ => p.to_f64(),
        }
    }

    /// Dot product of already-quantized vectors.
    pub fn dot(&mut self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self.mode {
            Mode::F64Ref => a.iter().zip(b).fold(0.0, |s, (&x, &y)| x.mul_add(y, s)),
            Mode::F32 => a
                .iter()
                .zip(b)
                .fold(0.0f32, |s, (&x, &y)| (x as f32).mul_add(y as f32, s)) as f64,
            Mode::Qn(_) | Mode::F32Qn(_) => {
                self.quire_init(0.0);
                for (&x, &y) in a.iter().zip(b) {
                    self.quire_acc(x, y, FusedOp::MulAdd);
                }
                self.quire_read()
            }
            Mode::Pn(_) => {
                let mut s = 0.0;
                for (&x, &y) in a.iter().zip(b) {
                    self.quire_init(s);
                    self.quire_acc(x, y, FusedOp::MulAdd);
                    s = self.quire_read();
                }
                s
            }
        }
    }

    /// `sum_i sign_i * a_i * b_i` with one rounding, for the short
    /// combinations inside Givens rotations.
    fn combine(&mut self, terms: &[(f64, f64, bool)]) -> f64 {
        match self.mode {
            Mode::F64Ref => terms.iter().fold(0.0, |s, &(x, y, neg)| (if neg { -x } else { x }).mul_add(y, s)),
            Mode::F32 => terms
                .iter()
                .fold(0.0f32, |s, &(x, y, neg)| {
                    let x = x as f32;
                    (if neg { -x } else { x }).mul_add(y as f32, s)
                }) as f64,
            _ => {
                self.quire_init(0.0);
                for &(x, y, neg) in terms {
                    self.quire_acc(x, y, if neg { FusedOp::MulSub } else { FusedOp::MulAdd });
                }
                self.quire_read()
            }
        }
    }
}

/// Exact-input xDot in `mode`. Inputs are quantized into the mode first.
pub fn xdot(a: &[f64], b: &[f64], mode: Mode) -> Result<f64, StudyError> {
    if a.len() != b.len() {
        return Err(StudyError::Shape(a.len(), b.len()));
    }
    let mut e = Engine::new(mode);
    let qa = e.quantize_all(a);
    let qb = e.quantize_all(b);
    Ok(e.dot(&qa, &qb))
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.at(r, c));
            }
        }
        t
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::new(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }
}

/// y = A x, one quire init/read per output element.
pub fn xgemv_with(engine: &mut Engine, a: &Matrix, x: &[f64]) -> Result<Vec<f64>, StudyError> {
    if a.cols != x.len() {
        return Err(StudyError::Shape(a.cols, x.len()));
    }
    let qa = a.map(|v| engine.quantize(v));
    let qx = engine.quantize_all(x);
    Ok((0..a.rows).map(|r| engine.dot(qa.row(r), &qx)).collect())
}

pub fn xgemv(a: &Matrix, x: &[f64], mode: Mode) -> Result<Vec<f64>, StudyError> {
    xgemv_with(&mut Engine::new(mode), a, x)
}

/// C = A B, one quire init/read per output element.
pub fn xgemm_with(engine: &mut Engine, a: &Matrix, b: &Matrix) -> Result<Matrix, StudyError> {
    if a.cols != b.rows {
        return Err(StudyError::Shape(a.cols, b.rows));
    }
    let qa = a.map(|v| engine.quantize(v));
    let qbt = b.transpose().map(|v| engine.quantize(v));
    let mut c = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            c.set(i, j, engine.dot(qa.row(i), qbt.row(j)));
        }
    }
    Ok(c)
}

pub fn xgemm(a: &Matrix, b: &Matrix, mode: Mode) -> Result<Matrix, StudyError> {
    xgemm_with(&mut Engine::new(mode), a, b)
}

/// Result of a Givens QR: the triangular factor and the rotation count.
#[derive(Debug, Clone, PartialEq)]
pub struct GivensResult {
    pub r: Matrix,
    pub rotations: usize,
}

const GIVENS_NO_SQRT: &str =
    "the posit unit has no square root and no add, multiply or divide outside the quire; use the q<N> hybrid, which takes square roots in binary32";

/// Upper-triangularizes a square matrix with Givens rotations.
///
/// In `Qn` mode the matrix is stored as posits and every multiply-accumulate
/// goes through the quire; the rotation's square root is seeded in binary32
/// and refined by one Newton step in the quire, and the divisions use the
/// fused divide-add. `F32Qn` keeps binary32 storage, square root and
/// division, and accumulates through the quire. Pure `Pn` is refused.
pub fn xgivens_with(engine: &mut Engine, a: &Matrix) -> Result<GivensResult, StudyError> {
    if a.rows != a.cols {
        return Err(StudyError::Shape(a.rows, a.cols));
    }
    if let Mode::Pn(_) = engine.mode {
        return Err(StudyError::Unsupported {
            kernel: Kernel::Givens,
            mode: engine.mode.label(),
            reason: GIVENS_NO_SQRT,
        });
    }
    let n = a.rows;
    let mut m = a.map(|v| engine.quantize(v));
    let mut rotations = 0;
    for j in 0..n {
        for i in (j + 1..n).rev() {
            let x = m.at(i - 1, j);
            let y = m.at(i, j);
            if y == 0.0 {
                continue;
            }
            let (c, s) = rotation(engine, x, y);
            rotations += 1;
            for k in j..n {
                let top = m.at(i - 1, k);
                let bot = m.at(i, k);
                let new_top = engine.combine(&[(c, top, false), (s, bot, false)]);
                let new_bot = if k == j {
                    0.0
                } else {
                    engine.combine(&[(s, top, true), (c, bot, false)])
                };
                m.set(i - 1, k, new_top);
                m.set(i, k, new_bot);
            }
        }
    }
    Ok(GivensResult { r: m, rotations })
}

/// Rotation coefficients (c, s) with c*x + s*y = hypot(x, y).
fn rotation(engine: &mut Engine, x: f64, y: f64) -> (f64, f64) {
    match engine.mode {
        Mode::F64Ref => {
            let r = x.hypot(y);
            (x / r, y / r)
        }
        Mode::F32 => {
            let (x, y) = (x as f32, y as f32);
            let r = x.mul_add(x, y * y).sqrt();
            ((x / r) as f64, (y / r) as f64)
        }
        Mode::F32Qn(_) => {
            let r2 = engine.combine(&[(x, x, false), (y, y, false)]) as f32;
            let r = r2.sqrt();
            ((x as f32 / r) as f64, (y as f32 / r) as f64)
        }
        Mode::Qn(_) => {
            let r2 = engine.combine(&[(x, x, false), (y, y, false)]);
            let seed = engine.store((r2 as f32).sqrt() as f64);
            // r = seed/2 + r2/(2 seed): one Newton step, rounded once.
            engine.quire_init(0.0);
            engine.quire_acc(seed, 0.5, FusedOp::MulAdd);
            engine.quire_acc(r2, 2.0 * seed, FusedOp::DivAdd);
            let r = engine.quire_read();
            engine.quire_init(0.0);
            engine.quire_acc(x, r, FusedOp::DivAdd);
            let c = engine.quire_read();
            engine.quire_init(0.0);
            engine.quire_acc(y, r, FusedOp::DivAdd);
            let s = engine.quire_read();
            (c, s)
        }
        Mode::Pn(_) => unreachable!("refused by the caller"),
    }
}

pub fn xgivens(a: &Matrix, mode: Mode) -> Result<GivensResult, StudyError> {
    xgivens_with(&mut Engine::new(mode), a)
}

/// Kernels covered by the error study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Dot,
    Gemv,
    Gemm,
    Givens,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Dot => "dot",
            Kernel::Gemv => "gemv",
            Kernel::Gemm => "gemm",
            Kernel::Givens => "givens",
        }
    }

    /// Rejects kernel/mode pairs the hardware cannot run.
    pub fn check_mode(self, mode: Mode) -> Result<(), StudyError> {
        match (self, mode) {
            (Kernel::Givens, Mode::Pn(_)) => Err(StudyError::Unsupported {
                kernel: self,
                mode: mode.label(),
                reason: GIVENS_NO_SQRT,
            }),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().trim_start_matches('x') {
            "dot" => Ok(Kernel::Dot),
            "gemv" => Ok(Kernel::Gemv),
            "gemm" => Ok(Kernel::Gemm),
            "givens" => Ok(Kernel::Givens),
            _ => Err(StudyError::UnknownKernel(s.to_string())),
        }
    }
}

/// Accuracy of one (kernel, size, range, mode) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub kernel: Kernel,
    pub size: usize,
    pub range: (f64, f64),
    pub mode: Mode,
    pub trials: usize,
    pub mean_relative_error: f64,
    pub accurate_digits: f64,
    pub rms_error: f64,
    pub max_error: f64,
    pub audit: QuireAudit,
}

impl ErrorReport {
    pub const CSV_HEADER: &'static str =
        "kernel,size,range_lo,range_hi,mode,trials,mean_rel_error,accurate_digits,rms_rel_error,max_rel_error";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6e},{:.4},{:.6e},{:.6e}",
            self.kernel,
            self.size,
            self.range.0,
            self.range.1,
            self.mode,
            self.trials,
            self.mean_relative_error,
            self.accurate_digits,
            self.rms_error,
            self.max_error
        )
    }
}

/// `-log10` of a mean relative error; infinite for an exact result.
pub fn accurate_digits(mean_relative_error: f64) -> f64 {
    -mean_relative_error.log10()
}

/// Relative drop in accurate digits from `small` to `large`.
pub fn digit_drop(small: f64, large: f64) -> f64 {
    (small - large) / small
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub kernel: Kernel,
    pub sizes: Vec<usize>,
    pub range: (f64, f64),
    pub trials: usize,
    pub modes: Vec<Mode>,
    pub seed: u64,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), StudyError> {
        if self.trials == 0 {
            return Err(StudyError::Config("trials must be at least 1".into()));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(StudyError::Config("sizes must be non-empty and positive".into()));
        }
        if !self.range.0.is_finite() || !self.range.1.is_finite() || self.range.0 >= self.range.1 {
            return Err(StudyError::Config(format!(
                "empty value range [{}, {})",
                self.range.0, self.range.1
            )));
        }
        if self.modes.is_empty() {
            return Err(StudyError::Config("no modes selected".into()));
        }
        for &m in &self.modes {
            self.kernel.check_mode(m)?;
        }
        Ok(())
    }
}

/// PRNG of one trial. Each trial gets its own ChaCha8 stream, so results do
/// not depend on how trials are scheduled.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, range: (f64, f64)) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(range.0..range.1)).collect()
}

/// `len` uniform samples from `range` on stream `stream` of `seed`.
pub fn sample_uniform(len: usize, range: (f64, f64), seed: u64, stream: u64) -> Vec<f64> {
    uniform_vec(&mut trial_rng(seed, stream), len, range)
}

pub(crate) fn map_trials<T, F>(trials: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..trials).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..trials).map(f).collect()
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rel_norm_error(approx: &[f64], exact: &[f64]) -> f64 {
    let diff: Vec<f64> = approx.iter().zip(exact).map(|(a, e)| a - e).collect();
    let denom = norm2(exact);
    if denom == 0.0 {
        norm2(&diff)
    } else {
        norm2(&diff) / denom
    }
}

/// Relative error of one random trial of `kernel` at `size` in `mode`.
pub fn trial_error(
    kernel: Kernel,
    size: usize,
    range: (f64, f64),
    mode: Mode,
    seed: u64,
    trial: u64,
) -> Result<(f64, QuireAudit), StudyError> {
    kernel.check_mode(mode)?;
    let mut rng = trial_rng(seed, trial);
    let mut engine = Engine::new(mode);
    let err = match kernel {
        Kernel::Dot => {
            let a = uniform_vec(&mut rng, size, range);
            let b = uniform_vec(&mut rng, size, range);
            let exact = xdot(&a, &b, Mode::F64Ref)?;
            let qa = engine.quantize_all(&a);
            let qb = engine.quantize_all(&b);
            let got = engine.dot(&qa, &qb);
            if exact == 0.0 {
                got.abs()
            } else {
                ((got - exact) / exact).abs()
            }
        }
        Kernel::Gemv => {
            let a = Matrix::new(size, size, uniform_vec(&mut rng, size * size, range));
            let x = uniform_vec(&mut rng, size, range);
            let exact = xgemv(&a, &x, Mode::F64Ref)?;
            let got = xgemv_with(&mut engine, &a, &x)?;
            rel_norm_error(&got, &exact)
        }
        Kernel::Gemm => {
            let a = Matrix::new(size, size, uniform_vec(&mut rng, size * size, range));
            let b = Matrix::new(size, size, uniform_vec(&mut rng, size * size, range));
            let exact = xgemm(&a, &b, Mode::F64Ref)?;
            let got = xgemm_with(&mut engine, &a, &b)?;
            rel_norm_error(&got.data, &exact.data)
        }
        Kernel::Givens => {
            let a = Matrix::new(size, size, uniform_vec(&mut rng, size * size, range));
            let exact = xgivens(&a, Mode::F64Ref)?;
            let got = xgivens_with(&mut engine, &a)?;
            rel_norm_error(&got.r.data, &exact.r.data)
        }
    };
    Ok((err, engine.audit()))
}

/// Monte Carlo accuracy over every (size, mode) pair of `cfg`.
pub fn run_error_study(cfg: &StudyConfig) -> Result<Vec<ErrorReport>, StudyError> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &size in &cfg.sizes {
        for &mode in &cfg.modes {
            let results = map_trials(cfg.trials, |t| trial_error(cfg.kernel, size, cfg.range, mode, cfg.seed, t as u64));
            let mut errors = Vec::with_capacity(cfg.trials);
            let mut audit = QuireAudit::default();
            for r in results {
                let (e, a) = r?;
                errors.push(e);
                audit.inits += a.inits;
                audit.reads += a.reads;
                audit.accumulations += a.accumulations;
            }
            let n = errors.len() as f64;
            let mean = errors.iter().sum::<f64>() / n;
            let rms = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
            let max = errors.iter().cloned().fold(0.0, f64::max);
            out.push(ErrorReport {
                kernel: cfg.kernel,
                size,
                range: cfg.range,
                mode,
                trials: cfg.trials,
                mean_relative_error: mean,
                accurate_digits: accurate_digits(mean),
                rms_error: rms,
                max_error: max,
                audit,
            });
        }
    }
    Ok(out)
}

pub fn reports_to_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::from(ErrorReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Quire traffic of one run of `kernel` at `size` in `mode`, with inputs
/// drawn from [0, 1).
pub fn audit_kernel(kernel: Kernel, size: usize, mode: Mode, seed: u64) -> Result<QuireAudit, StudyError> {
    trial_error(kernel, size, (0.0, 1.0), mode, seed, 0).map(|(_, a)| a)
}

// ---------------------------------------------------------------------------
// Lucas-Kanade

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("not a binary PGM (P5) image")]
    Magic,
    #[error("malformed PGM header")]
    Header,
    #[error("only 8-bit PGM images are supported (maxval {0})")]
    Depth(u32),
    #[error("PGM data truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("frames differ in size: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("window must be odd and at least 3, got {0}")]
    Window(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Grayscale frame with pixel values 0..=255.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(width * height, pixels.len());
        Frame { width, height, pixels }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Parses a binary PGM (P5) with maxval <= 255.
    pub fn from_pgm(bytes: &[u8]) -> Result<Frame, ImageError> {
        let mut pos = 0;
        let mut token = || -> Result<String, ImageError> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(ImageError::Header);
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if token()? != "P5" {
            return Err(ImageError::Magic);
        }
        let mut num = || -> Result<usize, ImageError> { token()?.parse().map_err(|_| ImageError::Header) };
        let width = num()?;
        let height = num()?;
        let maxval = num()?;
        if maxval == 0 || maxval > 255 {
            return Err(ImageError::Depth(maxval as u32));
        }
        // exactly one whitespace byte separates the header from the data
        let data = &bytes[(pos + 1).min(bytes.len())..];
        let expected = width * height;
        if data.len() < expected {
            return Err(ImageError::Truncated {
                expected,
                found: data.len(),
            });
        }
        Ok(Frame::new(width, height, data[..expected].iter().map(|&b| b as f64).collect()))
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
        out
    }

    /// A Gaussian blob of peak `amplitude` centred at (cx, cy) over a flat
    /// background.
    pub fn gaussian_blob(width: usize, height: usize, cx: f64, cy: f64, sigma: f64, amplitude: f64) -> Frame {
        let mut px = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                px.push(16.0 + amplitude * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
            }
        }
        Frame::new(width, height, px)
    }

    /// Rounds pixels to whole grey levels, as an 8-bit image would.
    pub fn quantized(&self) -> Frame {
        self.map(|v| v.round().clamp(0.0, 255.0))
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Frame {
        Frame::new(self.width, self.height, self.pixels.iter().map(|&v| f(v)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Velocity {
    pub u: f64,
    pub v: f64,
    pub valid: bool,
}

impl Velocity {
    const INVALID: Velocity = Velocity {
        u: 0.0,
        v: 0.0,
        valid: false,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Velocity>,
    pub audit: QuireAudit,
}

impl VelocityField {
    pub fn at(&self, x: usize, y: usize) -> Velocity {
        self.data[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| v.valid).count()
    }

    /// Per-pixel Euclidean distance to `reference`; zero wherever either
    /// field is invalid.
    pub fn error_map(&self, reference: &VelocityField) -> Vec<f64> {
        self.data
            .iter()
            .zip(&reference.data)
            .map(|(a, r)| {
                if a.valid && r.valid {
                    (a.u - r.u).hypot(a.v - r.v)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Comma-separated matrix, one image row per line.
pub fn heat_map_csv(values: &[f64], width: usize) -> String {
    let mut out = String::new();
    for row in values.chunks(width) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Summary of an error map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapStats {
    pub max: f64,
    pub rms: f64,
}

pub fn map_stats(errors: &[f64]) -> MapStats {
    let n = errors.len().max(1) as f64;
    MapStats {
        max: errors.iter().cloned().fold(0.0, f64::max),
        rms: (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
    }
}

/// Pixel scale factor of the normalize option: 0..255 maps to 0..16.
pub const NORMALIZE_SCALE: f64 = 16.0 / 255.0;

/// Lucas-Kanade velocity between two frames.
///
/// Gradients are central differences (binary32, or through the quire in
/// `Qn` mode, where the pixel data are posits). The five window sums are
/// dot products in the selected mode and the 2x2 system is solved in
/// binary32 (binary64 for the reference). Pixels whose window leaves the
/// image, or whose system is singular, are invalid.
pub fn lucas_kanade(
    frame1: &Frame,
    frame2: &Frame,
    window: usize,
    mode: Mode,
    normalize: bool,
) -> Result<VelocityField, ImageError> {
    if frame1.width != frame2.width || frame1.height != frame2.height {
        return Err(ImageError::SizeMismatch(frame1.width, frame1.height, frame2.width, frame2.height));
    }
    if window < 3 || window.is_multiple_of(2) {
        return Err(ImageError::Window(window));
    }
    let (w, h) = (frame1.width, frame1.height);
    let mut engine = Engine::new(mode);
    let scale = if normalize { NORMALIZE_SCALE } else { 1.0 };
    let i1: Vec<f64> = frame1.pixels.iter().map(|&p| engine.quantize(p * scale)).collect();
    let i2: Vec<f64> = frame2.pixels.iter().map(|&p| engine.quantize(p * scale)).collect();

    // Gradients, defined away from the border.
    let mut ix = vec![0.0; w * h];
    let mut iy = vec![0.0; w * h];
    let mut it = vec![0.0; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let k = y * w + x;
            let (gx, gy, gt) = gradient(&mut engine, &i1, &i2, w, k);
            ix[k] = gx;
            iy[k] = gy;
            it[k] = gt;
        }
    }

    let half = window / 2;
    let mut data = vec![Velocity::INVALID; w * h];
    let len = window * window;
    let (mut gx, mut gy, mut gt) = (Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len));
    for y in (half + 1)..h.saturating_sub(half + 1) {
        for x in (half + 1)..w.saturating_sub(half + 1) {
            gx.clear();
            gy.clear();
            gt.clear();
            for yy in y - half..=y + half {
                for xx in x - half..=x + half {
                    let k = yy * w + xx;
                    gx.push(ix[k]);
                    gy.push(iy[k]);
                    gt.push(it[k]);
                }
            }
            let sxx = engine.dot(&gx, &gx);
            let sxy = engine.dot(&gx, &gy);
            let syy = engine.dot(&gy, &gy);
            let sxt = engine.dot(&gx, &gt);
            let syt = engine.dot(&gy, &gt);
            data[y * w + x] = solve2x2(mode, sxx, sxy, syy, sxt, syt);
        }
    }
    Ok(VelocityField {
        width: w,
        height: h,
        data,
        audit: engine.audit(),
    })
}

fn gradient(engine: &mut Engine, i1: &[f64], i2: &[f64], w: usize, k: usize) -> (f64, f64, f64) {
    match engine.mode {
        Mode::F64Ref => (
            0.5 * (i1[k + 1] - i1[k - 1]),
            0.5 * (i1[k + w] - i1[k - w]),
            i2[k] - i1[k],
        ),
        Mode::Qn(_) | Mode::Pn(_) => {
            let gx = engine.combine(&[(i1[k + 1], 0.5, false), (i1[k - 1], 0.5, true)]);
            let gy = engine.combine(&[(i1[k + w], 0.5, false), (i1[k - w], 0.5, true)]);
            let gt = engine.combine(&[(i2[k], 1.0, false), (i1[k], 1.0, true)]);
            (gx, gy, gt)
        }
        Mode::F32 | Mode::F32Qn(_) => {
            let f = |i: usize, v: &[f64]| v[i] as f32;
            (
                (0.5 * (f(k + 1, i1) - f(k - 1, i1))) as f64,
                (0.5 * (f(k + w, i1) - f(k - w, i1))) as f64,
                (f(k, i2) - f(k, i1)) as f64,
            )
        }
    }
}

fn solve2x2(mode: Mode, sxx: f64, sxy: f64, syy: f64, sxt: f64, syt: f64) -> Velocity {
    if mode == Mode::F64Ref {
        let det = sxx * syy - sxy * sxy;
        if det.abs() <= 1e-9 * (sxx * syy).abs().max(f64::MIN_POSITIVE) || det == 0.0 {
            return Velocity::INVALID;
        }
        return Velocity {
            u: (-syy * sxt + sxy * syt) / det,
            v: (sxy * sxt - sxx * syt) / det,
            valid: true,
        };
    }
    let (sxx, sxy, syy, sxt, syt) = (sxx as f32, sxy as f32, syy as f32, sxt as f32, syt as f32);
    let det = sxx * syy - sxy * sxy;
    if !det.is_finite() || det.abs() <= 1e-6 * (sxx * syy).abs().max(f32::MIN_POSITIVE) || det == 0.0 {
        return Velocity::INVALID;
    }
    Velocity {
        u: ((-syy * sxt + sxy * syt) / det) as f64,
        v: ((sxy * sxt - sxx * syt) / det) as f64,
        valid: true,
    }
}
