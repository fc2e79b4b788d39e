//! Browser bindings for the posit explorer, the quire-versus-sequential
//! accuracy curve and the Lucas-Kanade error heat map. Every entry point
//! returns a JSON string so the page needs no generated types.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use posit_rv::numerics::{self, Frame, Kernel, Mode};
use posit_rv::posit::{self, PositBits, PositConfig, PositKind};

fn config(n: u32, es: u32) -> Result<PositConfig, String> {
    if !(2..=32).contains(&n) {
        return Err(format!("width {n} is outside 2..=32"));
    }
    PositConfig::new(n, es).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn error_json(message: String) -> String {
    to_json(&serde_json::json!({ "error": message }))
}

#[derive(Debug, Serialize, PartialEq)]
pub struct PositView {
    pub n: u32,
    pub es: u32,
    pub pattern: String,
    /// Bit string split into sign, regime, exponent and fraction.
    pub sign: String,
    pub regime: String,
    pub exponent: String,
    pub fraction: String,
    pub kind: &'static str,
    pub k: Option<i32>,
    pub exponent_value: Option<u32>,
    pub exact: String,
    pub value: Option<f64>,
    /// Neighbouring patterns, for stepping through the format.
    pub next_up: String,
    pub next_down: String,
}

/// Splits and describes one pattern.
pub fn view(p: PositBits) -> PositView {
    let c = p.config();
    let n = c.n() as usize;
    let digits = n.div_ceil(4);
    let bits: String = format!("{:0n$b}", p.pattern());
    let u = posit::extract(p);
    let hex = |b: u64| format!("0x{:0digits$x}", b & c.mask());

    let (sign, mut regime, mut exponent, mut fraction) = (bits[..1].to_string(), String::new(), String::new(), String::new());
    if u.kind == PositKind::Regular {
        // fields are read from the magnitude
        let mag = if u.negative { p.negate().pattern() } else { p.pattern() };
        let body: Vec<char> = format!("{:0n$b}", mag).chars().skip(1).collect();
        let first = body[0];
        let run = body.iter().take_while(|&&b| b == first).count();
        let reg_len = (run + 1).min(body.len());
        regime = body[..reg_len].iter().collect();
        let exp_len = (c.es() as usize).min(body.len() - reg_len);
        exponent = body[reg_len..reg_len + exp_len].iter().collect();
        fraction = body[reg_len + exp_len..].iter().collect();
    }
    let (kind, k, e, exact, value) = match u.kind {
        PositKind::Zero => ("zero", None, None, "0".to_string(), Some(0.0)),
        PositKind::NaR => ("NaR", None, None, "NaR".to_string(), None),
        PositKind::Regular => {
            let (k, e) = u.regime_and_exponent(c);
            let exact = posit::value_as_rational(&u).expect("regular").to_string();
            ("regular", Some(k), Some(e), exact, Some(p.to_f64()))
        }
    };
    PositView {
        n: c.n(),
        es: c.es(),
        pattern: hex(p.pattern()),
        sign,
        regime,
        exponent,
        fraction,
        kind,
        k,
        exponent_value: e,
        exact,
        value,
        next_up: hex(p.pattern().wrapping_add(1)),
        next_down: hex(p.pattern().wrapping_sub(1)),
    }
}

/// Describes a posit given either a pattern (`0x...`) or a real number,
/// which is rounded to the nearest posit.
#[wasm_bindgen]
pub fn explore_posit(n: u32, es: u32, input: &str) -> String {
    let c = match config(n, es) {
        Ok(c) => c,
        Err(e) => return error_json(e),
    };
    let t = input.trim();
    let p = if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        match u64::from_str_radix(hex, 16) {
            Ok(v) if v <= c.mask() => PositBits::new(v, c),
            _ => return error_json(format!("`{t}` is not an {n}-bit pattern")),
        }
    } else if t.eq_ignore_ascii_case("nar") {
        PositBits::nar(c)
    } else {
        match t.parse::<f64>() {
            Ok(x) => posit::from_f64(x, c),
            Err(_) => return error_json(format!("`{t}` is neither a pattern nor a number")),
        }
    };
    to_json(&view(p))
}

#[derive(Debug, Serialize, PartialEq)]
pub struct CurvePoint {
    pub length: usize,
    pub quire: f64,
    pub sequential: f64,
    pub binary32: f64,
}

/// Accurate digits of a random dot product against binary64, for lengths
/// 1, 2, 4, ... up to `max_len`: quire accumulation, one rounding per step,
/// and binary32.
pub fn curve(n: u32, es: u32, range_hi: f64, max_len: usize, trials: usize, seed: u64) -> Result<Vec<CurvePoint>, String> {
    let c = config(n, es)?;
    if !range_hi.is_finite() || range_hi <= 0.0 || trials == 0 || max_len == 0 {
        return Err("need a positive range, length and trial count".into());
    }
    let mut lengths = Vec::new();
    let mut len = 1;
    while len <= max_len {
        lengths.push(len);
        len *= 2;
    }
    let modes = [Mode::Qn(c), Mode::Pn(c), Mode::F32];
    let digits = |mode, len| -> Result<f64, String> {
        let mut sum = 0.0;
        for t in 0..trials {
            let (err, _) = numerics::trial_error(Kernel::Dot, len, (0.0, range_hi), mode, seed, t as u64)
                .map_err(|e| e.to_string())?;
            sum += err;
        }
        Ok(numerics::accurate_digits(sum / trials as f64))
    };
    lengths
        .into_iter()
        .map(|len| {
            Ok(CurvePoint {
                length: len,
                quire: digits(modes[0], len)?,
                sequential: digits(modes[1], len)?,
                binary32: digits(modes[2], len)?,
            })
        })
        .collect()
}

#[wasm_bindgen]
pub fn accuracy_curve(n: u32, es: u32, range_hi: f64, max_len: u32, trials: u32, seed: u32) -> String {
    match curve(n, es, range_hi, max_len as usize, trials as usize, seed as u64) {
        // JSON has no infinity; exact results are clamped for plotting.
        Ok(points) => to_json(
            &points
                .into_iter()
                .map(|p| CurvePoint {
                    quire: p.quire.min(17.0),
                    sequential: p.sequential.min(17.0),
                    binary32: p.binary32.min(17.0),
                    ..p
                })
                .collect::<Vec<_>>(),
        ),
        Err(e) => error_json(e),
    }
}

#[derive(Debug, Serialize, PartialEq)]
pub struct HeatMap {
    pub width: usize,
    pub height: usize,
    pub mode: String,
    pub errors: Vec<f64>,
    pub max: f64,
    pub rms: f64,
    pub valid: usize,
}

/// Absolute velocity error against binary64 for a blob moving one pixel
/// to the right.
pub fn heat_map(size: usize, mode: &str, normalize: bool) -> Result<HeatMap, String> {
    if !(12..=256).contains(&size) {
        return Err(format!("size {size} is outside 12..=256"));
    }
    let mode: Mode = mode.parse().map_err(|e: numerics::StudyError| e.to_string())?;
    let c = size as f64 / 2.0;
    let sigma = size as f64 / 8.0;
    let f1 = Frame::gaussian_blob(size, size, c - 0.5, c, sigma, 160.0).quantized();
    let f2 = Frame::gaussian_blob(size, size, c + 0.5, c, sigma, 160.0).quantized();
    let reference = numerics::lucas_kanade(&f1, &f2, 5, Mode::F64Ref, normalize).map_err(|e| e.to_string())?;
    let field = numerics::lucas_kanade(&f1, &f2, 5, mode, normalize).map_err(|e| e.to_string())?;
    let errors = field.error_map(&reference);
    let stats = numerics::map_stats(&errors);
    Ok(HeatMap {
        width: size,
        height: size,
        mode: mode.label(),
        valid: field.valid_count(),
        errors,
        max: stats.max,
        rms: stats.rms,
    })
}

#[wasm_bindgen]
pub fn lk_heat_map(size: u32, mode: &str, normalize: bool) -> String {
    match heat_map(size as usize, mode, normalize) {
        Ok(m) => to_json(&m),
        Err(e) => error_json(e),
    }
}
