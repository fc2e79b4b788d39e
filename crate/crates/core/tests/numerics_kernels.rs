mod common;

use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use posit_rv::numerics::{self, Frame, Kernel, Matrix, Mode, StudyConfig, StudyError};
use posit_rv::posit::{self, PositConfig};

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

#[test]
fn reference_mode_matches_a_naive_loop_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_matrix(&mut rng, 9, 7);
    let b = random_matrix(&mut rng, 7, 5);
    let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let naive_dot = |u: &[f64], v: &[f64]| {
        let mut s = 0.0f64;
        for i in 0..u.len() {
            s = u[i].mul_add(v[i], s);
        }
        s
    };
    assert_eq!(numerics::xdot(a.row(0), &x, Mode::F64Ref).unwrap(), naive_dot(a.row(0), &x));

    let y = numerics::xgemv(&a, &x, Mode::F64Ref).unwrap();
    for (r, yr) in y.iter().enumerate() {
        assert_eq!(yr.to_bits(), naive_dot(a.row(r), &x).to_bits());
    }
    let c = numerics::xgemm(&a, &b, Mode::F64Ref).unwrap();
    for i in 0..9 {
        for j in 0..5 {
            let col: Vec<f64> = (0..7).map(|k| b.at(k, j)).collect();
            assert_eq!(c.at(i, j).to_bits(), naive_dot(a.row(i), &col).to_bits());
        }
    }
}

#[test]
fn f32_mode_is_a_binary32_fma_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..10.0)).collect();
    let b: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..10.0)).collect();
    let mut s = 0.0f32;
    for i in 0..100 {
        s = (a[i] as f32).mul_add(b[i] as f32, s);
    }
    assert_eq!(numerics::xdot(&a, &b, Mode::F32).unwrap(), s as f64);
}

#[test]
fn quire_dot_is_the_rounded_exact_sum_at_32_bits() {
    let c = PositConfig::P32;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for len in [1, 10, 100, 1000] {
        let a: Vec<f64> = (0..len).map(|_| posit::from_f64(rng.gen_range(-10.0..10.0), c).to_f64()).collect();
        let b: Vec<f64> = (0..len).map(|_| posit::from_f64(rng.gen_range(-10.0..10.0), c).to_f64()).collect();
        let mut exact = BigRational::zero();
        for (x, y) in a.iter().zip(&b) {
            exact += common::rational_of_f64(*x) * common::rational_of_f64(*y);
        }
        let got = numerics::xdot(&a, &b, Mode::Qn(c)).unwrap();
        assert_eq!(posit::from_f64(got, c).pattern(), common::round(&exact, 32, 2), "len {len}");
    }
}

#[test]
fn f32_data_with_quire_rounds_once_then_converts() {
    let c = PositConfig::P32;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0f32) as f64).collect();
    let b: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0f32) as f64).collect();
    let mut exact = BigRational::zero();
    for (x, y) in a.iter().zip(&b) {
        // operands pass through the binary32-to-posit converter
        let px = common::round(&common::rational_of_f64(*x), 32, 2);
        let py = common::round(&common::rational_of_f64(*y), 32, 2);
        exact += common::decode(px, 32, 2).unwrap() * common::decode(py, 32, 2).unwrap();
    }
    let p = common::round(&exact, 32, 2);
    let want = common::round_f32(&common::decode(p, 32, 2).unwrap());
    assert_eq!(numerics::xdot(&a, &b, Mode::F32Qn(c)).unwrap(), want as f64);
}

#[test]
fn quire_traffic_follows_the_kernel_shapes() {
    let q = Mode::Qn(PositConfig::P16);
    for n in [4usize, 16, 64] {
        let dot = numerics::audit_kernel(Kernel::Dot, n * n, q, 1).unwrap();
        assert_eq!((dot.reads, dot.accumulations), (1, (n * n) as u64));
        let gemv = numerics::audit_kernel(Kernel::Gemv, n, q, 1).unwrap();
        assert_eq!((gemv.inits, gemv.reads, gemv.accumulations), (n as u64, n as u64, (n * n) as u64));
    }
    let gemm = numerics::audit_kernel(Kernel::Gemm, 16, q, 1).unwrap();
    assert_eq!((gemm.reads, gemm.accumulations_per_read()), (256, 16.0));
    // sequential posit mode: one read per accumulation
    let p = numerics::audit_kernel(Kernel::Dot, 100, Mode::Pn(PositConfig::P16), 1).unwrap();
    assert_eq!((p.reads, p.accumulations), (100, 100));
}

#[test]
fn studies_are_reproducible_and_validated() {
    let cfg = StudyConfig {
        kernel: Kernel::Gemv,
        sizes: vec![4, 8],
        range: (0.0, 1.0),
        trials: 20,
        modes: vec![Mode::F32, Mode::Qn(PositConfig::P32), Mode::Pn(PositConfig::P16)],
        seed: 17,
    };
    let a = numerics::run_error_study(&cfg).unwrap();
    let b = numerics::run_error_study(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 6);
    let csv = numerics::reports_to_csv(&a);
    assert!(csv.starts_with(numerics::ErrorReport::CSV_HEADER));
    assert_eq!(csv.lines().count(), 7);

    let bad = StudyConfig { trials: 0, ..cfg.clone() };
    assert!(matches!(numerics::run_error_study(&bad), Err(StudyError::Config(_))));
    let givens = StudyConfig {
        kernel: Kernel::Givens,
        modes: vec![Mode::Pn(PositConfig::P32)],
        ..cfg
    };
    let err = numerics::run_error_study(&givens).unwrap_err();
    assert!(err.to_string().contains("square root"), "{err}");
}

#[test]
fn quire_beats_sequential_posits_on_long_sums() {
    let cfg = StudyConfig {
        kernel: Kernel::Dot,
        sizes: vec![1000],
        range: (0.0, 1.0),
        trials: 50,
        modes: vec![Mode::Qn(PositConfig::P16), Mode::Pn(PositConfig::P16)],
        seed: 5,
    };
    let r = numerics::run_error_study(&cfg).unwrap();
    assert!(r[0].accurate_digits > r[1].accurate_digits + 1.0);
}

#[test]
fn translated_blob_moves_right() {
    let f1 = Frame::gaussian_blob(32, 32, 15.0, 16.0, 4.0, 120.0);
    let f2 = Frame::gaussian_blob(32, 32, 16.0, 16.0, 4.0, 120.0);
    let modes = [
        Mode::F64Ref,
        Mode::F32,
        Mode::F32Qn(PositConfig::P32),
        Mode::Qn(PositConfig::P32),
    ];
    for mode in modes {
        for normalize in [false, true] {
            let v = numerics::lucas_kanade(&f1, &f2, 5, mode, normalize).unwrap();
            // pixels near the blob's flank carry the signal
            let mut checked = 0;
            for y in 12..=20 {
                for x in 8..=22 {
                    let p = v.at(x, y);
                    if p.valid {
                        assert!(p.u > 0.5 && p.u < 1.5, "{mode} ({x},{y}) u = {}", p.u);
                        assert!(p.v.abs() < 0.3, "{mode} ({x},{y}) v = {}", p.v);
                        checked += 1;
                    }
                }
            }
            assert!(checked > 50, "{mode}: only {checked} valid pixels");
        }
    }
}

#[test]
fn heat_maps_against_the_reference() {
    let f1 = Frame::gaussian_blob(24, 24, 11.0, 12.0, 3.0, 100.0).quantized();
    let f2 = Frame::gaussian_blob(24, 24, 12.0, 12.5, 3.0, 100.0).quantized();
    let reference = numerics::lucas_kanade(&f1, &f2, 5, Mode::F64Ref, true).unwrap();
    let mut rms = Vec::new();
    for mode in [Mode::F32, Mode::F32Qn(PositConfig::P32), Mode::Qn(PositConfig::P32), Mode::Qn(PositConfig::P8)] {
        let v = numerics::lucas_kanade(&f1, &f2, 5, mode, true).unwrap();
        let errors = v.error_map(&reference);
        let csv = numerics::heat_map_csv(&errors, 24);
        assert_eq!(csv.lines().count(), 24);
        assert!(csv.lines().all(|l| l.split(',').count() == 24));
        rms.push(numerics::map_stats(&errors).rms);
        assert!(v.audit.reads > 0 || matches!(mode, Mode::F32));
    }
    // eight-bit posits are far coarser than the 32-bit formats
    assert!(rms[3] > 10.0 * rms[0].max(rms[1]).max(rms[2]), "{rms:?}");
}

#[test]
fn lk_input_checks() {
    let f = Frame::gaussian_blob(10, 10, 5.0, 5.0, 2.0, 50.0);
    let g = Frame::gaussian_blob(11, 10, 5.0, 5.0, 2.0, 50.0);
    assert!(numerics::lucas_kanade(&f, &g, 5, Mode::F32, false).is_err());
    assert!(numerics::lucas_kanade(&f, &f, 4, Mode::F32, false).is_err());
    // a flat image gives a singular system everywhere
    let flat = Frame::new(10, 10, vec![40.0; 100]);
    assert_eq!(numerics::lucas_kanade(&flat, &flat, 3, Mode::F32, false).unwrap().valid_count(), 0);
}

proptest! {
    #[test]
    fn accurate_digits_fall_as_error_grows(a in 1e-15f64..1.0, b in 1e-15f64..1.0) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(numerics::accurate_digits(lo) > numerics::accurate_digits(hi));
    }

    #[test]
    fn identity_is_neutral(x in prop::collection::vec(-100.0f64..100.0, 1..12)) {
        for mode in [Mode::F32, Mode::Qn(PositConfig::P32), Mode::Pn(PositConfig::P16)] {
            let e = numerics::Engine::new(mode);
            let q = e.quantize_all(&x);
            let y = numerics::xgemv(&Matrix::identity(x.len()), &q, mode).unwrap();
            prop_assert_eq!(y, q);
        }
    }
}
