use proptest::prelude::*;

use posit_rv::isa::{self, Instruction, Op, RegFile};
use posit_rv::programs;

const GOLDEN_TABLE: &str = include_str!("golden/encoding_table.csv");

#[test]
fn encoding_table_matches_golden_file() {
    let table = isa::encoding_table_csv();
    if table != GOLDEN_TABLE {
        for (i, (got, want)) in table.lines().zip(GOLDEN_TABLE.lines()).enumerate() {
            assert_eq!(got, want, "line {}", i + 1);
        }
        assert_eq!(table.lines().count(), GOLDEN_TABLE.lines().count());
    }
}

#[test]
fn every_row_decodes_to_itself() {
    for op in Op::all() {
        let info = op.info();
        let inst = isa::decode(info.match_bits).unwrap_or_else(|e| panic!("{}: {e}", info.mnemonic));
        assert_eq!(inst.op, op);
    }
}

#[test]
fn match_patterns_do_not_overlap() {
    let ops: Vec<Op> = Op::all().collect();
    for (i, a) in ops.iter().enumerate() {
        for b in &ops[i + 1..] {
            let (a, b) = (a.info(), b.info());
            let common = a.mask & b.mask;
            assert_ne!(a.match_bits & common, b.match_bits & common, "{} vs {}", a.mnemonic, b.mnemonic);
        }
    }
}

#[test]
#[allow(clippy::unusual_byte_groupings)]
fn posit_words_by_hand() {
    // fma.p p1, p2: funct7 0110010, rs2 2, rs1 1, funct3 000, rd 0, opcode 1010011
    let w = isa::encode(&Instruction::new(Op::FmaP).rs1(1).rs2(2)).unwrap();
    assert_eq!(w, 0b0110010_00010_00001_000_00000_1010011);
    // plw p3, 8(a0)
    let w = isa::encode(&Instruction::new(Op::Plw).rd(3).rs1(10).imm(8)).unwrap();
    assert_eq!(w, (8 << 20) | (10 << 15) | (0b110 << 12) | (3 << 7) | 0b0000111);
    assert_eq!(isa::disassemble_word(w), "plw p3, 8(a0)");
    assert_eq!(isa::reg_name(RegFile::P, 7), "p7");
}

#[test]
fn listings_survive_disassembly() {
    for src in [programs::VDP_POSITS, programs::VDP_FLOATS] {
        let p = isa::assemble(src).unwrap();
        let text = isa::disassemble_program(&p.words);
        let again = isa::assemble(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert_eq!(again.words, p.words);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5000))]

    #[test]
    fn decode_encode_round_trip(pick in any::<prop::sample::Index>(), noise in any::<u32>()) {
        let ops: Vec<Op> = Op::all().collect();
        let info = pick.get(&ops).info();
        let word = info.match_bits | (noise & !info.mask);
        if let Ok(inst) = isa::decode(word) {
            prop_assert_eq!(inst.op, info.op);
            prop_assert_eq!(isa::encode(&inst), Ok(word));
            let text = isa::disassemble(&inst);
            // branch/jump targets print relative to pc 0 in isolation
            if !matches!(info.format, isa::Format::B | isa::Format::J) {
                let again = isa::assemble(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
                prop_assert_eq!(again.words, vec![word], "{}", text);
            }
        } else {
            // only the reserved rounding modes are rejected
            prop_assert!(info.has_rm && matches!((word >> 12) & 7, 5 | 6));
        }
    }
}
