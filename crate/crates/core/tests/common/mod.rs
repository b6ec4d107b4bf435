//! Random program generators shared by the integration tests.
#![allow(dead_code)]

pub mod brute;
pub mod cover;
pub mod disguise;

use cidre_core::cfg::{BasicBlock, Terminator};
use cidre_core::isa::{encode, Format, ImmKind, Instruction, OpClass, Opcode, Reg};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BASE: u64 = 0x8000_0000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn alu_ops() -> Vec<Opcode> {
    all_ops()
        .into_iter()
        .filter(|o| o.class() == OpClass::Alu)
        .collect()
}

pub fn all_ops() -> Vec<Opcode> {
    use Opcode::*;
    vec![
        Lui, Auipc, Jal, Jalr, Beq, Bne, Blt, Bge, Bltu, Bgeu, Lb, Lh, Lw, Ld, Lbu, Lhu, Lwu, Sb,
        Sh, Sw, Sd, Addi, Slti, Sltiu, Xori, Ori, Andi, Slli, Srli, Srai, Add, Sub, Sll, Slt, Sltu,
        Xor, Srl, Sra, Or, And, Fence, Ecall, Ebreak, Addiw, Slliw, Srliw, Sraiw, Addw, Subw, Sllw,
        Srlw, Sraw, Mul, Mulh, Mulhsu, Mulhu, Div, Divu, Rem, Remu, Mulw, Divw, Divuw, Remw,
        Remuw,
    ]
}

/// A random immediate that the encoding of `op` can hold.
pub fn random_imm(rng: &mut impl Rng, op: Opcode) -> Option<i64> {
    let v = match op.imm_kind() {
        ImmKind::None => return None,
        ImmKind::Signed(bits) => {
            let half = 1i64 << (bits - 1);
            // Small values are frequent in real code and make sharing likely.
            let v = if rng.gen_bool(0.5) {
                rng.gen_range(-40..40)
            } else {
                rng.gen_range(-half..half)
            };
            match op.format() {
                Format::B | Format::J => v & !1,
                _ => v,
            }
        }
        ImmKind::Unsigned(bits) => rng.gen_range(0..1i64 << bits),
    };
    Some(v)
}

/// A random instruction of `op` whose registers come from `pool`.
pub fn random_instruction(rng: &mut impl Rng, address: u64, op: Opcode, pool: &[u8]) -> Instruction {
    let mut i = Instruction::new(address, op);
    let pick = |rng: &mut dyn rand::RngCore| Reg::new(*pool.choose(rng).unwrap());
    if op.has_rd() {
        i.rd = pick(rng);
    }
    if op.has_rs1() {
        i.rs1 = pick(rng);
    }
    if op.has_rs2() {
        i.rs2 = pick(rng);
    }
    i.imm = random_imm(rng, op);
    i.raw = encode(&i).expect("generated instruction encodes");
    i
}

/// A straight-line block of ALU operations with some loads and stores.
pub fn random_block(rng: &mut impl Rng, len: usize, mem_fraction: f64, pool: &[u8]) -> BasicBlock {
    let alu = alu_ops();
    let instructions: Vec<Instruction> = (0..len)
        .map(|k| {
            let address = BASE + 4 * k as u64;
            let op = if rng.gen_bool(mem_fraction) {
                *[Opcode::Lw, Opcode::Sw, Opcode::Ld].choose(rng).unwrap()
            } else {
                *alu.choose(rng).unwrap()
            };
            random_instruction(rng, address, op, pool)
        })
        .collect();
    BasicBlock {
        id: 0,
        start_address: BASE,
        instructions,
        terminator: Terminator::End,
    }
}

/// Register pool with `x0` and a handful of temporaries.
pub const POOL: [u8; 7] = [0, 5, 6, 7, 10, 11, 12];

pub fn r_type(op: Opcode, rd: u8, rs1: u8, rs2: u8) -> Instruction {
    let mut i = Instruction::new(0, op);
    i.rd = Reg::new(rd);
    i.rs1 = Reg::new(rs1);
    i.rs2 = Reg::new(rs2);
    i
}

pub fn i_type(op: Opcode, rd: u8, rs1: u8, imm: i64) -> Instruction {
    let mut i = Instruction::new(0, op);
    i.rd = Reg::new(rd);
    i.rs1 = Reg::new(rs1);
    i.imm = Some(imm);
    i
}

pub fn branch(op: Opcode, rs1: u8, rs2: u8, offset: i64) -> Instruction {
    let mut i = Instruction::new(0, op);
    i.rs1 = Reg::new(rs1);
    i.rs2 = Reg::new(rs2);
    i.imm = Some(offset);
    i
}

pub fn ecall() -> Instruction {
    Instruction::new(0, Opcode::Ecall)
}

/// Places `code` at `BASE` and encodes it.
pub fn assemble(code: &[Instruction]) -> cidre_core::image::ProgramImage {
    let words: Vec<u32> = code
        .iter()
        .enumerate()
        .map(|(k, i)| {
            let mut i = *i;
            i.address = BASE + 4 * k as u64;
            encode(&i).expect("test program encodes")
        })
        .collect();
    cidre_core::image::ProgramImage::from_words(BASE, &words)
}

/// A counted loop around a random ALU body, exiting with `a0`.
/// x11 counts down from `trips`; the body never writes x11 or x17.
pub fn random_loop_program(rng: &mut impl Rng, body: usize, trips: i64) -> cidre_core::image::ProgramImage {
    let alu: Vec<Opcode> = alu_ops()
        .into_iter()
        .filter(|&o| o != Opcode::Auipc)
        .collect();
    let pool = [0u8, 5, 6, 7, 10, 12, 13];
    let mut code = vec![
        i_type(Opcode::Addi, 11, 0, trips),
        i_type(Opcode::Addi, 5, 0, rng.gen_range(-100..100)),
        i_type(Opcode::Addi, 6, 0, rng.gen_range(-100..100)),
        i_type(Opcode::Lui, 7, 0, rng.gen_range(0..1 << 19)),
        i_type(Opcode::Addi, 12, 0, rng.gen_range(-2048..2048)),
    ];
    code[3].rs1 = None;
    for _ in 0..body {
        let op = *alu.choose(rng).unwrap();
        let mut i = random_instruction(rng, 0, op, &pool);
        if i.rd.is_some_and(|r| r.is_zero()) {
            i.rd = Reg::new(10);
        }
        code.push(i);
    }
    code.push(i_type(Opcode::Addi, 11, 11, -1));
    code.push(branch(Opcode::Bne, 11, 0, -4 * (body as i64 + 1)));
    code.push(i_type(Opcode::Andi, 10, 10, 255));
    code.push(i_type(Opcode::Addi, 17, 0, 93));
    code.push(ecall());
    assemble(&code)
}
