//! Small blocks and their disguised copies and near misses.

use cidre_core::canon::{canonical_form, iso_check};
use cidre_core::cfg::{BasicBlock, Terminator};
use cidre_core::dfg::DataFlowGraph;
use cidre_core::enumerate::{ConstraintConfig, IoShape, SubgraphPattern};
use cidre_core::isa::{Format, Instruction, Opcode, Reg};
use rand::seq::SliceRandom;
use rand::Rng;

use super::BASE;

pub const R_OPS: [Opcode; 6] = [Opcode::Add, Opcode::Sub, Opcode::Xor, Opcode::And, Opcode::Sll, Opcode::Mul];
pub const I_OPS: [Opcode; 4] = [Opcode::Addi, Opcode::Andi, Opcode::Xori, Opcode::Slli];

pub fn small_block(r: &mut impl Rng, len: usize) -> BasicBlock {
    let regs = [5u8, 6, 7, 10, 11];
    let instructions = (0..len)
        .map(|k| {
            let op = if r.gen_bool(0.65) {
                *R_OPS.choose(r).unwrap()
            } else {
                *I_OPS.choose(r).unwrap()
            };
            let mut i = Instruction::new(BASE + 4 * k as u64, op);
            i.rd = Reg::new(*regs.choose(r).unwrap());
            i.rs1 = Reg::new(*regs.choose(r).unwrap());
            if op.format() == Format::R {
                i.rs2 = Reg::new(*regs.choose(r).unwrap());
            } else {
                i.imm = Some(r.gen_range(1..4));
            }
            i
        })
        .collect();
    BasicBlock {
        id: 0,
        start_address: BASE,
        instructions,
        terminator: Terminator::End,
    }
}

pub fn conflicts(a: &Instruction, b: &Instruction) -> bool {
    let reads = |i: &Instruction| [i.rs1, i.rs2].into_iter().flatten().collect::<Vec<_>>();
    let hits = |w: Option<Reg>, rs: &[Reg]| w.is_some_and(|w| rs.contains(&w));
    hits(a.rd, &reads(b)) || hits(b.rd, &reads(a)) || (a.rd.is_some() && a.rd == b.rd)
}

/// A semantically equivalent copy: registers renamed, independent
/// instructions reordered and commutative operands swapped. Returns the copy
/// and the new position of every instruction.
pub fn disguise(r: &mut impl Rng, b: &BasicBlock) -> (BasicBlock, Vec<usize>) {
    let n = b.len();
    let mut names: Vec<u8> = (1..32).collect();
    names.shuffle(r);
    let rename = |x: Option<Reg>| x.map(|x| Reg::new(names[x.index() - 1]).unwrap());
    let mut placed = vec![false; n];
    let mut order = Vec::new();
    while order.len() < n {
        let ready: Vec<usize> = (0..n)
            .filter(|&k| !placed[k])
            .filter(|&k| (0..k).all(|j| placed[j] || !conflicts(&b.instructions[j], &b.instructions[k])))
            .collect();
        let k = *ready.choose(r).unwrap();
        placed[k] = true;
        order.push(k);
    }
    let mut position = vec![0; n];
    let instructions = order
        .iter()
        .enumerate()
        .map(|(new, &old)| {
            position[old] = new;
            let src = &b.instructions[old];
            let mut i = *src;
            i.address = BASE + 4 * new as u64;
            i.rd = rename(src.rd);
            i.rs1 = rename(src.rs1);
            i.rs2 = rename(src.rs2);
            if i.op.is_commutative() && r.gen_bool(0.5) {
                std::mem::swap(&mut i.rs1, &mut i.rs2);
            }
            i
        })
        .collect();
    (
        BasicBlock {
            id: 1,
            start_address: BASE,
            instructions,
            terminator: Terminator::End,
        },
        position,
    )
}

/// Changes one member instruction: another mnemonic of the same format, a
/// swapped operand pair or another immediate.
pub fn near_miss(r: &mut impl Rng, b: &mut BasicBlock, member: usize) {
    let i = &mut b.instructions[member];
    match (i.op.format(), r.gen_range(0..2)) {
        (Format::R, 0) => {
            std::mem::swap(&mut i.rs1, &mut i.rs2);
        }
        (Format::R, _) => {
            i.op = **R_OPS.iter().filter(|&&o| o != i.op).collect::<Vec<_>>().choose(r).unwrap();
        }
        (_, 0) => i.imm = i.imm.map(|v| v + 1),
        _ => i.op = **I_OPS.iter().filter(|&&o| o != i.op).collect::<Vec<_>>().choose(r).unwrap(),
    }
}

pub fn config() -> ConstraintConfig {
    ConstraintConfig::with_io(IoShape::new(3, 2).unwrap())
}

pub fn agree(g1: &DataFlowGraph, p1: &SubgraphPattern, g2: &DataFlowGraph, p2: &SubgraphPattern) -> bool {
    let same_cf = canonical_form(g1, p1) == canonical_form(g2, p2);
    let iso = iso_check(g1, p1, g2, p2);
    assert_eq!(
        same_cf, iso,
        "cf {same_cf} iso {iso}\n{:?}\n{:?}",
        p1.vertices, p2.vertices
    );
    iso
}

