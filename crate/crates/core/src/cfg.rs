//! Basic-block recovery over a decoded instruction stream.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::isa::{Instruction, OpClass, Opcode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminator {
    /// Conditional branch; successors are the target and the fall-through.
    Branch,
    /// `jal` with a static target.
    Jump,
    /// `jalr`; targets are not resolved.
    IndirectJump,
    /// `ecall` / `ebreak`.
    System,
    /// The next instruction is a leader.
    Fallthrough,
    /// Last instruction of a contiguous code region.
    End,
}

#[derive(Clone, Debug)]
pub struct BasicBlock {
    pub id: usize,
    pub start_address: u64,
    pub instructions: Vec<Instruction>,
    pub terminator: Terminator,
}

impl BasicBlock {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn end_address(&self) -> u64 {
        self.start_address + 4 * self.instructions.len() as u64
    }
}

/// Successor of a block, as far as it is statically known.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Successor {
    Block(usize),
    Unknown,
}

#[derive(Clone, Debug, Default)]
pub struct ControlFlowGraph {
    pub blocks: Vec<BasicBlock>,
    pub warnings: Vec<String>,
    by_leader: HashMap<u64, usize>,
}

impl ControlFlowGraph {
    pub fn block_at(&self, leader: u64) -> Option<&BasicBlock> {
        self.by_leader.get(&leader).map(|&id| &self.blocks[id])
    }

    pub fn block_id(&self, leader: u64) -> Option<usize> {
        self.by_leader.get(&leader).copied()
    }

    /// Block containing `address` and the instruction's position in it.
    pub fn locate(&self, address: u64) -> Option<(usize, usize)> {
        let idx = self
            .blocks
            .partition_point(|b| b.start_address <= address)
            .checked_sub(1)?;
        let b = &self.blocks[idx];
        (address < b.end_address() && (address - b.start_address).is_multiple_of(4))
            .then(|| (idx, ((address - b.start_address) / 4) as usize))
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn successors(&self, id: usize) -> Vec<Successor> {
        let b = &self.blocks[id];
        let last = b.instructions.last().expect("blocks are never empty");
        let next = || {
            self.block_id(b.end_address())
                .map(Successor::Block)
                .unwrap_or(Successor::Unknown)
        };
        let target = || {
            last.direct_target()
                .and_then(|t| self.block_id(t))
                .map(Successor::Block)
                .unwrap_or(Successor::Unknown)
        };
        match b.terminator {
            Terminator::Branch => vec![target(), next()],
            Terminator::Jump => vec![target()],
            Terminator::IndirectJump | Terminator::End => vec![Successor::Unknown],
            // A returning call continues with the next block; an exit
            // observes nothing beyond the call's own argument registers.
            Terminator::System => self.block_id(b.end_address()).map(Successor::Block).into_iter().collect(),
            Terminator::Fallthrough => vec![next()],
        }
    }
}

/// Splits the stream into basic blocks.
///
/// Leaders are the entry point, the first instruction of every contiguous
/// region, direct branch/jump targets inside the stream, and the instruction
/// following any branch, jump or system instruction.
pub fn build_cfg(instructions: &[Instruction], entry: u64) -> ControlFlowGraph {
    let mut cfg = ControlFlowGraph::default();
    if instructions.is_empty() {
        return cfg;
    }
    let present: HashMap<u64, usize> = instructions
        .iter()
        .enumerate()
        .map(|(k, i)| (i.address, k))
        .collect();

    let mut leaders = BTreeSet::new();
    if present.contains_key(&entry) {
        leaders.insert(entry);
    }
    let mut prev: Option<u64> = None;
    for ins in instructions {
        if prev.is_none_or(|p| p + 4 != ins.address) {
            leaders.insert(ins.address);
        }
        prev = Some(ins.address);
        if ins.is_terminator() {
            leaders.insert(ins.address + 4);
        }
        if let Some(t) = ins.direct_target() {
            if present.contains_key(&t) {
                leaders.insert(t);
            } else {
                cfg.warnings.push(format!(
                    "{:#x}: {} target {t:#x} is outside the decoded code",
                    ins.address, ins.op
                ));
            }
        }
        if ins.op == Opcode::Jalr {
            cfg.warnings.push(format!(
                "{:#x}: indirect jump, targets not resolved",
                ins.address
            ));
        }
    }

    let mut current: Vec<Instruction> = Vec::new();
    let flush = |cfg: &mut ControlFlowGraph, current: &mut Vec<Instruction>, term: Terminator| {
        if current.is_empty() {
            return;
        }
        let id = cfg.blocks.len();
        let start = current[0].address;
        cfg.by_leader.insert(start, id);
        cfg.blocks.push(BasicBlock {
            id,
            start_address: start,
            instructions: std::mem::take(current),
            terminator: term,
        });
    };
    for (k, ins) in instructions.iter().enumerate() {
        if leaders.contains(&ins.address) && !current.is_empty() {
            flush(&mut cfg, &mut current, Terminator::Fallthrough);
        }
        current.push(*ins);
        let contiguous = instructions
            .get(k + 1)
            .is_some_and(|n| n.address == ins.address + 4);
        let term = match ins.op.class() {
            OpClass::Branch => Some(Terminator::Branch),
            OpClass::Jump if ins.op == Opcode::Jal => Some(Terminator::Jump),
            OpClass::Jump => Some(Terminator::IndirectJump),
            OpClass::System if ins.is_terminator() => Some(Terminator::System),
            _ if !contiguous => Some(Terminator::End),
            _ => None,
        };
        if let Some(term) = term {
            flush(&mut cfg, &mut current, term);
        }
    }
    flush(&mut cfg, &mut current, Terminator::End);
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{Reg, Opcode};

    fn alu(addr: u64) -> Instruction {
        let mut i = Instruction::new(addr, Opcode::Addi);
        i.rd = Reg::new(5);
        i.rs1 = Reg::new(5);
        i.imm = Some(1);
        i
    }

    fn jal(addr: u64, off: i64) -> Instruction {
        let mut i = Instruction::new(addr, Opcode::Jal);
        i.rd = Reg::new(0);
        i.imm = Some(off);
        i
    }

    fn beq(addr: u64, off: i64) -> Instruction {
        let mut i = Instruction::new(addr, Opcode::Beq);
        i.rs1 = Reg::new(5);
        i.rs2 = Reg::new(0);
        i.imm = Some(off);
        i
    }

    #[test]
    fn straight_line_ending_in_jal() {
        let code = [alu(0), alu(4), jal(8, -8)];
        let cfg = build_cfg(&code, 0);
        // jal targets 0, which is already the entry.
        assert_eq!(cfg.blocks.len(), 1);
        assert_eq!(cfg.blocks[0].terminator, Terminator::Jump);
    }

    #[test]
    fn branch_splits_into_three() {
        // 0: addi; 4: addi; 8: beq -> 4; 12: addi
        let code = [alu(0), alu(4), beq(8, -4), alu(12)];
        let cfg = build_cfg(&code, 0);
        let starts: Vec<u64> = cfg.blocks.iter().map(|b| b.start_address).collect();
        assert_eq!(starts, vec![0, 4, 12]);
        assert_eq!(cfg.instruction_count(), 4);
        assert_eq!(cfg.successors(1), vec![Successor::Block(1), Successor::Block(2)]);
        assert_eq!(cfg.locate(8), Some((1, 1)));
    }

    #[test]
    fn empty_stream() {
        assert!(build_cfg(&[], 0).blocks.is_empty());
    }

    #[test]
    fn indirect_jump_warns() {
        let mut ret = Instruction::new(4, Opcode::Jalr);
        ret.rd = Reg::new(0);
        ret.rs1 = Reg::new(1);
        ret.imm = Some(0);
        let cfg = build_cfg(&[alu(0), ret, alu(8)], 0);
        assert_eq!(cfg.blocks.len(), 2);
        assert_eq!(cfg.blocks[0].terminator, Terminator::IndirectJump);
        assert_eq!(cfg.warnings.len(), 1);
    }
}
