//! Per-block data-flow graphs.
//!
//! Every instruction becomes an internal vertex. Register reads with no
//! earlier writer in the block become external register vertices (one per
//! register), immediates become one external constant vertex per use and
//! reads of `x0` become zero constants. Memory operations are chained in
//! program order by order edges so that no pattern can be scheduled across
//! a store/load pair.

use std::fmt;

use serde::Serialize;

use crate::bitset::VertexSet;
use crate::cfg::{BasicBlock, ControlFlowGraph, Successor};
use crate::isa::{Opcode, Reg};

/// Operand position on a consuming vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Slot {
    Rs1,
    Rs2,
    Rs3,
    Imm,
}

impl Slot {
    pub fn name(self) -> &'static str {
        match self {
            Slot::Rs1 => "RS1",
            Slot::Rs2 => "RS2",
            Slot::Rs3 => "RS3",
            Slot::Imm => "IMM",
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExternalKind {
    /// Value of a register on block entry.
    Reg(Reg),
    /// Immediate operand.
    Imm(i64),
    /// A read of `x0`.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Internal(usize),
    External(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Operand {
    pub slot: Slot,
    pub source: Source,
    /// Set on the register slots of commutative operations.
    pub commutative: bool,
}

#[derive(Clone, Debug)]
pub struct Vertex {
    pub op: Opcode,
    pub address: u64,
    pub rd: Option<Reg>,
    pub operands: Vec<Operand>,
    /// The result may be observed after the block.
    pub escape: bool,
}

impl Vertex {
    pub fn operand(&self, slot: Slot) -> Option<&Operand> {
        self.operands.iter().find(|o| o.slot == slot)
    }

    /// Whether the vertex produces a register value.
    pub fn writes(&self) -> bool {
        self.rd.is_some_and(|r| !r.is_zero())
    }
}

#[derive(Clone, Debug)]
pub struct DataFlowGraph {
    pub bb_id: usize,
    pub vertices: Vec<Vertex>,
    pub externals: Vec<ExternalKind>,
    /// Internal data consumers of each vertex (deduplicated, ascending).
    pub consumers: Vec<Vec<usize>>,
    /// Memory-order successors.
    pub order_succs: Vec<Vec<usize>>,
    /// Memory-order predecessors.
    pub order_preds: Vec<Vec<usize>>,
    descendants: Vec<VertexSet>,
}

/// Registers live on block exit, as a bit mask over `x0`..`x31`.
pub type LiveMask = u32;

pub const ALL_LIVE: LiveMask = !1;

impl DataFlowGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn empty_set(&self) -> VertexSet {
        VertexSet::new(self.len())
    }

    /// Internal producers of `v` (data edges only).
    pub fn producers(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.vertices[v].operands.iter().filter_map(|o| match o.source {
            Source::Internal(p) => Some(p),
            Source::External(_) => None,
        })
    }

    /// All direct successors of `v`, data and order edges.
    pub fn successors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.consumers[v]
            .iter()
            .chain(self.order_succs[v].iter())
            .copied()
    }

    pub fn predecessors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.producers(v).chain(self.order_preds[v].iter().copied())
    }

    /// Vertices reachable from `v` by at least one edge.
    pub fn descendants(&self, v: usize) -> &VertexSet {
        &self.descendants[v]
    }

    fn compute_descendants(&mut self) {
        let n = self.len();
        let mut desc = vec![VertexSet::new(n); n];
        for v in (0..n).rev() {
            let mut d = VertexSet::new(n);
            for s in self.successors(v) {
                d.insert(s);
                d.union_with(&desc[s]);
            }
            desc[v] = d;
        }
        self.descendants = desc;
    }
}

/// Builds the DFG of a block treating every register as live on exit.
pub fn build_dfg(bb: &BasicBlock) -> DataFlowGraph {
    build_dfg_with_liveness(bb, ALL_LIVE)
}

/// Builds the DFG of a block given the registers live on exit.
///
/// A vertex escapes when it has no in-block consumer, or when it is the last
/// writer of a register that is live on exit.
pub fn build_dfg_with_liveness(bb: &BasicBlock, live_out: LiveMask) -> DataFlowGraph {
    let n = bb.instructions.len();
    let mut externals: Vec<ExternalKind> = Vec::new();
    let mut reg_external: [Option<usize>; 32] = [None; 32];
    let mut last_writer: [Option<usize>; 32] = [None; 32];
    let mut vertices = Vec::with_capacity(n);
    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order_succs: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order_preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut last_mem: Option<usize> = None;

    for (v, ins) in bb.instructions.iter().enumerate() {
        let commutative = ins.op.is_commutative();
        let mut operands = Vec::new();
        for (slot, reg) in [(Slot::Rs1, ins.rs1), (Slot::Rs2, ins.rs2), (Slot::Rs3, ins.rs3)] {
            let Some(r) = reg else { continue };
            let source = if r.is_zero() {
                externals.push(ExternalKind::Zero);
                Source::External(externals.len() - 1)
            } else if let Some(p) = last_writer[r.index()] {
                if !consumers[p].contains(&v) {
                    consumers[p].push(v);
                }
                Source::Internal(p)
            } else {
                let e = *reg_external[r.index()].get_or_insert_with(|| {
                    externals.push(ExternalKind::Reg(r));
                    externals.len() - 1
                });
                Source::External(e)
            };
            operands.push(Operand {
                slot,
                source,
                commutative: commutative && slot != Slot::Rs3,
            });
        }
        if let Some(value) = ins.imm {
            externals.push(ExternalKind::Imm(value));
            operands.push(Operand {
                slot: Slot::Imm,
                source: Source::External(externals.len() - 1),
                commutative: false,
            });
        }
        if ins.op.is_memory() {
            if let Some(m) = last_mem {
                order_succs[m].push(v);
                order_preds[v].push(m);
            }
            last_mem = Some(v);
        }
        let rd = ins.op.has_rd().then_some(ins.rd).flatten();
        if let Some(r) = rd.filter(|r| !r.is_zero()) {
            last_writer[r.index()] = Some(v);
        }
        vertices.push(Vertex {
            op: ins.op,
            address: ins.address,
            rd,
            operands,
            escape: false,
        });
    }

    for (v, vx) in vertices.iter_mut().enumerate() {
        let Some(r) = vx.rd.filter(|r| !r.is_zero()) else {
            continue;
        };
        let last = last_writer[r.index()] == Some(v);
        vx.escape = consumers[v].is_empty() || (last && live_out & (1 << r.index()) != 0);
    }

    let mut g = DataFlowGraph {
        bb_id: bb.id,
        vertices,
        externals,
        consumers,
        order_succs,
        order_preds,
        descendants: Vec::new(),
    };
    g.compute_descendants();
    g
}

/// Registers live on exit of every block, by backward data-flow over the CFG.
/// Unknown successors (indirect jumps, region ends) keep every register
/// live; a system call reads a0-a7.
pub fn live_out(cfg: &ControlFlowGraph) -> Vec<LiveMask> {
    let n = cfg.blocks.len();
    let mut uses = vec![0u32; n];
    let mut defs = vec![0u32; n];
    for b in &cfg.blocks {
        for ins in &b.instructions {
            for r in ins.sources() {
                if defs[b.id] & (1 << r.index()) == 0 {
                    uses[b.id] |= 1 << r.index();
                }
            }
            if ins.op == Opcode::Ecall {
                // a0-a7 feed the environment call.
                uses[b.id] |= 0xff << 10 & !defs[b.id];
            }
            if let Some(r) = ins.rd.filter(|_| ins.op.has_rd()) {
                defs[b.id] |= 1 << r.index();
            }
        }
    }
    let succs: Vec<Vec<Successor>> = (0..n).map(|b| cfg.successors(b)).collect();
    let mut live_in = vec![0u32; n];
    let mut live_out = vec![0u32; n];
    let mut changed = true;
    while changed {
        changed = false;
        for b in (0..n).rev() {
            let out = succs[b].iter().fold(0u32, |acc, s| match s {
                Successor::Block(t) => acc | live_in[*t],
                Successor::Unknown => ALL_LIVE,
            }) & ALL_LIVE;
            let inn = (uses[b] | (out & !defs[b])) & ALL_LIVE;
            if out != live_out[b] || inn != live_in[b] {
                live_out[b] = out;
                live_in[b] = inn;
                changed = true;
            }
        }
    }
    live_out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::{build_cfg, Terminator};
    use crate::isa::Instruction;

    fn block(code: Vec<Instruction>) -> BasicBlock {
        BasicBlock {
            id: 0,
            start_address: code.first().map_or(0, |i| i.address),
            instructions: code,
            terminator: Terminator::End,
        }
    }

    fn r(op: Opcode, addr: u64, rd: u8, rs1: u8, rs2: u8) -> Instruction {
        let mut i = Instruction::new(addr, op);
        i.rd = Reg::new(rd);
        i.rs1 = Reg::new(rs1);
        i.rs2 = Reg::new(rs2);
        i
    }

    fn imm(op: Opcode, addr: u64, rd: u8, rs1: u8, imm: i64) -> Instruction {
        let mut i = Instruction::new(addr, op);
        i.rd = Reg::new(rd);
        i.rs1 = Reg::new(rs1);
        i.imm = Some(imm);
        i
    }

    #[test]
    fn addi_feeding_add_twice() {
        let g = build_dfg(&block(vec![
            imm(Opcode::Addi, 0, 5, 6, 1),
            r(Opcode::Add, 4, 7, 5, 5),
        ]));
        assert_eq!(g.len(), 2);
        assert_eq!(g.externals, vec![ExternalKind::Reg(Reg::new(6).unwrap()), ExternalKind::Imm(1)]);
        let add = &g.vertices[1];
        assert_eq!(add.operand(Slot::Rs1).unwrap().source, Source::Internal(0));
        assert_eq!(add.operand(Slot::Rs2).unwrap().source, Source::Internal(0));
        assert!(add.operand(Slot::Rs1).unwrap().commutative);
        assert_eq!(g.consumers[0], vec![1]);
        // x5 is never overwritten, so it may be live after the block.
        assert!(g.vertices[0].escape);
        assert!(g.vertices[1].escape);
    }

    #[test]
    fn last_writer_before_use() {
        let g = build_dfg(&block(vec![
            imm(Opcode::Addi, 0, 5, 6, 1),
            r(Opcode::Add, 4, 7, 5, 6),
            imm(Opcode::Addi, 8, 5, 6, 2),
        ]));
        assert_eq!(g.vertices[1].operand(Slot::Rs1).unwrap().source, Source::Internal(0));
        assert!(!g.vertices[0].escape, "overwritten and consumed in block");
        assert!(g.vertices[2].escape);
        // x6 is one shared external vertex.
        let regs = g.externals.iter().filter(|e| matches!(e, ExternalKind::Reg(_))).count();
        assert_eq!(regs, 1);
    }

    #[test]
    fn single_instruction_escapes() {
        let g = build_dfg(&block(vec![imm(Opcode::Addi, 0, 5, 6, 1)]));
        assert_eq!(g.len(), 1);
        assert!(g.vertices[0].escape);
    }

    #[test]
    fn zero_register_reads_are_constants() {
        let g = build_dfg(&block(vec![r(Opcode::Sub, 0, 5, 0, 6)]));
        let src = g.vertices[0].operand(Slot::Rs1).unwrap().source;
        let Source::External(e) = src else { panic!() };
        assert_eq!(g.externals[e], ExternalKind::Zero);
    }

    #[test]
    fn memory_operations_are_serialized() {
        let mut sw = Instruction::new(4, Opcode::Sw);
        sw.rs1 = Reg::new(10);
        sw.rs2 = Reg::new(5);
        sw.imm = Some(0);
        let g = build_dfg(&block(vec![
            imm(Opcode::Lw, 0, 5, 10, 0),
            sw,
            imm(Opcode::Lw, 8, 6, 10, 4),
            imm(Opcode::Addi, 12, 7, 6, 1),
        ]));
        assert_eq!(g.order_succs[0], vec![1]);
        assert_eq!(g.order_succs[1], vec![2]);
        assert!(g.descendants(0).contains(3));
        assert!(!g.descendants(3).contains(0));
    }

    #[test]
    fn liveness_refines_escape() {
        // 0: addi x5,x6,1 ; 4: add x7,x5,x6 ; 8: jal x0, +8 ; 12: (dead) ; 16: addi x10,x7,0 ; 20: jal x0, 0
        let mut jal = Instruction::new(8, Opcode::Jal);
        jal.rd = Reg::new(0);
        jal.imm = Some(8);
        let mut spin = Instruction::new(20, Opcode::Jal);
        spin.rd = Reg::new(0);
        spin.imm = Some(0);
        let code = vec![
            imm(Opcode::Addi, 0, 5, 6, 1),
            r(Opcode::Add, 4, 7, 5, 6),
            jal,
            imm(Opcode::Addi, 12, 0, 0, 0),
            imm(Opcode::Addi, 16, 10, 7, 0),
            spin,
        ];
        let cfg = build_cfg(&code, 0);
        let live = live_out(&cfg);
        let g = build_dfg_with_liveness(&cfg.blocks[0], live[0]);
        // x5 is dead after block 0 (only x7 flows on), so the addi does not escape.
        assert!(!g.vertices[0].escape);
        assert!(g.vertices[1].escape);
        let conservative = build_dfg(&cfg.blocks[0]);
        assert!(conservative.vertices[0].escape);
    }
}
