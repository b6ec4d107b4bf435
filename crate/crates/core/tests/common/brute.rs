//! Brute-force enumeration over every subset, built straight from the
//! instruction list rather than from the DFG.

use std::collections::BTreeSet;

use cidre_core::dfg::LiveMask;
use cidre_core::enumerate::{ConstraintConfig, IoShape};
use cidre_core::isa::{Instruction, OpClass, Opcode};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum In {
    Vertex(usize),
    Entry(usize),
    Zero,
    Imm(i64),
}

/// Block facts recomputed from the instructions.
pub struct Reference {
    pub ops: Vec<Opcode>,
    pub addresses: Vec<u64>,
    pub inputs: Vec<Vec<In>>,
    pub consumers: Vec<BTreeSet<usize>>,
    pub escape: Vec<bool>,
    pub writes: Vec<bool>,
    /// reach[u][w]: a path of at least one edge from u to w.
    pub reach: Vec<Vec<bool>>,
}

impl Reference {
    pub fn new(code: &[Instruction], live: LiveMask) -> Reference {
        let n = code.len();
        let dest = |i: &Instruction| i.rd.filter(|r| i.op.has_rd() && !r.is_zero());
        let mut inputs = Vec::new();
        let mut consumers = vec![BTreeSet::new(); n];
        let mut edges = vec![Vec::new(); n];
        for (k, ins) in code.iter().enumerate() {
            let mut ins_in = Vec::new();
            for r in [ins.rs1, ins.rs2].into_iter().flatten() {
                if r.is_zero() {
                    ins_in.push(In::Zero);
                    continue;
                }
                match (0..k).rev().find(|&j| dest(&code[j]) == Some(r)) {
                    Some(j) => {
                        ins_in.push(In::Vertex(j));
                        consumers[j].insert(k);
                        edges[j].push(k);
                    }
                    None => ins_in.push(In::Entry(r.index())),
                }
            }
            if let Some(v) = ins.imm {
                ins_in.push(In::Imm(v));
            }
            inputs.push(ins_in);
        }
        let mem: Vec<usize> = (0..n).filter(|&k| code[k].op.is_memory()).collect();
        for w in mem.windows(2) {
            edges[w[0]].push(w[1]);
        }
        let mut reach = vec![vec![false; n]; n];
        for u in (0..n).rev() {
            for &w in &edges[u] {
                reach[u][w] = true;
                for x in 0..n {
                    if reach[w][x] {
                        reach[u][x] = true;
                    }
                }
            }
        }
        let escape = (0..n)
            .map(|k| match dest(&code[k]) {
                None => false,
                Some(r) => {
                    let last = (k + 1..n).all(|j| dest(&code[j]) != Some(r));
                    consumers[k].is_empty() || (last && live & (1 << r.index()) != 0)
                }
            })
            .collect();
        Reference {
            ops: code.iter().map(|i| i.op).collect(),
            addresses: code.iter().map(|i| i.address).collect(),
            writes: code.iter().map(|i| dest(i).is_some()).collect(),
            inputs,
            consumers,
            escape,
            reach,
        }
    }

    pub fn allowed(&self, k: usize, forbidden: &BTreeSet<Opcode>) -> bool {
        self.ops[k].class() == OpClass::Alu && self.writes[k] && !forbidden.contains(&self.ops[k])
    }

    pub fn convex(&self, s: &[usize]) -> bool {
        let n = self.ops.len();
        (0..n).filter(|w| !s.contains(w)).all(|w| {
            !(s.iter().any(|&u| self.reach[u][w]) && s.iter().any(|&v| self.reach[w][v]))
        })
    }

    /// (register inputs, kept immediate, outputs, components)
    pub fn io(&self, s: &[usize], io: IoShape) -> (usize, usize, usize, usize) {
        let mut regs: Vec<In> = Vec::new();
        let mut imms: Vec<(i64, u64)> = Vec::new();
        for &k in s {
            for &i in &self.inputs[k] {
                match i {
                    In::Vertex(j) if s.contains(&j) => {}
                    In::Vertex(_) | In::Entry(_) => {
                        if !regs.contains(&i) {
                            regs.push(i);
                        }
                    }
                    In::Imm(v) => imms.push((v, self.addresses[k])),
                    In::Zero => {}
                }
            }
        }
        let width = match (io.inputs, io.outputs) {
            (2, 1) => Some(12u32),
            (3, 1) => Some(6),
            _ => None,
        };
        let fits = |v: i64, w: u32| {
            let half = 1i128 << (w - 1);
            (-half..half).contains(&(v as i128))
        };
        let kept = match width {
            Some(w) if regs.len() < usize::from(io.inputs) => {
                usize::from(imms.iter().any(|&(v, _)| fits(v, w)))
            }
            _ => 0,
        };
        let outputs = s
            .iter()
            .filter(|&&k| self.escape[k] || self.consumers[k].iter().any(|c| !s.contains(c)))
            .count();
        let mut comp: Vec<usize> = (0..s.len()).collect();
        fn root(c: &mut Vec<usize>, mut x: usize) -> usize {
            while c[x] != x {
                x = c[x];
            }
            x
        }
        for (a, &k) in s.iter().enumerate() {
            for (b, &j) in s.iter().enumerate() {
                if self.consumers[j].contains(&k) {
                    let (ra, rb) = (root(&mut comp, a), root(&mut comp, b));
                    comp[ra] = rb;
                }
            }
        }
        let components = (0..s.len()).filter(|&a| root(&mut comp, a) == a).count();
        (regs.len(), kept, outputs, components)
    }

    pub fn valid(&self, s: &[usize], cfg: &ConstraintConfig) -> bool {
        if s.len() < cfg.min_pattern_size || !s.iter().all(|&k| self.allowed(k, &cfg.forbidden)) {
            return false;
        }
        if !self.convex(s) {
            return false;
        }
        let (regs, kept, outs, comps) = self.io(s, cfg.io);
        regs + kept <= usize::from(cfg.io.inputs)
            && outs <= usize::from(cfg.io.outputs)
            && comps <= cfg.max_components
    }

    pub fn brute_force(&self, cfg: &ConstraintConfig) -> BTreeSet<Vec<usize>> {
        let n = self.ops.len();
        (1u32..1 << n)
            .map(|mask| (0..n).filter(|k| mask & (1 << k) != 0).collect::<Vec<_>>())
            .filter(|s| self.valid(s, cfg))
            .collect()
    }
}

