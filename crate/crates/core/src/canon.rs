//! Canonical forms of patterns and grouping into isomorphism classes.
//!
//! A pattern is viewed as a small labeled graph over three kinds of
//! elements: member vertices, register inputs and kept immediates. Colour
//! refinement splits the elements by label and neighbourhood; remaining ties
//! are broken by individualizing each tied element in turn. Every discrete
//! ordering reached this way yields a serialization, and the smallest one is
//! the canonical form. Commutative operand pairs are serialized as sorted
//! pairs, which absorbs operand swaps. Register identities never enter the
//! serialization, only the pattern of sharing between operands.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::bitset::VertexSet;
use crate::dfg::{DataFlowGraph, ExternalKind, Slot, Source};
use crate::enumerate::{ImmUse, SubgraphPattern};
use crate::isa::Opcode;

/// Serialized canonical form; equal iff the patterns are isomorphic.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalForm(Vec<u8>);

impl CanonicalForm {
    pub fn from_bytes(bytes: Vec<u8>) -> CanonicalForm {
        CanonicalForm(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CF({})", self.to_hex())
    }
}

impl Serialize for CanonicalForm {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

/// Operand source in canonical numbering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum CanonSource {
    Node(usize),
    Reg(usize),
    Imm(usize),
    Const(i64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CanonNode {
    pub op: Opcode,
    pub is_output: bool,
    pub operands: Vec<(Slot, CanonSource)>,
}

/// A pattern rewritten in canonical numbering. Nodes are in topological
/// order; operands of commutative nodes are stored in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CanonicalPattern {
    pub nodes: Vec<CanonNode>,
    pub reg_inputs: usize,
    pub imm_inputs: usize,
}

impl CanonicalPattern {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn in_count(&self) -> usize {
        self.reg_inputs + self.imm_inputs
    }

    pub fn outputs(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_output)
            .map(|(k, _)| k)
    }

    pub fn out_count(&self) -> usize {
        self.outputs().count()
    }

    /// Value of every node given the register and immediate inputs.
    pub fn evaluate(&self, regs: &[u64], imms: &[i64]) -> Vec<u64> {
        let mut values: Vec<u64> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let value_of = |src: CanonSource| match src {
                CanonSource::Node(k) => values[k],
                CanonSource::Reg(k) => regs[k],
                CanonSource::Imm(k) => imms[k] as u64,
                CanonSource::Const(c) => c as u64,
            };
            let get = |slot: Slot| {
                n.operands
                    .iter()
                    .find(|(s, _)| *s == slot)
                    .map(|&(_, src)| value_of(src))
            };
            let a = get(Slot::Rs1).unwrap_or(0);
            let b = get(Slot::Rs2).or_else(|| get(Slot::Imm)).unwrap_or(0);
            values.push(crate::sim::alu(n.op, a, b).expect("patterns contain ALU operations only"));
        }
        values
    }
}

/// Canonical form of one occurrence together with the bindings from
/// canonical positions back to the block.
#[derive(Clone, Debug)]
pub struct Canonical {
    pub form: CanonicalForm,
    pub pattern: CanonicalPattern,
    /// DFG vertex of each canonical node.
    pub node_map: Vec<usize>,
    /// Producer of each canonical register input.
    pub reg_map: Vec<Source>,
    /// Immediate use behind each canonical immediate input.
    pub imm_map: Vec<ImmUse>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Ref {
    Elem(usize),
    Const(i64),
}

const COMMUTATIVE: u8 = 4;

/// Element-level view of a pattern.
struct View {
    nodes: Vec<usize>,
    regs: Vec<Source>,
    imms: Vec<ImmUse>,
    /// Per node: op, output flag, operands as (label, ref).
    ops: Vec<Opcode>,
    outs: Vec<bool>,
    operands: Vec<Vec<(u8, Ref)>>,
    depth: Vec<usize>,
}

impl View {
    fn new(dfg: &DataFlowGraph, p: &SubgraphPattern) -> View {
        enum Tmp {
            Node(usize),
            Reg(usize),
            Imm(usize),
            Const(i64),
        }
        let nodes: Vec<usize> = p.vertices.iter().collect();
        let k = nodes.len();
        let mut regs: Vec<Source> = Vec::new();
        let imms: Vec<ImmUse> = p.kept_imms.clone();
        let mut depth = vec![0usize; k];
        let mut tmp: Vec<Vec<(u8, Tmp)>> = Vec::with_capacity(k);
        for (i, &v) in nodes.iter().enumerate() {
            let mut ops = Vec::new();
            for o in &dfg.vertices[v].operands {
                let label = if o.commutative { COMMUTATIVE } else { o.slot as u8 };
                let t = match o.source {
                    Source::Internal(q) if p.vertices.contains(q) => {
                        let j = nodes.binary_search(&q).unwrap();
                        depth[i] = depth[i].max(depth[j] + 1);
                        Tmp::Node(j)
                    }
                    Source::External(e) if dfg.externals[e] == ExternalKind::Zero => Tmp::Const(0),
                    Source::External(e) if matches!(dfg.externals[e], ExternalKind::Imm(_)) => {
                        let ExternalKind::Imm(value) = dfg.externals[e] else { unreachable!() };
                        match imms.iter().position(|u| u.vertex == v && u.slot == o.slot) {
                            Some(m) => Tmp::Imm(m),
                            None => Tmp::Const(value),
                        }
                    }
                    src => Tmp::Reg(regs.iter().position(|s| *s == src).unwrap_or_else(|| {
                        regs.push(src);
                        regs.len() - 1
                    })),
                };
                ops.push((label, t));
            }
            tmp.push(ops);
        }
        let r = regs.len();
        let operands = tmp
            .into_iter()
            .map(|ops| {
                ops.into_iter()
                    .map(|(l, t)| {
                        let r = match t {
                            Tmp::Node(j) => Ref::Elem(j),
                            Tmp::Reg(m) => Ref::Elem(k + m),
                            Tmp::Imm(m) => Ref::Elem(k + r + m),
                            Tmp::Const(c) => Ref::Const(c),
                        };
                        (l, r)
                    })
                    .collect()
            })
            .collect();
        View {
            ops: nodes.iter().map(|&v| dfg.vertices[v].op).collect(),
            outs: nodes.iter().map(|v| p.outputs.contains(v)).collect(),
            nodes,
            regs,
            imms,
            operands,
            depth,
        }
    }

    fn len(&self) -> usize {
        self.nodes.len() + self.regs.len() + self.imms.len()
    }

    fn kind(&self, e: usize) -> u8 {
        if e < self.nodes.len() {
            0
        } else if e < self.nodes.len() + self.regs.len() {
            1
        } else {
            2
        }
    }

    /// Label-only colour, identical for isomorphic elements.
    fn initial_key(&self, e: usize) -> Vec<i64> {
        let mut key = vec![i64::from(self.kind(e))];
        if e < self.nodes.len() {
            key.push(self.depth[e] as i64);
            key.push(op_code(self.ops[e]) as i64);
            key.push(i64::from(self.outs[e]));
            let mut consts: Vec<(u8, i64)> = self.operands[e]
                .iter()
                .filter_map(|&(l, r)| match r {
                    Ref::Const(c) => Some((l, c)),
                    Ref::Elem(_) => None,
                })
                .collect();
            consts.sort();
            key.push(self.operands[e].len() as i64);
            for (l, c) in consts {
                key.push(i64::from(l));
                key.push(c);
            }
        }
        key
    }

    /// Edges as (consumer node, label, producer element).
    fn edges(&self) -> impl Iterator<Item = (usize, u8, usize)> + '_ {
        self.operands.iter().enumerate().flat_map(|(n, ops)| {
            ops.iter().filter_map(move |&(l, r)| match r {
                Ref::Elem(e) => Some((n, l, e)),
                Ref::Const(_) => None,
            })
        })
    }
}

fn op_code(op: Opcode) -> u8 {
    Opcode::ALL.iter().position(|&o| o == op).unwrap() as u8
}

/// Replaces colours by their rank among the distinct keys.
fn rank<K: Ord + Clone>(keys: &[K]) -> Vec<u32> {
    let mut distinct: Vec<K> = keys.to_vec();
    distinct.sort();
    distinct.dedup();
    keys.iter()
        .map(|k| distinct.binary_search(k).unwrap() as u32)
        .collect()
}

fn refine(edges: &[(usize, u8, usize)], mut colors: Vec<u32>) -> Vec<u32> {
    let n = colors.len();
    let mut classes = count_classes(&colors);
    loop {
        let mut nbrs: Vec<Vec<(u8, u8, u32)>> = vec![Vec::new(); n];
        for &(c, l, p) in edges {
            nbrs[c].push((0, l, colors[p]));
            nbrs[p].push((1, l, colors[c]));
        }
        let keys: Vec<(u32, Vec<(u8, u8, u32)>)> = nbrs
            .into_iter()
            .enumerate()
            .map(|(e, mut v)| {
                v.sort_unstable();
                (colors[e], v)
            })
            .collect();
        let next = rank(&keys);
        let c = count_classes(&next);
        colors = next;
        if c == classes {
            return colors;
        }
        classes = c;
    }
}

fn count_classes(colors: &[u32]) -> usize {
    let mut v = colors.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

struct Best {
    bytes: Vec<u8>,
    order: Vec<usize>,
}

fn serialize(view: &View, order: &[usize]) -> Vec<u8> {
    // order[e] is the global position of element e; positions are grouped by
    // kind, so per-kind positions are offsets from the kind's first position.
    let k = view.nodes.len();
    let r = view.regs.len();
    let local = |e: usize| -> (u8, u32) {
        match view.kind(e) {
            0 => (0, order[e] as u32),
            1 => (1, (order[e] - k) as u32),
            _ => (2, (order[e] - k - r) as u32),
        }
    };
    let mut by_pos = vec![0usize; k];
    for e in 0..k {
        by_pos[order[e]] = e;
    }
    let mut out = Vec::with_capacity(16 + k * 24);
    for x in [k, r, view.imms.len(), view.outs.iter().filter(|&&o| o).count()] {
        out.extend_from_slice(&(x as u32).to_be_bytes());
    }
    for &e in &by_pos {
        out.push(op_code(view.ops[e]));
        out.push(u8::from(view.outs[e]));
        let mut toks: Vec<(u8, u8, i64)> = view.operands[e]
            .iter()
            .map(|&(l, r)| match r {
                Ref::Elem(x) => {
                    let (kind, p) = local(x);
                    (l, kind, i64::from(p))
                }
                Ref::Const(c) => (l, 3, c),
            })
            .collect();
        toks.sort_by_key(|&(l, kind, v)| (l, if l == COMMUTATIVE { (kind, v) } else { (0, 0) }));
        out.push(toks.len() as u8);
        for (l, kind, v) in toks {
            out.push(l);
            out.push(kind);
            out.extend_from_slice(&(v as u64 ^ (1 << 63)).to_be_bytes());
        }
    }
    out
}

fn search(view: &View, edges: &[(usize, u8, usize)], colors: Vec<u32>, best: &mut Option<Best>) {
    let colors = refine(edges, colors);
    let n = colors.len();
    // First colour class with more than one member.
    let mut counts = vec![0u32; n];
    for &c in &colors {
        counts[c as usize] += 1;
    }
    match (0..n).find(|&c| counts[c] > 1) {
        None => {
            let order: Vec<usize> = colors.iter().map(|&c| c as usize).collect();
            let bytes = serialize(view, &order);
            if best.as_ref().is_none_or(|b| bytes < b.bytes) {
                *best = Some(Best { bytes, order });
            }
        }
        Some(cell) => {
            let members: Vec<usize> = (0..n).filter(|&e| colors[e] as usize == cell).collect();
            for &v in &members {
                let keys: Vec<(u32, u8)> = (0..n)
                    .map(|e| (colors[e], u8::from(colors[e] as usize == cell && e != v)))
                    .collect();
                search(view, edges, rank(&keys), best);
            }
        }
    }
}

/// Canonical form of an occurrence.
pub fn canonicalize(dfg: &DataFlowGraph, p: &SubgraphPattern) -> Canonical {
    let view = View::new(dfg, p);
    let edges: Vec<(usize, u8, usize)> = view.edges().collect();
    let keys: Vec<Vec<i64>> = (0..view.len()).map(|e| view.initial_key(e)).collect();
    let mut best = None;
    search(&view, &edges, rank(&keys), &mut best);
    let Best { bytes, order } = best.expect("search always reaches a leaf");

    let k = view.nodes.len();
    let r = view.regs.len();
    let mut node_map = vec![0; k];
    let mut reg_map = vec![Source::External(0); r];
    let mut imm_map = vec![view.imms.first().copied(); view.imms.len()];
    for e in 0..view.len() {
        match view.kind(e) {
            0 => node_map[order[e]] = e,
            1 => reg_map[order[e] - k] = view.regs[e - k],
            _ => imm_map[order[e] - k - r] = Some(view.imms[e - k - r]),
        }
    }
    let to_canon = |x: Ref| -> CanonSource {
        match x {
            Ref::Const(c) => CanonSource::Const(c),
            Ref::Elem(x) => match view.kind(x) {
                0 => CanonSource::Node(order[x]),
                1 => CanonSource::Reg(order[x] - k),
                _ => CanonSource::Imm(order[x] - k - r),
            },
        }
    };
    let nodes = node_map
        .iter()
        .map(|&e| {
            let mut operands: Vec<(Slot, CanonSource)> = view.operands[e]
                .iter()
                .zip(&dfg.vertices[view.nodes[e]].operands)
                .map(|(&(_, x), o)| (o.slot, to_canon(x)))
                .collect();
            if view.ops[e].is_commutative() {
                let mut srcs: Vec<CanonSource> = operands
                    .iter()
                    .filter(|(s, _)| matches!(s, Slot::Rs1 | Slot::Rs2))
                    .map(|&(_, c)| c)
                    .collect();
                srcs.sort_by_key(|c| source_rank(*c));
                let mut it = srcs.into_iter();
                for (s, c) in operands.iter_mut() {
                    if matches!(s, Slot::Rs1 | Slot::Rs2) {
                        *c = it.next().unwrap();
                    }
                }
            }
            CanonNode {
                op: view.ops[e],
                is_output: view.outs[e],
                operands,
            }
        })
        .collect();
    Canonical {
        form: CanonicalForm(bytes),
        pattern: CanonicalPattern {
            nodes,
            reg_inputs: r,
            imm_inputs: view.imms.len(),
        },
        node_map: node_map.into_iter().map(|e| view.nodes[e]).collect(),
        reg_map,
        imm_map: imm_map.into_iter().map(|u| u.unwrap()).collect(),
    }
}

/// Same ordering as the serialization uses for commutative pairs.
fn source_rank(c: CanonSource) -> (u8, i64) {
    match c {
        CanonSource::Node(p) => (0, p as i64),
        CanonSource::Reg(p) => (1, p as i64),
        CanonSource::Imm(p) => (2, p as i64),
        CanonSource::Const(v) => (3, v),
    }
}

pub fn canonical_form(dfg: &DataFlowGraph, p: &SubgraphPattern) -> CanonicalForm {
    canonicalize(dfg, p).form
}

/// Independent pairwise isomorphism test by backtracking over vertex
/// bijections. Operations, output flags, slots and hardcoded constants must
/// match; commutative operand pairs may be swapped; register inputs must be
/// shared in the same way.
pub fn iso_check(
    g1: &DataFlowGraph,
    p1: &SubgraphPattern,
    g2: &DataFlowGraph,
    p2: &SubgraphPattern,
) -> bool {
    if p1.size() != p2.size()
        || p1.reg_inputs != p2.reg_inputs
        || p1.kept_imms.len() != p2.kept_imms.len()
        || p1.out_count() != p2.out_count()
    {
        return false;
    }
    let a: Vec<usize> = p1.vertices.iter().collect();
    let b: Vec<usize> = p2.vertices.iter().collect();
    let mut m = Matcher {
        g: [g1, g2],
        p: [p1, p2],
        s: [&p1.vertices, &p2.vertices],
        map: vec![None; a.len()],
        used: vec![false; b.len()],
        regs: Vec::new(),
        a,
        b,
    };
    m.extend(0)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Operand {
    Member(usize),
    Reg(Source),
    Imm,
    Const(i64),
}

struct Matcher<'a> {
    g: [&'a DataFlowGraph; 2],
    p: [&'a SubgraphPattern; 2],
    s: [&'a VertexSet; 2],
    a: Vec<usize>,
    b: Vec<usize>,
    map: Vec<Option<usize>>,
    used: Vec<bool>,
    regs: Vec<(Source, Source)>,
}

impl Matcher<'_> {
    fn operand(&self, side: usize, v: usize, slot: Slot) -> Option<Operand> {
        let g = self.g[side];
        let o = g.vertices[v].operand(slot)?;
        Some(match o.source {
            Source::Internal(q) if self.s[side].contains(q) => Operand::Member(q),
            Source::Internal(_) => Operand::Reg(o.source),
            Source::External(e) => match g.externals[e] {
                ExternalKind::Reg(_) => Operand::Reg(o.source),
                ExternalKind::Zero => Operand::Const(0),
                ExternalKind::Imm(value) => {
                    if self.p[side].kept_imms.iter().any(|u| u.vertex == v && u.slot == slot) {
                        Operand::Imm
                    } else {
                        Operand::Const(value)
                    }
                }
            },
        })
    }

    /// Whether operand `x` of side 0 can correspond to `y` of side 1 under
    /// the current partial maps; records new register pairs in `added`.
    fn compatible(&mut self, x: Operand, y: Operand, added: &mut Vec<(Source, Source)>) -> bool {
        match (x, y) {
            (Operand::Member(p), Operand::Member(q)) => {
                let i = self.a.binary_search(&p).unwrap();
                let j = self.b.binary_search(&q).unwrap();
                // Producers precede consumers, so they are already mapped.
                self.map[i] == Some(j)
            }
            (Operand::Reg(r1), Operand::Reg(r2)) => {
                match self.regs.iter().find(|(a, b)| *a == r1 || *b == r2) {
                    Some(&(a, b)) => a == r1 && b == r2,
                    None => {
                        self.regs.push((r1, r2));
                        added.push((r1, r2));
                        true
                    }
                }
            }
            (Operand::Imm, Operand::Imm) => true,
            (Operand::Const(c), Operand::Const(d)) => c == d,
            _ => false,
        }
    }

    fn undo(&mut self, added: &[(Source, Source)]) {
        self.regs.retain(|p| !added.contains(p));
    }

    fn extend(&mut self, i: usize) -> bool {
        if i == self.a.len() {
            return true;
        }
        let v = self.a[i];
        let vx = &self.g[0].vertices[v];
        let out_v = self.p[0].outputs.contains(&v);
        for j in 0..self.b.len() {
            if self.used[j] {
                continue;
            }
            let w = self.b[j];
            let wx = &self.g[1].vertices[w];
            if wx.op != vx.op || self.p[1].outputs.contains(&w) != out_v {
                continue;
            }
            let slots = [Slot::Rs1, Slot::Rs2, Slot::Rs3, Slot::Imm];
            let arrangements: &[[usize; 4]] = if vx.op.is_commutative() {
                &[[0, 1, 2, 3], [1, 0, 2, 3]]
            } else {
                &[[0, 1, 2, 3]]
            };
            for arr in arrangements {
                let mut added = Vec::new();
                let mut ok = true;
                for (k, &slot) in slots.iter().enumerate() {
                    let x = self.operand(0, v, slot);
                    let y = self.operand(1, w, slots[arr[k]]);
                    ok = match (x, y) {
                        (None, None) => true,
                        (Some(x), Some(y)) => self.compatible(x, y, &mut added),
                        _ => false,
                    };
                    if !ok {
                        break;
                    }
                }
                if ok {
                    self.map[i] = Some(j);
                    self.used[j] = true;
                    if self.extend(i + 1) {
                        return true;
                    }
                    self.map[i] = None;
                    self.used[j] = false;
                }
                self.undo(&added);
            }
        }
        false
    }
}

/// An isomorphism class: one canonical form and all its occurrences.
#[derive(Clone, Debug)]
pub struct IsoClass {
    pub cf: CanonicalForm,
    pub pattern: CanonicalPattern,
    pub occurrences: Vec<Occurrence>,
}

#[derive(Clone, Debug)]
pub struct Occurrence {
    pub pattern: SubgraphPattern,
    pub node_map: Vec<usize>,
    pub reg_map: Vec<Source>,
    pub imm_map: Vec<ImmUse>,
}

impl Occurrence {
    pub fn bb_id(&self) -> usize {
        self.pattern.bb_id
    }

    pub fn vertices(&self) -> &VertexSet {
        &self.pattern.vertices
    }
}

impl IsoClass {
    pub fn size(&self) -> usize {
        self.pattern.size()
    }
}

/// Canonicalizes every pattern (in parallel on the current rayon pool) and
/// groups them by canonical form. Classes are ordered by canonical form and
/// occurrences by block, then vertex set, whatever the pool size.
pub fn group(dfgs: &[DataFlowGraph], patterns: &[Vec<SubgraphPattern>]) -> Vec<IsoClass> {
    let by_block: Vec<Vec<Canonical>> = patterns
        .par_iter()
        .map(|ps| {
            ps.iter()
                .map(|p| canonicalize(&dfgs[p.bb_id], p))
                .collect()
        })
        .collect();
    let mut classes: BTreeMap<CanonicalForm, IsoClass> = BTreeMap::new();
    for (ps, cs) in patterns.iter().zip(by_block) {
        for (p, c) in ps.iter().zip(cs) {
            let occ = Occurrence {
                pattern: p.clone(),
                node_map: c.node_map,
                reg_map: c.reg_map,
                imm_map: c.imm_map,
            };
            classes
                .entry(c.form.clone())
                .or_insert_with(|| IsoClass {
                    cf: c.form,
                    pattern: c.pattern,
                    occurrences: Vec::new(),
                })
                .occurrences
                .push(occ);
        }
    }
    let mut out: Vec<IsoClass> = classes.into_values().collect();
    for c in &mut out {
        c.occurrences
            .sort_by(|a, b| (a.bb_id(), a.vertices()).cmp(&(b.bb_id(), b.vertices())));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::{BasicBlock, Terminator};
    use crate::dfg::build_dfg;
    use crate::enumerate::ConstraintConfig;
    use crate::isa::{Instruction, Reg};

    fn r(op: Opcode, rd: u8, rs1: u8, rs2: u8) -> Instruction {
        let mut i = Instruction::new(0, op);
        i.rd = Reg::new(rd);
        i.rs1 = Reg::new(rs1);
        i.rs2 = Reg::new(rs2);
        i
    }

    fn dfg_of(mut code: Vec<Instruction>) -> DataFlowGraph {
        for (k, i) in code.iter_mut().enumerate() {
            i.address = 4 * k as u64;
        }
        build_dfg(&BasicBlock {
            id: 0,
            start_address: 0,
            instructions: code,
            terminator: Terminator::End,
        })
    }

    fn pat(g: &DataFlowGraph, items: &[usize]) -> SubgraphPattern {
        let cfg = ConstraintConfig::default();
        SubgraphPattern::new(g, VertexSet::from_items(g.len(), items.iter().copied()), &cfg)
    }

    #[test]
    fn swapped_commutative_operands() {
        let g = dfg_of(vec![
            r(Opcode::And, 5, 10, 11),
            r(Opcode::Or, 6, 5, 10),
            r(Opcode::Add, 7, 6, 11),
            r(Opcode::And, 12, 13, 14),
            r(Opcode::Or, 15, 12, 13),
            r(Opcode::Add, 16, 14, 15),
        ]);
        let a = pat(&g, &[0, 1, 2]);
        let b = pat(&g, &[3, 4, 5]);
        assert_eq!(canonical_form(&g, &a), canonical_form(&g, &b));
        assert!(iso_check(&g, &a, &g, &b));
    }

    #[test]
    fn operand_order_of_sub_matters() {
        // sub(r0, r1) and sub(r1, r0) over two fresh registers are the same pattern.
        let g = dfg_of(vec![r(Opcode::Sub, 5, 10, 11), r(Opcode::Sub, 6, 11, 10)]);
        assert_eq!(canonical_form(&g, &pat(&g, &[0])), canonical_form(&g, &pat(&g, &[1])));
        // With a distinguishable operand the order shows.
        let g0 = dfg_of(vec![r(Opcode::Sub, 5, 0, 10), r(Opcode::Sub, 6, 10, 0)]);
        let (a, b) = (pat(&g0, &[0]), pat(&g0, &[1]));
        assert_ne!(canonical_form(&g0, &a), canonical_form(&g0, &b));
        assert!(!iso_check(&g0, &a, &g0, &b));
        let g2 = dfg_of(vec![
            r(Opcode::Add, 5, 10, 11),
            r(Opcode::Sub, 6, 5, 12),
            r(Opcode::Add, 7, 10, 11),
            r(Opcode::Sub, 8, 12, 7),
        ]);
        let a = pat(&g2, &[0, 1]);
        let b = pat(&g2, &[2, 3]);
        assert_ne!(canonical_form(&g2, &a), canonical_form(&g2, &b));
        assert!(!iso_check(&g2, &a, &g2, &b));
    }

    #[test]
    fn register_sharing_is_part_of_the_form() {
        let g = dfg_of(vec![r(Opcode::Sub, 5, 10, 10), r(Opcode::Sub, 6, 10, 11)]);
        let a = pat(&g, &[0]);
        let b = pat(&g, &[1]);
        assert_ne!(canonical_form(&g, &a), canonical_form(&g, &b));
        assert!(!iso_check(&g, &a, &g, &b));
    }

    #[test]
    fn canonical_pattern_is_topological() {
        let g = dfg_of(vec![
            r(Opcode::Xor, 5, 10, 11),
            r(Opcode::Mul, 6, 5, 12),
            r(Opcode::Add, 7, 6, 5),
        ]);
        let p = pat(&g, &[0, 1, 2]);
        let c = canonicalize(&g, &p);
        for (k, n) in c.pattern.nodes.iter().enumerate() {
            for (_, s) in &n.operands {
                if let CanonSource::Node(p) = s {
                    assert!(*p < k);
                }
            }
        }
        assert_eq!(c.pattern.reg_inputs, 3);
        // x5 and x6 are never overwritten, so every member escapes.
        assert_eq!(c.pattern.out_count(), p.out_count());
        assert_eq!(p.out_count(), 3);
    }
}
