//! Exhaustive enumeration of convex, I/O-constrained subgraphs.
//!
//! Sets are grown from single vertices by adding vertices with a smaller
//! index than the current minimum, so each set is produced exactly once.
//! Because every edge points from a lower to a higher index, three
//! properties of a partial set are final once established and prune the
//! recursion: a convexity violation, the output count, and register inputs
//! produced outside the set by vertices that can no longer be added.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bitset::VertexSet;
use crate::dfg::{DataFlowGraph, ExternalKind, Slot, Source};
use crate::isa::{fits_signed, signed_width, OpClass, Opcode};

/// Supported `(IN_max, OUT_max)` combinations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct IoShape {
    pub inputs: u8,
    pub outputs: u8,
}

impl IoShape {
    pub const SUPPORTED: [IoShape; 3] = [
        IoShape { inputs: 2, outputs: 1 },
        IoShape { inputs: 3, outputs: 1 },
        IoShape { inputs: 3, outputs: 2 },
    ];

    pub fn new(inputs: u8, outputs: u8) -> Result<IoShape, ConfigError> {
        let s = IoShape { inputs, outputs };
        if IoShape::SUPPORTED.contains(&s) {
            Ok(s)
        } else {
            Err(ConfigError::UnsupportedShape(inputs, outputs))
        }
    }

    /// Width of the single immediate operand field, if the encoding has one.
    pub fn imm_slot_width(self) -> Option<u8> {
        match (self.inputs, self.outputs) {
            (2, 1) => Some(12),
            (3, 1) => Some(6),
            _ => None,
        }
    }
}

impl fmt::Display for IoShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.inputs, self.outputs)
    }
}

impl FromStr for IoShape {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<IoShape, ConfigError> {
        let bad = || ConfigError::Invalid(format!("I/O shape `{s}` is not of the form IN,OUT"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let a: u8 = a.trim().parse().map_err(|_| bad())?;
        let b: u8 = b.trim().parse().map_err(|_| bad())?;
        IoShape::new(a, b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unsupported I/O shape ({0},{1}); expected one of (2,1), (3,1), (3,2)")]
    UnsupportedShape(u8, u8),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConstraintConfig {
    pub io: IoShape,
    pub u_max: usize,
    /// Operations never allowed in a pattern. Non-ALU operations are always
    /// excluded in addition to this set.
    pub forbidden: BTreeSet<Opcode>,
    pub min_pattern_size: usize,
    pub max_components: usize,
    /// Per-block limit on explored candidate sets.
    pub candidate_cap: u64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig {
            io: IoShape { inputs: 3, outputs: 1 },
            u_max: 8,
            forbidden: default_forbidden(),
            min_pattern_size: 2,
            max_components: 2,
            candidate_cap: 10_000_000,
        }
    }
}

pub fn default_forbidden() -> BTreeSet<Opcode> {
    Opcode::ALL
        .iter()
        .copied()
        .filter(|op| op.info().default_forbidden)
        .collect()
}

impl ConstraintConfig {
    pub fn with_io(io: IoShape) -> ConstraintConfig {
        ConstraintConfig {
            io,
            ..ConstraintConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        IoShape::new(self.io.inputs, self.io.outputs)?;
        if self.u_max == 0 {
            return Err(ConfigError::Invalid("U_max must be at least 1".into()));
        }
        if self.min_pattern_size == 0 {
            return Err(ConfigError::Invalid("minimum pattern size must be at least 1".into()));
        }
        if self.max_components == 0 {
            return Err(ConfigError::Invalid("component cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether vertex `v` may be part of a pattern.
    pub fn allows(&self, dfg: &DataFlowGraph, v: usize) -> bool {
        let vx = &dfg.vertices[v];
        vx.op.class() == OpClass::Alu && vx.writes() && !self.forbidden.contains(&vx.op)
    }
}

/// One immediate operand use inside a pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ImmUse {
    pub vertex: usize,
    pub slot: Slot,
    pub value: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IoCounts {
    /// Distinct register producers feeding the set: external register
    /// vertices or internal vertices outside the set.
    pub reg_inputs: Vec<Source>,
    pub kept_imms: Vec<ImmUse>,
    pub hardcoded_imms: Vec<ImmUse>,
    /// Members whose value is needed outside the set, ascending.
    pub outputs: Vec<usize>,
}

impl IoCounts {
    pub fn in_count(&self) -> usize {
        self.reg_inputs.len() + self.kept_imms.len()
    }

    pub fn out_count(&self) -> usize {
        self.outputs.len()
    }
}

/// Counts the inputs and outputs of `s`.
///
/// Register inputs are counted once per distinct producer. At most one
/// immediate is kept as an operand, and only if the shape has an immediate
/// field, it fits the field and an input position is left after the register
/// inputs. Among fitting immediates the widest is kept, ties going to the
/// lowest address. All other immediates are hardcoded. Reads of `x0` are
/// hardcoded zeros and never count.
pub fn io_counts(dfg: &DataFlowGraph, s: &VertexSet, cfg: &ConstraintConfig) -> IoCounts {
    let mut reg_inputs: Vec<Source> = Vec::new();
    let mut imms: Vec<ImmUse> = Vec::new();
    let mut outputs = Vec::new();
    for v in s.iter() {
        let vx = &dfg.vertices[v];
        for o in &vx.operands {
            match o.source {
                Source::Internal(p) if s.contains(p) => {}
                Source::Internal(_) => {
                    if !reg_inputs.contains(&o.source) {
                        reg_inputs.push(o.source);
                    }
                }
                Source::External(e) => match dfg.externals[e] {
                    ExternalKind::Reg(_) => {
                        if !reg_inputs.contains(&o.source) {
                            reg_inputs.push(o.source);
                        }
                    }
                    ExternalKind::Imm(value) => imms.push(ImmUse {
                        vertex: v,
                        slot: o.slot,
                        value,
                    }),
                    ExternalKind::Zero => {}
                },
            }
        }
        if vx.escape || dfg.consumers[v].iter().any(|&c| !s.contains(c)) {
            outputs.push(v);
        }
    }
    let free = usize::from(cfg.io.inputs).saturating_sub(reg_inputs.len());
    let mut kept = Vec::new();
    if let (Some(width), true) = (cfg.io.imm_slot_width(), free > 0) {
        let best = imms
            .iter()
            .enumerate()
            .filter(|(_, u)| fits_signed(u.value, width))
            .max_by(|(_, a), (_, b)| {
                signed_width(a.value)
                    .cmp(&signed_width(b.value))
                    .then(dfg.vertices[b.vertex].address.cmp(&dfg.vertices[a.vertex].address))
            })
            .map(|(k, _)| k);
        if let Some(k) = best {
            kept.push(imms.remove(k));
        }
    }
    IoCounts {
        reg_inputs,
        kept_imms: kept,
        hardcoded_imms: imms,
        outputs,
    }
}

/// No path between two members of `s` passes through a non-member.
pub fn is_convex(dfg: &DataFlowGraph, s: &VertexSet) -> bool {
    let mut reach = dfg.empty_set();
    for v in s.iter() {
        reach.union_with(dfg.descendants(v));
    }
    reach.difference_with(s);
    let convex = reach.iter().all(|w| !dfg.descendants(w).intersects(s));
    convex
}

/// Number of weakly connected components of the induced subgraph.
pub fn components(dfg: &DataFlowGraph, s: &VertexSet) -> usize {
    let members: Vec<usize> = s.iter().collect();
    let mut parent: Vec<usize> = (0..members.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for (k, &v) in members.iter().enumerate() {
        for p in dfg.producers(v) {
            if let Ok(j) = members.binary_search(&p) {
                let (a, b) = (find(&mut parent, k), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    (0..members.len())
        .filter(|&k| find(&mut parent, k) == k)
        .count()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubgraphPattern {
    pub bb_id: usize,
    pub vertices: VertexSet,
    pub reg_inputs: usize,
    pub kept_imms: Vec<ImmUse>,
    pub hardcoded_imms: Vec<ImmUse>,
    pub outputs: Vec<usize>,
    pub components: usize,
}

impl SubgraphPattern {
    /// Builds the pattern record for `s`, without checking any constraint.
    pub fn new(dfg: &DataFlowGraph, s: VertexSet, cfg: &ConstraintConfig) -> SubgraphPattern {
        let io = io_counts(dfg, &s, cfg);
        SubgraphPattern {
            bb_id: dfg.bb_id,
            components: components(dfg, &s),
            reg_inputs: io.reg_inputs.len(),
            kept_imms: io.kept_imms,
            hardcoded_imms: io.hardcoded_imms,
            outputs: io.outputs,
            vertices: s,
        }
    }

    pub fn size(&self) -> usize {
        self.vertices.len()
    }

    pub fn in_count(&self) -> usize {
        self.reg_inputs + self.kept_imms.len()
    }

    pub fn out_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn connected(&self) -> bool {
        self.components <= 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnumerationError {
    #[error("block {bb_id} at {address:#x} exceeded the candidate cap of {cap}")]
    CapExceeded { bb_id: usize, address: u64, cap: u64 },
}

/// Whether `s` satisfies every enumeration constraint.
pub fn is_valid(dfg: &DataFlowGraph, s: &VertexSet, cfg: &ConstraintConfig) -> bool {
    if s.len() < cfg.min_pattern_size || s.iter().any(|v| !cfg.allows(dfg, v)) {
        return false;
    }
    if !is_convex(dfg, s) {
        return false;
    }
    let io = io_counts(dfg, s, cfg);
    io.reg_inputs.len() <= usize::from(cfg.io.inputs)
        && io.out_count() <= usize::from(cfg.io.outputs)
        && components(dfg, s) <= cfg.max_components
}

struct Search<'a> {
    dfg: &'a DataFlowGraph,
    cfg: &'a ConstraintConfig,
    allowed: Vec<usize>,
    out: Vec<VertexSet>,
    explored: u64,
}

impl Search<'_> {
    /// Adding `u` (smaller than every member) keeps `s` convex iff no direct
    /// successor of `u` outside the set reaches back into it.
    fn stays_convex(&self, s: &VertexSet, u: usize) -> bool {
        self.dfg
            .successors(u)
            .all(|w| s.contains(w) || !self.dfg.descendants(w).intersects(s))
    }

    fn is_output(&self, s: &VertexSet, u: usize) -> bool {
        self.dfg.vertices[u].escape || self.dfg.consumers[u].iter().any(|&c| !s.contains(c))
    }

    /// Register inputs that no later extension can remove.
    fn permanent_inputs(&self, s: &VertexSet, min: usize) -> usize {
        let mut seen: Vec<Source> = Vec::new();
        for v in s.iter() {
            for o in &self.dfg.vertices[v].operands {
                let permanent = match o.source {
                    Source::Internal(p) => !s.contains(p) && (p > min || !self.cfg.allows(self.dfg, p)),
                    Source::External(e) => matches!(self.dfg.externals[e], ExternalKind::Reg(_)),
                };
                if permanent && !seen.contains(&o.source) {
                    seen.push(o.source);
                }
            }
        }
        seen.len()
    }

    fn grow(&mut self, s: &mut VertexSet, min_pos: usize, outs: usize) -> Result<(), EnumerationError> {
        self.explored += 1;
        if self.explored > self.cfg.candidate_cap {
            return Err(EnumerationError::CapExceeded {
                bb_id: self.dfg.bb_id,
                address: self.dfg.vertices.first().map_or(0, |v| v.address),
                cap: self.cfg.candidate_cap,
            });
        }
        if is_valid_quick(self, s) {
            self.out.push(s.clone());
        }
        for k in (0..min_pos).rev() {
            let u = self.allowed[k];
            if !self.stays_convex(s, u) {
                continue;
            }
            s.insert(u);
            let outs_u = outs + usize::from(self.is_output(s, u));
            if outs_u <= usize::from(self.cfg.io.outputs)
                && self.permanent_inputs(s, u) <= usize::from(self.cfg.io.inputs)
            {
                self.grow(s, k, outs_u)?;
            }
            s.remove(u);
        }
        Ok(())
    }
}

fn is_valid_quick(search: &Search<'_>, s: &VertexSet) -> bool {
    let cfg = search.cfg;
    if s.len() < cfg.min_pattern_size {
        return false;
    }
    let io = io_counts(search.dfg, s, cfg);
    io.reg_inputs.len() <= usize::from(cfg.io.inputs)
        && (cfg.max_components >= usize::from(cfg.io.outputs)
            || components(search.dfg, s) <= cfg.max_components)
}

/// All valid patterns of one block, ordered by their smallest member and
/// then by the order of growth.
pub fn enumerate(
    dfg: &DataFlowGraph,
    cfg: &ConstraintConfig,
) -> Result<Vec<SubgraphPattern>, EnumerationError> {
    let allowed: Vec<usize> = (0..dfg.len()).filter(|&v| cfg.allows(dfg, v)).collect();
    let mut search = Search {
        dfg,
        cfg,
        allowed,
        out: Vec::new(),
        explored: 0,
    };
    for k in (0..search.allowed.len()).rev() {
        let v = search.allowed[k];
        let mut s = dfg.empty_set();
        s.insert(v);
        let outs = usize::from(search.is_output(&s, v));
        if outs <= usize::from(cfg.io.outputs)
            && search.permanent_inputs(&s, v) <= usize::from(cfg.io.inputs)
        {
            search.grow(&mut s, k, outs)?;
        }
    }
    let mut sets = search.out;
    sets.sort();
    Ok(sets
        .into_iter()
        .map(|s| SubgraphPattern::new(dfg, s, cfg))
        .collect())
}

/// Enumerates every block, in parallel on the current rayon pool. The result
/// is ordered by block and does not depend on the pool size.
pub fn enumerate_all(
    dfgs: &[DataFlowGraph],
    cfg: &ConstraintConfig,
) -> Result<Vec<Vec<SubgraphPattern>>, EnumerationError> {
    dfgs.par_iter().map(|g| enumerate(g, cfg)).collect()
}
