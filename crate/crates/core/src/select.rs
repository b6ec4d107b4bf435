//! Instruction selection: occurrence covers, pairwise look-ahead and the
//! synthesis-in-the-loop search.
//!
//! A class's merit is the weight of a maximum feasible cover of its
//! occurrences, each weighing `(|S| - 1) * f_BB`. A cover is feasible when
//! its occurrences share no vertex with each other or with committed
//! occurrences, and contracting every chosen occurrence of a block to one
//! node leaves the block acyclic.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bitset::VertexSet;
use crate::canon::IsoClass;
use crate::cost::{CostEstimate, CostOracle, OracleError};
use crate::dfg::DataFlowGraph;
use crate::emit::ModelEntry;
use crate::encoding::{Encoding, EncodingAllocator, EncodingError};
use crate::enumerate::IoShape;
use crate::profile::FusedOccurrence;

/// Blocks with at most this many candidate occurrences get an exact cover.
pub const EXACT_COVER_LIMIT: usize = 20;

#[derive(Clone, Debug)]
pub struct ClassOccurrences {
    pub size: usize,
    /// `(block, vertex set)` pairs.
    pub occurrences: Vec<(usize, VertexSet)>,
}

/// The covering view of a set of classes.
#[derive(Clone, Debug)]
pub struct CoverProblem {
    /// Per block, the successor lists of its DFG (data and memory order).
    pub succs: Vec<Vec<Vec<usize>>>,
    /// Per block execution count.
    pub counts: Vec<u64>,
    pub classes: Vec<ClassOccurrences>,
}

impl CoverProblem {
    /// `dfgs[b]` must be the graph of block `b`.
    pub fn from_classes(dfgs: &[DataFlowGraph], classes: &[IsoClass], counts: &[u64]) -> CoverProblem {
        let succs = dfgs
            .iter()
            .map(|g| (0..g.len()).map(|v| g.successors(v).collect()).collect())
            .collect();
        let classes = classes
            .iter()
            .map(|c| ClassOccurrences {
                size: c.size(),
                occurrences: c.occurrences.iter().map(|o| (o.bb_id(), o.vertices().clone())).collect(),
            })
            .collect();
        CoverProblem {
            succs,
            counts: counts.to_vec(),
            classes,
        }
    }

    pub fn weight(&self, class: usize, occ: usize) -> u64 {
        let c = &self.classes[class];
        let (b, _) = c.occurrences[occ];
        (c.size.saturating_sub(1) as u64).saturating_mul(self.counts[b])
    }
}

/// Occurrence sets committed so far, per block.
#[derive(Clone, Debug, Default)]
pub struct Occupancy {
    blocks: BTreeMap<usize, Vec<VertexSet>>,
}

impl Occupancy {
    pub fn committed(&self, block: usize) -> &[VertexSet] {
        self.blocks.get(&block).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn add(&mut self, block: usize, set: VertexSet) {
        self.blocks.entry(block).or_default().push(set);
    }
}

/// True when contracting each of the (pairwise disjoint) `sets` to a single
/// node leaves the graph acyclic.
pub fn contraction_acyclic(succs: &[Vec<usize>], sets: &[&VertexSet]) -> bool {
    let n = succs.len();
    let mut unit: Vec<usize> = (0..n).collect();
    for (k, s) in sets.iter().enumerate() {
        for v in s.iter() {
            unit[v] = n + k;
        }
    }
    let total = n + sets.len();
    let mut indeg = vec![0usize; total];
    let mut edges = vec![Vec::new(); total];
    for (v, out) in succs.iter().enumerate() {
        for &w in out {
            let (a, b) = (unit[v], unit[w]);
            if a != b {
                edges[a].push(b);
                indeg[b] += 1;
            }
        }
    }
    let mut ready: Vec<usize> = (0..total).filter(|&u| indeg[u] == 0).collect();
    let mut seen = 0;
    while let Some(u) = ready.pop() {
        seen += 1;
        for &w in &edges[u] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.push(w);
            }
        }
    }
    seen == total
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FeasibilityError {
    #[error("occurrences overlap in block {0}")]
    Overlap(usize),
    #[error("contraction creates a cycle in block {0}")]
    Cycle(usize),
}

/// Checks non-overlap and contraction acyclicity of a chosen set of
/// `(class, occurrence index)` pairs.
pub fn check_feasible(problem: &CoverProblem, chosen: &[(usize, usize)]) -> Result<(), FeasibilityError> {
    let mut per_block: BTreeMap<usize, Vec<&VertexSet>> = BTreeMap::new();
    for &(c, o) in chosen {
        let (b, s) = &problem.classes[c].occurrences[o];
        per_block.entry(*b).or_default().push(s);
    }
    for (b, sets) in per_block {
        for (i, s) in sets.iter().enumerate() {
            if sets[..i].iter().any(|t| t.intersects(s)) {
                return Err(FeasibilityError::Overlap(b));
            }
        }
        if !contraction_acyclic(&problem.succs[b], &sets) {
            return Err(FeasibilityError::Cycle(b));
        }
    }
    Ok(())
}

struct CoverSearch<'a> {
    succs: &'a [Vec<usize>],
    committed: &'a [VertexSet],
    sets: Vec<&'a VertexSet>,
    weights: Vec<u64>,
    order: Vec<usize>,
    suffix: Vec<u64>,
    best: u64,
    best_set: Vec<usize>,
}

impl CoverSearch<'_> {
    fn fits(&self, i: usize, chosen: &[usize]) -> bool {
        if chosen.iter().any(|&j| self.sets[j].intersects(self.sets[i])) {
            return false;
        }
        let mut all: Vec<&VertexSet> = self.committed.iter().collect();
        all.extend(chosen.iter().map(|&j| self.sets[j]));
        all.push(self.sets[i]);
        contraction_acyclic(self.succs, &all)
    }

    fn exact(&mut self, k: usize, chosen: &mut Vec<usize>, acc: u64) {
        if acc > self.best {
            self.best = acc;
            self.best_set = chosen.clone();
        }
        if k == self.order.len() || acc + self.suffix[k] <= self.best {
            return;
        }
        let i = self.order[k];
        if self.fits(i, chosen) {
            chosen.push(i);
            self.exact(k + 1, chosen, acc + self.weights[i]);
            chosen.pop();
        }
        self.exact(k + 1, chosen, acc);
    }

    fn greedy(&mut self) {
        let mut chosen = Vec::new();
        let mut acc = 0;
        for k in 0..self.order.len() {
            let i = self.order[k];
            if self.fits(i, &chosen) {
                chosen.push(i);
                acc += self.weights[i];
            }
        }
        self.best = acc;
        self.best_set = chosen;
    }
}

/// Maximum-weight feasible subset of `items` within one block, given the
/// block's committed sets. Exact up to [`EXACT_COVER_LIMIT`] candidate
/// items, greedy by weight beyond. Returns the weight and the chosen item
/// indices in ascending order.
pub fn block_cover(succs: &[Vec<usize>], committed: &[VertexSet], items: &[(&VertexSet, u64)]) -> (u64, Vec<usize>) {
    let mut used: Option<VertexSet> = None;
    for s in committed {
        used.get_or_insert_with(|| VertexSet::new(s.capacity())).union_with(s);
    }
    let mut order: Vec<usize> = (0..items.len())
        .filter(|&i| items[i].1 > 0 && used.as_ref().is_none_or(|u| !u.intersects(items[i].0)))
        .collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(items[i].1), i));
    let mut suffix = vec![0u64; order.len() + 1];
    for k in (0..order.len()).rev() {
        suffix[k] = suffix[k + 1] + items[order[k]].1;
    }
    let exact = order.len() <= EXACT_COVER_LIMIT;
    let mut search = CoverSearch {
        succs,
        committed,
        sets: items.iter().map(|(s, _)| *s).collect(),
        weights: items.iter().map(|(_, w)| *w).collect(),
        order,
        suffix,
        best: 0,
        best_set: Vec::new(),
    };
    if exact {
        search.exact(0, &mut Vec::new(), 0);
    } else {
        search.greedy();
    }
    let mut set = search.best_set;
    set.sort_unstable();
    (search.best, set)
}

/// A class's cover: per block, the weight and chosen occurrence indices.
#[derive(Clone, Debug, Default)]
struct ClassCover {
    merit: u64,
    blocks: BTreeMap<usize, (u64, Vec<usize>)>,
}

impl ClassCover {
    fn occurrences(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.blocks.values().flat_map(|(_, o)| o.iter().copied()).collect();
        v.sort_unstable();
        v
    }
}

fn by_block(problem: &CoverProblem, class: usize) -> BTreeMap<usize, Vec<usize>> {
    let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, (b, _)) in problem.classes[class].occurrences.iter().enumerate() {
        m.entry(*b).or_default().push(k);
    }
    m
}

fn class_cover(problem: &CoverProblem, occ: &Occupancy, class: usize) -> ClassCover {
    let mut cover = ClassCover::default();
    for (b, idx) in by_block(problem, class) {
        let items: Vec<(&VertexSet, u64)> = idx
            .iter()
            .map(|&k| (&problem.classes[class].occurrences[k].1, problem.weight(class, k)))
            .collect();
        let (w, chosen) = block_cover(&problem.succs[b], occ.committed(b), &items);
        if w > 0 {
            cover.merit += w;
            cover.blocks.insert(b, (w, chosen.into_iter().map(|i| idx[i]).collect()));
        }
    }
    cover
}

/// Joint cover of two classes; returns the joint merit and each class's part.
fn pair_cover(
    problem: &CoverProblem,
    occ: &Occupancy,
    (a, ca): (usize, &ClassCover),
    (b, cb): (usize, &ClassCover),
) -> (u64, ClassCover, ClassCover) {
    let mut pa = ca.clone();
    let mut pb = cb.clone();
    let mut joint = ca.merit + cb.merit;
    let shared: Vec<usize> = ca.blocks.keys().filter(|k| cb.blocks.contains_key(k)).copied().collect();
    if shared.is_empty() {
        return (joint, pa, pb);
    }
    let occ_a = by_block(problem, a);
    let occ_b = by_block(problem, b);
    for blk in shared {
        let ia = &occ_a[&blk];
        let ib = &occ_b[&blk];
        let mut items: Vec<(&VertexSet, u64)> = Vec::with_capacity(ia.len() + ib.len());
        items.extend(ia.iter().map(|&k| (&problem.classes[a].occurrences[k].1, problem.weight(a, k))));
        items.extend(ib.iter().map(|&k| (&problem.classes[b].occurrences[k].1, problem.weight(b, k))));
        let (w, chosen) = block_cover(&problem.succs[blk], occ.committed(blk), &items);
        joint = joint - ca.blocks[&blk].0 - cb.blocks[&blk].0 + w;
        let part_a: Vec<usize> = chosen.iter().filter(|&&i| i < ia.len()).map(|&i| ia[i]).collect();
        let part_b: Vec<usize> = chosen.iter().filter(|&&i| i >= ia.len()).map(|&i| ib[i - ia.len()]).collect();
        let wa: u64 = part_a.iter().map(|&k| problem.weight(a, k)).sum();
        let wb = w - wa;
        for (part, pw, cover) in [(part_a, wa, &mut pa), (part_b, wb, &mut pb)] {
            cover.merit = cover.merit - cover.blocks[&blk].0 + pw;
            if pw == 0 {
                cover.blocks.remove(&blk);
            } else {
                cover.blocks.insert(blk, (pw, part));
            }
        }
    }
    (joint, pa, pb)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Best pair under joint cover; returns its stronger member.
    TwoOptimal,
    /// Best single class.
    Greedy,
}

#[derive(Clone, Debug)]
struct Choice {
    class: usize,
    cover: ClassCover,
}

/// Covers valid for one round (fixed occupancy).
struct Round<'a> {
    problem: &'a CoverProblem,
    occ: &'a Occupancy,
    single: HashMap<usize, ClassCover>,
    pairs: HashMap<(usize, usize), (u64, ClassCover, ClassCover)>,
}

impl<'a> Round<'a> {
    fn new(problem: &'a CoverProblem, occ: &'a Occupancy, candidates: &[usize]) -> Round<'a> {
        let single = candidates
            .par_iter()
            .map(|&c| (c, class_cover(problem, occ, c)))
            .collect();
        Round {
            problem,
            occ,
            single,
            pairs: HashMap::new(),
        }
    }

    fn merit(&self, c: usize) -> u64 {
        self.single[&c].merit
    }

    fn choose_best(&mut self, current: &[usize], slots: usize, strategy: Strategy) -> Option<Choice> {
        // Classes arrive in canonical-form order, so a lower index is the
        // smaller canonical form.
        let mut live: Vec<usize> = current.iter().copied().filter(|&c| self.merit(c) > 0).collect();
        live.sort_by_key(|&c| (std::cmp::Reverse(self.merit(c)), c));
        let first = *live.first()?;
        if strategy == Strategy::Greedy || slots == 1 || live.len() == 1 {
            return Some(Choice {
                class: first,
                cover: self.single[&first].clone(),
            });
        }
        let mut best: Option<(u64, usize, usize)> = None;
        for x in 0..live.len() {
            let a = live[x];
            if x + 1 < live.len() && best.is_some_and(|(j, _, _)| self.merit(a) + self.merit(live[x + 1]) < j) {
                break;
            }
            for &b in &live[x + 1..] {
                if best.is_some_and(|(j, _, _)| self.merit(a) + self.merit(b) < j) {
                    break;
                }
                let key = (a.min(b), a.max(b));
                if !self.pairs.contains_key(&key) {
                    let (lo, hi) = key;
                    let r = pair_cover(
                        self.problem,
                        self.occ,
                        (lo, &self.single[&lo]),
                        (hi, &self.single[&hi]),
                    );
                    self.pairs.insert(key, r);
                }
                let joint = self.pairs[&key].0;
                // `live` is sorted, so `a` is the stronger member.
                let better = match best {
                    None => true,
                    Some((j, ba, _)) => joint > j || (joint == j && (self.merit(a), std::cmp::Reverse(a)) > (self.merit(ba), std::cmp::Reverse(ba))),
                };
                if better {
                    best = Some((joint, a, b));
                }
            }
        }
        let (_, a, b) = best?;
        let (_, p_lo, p_hi) = &self.pairs[&(a.min(b), a.max(b))];
        let cover = if a < b { p_lo.clone() } else { p_hi.clone() };
        Some(Choice { class: a, cover })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepOutcome {
    /// New best for the round.
    Improved,
    /// Slower than the baseline; dropped for the round.
    Regression,
    /// No better than the round's best so far.
    NotImproved,
    /// Committed at the end of the round.
    Committed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Step {
    pub round: usize,
    pub class: usize,
    pub merit: u64,
    pub t_clk_ns: f64,
    pub t_ex_ns: f64,
    pub outcome: StepOutcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pick {
    pub class: usize,
    /// Occurrence indices into the class, ascending.
    pub cover: Vec<usize>,
    pub merit: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub picks: Vec<Pick>,
    pub steps: Vec<Step>,
    pub t_ex_base_ns: f64,
    pub t_ex_ns: f64,
    pub estimate: CostEstimate,
}

impl Selection {
    pub fn total_merit(&self) -> u64 {
        self.picks.iter().map(|p| p.merit).sum()
    }

    pub fn chosen(&self) -> Vec<(usize, usize)> {
        self.picks
            .iter()
            .flat_map(|p| p.cover.iter().map(move |&o| (p.class, o)))
            .collect()
    }
}

/// Execution time of `f_total - saved` cycles at period `t_clk_ns`.
pub fn exec_time(f_total: u64, saved: u64, t_clk_ns: f64) -> f64 {
    f_total.saturating_sub(saved) as f64 * t_clk_ns
}

/// The selection loop. `synth` receives the classes of a candidate
/// processor (committed ones first, the new candidate last) and returns
/// its cost estimate.
pub fn run_selection<E>(
    problem: &CoverProblem,
    f_total: u64,
    u_max: usize,
    strategy: Strategy,
    baseline: CostEstimate,
    mut synth: impl FnMut(&[usize]) -> Result<CostEstimate, E>,
) -> Result<Selection, E> {
    let t_ex_base = exec_time(f_total, 0, baseline.t_clk_ns);
    let mut candidates: Vec<usize> = (0..problem.classes.len()).collect();
    let mut occ = Occupancy::default();
    let mut picks: Vec<Pick> = Vec::new();
    let mut steps = Vec::new();
    let mut saved = 0u64;
    let mut estimate = baseline;
    let mut t_ex = t_ex_base;
    while picks.len() < u_max {
        let round_no = picks.len();
        let mut round = Round::new(problem, &occ, &candidates);
        let mut current = candidates.clone();
        let mut t_ex_best = t_ex_base;
        let mut best: Option<(Choice, CostEstimate, f64)> = None;
        while let Some(u) = round.choose_best(&current, u_max - picks.len(), strategy) {
            let mut set: Vec<usize> = picks.iter().map(|p| p.class).collect();
            set.push(u.class);
            let est = synth(&set)?;
            let t_ex_new = exec_time(f_total, saved + u.cover.merit, est.t_clk_ns);
            current.retain(|&c| c != u.class);
            let mut step = Step {
                round: round_no,
                class: u.class,
                merit: u.cover.merit,
                t_clk_ns: est.t_clk_ns,
                t_ex_ns: t_ex_new,
                outcome: StepOutcome::Regression,
            };
            if t_ex_new >= t_ex_base {
                steps.push(step);
                continue;
            }
            let prev_best = t_ex_best;
            if t_ex_new < t_ex_best {
                t_ex_best = t_ex_new;
                step.outcome = StepOutcome::Improved;
                best = Some((u, est, t_ex_new));
            } else {
                step.outcome = StepOutcome::NotImproved;
            }
            steps.push(step);
            if est.met_baseline_timing || t_ex_new >= prev_best {
                break;
            }
        }
        drop(round);
        let Some((u, est, t)) = best else { break };
        for (&b, (_, idx)) in &u.cover.blocks {
            for &k in idx {
                occ.add(b, problem.classes[u.class].occurrences[k].1.clone());
            }
        }
        saved += u.cover.merit;
        estimate = est;
        t_ex = t;
        steps.push(Step {
            round: round_no,
            class: u.class,
            merit: u.cover.merit,
            t_clk_ns: est.t_clk_ns,
            t_ex_ns: t,
            outcome: StepOutcome::Committed,
        });
        candidates.retain(|&c| c != u.class);
        picks.push(Pick {
            class: u.class,
            cover: u.cover.occurrences(),
            merit: u.cover.merit,
        });
    }
    Ok(Selection {
        picks,
        steps,
        t_ex_base_ns: t_ex_base,
        t_ex_ns: t_ex,
        estimate,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SelectConfig {
    pub io: IoShape,
    pub u_max: usize,
    pub strategy: Strategy,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectedClass {
    pub name: String,
    /// Index into the class list.
    pub class: usize,
    pub encoding: Encoding,
    pub merit: u64,
    /// Chosen occurrence indices.
    pub occurrences: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionResult {
    pub selected: Vec<SelectedClass>,
    pub steps: Vec<Step>,
    pub f_total: u64,
    pub f_custom: u64,
    pub t_clk_base_ns: f64,
    pub t_clk_custom_ns: f64,
    pub t_ex_base_ns: f64,
    pub t_ex_custom_ns: f64,
    pub cycle_speedup: f64,
    pub exec_speedup: f64,
    pub area_base: f64,
    pub area_custom: f64,
    pub area_overhead_pct: f64,
}

impl SelectionResult {
    pub fn total_merit(&self) -> u64 {
        self.selected.iter().map(|s| s.merit).sum()
    }
}

#[derive(Debug, Error)]
pub enum SelectError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("selection is infeasible: {0}")]
    Infeasible(#[from] FeasibilityError),
    #[error("selection is slower than the baseline ({custom} ns > {base} ns)")]
    Regression { base: f64, custom: f64 },
}

pub fn class_name(k: usize) -> String {
    format!("cid_{k}")
}

fn encodings(classes: &[IsoClass], set: &[usize], io: IoShape) -> Result<Vec<Encoding>, EncodingError> {
    let mut alloc = EncodingAllocator::new(io);
    set.iter().map(|&c| alloc.allocate(&classes[c].pattern)).collect()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Runs the selection loop against the cost oracle and assigns encodings.
pub fn select(
    classes: &[IsoClass],
    dfgs: &[DataFlowGraph],
    counts: &[u64],
    f_total: u64,
    oracle: &CostOracle,
    cfg: &SelectConfig,
) -> Result<SelectionResult, SelectError> {
    let problem = CoverProblem::from_classes(dfgs, classes, counts);
    let baseline = oracle.estimate(&[])?;
    let sel = run_selection(&problem, f_total, cfg.u_max, cfg.strategy, baseline, |set| {
        let enc = encodings(classes, set, cfg.io)?;
        let entries: Vec<ModelEntry<'_>> = set
            .iter()
            .zip(enc)
            .enumerate()
            .map(|(k, (&c, encoding))| ModelEntry {
                name: class_name(k),
                encoding,
                pattern: &classes[c].pattern,
                cf: &classes[c].cf,
                merit: 0,
            })
            .collect();
        oracle.estimate(&entries).map_err(SelectError::from)
    })?;
    check_feasible(&problem, &sel.chosen())?;
    if !sel.picks.is_empty() && sel.t_ex_ns > sel.t_ex_base_ns {
        return Err(SelectError::Regression {
            base: sel.t_ex_base_ns,
            custom: sel.t_ex_ns,
        });
    }
    let set: Vec<usize> = sel.picks.iter().map(|p| p.class).collect();
    let enc = encodings(classes, &set, cfg.io)?;
    let selected = sel
        .picks
        .iter()
        .zip(enc)
        .enumerate()
        .map(|(k, (p, encoding))| SelectedClass {
            name: class_name(k),
            class: p.class,
            encoding,
            merit: p.merit,
            occurrences: p.cover.clone(),
        })
        .collect();
    let f_custom = f_total - sel.total_merit();
    Ok(SelectionResult {
        selected,
        steps: sel.steps,
        f_total,
        f_custom,
        t_clk_base_ns: baseline.t_clk_ns,
        t_clk_custom_ns: sel.estimate.t_clk_ns,
        t_ex_base_ns: sel.t_ex_base_ns,
        t_ex_custom_ns: sel.t_ex_ns,
        cycle_speedup: ratio(f_total as f64, f_custom as f64),
        exec_speedup: ratio(sel.t_ex_base_ns, sel.t_ex_ns),
        area_base: baseline.area,
        area_custom: sel.estimate.area,
        area_overhead_pct: 100.0 * ratio(sel.estimate.area - baseline.area, baseline.area),
    })
}

/// The chosen occurrences of a selection, grouped by block, for fused replay.
pub fn fused_occurrences(classes: &[IsoClass], result: &SelectionResult, blocks: usize) -> Vec<Vec<FusedOccurrence>> {
    let mut fused = vec![Vec::new(); blocks];
    for s in &result.selected {
        let class = &classes[s.class];
        for &k in &s.occurrences {
            let o = &class.occurrences[k];
            fused[o.bb_id()].push(FusedOccurrence {
                pattern: class.pattern.clone(),
                node_map: o.node_map.clone(),
                reg_map: o.reg_map.clone(),
                imm_map: o.imm_map.clone(),
            });
        }
    }
    fused
}
