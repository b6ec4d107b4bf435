//! Basic-block execution profiles and fused replay.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::canon::CanonicalPattern;
use crate::cfg::ControlFlowGraph;
use crate::dfg::{DataFlowGraph, ExternalKind, Source};
use crate::enumerate::ImmUse;
use crate::image::ProgramImage;
use crate::sim::{Flow, Machine, SimError, DEFAULT_MEMORY};

/// Execution count of every block, keyed by leader address.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Profile {
    pub counts: BTreeMap<u64, u64>,
    /// Dynamic instruction count, Σ f_BB · |BB|.
    pub f_total: u64,
}

impl Profile {
    /// Builds a profile from per-leader counts; leaders must belong to `cfg`.
    pub fn from_counts(cfg: &ControlFlowGraph, counts: BTreeMap<u64, u64>) -> Profile {
        let f_total = counts
            .iter()
            .map(|(a, c)| c * cfg.block_at(*a).map_or(0, |b| b.len() as u64))
            .sum();
        Profile { counts, f_total }
    }

    /// Every block executed once.
    pub fn uniform(cfg: &ControlFlowGraph) -> Profile {
        Profile::from_counts(cfg, cfg.blocks.iter().map(|b| (b.start_address, 1)).collect())
    }

    pub fn count(&self, leader: u64) -> u64 {
        self.counts.get(&leader).copied().unwrap_or(0)
    }

    /// Counts indexed by block id.
    pub fn block_counts(&self, cfg: &ControlFlowGraph) -> Vec<u64> {
        cfg.blocks.iter().map(|b| self.count(b.start_address)).collect()
    }

    /// The profile file text: `HEXADDR COUNT` lines in ascending order.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# leader count\n");
        for (a, c) in &self.counts {
            let _ = writeln!(s, "{a:08x} {c}");
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("cannot read profile: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate leader {address:#x}")]
    DuplicateLeader { line: usize, address: u64 },
    #[error("line {line}: {address:#x} is not a block leader")]
    NotLeader { line: usize, address: u64 },
    #[error("line {line}: addresses must be ascending")]
    Unsorted { line: usize },
    #[error("line {line}: count does not fit in 64 bits")]
    Overflow { line: usize },
    #[error("fused replay: {0}")]
    Replay(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimLimits {
    pub max_steps: u64,
    pub memory: u64,
}

impl Default for SimLimits {
    fn default() -> Self {
        SimLimits {
            max_steps: 1_000_000_000,
            memory: DEFAULT_MEMORY,
        }
    }
}

/// Outcome of running the program to completion.
#[derive(Clone, Debug)]
pub struct Execution {
    pub profile: Profile,
    pub exit_code: u64,
    pub stdout: Vec<u8>,
    pub regs: [u64; 32],
    /// Cycles under CPI 1; equals `f_total` for a plain run.
    pub cycles: u64,
}

fn enter_block(cfg: &ControlFlowGraph, pc: u64) -> Result<usize, SimError> {
    match cfg.block_id(pc) {
        Some(b) => Ok(b),
        None if cfg.locate(pc).is_some() => Err(SimError::MidBlockEntry(pc)),
        None => Err(SimError::NoInstruction(pc)),
    }
}

/// Runs the image and counts block entries.
pub fn run_and_profile(
    image: &ProgramImage,
    cfg: &ControlFlowGraph,
    limits: SimLimits,
) -> Result<Execution, ProfileError> {
    let mut m = Machine::new(image, limits.memory)?;
    let mut counts = vec![0u64; cfg.blocks.len()];
    let mut steps = 0u64;
    let exit_code = 'run: loop {
        let b = enter_block(cfg, m.pc)?;
        counts[b] += 1;
        for ins in &cfg.blocks[b].instructions {
            steps += 1;
            if steps > limits.max_steps {
                return Err(SimError::StepLimit(limits.max_steps).into());
            }
            if let Flow::Exit(code) = m.execute(ins)? {
                break 'run code;
            }
        }
    };
    let counts = cfg
        .blocks
        .iter()
        .zip(&counts)
        .map(|(bb, &c)| (bb.start_address, c))
        .collect();
    let profile = Profile::from_counts(cfg, counts);
    debug_assert_eq!(profile.f_total, steps);
    Ok(Execution {
        profile,
        exit_code,
        stdout: m.stdout,
        regs: m.regs,
        cycles: steps,
    })
}

/// Parses a profile file against the block structure of the program.
pub fn parse_profile(text: &str, cfg: &ControlFlowGraph) -> Result<Profile, ProfileError> {
    let mut counts = BTreeMap::new();
    let mut last: Option<u64> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let syntax = |message: &str| ProfileError::Syntax {
            line,
            message: message.to_string(),
        };
        let mut fields = body.split_whitespace();
        let (Some(a), Some(c), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(syntax("expected `HEXADDR COUNT`"));
        };
        let a = a.strip_prefix("0x").unwrap_or(a);
        let address = u64::from_str_radix(a, 16).map_err(|_| syntax("bad hexadecimal address"))?;
        if !c.bytes().all(|b| b.is_ascii_digit()) {
            return Err(syntax("bad decimal count"));
        }
        let count: u64 = c.parse().map_err(|_| ProfileError::Overflow { line })?;
        if counts.contains_key(&address) {
            return Err(ProfileError::DuplicateLeader { line, address });
        }
        if last.is_some_and(|l| address < l) {
            return Err(ProfileError::Unsorted { line });
        }
        if cfg.block_at(address).is_none() {
            return Err(ProfileError::NotLeader { line, address });
        }
        last = Some(address);
        counts.insert(address, count);
    }
    Ok(Profile::from_counts(cfg, counts))
}

pub fn load_profile(path: &Path, cfg: &ControlFlowGraph) -> Result<Profile, ProfileError> {
    parse_profile(&std::fs::read_to_string(path)?, cfg)
}

/// One selected occurrence as executed by the fused replay.
#[derive(Clone, Debug)]
pub struct FusedOccurrence {
    pub pattern: CanonicalPattern,
    pub node_map: Vec<usize>,
    pub reg_map: Vec<Source>,
    pub imm_map: Vec<ImmUse>,
}

enum Unit {
    Single(usize),
    Fused(usize),
}

/// Execution order of one block with its occurrences contracted.
struct Schedule {
    units: Vec<Unit>,
    cycles: u64,
}

fn schedule(
    dfg: &DataFlowGraph,
    terminal: Option<usize>,
    fused: &[FusedOccurrence],
) -> Result<Schedule, ProfileError> {
    let n = dfg.len();
    let mut group: Vec<Option<usize>> = vec![None; n];
    for (k, f) in fused.iter().enumerate() {
        for &v in &f.node_map {
            if group[v].is_some() {
                return Err(ProfileError::Replay(format!(
                    "block {} has overlapping occurrences",
                    dfg.bb_id
                )));
            }
            group[v] = Some(k);
        }
    }
    // Unit ids: fused occurrences first, then single vertices.
    let unit_of = |v: usize| group[v].unwrap_or(fused.len() + v);
    let total = fused.len() + n;
    let mut indegree = vec![0usize; total];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); total];
    for v in 0..n {
        for w in dfg.successors(v) {
            let (a, b) = (unit_of(v), unit_of(w));
            if a != b {
                succ[a].push(b);
                indegree[b] += 1;
            }
        }
    }
    let live: Vec<usize> = (0..total)
        .filter(|&u| u < fused.len() || group[u - fused.len()].is_none())
        .filter(|&u| Some(u) != terminal.map(|t| fused.len() + t))
        .collect();
    let mut ready: std::collections::BTreeSet<usize> =
        live.iter().copied().filter(|&u| indegree[u] == 0).collect();
    let mut order = Vec::new();
    while let Some(u) = ready.pop_first() {
        order.push(u);
        for &w in &succ[u] {
            indegree[w] -= 1;
            if indegree[w] == 0 && Some(w) != terminal.map(|t| fused.len() + t) {
                ready.insert(w);
            }
        }
    }
    if order.len() != live.len() {
        return Err(ProfileError::Replay(format!(
            "block {} is cyclic after contraction",
            dfg.bb_id
        )));
    }
    let mut units: Vec<Unit> = order
        .into_iter()
        .map(|u| {
            if u < fused.len() {
                Unit::Fused(u)
            } else {
                Unit::Single(u - fused.len())
            }
        })
        .collect();
    if let Some(t) = terminal {
        units.push(Unit::Single(t));
    }
    Ok(Schedule {
        cycles: units.len() as u64,
        units,
    })
}

/// Runs the program with every selected occurrence executed as one
/// operation that retires in one cycle. Values inside a block are bound by
/// data flow, so the run also checks that the contracted schedule exists and
/// that fused evaluation reproduces the architectural state.
pub fn replay_fused(
    image: &ProgramImage,
    cfg: &ControlFlowGraph,
    dfgs: &[DataFlowGraph],
    fused: &[Vec<FusedOccurrence>],
    limits: SimLimits,
) -> Result<Execution, ProfileError> {
    let schedules: Vec<Schedule> = cfg
        .blocks
        .iter()
        .map(|b| {
            let last = b.instructions.last().filter(|i| i.is_terminator());
            let terminal = last.map(|_| b.len() - 1);
            schedule(&dfgs[b.id], terminal, fused.get(b.id).map_or(&[], |v| v))
        })
        .collect::<Result<_, _>>()?;

    let mut m = Machine::new(image, limits.memory)?;
    let mut counts = vec![0u64; cfg.blocks.len()];
    let mut cycles = 0u64;
    let mut steps = 0u64;
    let mut values: Vec<u64> = Vec::new();
    let exit_code = 'run: loop {
        let b = enter_block(cfg, m.pc)?;
        counts[b] += 1;
        let block = &cfg.blocks[b];
        let dfg = &dfgs[b];
        let sched = &schedules[b];
        steps += block.len() as u64;
        if steps > limits.max_steps {
            return Err(SimError::StepLimit(limits.max_steps).into());
        }
        cycles += sched.cycles;
        let entry = m.regs;
        values.clear();
        values.resize(block.len(), 0);
        let bind = |values: &[u64], src: Source| -> u64 {
            match src {
                Source::Internal(p) => values[p],
                Source::External(e) => match dfg.externals[e] {
                    ExternalKind::Reg(r) => entry[r.index()],
                    ExternalKind::Zero => 0,
                    ExternalKind::Imm(v) => v as u64,
                },
            }
        };
        let terminal = block.instructions.last().filter(|i| i.is_terminator()).map(|_| block.len() - 1);
        for unit in &sched.units {
            match *unit {
                Unit::Fused(k) => {
                    let f = &fused[b][k];
                    let regs: Vec<u64> = f.reg_map.iter().map(|&s| bind(&values, s)).collect();
                    let imms: Vec<i64> = f.imm_map.iter().map(|u| u.value).collect();
                    for (pos, value) in f.pattern.evaluate(&regs, &imms).into_iter().enumerate() {
                        values[f.node_map[pos]] = value;
                    }
                }
                Unit::Single(v) if Some(v) == terminal => {
                    // Control transfer after the register file is brought up to date.
                    for (w, vx) in dfg.vertices.iter().enumerate().take(v) {
                        if vx.writes() {
                            m.set_reg(vx.rd, values[w]);
                        }
                    }
                    m.pc = block.instructions[v].address;
                    if let Flow::Exit(code) = m.execute(&block.instructions[v])? {
                        break 'run code;
                    }
                }
                Unit::Single(v) => {
                    let ins = &block.instructions[v];
                    let operand = |slot| {
                        dfg.vertices[v]
                            .operand(slot)
                            .map_or(0, |o| bind(&values, o.source))
                    };
                    let (a, c) = (operand(crate::dfg::Slot::Rs1), operand(crate::dfg::Slot::Rs2));
                    m.pc = ins.address;
                    if let (_, Some(value)) = m.execute_with(ins, a, c)? {
                        values[v] = value;
                    }
                }
            }
        }
        if terminal.is_none() {
            for (w, vx) in dfg.vertices.iter().enumerate() {
                if vx.writes() {
                    m.set_reg(vx.rd, values[w]);
                }
            }
            m.pc = block.end_address();
        }
    };
    let counts = cfg
        .blocks
        .iter()
        .zip(&counts)
        .map(|(bb, &c)| (bb.start_address, c))
        .collect();
    Ok(Execution {
        profile: Profile::from_counts(cfg, counts),
        exit_code,
        stdout: m.stdout,
        regs: m.regs,
        cycles,
    })
}
