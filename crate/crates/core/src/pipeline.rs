//! End-to-end driver: load, profile, enumerate, group, select, emit.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitset::VertexSet;
use crate::canon::{canonicalize, group, IsoClass};
use crate::cfg::{build_cfg, ControlFlowGraph};
use crate::config::{Liveness, ProfileSource, RunConfig};
use crate::cost::{CostOracle, OracleMode};
use crate::dfg::{build_dfg, build_dfg_with_liveness, live_out, DataFlowGraph};
use crate::emit::{dfg_dot, pattern_dot, semantic_body, write_model, ModelEntry};
use crate::enumerate::{enumerate_all, ConstraintConfig, EnumerationError, SubgraphPattern};
use crate::image::{load_image, ProgramImage};
use crate::profile::{load_profile, replay_fused, run_and_profile, Execution, FusedOccurrence, Profile};
use crate::select::{select, SelectConfig, SelectError, SelectionResult, StepOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Decode,
    Profile,
    Enumerate,
    Oracle,
    Encoding,
    Output,
    Internal,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Decode => 3,
            Stage::Profile => 4,
            Stage::Enumerate => 5,
            Stage::Oracle => 6,
            Stage::Encoding => 7,
            Stage::Output | Stage::Internal => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Decode => "decode",
            Stage::Profile => "profile",
            Stage::Enumerate => "enumerate",
            Stage::Oracle => "oracle",
            Stage::Encoding => "encoding",
            Stage::Output => "output",
            Stage::Internal => "internal",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("{stage} error: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> PipelineError {
        PipelineError {
            stage,
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.stage.exit_code()
    }
}

impl From<SelectError> for PipelineError {
    fn from(e: SelectError) -> PipelineError {
        let stage = match e {
            SelectError::Oracle(_) => Stage::Oracle,
            SelectError::Encoding(_) => Stage::Encoding,
            SelectError::Infeasible(_) | SelectError::Regression { .. } => Stage::Internal,
        };
        PipelineError::new(stage, e)
    }
}

impl From<EnumerationError> for PipelineError {
    fn from(e: EnumerationError) -> PipelineError {
        PipelineError::new(Stage::Enumerate, e)
    }
}

/// Decoded program with its block graphs.
pub struct Program {
    pub image: ProgramImage,
    pub cfg: ControlFlowGraph,
    pub dfgs: Vec<DataFlowGraph>,
}

impl Program {
    pub fn from_image(image: ProgramImage, liveness: Liveness) -> Result<Program, PipelineError> {
        let instructions = image.decode_all().map_err(|e| PipelineError::new(Stage::Decode, e))?;
        let cfg = build_cfg(&instructions, image.entry);
        let dfgs = match liveness {
            Liveness::Conservative => cfg.blocks.iter().map(build_dfg).collect(),
            Liveness::Global => {
                let live = live_out(&cfg);
                cfg.blocks
                    .iter()
                    .zip(live)
                    .map(|(b, m)| build_dfg_with_liveness(b, m))
                    .collect()
            }
        };
        Ok(Program { image, cfg, dfgs })
    }

    pub fn load(cfg: &RunConfig) -> Result<Program, PipelineError> {
        let path = cfg
            .input
            .as_ref()
            .ok_or_else(|| PipelineError::new(Stage::Config, "no input given"))?;
        let image = load_image(path, cfg.load_options()).map_err(|e| PipelineError::new(Stage::Decode, e))?;
        Program::from_image(image, cfg.liveness)
    }
}

pub struct ProfileRun {
    pub profile: Profile,
    pub execution: Option<Execution>,
}

pub fn obtain_profile(cfg: &RunConfig, program: &Program) -> Result<ProfileRun, PipelineError> {
    let err = |e| PipelineError::new(Stage::Profile, e);
    match &cfg.profile {
        ProfileSource::Simulate => {
            let exec = run_and_profile(&program.image, &program.cfg, cfg.limits()).map_err(err)?;
            Ok(ProfileRun {
                profile: exec.profile.clone(),
                execution: Some(exec),
            })
        }
        ProfileSource::File(p) => Ok(ProfileRun {
            profile: load_profile(p, &program.cfg).map_err(err)?,
            execution: None,
        }),
        ProfileSource::Uniform => Ok(ProfileRun {
            profile: Profile::uniform(&program.cfg),
            execution: None,
        }),
    }
}

pub struct Analysis {
    pub patterns: Vec<Vec<SubgraphPattern>>,
    pub classes: Vec<IsoClass>,
}

pub fn analyze(program: &Program, constraints: &ConstraintConfig) -> Result<Analysis, PipelineError> {
    let patterns = enumerate_all(&program.dfgs, constraints)?;
    let classes = group(&program.dfgs, &patterns);
    Ok(Analysis { patterns, classes })
}

/// Runs `f` on a pool of `jobs` threads (0 for the default pool).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::new(Stage::Config, e))?;
    Ok(pool.install(f))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputReport {
    pub path: Option<String>,
    pub format: String,
    pub entry: String,
    pub instructions: usize,
    pub blocks: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub source: String,
    pub f_total: u64,
    pub exit_code: Option<u64>,
    pub stdout: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub id: usize,
    pub leader: String,
    pub instructions: usize,
    pub count: u64,
    pub patterns: usize,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub cf: String,
    pub size: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub occurrences: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceReport {
    pub block: usize,
    pub leader: String,
    pub addresses: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedReport {
    pub name: String,
    pub cf: String,
    pub template: String,
    pub funct3: u8,
    pub size: usize,
    pub merit: u64,
    pub body: Vec<String>,
    pub occurrences: Vec<OccurrenceReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub round: usize,
    pub cf: String,
    pub merit: u64,
    pub t_clk_ns: f64,
    pub t_ex_ns: f64,
    pub outcome: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub strategy: String,
    pub selected: Vec<SelectedReport>,
    pub steps: Vec<StepReport>,
    pub f_total: u64,
    pub f_custom: u64,
    pub total_merit: u64,
    pub t_clk_base_ns: f64,
    pub t_clk_custom_ns: f64,
    pub clock_increase_pct: f64,
    pub t_ex_base_ns: f64,
    pub t_ex_custom_ns: f64,
    pub cycle_speedup: f64,
    pub exec_speedup: f64,
    pub area_base: f64,
    pub area_custom: f64,
    pub area_overhead_pct: f64,
}

/// The `report.json` document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub config: serde_json::Value,
    pub config_text: String,
    pub input: InputReport,
    pub profile: ProfileReport,
    pub blocks: Vec<BlockReport>,
    pub patterns: usize,
    pub classes: usize,
    pub class_list: Vec<ClassReport>,
    pub selection: SelectionReport,
    pub decisions: Vec<String>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Report, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::new(Stage::Config, format!("report: {e}")))
    }
}

fn decisions(cfg: &RunConfig) -> Vec<String> {
    let mut d = vec![
        "memory operations in a block are chained by ordering edges; loads, stores, branches, jumps and system operations never join a pattern".to_string(),
        "x0 reads are the constant zero and are never counted as inputs".to_string(),
        "IN counts each external register producer once; at most one immediate is kept as an operand (widest first, then lowest address), the rest are hardcoded into the class".to_string(),
        "a single immediate value feeding two vertices counts once per use when kept".to_string(),
        "canonical forms include the pattern's (in, out) shape".to_string(),
        "candidates slower than the baseline are dropped for the current round only".to_string(),
        "after a new best with a longer clock period the round continues; it stops at the first candidate that does not beat the previous best".to_string(),
        "a class chosen through pair look-ahead is committed with its share of the joint cover".to_string(),
        "encodings take the smallest fitting template and fall back to the next fitting template when its eight funct3 values are used".to_string(),
        "the five-register template layout is artifact-defined".to_string(),
    ];
    d.push(match cfg.liveness {
        Liveness::Conservative => "escape: every register is live at block exit".to_string(),
        Liveness::Global => "escape: live-out registers from a whole-image dataflow pass".to_string(),
    });
    if cfg.oracle.mode == OracleMode::Analytic {
        d.push("analytic cost model; default delay and area tables are non-physical placeholders".to_string());
    }
    d
}

fn hex(a: u64) -> String {
    format!("{a:#x}")
}

fn occurrence_report(program: &Program, bb: usize, set: &VertexSet) -> OccurrenceReport {
    let dfg = &program.dfgs[bb];
    OccurrenceReport {
        block: bb,
        leader: hex(program.cfg.blocks[bb].start_address),
        addresses: set.iter().map(|v| hex(dfg.vertices[v].address)).collect(),
    }
}

/// Everything a run produced, before it is written out.
pub struct RunOutput {
    pub config: RunConfig,
    pub program: Program,
    pub profile: ProfileRun,
    pub analysis: Analysis,
    pub selection: SelectionResult,
    pub report: Report,
}

impl RunOutput {
    pub fn model_entries(&self) -> Vec<ModelEntry<'_>> {
        self.selection
            .selected
            .iter()
            .map(|s| ModelEntry {
                name: s.name.clone(),
                encoding: s.encoding,
                pattern: &self.analysis.classes[s.class].pattern,
                cf: &self.analysis.classes[s.class].cf,
                merit: s.merit,
            })
            .collect()
    }

    pub fn fused(&self) -> Vec<Vec<FusedOccurrence>> {
        crate::select::fused_occurrences(&self.analysis.classes, &self.selection, self.program.cfg.blocks.len())
    }
}

/// Runs the pipeline without writing anything.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::new(Stage::Config, e))?;
    with_jobs(cfg.jobs, || execute_inner(cfg))?
}

fn execute_inner(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    let program = Program::load(cfg)?;
    let profile = obtain_profile(cfg, &program)?;
    let analysis = analyze(&program, &cfg.constraints)?;
    let mut oracle_cfg = cfg.oracle.clone();
    if let OracleMode::External(e) = &mut oracle_cfg.mode {
        if e.workdir.as_os_str().is_empty() {
            e.workdir = cfg.output.join("oracle");
        }
    }
    let oracle = CostOracle::new(oracle_cfg).map_err(|e| PipelineError::new(Stage::Config, e))?;
    let counts = profile.profile.block_counts(&program.cfg);
    let selection = select(
        &analysis.classes,
        &program.dfgs,
        &counts,
        profile.profile.f_total,
        &oracle,
        &SelectConfig {
            io: cfg.constraints.io,
            u_max: cfg.constraints.u_max,
            strategy: cfg.strategy,
        },
    )?;
    let report = build_report(cfg, &program, &profile, &analysis, &selection, &counts);
    Ok(RunOutput {
        config: cfg.clone(),
        program,
        profile,
        analysis,
        selection,
        report,
    })
}

fn build_report(
    cfg: &RunConfig,
    program: &Program,
    profile: &ProfileRun,
    analysis: &Analysis,
    sel: &SelectionResult,
    counts: &[u64],
) -> Report {
    let mut class_blocks = vec![std::collections::BTreeSet::new(); program.cfg.blocks.len()];
    for (k, c) in analysis.classes.iter().enumerate() {
        for o in &c.occurrences {
            class_blocks[o.bb_id()].insert(k);
        }
    }
    let blocks = program
        .cfg
        .blocks
        .iter()
        .map(|b| BlockReport {
            id: b.id,
            leader: hex(b.start_address),
            instructions: b.len(),
            count: counts[b.id],
            patterns: analysis.patterns[b.id].len(),
            classes: class_blocks[b.id].len(),
        })
        .collect();
    let class_list = analysis
        .classes
        .iter()
        .map(|c| ClassReport {
            cf: c.cf.to_hex(),
            size: c.size(),
            inputs: c.pattern.in_count(),
            outputs: c.pattern.out_count(),
            occurrences: c.occurrences.len(),
        })
        .collect();
    let selected = sel
        .selected
        .iter()
        .map(|s| {
            let class = &analysis.classes[s.class];
            SelectedReport {
                name: s.name.clone(),
                cf: class.cf.to_hex(),
                template: s.encoding.template.id().to_string(),
                funct3: s.encoding.funct3,
                size: class.size(),
                merit: s.merit,
                body: semantic_body(&class.pattern),
                occurrences: s
                    .occurrences
                    .iter()
                    .map(|&k| {
                        let o = &class.occurrences[k];
                        occurrence_report(program, o.bb_id(), o.vertices())
                    })
                    .collect(),
            }
        })
        .collect();
    let steps = sel
        .steps
        .iter()
        .map(|s| StepReport {
            round: s.round,
            cf: analysis.classes[s.class].cf.to_hex(),
            merit: s.merit,
            t_clk_ns: s.t_clk_ns,
            t_ex_ns: s.t_ex_ns,
            outcome: match s.outcome {
                StepOutcome::Improved => "improved",
                StepOutcome::Regression => "regression",
                StepOutcome::NotImproved => "not-improved",
                StepOutcome::Committed => "committed",
            }
            .to_string(),
        })
        .collect();
    let source = match &cfg.profile {
        ProfileSource::Simulate => "simulate".to_string(),
        ProfileSource::Uniform => "uniform".to_string(),
        ProfileSource::File(p) => format!("file:{}", p.display()),
    };
    Report {
        tool: "cidre".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: serde_json::to_value(cfg).expect("config serializes"),
        config_text: cfg.to_text(),
        input: InputReport {
            path: cfg.input.as_ref().map(|p| p.display().to_string()),
            format: program.image.format.to_string(),
            entry: hex(program.image.entry),
            instructions: program.cfg.instruction_count(),
            blocks: program.cfg.blocks.len(),
            warnings: program.cfg.warnings.clone(),
        },
        profile: ProfileReport {
            source,
            f_total: profile.profile.f_total,
            exit_code: profile.execution.as_ref().map(|e| e.exit_code),
            stdout: profile
                .execution
                .as_ref()
                .map(|e| String::from_utf8_lossy(&e.stdout).into_owned()),
        },
        blocks,
        patterns: analysis.patterns.iter().map(Vec::len).sum(),
        classes: analysis.classes.len(),
        class_list,
        selection: SelectionReport {
            strategy: match cfg.strategy {
                crate::select::Strategy::TwoOptimal => "two-optimal",
                crate::select::Strategy::Greedy => "greedy",
            }
            .to_string(),
            selected,
            steps,
            f_total: sel.f_total,
            f_custom: sel.f_custom,
            total_merit: sel.total_merit(),
            t_clk_base_ns: sel.t_clk_base_ns,
            t_clk_custom_ns: sel.t_clk_custom_ns,
            clock_increase_pct: 100.0 * (sel.t_clk_custom_ns / sel.t_clk_base_ns - 1.0),
            t_ex_base_ns: sel.t_ex_base_ns,
            t_ex_custom_ns: sel.t_ex_custom_ns,
            cycle_speedup: sel.cycle_speedup,
            exec_speedup: sel.exec_speedup,
            area_base: sel.area_base,
            area_custom: sel.area_custom,
            area_overhead_pct: sel.area_overhead_pct,
        },
        decisions: decisions(cfg),
    }
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::new(Stage::Output, format!("{}: {e}", path.display())))
}

/// Writes `report.json`, `profile.txt`, `model/` and `graphs/` under the
/// output directory.
pub fn write_artifacts(out: &RunOutput) -> Result<(), PipelineError> {
    let dir = &out.config.output;
    let io = |e: std::io::Error| PipelineError::new(Stage::Output, e);
    let graphs = dir.join("graphs");
    std::fs::create_dir_all(&graphs).map_err(io)?;
    write_model(&dir.join("model"), &out.model_entries()).map_err(io)?;
    let mut highlights: std::collections::BTreeMap<usize, Vec<(String, VertexSet)>> = Default::default();
    for s in &out.selection.selected {
        let class = &out.analysis.classes[s.class];
        write(&graphs.join(format!("{}.dot", s.name)), &pattern_dot(&s.name, &class.pattern))?;
        for (n, &k) in s.occurrences.iter().enumerate() {
            let o = &class.occurrences[k];
            highlights
                .entry(o.bb_id())
                .or_default()
                .push((format!("{} #{n}", s.name), o.vertices().clone()));
        }
    }
    for (bb, hl) in &highlights {
        let block = &out.program.cfg.blocks[*bb];
        write(
            &graphs.join(format!("bb_{:x}.dot", block.start_address)),
            &dfg_dot(&out.program.dfgs[*bb], block, hl),
        )?;
    }
    write(&dir.join("profile.txt"), &out.profile.profile.to_text())?;
    write(&dir.join("report.json"), &out.report.to_json())
}

/// Full run: execute, then write artifacts. Nothing is written on error.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    let out = execute(cfg)?;
    write_artifacts(&out)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub f_total: u64,
    /// Σ (|S| - 1) · f_BB over the selected occurrences, from a fresh run.
    pub saved: u64,
    pub replay_cycles: u64,
    pub exact: bool,
    /// Whether the report's own f_custom agrees with the fresh numbers.
    pub matches_report: bool,
}

fn parse_hex(s: &str) -> Result<u64, PipelineError> {
    let bad = || PipelineError::new(Stage::Config, format!("report: bad address `{s}`"));
    u64::from_str_radix(s.strip_prefix("0x").ok_or_else(bad)?, 16).map_err(|_| bad())
}

/// Re-runs the program with the report's selected occurrences fused and
/// checks the cycle count against `f_total - Σ M(U)`.
pub fn verify(report: &Report) -> Result<VerifyOutcome, PipelineError> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(&report.config_text)
        .map_err(|e| PipelineError::new(Stage::Config, e))?;
    let program = Program::load(&cfg)?;
    let plain = run_and_profile(&program.image, &program.cfg, cfg.limits())
        .map_err(|e| PipelineError::new(Stage::Profile, e))?;
    let mut fused: Vec<Vec<FusedOccurrence>> = vec![Vec::new(); program.cfg.blocks.len()];
    let mut saved = 0u64;
    for s in &report.selection.selected {
        for o in &s.occurrences {
            let leader = parse_hex(&o.leader)?;
            let bb = program
                .cfg
                .block_id(leader)
                .ok_or_else(|| PipelineError::new(Stage::Config, format!("report: no block at {leader:#x}")))?;
            let dfg = &program.dfgs[bb];
            let mut set = dfg.empty_set();
            for a in &o.addresses {
                let a = parse_hex(a)?;
                let v = dfg
                    .vertices
                    .iter()
                    .position(|x| x.address == a)
                    .ok_or_else(|| PipelineError::new(Stage::Config, format!("report: {a:#x} not in block")))?;
                set.insert(v);
            }
            let pattern = SubgraphPattern::new(dfg, set, &cfg.constraints);
            let c = canonicalize(dfg, &pattern);
            if c.form.to_hex() != s.cf {
                return Err(PipelineError::new(
                    Stage::Config,
                    format!("report: occurrence at {} does not match class {}", o.leader, s.name),
                ));
            }
            saved += (c.pattern.size() as u64 - 1) * plain.profile.count(leader);
            fused[bb].push(FusedOccurrence {
                pattern: c.pattern,
                node_map: c.node_map,
                reg_map: c.reg_map,
                imm_map: c.imm_map,
            });
        }
    }
    let replay = replay_fused(&program.image, &program.cfg, &program.dfgs, &fused, cfg.limits())
        .map_err(|e| PipelineError::new(Stage::Profile, e))?;
    let f_total = plain.profile.f_total;
    let expected = f_total - saved;
    let matches_report = match cfg.profile {
        ProfileSource::Simulate => report.selection.f_custom == expected && report.selection.f_total == f_total,
        _ => true,
    };
    Ok(VerifyOutcome {
        f_total,
        saved,
        replay_cycles: replay.cycles,
        exact: replay.cycles == expected && replay.exit_code == plain.exit_code && replay.stdout == plain.stdout,
        matches_report,
    })
}

/// Default output location of the report for `dir`.
pub fn report_path(dir: &Path) -> PathBuf {
    dir.join("report.json")
}
