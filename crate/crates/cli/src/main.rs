use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cidre_core::config::RunConfig;
use cidre_core::emit::dfg_dot;
use cidre_core::image::to_listing;
use cidre_core::pipeline::{self, analyze, obtain_profile, PipelineError, Program, Report, Stage};

#[derive(Parser)]
#[command(name = "cidre", version, about = "Custom instruction discovery for RV64IM programs")]
struct Cli {
    /// Config file; flags override its values.
    #[arg(long, global = true, env = "CIDRE_CONFIG")]
    config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: profile, enumerate, select and emit.
    Run(RunArgs),
    /// Print the decoded program as a listing.
    Decode(InputArgs),
    /// Print the DFG of one block as DOT.
    Graph {
        #[command(flatten)]
        input: InputArgs,
        /// Block leader address (hex) or block index.
        #[arg(long)]
        block: String,
    },
    /// Count candidate patterns and classes.
    Enumerate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        constraints: ConstraintArgs,
    },
    /// Run the bundled simulator and print the block profile.
    Profile {
        #[command(flatten)]
        input: InputArgs,
        /// Step limit.
        #[arg(long)]
        max_steps: Option<u64>,
        /// Also write the profile to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a report's selection with fused occurrences and check the
    /// cycle accounting.
    Verify {
        /// Report file or output directory of a previous run.
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Program image (ELF64, flat binary or listing).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Image format: elf64, flat or listing (sniffed when absent).
    #[arg(long)]
    format: Option<String>,
    /// Load address for flat images.
    #[arg(long)]
    base: Option<String>,
    /// Entry point override.
    #[arg(long)]
    entry: Option<String>,
    /// Register liveness at block exit: conservative or global.
    #[arg(long)]
    liveness: Option<String>,
}

#[derive(Args)]
struct ConstraintArgs {
    /// I/O shape: 2,1 or 3,1 or 3,2.
    #[arg(long)]
    io: Option<String>,
    /// Forbidden operations, comma separated; `default` expands to the
    /// default set.
    #[arg(long)]
    forbid: Option<String>,
    /// Smallest pattern size kept.
    #[arg(long)]
    min_size: Option<String>,
    /// Per-block candidate cap.
    #[arg(long)]
    cap: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    constraints: ConstraintArgs,
    /// Maximum number of custom instructions.
    #[arg(long)]
    umax: Option<String>,
    /// Profile source: simulate, uniform or file:<path>.
    #[arg(long)]
    profile: Option<String>,
    /// Step limit for the simulator.
    #[arg(long)]
    max_steps: Option<String>,
    /// Selection strategy: two-optimal or greedy.
    #[arg(long)]
    strategy: Option<String>,
    /// External cost command; gets the model directory and a result path.
    #[arg(long)]
    oracle_cmd: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for enumeration and canonization.
    #[arg(long)]
    jobs: Option<String>,
    /// Recorded in the report; the pipeline itself draws no random numbers.
    #[arg(long)]
    seed: Option<String>,
}

struct Settings(RunConfig);

impl Settings {
    fn set(&mut self, key: &str, value: Option<&str>) -> Result<(), PipelineError> {
        if let Some(v) = value {
            self.0.set(key, v).map_err(|e| PipelineError::new(Stage::Config, e))?;
        }
        Ok(())
    }

    fn input(&mut self, a: &InputArgs) -> Result<(), PipelineError> {
        if let Some(p) = &a.input {
            self.0.input = Some(p.clone());
        }
        self.set("input.format", a.format.as_deref())?;
        self.set("input.base", a.base.as_deref())?;
        self.set("input.entry", a.entry.as_deref())?;
        self.set("constraints.liveness", a.liveness.as_deref())
    }

    fn constraints(&mut self, a: &ConstraintArgs) -> Result<(), PipelineError> {
        self.set("constraints.io", a.io.as_deref())?;
        self.set("constraints.forbidden", a.forbid.as_deref())?;
        self.set("constraints.min_pattern_size", a.min_size.as_deref())?;
        self.set("constraints.candidate_cap", a.cap.as_deref())
    }
}

fn base_config(cli: &Cli) -> Result<Settings, PipelineError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text).map_err(|e| PipelineError::new(Stage::Config, e))?;
    }
    if cli.verbose > 0 {
        cfg.verbosity = cli.verbose;
    }
    Ok(Settings(cfg))
}

fn load(s: &Settings) -> Result<Program, PipelineError> {
    s.0.validate().map_err(|e| PipelineError::new(Stage::Config, e))?;
    Program::load(&s.0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("cidre: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8, PipelineError> {
    let mut s = base_config(cli)?;
    match &cli.command {
        Command::Run(a) => {
            s.input(&a.input)?;
            s.constraints(&a.constraints)?;
            s.set("constraints.u_max", a.umax.as_deref())?;
            s.set("profile.source", a.profile.as_deref())?;
            s.set("profile.max_steps", a.max_steps.as_deref())?;
            s.set("selection.strategy", a.strategy.as_deref())?;
            s.set("oracle.command", a.oracle_cmd.as_deref())?;
            s.set("run.jobs", a.jobs.as_deref())?;
            s.set("run.seed", a.seed.as_deref())?;
            if let Some(o) = &a.out {
                s.0.output = o.clone();
            }
            let out = pipeline::run(&s.0)?;
            print_summary(&out.report, &s.0);
            Ok(0)
        }
        Command::Decode(a) => {
            s.input(a)?;
            let p = load(&s)?;
            let instructions: Vec<_> = p.cfg.blocks.iter().flat_map(|b| b.instructions.iter().cloned()).collect();
            print!("{}", to_listing(&instructions));
            Ok(0)
        }
        Command::Graph { input, block } => {
            s.input(input)?;
            let p = load(&s)?;
            let id = match block.strip_prefix("0x") {
                Some(h) => u64::from_str_radix(h, 16).ok().and_then(|a| p.cfg.block_id(a)),
                None => block.parse::<usize>().ok().filter(|&i| i < p.cfg.blocks.len()),
            }
            .ok_or_else(|| PipelineError::new(Stage::Config, format!("no block `{block}`")))?;
            print!("{}", dfg_dot(&p.dfgs[id], &p.cfg.blocks[id], &[]));
            Ok(0)
        }
        Command::Enumerate { input, constraints } => {
            s.input(input)?;
            s.constraints(constraints)?;
            let p = load(&s)?;
            let a = pipeline::with_jobs(s.0.jobs, || analyze(&p, &s.0.constraints))??;
            for (b, ps) in p.cfg.blocks.iter().zip(&a.patterns) {
                if !ps.is_empty() {
                    println!("block {:#x} instructions {} patterns {}", b.start_address, b.len(), ps.len());
                }
            }
            println!("patterns {}", a.patterns.iter().map(Vec::len).sum::<usize>());
            println!("classes {}", a.classes.len());
            Ok(0)
        }
        Command::Profile { input, max_steps, out } => {
            s.input(input)?;
            if let Some(m) = max_steps {
                s.0.max_steps = *m;
            }
            s.0.profile = cidre_core::config::ProfileSource::Simulate;
            let p = load(&s)?;
            let run = obtain_profile(&s.0, &p)?;
            let text = run.profile.to_text();
            print!("{text}");
            if let Some(path) = out {
                std::fs::write(path, &text)
                    .map_err(|e| PipelineError::new(Stage::Output, format!("{}: {e}", path.display())))?;
            }
            if let Some(e) = run.execution {
                println!("# f_total {}", run.profile.f_total);
                println!("# exit {}", e.exit_code);
                if !e.stdout.is_empty() {
                    println!("# stdout {:?}", String::from_utf8_lossy(&e.stdout));
                }
            }
            Ok(0)
        }
        Command::Verify { report } => {
            let path = if report.is_dir() {
                pipeline::report_path(report)
            } else {
                report.clone()
            };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))?;
            let r = Report::from_json(&text)?;
            let v = pipeline::verify(&r)?;
            println!(
                "f_total {} saved {} expected {} replay {}",
                v.f_total,
                v.saved,
                v.f_total - v.saved,
                v.replay_cycles
            );
            if v.exact && v.matches_report {
                println!("exact");
                Ok(0)
            } else if v.exact {
                println!("exact (report counts differ from a fresh profile)");
                Ok(0)
            } else {
                println!("mismatch");
                Ok(1)
            }
        }
    }
}

fn print_summary(r: &Report, cfg: &RunConfig) {
    let s = &r.selection;
    println!(
        "blocks {} patterns {} classes {} f_total {}",
        r.input.blocks, r.patterns, r.classes, s.f_total
    );
    for c in &s.selected {
        println!(
            "{} {} funct3={} size={} merit={} occurrences={}",
            c.name,
            c.template,
            c.funct3,
            c.size,
            c.merit,
            c.occurrences.len()
        );
    }
    println!(
        "cycle speedup {:.4} exec speedup {:.4} clock +{:.2}% area +{:.2}%",
        s.cycle_speedup, s.exec_speedup, s.clock_increase_pct, s.area_overhead_pct
    );
    println!("report {}", pipeline::report_path(&cfg.output).display());
}
