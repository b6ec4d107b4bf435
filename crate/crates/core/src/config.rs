//! Run configuration and its line-oriented file format.
//!
//! ```text
//! # comment
//! [constraints]
//! io = 3,1
//! u_max = 8
//! [oracle]
//! delay.mul = 3.0
//! ```
//!
//! Keys are addressed as `section.key`; command-line flags are applied
//! through the same setter after the file, so they win.

use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::cost::{ExternalOracle, OracleConfig, OracleMode};
use crate::enumerate::{default_forbidden, ConstraintConfig, IoShape};
use crate::image::{ImageFormat, LoadOptions};
use crate::isa::Opcode;
use crate::profile::SimLimits;
use crate::select::Strategy;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "path")]
pub enum ProfileSource {
    Simulate,
    File(PathBuf),
    Uniform,
}

impl FromStr for ProfileSource {
    type Err = String;

    fn from_str(s: &str) -> Result<ProfileSource, String> {
        match s {
            "simulate" => Ok(ProfileSource::Simulate),
            "uniform" => Ok(ProfileSource::Uniform),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(ProfileSource::File(PathBuf::from(p))),
                _ => Err(format!("expected simulate, uniform or file:<path>, got `{s}`")),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Liveness {
    /// Every register is live at block exit.
    Conservative,
    /// Live-out sets from a whole-image dataflow pass.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub format: Option<ImageFormat>,
    pub base: Option<u64>,
    pub entry: Option<u64>,
    pub profile: ProfileSource,
    pub max_steps: u64,
    pub memory: u64,
    pub constraints: ConstraintConfig,
    pub liveness: Liveness,
    pub oracle: OracleConfig,
    pub strategy: Strategy,
    pub output: PathBuf,
    /// Worker threads; 0 picks the machine default.
    pub jobs: usize,
    pub seed: u64,
    pub verbosity: u8,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        let limits = SimLimits::default();
        RunConfig {
            input: None,
            format: None,
            base: None,
            entry: None,
            profile: ProfileSource::Simulate,
            max_steps: limits.max_steps,
            memory: limits.memory,
            constraints: ConstraintConfig::default(),
            liveness: Liveness::Conservative,
            oracle: OracleConfig::default(),
            strategy: Strategy::TwoOptimal,
            output: PathBuf::from("cidre-out"),
            jobs: 0,
            seed: 0,
            verbosity: 0,
        }
    }
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let s = s.replace('_', "");
    match s.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16).map_err(|e| e.to_string()),
        None => s.parse().map_err(|e: std::num::ParseIntError| e.to_string()),
    }
}

fn parse<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn opcode(name: &str) -> Result<Opcode, String> {
    Opcode::from_mnemonic(name).ok_or_else(|| format!("unknown operation `{name}`"))
}

fn forbidden_set(value: &str) -> Result<std::collections::BTreeSet<Opcode>, String> {
    let mut set = std::collections::BTreeSet::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item == "default" {
            set.extend(default_forbidden());
        } else {
            set.insert(opcode(item)?);
        }
    }
    Ok(set)
}

impl RunConfig {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            format: self.format,
            base: self.base,
            entry: self.entry,
        }
    }

    pub fn limits(&self) -> SimLimits {
        SimLimits {
            max_steps: self.max_steps,
            memory: self.memory,
        }
    }

    /// Sets one `section.key` value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), RunConfigError> {
        let v = value.trim();
        let bad = |message: String| RunConfigError::Value {
            key: key.to_string(),
            message,
        };
        let c = &mut self.constraints;
        let o = &mut self.oracle;
        match key {
            "input.path" => self.input = Some(PathBuf::from(v)),
            "input.format" => self.format = Some(parse(v).map_err(bad)?),
            "input.base" => self.base = Some(parse_u64(v).map_err(bad)?),
            "input.entry" => self.entry = Some(parse_u64(v).map_err(bad)?),
            "profile.source" => self.profile = parse(v).map_err(bad)?,
            "profile.max_steps" => self.max_steps = parse_u64(v).map_err(bad)?,
            "profile.memory" => self.memory = parse_u64(v).map_err(bad)?,
            "constraints.io" => c.io = parse::<IoShape>(v).map_err(bad)?,
            "constraints.u_max" => c.u_max = parse(v).map_err(bad)?,
            "constraints.forbidden" => c.forbidden = forbidden_set(v).map_err(bad)?,
            "constraints.min_pattern_size" => c.min_pattern_size = parse(v).map_err(bad)?,
            "constraints.max_components" => c.max_components = parse(v).map_err(bad)?,
            "constraints.candidate_cap" => c.candidate_cap = parse_u64(v).map_err(bad)?,
            "constraints.liveness" => {
                self.liveness = match v {
                    "conservative" => Liveness::Conservative,
                    "global" => Liveness::Global,
                    _ => return Err(bad("expected conservative or global".into())),
                }
            }
            "oracle.mode" => match v {
                "analytic" => o.mode = OracleMode::Analytic,
                "external" => {
                    if !matches!(o.mode, OracleMode::External(_)) {
                        o.mode = OracleMode::External(ExternalOracle {
                            command: Vec::new(),
                            workdir: PathBuf::new(),
                        });
                    }
                }
                _ => return Err(bad("expected analytic or external".into())),
            },
            "oracle.command" => {
                let command = v.split_whitespace().map(str::to_string).collect();
                match &mut o.mode {
                    OracleMode::External(e) => e.command = command,
                    OracleMode::Analytic => {
                        o.mode = OracleMode::External(ExternalOracle {
                            command,
                            workdir: PathBuf::new(),
                        })
                    }
                }
            }
            "oracle.workdir" => match &mut o.mode {
                OracleMode::External(e) => e.workdir = PathBuf::from(v),
                OracleMode::Analytic => return Err(bad("only meaningful with an external oracle".into())),
            },
            "oracle.t_clk_base_ns" => o.t_clk_base_ns = parse(v).map_err(bad)?,
            "oracle.baseline_area" => o.baseline_area = parse(v).map_err(bad)?,
            "oracle.decode_overhead" => o.decode_overhead = parse(v).map_err(bad)?,
            "oracle.delay_unit_ns" => o.delay_unit_ns = parse(v).map_err(bad)?,
            "oracle.decoder_area" => o.decoder_area = parse(v).map_err(bad)?,
            "oracle.read_port_area" => o.read_port_area = parse(v).map_err(bad)?,
            "oracle.write_port_area" => o.write_port_area = parse(v).map_err(bad)?,
            "selection.strategy" => {
                self.strategy = match v {
                    "two-optimal" => Strategy::TwoOptimal,
                    "greedy" => Strategy::Greedy,
                    _ => return Err(bad("expected two-optimal or greedy".into())),
                }
            }
            "output.dir" => self.output = PathBuf::from(v),
            "run.jobs" => self.jobs = parse(v).map_err(bad)?,
            "run.seed" => self.seed = parse_u64(v).map_err(bad)?,
            "run.verbosity" => self.verbosity = parse(v).map_err(bad)?,
            _ => {
                if let Some(op) = key.strip_prefix("oracle.delay.") {
                    let op = opcode(op).map_err(bad)?;
                    o.delay_overrides.insert(op, parse(v).map_err(bad)?);
                } else if let Some(op) = key.strip_prefix("oracle.area.") {
                    let op = opcode(op).map_err(bad)?;
                    o.area_overrides.insert(op, parse(v).map_err(bad)?);
                } else {
                    return Err(RunConfigError::UnknownKey(key.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Applies a config file's text.
    pub fn apply_text(&mut self, text: &str) -> Result<(), RunConfigError> {
        let mut section = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            if let Some(name) = l.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| RunConfigError::Syntax {
                    line,
                    message: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = l.split_once('=').ok_or_else(|| RunConfigError::Syntax {
                line,
                message: "expected `key = value`".into(),
            })?;
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            self.set(&full, value).map_err(|e| RunConfigError::Syntax {
                line,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), RunConfigError> {
        self.constraints
            .validate()
            .map_err(|e| RunConfigError::Invalid(e.to_string()))?;
        self.oracle
            .validate()
            .map_err(|e| RunConfigError::Invalid(e.to_string()))?;
        if self.max_steps == 0 {
            return Err(RunConfigError::Invalid("max_steps must be positive".into()));
        }
        Ok(())
    }

    /// The effective configuration in file form.
    pub fn to_text(&self) -> String {
        let c = &self.constraints;
        let o = &self.oracle;
        let mut sections: Vec<(&str, Vec<(String, String)>)> = Vec::new();
        let mut input = Vec::new();
        if let Some(p) = &self.input {
            input.push(("path".into(), p.display().to_string()));
        }
        if let Some(f) = self.format {
            input.push(("format".into(), f.to_string()));
        }
        if let Some(b) = self.base {
            input.push(("base".into(), format!("{b:#x}")));
        }
        if let Some(e) = self.entry {
            input.push(("entry".into(), format!("{e:#x}")));
        }
        sections.push(("input", input));
        let source = match &self.profile {
            ProfileSource::Simulate => "simulate".to_string(),
            ProfileSource::Uniform => "uniform".to_string(),
            ProfileSource::File(p) => format!("file:{}", p.display()),
        };
        sections.push((
            "profile",
            vec![
                ("source".into(), source),
                ("max_steps".into(), self.max_steps.to_string()),
                ("memory".into(), self.memory.to_string()),
            ],
        ));
        let forbidden: Vec<&str> = c.forbidden.iter().map(|op| op.mnemonic()).collect();
        sections.push((
            "constraints",
            vec![
                ("io".into(), c.io.to_string()),
                ("u_max".into(), c.u_max.to_string()),
                ("forbidden".into(), forbidden.join(",")),
                ("min_pattern_size".into(), c.min_pattern_size.to_string()),
                ("max_components".into(), c.max_components.to_string()),
                ("candidate_cap".into(), c.candidate_cap.to_string()),
                (
                    "liveness".into(),
                    match self.liveness {
                        Liveness::Conservative => "conservative".into(),
                        Liveness::Global => "global".into(),
                    },
                ),
            ],
        ));
        let mut oracle = Vec::new();
        match &o.mode {
            OracleMode::Analytic => oracle.push(("mode".into(), "analytic".into())),
            OracleMode::External(e) => {
                oracle.push(("mode".into(), "external".into()));
                oracle.push(("command".into(), e.command.join(" ")));
                oracle.push(("workdir".into(), e.workdir.display().to_string()));
            }
        }
        for (k, v) in [
            ("t_clk_base_ns", o.t_clk_base_ns),
            ("baseline_area", o.baseline_area),
            ("decode_overhead", o.decode_overhead),
            ("delay_unit_ns", o.delay_unit_ns),
            ("decoder_area", o.decoder_area),
            ("read_port_area", o.read_port_area),
            ("write_port_area", o.write_port_area),
        ] {
            oracle.push((k.into(), v.to_string()));
        }
        for (op, v) in &o.delay_overrides {
            oracle.push((format!("delay.{}", op.mnemonic()), v.to_string()));
        }
        for (op, v) in &o.area_overrides {
            oracle.push((format!("area.{}", op.mnemonic()), v.to_string()));
        }
        sections.push(("oracle", oracle));
        let strategy = match self.strategy {
            Strategy::TwoOptimal => "two-optimal",
            Strategy::Greedy => "greedy",
        };
        sections.push(("selection", vec![("strategy".into(), strategy.into())]));
        sections.push(("output", vec![("dir".into(), self.output.display().to_string())]));
        sections.push((
            "run",
            vec![
                ("jobs".into(), self.jobs.to_string()),
                ("seed".into(), self.seed.to_string()),
                ("verbosity".into(), self.verbosity.to_string()),
            ],
        ));
        let mut s = String::new();
        for (name, entries) in sections.into_iter().filter(|(_, e)| !e.is_empty()) {
            if !s.is_empty() {
                s.push('\n');
            }
            s.push_str(&format!("[{name}]\n"));
            for (k, v) in entries {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }
}
