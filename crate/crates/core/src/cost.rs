//! Clock-period and area estimation for a candidate instruction set.
//!
//! The analytic model charges each class its longest operation chain plus a
//! fixed decode overhead. The default delay and area tables are placeholders
//! with no physical calibration; real numbers come from per-op overrides or
//! the external command hook.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::canon::{CanonSource, CanonicalPattern};
use crate::emit::{write_model, ModelEntry};
use crate::isa::Opcode;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExternalOracle {
    /// Program and leading arguments; the model directory and result path
    /// are appended.
    pub command: Vec<String>,
    pub workdir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    Analytic,
    External(ExternalOracle),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleConfig {
    pub mode: OracleMode,
    pub t_clk_base_ns: f64,
    pub baseline_area: f64,
    pub decode_overhead: f64,
    pub delay_unit_ns: f64,
    /// Area of each class's decoder entry.
    pub decoder_area: f64,
    /// Added once when any class reads a third register.
    pub read_port_area: f64,
    /// Added once when any class writes a second register.
    pub write_port_area: f64,
    pub delay_overrides: BTreeMap<Opcode, f64>,
    pub area_overrides: BTreeMap<Opcode, f64>,
}

impl Default for OracleConfig {
    fn default() -> OracleConfig {
        OracleConfig {
            mode: OracleMode::Analytic,
            t_clk_base_ns: 1.0,
            baseline_area: 100.0,
            decode_overhead: 1.0,
            delay_unit_ns: 0.25,
            decoder_area: 0.5,
            read_port_area: 6.0,
            write_port_area: 4.0,
            delay_overrides: BTreeMap::new(),
            area_overrides: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid oracle configuration: {0}")]
    Config(String),
    #[error("oracle command failed to start: {0}")]
    Spawn(std::io::Error),
    #[error("oracle command exited with {0}")]
    Exit(String),
    #[error("oracle result file: {0}")]
    Result(String),
    #[error("oracle work directory: {0}")]
    Io(std::io::Error),
    #[error("cost estimate is not finite")]
    Overflow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostEstimate {
    pub t_clk_ns: f64,
    pub area: f64,
    pub met_baseline_timing: bool,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(OracleError::Config(format!("{name} must be positive")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(OracleError::Config(format!("{name} must be non-negative")))
            }
        };
        positive("t_clk_base", self.t_clk_base_ns)?;
        positive("delay_unit_ns", self.delay_unit_ns)?;
        non_negative("baseline_area", self.baseline_area)?;
        non_negative("decode_overhead", self.decode_overhead)?;
        non_negative("decoder_area", self.decoder_area)?;
        non_negative("read_port_area", self.read_port_area)?;
        non_negative("write_port_area", self.write_port_area)?;
        for (op, v) in self.delay_overrides.iter().chain(&self.area_overrides) {
            non_negative(op.mnemonic(), *v)?;
        }
        if let OracleMode::External(e) = &self.mode {
            if e.command.is_empty() {
                return Err(OracleError::Config("empty external command".into()));
            }
        }
        Ok(())
    }

    pub fn delay(&self, op: Opcode) -> f64 {
        self.delay_overrides.get(&op).copied().unwrap_or(op.info().hw_delay_units)
    }

    pub fn area(&self, op: Opcode) -> f64 {
        self.area_overrides.get(&op).copied().unwrap_or(op.info().area_units)
    }

    /// Longest operation chain of a pattern, in delay units.
    pub fn critical_path(&self, p: &CanonicalPattern) -> f64 {
        // Canonical node order is topological.
        let mut arrival = vec![0.0f64; p.nodes.len()];
        for (k, n) in p.nodes.iter().enumerate() {
            let ready = n
                .operands
                .iter()
                .filter_map(|(_, s)| match s {
                    CanonSource::Node(j) => Some(arrival[*j]),
                    _ => None,
                })
                .fold(0.0, f64::max);
            arrival[k] = ready + self.delay(n.op);
        }
        arrival.into_iter().fold(0.0, f64::max)
    }

    pub fn baseline(&self) -> CostEstimate {
        CostEstimate {
            t_clk_ns: self.t_clk_base_ns,
            area: self.baseline_area,
            met_baseline_timing: true,
        }
    }

    pub fn analytic(&self, entries: &[ModelEntry<'_>]) -> Result<CostEstimate, OracleError> {
        if entries.is_empty() {
            return Ok(self.baseline());
        }
        let path = entries
            .iter()
            .map(|e| self.critical_path(e.pattern))
            .fold(0.0, f64::max);
        let t = (self.decode_overhead + path) * self.delay_unit_ns;
        let t_clk_ns = t.max(self.t_clk_base_ns);
        let mut area = self.baseline_area;
        for e in entries {
            area += self.decoder_area;
            area += e.pattern.nodes.iter().map(|n| self.area(n.op)).sum::<f64>();
        }
        if entries.iter().any(|e| e.encoding.template.reg_inputs() > 2) {
            area += self.read_port_area;
        }
        if entries.iter().any(|e| e.encoding.template.outputs() > 1) {
            area += self.write_port_area;
        }
        if !t_clk_ns.is_finite() || !area.is_finite() {
            return Err(OracleError::Overflow);
        }
        Ok(CostEstimate {
            t_clk_ns,
            area,
            met_baseline_timing: t_clk_ns == self.t_clk_base_ns,
        })
    }
}

/// Parses an external result file.
pub fn parse_result(text: &str) -> Result<(f64, f64), OracleError> {
    let mut clk = None;
    let mut area = None;
    for line in text.lines() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| OracleError::Result(format!("malformed line `{l}`")))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| OracleError::Result(format!("bad number in `{l}`")))?;
        if !value.is_finite() || value < 0.0 {
            return Err(OracleError::Result(format!("out of range in `{l}`")));
        }
        match k.trim() {
            "clock_period_ns" => clk = Some(value),
            "area_units" => area = Some(value),
            _ => {}
        }
    }
    match (clk, area) {
        (Some(c), Some(a)) if c > 0.0 => Ok((c, a)),
        (Some(_), Some(_)) => Err(OracleError::Result("clock_period_ns must be positive".into())),
        (None, _) => Err(OracleError::Result("missing clock_period_ns".into())),
        (_, None) => Err(OracleError::Result("missing area_units".into())),
    }
}

/// Stateful estimator; external invocations are serialized.
pub struct CostOracle {
    cfg: OracleConfig,
    calls: Mutex<usize>,
}

impl CostOracle {
    pub fn new(cfg: OracleConfig) -> Result<CostOracle, OracleError> {
        cfg.validate()?;
        Ok(CostOracle {
            cfg,
            calls: Mutex::new(0),
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn estimate(&self, entries: &[ModelEntry<'_>]) -> Result<CostEstimate, OracleError> {
        let mut calls = self.calls.lock().unwrap_or_else(|e| e.into_inner());
        *calls += 1;
        let ext = match &self.cfg.mode {
            OracleMode::Analytic => return self.cfg.analytic(entries),
            OracleMode::External(_) if entries.is_empty() => return Ok(self.cfg.baseline()),
            OracleMode::External(e) => e,
        };
        let dir = ext.workdir.join(format!("query-{:04}", *calls));
        let model = dir.join("model");
        let result = dir.join("result");
        write_model(&model, entries).map_err(OracleError::Io)?;
        let _ = std::fs::remove_file(&result);
        let status = Command::new(&ext.command[0])
            .args(&ext.command[1..])
            .arg(&model)
            .arg(&result)
            .status()
            .map_err(OracleError::Spawn)?;
        if !status.success() {
            return Err(OracleError::Exit(status.to_string()));
        }
        let text = std::fs::read_to_string(&result)
            .map_err(|e| OracleError::Result(format!("{}: {e}", result.display())))?;
        let (clk, area) = parse_result(&text)?;
        let t_clk_ns = clk.max(self.cfg.t_clk_base_ns);
        Ok(CostEstimate {
            t_clk_ns,
            area,
            met_baseline_timing: t_clk_ns == self.cfg.t_clk_base_ns,
        })
    }
}
