//! Processor-model fragments and DOT graphs.
//!
//! A model directory holds `index` and one `cid_<n>.insn` file per custom
//! instruction. An instruction file is a list of `key value` records
//! followed by a `semantics { ... }` block of straight-line assignments
//! `dest = op(arg, ...);` in topological order. Arguments are operand field
//! names (`rs1`..`rs3`, `imm`), earlier destinations, or integer literals.
//! Destinations are `rd`, `rd2` for outputs and `t<k>` for internal values.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::canon::{CanonSource, CanonicalForm, CanonicalPattern};
use crate::bitset::VertexSet;
use crate::cfg::BasicBlock;
use crate::dfg::{DataFlowGraph, ExternalKind, Slot, Source};
use crate::encoding::{Encoding, Template};
use crate::isa::{Format, Opcode};
use crate::sim::alu;

/// One instruction to be written into a model directory.
#[derive(Clone, Debug)]
pub struct ModelEntry<'a> {
    pub name: String,
    pub encoding: Encoding,
    pub pattern: &'a CanonicalPattern,
    pub cf: &'a CanonicalForm,
    pub merit: u64,
}

fn literal(v: i64) -> String {
    if v < 0 {
        format!("-{:#x}", v.unsigned_abs())
    } else {
        format!("{v:#x}")
    }
}

fn dest_names(p: &CanonicalPattern) -> Vec<String> {
    let mut outs = 0;
    p.nodes
        .iter()
        .enumerate()
        .map(|(k, n)| {
            if n.is_output {
                outs += 1;
                if outs == 1 { "rd".to_string() } else { format!("rd{outs}") }
            } else {
                format!("t{k}")
            }
        })
        .collect()
}

/// The semantic body lines of a pattern.
pub fn semantic_body(p: &CanonicalPattern) -> Vec<String> {
    let names = dest_names(p);
    p.nodes
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let mut slots: Vec<&(Slot, CanonSource)> = n.operands.iter().collect();
            slots.sort_by_key(|(s, _)| *s);
            let args: Vec<String> = slots
                .iter()
                .map(|(_, src)| match *src {
                    CanonSource::Node(j) => names[j].clone(),
                    CanonSource::Reg(j) => format!("rs{}", j + 1),
                    CanonSource::Imm(_) => "imm".to_string(),
                    CanonSource::Const(c) => literal(c),
                })
                .collect();
            format!("{} = {}({});", names[k], n.op.mnemonic(), args.join(", "))
        })
        .collect()
}

fn field_summary(t: Template, funct3: u8) -> String {
    t.fields()
        .iter()
        .map(|f| {
            let width = usize::from(f.hi - f.lo + 1);
            let value = match (f.value, f.name) {
                (Some(v), _) => Some(v),
                (None, "funct3") => Some(u32::from(funct3)),
                _ => None,
            };
            match value {
                Some(v) => format!("{}[{}:{}]={:0width$b}", f.name, f.hi, f.lo, v),
                None => format!("{}[{}:{}]", f.name, f.hi, f.lo),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Text of one `cid_<n>.insn` file.
pub fn instruction_text(e: &ModelEntry<'_>) -> String {
    let t = e.encoding.template;
    let p = e.pattern;
    let mut s = String::from("# custom instruction model\n");
    let _ = writeln!(s, "instruction {}", e.name);
    let _ = writeln!(s, "template {}", t.id());
    let _ = writeln!(s, "opcode {:07b}", t.major_opcode());
    let _ = writeln!(s, "funct3 {:03b}", e.encoding.funct3);
    let _ = writeln!(s, "fields {}", field_summary(t, e.encoding.funct3));
    let mut inputs: Vec<String> = (1..=p.reg_inputs).map(|k| format!("rs{k}")).collect();
    if p.imm_inputs > 0 {
        let width = t.imm_width().expect("template with an immediate field");
        inputs.push(format!("imm:{width}"));
    }
    let _ = writeln!(s, "inputs {}", inputs.join(" "));
    let outputs: Vec<String> = dest_names(p)
        .into_iter()
        .zip(&p.nodes)
        .filter(|(_, n)| n.is_output)
        .map(|(d, _)| d)
        .collect();
    let _ = writeln!(s, "outputs {}", outputs.join(" "));
    let _ = writeln!(s, "size {}", p.size());
    let _ = writeln!(s, "merit {}", e.merit);
    let _ = writeln!(s, "class {}", e.cf.to_hex());
    s.push_str("semantics {\n");
    for line in semantic_body(p) {
        let _ = writeln!(s, "    {line}");
    }
    s.push_str("}\n");
    s
}

pub fn index_text(entries: &[ModelEntry<'_>]) -> String {
    let mut s = String::from("# custom instruction index\n");
    let _ = writeln!(s, "instructions {}", entries.len());
    for e in entries {
        let _ = writeln!(
            s,
            "{} {} funct3={} size={} merit={} file={}.insn",
            e.name,
            e.encoding.template.id(),
            e.encoding.funct3,
            e.pattern.size(),
            e.merit,
            e.name
        );
    }
    s
}

/// Writes `index` and the instruction files into `dir`, creating it.
pub fn write_model(dir: &Path, entries: &[ModelEntry<'_>]) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for e in entries {
        std::fs::write(dir.join(format!("{}.insn", e.name)), instruction_text(e))?;
    }
    std::fs::write(dir.join("index"), index_text(entries))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing `{0}` record")]
    Missing(&'static str),
    #[error("undefined name `{0}`")]
    Undefined(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Arg {
    Name(String),
    Literal(i64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Statement {
    pub dest: String,
    pub op: Opcode,
    pub args: Vec<Arg>,
}

/// A parsed instruction file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelInstruction {
    pub name: String,
    pub template: Template,
    pub funct3: u8,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub body: Vec<Statement>,
}

fn parse_literal(s: &str) -> Option<i64> {
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let magnitude = match digits.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16).ok()?,
        None => digits.parse::<u64>().ok()?,
    };
    Some(if neg { (magnitude as i64).wrapping_neg() } else { magnitude as i64 })
}

impl ModelInstruction {
    pub fn parse(text: &str) -> Result<ModelInstruction, ModelError> {
        let mut name = None;
        let mut template = None;
        let mut funct3 = None;
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut body = Vec::new();
        let mut in_body = false;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let err = |message: &str| ModelError::Syntax {
                line,
                message: message.to_string(),
            };
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            if in_body {
                if l == "}" {
                    in_body = false;
                    continue;
                }
                let stmt = l.strip_suffix(';').ok_or_else(|| err("missing `;`"))?;
                let (dest, rhs) = stmt.split_once('=').ok_or_else(|| err("missing `=`"))?;
                let rhs = rhs.trim();
                let open = rhs.find('(').ok_or_else(|| err("missing `(`"))?;
                let inner = rhs[open + 1..].strip_suffix(')').ok_or_else(|| err("missing `)`"))?;
                let op = Opcode::from_mnemonic(rhs[..open].trim()).ok_or_else(|| err("unknown operation"))?;
                let args = inner
                    .split(',')
                    .map(str::trim)
                    .filter(|a| !a.is_empty())
                    .map(|a| match parse_literal(a) {
                        Some(v) => Arg::Literal(v),
                        None => Arg::Name(a.to_string()),
                    })
                    .collect();
                body.push(Statement {
                    dest: dest.trim().to_string(),
                    op,
                    args,
                });
                continue;
            }
            let (key, value) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
            let value = value.trim();
            match key {
                "instruction" => name = Some(value.to_string()),
                "template" => template = Some(Template::from_id(value).ok_or_else(|| err("unknown template"))?),
                "funct3" => funct3 = Some(u8::from_str_radix(value, 2).map_err(|_| err("bad funct3"))?),
                "inputs" => {
                    inputs = value
                        .split_whitespace()
                        .map(|i| i.split(':').next().unwrap().to_string())
                        .collect()
                }
                "outputs" => outputs = value.split_whitespace().map(str::to_string).collect(),
                "semantics" if value == "{" => in_body = true,
                _ => {}
            }
        }
        if in_body {
            return Err(ModelError::Syntax {
                line: text.lines().count(),
                message: "unterminated semantics block".into(),
            });
        }
        Ok(ModelInstruction {
            name: name.ok_or(ModelError::Missing("instruction"))?,
            template: template.ok_or(ModelError::Missing("template"))?,
            funct3: funct3.ok_or(ModelError::Missing("funct3"))?,
            inputs,
            outputs,
            body,
        })
    }

    /// Runs the semantic body. `regs` binds `rs1`, `rs2`, ... in order.
    /// Returns the output values in `outputs` order.
    pub fn evaluate(&self, regs: &[u64], imm: Option<i64>) -> Result<Vec<u64>, ModelError> {
        let mut env: HashMap<&str, u64> = HashMap::new();
        let names = ["rs1", "rs2", "rs3"];
        for (k, v) in regs.iter().enumerate() {
            env.insert(names[k], *v);
        }
        if let Some(i) = imm {
            env.insert("imm", i as u64);
        }
        for st in &self.body {
            let vals: Vec<u64> = st
                .args
                .iter()
                .map(|a| match a {
                    Arg::Literal(v) => Ok(*v as u64),
                    Arg::Name(n) => env.get(n.as_str()).copied().ok_or_else(|| ModelError::Undefined(n.clone())),
                })
                .collect::<Result<_, _>>()?;
            let (a, b) = match (st.op.format(), vals.as_slice()) {
                (Format::U, [b]) => (0, *b),
                (_, [a, b]) => (*a, *b),
                _ => {
                    return Err(ModelError::Syntax {
                        line: 0,
                        message: format!("{}: wrong number of arguments", st.dest),
                    })
                }
            };
            let v = alu(st.op, a, b).ok_or_else(|| ModelError::Undefined(st.op.mnemonic().into()))?;
            env.insert(st.dest.as_str(), v);
        }
        self.outputs
            .iter()
            .map(|o| env.get(o.as_str()).copied().ok_or_else(|| ModelError::Undefined(o.clone())))
            .collect()
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn edge_label(slot: Slot, commutative: bool) -> String {
    if commutative {
        format!("{}*", slot.name())
    } else {
        slot.name().to_string()
    }
}

/// DOT rendering of a block's DFG. Each highlight is drawn as a shaded
/// cluster around its vertices.
pub fn dfg_dot(dfg: &DataFlowGraph, block: &BasicBlock, highlights: &[(String, VertexSet)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "digraph bb_{} {{", dfg.bb_id);
    let _ = writeln!(s, "  label=\"block {} at {:#x}\";", dfg.bb_id, block.start_address);
    s.push_str("  node [fontname=\"monospace\"];\n");
    let mut in_cluster = vec![false; dfg.len()];
    for (k, (name, set)) in highlights.iter().enumerate() {
        let _ = writeln!(s, "  subgraph cluster_{k} {{");
        let _ = writeln!(s, "    label=\"{}\"; style=filled; fillcolor=\"#e0e0e0\";", dot_escape(name));
        for v in set.iter() {
            in_cluster[v] = true;
            let _ = writeln!(
                s,
                "    v{v} [shape=box, style=filled, fillcolor=\"#a0c4ff\", label=\"{}\\n{:#x}\"];",
                dfg.vertices[v].op.mnemonic(),
                dfg.vertices[v].address
            );
        }
        s.push_str("  }\n");
    }
    for (v, vx) in dfg.vertices.iter().enumerate() {
        if !in_cluster[v] {
            let _ = writeln!(
                s,
                "  v{v} [shape=box, label=\"{}\\n{:#x}\"];",
                vx.op.mnemonic(),
                vx.address
            );
        }
    }
    for (e, kind) in dfg.externals.iter().enumerate() {
        let label = match kind {
            ExternalKind::Reg(r) => r.to_string(),
            ExternalKind::Imm(v) => literal(*v),
            ExternalKind::Zero => "0".to_string(),
        };
        let _ = writeln!(s, "  e{e} [shape=ellipse, label=\"{label}\"];");
    }
    for (v, vx) in dfg.vertices.iter().enumerate() {
        for o in &vx.operands {
            let from = match o.source {
                Source::Internal(p) => format!("v{p}"),
                Source::External(e) => format!("e{e}"),
            };
            let _ = writeln!(s, "  {from} -> v{v} [label=\"{}\"];", edge_label(o.slot, o.commutative));
        }
    }
    for (v, succ) in dfg.order_succs.iter().enumerate() {
        for w in succ {
            let _ = writeln!(s, "  v{v} -> v{w} [style=dashed, label=\"mem\"];");
        }
    }
    s.push_str("}\n");
    s
}

/// DOT rendering of a class in canonical numbering.
pub fn pattern_dot(name: &str, p: &CanonicalPattern) -> String {
    let names = dest_names(p);
    let mut s = String::new();
    let _ = writeln!(s, "digraph {} {{", dot_escape(name).replace(' ', "_"));
    s.push_str("  node [fontname=\"monospace\"];\n");
    for k in 0..p.reg_inputs {
        let _ = writeln!(s, "  rs{} [shape=ellipse];", k + 1);
    }
    if p.imm_inputs > 0 {
        s.push_str("  imm [shape=ellipse];\n");
    }
    let mut consts = 0;
    for (k, n) in p.nodes.iter().enumerate() {
        let style = if n.is_output { ", style=filled, fillcolor=\"#a0c4ff\"" } else { "" };
        let _ = writeln!(s, "  n{k} [shape=box{style}, label=\"{}\\n{}\"];", n.op.mnemonic(), names[k]);
        for &(slot, src) in &n.operands {
            let from = match src {
                CanonSource::Node(j) => format!("n{j}"),
                CanonSource::Reg(j) => format!("rs{}", j + 1),
                CanonSource::Imm(_) => "imm".to_string(),
                CanonSource::Const(c) => {
                    consts += 1;
                    let id = format!("c{consts}");
                    let _ = writeln!(s, "  {id} [shape=ellipse, style=dashed, label=\"{}\"];", literal(c));
                    id
                }
            };
            let commutative = n.op.is_commutative() && matches!(slot, Slot::Rs1 | Slot::Rs2);
            let _ = writeln!(s, "  {from} -> n{k} [label=\"{}\"];", edge_label(slot, commutative));
        }
    }
    s.push_str("}\n");
    s
}
