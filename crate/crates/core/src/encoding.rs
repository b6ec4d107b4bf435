//! Instruction encodings for custom instructions and funct3 slot assignment.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::canon::CanonicalPattern;
use crate::enumerate::IoShape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Template {
    #[serde(rename = "R2_1_REG")]
    R2_1Reg,
    #[serde(rename = "R2_1_IMM12")]
    R2_1Imm12,
    #[serde(rename = "R3_1_REG")]
    R3_1Reg,
    #[serde(rename = "R3_1_IMM6")]
    R3_1Imm6,
    #[serde(rename = "R3_2_REG")]
    R3_2Reg,
}

/// A named bit range `[hi:lo]` of an encoding; `value` is set for fixed fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Field {
    pub name: &'static str,
    pub hi: u8,
    pub lo: u8,
    pub value: Option<u32>,
}

const fn field(name: &'static str, hi: u8, lo: u8) -> Field {
    Field { name, hi, lo, value: None }
}

const fn fixed(name: &'static str, hi: u8, lo: u8, value: u32) -> Field {
    Field { name, hi, lo, value: Some(value) }
}

pub const CUSTOM_0: u32 = 0b000_1011;
pub const CUSTOM_1: u32 = 0b010_1011;
pub const CUSTOM_3: u32 = 0b111_1011;
/// Major opcode of the two-output form; funct3 occupies bits 4:2 of it.
pub const OP_FP: u32 = 0b101_0011;

impl Template {
    /// In order of increasing capacity.
    pub const ALL: [Template; 5] = [
        Template::R2_1Reg,
        Template::R2_1Imm12,
        Template::R3_1Reg,
        Template::R3_1Imm6,
        Template::R3_2Reg,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Template::R2_1Reg => "R2_1_REG",
            Template::R2_1Imm12 => "R2_1_IMM12",
            Template::R3_1Reg => "R3_1_REG",
            Template::R3_1Imm6 => "R3_1_IMM6",
            Template::R3_2Reg => "R3_2_REG",
        }
    }

    pub fn from_id(id: &str) -> Option<Template> {
        Template::ALL.into_iter().find(|t| t.id() == id)
    }

    pub fn reg_inputs(self) -> usize {
        match self {
            Template::R2_1Reg => 2,
            Template::R2_1Imm12 => 1,
            Template::R3_1Reg | Template::R3_2Reg => 3,
            Template::R3_1Imm6 => 2,
        }
    }

    pub fn imm_width(self) -> Option<u8> {
        match self {
            Template::R2_1Imm12 => Some(12),
            Template::R3_1Imm6 => Some(6),
            _ => None,
        }
    }

    pub fn outputs(self) -> usize {
        match self {
            Template::R3_2Reg => 2,
            _ => 1,
        }
    }

    pub fn inputs(self) -> usize {
        self.reg_inputs() + usize::from(self.imm_width().is_some())
    }

    /// The I/O shape the template belongs to.
    pub fn shape(self) -> IoShape {
        IoShape {
            inputs: self.inputs() as u8,
            outputs: self.outputs() as u8,
        }
    }

    pub fn major_opcode(self) -> u32 {
        match self {
            Template::R2_1Reg | Template::R3_1Reg => CUSTOM_0,
            Template::R2_1Imm12 => CUSTOM_1,
            Template::R3_1Imm6 => CUSTOM_3,
            Template::R3_2Reg => OP_FP,
        }
    }

    /// Field layout from bit 31 down to bit 0.
    pub fn fields(self) -> &'static [Field] {
        const R2_1_REG: &[Field] = &[
            fixed("funct7", 31, 25, 0),
            field("rs2", 24, 20),
            field("rs1", 19, 15),
            field("funct3", 14, 12),
            field("rd", 11, 7),
            fixed("opcode", 6, 0, CUSTOM_0),
        ];
        const R2_1_IMM12: &[Field] = &[
            field("imm", 31, 20),
            field("rs1", 19, 15),
            field("funct3", 14, 12),
            field("rd", 11, 7),
            fixed("opcode", 6, 0, CUSTOM_1),
        ];
        const R3_1_REG: &[Field] = &[
            field("rs3", 31, 27),
            fixed("funct2", 26, 25, 0b01),
            field("rs2", 24, 20),
            field("rs1", 19, 15),
            field("funct3", 14, 12),
            field("rd", 11, 7),
            fixed("opcode", 6, 0, CUSTOM_0),
        ];
        const R3_1_IMM6: &[Field] = &[
            field("imm", 31, 26),
            fixed("zero", 25, 25, 0),
            field("rs2", 24, 20),
            field("rs1", 19, 15),
            field("funct3", 14, 12),
            field("rd", 11, 7),
            fixed("opcode", 6, 0, CUSTOM_3),
        ];
        const R3_2_REG: &[Field] = &[
            field("rs3", 31, 27),
            field("rd2_hi", 26, 25),
            field("rs2", 24, 20),
            field("rs1", 19, 15),
            field("rd2_lo", 14, 12),
            field("rd", 11, 7),
            fixed("opcode_hi", 6, 5, OP_FP >> 5),
            field("funct3", 4, 2),
            fixed("opcode_lo", 1, 0, OP_FP & 3),
        ];
        match self {
            Template::R2_1Reg => R2_1_REG,
            Template::R2_1Imm12 => R2_1_IMM12,
            Template::R3_1Reg => R3_1_REG,
            Template::R3_1Imm6 => R3_1_IMM6,
            Template::R3_2Reg => R3_2_REG,
        }
    }

    /// Whether a class fits: enough register inputs, an immediate field if
    /// needed, enough outputs.
    pub fn fits(self, p: &CanonicalPattern) -> bool {
        p.reg_inputs <= self.reg_inputs()
            && p.imm_inputs <= usize::from(self.imm_width().is_some())
            && p.out_count() <= self.outputs()
    }

    /// Templates usable in a run with the given I/O limits.
    pub fn available(limit: IoShape) -> impl Iterator<Item = Template> {
        Template::ALL.into_iter().filter(move |t| {
            t.inputs() <= usize::from(limit.inputs)
                && t.outputs() <= usize::from(limit.outputs)
                && t.imm_width().is_none_or(|w| limit.imm_slot_width().is_some_and(|l| l <= w))
        })
    }

    /// Assembles an instruction word. `regs` holds rs1, rs2, rs3 in order,
    /// `dests` holds rd and rd2.
    pub fn assemble(self, funct3: u8, dests: &[u8], regs: &[u8], imm: Option<i64>) -> u32 {
        let mut word = 0u32;
        for f in self.fields() {
            let width = u32::from(f.hi - f.lo + 1);
            let mask = if width == 32 { u32::MAX } else { (1 << width) - 1 };
            let reg = |k: usize, list: &[u8]| u32::from(list.get(k).copied().unwrap_or(0));
            let v = match (f.value, f.name) {
                (Some(v), _) => v,
                (None, "funct3") => u32::from(funct3),
                (None, "rd") => reg(0, dests),
                (None, "rd2_hi") => reg(1, dests) >> 3,
                (None, "rd2_lo") => reg(1, dests) & 7,
                (None, "rs1") => reg(0, regs),
                (None, "rs2") => reg(1, regs),
                (None, "rs3") => reg(2, regs),
                (None, "imm") => imm.unwrap_or(0) as u32,
                (None, other) => unreachable!("unknown field {other}"),
            };
            word |= (v & mask) << f.lo;
        }
        word
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Encoding {
    pub template: Template,
    pub funct3: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("no encoding template fits a pattern with {regs} register inputs, {imms} immediates and {outs} outputs")]
    NoTemplate { regs: usize, imms: usize, outs: usize },
    #[error("all eight funct3 slots of {templates} are taken")]
    Exhausted { templates: String },
}

/// Hands out funct3 slots, eight per template.
#[derive(Clone, Debug)]
pub struct EncodingAllocator {
    limit: IoShape,
    used: [u8; 5],
}

impl EncodingAllocator {
    pub fn new(limit: IoShape) -> EncodingAllocator {
        EncodingAllocator { limit, used: [0; 5] }
    }

    /// The encoding the next class of this pattern would receive: the
    /// smallest fitting template with a free slot.
    pub fn peek(&self, p: &CanonicalPattern) -> Result<Encoding, EncodingError> {
        let fitting: Vec<Template> = Template::available(self.limit).filter(|t| t.fits(p)).collect();
        if fitting.is_empty() {
            return Err(EncodingError::NoTemplate {
                regs: p.reg_inputs,
                imms: p.imm_inputs,
                outs: p.out_count(),
            });
        }
        fitting
            .iter()
            .find(|&&t| self.used[t as usize] < 8)
            .map(|&t| Encoding {
                template: t,
                funct3: self.used[t as usize],
            })
            .ok_or_else(|| EncodingError::Exhausted {
                templates: fitting.iter().map(|t| t.id()).collect::<Vec<_>>().join(", "),
            })
    }

    pub fn allocate(&mut self, p: &CanonicalPattern) -> Result<Encoding, EncodingError> {
        let e = self.peek(p)?;
        self.used[e.template as usize] += 1;
        Ok(e)
    }
}
