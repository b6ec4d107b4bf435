//! RV64IM instruction model: operation catalog, decoder and encoder.
//!
//! Only the 32-bit base encodings of RV64I and the M extension are accepted.
//! Compressed, floating-point, atomic and CSR encodings are rejected with a
//! [`DecodeError`] rather than skipped.

mod decode;
mod encode;
mod ops;

use std::fmt;

pub use decode::{decode, DecodeError};
pub use encode::{encode, EncodeError};
pub use ops::{Format, ImmKind, OpClass, OpInfo, Opcode};

/// An architectural integer register `x0`..`x31`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);

    /// Returns `None` for indices above 31.
    pub fn new(index: u8) -> Option<Reg> {
        (index < 32).then_some(Reg(index))
    }

    pub(crate) fn from_field(bits: u32) -> Reg {
        Reg((bits & 0x1f) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// One decoded instruction with its operand roles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub address: u64,
    pub op: Opcode,
    pub rd: Option<Reg>,
    pub rs1: Option<Reg>,
    pub rs2: Option<Reg>,
    /// Always `None` for RV64IM; kept so that the operand model covers R4 forms.
    pub rs3: Option<Reg>,
    pub imm: Option<i64>,
    pub raw: u32,
}

impl Instruction {
    /// Builds an instruction with no operands; fill the fields the format needs.
    pub fn new(address: u64, op: Opcode) -> Instruction {
        Instruction {
            address,
            op,
            rd: None,
            rs1: None,
            rs2: None,
            rs3: None,
            imm: None,
            raw: 0,
        }
    }

    pub fn info(&self) -> &'static OpInfo {
        self.op.info()
    }

    pub fn is_branch(&self) -> bool {
        self.op.class() == OpClass::Branch
    }

    pub fn is_jump(&self) -> bool {
        self.op.class() == OpClass::Jump
    }

    pub fn is_load(&self) -> bool {
        self.op.class() == OpClass::Load
    }

    pub fn is_store(&self) -> bool {
        self.op.class() == OpClass::Store
    }

    pub fn is_system(&self) -> bool {
        self.op.class() == OpClass::System
    }

    /// Branches, jumps and system instructions end a basic block.
    pub fn is_terminator(&self) -> bool {
        matches!(
            self.op.class(),
            OpClass::Branch | OpClass::Jump | OpClass::System
        ) && self.op != Opcode::Fence
    }

    /// Statically known control-transfer target (branches and `jal`).
    pub fn direct_target(&self) -> Option<u64> {
        match (self.op.class(), self.op) {
            (OpClass::Branch, _) | (_, Opcode::Jal) => {
                self.imm.map(|off| self.address.wrapping_add(off as u64))
            }
            _ => None,
        }
    }

    /// Source registers in slot order (`rs1`, `rs2`, `rs3`) that are present.
    pub fn sources(&self) -> impl Iterator<Item = Reg> + '_ {
        [self.rs1, self.rs2, self.rs3].into_iter().flatten()
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.op.mnemonic();
        let imm = self.imm.unwrap_or(0);
        match self.op.format() {
            Format::R => write!(
                f,
                "{m} {}, {}, {}",
                self.rd.unwrap_or(Reg::ZERO),
                self.rs1.unwrap_or(Reg::ZERO),
                self.rs2.unwrap_or(Reg::ZERO)
            ),
            Format::I | Format::Shift6 | Format::Shift5 => match self.op.class() {
                OpClass::Load | OpClass::Jump => write!(
                    f,
                    "{m} {}, {imm}({})",
                    self.rd.unwrap_or(Reg::ZERO),
                    self.rs1.unwrap_or(Reg::ZERO)
                ),
                _ => write!(
                    f,
                    "{m} {}, {}, {imm}",
                    self.rd.unwrap_or(Reg::ZERO),
                    self.rs1.unwrap_or(Reg::ZERO)
                ),
            },
            Format::S => write!(
                f,
                "{m} {}, {imm}({})",
                self.rs2.unwrap_or(Reg::ZERO),
                self.rs1.unwrap_or(Reg::ZERO)
            ),
            Format::B => write!(
                f,
                "{m} {}, {}, {imm}",
                self.rs1.unwrap_or(Reg::ZERO),
                self.rs2.unwrap_or(Reg::ZERO)
            ),
            Format::U => write!(f, "{m} {}, {:#x}", self.rd.unwrap_or(Reg::ZERO), imm & 0xfffff),
            Format::J => write!(f, "{m} {}, {imm}", self.rd.unwrap_or(Reg::ZERO)),
            Format::Fence => write!(f, "{m} {:#x}", imm),
            Format::System => f.write_str(m),
        }
    }
}

/// Minimal two's complement width needed to hold `value`.
pub fn signed_width(value: i64) -> u8 {
    if value >= 0 {
        (65 - value.leading_zeros()) as u8
    } else {
        (65 - (!value).leading_zeros()) as u8
    }
}

/// Whether `value` fits a signed field of `bits` bits.
pub fn fits_signed(value: i64, bits: u8) -> bool {
    signed_width(value) <= bits
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_widths() {
        assert_eq!(signed_width(0), 1);
        assert_eq!(signed_width(-1), 1);
        assert_eq!(signed_width(1), 2);
        assert_eq!(signed_width(2047), 12);
        assert_eq!(signed_width(-2048), 12);
        assert_eq!(signed_width(2048), 13);
        assert_eq!(signed_width(i64::MIN), 64);
        assert_eq!(signed_width(i64::MAX), 64);
        assert!(fits_signed(31, 6));
        assert!(!fits_signed(32, 6));
    }

    #[test]
    fn terminators() {
        let mut i = Instruction::new(0, Opcode::Beq);
        assert!(i.is_terminator());
        i.op = Opcode::Ecall;
        assert!(i.is_terminator());
        i.op = Opcode::Fence;
        assert!(!i.is_terminator());
        i.op = Opcode::Add;
        assert!(!i.is_terminator());
    }
}
