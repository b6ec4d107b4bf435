use thiserror::Error;

use super::{Format, Instruction, Opcode, Reg};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("{op}: missing operand {operand}")]
    MissingOperand { op: Opcode, operand: &'static str },
    #[error("{op}: immediate {value} does not fit the instruction field")]
    ImmediateOutOfRange { op: Opcode, value: i64 },
}

fn major_opcode(op: Opcode) -> u32 {
    use Opcode::*;
    match op {
        Lui => 0b0110111,
        Auipc => 0b0010111,
        Jal => 0b1101111,
        Jalr => 0b1100111,
        Beq | Bne | Blt | Bge | Bltu | Bgeu => 0b1100011,
        Lb | Lh | Lw | Ld | Lbu | Lhu | Lwu => 0b0000011,
        Sb | Sh | Sw | Sd => 0b0100011,
        Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai => 0b0010011,
        Addiw | Slliw | Srliw | Sraiw => 0b0011011,
        Addw | Subw | Sllw | Srlw | Sraw | Mulw | Divw | Divuw | Remw | Remuw => 0b0111011,
        Fence => 0b0001111,
        Ecall | Ebreak => 0b1110011,
        _ => 0b0110011,
    }
}

/// `(funct3, funct7)` for the operation; `funct7` doubles as funct6<<1 for shifts.
fn functs(op: Opcode) -> (u32, u32) {
    use Opcode::*;
    match op {
        Jalr | Beq | Lb | Sb | Addi | Add | Addiw | Addw | Fence | Ecall | Ebreak => (0, 0),
        Sub | Subw => (0, 0b0100000),
        Mul | Mulw => (0, 1),
        Bne | Lh | Sh | Slli | Sll | Slliw | Sllw => (1, 0),
        Mulh => (1, 1),
        Lw | Sw | Slti | Slt => (2, 0),
        Mulhsu => (2, 1),
        Ld | Sd | Sltiu | Sltu => (3, 0),
        Mulhu => (3, 1),
        Blt | Lbu | Xori | Xor => (4, 0),
        Div | Divw => (4, 1),
        Bge | Lhu | Srli | Srl | Srliw | Srlw => (5, 0),
        Srai | Sra | Sraiw | Sraw => (5, 0b0100000),
        Divu | Divuw => (5, 1),
        Bltu | Lwu | Ori | Or => (6, 0),
        Rem | Remw => (6, 1),
        Bgeu | Andi | And => (7, 0),
        Remu | Remuw => (7, 1),
        Lui | Auipc | Jal => (0, 0),
    }
}

fn reg(r: Option<Reg>, op: Opcode, operand: &'static str) -> Result<u32, EncodeError> {
    r.map(|r| r.index() as u32)
        .ok_or(EncodeError::MissingOperand { op, operand })
}

/// Encodes an instruction back into its 32-bit word. `raw` and `address` are ignored.
pub fn encode(i: &Instruction) -> Result<u32, EncodeError> {
    let op = i.op;
    let opcode = major_opcode(op);
    let (f3, f7) = functs(op);
    let imm = || -> Result<i64, EncodeError> {
        let v = i.imm.ok_or(EncodeError::MissingOperand { op, operand: "imm" })?;
        if !op.imm_kind().contains(v) {
            return Err(EncodeError::ImmediateOutOfRange { op, value: v });
        }
        Ok(v)
    };
    let even = |v: i64| -> Result<i64, EncodeError> {
        if v & 1 != 0 {
            Err(EncodeError::ImmediateOutOfRange { op, value: v })
        } else {
            Ok(v)
        }
    };

    let word = match op.format() {
        Format::R => {
            let rd = reg(i.rd, op, "rd")?;
            let rs1 = reg(i.rs1, op, "rs1")?;
            let rs2 = reg(i.rs2, op, "rs2")?;
            (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
        }
        Format::I => {
            let rd = reg(i.rd, op, "rd")?;
            let rs1 = reg(i.rs1, op, "rs1")?;
            let imm = (imm()? as u32) & 0xfff;
            (imm << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
        }
        Format::Shift6 | Format::Shift5 => {
            let rd = reg(i.rd, op, "rd")?;
            let rs1 = reg(i.rs1, op, "rs1")?;
            let shamt = imm()? as u32;
            (f7 << 25) | (shamt << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opcode
        }
        Format::S => {
            let rs1 = reg(i.rs1, op, "rs1")?;
            let rs2 = reg(i.rs2, op, "rs2")?;
            let imm = imm()? as u32;
            ((imm >> 5 & 0x7f) << 25)
                | (rs2 << 20)
                | (rs1 << 15)
                | (f3 << 12)
                | ((imm & 0x1f) << 7)
                | opcode
        }
        Format::B => {
            let rs1 = reg(i.rs1, op, "rs1")?;
            let rs2 = reg(i.rs2, op, "rs2")?;
            let imm = even(imm()?)? as u32;
            ((imm >> 12 & 1) << 31)
                | ((imm >> 5 & 0x3f) << 25)
                | (rs2 << 20)
                | (rs1 << 15)
                | (f3 << 12)
                | ((imm >> 1 & 0xf) << 8)
                | ((imm >> 11 & 1) << 7)
                | opcode
        }
        Format::U => {
            let rd = reg(i.rd, op, "rd")?;
            let imm = imm()? as u32 & 0xfffff;
            (imm << 12) | (rd << 7) | opcode
        }
        Format::J => {
            let rd = reg(i.rd, op, "rd")?;
            let imm = even(imm()?)? as u32;
            ((imm >> 20 & 1) << 31)
                | ((imm >> 1 & 0x3ff) << 21)
                | ((imm >> 11 & 1) << 20)
                | ((imm >> 12 & 0xff) << 12)
                | (rd << 7)
                | opcode
        }
        Format::Fence => ((imm()? as u32) << 20) | opcode,
        Format::System => match op {
            Opcode::Ebreak => 0x0010_0073,
            _ => 0x0000_0073,
        },
    };
    Ok(word)
}
