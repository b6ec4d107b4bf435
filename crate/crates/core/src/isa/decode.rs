use thiserror::Error;

use super::{Instruction, Opcode, Reg};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("compressed encoding {word:#06x} at {address:#x} is not supported")]
    Compressed { word: u32, address: u64 },
    #[error("{what} encoding {word:#010x} at {address:#x} is not supported")]
    Unsupported {
        word: u32,
        address: u64,
        what: &'static str,
    },
    #[error("unknown instruction {word:#010x} at {address:#x}")]
    Unknown { word: u32, address: u64 },
}

#[inline]
fn bits(word: u32, hi: u32, lo: u32) -> u32 {
    (word >> lo) & ((1u32 << (hi - lo + 1)) - 1)
}

#[inline]
fn sext(value: u32, width: u32) -> i64 {
    let shift = 64 - width;
    ((value as i64) << shift) >> shift
}

fn imm_i(w: u32) -> i64 {
    sext(bits(w, 31, 20), 12)
}

fn imm_s(w: u32) -> i64 {
    sext((bits(w, 31, 25) << 5) | bits(w, 11, 7), 12)
}

fn imm_b(w: u32) -> i64 {
    let v = (bits(w, 31, 31) << 12)
        | (bits(w, 7, 7) << 11)
        | (bits(w, 30, 25) << 5)
        | (bits(w, 11, 8) << 1);
    sext(v, 13)
}

fn imm_u(w: u32) -> i64 {
    sext(bits(w, 31, 12), 20)
}

fn imm_j(w: u32) -> i64 {
    let v = (bits(w, 31, 31) << 20)
        | (bits(w, 19, 12) << 12)
        | (bits(w, 20, 20) << 11)
        | (bits(w, 30, 21) << 1);
    sext(v, 21)
}

/// Decodes one 32-bit RV64IM word located at `address`.
pub fn decode(word: u32, address: u64) -> Result<Instruction, DecodeError> {
    use Opcode::*;

    if word & 0b11 != 0b11 {
        return Err(DecodeError::Compressed { word, address });
    }
    let unknown = || DecodeError::Unknown { word, address };
    let unsupported = |what| DecodeError::Unsupported {
        word,
        address,
        what,
    };

    let opcode = bits(word, 6, 0);
    let funct3 = bits(word, 14, 12);
    let funct7 = bits(word, 31, 25);
    let rd = Reg::from_field(bits(word, 11, 7));
    let rs1 = Reg::from_field(bits(word, 19, 15));
    let rs2 = Reg::from_field(bits(word, 24, 20));

    let ins = |op: Opcode| {
        let mut i = Instruction::new(address, op);
        i.raw = word;
        i
    };

    let i = match opcode {
        0b0110111 | 0b0010111 => {
            let mut i = ins(if opcode == 0b0110111 { Lui } else { Auipc });
            i.rd = Some(rd);
            i.imm = Some(imm_u(word));
            i
        }
        0b1101111 => {
            let mut i = ins(Jal);
            i.rd = Some(rd);
            i.imm = Some(imm_j(word));
            i
        }
        0b1100111 => {
            if funct3 != 0 {
                return Err(unknown());
            }
            let mut i = ins(Jalr);
            i.rd = Some(rd);
            i.rs1 = Some(rs1);
            i.imm = Some(imm_i(word));
            i
        }
        0b1100011 => {
            let op = match funct3 {
                0 => Beq,
                1 => Bne,
                4 => Blt,
                5 => Bge,
                6 => Bltu,
                7 => Bgeu,
                _ => return Err(unknown()),
            };
            let mut i = ins(op);
            i.rs1 = Some(rs1);
            i.rs2 = Some(rs2);
            i.imm = Some(imm_b(word));
            i
        }
        0b0000011 => {
            let op = match funct3 {
                0 => Lb,
                1 => Lh,
                2 => Lw,
                3 => Ld,
                4 => Lbu,
                5 => Lhu,
                6 => Lwu,
                _ => return Err(unknown()),
            };
            let mut i = ins(op);
            i.rd = Some(rd);
            i.rs1 = Some(rs1);
            i.imm = Some(imm_i(word));
            i
        }
        0b0100011 => {
            let op = match funct3 {
                0 => Sb,
                1 => Sh,
                2 => Sw,
                3 => Sd,
                _ => return Err(unknown()),
            };
            let mut i = ins(op);
            i.rs1 = Some(rs1);
            i.rs2 = Some(rs2);
            i.imm = Some(imm_s(word));
            i
        }
        0b0010011 => {
            let funct6 = bits(word, 31, 26);
            let (op, imm) = match funct3 {
                0 => (Addi, imm_i(word)),
                2 => (Slti, imm_i(word)),
                3 => (Sltiu, imm_i(word)),
                4 => (Xori, imm_i(word)),
                6 => (Ori, imm_i(word)),
                7 => (Andi, imm_i(word)),
                1 if funct6 == 0 => (Slli, bits(word, 25, 20) as i64),
                5 if funct6 == 0 => (Srli, bits(word, 25, 20) as i64),
                5 if funct6 == 0b010000 => (Srai, bits(word, 25, 20) as i64),
                _ => return Err(unknown()),
            };
            let mut i = ins(op);
            i.rd = Some(rd);
            i.rs1 = Some(rs1);
            i.imm = Some(imm);
            i
        }
        0b0011011 => {
            let (op, imm) = match (funct3, funct7) {
                (0, _) => (Addiw, imm_i(word)),
                (1, 0) => (Slliw, bits(word, 24, 20) as i64),
                (5, 0) => (Srliw, bits(word, 24, 20) as i64),
                (5, 0b0100000) => (Sraiw, bits(word, 24, 20) as i64),
                _ => return Err(unknown()),
            };
            let mut i = ins(op);
            i.rd = Some(rd);
            i.rs1 = Some(rs1);
            i.imm = Some(imm);
            i
        }
        0b0110011 => {
            let op = match (funct7, funct3) {
                (0, 0) => Add,
                (0, 1) => Sll,
                (0, 2) => Slt,
                (0, 3) => Sltu,
                (0, 4) => Xor,
                (0, 5) => Srl,
                (0, 6) => Or,
                (0, 7) => And,
                (0b0100000, 0) => Sub,
                (0b0100000, 5) => Sra,
                (1, 0) => Mul,
                (1, 1) => Mulh,
                (1, 2) => Mulhsu,
                (1, 3) => Mulhu,
                (1, 4) => Div,
                (1, 5) => Divu,
                (1, 6) => Rem,
                (1, 7) => Remu,
                _ => return Err(unknown()),
            };
            let mut i = ins(op);
            i.rd = Some(rd);
            i.rs1 = Some(rs1);
            i.rs2 = Some(rs2);
            i
        }
        0b0111011 => {
            let op = match (funct7, funct3) {
                (0, 0) => Addw,
                (0, 1) => Sllw,
                (0, 5) => Srlw,
                (0b0100000, 0) => Subw,
                (0b0100000, 5) => Sraw,
                (1, 0) => Mulw,
                (1, 4) => Divw,
                (1, 5) => Divuw,
                (1, 6) => Remw,
                (1, 7) => Remuw,
                _ => return Err(unknown()),
            };
            let mut i = ins(op);
            i.rd = Some(rd);
            i.rs1 = Some(rs1);
            i.rs2 = Some(rs2);
            i
        }
        0b0001111 => match funct3 {
            0 if rd.is_zero() && rs1.is_zero() => {
                let mut i = ins(Fence);
                i.imm = Some(bits(word, 31, 20) as i64);
                i
            }
            0 => return Err(unknown()),
            1 => return Err(unsupported("zifencei")),
            _ => return Err(unknown()),
        },
        0b1110011 => match word {
            0x0000_0073 => ins(Ecall),
            0x0010_0073 => ins(Ebreak),
            _ if funct3 != 0 && funct3 != 4 => return Err(unsupported("csr")),
            _ if funct3 == 0 => return Err(unsupported("privileged")),
            _ => return Err(unknown()),
        },
        0b0000111 | 0b0100111 | 0b1000011 | 0b1000111 | 0b1001011 | 0b1001111 | 0b1010011 => {
            return Err(unsupported("floating-point"))
        }
        0b0101111 => return Err(unsupported("atomic")),
        _ => return Err(unknown()),
    };
    Ok(i)
}
