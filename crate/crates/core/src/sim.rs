//! Instruction-accurate RV64IM interpreter.
//!
//! Memory is one zero-initialized little-endian region starting at the
//! lowest segment address. `sp` starts at the top of the region. `ecall`
//! with `a7 = 93` exits with `a0`, `a7 = 64` writes `a2` bytes from `a1`;
//! `ebreak` stops with exit code 0.

use thiserror::Error;

use crate::image::ProgramImage;
use crate::isa::{Instruction, OpClass, Opcode, Reg};

pub const DEFAULT_MEMORY: u64 = 16 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("step limit of {0} instructions exceeded")]
    StepLimit(u64),
    #[error("no instruction at {0:#x}")]
    NoInstruction(u64),
    #[error("control transfer into the middle of a block at {0:#x}")]
    MidBlockEntry(u64),
    #[error("{kind} access of {size} bytes at {address:#x} is out of bounds")]
    OutOfBounds { kind: &'static str, address: u64, size: u64 },
    #[error("misaligned {kind} of {size} bytes at {address:#x}")]
    Misaligned { kind: &'static str, address: u64, size: u64 },
    #[error("unsupported environment call {0}")]
    UnsupportedEcall(u64),
    #[error("instruction at {0:#x} cannot be executed: {1}")]
    Unsupported(u64, &'static str),
    #[error("program image needs {needed} bytes but memory is {size} bytes")]
    ImageTooLarge { needed: u64, size: u64 },
}

/// Result of an ALU operation on operand values. `b` is the second register
/// operand or the immediate. Returns `None` for non-ALU operations and for
/// `auipc`, which needs the program counter.
pub fn alu(op: Opcode, a: u64, b: u64) -> Option<u64> {
    use Opcode::*;
    let sext32 = |x: u64| x as u32 as i32 as i64 as u64;
    let (sa, sb) = (a as i64, b as i64);
    let (wa, wb) = (a as u32 as i32, b as u32 as i32);
    Some(match op {
        Lui => b << 12,
        Add | Addi => a.wrapping_add(b),
        Sub => a.wrapping_sub(b),
        Sll | Slli => a << (b & 63),
        Srl | Srli => a >> (b & 63),
        Sra | Srai => (sa >> (b & 63)) as u64,
        Slt | Slti => u64::from(sa < sb),
        Sltu | Sltiu => u64::from(a < b),
        Xor | Xori => a ^ b,
        Or | Ori => a | b,
        And | Andi => a & b,
        Addw | Addiw => sext32(a.wrapping_add(b)),
        Subw => sext32(a.wrapping_sub(b)),
        Sllw | Slliw => sext32(((a as u32) << (b & 31)) as u64),
        Srlw | Srliw => sext32(((a as u32) >> (b & 31)) as u64),
        Sraw | Sraiw => (wa >> (b & 31)) as i64 as u64,
        Mul => a.wrapping_mul(b),
        Mulh => ((i128::from(sa) * i128::from(sb)) >> 64) as u64,
        Mulhsu => ((i128::from(sa) * i128::from(b)) >> 64) as u64,
        Mulhu => ((u128::from(a) * u128::from(b)) >> 64) as u64,
        Div => match (sa, sb) {
            (_, 0) => u64::MAX,
            (i64::MIN, -1) => i64::MIN as u64,
            _ => (sa / sb) as u64,
        },
        Divu => a.checked_div(b).unwrap_or(u64::MAX),
        Rem => match (sa, sb) {
            (_, 0) => a,
            (i64::MIN, -1) => 0,
            _ => (sa % sb) as u64,
        },
        Remu => a.checked_rem(b).unwrap_or(a),
        Mulw => sext32(a.wrapping_mul(b)),
        Divw => match (wa, wb) {
            (_, 0) => u64::MAX,
            (i32::MIN, -1) => i32::MIN as i64 as u64,
            _ => (wa / wb) as i64 as u64,
        },
        Divuw => match b as u32 {
            0 => u64::MAX,
            d => sext32(u64::from(a as u32 / d)),
        },
        Remw => match (wa, wb) {
            (_, 0) => wa as i64 as u64,
            (i32::MIN, -1) => 0,
            _ => (wa % wb) as i64 as u64,
        },
        Remuw => match b as u32 {
            0 => sext32(a),
            d => sext32(u64::from(a as u32 % d)),
        },
        _ => return None,
    })
}

/// Value of an ALU instruction given its source register values.
pub fn eval_instruction(ins: &Instruction, rs1: u64, rs2: u64) -> Option<u64> {
    let b = match ins.imm {
        Some(imm) if ins.op.format() != crate::isa::Format::R => imm as u64,
        _ => rs2,
    };
    alu(ins.op, rs1, b)
}

/// What happens after an instruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Next(u64),
    Exit(u64),
}

#[derive(Clone, Debug)]
pub struct Machine {
    pub regs: [u64; 32],
    pub pc: u64,
    mem_base: u64,
    mem: Vec<u8>,
    pub stdout: Vec<u8>,
}

impl Machine {
    /// Loads every segment of the image into a fresh machine.
    pub fn new(image: &ProgramImage, mem_size: u64) -> Result<Machine, SimError> {
        let base = image.base_address();
        let needed = image
            .segments
            .iter()
            .map(|s| s.end() - base)
            .max()
            .unwrap_or(0);
        if needed > mem_size {
            return Err(SimError::ImageTooLarge {
                needed,
                size: mem_size,
            });
        }
        let mut mem = vec![0u8; mem_size as usize];
        for s in &image.segments {
            let off = (s.vaddr - base) as usize;
            mem[off..off + s.bytes.len()].copy_from_slice(&s.bytes);
        }
        let mut regs = [0u64; 32];
        regs[2] = (base + mem_size) & !15;
        Ok(Machine {
            regs,
            pc: image.entry,
            mem_base: base,
            mem,
            stdout: Vec::new(),
        })
    }

    pub fn reg(&self, r: Option<Reg>) -> u64 {
        r.map_or(0, |r| self.regs[r.index()])
    }

    pub fn set_reg(&mut self, r: Option<Reg>, value: u64) {
        if let Some(r) = r.filter(|r| !r.is_zero()) {
            self.regs[r.index()] = value;
        }
    }

    fn range(&self, kind: &'static str, address: u64, size: u64) -> Result<usize, SimError> {
        if !address.is_multiple_of(size) {
            return Err(SimError::Misaligned { kind, address, size });
        }
        let off = address.wrapping_sub(self.mem_base);
        if off >= self.mem.len() as u64 || off + size > self.mem.len() as u64 {
            return Err(SimError::OutOfBounds { kind, address, size });
        }
        Ok(off as usize)
    }

    pub fn load(&self, address: u64, size: u64) -> Result<u64, SimError> {
        let off = self.range("load", address, size)?;
        let mut buf = [0u8; 8];
        buf[..size as usize].copy_from_slice(&self.mem[off..off + size as usize]);
        Ok(u64::from_le_bytes(buf))
    }

    pub fn store(&mut self, address: u64, size: u64, value: u64) -> Result<(), SimError> {
        let off = self.range("store", address, size)?;
        self.mem[off..off + size as usize].copy_from_slice(&value.to_le_bytes()[..size as usize]);
        Ok(())
    }

    fn syscall(&mut self) -> Result<Flow, SimError> {
        match self.regs[17] {
            93 => Ok(Flow::Exit(self.regs[10])),
            64 => {
                let (buf, len) = (self.regs[11], self.regs[12]);
                for k in 0..len {
                    let b = self.load(buf.wrapping_add(k), 1)? as u8;
                    self.stdout.push(b);
                }
                self.regs[10] = len;
                Ok(Flow::Next(self.pc + 4))
            }
            n => Err(SimError::UnsupportedEcall(n)),
        }
    }

    /// Executes one instruction located at `self.pc`.
    pub fn execute(&mut self, ins: &Instruction) -> Result<Flow, SimError> {
        let (a, b) = (self.reg(ins.rs1), self.reg(ins.rs2));
        let (flow, value) = self.execute_with(ins, a, b)?;
        if let Some(v) = value {
            self.set_reg(ins.rd, v);
        }
        Ok(flow)
    }

    /// Executes `ins` at `self.pc` with the given source operand values.
    /// Registers are not read or written (except by `ecall`); the value for
    /// `rd`, if any, is returned instead.
    pub fn execute_with(
        &mut self,
        ins: &Instruction,
        a: u64,
        b: u64,
    ) -> Result<(Flow, Option<u64>), SimError> {
        let pc = self.pc;
        let next = pc.wrapping_add(4);
        let imm = ins.imm.unwrap_or(0);
        let ea = a.wrapping_add(imm as u64);
        let (flow, value) = match ins.op.class() {
            OpClass::Alu => {
                let v = match ins.op {
                    Opcode::Auipc => pc.wrapping_add((imm << 12) as u64),
                    _ => eval_instruction(ins, a, b).expect("ALU class has ALU semantics"),
                };
                (Flow::Next(next), Some(v))
            }
            OpClass::Load => {
                let v = match ins.op {
                    Opcode::Lb => self.load(ea, 1)? as u8 as i8 as i64 as u64,
                    Opcode::Lh => self.load(ea, 2)? as u16 as i16 as i64 as u64,
                    Opcode::Lw => self.load(ea, 4)? as u32 as i32 as i64 as u64,
                    Opcode::Ld => self.load(ea, 8)?,
                    Opcode::Lbu => self.load(ea, 1)?,
                    Opcode::Lhu => self.load(ea, 2)?,
                    _ => self.load(ea, 4)?,
                };
                (Flow::Next(next), Some(v))
            }
            OpClass::Store => {
                let size = match ins.op {
                    Opcode::Sb => 1,
                    Opcode::Sh => 2,
                    Opcode::Sw => 4,
                    _ => 8,
                };
                self.store(ea, size, b)?;
                (Flow::Next(next), None)
            }
            OpClass::Branch => {
                let taken = match ins.op {
                    Opcode::Beq => a == b,
                    Opcode::Bne => a != b,
                    Opcode::Blt => (a as i64) < (b as i64),
                    Opcode::Bge => (a as i64) >= (b as i64),
                    Opcode::Bltu => a < b,
                    _ => a >= b,
                };
                (Flow::Next(if taken { pc.wrapping_add(imm as u64) } else { next }), None)
            }
            OpClass::Jump => {
                let target = match ins.op {
                    Opcode::Jal => pc.wrapping_add(imm as u64),
                    _ => ea & !1,
                };
                (Flow::Next(target), Some(next))
            }
            OpClass::System => match ins.op {
                Opcode::Fence => (Flow::Next(next), None),
                Opcode::Ecall => (self.syscall()?, None),
                _ => (Flow::Exit(0), None),
            },
        };
        if let Flow::Next(t) = flow {
            self.pc = t;
        }
        Ok((flow, value))
    }
}
