//! Instruction set and calling-convention dialects of the sandbox machine.
//!
//! The machine has sixteen 64-bit registers and little-endian, page-granular
//! memory. Two dialects (`xa` and `ab`) name the same registers differently
//! and disagree on which registers carry arguments, the return value, and the
//! stack pointer, standing in for two CPU architectures with distinct ABIs.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Number of general-purpose registers.
pub const REGISTER_COUNT: usize = 16;

/// Number of register-passed argument slots per dialect.
pub const ARG_SLOTS: usize = 6;

/// A register index in `0..16`.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Reg(pub u8);

impl Reg {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Calling-convention dialect of a function image.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    /// Registers named `r0`..`r15`; arguments `r1`..`r6`, return `r0`, stack `r15`.
    Xa,
    /// Registers named `a0`..`a15`; arguments `a2`..`a7`, return `a1`, stack `a0`.
    Ab,
}

impl Dialect {
    pub fn name(self) -> &'static str {
        match self {
            Dialect::Xa => "xa",
            Dialect::Ab => "ab",
        }
    }

    pub fn from_name(s: &str) -> Option<Dialect> {
        match s {
            "xa" => Some(Dialect::Xa),
            "ab" => Some(Dialect::Ab),
            _ => None,
        }
    }

    pub fn other(self) -> Dialect {
        match self {
            Dialect::Xa => Dialect::Ab,
            Dialect::Ab => Dialect::Xa,
        }
    }

    /// Registers carrying the six argument slots, in slot order.
    pub fn arg_registers(self) -> [Reg; ARG_SLOTS] {
        match self {
            Dialect::Xa => [Reg(1), Reg(2), Reg(3), Reg(4), Reg(5), Reg(6)],
            Dialect::Ab => [Reg(2), Reg(3), Reg(4), Reg(5), Reg(6), Reg(7)],
        }
    }

    pub fn return_register(self) -> Reg {
        match self {
            Dialect::Xa => Reg(0),
            Dialect::Ab => Reg(1),
        }
    }

    pub fn stack_register(self) -> Reg {
        match self {
            Dialect::Xa => Reg(15),
            Dialect::Ab => Reg(0),
        }
    }

    /// Argument slot carried by `reg`, if any.
    pub fn arg_slot_of(self, reg: Reg) -> Option<usize> {
        self.arg_registers().iter().position(|&r| r == reg)
    }

    /// Register prefix of the dialect's naming convention.
    fn prefix(self) -> char {
        match self {
            Dialect::Xa => 'r',
            Dialect::Ab => 'a',
        }
    }

    /// Dialect-local register name, e.g. `r3` or `a3`.
    pub fn register_name(self, reg: Reg) -> String {
        format!("{}{}", self.prefix(), reg.0)
    }

    /// Parses a register name of this dialect. Names of the other dialect are
    /// rejected so that sources declare exactly one convention.
    pub fn parse_register(self, s: &str) -> Option<Reg> {
        let rest = s.strip_prefix(self.prefix())?;
        let n: u8 = rest.parse().ok()?;
        // "r07" is not a register name.
        if rest.len() > 1 && rest.starts_with('0') {
            return None;
        }
        (n < REGISTER_COUNT as u8).then_some(Reg(n))
    }
}

/// Maps an argument slot between dialects. Both dialects order their six
/// argument registers, so a slot keeps its ordinal and only the carrying
/// register changes.
pub fn translate_arg_slot(_from: Dialect, _to: Dialect, slot: usize) -> usize {
    debug_assert!(slot < ARG_SLOTS);
    slot
}

/// Two-operand ALU operation, always `dest = dest op src`.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum AluOp {
    Add,
    Sub,
    Mul,
    /// Unsigned division; divisor zero faults.
    Div,
    And,
    Or,
    Xor,
    /// Shift left by the low 6 bits of `src`.
    Shl,
    /// Logical shift right by the low 6 bits of `src`.
    Shr,
}

impl AluOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "add",
            AluOp::Sub => "sub",
            AluOp::Mul => "mul",
            AluOp::Div => "div",
            AluOp::And => "and",
            AluOp::Or => "or",
            AluOp::Xor => "xor",
            AluOp::Shl => "shl",
            AluOp::Shr => "shr",
        }
    }
}

/// Branch condition. `Lt`/`Ge` compare two's-complement signed values.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Cond {
    Eq,
    Ne,
    Lt,
    Ge,
}

impl Cond {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Cond::Eq => "beq",
            Cond::Ne => "bne",
            Cond::Lt => "blt",
            Cond::Ge => "bge",
        }
    }

    pub fn holds(self, lhs: u64, rhs: u64) -> bool {
        match self {
            Cond::Eq => lhs == rhs,
            Cond::Ne => lhs != rhs,
            Cond::Lt => (lhs as i64) < (rhs as i64),
            Cond::Ge => (lhs as i64) >= (rhs as i64),
        }
    }
}

/// Memory access width.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Width {
    /// One byte; loads zero-extend.
    Byte,
    /// Eight bytes, little-endian.
    Word,
}

impl Width {
    pub fn bytes(self) -> u64 {
        match self {
            Width::Byte => 1,
            Width::Word => 8,
        }
    }
}

/// One decoded instruction. Branch and jump targets are absolute instruction
/// indices within the function body, so images are position independent.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Instruction {
    /// `dest = imm`
    Li { dest: Reg, imm: u64 },
    /// `dest = src`
    Mov { dest: Reg, src: Reg },
    /// `dest = dest op src`
    Alu { op: AluOp, dest: Reg, src: Reg },
    /// `dest = dest + imm`
    AddI { dest: Reg, imm: i64 },
    /// `dest = mem[base + disp]`
    Load {
        width: Width,
        dest: Reg,
        base: Reg,
        disp: i16,
    },
    /// `mem[base + disp] = src`
    Store {
        width: Width,
        src: Reg,
        base: Reg,
        disp: i16,
    },
    /// Conditional branch to `target`.
    Branch {
        cond: Cond,
        lhs: Reg,
        rhs: Reg,
        target: usize,
    },
    /// Unconditional jump to `target`.
    Jmp { target: usize },
    /// Records syscall `id` and sets the dialect's return register to 0.
    Sys { id: u64 },
    Ret,
}

impl Instruction {
    /// Branch or jump target, if the instruction transfers control.
    pub fn control_target(&self) -> Option<usize> {
        match self {
            Instruction::Branch { target, .. } | Instruction::Jmp { target } => Some(*target),
            _ => None,
        }
    }
}

/// An assembled function: a dialect tag plus a position-independent
/// instruction list. Immutable after assembly and safe to share.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FunctionImage {
    pub name: String,
    pub dialect: Dialect,
    pub instructions: Vec<Instruction>,
}

impl FunctionImage {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
