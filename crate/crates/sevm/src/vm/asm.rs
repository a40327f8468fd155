//! Assembler and disassembler for `.sevm` sources.
//!
//! Source grammar, which is also the corpus interchange format:
//!
//! ```text
//! .func <name> <xa|ab>
//!     [label:] [instruction]   ; comment
//!     ...
//! .end
//! ```
//!
//! One instruction per line. Labels are `name:` on their own line or before
//! an instruction. Immediates are decimal (optionally negative) or `0x` hex.
//! Register names must belong to the declared dialect (`r0`..`r15` for `xa`,
//! `a0`..`a15` for `ab`). Memory operands are `[reg]`, `[reg+disp]`, or
//! `[reg-disp]` with a 16-bit signed displacement.
//!
//! Notes for authors: `div` is unsigned, `blt`/`bge` compare two's-complement
//! signed values, and `shl`/`shr` use the low 6 bits of the source register.

use std::collections::BTreeMap;

use thiserror::Error;

use super::isa::{AluOp, Cond, Dialect, FunctionImage, Instruction, Reg, Width};

/// Parse failure, naming the offending 1-based source line.
#[derive(Clone, PartialEq, Eq, Debug, Error)]
#[error("{message} line {line}")]
pub struct AsmError {
    pub line: usize,
    pub message: String,
}

impl AsmError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        AsmError {
            line,
            message: message.into(),
        }
    }
}

/// Assembles a source containing exactly one `.func` block.
pub fn assemble(source: &str) -> Result<FunctionImage, AsmError> {
    let mut images = assemble_file(source)?;
    match images.len() {
        1 => Ok(images.pop().unwrap()),
        n => Err(AsmError::new(1, format!("expected one .func block, found {n}"))),
    }
}

/// Assembles a source containing any number of `.func` blocks.
pub fn assemble_file(source: &str) -> Result<Vec<FunctionImage>, AsmError> {
    let mut images = Vec::new();
    let mut block: Option<BlockParser> = None;

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }

        if let Some(rest) = line.strip_prefix(".func") {
            if block.is_some() {
                return Err(AsmError::new(line_no, ".func inside another .func block"));
            }
            block = Some(BlockParser::open(rest.trim(), line_no)?);
            continue;
        }
        if line == ".end" {
            match block.take() {
                Some(b) => images.push(b.finish()?),
                None => return Err(AsmError::new(line_no, ".end without .func")),
            }
            continue;
        }

        match block.as_mut() {
            Some(b) => b.line(line, line_no)?,
            None => {
                return Err(AsmError::new(
                    line_no,
                    format!("statement outside .func block: '{line}'"),
                ))
            }
        }
    }

    if block.is_some() {
        return Err(AsmError::new(
            source.lines().count(),
            "missing .end before end of input",
        ));
    }
    Ok(images)
}

/// Canonical text form of an image; reassembling it reproduces the image.
pub fn disassemble(image: &FunctionImage) -> String {
    let d = image.dialect;
    let mut label_of: BTreeMap<usize, String> = BTreeMap::new();
    for instr in &image.instructions {
        if let Some(t) = instr.control_target() {
            let next = label_of.len();
            label_of.entry(t).or_insert_with(|| format!("L{next}"));
        }
    }

    let mut out = format!(".func {} {}\n", image.name, d.name());
    for (i, instr) in image.instructions.iter().enumerate() {
        if let Some(label) = label_of.get(&i) {
            out.push_str(label);
            out.push_str(":\n");
        }
        let r = |reg: Reg| d.register_name(reg);
        let mem = |base: Reg, disp: i16| {
            if disp < 0 {
                format!("[{}{}]", d.register_name(base), disp)
            } else {
                format!("[{}+{}]", d.register_name(base), disp)
            }
        };
        let text = match instr {
            Instruction::Li { dest, imm } => format!("li {}, {}", r(*dest), imm),
            Instruction::Mov { dest, src } => format!("mov {}, {}", r(*dest), r(*src)),
            Instruction::Alu { op, dest, src } => {
                format!("{} {}, {}", op.mnemonic(), r(*dest), r(*src))
            }
            Instruction::AddI { dest, imm } => format!("addi {}, {}", r(*dest), imm),
            Instruction::Load {
                width,
                dest,
                base,
                disp,
            } => {
                let m = if *width == Width::Byte { "ldb" } else { "ld" };
                format!("{m} {}, {}", r(*dest), mem(*base, *disp))
            }
            Instruction::Store {
                width,
                src,
                base,
                disp,
            } => {
                let m = if *width == Width::Byte { "stb" } else { "st" };
                format!("{m} {}, {}", mem(*base, *disp), r(*src))
            }
            Instruction::Branch {
                cond,
                lhs,
                rhs,
                target,
            } => format!(
                "{} {}, {}, {}",
                cond.mnemonic(),
                r(*lhs),
                r(*rhs),
                label_of[target]
            ),
            Instruction::Jmp { target } => format!("jmp {}", label_of[target]),
            Instruction::Sys { id } => format!("sys {id}"),
            Instruction::Ret => "ret".to_string(),
        };
        out.push_str("    ");
        out.push_str(&text);
        out.push('\n');
    }
    // Labels pointing one past the last instruction would be unencodable; the
    // parser never produces them, so none are expected here.
    out.push_str(".end\n");
    out
}

fn strip_comment(line: &str) -> &str {
    match line.find(';') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_u64(s: &str) -> Option<u64> {
    if let Some(rest) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(rest, 16).ok()
    } else if let Some(rest) = s.strip_prefix('-') {
        let magnitude: u128 = if let Some(hex) = rest.strip_prefix("0x") {
            u128::from_str_radix(hex, 16).ok()?
        } else {
            rest.parse().ok()?
        };
        if magnitude > (i64::MAX as u128) + 1 {
            return None;
        }
        Some((magnitude as u64).wrapping_neg())
    } else {
        s.parse().ok()
    }
}

/// A not-yet-resolved branch target.
struct ProtoTarget {
    name: String,
    line: usize,
}

enum ProtoInstr {
    Done(Instruction),
    Branch {
        cond: Cond,
        lhs: Reg,
        rhs: Reg,
        target: ProtoTarget,
    },
    Jmp {
        target: ProtoTarget,
    },
}

struct BlockParser {
    name: String,
    dialect: Dialect,
    instructions: Vec<ProtoInstr>,
    labels: BTreeMap<String, usize>,
}

impl BlockParser {
    fn open(header: &str, line: usize) -> Result<Self, AsmError> {
        let mut parts = header.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| AsmError::new(line, ".func needs a name and a dialect"))?;
        let dialect = parts
            .next()
            .ok_or_else(|| AsmError::new(line, ".func needs a dialect (xa or ab)"))?;
        if parts.next().is_some() {
            return Err(AsmError::new(line, "trailing tokens after .func header"));
        }
        if !is_ident(name) {
            return Err(AsmError::new(line, format!("invalid function name '{name}'")));
        }
        let dialect = Dialect::from_name(dialect)
            .ok_or_else(|| AsmError::new(line, format!("unknown dialect '{dialect}'")))?;
        Ok(BlockParser {
            name: name.to_string(),
            dialect,
            instructions: Vec::new(),
            labels: BTreeMap::new(),
        })
    }

    fn line(&mut self, line: &str, line_no: usize) -> Result<(), AsmError> {
        let mut rest = line;
        if let Some(colon) = rest.find(':') {
            let (label, tail) = rest.split_at(colon);
            let label = label.trim();
            if !is_ident(label) {
                return Err(AsmError::new(line_no, format!("invalid label '{label}'")));
            }
            if self
                .labels
                .insert(label.to_string(), self.instructions.len())
                .is_some()
            {
                return Err(AsmError::new(line_no, format!("duplicate label '{label}'")));
            }
            rest = tail[1..].trim();
            if rest.is_empty() {
                return Ok(());
            }
        }
        let instr = self.parse_instruction(rest, line_no)?;
        self.instructions.push(instr);
        Ok(())
    }

    fn reg(&self, token: &str, line: usize) -> Result<Reg, AsmError> {
        self.dialect.parse_register(token).ok_or_else(|| {
            AsmError::new(
                line,
                format!(
                    "register name '{token}' not in declared dialect {}",
                    self.dialect
                ),
            )
        })
    }

    fn parse_mem(&self, token: &str, line: usize) -> Result<(Reg, i16), AsmError> {
        let inner = token
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| {
                AsmError::new(line, format!("expected memory operand [reg+disp], got '{token}'"))
            })?;
        let (reg_part, disp_part) = match inner.find(['+', '-']) {
            Some(pos) => {
                let sign = &inner[pos..pos + 1];
                let disp = &inner[pos + 1..];
                (
                    &inner[..pos],
                    Some((sign == "-", disp.trim().to_string())),
                )
            }
            None => (inner, None),
        };
        let base = self.reg(reg_part.trim(), line)?;
        let disp = match disp_part {
            None => 0i16,
            Some((neg, text)) => {
                let value: i32 = text
                    .parse::<u16>()
                    .map(i32::from)
                    .map_err(|_| AsmError::new(line, format!("invalid displacement '{text}'")))?;
                let signed = if neg { -value } else { value };
                i16::try_from(signed).map_err(|_| {
                    AsmError::new(line, format!("displacement {signed} out of 16-bit range"))
                })?
            }
        };
        Ok((base, disp))
    }

    fn parse_instruction(&self, text: &str, line: usize) -> Result<ProtoInstr, AsmError> {
        let (mnemonic, operand_text) = match text.find(char::is_whitespace) {
            Some(pos) => (&text[..pos], text[pos..].trim()),
            None => (text, ""),
        };
        let mnemonic = mnemonic.to_ascii_lowercase();
        let ops: Vec<&str> = if operand_text.is_empty() {
            Vec::new()
        } else {
            operand_text.split(',').map(str::trim).collect()
        };
        let arity = |n: usize| -> Result<(), AsmError> {
            if ops.len() == n {
                Ok(())
            } else {
                Err(AsmError::new(
                    line,
                    format!("'{mnemonic}' expects {n} operand(s), got {}", ops.len()),
                ))
            }
        };
        let imm = |s: &str| -> Result<u64, AsmError> {
            parse_u64(s).ok_or_else(|| AsmError::new(line, format!("invalid immediate '{s}'")))
        };

        let alu = |op: AluOp| -> Result<ProtoInstr, AsmError> {
            arity(2)?;
            Ok(ProtoInstr::Done(Instruction::Alu {
                op,
                dest: self.reg(ops[0], line)?,
                src: self.reg(ops[1], line)?,
            }))
        };
        let branch = |cond: Cond| -> Result<ProtoInstr, AsmError> {
            arity(3)?;
            if !is_ident(ops[2]) {
                return Err(AsmError::new(line, format!("invalid label '{}'", ops[2])));
            }
            Ok(ProtoInstr::Branch {
                cond,
                lhs: self.reg(ops[0], line)?,
                rhs: self.reg(ops[1], line)?,
                target: ProtoTarget {
                    name: ops[2].to_string(),
                    line,
                },
            })
        };
        let load = |width: Width| -> Result<ProtoInstr, AsmError> {
            arity(2)?;
            let (base, disp) = self.parse_mem(ops[1], line)?;
            Ok(ProtoInstr::Done(Instruction::Load {
                width,
                dest: self.reg(ops[0], line)?,
                base,
                disp,
            }))
        };
        let store = |width: Width| -> Result<ProtoInstr, AsmError> {
            arity(2)?;
            let (base, disp) = self.parse_mem(ops[0], line)?;
            Ok(ProtoInstr::Done(Instruction::Store {
                width,
                src: self.reg(ops[1], line)?,
                base,
                disp,
            }))
        };

        match mnemonic.as_str() {
            "li" => {
                arity(2)?;
                Ok(ProtoInstr::Done(Instruction::Li {
                    dest: self.reg(ops[0], line)?,
                    imm: imm(ops[1])?,
                }))
            }
            "mov" => {
                arity(2)?;
                Ok(ProtoInstr::Done(Instruction::Mov {
                    dest: self.reg(ops[0], line)?,
                    src: self.reg(ops[1], line)?,
                }))
            }
            "add" => alu(AluOp::Add),
            "sub" => alu(AluOp::Sub),
            "mul" => alu(AluOp::Mul),
            "div" => alu(AluOp::Div),
            "and" => alu(AluOp::And),
            "or" => alu(AluOp::Or),
            "xor" => alu(AluOp::Xor),
            "shl" => alu(AluOp::Shl),
            "shr" => alu(AluOp::Shr),
            "addi" => {
                arity(2)?;
                Ok(ProtoInstr::Done(Instruction::AddI {
                    dest: self.reg(ops[0], line)?,
                    imm: imm(ops[1])? as i64,
                }))
            }
            "ld" => load(Width::Word),
            "ldb" => load(Width::Byte),
            "st" => store(Width::Word),
            "stb" => store(Width::Byte),
            "beq" => branch(Cond::Eq),
            "bne" => branch(Cond::Ne),
            "blt" => branch(Cond::Lt),
            "bge" => branch(Cond::Ge),
            "jmp" => {
                arity(1)?;
                if !is_ident(ops[0]) {
                    return Err(AsmError::new(line, format!("invalid label '{}'", ops[0])));
                }
                Ok(ProtoInstr::Jmp {
                    target: ProtoTarget {
                        name: ops[0].to_string(),
                        line,
                    },
                })
            }
            "sys" => {
                arity(1)?;
                Ok(ProtoInstr::Done(Instruction::Sys { id: imm(ops[0])? }))
            }
            "ret" => {
                arity(0)?;
                Ok(ProtoInstr::Done(Instruction::Ret))
            }
            other => Err(AsmError::new(line, format!("unknown mnemonic '{other}'"))),
        }
    }

    fn finish(self) -> Result<FunctionImage, AsmError> {
        let BlockParser {
            name,
            dialect,
            instructions: proto,
            labels,
        } = self;
        let count = proto.len();
        let resolve = |target: ProtoTarget| -> Result<usize, AsmError> {
            let ProtoTarget { name, line } = target;
            match labels.get(&name).copied() {
                Some(i) if i < count => Ok(i),
                Some(_) => Err(AsmError::new(
                    line,
                    format!("label '{name}' points past the last instruction"),
                )),
                None => Err(AsmError::new(line, format!("unresolved label '{name}'"))),
            }
        };
        let mut instructions = Vec::with_capacity(count);
        for p in proto {
            instructions.push(match p {
                ProtoInstr::Done(i) => i,
                ProtoInstr::Branch {
                    cond,
                    lhs,
                    rhs,
                    target,
                } => Instruction::Branch {
                    cond,
                    lhs,
                    rhs,
                    target: resolve(target)?,
                },
                ProtoInstr::Jmp { target } => Instruction::Jmp {
                    target: resolve(target)?,
                },
            });
        }
        Ok(FunctionImage {
            name,
            dialect,
            instructions,
        })
    }
}
