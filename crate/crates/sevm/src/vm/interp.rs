//! The sandbox interpreter.
//!
//! `execute` is a pure function of `(function, initial state, budget)`: two
//! invocations yield identical results, including the trace and coverage.
//! Timeouts are an instruction budget rather than wall time so that every
//! outcome is reproducible.

use std::collections::BTreeSet;

use super::isa::{FunctionImage, Instruction, Reg, Width, REGISTER_COUNT};
use super::mem::PageMemory;

/// Default instruction budget per execution.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Machine state confined to one execution. Coverage, the syscall set, and
/// the instruction count accumulate as the run proceeds and are meaningful
/// whether the run returns, faults, or times out.
#[derive(Clone, Debug, Default)]
pub struct MachineState {
    pub registers: [u64; REGISTER_COUNT],
    pub memory: PageMemory,
    pub syscalls_seen: BTreeSet<u64>,
    pub instructions_executed: u64,
    pub coverage: BTreeSet<usize>,
}

impl MachineState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reg(&self, r: Reg) -> u64 {
        self.registers[r.index()]
    }

    pub fn set_reg(&mut self, r: Reg, value: u64) {
        self.registers[r.index()] = value;
    }
}

/// Why an execution stopped short of `RET`.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum FaultKind {
    UnmappedRead,
    UnmappedWrite,
    DivideByZero,
    IllegalInstruction,
}

impl FaultKind {
    pub fn is_memory(self) -> bool {
        matches!(self, FaultKind::UnmappedRead | FaultKind::UnmappedWrite)
    }
}

/// A fatal fault. For memory faults, `base_register` is the register used as
/// the address base of the faulting load or store and `faulting_address` is
/// the computed effective address.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct Fault {
    pub kind: FaultKind,
    pub faulting_address: Option<u64>,
    pub base_register: Option<Reg>,
    /// Index into the execution trace at which the fault occurred.
    pub trace_position: usize,
}

/// Register snapshot taken before each executed instruction.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TraceEntry {
    /// Position of the instruction within the function body.
    pub instruction_index: usize,
    pub pre_registers: [u64; REGISTER_COUNT],
    /// Computed address for loads and stores, absent otherwise.
    pub effective_address: Option<u64>,
}

/// Terminal condition of a run.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum RunEnd {
    Returned,
    Faulted(Fault),
    TimedOut,
}

/// Everything observable about one execution. `state` carries coverage and
/// the syscall set regardless of how the run ended.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub end: RunEnd,
    pub state: MachineState,
    pub trace: Option<Vec<TraceEntry>>,
}

impl RunResult {
    pub fn returned(&self) -> bool {
        matches!(self.end, RunEnd::Returned)
    }
}

fn effective_address(state: &MachineState, base: Reg, disp: i16) -> u64 {
    state.reg(base).wrapping_add(disp as i64 as u64)
}

/// Runs `function` on `initial` until it returns, faults, or exhausts
/// `budget` instructions. When `tracing` is set the full per-instruction
/// trace is returned; tracing has no effect on any other output.
pub fn execute(
    function: &FunctionImage,
    initial: MachineState,
    budget: u64,
    tracing: bool,
) -> RunResult {
    let mut state = initial;
    let mut trace = tracing.then(Vec::new);
    let mut pc = 0usize;

    let ret_reg = function.dialect.return_register();
    let body = &function.instructions;

    loop {
        if pc >= body.len() {
            // Fell off the end of the image (or a malformed target).
            let fault = Fault {
                kind: FaultKind::IllegalInstruction,
                faulting_address: None,
                base_register: None,
                trace_position: state.instructions_executed as usize,
            };
            return RunResult {
                end: RunEnd::Faulted(fault),
                state,
                trace,
            };
        }
        if state.instructions_executed == budget {
            return RunResult {
                end: RunEnd::TimedOut,
                state,
                trace,
            };
        }

        let instr = &body[pc];
        let ea = match instr {
            Instruction::Load { base, disp, .. } | Instruction::Store { base, disp, .. } => {
                Some(effective_address(&state, *base, *disp))
            }
            _ => None,
        };
        if let Some(trace) = trace.as_mut() {
            trace.push(TraceEntry {
                instruction_index: pc,
                pre_registers: state.registers,
                effective_address: ea,
            });
        }
        state.coverage.insert(pc);
        state.instructions_executed += 1;
        let trace_position = (state.instructions_executed - 1) as usize;

        let fault_here = |kind: FaultKind, addr: Option<u64>, base: Option<Reg>| Fault {
            kind,
            faulting_address: addr,
            base_register: base,
            trace_position,
        };

        let mut next_pc = pc + 1;
        match instr {
            Instruction::Li { dest, imm } => state.set_reg(*dest, *imm),
            Instruction::Mov { dest, src } => state.set_reg(*dest, state.reg(*src)),
            Instruction::Alu { op, dest, src } => {
                use super::isa::AluOp::*;
                let a = state.reg(*dest);
                let b = state.reg(*src);
                let value = match op {
                    Add => a.wrapping_add(b),
                    Sub => a.wrapping_sub(b),
                    Mul => a.wrapping_mul(b),
                    Div => {
                        if b == 0 {
                            return RunResult {
                                end: RunEnd::Faulted(fault_here(
                                    FaultKind::DivideByZero,
                                    None,
                                    None,
                                )),
                                state,
                                trace,
                            };
                        }
                        a / b
                    }
                    And => a & b,
                    Or => a | b,
                    Xor => a ^ b,
                    Shl => a << (b & 63),
                    Shr => a >> (b & 63),
                };
                state.set_reg(*dest, value);
            }
            Instruction::AddI { dest, imm } => {
                state.set_reg(*dest, state.reg(*dest).wrapping_add(*imm as u64));
            }
            Instruction::Load {
                width, dest, base, ..
            } => {
                let addr = ea.unwrap();
                let read = match width {
                    Width::Byte => state.memory.read_u8(addr).map(u64::from),
                    Width::Word => state.memory.read_u64(addr),
                };
                match read {
                    Ok(value) => state.set_reg(*dest, value),
                    Err(_) => {
                        return RunResult {
                            end: RunEnd::Faulted(fault_here(
                                FaultKind::UnmappedRead,
                                Some(addr),
                                Some(*base),
                            )),
                            state,
                            trace,
                        }
                    }
                }
            }
            Instruction::Store {
                width, src, base, ..
            } => {
                let addr = ea.unwrap();
                let value = state.reg(*src);
                let wrote = match width {
                    Width::Byte => state.memory.write_u8(addr, value as u8),
                    Width::Word => state.memory.write_u64(addr, value),
                };
                if wrote.is_err() {
                    return RunResult {
                        end: RunEnd::Faulted(fault_here(
                            FaultKind::UnmappedWrite,
                            Some(addr),
                            Some(*base),
                        )),
                        state,
                        trace,
                    };
                }
            }
            Instruction::Branch {
                cond,
                lhs,
                rhs,
                target,
            } => {
                if cond.holds(state.reg(*lhs), state.reg(*rhs)) {
                    next_pc = *target;
                }
            }
            Instruction::Jmp { target } => next_pc = *target,
            Instruction::Sys { id } => {
                state.syscalls_seen.insert(*id);
                state.set_reg(ret_reg, 0);
            }
            Instruction::Ret => {
                return RunResult {
                    end: RunEnd::Returned,
                    state,
                    trace,
                };
            }
        }
        pc = next_pc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::isa::{AluOp, Cond, Dialect};

    fn img(dialect: Dialect, instructions: Vec<Instruction>) -> FunctionImage {
        FunctionImage {
            name: "t".into(),
            dialect,
            instructions,
        }
    }

    #[test]
    fn div_by_zero_faults() {
        // r1 = r1 / r2 with r2 = 0.
        let f = img(
            Dialect::Xa,
            vec![
                Instruction::Alu {
                    op: AluOp::Div,
                    dest: Reg(1),
                    src: Reg(2),
                },
                Instruction::Ret,
            ],
        );
        let mut init = MachineState::new();
        init.set_reg(Reg(1), 1);
        let r = execute(&f, init, DEFAULT_BUDGET, false);
        match r.end {
            RunEnd::Faulted(fault) => {
                assert_eq!(fault.kind, FaultKind::DivideByZero);
                assert_eq!(fault.trace_position, 0);
            }
            other => panic!("expected fault, got {other:?}"),
        }
    }

    #[test]
    fn unmapped_read_reports_address_and_base_register() {
        // ld r0, [r1+0] with r1 = 0xDEAD and nothing mapped.
        let f = img(
            Dialect::Xa,
            vec![
                Instruction::Load {
                    width: Width::Word,
                    dest: Reg(0),
                    base: Reg(1),
                    disp: 0,
                },
                Instruction::Ret,
            ],
        );
        let mut init = MachineState::new();
        init.set_reg(Reg(1), 0xDEAD);
        let r = execute(&f, init, DEFAULT_BUDGET, true);
        match r.end {
            RunEnd::Faulted(fault) => {
                assert_eq!(fault.kind, FaultKind::UnmappedRead);
                assert_eq!(fault.faulting_address, Some(0xDEAD));
                assert_eq!(fault.base_register, Some(Reg(1)));
                assert_eq!(fault.trace_position, 0);
            }
            other => panic!("expected fault, got {other:?}"),
        }
        // Fault fidelity: the trace reproduces the faulting address.
        let trace = r.trace.unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].pre_registers[1], 0xDEAD);
        assert_eq!(trace[0].effective_address, Some(0xDEAD));
    }

    #[test]
    fn budget_exhaustion_times_out() {
        let f = img(
            Dialect::Xa,
            vec![
                Instruction::Li {
                    dest: Reg(2),
                    imm: 1,
                },
                Instruction::Ret,
            ],
        );
        let r = execute(&f, MachineState::new(), 1, false);
        assert_eq!(r.end, RunEnd::TimedOut);
        assert_eq!(r.state.instructions_executed, 1);
        // A one-instruction body fits in the same budget.
        let f1 = img(Dialect::Xa, vec![Instruction::Ret]);
        assert!(execute(&f1, MachineState::new(), 1, false).returned());
    }

    #[test]
    fn running_off_the_end_is_an_illegal_instruction() {
        let f = img(
            Dialect::Xa,
            vec![Instruction::Li {
                dest: Reg(0),
                imm: 3,
            }],
        );
        let r = execute(&f, MachineState::new(), DEFAULT_BUDGET, false);
        match r.end {
            RunEnd::Faulted(fault) => assert_eq!(fault.kind, FaultKind::IllegalInstruction),
            other => panic!("expected fault, got {other:?}"),
        }
    }

    #[test]
    fn sys_records_id_and_zeroes_return_register() {
        for dialect in [Dialect::Xa, Dialect::Ab] {
            let ret = dialect.return_register();
            let f = img(
                dialect,
                vec![
                    Instruction::Li { dest: ret, imm: 99 },
                    Instruction::Sys { id: 7 },
                    Instruction::Ret,
                ],
            );
            let r = execute(&f, MachineState::new(), DEFAULT_BUDGET, false);
            assert!(r.returned());
            assert_eq!(r.state.reg(ret), 0);
            assert_eq!(r.state.syscalls_seen.iter().copied().collect::<Vec<_>>(), [7]);
        }
    }

    #[test]
    fn coverage_equals_distinct_trace_indices() {
        // Loop three times: li r1,3 ; loop: addi r1,-1 ; bne r1,r0,loop ; ret
        let f = img(
            Dialect::Xa,
            vec![
                Instruction::Li {
                    dest: Reg(1),
                    imm: 3,
                },
                Instruction::AddI {
                    dest: Reg(1),
                    imm: -1,
                },
                Instruction::Branch {
                    cond: Cond::Ne,
                    lhs: Reg(1),
                    rhs: Reg(7),
                    target: 1,
                },
                Instruction::Ret,
            ],
        );
        let r = execute(&f, MachineState::new(), DEFAULT_BUDGET, true);
        assert!(r.returned());
        let trace = r.trace.unwrap();
        assert_eq!(trace.len() as u64, r.state.instructions_executed);
        let from_trace: std::collections::BTreeSet<usize> =
            trace.iter().map(|t| t.instruction_index).collect();
        assert_eq!(from_trace, r.state.coverage);
        assert!(r.state.instructions_executed >= r.state.coverage.len() as u64);
    }

    #[test]
    fn execution_is_deterministic() {
        let f = img(
            Dialect::Xa,
            vec![
                Instruction::Li {
                    dest: Reg(1),
                    imm: 41,
                },
                Instruction::AddI {
                    dest: Reg(1),
                    imm: 1,
                },
                Instruction::Mov {
                    dest: Reg(0),
                    src: Reg(1),
                },
                Instruction::Ret,
            ],
        );
        let init = MachineState::new();
        let a = execute(&f, init.clone(), DEFAULT_BUDGET, true);
        let b = execute(&f, init, DEFAULT_BUDGET, true);
        assert_eq!(a.end, b.end);
        assert_eq!(a.state.registers, b.state.registers);
        assert_eq!(a.state.coverage, b.state.coverage);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.state.reg(Reg(0)), 42);
    }
}
