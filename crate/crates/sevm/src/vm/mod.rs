//! Deterministic register-machine sandbox: ISA, assembler, paged memory, and
//! interpreter with fault reporting, instruction tracing, coverage recording,
//! and syscall-set capture.

pub mod asm;
pub mod interp;
pub mod isa;
pub mod mem;

pub use asm::{assemble, assemble_file, disassemble, AsmError};
pub use interp::{
    execute, Fault, FaultKind, MachineState, RunEnd, RunResult, TraceEntry, DEFAULT_BUDGET,
};
pub use isa::{
    translate_arg_slot, AluOp, Cond, Dialect, FunctionImage, Instruction, Reg, Width, ARG_SLOTS,
    REGISTER_COUNT,
};
pub use mem::{PageMemory, PAGE_SIZE};
