//! Backwards taint analysis over execution traces.
//!
//! When a run faults on an unmapped access, the register holding the faulty
//! address seeds a backwards sweep over the recorded trace. Each `t = u`
//! move (register copies, loads, stores) with `t` tainted and `u` untainted
//! taints `u` and clears `t`; every other shape, including `t = t op u`
//! arithmetic, changes nothing. The location still tainted after the sweep
//! is the root sink: the place that was supposed to hold a valid pointer.
//! The sink is then wired to a new or extended memory object and execution
//! restarts from scratch on the adjusted input state, never by editing the
//! faulted state in place.

use thiserror::Error;

use crate::iovec::{
    capture_output, instantiate_input, InputSpec, IoVec, IovecError, MemoryObject, OBJECT_STRIDE,
};
use crate::vm::{execute, Fault, FaultKind, FunctionImage, Instruction, Reg, RunEnd, TraceEntry};

/// Size of a freshly inferred memory object.
pub const DEFAULT_OBJECT_SIZE: u64 = 64;

/// How far past an object's end a faulting address may lie and still be
/// treated as that object needing bigger bounds.
pub const NEAR_RADIUS: u64 = 4096;

/// Fault-fix restarts allowed per generation attempt.
pub const MAX_FIX_ITERATIONS: usize = 16;

/// Cap on inferred objects per input state.
pub const MAX_OBJECTS: usize = 32;

/// A tainted location during the backward sweep: a register or a concrete
/// memory cell.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum TaintLoc {
    Reg(Reg),
    Cell(u64),
}

/// Where the faulty address originally came from.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum RootSink {
    /// Argument slot of the function's dialect.
    ArgRegister(usize),
    /// A cell inside an already-known object.
    ObjectCell { object: usize, offset: u64 },
    /// Taint died (e.g. at an immediate) or ended somewhere unusable.
    Unrecoverable,
}

/// Sink plus the trace position where the sweep terminated.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SinkSearch {
    pub sink: RootSink,
    pub evidence: usize,
}

/// The `t = u` data move of one instruction, if it has that shape.
enum Move {
    /// `t` receives a constant; taint reaching it dies.
    FromConst { t: TaintLoc },
    /// `t = u`.
    Copy { t: TaintLoc, u: TaintLoc },
}

fn data_move(instr: &Instruction, entry: &TraceEntry) -> Option<Move> {
    match instr {
        Instruction::Li { dest, .. } => Some(Move::FromConst {
            t: TaintLoc::Reg(*dest),
        }),
        Instruction::Mov { dest, src } => Some(Move::Copy {
            t: TaintLoc::Reg(*dest),
            u: TaintLoc::Reg(*src),
        }),
        Instruction::Load { dest, .. } => Some(Move::Copy {
            t: TaintLoc::Reg(*dest),
            u: TaintLoc::Cell(entry.effective_address.expect("loads record an address")),
        }),
        Instruction::Store { src, .. } => Some(Move::Copy {
            t: TaintLoc::Cell(entry.effective_address.expect("stores record an address")),
            u: TaintLoc::Reg(*src),
        }),
        // ALU and ADDI are t = t op u; branches, jumps, SYS, and RET move no
        // data. None of them change taint.
        _ => None,
    }
}

/// Walks the trace backwards from the faulting instruction and names the
/// root sink. Memory faults only; `fault.base_register` seeds the taint.
pub fn backtrace_sink(
    function: &FunctionImage,
    trace: &[TraceEntry],
    fault: &Fault,
    objects: &[MemoryObject],
) -> SinkSearch {
    let seed = match fault.base_register {
        Some(reg) if fault.kind.is_memory() && !trace.is_empty() => TaintLoc::Reg(reg),
        _ => {
            return SinkSearch {
                sink: RootSink::Unrecoverable,
                evidence: 0,
            }
        }
    };

    let mut tainted = Some(seed);
    let mut evidence = fault.trace_position;
    // The faulting instruction's own move never completed; start behind it.
    for idx in (0..fault.trace_position.min(trace.len())).rev() {
        let entry = &trace[idx];
        let instr = &function.instructions[entry.instruction_index];
        let Some(mv) = data_move(instr, entry) else {
            continue;
        };
        match mv {
            Move::FromConst { t } => {
                if tainted == Some(t) {
                    tainted = None;
                    evidence = idx;
                    break;
                }
            }
            Move::Copy { t, u } => {
                // Taint moves from t to u only when t is tainted and u is
                // not; with a single tainted location, t == u means both are
                // tainted and nothing changes.
                if tainted == Some(t) && t != u {
                    tainted = Some(u);
                    evidence = idx;
                }
            }
        }
    }

    let sink = match tainted {
        None => RootSink::Unrecoverable,
        Some(TaintLoc::Reg(reg)) => match function.dialect.arg_slot_of(reg) {
            Some(slot) => RootSink::ArgRegister(slot),
            None => RootSink::Unrecoverable,
        },
        Some(TaintLoc::Cell(addr)) => match objects.iter().find(|o| o.contains(addr)) {
            Some(obj) => RootSink::ObjectCell {
                object: obj.object_id,
                offset: addr - obj.base_address,
            },
            None => RootSink::Unrecoverable,
        },
    };
    SinkSearch { sink, evidence }
}

/// Why a generation attempt was abandoned.
#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum GiveUpReason {
    #[error("execution exceeded the instruction budget")]
    Timeout,
    #[error("unfixable fault: {0:?}")]
    UnfixableFault(FaultKind),
    #[error("taint sweep found no usable root sink")]
    UnrecoverableSink,
    #[error("object table full ({MAX_OBJECTS} objects)")]
    TooManyObjects,
    #[error("object would exceed its arena slot")]
    ObjectTooLarge,
    #[error("pointer cell at unaligned offset {offset}")]
    UnalignedPointerCell { offset: u64 },
    #[error("still faulting after {MAX_FIX_ITERATIONS} fix iterations")]
    IterationCap,
    #[error("malformed input spec: {0}")]
    Malformed(#[from] IovecError),
}

/// Abandoned generation attempt.
#[derive(Clone, PartialEq, Eq, Debug, Error)]
#[error("gave up after {iterations} run(s): {reason}")]
pub struct GiveUp {
    pub reason: GiveUpReason,
    pub iterations: usize,
}

/// What a patch did, mostly for diagnostics and tests.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum PatchAction {
    Created { object: usize },
    Extended { object: usize, new_size: u64 },
}

fn round_up_8(v: u64) -> u64 {
    v.div_ceil(8) * 8
}

fn grow(objects: &mut [MemoryObject], object: usize, new_size: u64) -> Result<(), GiveUpReason> {
    if new_size > OBJECT_STRIDE {
        return Err(GiveUpReason::ObjectTooLarge);
    }
    if new_size > objects[object].size {
        objects[object].size = new_size;
    }
    Ok(())
}

/// Routes the faulting address to the root sink: extends the object the
/// address lies near, or allocates a fresh fixed-size object at the next
/// arena slot, then records the object's base at the sink (a pointer
/// argument slot, or a pointer sub-member of an existing object). The caller
/// restarts execution from the beginning on the adjusted spec.
pub fn apply_patch(
    spec: &mut InputSpec,
    sink: &RootSink,
    fault_addr: u64,
) -> Result<PatchAction, GiveUpReason> {
    // An address below every object base cannot be covered by extension
    // (bases are fixed by the placement rule), so only addresses at or past
    // a base count as near.
    let near = spec
        .objects
        .iter()
        .find(|o| {
            fault_addr >= o.base_address && fault_addr < o.base_address + o.size + NEAR_RADIUS
        })
        .map(|o| o.object_id);

    let (target, action) = match near {
        Some(object) => {
            let new_size = round_up_8(fault_addr - spec.objects[object].base_address + 1);
            grow(&mut spec.objects, object, new_size)?;
            (
                object,
                PatchAction::Extended {
                    object,
                    new_size: spec.objects[object].size,
                },
            )
        }
        None => {
            let object = spec.objects.len();
            if object >= MAX_OBJECTS {
                return Err(GiveUpReason::TooManyObjects);
            }
            spec.objects
                .push(MemoryObject::new(object, DEFAULT_OBJECT_SIZE));
            (object, PatchAction::Created { object })
        }
    };

    match *sink {
        RootSink::ArgRegister(slot) => {
            spec.pointer_args.insert(slot as u8, target);
            spec.overrides.args.remove(&(slot as u8));
        }
        RootSink::ObjectCell { object, offset } => {
            if offset % 8 != 0 {
                return Err(GiveUpReason::UnalignedPointerCell { offset });
            }
            grow(&mut spec.objects, object, offset + 8)?;
            spec.objects[object].pointer_offsets.insert(offset, target);
            if let Some(bytes) = spec.overrides.object_bytes.get_mut(&object) {
                bytes.retain(|&o, _| !(offset..offset + 8).contains(&o));
            }
        }
        RootSink::Unrecoverable => unreachable!("callers never patch an unrecoverable sink"),
    }
    Ok(action)
}

/// Runs `function` on `spec`, fixing pointer faults by backwards taint and
/// restarting, until the function returns (yielding a complete IOVec) or the
/// attempt is abandoned.
pub fn generate_accepting_run_from(
    function: &FunctionImage,
    mut spec: InputSpec,
    budget: u64,
) -> Result<IoVec, GiveUp> {
    debug_assert_eq!(function.dialect, spec.dialect);
    let give_up = |reason: GiveUpReason, iterations: usize| GiveUp { reason, iterations };

    for iteration in 1..=MAX_FIX_ITERATIONS {
        let machine = match instantiate_input(&spec) {
            Ok(m) => m,
            Err(e) => return Err(give_up(e.into(), iteration)),
        };
        let run = execute(function, machine, budget, true);
        match run.end {
            RunEnd::Returned => {
                let observed = capture_output(&run.state, &spec);
                return Ok(IoVec {
                    seed: spec.seed,
                    dialect: spec.dialect,
                    pointer_args: spec.pointer_args,
                    objects: spec.objects,
                    overrides: spec.overrides,
                    expected_return: observed.ret,
                    expected_objects: observed.objects,
                    expected_syscalls: observed.syscalls,
                    coverage: run.state.coverage,
                });
            }
            RunEnd::TimedOut => return Err(give_up(GiveUpReason::Timeout, iteration)),
            RunEnd::Faulted(fault) => {
                if !fault.kind.is_memory() {
                    return Err(give_up(GiveUpReason::UnfixableFault(fault.kind), iteration));
                }
                let trace = run.trace.as_deref().unwrap_or(&[]);
                let found = backtrace_sink(function, trace, &fault, &spec.objects);
                if found.sink == RootSink::Unrecoverable {
                    return Err(give_up(GiveUpReason::UnrecoverableSink, iteration));
                }
                let addr = fault
                    .faulting_address
                    .expect("memory faults carry an address");
                if let Err(reason) = apply_patch(&mut spec, &found.sink, addr) {
                    return Err(give_up(reason, iteration));
                }
            }
        }
    }
    Err(GiveUp {
        reason: GiveUpReason::IterationCap,
        iterations: MAX_FIX_ITERATIONS,
    })
}

/// Fresh-seed entry point: randomized arguments, no objects yet.
pub fn generate_accepting_run(
    function: &FunctionImage,
    seed: u64,
    budget: u64,
) -> Result<IoVec, GiveUp> {
    generate_accepting_run_from(function, InputSpec::fresh(seed, function.dialect), budget)
}
