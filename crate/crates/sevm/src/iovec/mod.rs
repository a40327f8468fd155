//! The IOVec data model: reproducible input program states paired with the
//! expected output state, coverage, and syscall set of one execution.
//!
//! Input state is rebuilt from the stored fields alone. Memory objects are
//! placed deterministically (`OBJECT_ARENA_BASE + id * OBJECT_STRIDE`), so
//! every pointer value is identical across executions and across machines.
//! Non-pointer argument registers and object bytes come from a fixed
//! splitmix-style mixer keyed by the stored seed, optionally overlaid with
//! explicit per-slot and per-byte values written by the fuzzer's mutators.

pub mod store;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::FunctionRecord;
use crate::vm::{
    execute, translate_arg_slot, Dialect, FunctionImage, MachineState, RunEnd, ARG_SLOTS,
};
use store::{hex_bytes, u64_as_str, u64_set_as_str};

/// Base of the deterministic object arena.
pub const OBJECT_ARENA_BASE: u64 = 0x0010_0000;

/// Distance between consecutive object slots; also the size cap of a single
/// object, which keeps objects from ever overlapping.
pub const OBJECT_STRIDE: u64 = 0x0001_0000;

/// Base of the mapped stack page.
pub const STACK_BASE: u64 = 0x7FFF_F000;

/// Stack region size in bytes.
pub const STACK_SIZE: u64 = 4096;

/// Initial stack-register value.
pub const STACK_TOP: u64 = STACK_BASE + STACK_SIZE - 8;

const ARG_DOMAIN: u64 = 0x41b7_1c3a_9d04_86e1;
const OBJ_DOMAIN: u64 = 0x9b60_33f5_2e8d_4a17;

/// The 64-bit finalizer used for all input-state randomness.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed-derived value of a non-pointer argument slot.
pub fn seeded_arg_value(seed: u64, slot: usize) -> u64 {
    mix64(seed ^ ARG_DOMAIN ^ slot as u64)
}

/// Seed-derived 8-byte group of an object, written little-endian at byte
/// offset `word * 8`.
pub fn seeded_object_word(seed: u64, object_id: usize, word: u64) -> u64 {
    mix64(mix64(seed ^ OBJ_DOMAIN ^ object_id as u64).wrapping_add(word))
}

/// A coarse-grained inferred input or global structure: where it lives, how
/// big it is, and which of its 8-byte cells hold pointers to other objects.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct MemoryObject {
    pub object_id: usize,
    #[serde(with = "u64_as_str")]
    pub base_address: u64,
    #[serde(with = "u64_as_str")]
    pub size: u64,
    /// Byte offset of each pointer sub-member and the object it points to.
    pub pointer_offsets: BTreeMap<u64, usize>,
}

impl MemoryObject {
    /// Deterministic arena address of object `object_id`.
    pub fn placement(object_id: usize) -> u64 {
        OBJECT_ARENA_BASE + object_id as u64 * OBJECT_STRIDE
    }

    pub fn new(object_id: usize, size: u64) -> Self {
        MemoryObject {
            object_id,
            base_address: Self::placement(object_id),
            size,
            pointer_offsets: BTreeMap::new(),
        }
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base_address && addr < self.base_address + self.size
    }
}

/// Expected (or observed) shape of a return value. Pointer returns carry no
/// concrete value: returned pointers are matched by kind only.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReturnExpectation {
    Pointer,
    NonPointer {
        #[serde(with = "u64_as_str")]
        value: u64,
    },
}

/// Post-execution state of one memory object: its bytes with pointer cells
/// zeroed out, plus the surviving pointer sub-members.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ObjectState {
    #[serde(with = "hex_bytes")]
    pub bytes: Vec<u8>,
    pub pointer_offsets: BTreeMap<u64, usize>,
}

/// Explicit input values layered over the seed-derived ones. Fresh IOVecs
/// carry none; the fuzzer's mutators write entries here so that mutated
/// inputs stay reproducible from the stored IOVec alone.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct InputOverrides {
    /// Argument-slot value overrides for non-pointer slots.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub args: BTreeMap<u8, store::U64Str>,
    /// Per-object byte overrides: object id -> byte offset -> value.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub object_bytes: BTreeMap<usize, BTreeMap<u64, u8>>,
}

impl InputOverrides {
    pub fn is_empty(&self) -> bool {
        self.args.is_empty() && self.object_bytes.is_empty()
    }
}

/// Everything needed to rebuild an input program state.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct InputSpec {
    pub seed: u64,
    pub dialect: Dialect,
    /// Argument slot -> object id for pointer-valued arguments.
    pub pointer_args: BTreeMap<u8, usize>,
    pub objects: Vec<MemoryObject>,
    pub overrides: InputOverrides,
}

impl InputSpec {
    pub fn fresh(seed: u64, dialect: Dialect) -> Self {
        InputSpec {
            seed,
            dialect,
            pointer_args: BTreeMap::new(),
            objects: Vec::new(),
            overrides: InputOverrides::default(),
        }
    }

    /// Effective value of each argument register slot after instantiation.
    pub fn arg_values(&self) -> [u64; ARG_SLOTS] {
        let mut values = [0u64; ARG_SLOTS];
        for (slot, value) in values.iter_mut().enumerate() {
            *value = if let Some(&obj) = self.pointer_args.get(&(slot as u8)) {
                self.objects[obj].base_address
            } else if let Some(v) = self.overrides.args.get(&(slot as u8)) {
                v.0
            } else {
                seeded_arg_value(self.seed, slot)
            };
        }
        values
    }
}

/// One fingerprint: an input program state plus the program-state changes a
/// function is expected to make when run on it.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct IoVec {
    #[serde(with = "u64_as_str")]
    pub seed: u64,
    /// Originating dialect; used when carrying the IOVec to the other one.
    pub dialect: Dialect,
    pub pointer_args: BTreeMap<u8, usize>,
    pub objects: Vec<MemoryObject>,
    #[serde(default, skip_serializing_if = "InputOverrides::is_empty")]
    pub overrides: InputOverrides,
    pub expected_return: ReturnExpectation,
    pub expected_objects: Vec<ObjectState>,
    #[serde(with = "u64_set_as_str")]
    pub expected_syscalls: BTreeSet<u64>,
    /// Instruction indices executed by the originating run; drives fuzzer
    /// seed selection.
    pub coverage: BTreeSet<usize>,
}

impl IoVec {
    pub fn input_spec(&self) -> InputSpec {
        InputSpec {
            seed: self.seed,
            dialect: self.dialect,
            pointer_args: self.pointer_args.clone(),
            objects: self.objects.clone(),
            overrides: self.overrides.clone(),
        }
    }
}

/// Output state captured from a completed run, in the same shape as the
/// stored expectations.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ObservedState {
    pub ret: ReturnExpectation,
    pub objects: Vec<ObjectState>,
    pub syscalls: BTreeSet<u64>,
}

/// The four results of providing an IOVec to a function.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionOutcome {
    /// The function received a fatal fault.
    Fault,
    /// The instruction budget ran out first.
    Timeout,
    /// The function returned but the final state differs from the expected one.
    StateMismatch,
    /// The function returned and the final state matches.
    Accept,
}

impl ExecutionOutcome {
    pub fn is_accept(self) -> bool {
        matches!(self, ExecutionOutcome::Accept)
    }
}

/// A function together with its stored distinguishing IOVec set.
#[derive(Clone, Debug)]
pub struct FunctionProfile {
    pub record: FunctionRecord,
    pub dcis: Vec<IoVec>,
}

/// A structurally invalid IOVec (broken cross-references or placement).
#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum IovecError {
    #[error("object {object_id} out of order or missing (found id {found})")]
    ObjectOrder { object_id: usize, found: usize },
    #[error("object {object_id} not placed at its arena slot")]
    Placement { object_id: usize },
    #[error("object {object_id} has invalid size {size}")]
    Size { object_id: usize, size: u64 },
    #[error("pointer offset {offset} out of range for object {object_id}")]
    OffsetRange { object_id: usize, offset: u64 },
    #[error("pointer at object {object_id} offset {offset} references missing object {target}")]
    MissingTarget {
        object_id: usize,
        offset: u64,
        target: usize,
    },
    #[error("pointer argument slot {slot} references missing object {target}")]
    MissingArgTarget { slot: u8, target: usize },
    #[error("pointer argument slot {slot} out of range")]
    SlotRange { slot: u8 },
}

fn validate(spec: &InputSpec) -> Result<(), IovecError> {
    for (index, obj) in spec.objects.iter().enumerate() {
        if obj.object_id != index {
            return Err(IovecError::ObjectOrder {
                object_id: index,
                found: obj.object_id,
            });
        }
        if obj.base_address != MemoryObject::placement(index) {
            return Err(IovecError::Placement { object_id: index });
        }
        if obj.size < 8 || obj.size > OBJECT_STRIDE || obj.size % 8 != 0 {
            return Err(IovecError::Size {
                object_id: index,
                size: obj.size,
            });
        }
        for (&offset, &target) in &obj.pointer_offsets {
            if offset % 8 != 0 || offset + 8 > obj.size {
                return Err(IovecError::OffsetRange {
                    object_id: index,
                    offset,
                });
            }
            if target >= spec.objects.len() {
                return Err(IovecError::MissingTarget {
                    object_id: index,
                    offset,
                    target,
                });
            }
        }
    }
    for (&slot, &target) in &spec.pointer_args {
        if slot as usize >= ARG_SLOTS {
            return Err(IovecError::SlotRange { slot });
        }
        if target >= spec.objects.len() {
            return Err(IovecError::MissingArgTarget { slot, target });
        }
    }
    Ok(())
}

/// Builds the input program state described by `spec` on a fresh machine.
/// The result is byte-identical on every call: objects at their deterministic
/// bases, pointer sub-members holding their targets' base addresses, and all
/// non-pointer values derived from the seed (plus any explicit overrides).
pub fn instantiate_input(spec: &InputSpec) -> Result<MachineState, IovecError> {
    validate(spec)?;
    let mut machine = MachineState::new();
    machine.memory.map_region(STACK_BASE, STACK_SIZE);
    machine.set_reg(spec.dialect.stack_register(), STACK_TOP);

    for obj in &spec.objects {
        machine.memory.map_region(obj.base_address, obj.size);
        for word in 0..obj.size / 8 {
            let value = seeded_object_word(spec.seed, obj.object_id, word);
            machine
                .memory
                .write_u64(obj.base_address + word * 8, value)
                .expect("object region just mapped");
        }
    }
    for (&object_id, bytes) in &spec.overrides.object_bytes {
        if let Some(obj) = spec.objects.get(object_id) {
            for (&offset, &value) in bytes {
                if offset < obj.size {
                    machine
                        .memory
                        .write_u8(obj.base_address + offset, value)
                        .expect("object region mapped");
                }
            }
        }
    }
    // Pointer sub-members win over seed bytes and overrides alike.
    for obj in &spec.objects {
        for (&offset, &target) in &obj.pointer_offsets {
            machine
                .memory
                .write_u64(obj.base_address + offset, spec.objects[target].base_address)
                .expect("object region mapped");
        }
    }

    let arg_registers = spec.dialect.arg_registers();
    for (slot, value) in spec.arg_values().into_iter().enumerate() {
        machine.set_reg(arg_registers[slot], value);
    }
    Ok(machine)
}

/// Reads the measurable output state of a completed run: the return register
/// classified by whether it points into mapped memory, the final bytes of
/// every object with pointer-valued cells abstracted to their target object,
/// and the set of syscalls invoked.
pub fn capture_output(state: &MachineState, spec: &InputSpec) -> ObservedState {
    let ret_val = state.reg(spec.dialect.return_register());
    let ret = if state.memory.is_mapped(ret_val) {
        ReturnExpectation::Pointer
    } else {
        ReturnExpectation::NonPointer { value: ret_val }
    };

    let objects = spec
        .objects
        .iter()
        .map(|obj| {
            let mut bytes = state
                .memory
                .read_bytes(obj.base_address, obj.size)
                .expect("object regions stay mapped");
            let mut pointer_offsets = BTreeMap::new();
            for &offset in obj.pointer_offsets.keys() {
                let cell = u64::from_le_bytes(
                    bytes[offset as usize..offset as usize + 8]
                        .try_into()
                        .unwrap(),
                );
                if let Some(target) = spec.objects.iter().find(|o| o.base_address == cell) {
                    pointer_offsets.insert(offset, target.object_id);
                    bytes[offset as usize..offset as usize + 8].fill(0);
                }
                // Otherwise the function overwrote the cell with non-pointer
                // data; it stays part of the byte image.
            }
            ObjectState {
                bytes,
                pointer_offsets,
            }
        })
        .collect();

    ObservedState {
        ret,
        objects,
        syscalls: state.syscalls_seen.clone(),
    }
}

fn returns_match(expected: ReturnExpectation, observed: ReturnExpectation) -> bool {
    match (expected, observed) {
        (ReturnExpectation::Pointer, ReturnExpectation::Pointer) => true,
        (
            ReturnExpectation::NonPointer { value: a },
            ReturnExpectation::NonPointer { value: b },
        ) => {
            // Equal, or the same sign under two's complement. Zero matches
            // only zero: it is a distinguished contract value.
            a == b || ((a as i64) > 0 && (b as i64) > 0) || ((a as i64) < 0 && (b as i64) < 0)
        }
        _ => false,
    }
}

/// Program states match when all non-pointer object bytes are byte-wise the
/// same, pointer sub-members sit at the same offsets, the return values agree
/// in kind (non-pointers must be equal or share a sign), and the same set of
/// syscalls was invoked.
pub fn states_match(expected: &IoVec, observed: &ObservedState) -> bool {
    expected.expected_objects == observed.objects
        && returns_match(expected.expected_return, observed.ret)
        && expected.expected_syscalls == observed.syscalls
}

/// Provides `iovec` to `function` and reports which of the four outcomes
/// occurred. The caller translates first when dialects differ.
pub fn run_iovec(
    function: &FunctionImage,
    iovec: &IoVec,
    budget: u64,
) -> Result<ExecutionOutcome, IovecError> {
    assert_eq!(
        function.dialect, iovec.dialect,
        "dialect mismatch: translate the IOVec first"
    );
    let spec = iovec.input_spec();
    let initial = instantiate_input(&spec)?;
    let run = execute(function, initial, budget, false);
    Ok(match run.end {
        RunEnd::Faulted(_) => ExecutionOutcome::Fault,
        RunEnd::TimedOut => ExecutionOutcome::Timeout,
        RunEnd::Returned => {
            if states_match(iovec, &capture_output(&run.state, &spec)) {
                ExecutionOutcome::Accept
            } else {
                ExecutionOutcome::StateMismatch
            }
        }
    })
}

/// Carries an IOVec to the other dialect. Only the dialect tag and the
/// argument-slot mapping change; seed, objects, expectations, and coverage
/// are identical, and translating back restores the original exactly.
pub fn translate(iovec: &IoVec, target: Dialect) -> IoVec {
    let mut out = iovec.clone();
    if iovec.dialect == target {
        return out;
    }
    out.dialect = target;
    out.pointer_args = iovec
        .pointer_args
        .iter()
        .map(|(&slot, &obj)| {
            (
                translate_arg_slot(iovec.dialect, target, slot as usize) as u8,
                obj,
            )
        })
        .collect();
    out.overrides.args = iovec
        .overrides
        .args
        .iter()
        .map(|(&slot, &value)| {
            (
                translate_arg_slot(iovec.dialect, target, slot as usize) as u8,
                value,
            )
        })
        .collect();
    out
}

#[cfg(test)]
mod tests;
