use super::*;
use crate::vm::{assemble, Reg};

pub const MY_DIV_XA: &str = "\
.func my_div xa
    div r1, r2
    st [r3+0], r1
    li r0, 0
    ret
.end
";

pub const MY_DIV_AB: &str = "\
.func my_div ab
    div a2, a3
    st [a4+0], a2
    li a1, 0
    ret
.end
";

fn one_object_spec(seed: u64, slot: u8, size: u64) -> InputSpec {
    let mut spec = InputSpec::fresh(seed, Dialect::Xa);
    spec.objects.push(MemoryObject::new(0, size));
    spec.pointer_args.insert(slot, 0);
    spec
}

#[test]
fn pointer_arg_register_holds_the_arena_base() {
    // One 64-byte object wired to argument slot 0: dialect xa carries slot 0
    // in r1, which must hold the arena base.
    let spec = one_object_spec(7, 0, 64);
    let machine = instantiate_input(&spec).unwrap();
    assert_eq!(machine.reg(Reg(1)), OBJECT_ARENA_BASE);
    assert_eq!(machine.reg(spec.dialect.stack_register()), STACK_TOP);
}

#[test]
fn instantiation_is_byte_identical() {
    let mut spec = one_object_spec(99, 2, 64);
    spec.objects.push(MemoryObject::new(1, 64));
    spec.objects[0].pointer_offsets.insert(16, 1);
    let a = instantiate_input(&spec).unwrap();
    let b = instantiate_input(&spec).unwrap();
    assert_eq!(a.registers, b.registers);
    for obj in &spec.objects {
        assert_eq!(
            a.memory.read_bytes(obj.base_address, obj.size).unwrap(),
            b.memory.read_bytes(obj.base_address, obj.size).unwrap()
        );
    }
}

#[test]
fn pointer_sub_member_cell_holds_target_base_little_endian() {
    let mut spec = one_object_spec(5, 0, 64);
    spec.objects.push(MemoryObject::new(1, 64));
    spec.objects[0].pointer_offsets.insert(16, 1);
    let machine = instantiate_input(&spec).unwrap();
    let cell = machine.memory.read_u64(OBJECT_ARENA_BASE + 16).unwrap();
    assert_eq!(cell, spec.objects[1].base_address);
    let bytes = machine.memory.read_bytes(OBJECT_ARENA_BASE + 16, 8).unwrap();
    assert_eq!(bytes, spec.objects[1].base_address.to_le_bytes());
}

#[test]
fn missing_pointer_target_is_a_malformed_iovec() {
    let mut spec = one_object_spec(5, 0, 64);
    spec.objects[0].pointer_offsets.insert(8, 3);
    assert!(matches!(
        instantiate_input(&spec),
        Err(IovecError::MissingTarget { target: 3, .. })
    ));
}

/// Builds an IOVec for `function` by instantiating `spec`, running it, and
/// capturing the result as the expectation. Panics unless the run returns.
pub fn iovec_from_spec(function: &FunctionImage, spec: InputSpec, budget: u64) -> IoVec {
    let machine = instantiate_input(&spec).unwrap();
    let run = execute(function, machine, budget, false);
    assert!(
        matches!(run.end, RunEnd::Returned),
        "fixture run must return, got {:?}",
        run.end
    );
    let observed = capture_output(&run.state, &spec);
    let objects = spec.objects.clone();
    IoVec {
        seed: spec.seed,
        dialect: spec.dialect,
        pointer_args: spec.pointer_args.clone(),
        objects,
        overrides: spec.overrides.clone(),
        expected_return: observed.ret,
        expected_objects: observed.objects,
        expected_syscalls: observed.syscalls,
        coverage: run.state.coverage.clone(),
    }
}

fn my_div_spec(seed: u64) -> InputSpec {
    let mut spec = InputSpec::fresh(seed, Dialect::Xa);
    spec.objects.push(MemoryObject::new(0, 64));
    spec.pointer_args.insert(2, 0);
    spec
}

#[test]
fn my_div_forced_example_quotient_and_return() {
    // args (6, 3, mapped P) -> returns 0, 8-byte cell at P holds 2.
    let function = assemble(MY_DIV_XA).unwrap();
    let mut spec = my_div_spec(1);
    spec.overrides.args.insert(0, store::U64Str(6));
    spec.overrides.args.insert(1, store::U64Str(3));
    let machine = instantiate_input(&spec).unwrap();
    let run = execute(&function, machine, 100, false);
    assert!(matches!(run.end, RunEnd::Returned));
    assert_eq!(run.state.reg(Reg(0)), 0);
    assert_eq!(run.state.memory.read_u64(OBJECT_ARENA_BASE).unwrap(), 2);

    let observed = capture_output(&run.state, &spec);
    assert_eq!(
        observed.ret,
        ReturnExpectation::NonPointer { value: 0 }
    );
    assert_eq!(&observed.objects[0].bytes[0..8], 2u64.to_le_bytes().as_slice());
}

#[test]
fn returned_mapped_address_classifies_as_pointer() {
    // Returns its first (pointer) argument.
    let function = assemble(".func first xa\n    mov r0, r1\n    ret\n.end\n").unwrap();
    let spec = one_object_spec(3, 0, 64);
    let machine = instantiate_input(&spec).unwrap();
    let run = execute(&function, machine, 100, false);
    let observed = capture_output(&run.state, &spec);
    assert_eq!(observed.ret, ReturnExpectation::Pointer);
}

#[test]
fn returned_unmapped_value_classifies_as_non_pointer() {
    let function = assemble(".func all_ones xa\n    li r0, -1\n    ret\n.end\n").unwrap();
    let spec = InputSpec::fresh(3, Dialect::Xa);
    let machine = instantiate_input(&spec).unwrap();
    let run = execute(&function, machine, 100, false);
    let observed = capture_output(&run.state, &spec);
    assert_eq!(
        observed.ret,
        ReturnExpectation::NonPointer { value: u64::MAX }
    );
}

fn bare_iovec(ret: ReturnExpectation) -> IoVec {
    IoVec {
        seed: 0,
        dialect: Dialect::Xa,
        pointer_args: BTreeMap::new(),
        objects: Vec::new(),
        overrides: InputOverrides::default(),
        expected_return: ret,
        expected_objects: Vec::new(),
        expected_syscalls: BTreeSet::new(),
        coverage: BTreeSet::new(),
    }
}

fn bare_observed(ret: ReturnExpectation) -> ObservedState {
    ObservedState {
        ret,
        objects: Vec::new(),
        syscalls: BTreeSet::new(),
    }
}

#[test]
fn non_pointer_returns_match_by_sign() {
    let neg = |v: i64| ReturnExpectation::NonPointer { value: v as u64 };
    // -5 vs -1: both negative, match.
    assert!(states_match(&bare_iovec(neg(-5)), &bare_observed(neg(-1))));
    // zero matches only zero.
    assert!(!states_match(&bare_iovec(neg(0)), &bare_observed(neg(1))));
    assert!(!states_match(&bare_iovec(neg(1)), &bare_observed(neg(0))));
    assert!(states_match(&bare_iovec(neg(0)), &bare_observed(neg(0))));
    // opposite signs do not match.
    assert!(!states_match(&bare_iovec(neg(-5)), &bare_observed(neg(5))));
    // pointer kinds must agree.
    assert!(!states_match(
        &bare_iovec(ReturnExpectation::Pointer),
        &bare_observed(neg(1))
    ));
    assert!(states_match(
        &bare_iovec(ReturnExpectation::Pointer),
        &bare_observed(ReturnExpectation::Pointer)
    ));
}

#[test]
fn syscall_sets_must_be_equal() {
    let mut expected = bare_iovec(ReturnExpectation::NonPointer { value: 0 });
    expected.expected_syscalls.insert(7);
    let observed = bare_observed(ReturnExpectation::NonPointer { value: 0 });
    assert!(!states_match(&expected, &observed));
}

#[test]
fn captured_state_matches_itself() {
    let function = assemble(MY_DIV_XA).unwrap();
    let iovec = iovec_from_spec(&function, my_div_spec(11), 1000);
    assert_eq!(run_iovec(&function, &iovec, 1000).unwrap(), ExecutionOutcome::Accept);
}

#[test]
fn outcome_partition_budget_one_times_out() {
    let function = assemble(MY_DIV_XA).unwrap();
    let iovec = iovec_from_spec(&function, my_div_spec(11), 1000);
    assert_eq!(run_iovec(&function, &iovec, 1).unwrap(), ExecutionOutcome::Timeout);
}

#[test]
fn strlen_rejects_a_my_div_iovec_by_faulting() {
    // A my_div input carries a pointer only in slot 2; slot 0 holds a
    // seed-derived non-pointer, so the scan's first byte load faults.
    // Frozen from a run of the harness.
    let strlen = assemble(
        ".func str_len xa
    mov r7, r1
scan:
    ldb r8, [r7+0]
    li r9, 0
    beq r8, r9, done
    addi r7, 1
    jmp scan
done:
    mov r0, r7
    sub r0, r1
    ret
.end
",
    )
    .unwrap();
    let my_div = assemble(MY_DIV_XA).unwrap();
    let iovec = iovec_from_spec(&my_div, my_div_spec(11), 1000);
    assert_eq!(
        run_iovec(&strlen, &iovec, 100_000).unwrap(),
        ExecutionOutcome::Fault
    );
}

#[test]
fn mismatched_expectation_is_state_mismatch() {
    let function = assemble(MY_DIV_XA).unwrap();
    let mut iovec = iovec_from_spec(&function, my_div_spec(11), 1000);
    iovec.expected_syscalls.insert(42);
    assert_eq!(
        run_iovec(&function, &iovec, 1000).unwrap(),
        ExecutionOutcome::StateMismatch
    );
}

#[test]
fn translate_round_trip_is_byte_identical() {
    let function = assemble(MY_DIV_XA).unwrap();
    let iovec = iovec_from_spec(&function, my_div_spec(21), 1000);
    let there = translate(&iovec, Dialect::Ab);
    assert_eq!(there.dialect, Dialect::Ab);
    let back = translate(&there, Dialect::Xa);
    assert_eq!(
        store::to_canonical_json(&iovec).unwrap(),
        store::to_canonical_json(&back).unwrap()
    );
}

#[test]
fn translated_slot_lands_in_the_other_dialects_register() {
    // Slot 0 pointer arg: xa carries it in r1, ab in a2 (index 2).
    let mut spec = one_object_spec(9, 0, 64);
    spec.dialect = Dialect::Ab;
    let machine = instantiate_input(&spec).unwrap();
    assert_eq!(machine.reg(Reg(2)), OBJECT_ARENA_BASE);
}

#[test]
fn my_div_translates_across_dialects_and_accepts() {
    let xa = assemble(MY_DIV_XA).unwrap();
    let ab = assemble(MY_DIV_AB).unwrap();
    let iovec = iovec_from_spec(&xa, my_div_spec(31), 1000);
    let translated = translate(&iovec, Dialect::Ab);
    assert_eq!(run_iovec(&ab, &translated, 1000).unwrap(), ExecutionOutcome::Accept);
    // And the translation is sound in the other direction too.
    assert_eq!(
        run_iovec(&xa, &translate(&translated, Dialect::Xa), 1000).unwrap(),
        ExecutionOutcome::Accept
    );
}

#[test]
fn canonical_jsonl_round_trips() {
    let function = assemble(MY_DIV_XA).unwrap();
    let mut iovec = iovec_from_spec(&function, my_div_spec(41), 1000);
    iovec.overrides.args.insert(1, store::U64Str(3));
    let tmp = tempfile::TempDir::new().unwrap();
    let path = tmp.path().join("x.iovecs.jsonl");
    store::write_iovecs(&path, std::slice::from_ref(&iovec)).unwrap();
    let back = store::read_iovecs(&path).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back[0], iovec);
    // 64-bit values appear as decimal strings.
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains(&format!("\"{}\"", OBJECT_ARENA_BASE)), "{text}");
}
