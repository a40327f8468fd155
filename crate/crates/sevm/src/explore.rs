//! Coverage-guided mutational fuzzing of one function at a time.
//!
//! Each round picks the stored IOVec with the most coverage (or a fresh
//! random one while none exist), mutates only its non-pointer values, and
//! tries to turn the mutated input into an accepting run. Results that cover
//! no new instructions are discarded; the loop stops once coverage reaches
//! the configured fraction of the function's static instruction count or the
//! execution cap runs out. Explorations of distinct functions share nothing
//! and run freely in parallel.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::FunctionRecord;
use crate::iovec::{FunctionProfile, InputSpec, IoVec};
use crate::taint::generate_accepting_run_from;
use crate::vm::DEFAULT_BUDGET;

/// Relative weights of the four mutators.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MutationWeights {
    pub bit_flip: u32,
    pub interesting: u32,
    pub random: u32,
    pub arith: u32,
}

impl Default for MutationWeights {
    fn default() -> Self {
        MutationWeights {
            bit_flip: 1,
            interesting: 1,
            random: 1,
            arith: 1,
        }
    }
}

/// Knobs of the exploration loop.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct FuzzConfig {
    /// Stop once covered instructions reach this fraction of the function's
    /// static instruction count. Must lie in (0, 1].
    pub coverage_threshold: f64,
    /// Generation attempts allowed per function.
    pub max_executions: u32,
    /// Stored-IOVec cap; the lowest-coverage member is evicted past it.
    pub dcis_cap: usize,
    /// Instruction budget per execution.
    pub budget: u64,
    pub weights: MutationWeights,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            coverage_threshold: 0.85,
            max_executions: 2000,
            dcis_cap: 32,
            budget: DEFAULT_BUDGET,
            weights: MutationWeights::default(),
        }
    }
}

/// A mutable input position: an argument slot or one object byte.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Site {
    ArgSlot(u8),
    ObjectByte { object: usize, offset: u64 },
}

/// Non-pointer positions of the input: argument slots not carrying pointers
/// and object bytes outside pointer cells.
fn mutation_sites(spec: &InputSpec) -> Vec<Site> {
    let mut sites = Vec::new();
    for slot in 0..crate::vm::ARG_SLOTS as u8 {
        if !spec.pointer_args.contains_key(&slot) {
            sites.push(Site::ArgSlot(slot));
        }
    }
    for obj in &spec.objects {
        'bytes: for offset in 0..obj.size {
            for &ptr in obj.pointer_offsets.keys() {
                if (ptr..ptr + 8).contains(&offset) {
                    continue 'bytes;
                }
            }
            sites.push(Site::ObjectByte {
                object: obj.object_id,
                offset,
            });
        }
    }
    sites
}

fn effective_object_byte(spec: &InputSpec, object: usize, offset: u64) -> u8 {
    if let Some(v) = spec
        .overrides
        .object_bytes
        .get(&object)
        .and_then(|m| m.get(&offset))
    {
        return *v;
    }
    let word = crate::iovec::seeded_object_word(spec.seed, object, offset / 8);
    word.to_le_bytes()[(offset % 8) as usize]
}

const INTERESTING_U64: [u64; 5] = [0, 1, u64::MAX, i64::MAX as u64, i64::MIN as u64];
const INTERESTING_U8: [u8; 5] = [0, 1, 0xFF, 0x7F, 0x80];

fn pick_mutator(weights: &MutationWeights, rng: &mut ChaCha8Rng) -> usize {
    let table = [
        weights.bit_flip,
        weights.interesting,
        weights.random,
        weights.arith,
    ];
    let total: u32 = table.iter().sum();
    if total == 0 {
        return rng.gen_range(0..4);
    }
    let mut roll = rng.gen_range(0..total);
    for (index, w) in table.iter().enumerate() {
        if roll < *w {
            return index;
        }
        roll -= w;
    }
    unreachable!()
}

/// Copies `iovec` and rewrites one of its seed-derived non-pointer values
/// with one mutator (bit flip, interesting constant, random value, or small
/// arithmetic). Pointer arguments and pointer sub-members are untouched.
pub fn mutate(iovec: &IoVec, weights: &MutationWeights, rng: &mut ChaCha8Rng) -> IoVec {
    let mut out = iovec.clone();
    let spec = out.input_spec();
    let sites = mutation_sites(&spec);
    if sites.is_empty() {
        return out;
    }
    let site = sites[rng.gen_range(0..sites.len())];
    let mutator = pick_mutator(weights, rng);

    match site {
        Site::ArgSlot(slot) => {
            let current = spec.arg_values()[slot as usize];
            let value = match mutator {
                0 => current ^ (1u64 << rng.gen_range(0..64)),
                1 => INTERESTING_U64[rng.gen_range(0..INTERESTING_U64.len())],
                2 => rng.gen::<u64>(),
                _ => {
                    let delta = rng.gen_range(1..=32u64);
                    if rng.gen::<bool>() {
                        current.wrapping_add(delta)
                    } else {
                        current.wrapping_sub(delta)
                    }
                }
            };
            out.overrides.args.insert(slot, value.into());
        }
        Site::ObjectByte { object, offset } => {
            let current = effective_object_byte(&spec, object, offset);
            let value = match mutator {
                0 => current ^ (1u8 << rng.gen_range(0..8)),
                1 => INTERESTING_U8[rng.gen_range(0..INTERESTING_U8.len())],
                2 => rng.gen::<u8>(),
                _ => {
                    let delta = rng.gen_range(1..=8u8);
                    if rng.gen::<bool>() {
                        current.wrapping_add(delta)
                    } else {
                        current.wrapping_sub(delta)
                    }
                }
            };
            out.overrides
                .object_bytes
                .entry(object)
                .or_default()
                .insert(offset, value);
        }
    }
    out
}

/// Member with the widest coverage, ties to the earliest stored.
fn best_seed(dcis: &[IoVec]) -> Option<&IoVec> {
    let mut best: Option<&IoVec> = None;
    for v in dcis {
        if best.is_none_or(|b| v.coverage.len() > b.coverage.len()) {
            best = Some(v);
        }
    }
    best
}

/// Builds a function's distinguishing IOVec set by fuzzing. Deterministic in
/// `(record, config, rng_seed)`; an empty set is a valid result and marks
/// the function unclassifiable.
pub fn explore_function(
    record: &FunctionRecord,
    config: &FuzzConfig,
    rng_seed: u64,
) -> FunctionProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut dcis: Vec<IoVec> = Vec::new();
    let mut covered: BTreeSet<usize> = BTreeSet::new();
    let static_count = record.image.len().max(1) as f64;
    let dialect = record.image.dialect;

    let mut executions = 0u32;
    while executions < config.max_executions
        && (covered.len() as f64) < config.coverage_threshold * static_count
    {
        executions += 1;
        let candidate = match best_seed(&dcis) {
            None => InputSpec::fresh(rng.gen::<u64>(), dialect),
            Some(parent) => mutate(parent, &config.weights, &mut rng).input_spec(),
        };
        let Ok(iovec) = generate_accepting_run_from(&record.image, candidate, config.budget)
        else {
            continue;
        };
        if iovec.coverage.iter().any(|i| !covered.contains(i)) {
            covered.extend(iovec.coverage.iter().copied());
            dcis.push(iovec);
            if dcis.len() > config.dcis_cap {
                let evict = dcis
                    .iter()
                    .enumerate()
                    .min_by_key(|(index, v)| (v.coverage.len(), *index))
                    .map(|(index, _)| index)
                    .unwrap();
                dcis.remove(evict);
            }
        }
    }
    FunctionProfile {
        record: record.clone(),
        dcis,
    }
}
