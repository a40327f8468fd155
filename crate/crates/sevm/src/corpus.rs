//! Corpus loading and the bundled fixture corpus.
//!
//! A corpus directory holds one subdirectory per function with one `.sevm`
//! file per variant (`<name>/<variant>.sevm`); an optional `labels.tsv` at
//! the root maps function names to ground-truth labels for evaluation
//! corpora. Every `.func` block in every file becomes one record, ordered by
//! (relative file path, block order).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::vm::{assemble_file, AsmError, Cond, FunctionImage, Instruction, Reg};

/// One corpus entry: a named variant of a function.
#[derive(Clone, Debug)]
pub struct FunctionRecord {
    pub name: String,
    /// Variant tag, taken from the file stem (e.g. `xa-base`, `ab-unrolled`).
    pub variant: String,
    pub image: FunctionImage,
    /// Present only when the corpus ships a `labels.tsv`.
    pub ground_truth_label: Option<String>,
}

impl FunctionRecord {
    /// `name.variant`, the identity used in stores, trees, and reports.
    pub fn key(&self) -> String {
        format!("{}.{}", self.name, self.variant)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Asm {
        path: PathBuf,
        #[source]
        source: AsmError,
    },
    #[error("duplicate function record {name}.{variant} (second copy in {path})")]
    Duplicate {
        name: String,
        variant: String,
        path: PathBuf,
    },
    #[error("{path} line {line}: malformed labels.tsv row")]
    Labels { path: PathBuf, line: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sevm_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut files = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .collect::<Result<_, _>>()
        .map_err(io_err(dir))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            let mut inner: Vec<_> = fs::read_dir(&path)
                .map_err(io_err(&path))?
                .collect::<Result<_, _>>()
                .map_err(io_err(&path))?;
            inner.sort_by_key(|e| e.file_name());
            for e in inner {
                let p = e.path();
                if p.extension().is_some_and(|x| x == "sevm") {
                    files.push(p);
                }
            }
        } else if path.extension().is_some_and(|x| x == "sevm") {
            files.push(path);
        }
    }
    Ok(files)
}

/// Reads a `labels.tsv` (name, tab, ground-truth label per line). A missing
/// file is an empty mapping.
pub fn read_labels_tsv(path: &Path) -> Result<BTreeMap<String, String>, CorpusError> {
    let mut labels = BTreeMap::new();
    if !path.exists() {
        return Ok(labels);
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.splitn(2, '\t');
        match (cols.next(), cols.next()) {
            (Some(name), Some(label)) if !name.is_empty() && !label.is_empty() => {
                labels.insert(name.trim().to_string(), label.trim().to_string());
            }
            _ => {
                return Err(CorpusError::Labels {
                    path: path.to_path_buf(),
                    line: idx + 1,
                })
            }
        }
    }
    Ok(labels)
}

/// Loads every function record under `dir`, deterministically ordered by
/// (relative file path, block order within the file).
pub fn load_corpus(dir: &Path) -> Result<Vec<FunctionRecord>, CorpusError> {
    let labels = read_labels_tsv(&dir.join("labels.tsv"))?;
    let mut records = Vec::new();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();

    for path in sevm_files(dir)? {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let images = assemble_file(&text).map_err(|source| CorpusError::Asm {
            path: path.clone(),
            source,
        })?;
        let variant = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for image in images {
            let name = image.name.clone();
            if !seen.insert((name.clone(), variant.clone())) {
                return Err(CorpusError::Duplicate {
                    name,
                    variant,
                    path,
                });
            }
            records.push(FunctionRecord {
                ground_truth_label: labels.get(&name).cloned(),
                name,
                variant: variant.clone(),
                image,
            });
        }
    }
    Ok(records)
}

/// Path of the fixture corpus bundled with this crate.
pub fn fixture_corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join("corpus")
}

/// Stable fingerprint of a corpus: a SHA-256 over every record's identity
/// and canonical disassembly, in record order.
pub fn corpus_fingerprint<'a>(records: impl IntoIterator<Item = &'a FunctionRecord>) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for record in records {
        hasher.update(record.name.as_bytes());
        hasher.update([0]);
        hasher.update(record.variant.as_bytes());
        hasher.update([0]);
        hasher.update(crate::vm::disassemble(&record.image).as_bytes());
        hasher.update([0]);
    }
    hex::encode(hasher.finalize())
}

/// Documented pointer-argument slots of every fixture function, the ground
/// truth for pointer-inference checks.
pub const FIXTURE_POINTER_SLOTS: &[(&str, &[u8])] = &[
    ("identity", &[]),
    ("abs_val", &[]),
    ("max2", &[]),
    ("min2", &[]),
    ("add3", &[]),
    ("mul_add", &[]),
    ("popcount", &[]),
    ("parity", &[]),
    ("is_even", &[]),
    ("sign_of", &[]),
    ("my_div", &[2]),
    ("str_len", &[0]),
    ("str_copy", &[0, 1]),
    ("mem_cmp", &[0, 1]),
    ("str_chr", &[0]),
    ("count_byte", &[0]),
    ("sum8", &[0]),
    ("min_index8", &[0]),
    ("dot8", &[0, 1]),
    ("fill8", &[0]),
    ("swap_ends", &[0]),
    ("node_value", &[0]),
    ("chain_value", &[0]),
    ("touch_log", &[]),
    ("double_note", &[]),
    ("twin_flip", &[]),
    ("twin_swirl", &[]),
    ("gated_add", &[]),
    ("gated_sub", &[]),
    ("gated_xor", &[]),
    ("div_trap", &[]),
];

/// Rewrites an image with opaque never-taken branches (`bne r, r, junk`)
/// inserted before a seed-chosen subset of instructions, plus an unreachable
/// junk block at the end. Semantics are untouched: the guard register is only
/// read, and the junk block can only be reached by a taken bogus branch.
pub fn bogus_branch_variant(image: &FunctionImage, seed: u64) -> FunctionImage {
    let n = image.instructions.len();
    let guard = Reg(13);

    let mut insert_before = vec![false; n];
    for (i, flag) in insert_before.iter_mut().enumerate() {
        *flag = crate::iovec::mix64(seed ^ (i as u64)) & 1 == 1;
    }
    if !insert_before.iter().any(|&b| b) && n > 0 {
        insert_before[0] = true;
    }

    let mut new_index = vec![0usize; n + 1];
    let mut pos = 0usize;
    for i in 0..n {
        if insert_before[i] {
            pos += 1;
        }
        new_index[i] = pos;
        pos += 1;
    }
    new_index[n] = pos;
    let junk_start = pos;

    let mut instructions = Vec::with_capacity(pos + 2);
    for (i, instr) in image.instructions.iter().enumerate() {
        if insert_before[i] {
            instructions.push(Instruction::Branch {
                cond: Cond::Ne,
                lhs: guard,
                rhs: guard,
                target: junk_start,
            });
        }
        instructions.push(match instr {
            Instruction::Branch {
                cond,
                lhs,
                rhs,
                target,
            } => Instruction::Branch {
                cond: *cond,
                lhs: *lhs,
                rhs: *rhs,
                target: new_index[*target],
            },
            Instruction::Jmp { target } => Instruction::Jmp {
                target: new_index[*target],
            },
            other => other.clone(),
        });
    }
    // Unreachable junk tail.
    instructions.push(Instruction::AddI {
        dest: guard,
        imm: 0x5EED,
    });
    instructions.push(Instruction::Ret);

    FunctionImage {
        name: image.name.clone(),
        dialect: image.dialect,
        instructions,
    }
}
