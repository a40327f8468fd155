//! File-level pipeline commands backing the CLI verbs.
//!
//! Every command is deterministic given the same inputs and `--seed`:
//! per-function work fans out over a sized worker pool, but outputs are
//! collected in corpus order, so parallelism never changes a byte of
//! `.iovecs.jsonl`, `tree.json`, or `labels.jsonl`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coalesce::{
    build_matrix, build_tree, read_tree, write_tree, CoalesceError, DecisionTree, FunctionKey,
    TreeIoError,
};
use crate::corpus::{corpus_fingerprint, load_corpus, read_labels_tsv, CorpusError, FunctionRecord};
use crate::eval::{
    assigned_label, class_stats, ground_truth_label, macro_f1, EvalReport, PerFunction,
    F1_AVERAGING,
};
use crate::explore::{explore_function, FuzzConfig};
use crate::identify::{identify, Identification, PathStep};
use crate::iovec::{
    store::{read_iovecs, write_iovecs, write_jsonl, StoreError},
    translate, FunctionProfile, IovecError,
};
use crate::vm::Dialect;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Coalesce(#[from] CoalesceError),
    #[error(transparent)]
    TreeIo(#[from] TreeIoError),
    #[error(transparent)]
    Iovec(#[from] IovecError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(
        "dialect mismatch: {key} is {have} but the tree is {want}; pass --translate {have}"
    )]
    DialectMismatch {
        key: String,
        have: Dialect,
        want: Dialect,
    },
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Options shared by every command.
#[derive(Clone, Copy, Debug)]
pub struct CommonOpts {
    /// Root seed for all per-function randomness.
    pub seed: u64,
    /// Worker threads; 0 picks the machine default.
    pub jobs: usize,
    /// Instruction budget per execution.
    pub budget: u64,
}

impl Default for CommonOpts {
    fn default() -> Self {
        CommonOpts {
            seed: 1,
            jobs: 0,
            budget: crate::vm::DEFAULT_BUDGET,
        }
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, PipelineError> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

/// Seed for one function's exploration: stable in (root seed, name, variant)
/// and independent of corpus order and scheduling.
fn record_seed(root: u64, record: &FunctionRecord) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"explore");
    hasher.update([0]);
    hasher.update(record.name.as_bytes());
    hasher.update([0]);
    hasher.update(record.variant.as_bytes());
    hasher.update([0]);
    hasher.update(root.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Store file name for one record.
pub fn store_file_name(record: &FunctionRecord) -> String {
    format!("{}.{}.iovecs.jsonl", record.name, record.variant)
}

/// Per-record outcome of an exploration run.
#[derive(Clone, Debug, Serialize)]
pub struct ExploreEntry {
    pub name: String,
    pub variant: String,
    pub dcis_len: usize,
    pub coverage: usize,
    pub instructions: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExploreSummary {
    pub entries: Vec<ExploreEntry>,
    pub elapsed_seconds: f64,
}

/// Explores every corpus record and writes one
/// `<name>.<variant>.iovecs.jsonl` store per record into `out_dir`.
pub fn cmd_explore(
    corpus_dir: &Path,
    out_dir: &Path,
    fuzz: &FuzzConfig,
    opts: CommonOpts,
) -> Result<ExploreSummary, PipelineError> {
    let start = Instant::now();
    let records = load_corpus(corpus_dir)?;
    fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let profiles: Vec<FunctionProfile> = pool(opts.jobs)?.install(|| {
        records
            .par_iter()
            .map(|record| explore_function(record, fuzz, record_seed(opts.seed, record)))
            .collect()
    });

    let mut entries = Vec::with_capacity(profiles.len());
    for profile in &profiles {
        let path = out_dir.join(store_file_name(&profile.record));
        write_iovecs(&path, &profile.dcis)?;
        let coverage: std::collections::BTreeSet<usize> = profile
            .dcis
            .iter()
            .flat_map(|v| v.coverage.iter().copied())
            .collect();
        entries.push(ExploreEntry {
            name: profile.record.name.clone(),
            variant: profile.record.variant.clone(),
            dcis_len: profile.dcis.len(),
            coverage: coverage.len(),
            instructions: profile.record.image.len(),
        });
    }
    Ok(ExploreSummary {
        entries,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Reads back the profiles that `cmd_explore` wrote for `records`.
pub fn load_profiles(
    records: &[FunctionRecord],
    stores_dir: &Path,
) -> Result<Vec<FunctionProfile>, PipelineError> {
    records
        .iter()
        .map(|record| {
            let path = stores_dir.join(store_file_name(record));
            Ok(FunctionProfile {
                record: record.clone(),
                dcis: read_iovecs(&path)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CoalesceSummary {
    pub functions: usize,
    pub columns: usize,
    pub classes: usize,
    pub interior_nodes: usize,
    pub unclassifiable: Vec<FunctionKey>,
    pub elapsed_seconds: f64,
}

/// Builds the accept matrix and decision tree from explored stores and
/// writes `tree.json`. With `translate_to`, stored IOVecs are first carried
/// into that dialect (required when stores mix dialects).
pub fn cmd_coalesce(
    corpus_dir: &Path,
    stores_dir: &Path,
    tree_out: &Path,
    translate_to: Option<Dialect>,
    opts: CommonOpts,
) -> Result<CoalesceSummary, PipelineError> {
    let start = Instant::now();
    let records = load_corpus(corpus_dir)?;
    let mut profiles = load_profiles(&records, stores_dir)?;
    if let Some(target) = translate_to {
        for profile in &mut profiles {
            for iovec in &mut profile.dcis {
                if iovec.dialect != target {
                    *iovec = translate(iovec, target);
                }
            }
        }
    }

    let matrix = pool(opts.jobs)?.install(|| build_matrix(&profiles, opts.budget))?;
    let tree = build_tree(&matrix, corpus_fingerprint(&records));
    write_tree(tree_out, &tree)?;

    Ok(CoalesceSummary {
        functions: matrix.functions.len(),
        columns: matrix.columns.len(),
        classes: tree.leaves().len(),
        interior_nodes: tree.interior_count(),
        unclassifiable: tree.unclassifiable.clone(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// One `labels.jsonl` record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabelRecord {
    pub name: String,
    pub variant: String,
    /// Assigned label under the name-comparison rule; "Unknown" when the
    /// leaf did not confirm.
    pub label: String,
    /// Members of the confirmed leaf class; empty when unknown.
    pub class: Vec<FunctionKey>,
    pub confirmed: bool,
    pub accepted_count: usize,
    pub executions: usize,
    pub path: Vec<PathStep>,
    pub confirmation: Option<PathStep>,
}

fn label_record(record: &FunctionRecord, id: Identification) -> LabelRecord {
    let label = assigned_label(&record.name, id.class.as_deref());
    LabelRecord {
        name: record.name.clone(),
        variant: record.variant.clone(),
        label,
        class: id.class.unwrap_or_default(),
        confirmed: id.confirmation.as_ref().is_some_and(|c| c.branch),
        accepted_count: id.accepted_count,
        executions: id.executions,
        path: id.path,
        confirmation: id.confirmation,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentifySummary {
    pub identified: usize,
    pub unknown: usize,
    pub elapsed_seconds: f64,
}

/// Identifies every corpus record against `tree.json` and writes
/// `labels.jsonl` in corpus order. Functions whose dialect differs from the
/// tree's are refused unless `translate_to` names their dialect.
pub fn cmd_identify(
    tree_path: &Path,
    corpus_dir: &Path,
    labels_out: &Path,
    translate_to: Option<Dialect>,
    opts: CommonOpts,
) -> Result<IdentifySummary, PipelineError> {
    let start = Instant::now();
    let tree = read_tree(tree_path)?;
    let records = load_corpus(corpus_dir)?;

    for record in &records {
        let have = record.image.dialect;
        if have != tree.dialect && translate_to != Some(have) {
            return Err(PipelineError::DialectMismatch {
                key: record.key(),
                have,
                want: tree.dialect,
            });
        }
    }

    let identifications: Vec<Identification> = pool(opts.jobs)?.install(|| {
        records
            .par_iter()
            .map(|record| identify(&record.image, &tree, opts.budget))
            .collect::<Result<_, _>>()
    })?;

    let labels: Vec<LabelRecord> = records
        .iter()
        .zip(identifications)
        .map(|(record, id)| label_record(record, id))
        .collect();
    write_jsonl(labels_out, &labels)?;

    let unknown = labels.iter().filter(|l| !l.confirmed).count();
    Ok(IdentifySummary {
        identified: labels.len() - unknown,
        unknown,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Scores `labels.jsonl` against the tree's classified names (and an
/// optional `labels.tsv` aliasing function names to ground-truth labels).
pub fn cmd_eval(
    labels_path: &Path,
    truth_path: Option<&Path>,
    tree_path: &Path,
    report_out: Option<&Path>,
) -> Result<EvalReport, PipelineError> {
    let start = Instant::now();
    let labels: Vec<LabelRecord> = crate::iovec::store::read_jsonl(labels_path)?;
    let tree: DecisionTree = read_tree(tree_path)?;
    let truth: BTreeMap<String, String> = match truth_path {
        Some(path) => read_labels_tsv(path)?,
        None => BTreeMap::new(),
    };

    let classified = tree.classified_names();
    let mut pairs = Vec::with_capacity(labels.len());
    let mut per_function = Vec::with_capacity(labels.len());
    for l in &labels {
        let effective = truth.get(&l.name).unwrap_or(&l.name);
        let gt = ground_truth_label(effective, &classified);
        pairs.push((gt.clone(), l.label.clone()));
        per_function.push(PerFunction {
            name: l.name.clone(),
            variant: l.variant.clone(),
            assigned: l.label.clone(),
            ground_truth: gt,
        });
    }

    let stats = class_stats(&tree);
    let report = EvalReport {
        f1_averaging: F1_AVERAGING.to_string(),
        macro_f1: macro_f1(&pairs),
        n_classified: stats.n_classified,
        class_count: stats.class_count,
        mean_class_size: stats.mean_class_size,
        histogram: stats.histogram,
        unclassifiable: tree.unclassifiable.clone(),
        per_function,
        timing_seconds: start.elapsed().as_secs_f64(),
    };
    if let Some(path) = report_out {
        let text = crate::iovec::store::to_canonical_json(&report)
            .map_err(StoreError::Encode)?;
        fs::write(path, text + "\n").map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(report)
}

/// Rewrites a store into the target dialect.
pub fn cmd_translate(
    store_in: &Path,
    target: Dialect,
    store_out: &Path,
) -> Result<usize, PipelineError> {
    let iovecs = read_iovecs(store_in)?;
    let translated: Vec<_> = iovecs.iter().map(|v| translate(v, target)).collect();
    write_iovecs(store_out, &translated)?;
    Ok(translated.len())
}
