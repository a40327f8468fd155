//! Acceptance suite. Each test prints one `criterion N PASS/FAIL` line with
//! the measured value next to its threshold, then asserts it.
//!
//! The shared pipeline state is built once: a run over every fixture variant
//! (criterion 1) and a run trained on one variant per function whose tree is
//! probed by the cross-variant, cross-dialect, and obfuscation evaluations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use tempfile::TempDir;

use sevm::coalesce::{build_matrix, read_tree, row_equality_partition, DecisionTree, FunctionKey};
use sevm::corpus::{
    bogus_branch_variant, fixture_corpus_dir, load_corpus, FIXTURE_POINTER_SLOTS,
};
use sevm::eval::EvalReport;
use sevm::explore::FuzzConfig;
use sevm::identify::identify;
use sevm::iovec::{
    mix64, run_iovec, store::read_iovecs, store::read_jsonl, translate, IoVec,
    ReturnExpectation,
};
use sevm::pipeline::{
    cmd_coalesce, cmd_eval, cmd_explore, cmd_identify, load_profiles, store_file_name,
    CommonOpts, LabelRecord,
};
use sevm::vm::{disassemble, Dialect, DEFAULT_BUDGET};

const SEED: u64 = 0x2026_0810;

struct Shared {
    _dir: TempDir,
    full_corpus: PathBuf,
    train_base: PathBuf,
    eval_alt: PathBuf,
    eval_ab: PathBuf,
    eval_bogus: PathBuf,
    c1_stores: PathBuf,
    c1_elapsed: f64,
    c1_report: EvalReport,
    c2_stores: PathBuf,
    c2_tree_path: PathBuf,
    c2_tree: DecisionTree,
    c2_labels_path: PathBuf,
    c2_labels: Vec<LabelRecord>,
    c2_report: EvalReport,
    c3_labels: Vec<LabelRecord>,
    c3_report: EvalReport,
    c4_labels: Vec<LabelRecord>,
    c4_report: EvalReport,
}

fn opts(jobs: usize) -> CommonOpts {
    CommonOpts {
        seed: SEED,
        jobs,
        budget: DEFAULT_BUDGET,
    }
}

/// Copies one variant file per function into a fresh corpus directory.
fn variant_corpus(fixtures: &Path, out: &Path, variant: &str) {
    for entry in fs::read_dir(fixtures).unwrap() {
        let dir = entry.unwrap().path();
        if !dir.is_dir() {
            continue;
        }
        let src = dir.join(format!("{variant}.sevm"));
        assert!(src.exists(), "{src:?} missing");
        let dst_dir = out.join(dir.file_name().unwrap());
        fs::create_dir_all(&dst_dir).unwrap();
        fs::copy(&src, dst_dir.join(format!("{variant}.sevm"))).unwrap();
    }
}

/// Writes never-taken-branch obfuscations of every xa-alt variant.
fn bogus_corpus(fixtures: &Path, out: &Path) {
    let records = load_corpus(fixtures).unwrap();
    for record in records.iter().filter(|r| r.variant == "xa-alt") {
        let seed = record
            .name
            .bytes()
            .fold(0xB06_u64, |acc, b| mix64(acc ^ b as u64));
        let obfuscated = bogus_branch_variant(&record.image, seed);
        assert!(obfuscated.instructions.len() > record.image.instructions.len());
        let dir = out.join(&record.name);
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("xa-alt-bcf.sevm"), disassemble(&obfuscated)).unwrap();
    }
}

fn run_eval(
    tree: &Path,
    corpus: &Path,
    labels_out: &Path,
    translate_to: Option<Dialect>,
) -> (Vec<LabelRecord>, EvalReport) {
    cmd_identify(tree, corpus, labels_out, translate_to, opts(0)).unwrap();
    let labels = read_jsonl::<LabelRecord>(labels_out).unwrap();
    let report = cmd_eval(labels_out, None, tree, None).unwrap();
    (labels, report)
}

fn build_shared() -> Shared {
    let dir = TempDir::new().unwrap();
    let root = dir.path().to_path_buf();
    let full_corpus = fixture_corpus_dir();

    let train_base = root.join("train-base");
    let eval_alt = root.join("eval-alt");
    let eval_ab = root.join("eval-ab");
    let eval_bogus = root.join("eval-bogus");
    variant_corpus(&full_corpus, &train_base, "xa-base");
    variant_corpus(&full_corpus, &eval_alt, "xa-alt");
    variant_corpus(&full_corpus, &eval_ab, "ab-base");
    bogus_corpus(&full_corpus, &eval_bogus);

    // Criterion 1 pipeline: train on every variant, re-identify them all.
    let c1_start = Instant::now();
    let c1_stores = root.join("c1-stores");
    let c1_tree = root.join("c1-tree.json");
    let c1_labels = root.join("c1-labels.jsonl");
    cmd_explore(&full_corpus, &c1_stores, &FuzzConfig::default(), opts(0)).unwrap();
    cmd_coalesce(&full_corpus, &c1_stores, &c1_tree, Some(Dialect::Xa), opts(0)).unwrap();
    cmd_identify(&c1_tree, &full_corpus, &c1_labels, Some(Dialect::Ab), opts(0)).unwrap();
    let c1_report = cmd_eval(&c1_labels, None, &c1_tree, None).unwrap();
    let c1_elapsed = c1_start.elapsed().as_secs_f64();

    // Criterion 2 pipeline: one variant per function.
    let c2_stores = root.join("c2-stores");
    let c2_tree_path = root.join("c2-tree.json");
    cmd_explore(&train_base, &c2_stores, &FuzzConfig::default(), opts(0)).unwrap();
    cmd_coalesce(&train_base, &c2_stores, &c2_tree_path, None, opts(0)).unwrap();
    let c2_tree = read_tree(&c2_tree_path).unwrap();

    let c2_labels_path = root.join("c2-labels.jsonl");
    let (c2_labels, c2_report) = run_eval(&c2_tree_path, &eval_alt, &c2_labels_path, None);
    let (c3_labels, c3_report) = run_eval(
        &c2_tree_path,
        &eval_ab,
        &root.join("c3-labels.jsonl"),
        Some(Dialect::Ab),
    );
    let (c4_labels, c4_report) =
        run_eval(&c2_tree_path, &eval_bogus, &root.join("c4-labels.jsonl"), None);

    Shared {
        _dir: dir,
        full_corpus,
        train_base,
        eval_alt,
        eval_ab,
        eval_bogus,
        c1_stores,
        c1_elapsed,
        c1_report,
        c2_stores,
        c2_tree_path,
        c2_tree,
        c2_labels_path,
        c2_labels,
        c2_report,
        c3_labels,
        c3_report,
        c4_labels,
        c4_report,
    }
}

static SHARED: OnceLock<Shared> = OnceLock::new();

fn shared() -> &'static Shared {
    SHARED.get_or_init(build_shared)
}

fn criterion(n: u32, pass: bool, detail: &str) {
    println!(
        "criterion {n:>2} {}  {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n}: {detail}");
}

fn mismatches(report: &EvalReport) -> String {
    let bad: Vec<String> = report
        .per_function
        .iter()
        .filter(|p| p.assigned != p.ground_truth)
        .map(|p| format!("{}.{} got {} want {}", p.name, p.variant, p.assigned, p.ground_truth))
        .collect();
    if bad.is_empty() {
        String::new()
    } else {
        format!("; mismatches: {}", bad.join(", "))
    }
}

#[test]
fn criterion_01_self_identification() {
    let s = shared();
    let f1 = s.c1_report.macro_f1;
    let pass = (f1 - 1.0).abs() < 1e-12 && s.c1_elapsed < 120.0;
    criterion(
        1,
        pass,
        &format!(
            "self-identification macro F1 = {f1:.4} (want 1.0), runtime {:.1}s < 120s{}",
            s.c1_elapsed,
            mismatches(&s.c1_report)
        ),
    );
}

#[test]
fn criterion_02_cross_variant_identification() {
    let s = shared();
    let f1 = s.c2_report.macro_f1;
    criterion(
        2,
        f1 >= 0.90,
        &format!(
            "cross-variant macro F1 = {f1:.4} (want >= 0.90) over {} functions{}",
            s.c2_report.per_function.len(),
            mismatches(&s.c2_report)
        ),
    );
}

#[test]
fn criterion_03_cross_dialect_identification() {
    let s = shared();
    let (f1, base) = (s.c3_report.macro_f1, s.c2_report.macro_f1);
    criterion(
        3,
        (f1 - base).abs() <= 0.05,
        &format!(
            "cross-dialect macro F1 = {f1:.4}, within 0.05 of cross-variant {base:.4}{}",
            mismatches(&s.c3_report)
        ),
    );
}

#[test]
fn criterion_04_obfuscation_identification() {
    let s = shared();
    let (f1, base) = (s.c4_report.macro_f1, s.c2_report.macro_f1);
    criterion(
        4,
        (f1 - base).abs() <= 0.05,
        &format!(
            "bogus-branch macro F1 = {f1:.4}, within 0.05 of cross-variant {base:.4}{}",
            mismatches(&s.c4_report)
        ),
    );
}

#[test]
fn criterion_05_taint_pointer_ground_truth() {
    let s = shared();
    let records = load_corpus(&s.train_base).unwrap();
    let mut checked = 0;
    for record in &records {
        let documented: BTreeSet<u8> = FIXTURE_POINTER_SLOTS
            .iter()
            .find(|(n, _)| *n == record.name)
            .map(|(_, slots)| slots.iter().copied().collect())
            .unwrap();
        let store = read_iovecs(&s.c2_stores.join(store_file_name(record))).unwrap();
        if store.is_empty() {
            assert!(
                documented.is_empty(),
                "{} produced no IOVecs but documents pointers",
                record.name
            );
            continue;
        }
        let inferred: BTreeSet<u8> = store
            .iter()
            .flat_map(|v| v.pointer_args.keys().copied())
            .collect();
        assert_eq!(
            inferred, documented,
            "{}: inferred pointer slots differ",
            record.name
        );
        checked += 1;
    }

    // The two-level struct fixture carries its pointer sub-members at the
    // documented offset 16 on both levels.
    let chain = records.iter().find(|r| r.name == "chain_value").unwrap();
    let store = read_iovecs(&s.c2_stores.join(store_file_name(chain))).unwrap();
    let chained = store.iter().any(|v| {
        v.objects.len() == 3
            && v.objects[0].pointer_offsets.get(&16) == Some(&1)
            && v.objects[1].pointer_offsets.get(&16) == Some(&2)
    });
    criterion(
        5,
        chained && checked > 0,
        &format!(
            "pointer signatures exact for {checked} classifiable functions; \
             chain_value carries sub-members at offset 16 on both levels"
        ),
    );
}

/// Exhaustive oracle: the class whose entire stored DCIS the function
/// accepts; ties broken toward the class whose leaf the tree reached.
fn oracle_class(
    image: &sevm::vm::FunctionImage,
    classes: &[Vec<FunctionKey>],
    profiles: &BTreeMap<String, Vec<IoVec>>,
    tree_pick: Option<&BTreeSet<String>>,
) -> Option<BTreeSet<String>> {
    let accepts = |iovec: &IoVec| -> bool {
        let carried = if image.dialect == iovec.dialect {
            run_iovec(image, iovec, DEFAULT_BUDGET)
        } else {
            run_iovec(image, &translate(iovec, image.dialect), DEFAULT_BUDGET)
        };
        carried.unwrap().is_accept()
    };
    let mut candidates: Vec<BTreeSet<String>> = Vec::new();
    for class in classes {
        let all = class.iter().all(|key| {
            profiles
                .get(&format!("{key}"))
                .map(|dcis| dcis.iter().all(accepts))
                .unwrap_or(false)
        });
        if all {
            candidates.push(class.iter().map(|k| format!("{k}")).collect());
        }
    }
    match candidates.len() {
        0 => None,
        1 => candidates.pop(),
        _ => {
            if let Some(pick) = tree_pick {
                if let Some(found) = candidates.iter().find(|c| *c == pick) {
                    return Some(found.clone());
                }
            }
            candidates.into_iter().next()
        }
    }
}

#[test]
fn criterion_06_oracle_equivalence_and_execution_cost() {
    let s = shared();
    let tree = &s.c2_tree;
    let depth = tree.depth();
    let classes: Vec<Vec<FunctionKey>> = tree
        .leaves()
        .into_iter()
        .map(|(class, _)| class.clone())
        .collect();
    let train_records = load_corpus(&s.train_base).unwrap();
    let profiles: BTreeMap<String, Vec<IoVec>> = load_profiles(&train_records, &s.c2_stores)
        .unwrap()
        .into_iter()
        .map(|p| (p.record.key(), p.dcis))
        .collect();

    let mut evaluated = 0usize;
    for corpus in [&s.train_base, &s.eval_alt, &s.eval_ab, &s.eval_bogus] {
        for record in load_corpus(corpus).unwrap() {
            let id = identify(&record.image, tree, DEFAULT_BUDGET).unwrap();
            assert!(
                id.executions <= depth + 1,
                "{}: {} executions > depth {} + 1",
                record.key(),
                id.executions,
                depth
            );
            let tree_class: Option<BTreeSet<String>> = id
                .class
                .as_ref()
                .map(|c| c.iter().map(|k| format!("{k}")).collect());
            let oracle = oracle_class(&record.image, &classes, &profiles, tree_class.as_ref());
            assert_eq!(
                tree_class,
                oracle,
                "{}: tree and exhaustive oracle disagree",
                record.key()
            );
            evaluated += 1;
        }
    }
    criterion(
        6,
        evaluated > 0,
        &format!(
            "tree label equals exhaustive-DCIS oracle for {evaluated}/{evaluated} functions; \
             traversal cost <= depth {depth} + 1"
        ),
    );
}

#[test]
fn criterion_07_tree_shape() {
    let s = shared();
    let records = load_corpus(&s.train_base).unwrap();
    let profiles = load_profiles(&records, &s.c2_stores).unwrap();
    let matrix = build_matrix(&profiles, DEFAULT_BUDGET).unwrap();

    let mut from_rows = row_equality_partition(&matrix);
    let mut from_tree: Vec<Vec<FunctionKey>> = s
        .c2_tree
        .leaves()
        .into_iter()
        .map(|(class, _)| class.clone())
        .collect();
    for group in from_rows.iter_mut().chain(from_tree.iter_mut()) {
        group.sort();
    }
    from_rows.sort();
    from_tree.sort();

    let interior = s.c2_tree.interior_count();
    let classified = matrix.functions.len();
    criterion(
        7,
        from_rows == from_tree && interior < classified,
        &format!(
            "leaf partition equals identical-row partition ({} classes); \
             {interior} interior nodes < {classified} classified functions",
            from_tree.len()
        ),
    );
}

#[test]
fn criterion_08_determinism() {
    let s = shared();
    let dir = TempDir::new().unwrap();
    let stores = dir.path().join("stores");
    let tree = dir.path().join("tree.json");
    let labels = dir.path().join("labels.jsonl");
    // Second full pipeline run, same seed, different worker count.
    cmd_explore(&s.train_base, &stores, &FuzzConfig::default(), opts(3)).unwrap();
    cmd_coalesce(&s.train_base, &stores, &tree, None, opts(3)).unwrap();
    cmd_identify(&tree, &s.eval_alt, &labels, None, opts(3)).unwrap();

    let mut same_stores = true;
    for entry in fs::read_dir(&stores).unwrap() {
        let p = entry.unwrap().path();
        let original = s.c2_stores.join(p.file_name().unwrap());
        same_stores &= fs::read(&p).unwrap() == fs::read(&original).unwrap();
    }
    let same_tree = fs::read(&tree).unwrap() == fs::read(&s.c2_tree_path).unwrap();
    let same_labels = fs::read(&labels).unwrap() == fs::read(&s.c2_labels_path).unwrap();
    criterion(
        8,
        same_stores && same_tree && same_labels,
        &format!(
            "same-seed reruns byte-identical: stores {same_stores}, tree {same_tree}, \
             labels {same_labels}"
        ),
    );
}

#[test]
fn criterion_09_equivalence_class_sanity() {
    let s = shared();
    let mean = s.c2_report.mean_class_size;
    let twins_merged = s.c2_tree.leaves().iter().any(|(class, _)| {
        let names: BTreeSet<&str> = class.iter().map(|k| k.name.as_str()).collect();
        names.contains("twin_flip") && names.contains("twin_swirl")
    });
    criterion(
        9,
        mean <= 2.0 && twins_merged,
        &format!(
            "mean class size {mean:.3} <= 2.0 over {} classes; designed \
             equivalence pair shares one leaf: {twins_merged}",
            s.c2_report.class_count
        ),
    );
}

#[test]
fn criterion_10_my_div_contract() {
    let s = shared();
    let mut checked = 0usize;
    for stores in [&s.c1_stores, &s.c2_stores] {
        for entry in fs::read_dir(stores).unwrap() {
            let path = entry.unwrap().path();
            let file = path.file_name().unwrap().to_string_lossy().into_owned();
            if !file.starts_with("my_div.") {
                continue;
            }
            for iovec in read_iovecs(&path).unwrap() {
                assert_eq!(
                    iovec.expected_return,
                    ReturnExpectation::NonPointer { value: 0 },
                    "{file}: my_div must return 0"
                );
                let args = iovec.input_spec().arg_values();
                let (dividend, divisor) = (args[0], args[1]);
                assert_ne!(divisor, 0, "{file}: accepted IOVec cannot divide by zero");
                let target = *iovec.pointer_args.get(&2).expect("slot 2 is the out pointer");
                let cell = &iovec.expected_objects[target].bytes[0..8];
                assert_eq!(
                    cell,
                    (dividend / divisor).to_le_bytes(),
                    "{file}: quotient missing from the pointed-to cell"
                );
                checked += 1;
            }
        }
    }
    criterion(
        10,
        checked > 0,
        &format!(
            "{checked} my_div IOVecs return NonPointer 0 and store the quotient \
             at the pointed-to cell"
        ),
    );
}

#[test]
fn evaluation_corpora_are_complete() {
    // Not a numbered criterion: the three evaluation corpora cover every
    // fixture function, so the per-criterion scores above are over the full
    // set.
    let s = shared();
    for (corpus, variant) in [
        (&s.eval_alt, "xa-alt"),
        (&s.eval_ab, "ab-base"),
        (&s.eval_bogus, "xa-alt-bcf"),
    ] {
        let records = load_corpus(corpus).unwrap();
        assert_eq!(records.len(), 31, "{variant}");
        assert!(records.iter().all(|r| r.variant == variant));
    }
    assert_eq!(s.c2_labels.len(), 31);
    assert_eq!(s.c3_labels.len(), 31);
    assert_eq!(s.c4_labels.len(), 31);
    assert_eq!(load_corpus(&s.full_corpus).unwrap().len(), 93);
}
