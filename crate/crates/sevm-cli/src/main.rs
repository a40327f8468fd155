//! Batch front end for the analysis pipeline: `explore` builds per-function
//! IOVec stores, `coalesce` turns them into a decision tree, `identify`
//! labels a corpus against a tree, `eval` scores the labels, and `translate`
//! carries a store to the other dialect. Every command is deterministic
//! given the same inputs and `--seed`.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use sevm::explore::FuzzConfig;
use sevm::pipeline::{
    cmd_coalesce, cmd_eval, cmd_explore, cmd_identify, cmd_translate, CommonOpts,
};
use sevm::vm::Dialect;

#[derive(Parser)]
#[command(
    name = "sevm",
    version,
    about = "Fingerprints functions by the program-state changes they make in a sandbox VM, \
             and identifies unknown functions by decision-tree traversal over those fingerprints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options honored by every subcommand. Values resolve as: explicit flag,
/// then config-file entry, then built-in default.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Root seed for all randomized work.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = machine default). Output bytes never depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Instruction budget per execution.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// TOML config file with defaults for the flags above and the fuzzer
    /// knobs (seed, jobs, budget, coverage-threshold, max-execs, dcis-cap).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    seed: Option<u64>,
    jobs: Option<usize>,
    budget: Option<u64>,
    coverage_threshold: Option<f64>,
    max_execs: Option<u32>,
    dcis_cap: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fuzz every corpus function and write one .iovecs.jsonl store each.
    Explore {
        /// Corpus directory (<name>/<variant>.sevm).
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for the stores.
        #[arg(long)]
        out: PathBuf,
        /// Stop exploring a function once covered instructions reach this
        /// fraction of its static instruction count.
        #[arg(long)]
        coverage_threshold: Option<f64>,
        /// Generation attempts allowed per function.
        #[arg(long)]
        max_execs: Option<u32>,
        /// Stored-IOVec cap per function.
        #[arg(long)]
        dcis_cap: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Build the accept matrix and decision tree from explored stores.
    Coalesce {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory holding the .iovecs.jsonl stores.
        #[arg(long)]
        stores: PathBuf,
        /// Output tree.json path.
        #[arg(long)]
        out: PathBuf,
        /// Carry stored IOVecs into this dialect first (needed when stores
        /// mix dialects).
        #[arg(long, value_parser = parse_dialect)]
        translate: Option<Dialect>,
        #[command(flatten)]
        common: Common,
    },
    /// Label a corpus against a tree, writing labels.jsonl.
    Identify {
        /// tree.json from a coalesce run.
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Output labels.jsonl path.
        #[arg(long)]
        out: PathBuf,
        /// Permit on-the-fly translation of tree IOVecs for corpus functions
        /// of this dialect; without it a dialect mismatch is refused.
        #[arg(long, value_parser = parse_dialect)]
        translate: Option<Dialect>,
        #[command(flatten)]
        common: Common,
    },
    /// Score labels.jsonl against the tree's classified names.
    Eval {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        /// Optional labels.tsv mapping function names to ground-truth labels.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Write the full report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Rewrite an .iovecs.jsonl store into the target dialect.
    Translate {
        #[arg(long)]
        store: PathBuf,
        /// Target dialect (xa or ab).
        #[arg(long, value_parser = parse_dialect)]
        to: Dialect,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_dialect(s: &str) -> Result<Dialect, String> {
    Dialect::from_name(s).ok_or_else(|| format!("unknown dialect '{s}' (expected xa or ab)"))
}

fn load_file_config(common: &Common) -> Result<FileConfig> {
    match &common.config {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
        }
    }
}

fn resolve(common: &Common, file: &FileConfig) -> CommonOpts {
    let defaults = CommonOpts::default();
    CommonOpts {
        seed: common.seed.or(file.seed).unwrap_or(defaults.seed),
        jobs: common.jobs.or(file.jobs).unwrap_or(defaults.jobs),
        budget: common.budget.or(file.budget).unwrap_or(defaults.budget),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Explore {
            corpus,
            out,
            coverage_threshold,
            max_execs,
            dcis_cap,
            common,
        } => {
            let file = load_file_config(&common)?;
            let opts = resolve(&common, &file);
            let defaults = FuzzConfig::default();
            let fuzz = FuzzConfig {
                coverage_threshold: coverage_threshold
                    .or(file.coverage_threshold)
                    .unwrap_or(defaults.coverage_threshold),
                max_executions: max_execs
                    .or(file.max_execs)
                    .unwrap_or(defaults.max_executions),
                dcis_cap: dcis_cap.or(file.dcis_cap).unwrap_or(defaults.dcis_cap),
                budget: opts.budget,
                weights: defaults.weights,
            };
            if !(fuzz.coverage_threshold > 0.0 && fuzz.coverage_threshold <= 1.0) {
                bail!("--coverage-threshold must lie in (0, 1]");
            }
            let summary = cmd_explore(&corpus, &out, &fuzz, opts)?;
            for e in &summary.entries {
                println!(
                    "{}.{}: {} iovecs, coverage {}/{}",
                    e.name, e.variant, e.dcis_len, e.coverage, e.instructions
                );
            }
            let empty: Vec<String> = summary
                .entries
                .iter()
                .filter(|e| e.dcis_len == 0)
                .map(|e| format!("{}.{}", e.name, e.variant))
                .collect();
            println!(
                "explored {} functions in {:.2}s ({} without any accepting iovec{}{})",
                summary.entries.len(),
                summary.elapsed_seconds,
                empty.len(),
                if empty.is_empty() { "" } else { ": " },
                empty.join(", ")
            );
        }
        Command::Coalesce {
            corpus,
            stores,
            out,
            translate,
            common,
        } => {
            let file = load_file_config(&common)?;
            let opts = resolve(&common, &file);
            let summary = cmd_coalesce(&corpus, &stores, &out, translate, opts)?;
            println!(
                "coalesced {} functions x {} iovecs into {} classes ({} interior nodes) \
                 in {:.2}s; {} unclassifiable",
                summary.functions,
                summary.columns,
                summary.classes,
                summary.interior_nodes,
                summary.elapsed_seconds,
                summary.unclassifiable.len()
            );
            for key in &summary.unclassifiable {
                println!("unclassifiable: {key}");
            }
            println!("wrote {}", out.display());
        }
        Command::Identify {
            tree,
            corpus,
            out,
            translate,
            common,
        } => {
            let file = load_file_config(&common)?;
            let opts = resolve(&common, &file);
            let summary = cmd_identify(&tree, &corpus, &out, translate, opts)?;
            println!(
                "identified {} functions ({} unknown) in {:.2}s; wrote {}",
                summary.identified + summary.unknown,
                summary.unknown,
                summary.elapsed_seconds,
                out.display()
            );
        }
        Command::Eval {
            labels,
            tree,
            truth,
            out,
            common: _,
        } => {
            let report = cmd_eval(&labels, truth.as_deref(), &tree, out.as_deref())?;
            println!("macro F1: {:.4}  ({})", report.macro_f1, report.f1_averaging);
            println!(
                "classified functions N = {}, classes = {}, mean class size = {:.3}",
                report.n_classified, report.class_count, report.mean_class_size
            );
            let histogram: Vec<String> = report
                .histogram
                .iter()
                .filter(|b| b.count > 0)
                .map(|b| format!("{}:{}", b.bucket, b.count))
                .collect();
            println!("class-size histogram: {}", histogram.join(" "));
            if !report.unclassifiable.is_empty() {
                let names: Vec<String> = report
                    .unclassifiable
                    .iter()
                    .map(ToString::to_string)
                    .collect();
                println!("unclassifiable: {}", names.join(", "));
            }
            for p in report
                .per_function
                .iter()
                .filter(|p| p.assigned != p.ground_truth)
            {
                println!(
                    "mismatch {}.{}: assigned {}, ground truth {}",
                    p.name, p.variant, p.assigned, p.ground_truth
                );
            }
            if let Some(path) = out {
                println!("wrote {}", path.display());
            }
        }
        Command::Translate {
            store,
            to,
            out,
            common: _,
        } => {
            let n = cmd_translate(&store, to, &out)?;
            println!("translated {n} iovecs to {to}; wrote {}", out.display());
        }
    }
    Ok(())
}
