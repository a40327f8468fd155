//! The one-time training phase: run every function against every stored
//! IOVec to get a full accept/reject ground truth, then arrange the columns
//! into a binary decision tree with IOVecs at interior nodes and equivalence
//! classes of functions at the leaves.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iovec::{
    run_iovec, store::to_canonical_json, translate, ExecutionOutcome, FunctionProfile, IoVec,
    IovecError,
};
use crate::vm::Dialect;

/// Identity of a training function: corpus name plus variant tag.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct FunctionKey {
    pub name: String,
    pub variant: String,
}

impl FunctionKey {
    pub fn of(record: &crate::corpus::FunctionRecord) -> Self {
        FunctionKey {
            name: record.name.clone(),
            variant: record.variant.clone(),
        }
    }
}

impl std::fmt::Display for FunctionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.name, self.variant)
    }
}

/// One matrix column: an IOVec and which row's DCIS it came from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixColumn {
    /// Row ordinal of the owning function.
    pub owner: usize,
    /// Position within the owner's DCIS.
    pub ordinal: usize,
    pub iovec: IoVec,
}

/// Complete accept/reject ground truth: every classifiable function (row)
/// evaluated against every stored IOVec (column).
#[derive(Clone, Debug)]
pub struct AcceptMatrix {
    pub dialect: Dialect,
    pub functions: Vec<FunctionKey>,
    pub columns: Vec<MatrixColumn>,
    /// `cells[row][column]` is true when the row's function accepts the
    /// column's IOVec.
    pub cells: Vec<Vec<bool>>,
    /// Functions with an empty DCIS, excluded from rows and reported aside.
    pub unclassifiable: Vec<FunctionKey>,
}

#[derive(Debug, Error)]
pub enum CoalesceError {
    #[error("profiles mix dialects {0} and {1}; translate the stores to one dialect first")]
    MixedDialects(Dialect, Dialect),
    #[error(transparent)]
    Iovec(#[from] IovecError),
}

/// Evaluates the full matrix. Cells are independent executions and run in
/// parallel; results do not depend on evaluation order. Columns are carried
/// into each row's dialect on the fly, so rows may mix dialects while the
/// stored columns must already share one.
pub fn build_matrix(
    profiles: &[FunctionProfile],
    budget: u64,
) -> Result<AcceptMatrix, CoalesceError> {
    let mut dialect = None;
    for profile in profiles {
        for iovec in &profile.dcis {
            match dialect {
                None => dialect = Some(iovec.dialect),
                Some(d) if d != iovec.dialect => {
                    return Err(CoalesceError::MixedDialects(d, iovec.dialect))
                }
                _ => {}
            }
        }
    }
    let dialect = dialect.unwrap_or(Dialect::Xa);

    let classifiable: Vec<&FunctionProfile> =
        profiles.iter().filter(|p| !p.dcis.is_empty()).collect();
    let unclassifiable = profiles
        .iter()
        .filter(|p| p.dcis.is_empty())
        .map(|p| FunctionKey::of(&p.record))
        .collect();

    let mut columns = Vec::new();
    for (owner, profile) in classifiable.iter().enumerate() {
        for (ordinal, iovec) in profile.dcis.iter().enumerate() {
            columns.push(MatrixColumn {
                owner,
                ordinal,
                iovec: iovec.clone(),
            });
        }
    }

    let cells = classifiable
        .par_iter()
        .map(|profile| {
            let image = &profile.record.image;
            columns
                .iter()
                .map(|column| {
                    let outcome = if image.dialect == column.iovec.dialect {
                        run_iovec(image, &column.iovec, budget)
                    } else {
                        run_iovec(image, &translate(&column.iovec, image.dialect), budget)
                    };
                    outcome.map(ExecutionOutcome::is_accept)
                })
                .collect::<Result<Vec<bool>, IovecError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(AcceptMatrix {
        dialect,
        functions: classifiable.iter().map(|p| FunctionKey::of(&p.record)).collect(),
        columns,
        cells,
        unclassifiable,
    })
}

/// An IOVec embedded in the tree, with its training provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeIoVec {
    pub owner: FunctionKey,
    pub ordinal: usize,
    pub iovec: IoVec,
}

/// Binary decision tree node: IOVecs inside, equivalence classes at leaves.
/// Serialized with the node kind as the outer key (`{"interior": ...}` or
/// `{"leaf": ...}`).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Interior {
        test: NodeIoVec,
        accept: Box<TreeNode>,
        reject: Box<TreeNode>,
    },
    Leaf {
        class: Vec<FunctionKey>,
        confirmation: NodeIoVec,
    },
}

/// The saved artifact of the coalescing phase; self-contained, with every
/// IOVec embedded by value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecisionTree {
    pub dialect: Dialect,
    pub corpus_hash: String,
    pub unclassifiable: Vec<FunctionKey>,
    pub root: Option<TreeNode>,
}

impl DecisionTree {
    pub fn leaves(&self) -> Vec<(&Vec<FunctionKey>, &NodeIoVec)> {
        let mut out = Vec::new();
        fn walk<'t>(node: &'t TreeNode, out: &mut Vec<(&'t Vec<FunctionKey>, &'t NodeIoVec)>) {
            match node {
                TreeNode::Leaf {
                    class,
                    confirmation,
                } => out.push((class, confirmation)),
                TreeNode::Interior { accept, reject, .. } => {
                    walk(accept, out);
                    walk(reject, out);
                }
            }
        }
        if let Some(root) = &self.root {
            walk(root, &mut out);
        }
        out
    }

    /// Names of every function classified in some leaf.
    pub fn classified_names(&self) -> BTreeSet<String> {
        self.leaves()
            .into_iter()
            .flat_map(|(class, _)| class.iter().map(|k| k.name.clone()))
            .collect()
    }

    pub fn interior_count(&self) -> usize {
        fn count(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Interior { accept, reject, .. } => 1 + count(accept) + count(reject),
            }
        }
        self.root.as_ref().map_or(0, count)
    }

    /// Interior nodes on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn depth(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Interior { accept, reject, .. } => 1 + depth(accept).max(depth(reject)),
            }
        }
        self.root.as_ref().map_or(0, depth)
    }
}

/// Greedy recursive induction over the matrix: at each node take the column
/// splitting the remaining functions most evenly (ties to the lowest
/// `(owner, ordinal)`); a set no column can split becomes a leaf, its
/// functions a (potential) equivalence class. Each leaf gets a confirmation
/// IOVec: the widest-coverage DCIS member of the class not already used on
/// the path, falling back to the last path IOVec the class accepted.
pub fn build_tree(matrix: &AcceptMatrix, corpus_hash: String) -> DecisionTree {
    let root = if matrix.functions.is_empty() {
        None
    } else {
        let rows: Vec<usize> = (0..matrix.functions.len()).collect();
        Some(split(matrix, &rows, &mut Vec::new()))
    };
    DecisionTree {
        dialect: matrix.dialect,
        corpus_hash,
        unclassifiable: matrix.unclassifiable.clone(),
        root,
    }
}

/// Path entries carry the column index and the branch direction taken.
fn split(matrix: &AcceptMatrix, rows: &[usize], path: &mut Vec<(usize, bool)>) -> TreeNode {
    let mut best: Option<(usize, usize)> = None; // (column, balance)
    for (index, _) in matrix.columns.iter().enumerate() {
        let accepts = rows.iter().filter(|&&r| matrix.cells[r][index]).count();
        let rejects = rows.len() - accepts;
        if accepts == 0 || rejects == 0 {
            continue;
        }
        let balance = accepts.abs_diff(rejects);
        // Strict < keeps the earliest column on ties, and columns are laid
        // out in (owner, ordinal) order.
        if best.is_none_or(|(_, b)| balance < b) {
            best = Some((index, balance));
        }
    }

    match best {
        None => {
            let class: Vec<FunctionKey> = rows
                .iter()
                .map(|&r| matrix.functions[r].clone())
                .collect();
            let confirmation = pick_confirmation(matrix, rows, path);
            TreeNode::Leaf {
                class,
                confirmation,
            }
        }
        Some((column, _)) => {
            let (accept_rows, reject_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| matrix.cells[r][column]);
            path.push((column, true));
            let accept = Box::new(split(matrix, &accept_rows, path));
            path.pop();
            path.push((column, false));
            let reject = Box::new(split(matrix, &reject_rows, path));
            path.pop();
            TreeNode::Interior {
                test: node_iovec(matrix, column),
                accept,
                reject,
            }
        }
    }
}

fn node_iovec(matrix: &AcceptMatrix, column: usize) -> NodeIoVec {
    let c = &matrix.columns[column];
    NodeIoVec {
        owner: matrix.functions[c.owner].clone(),
        ordinal: c.ordinal,
        iovec: c.iovec.clone(),
    }
}

fn pick_confirmation(
    matrix: &AcceptMatrix,
    rows: &[usize],
    path: &[(usize, bool)],
) -> NodeIoVec {
    let on_path: BTreeSet<usize> = path.iter().map(|&(c, _)| c).collect();
    let owners: BTreeSet<usize> = rows.iter().copied().collect();

    // Widest-coverage class-owned column not already on the path. Columns
    // are in (owner, ordinal) order, so strict > keeps the lowest on ties.
    let mut best: Option<usize> = None;
    for (index, column) in matrix.columns.iter().enumerate() {
        if !owners.contains(&column.owner) || on_path.contains(&index) {
            continue;
        }
        if best.is_none_or(|b| {
            column.iovec.coverage.len() > matrix.columns[b].iovec.coverage.len()
        }) {
            best = Some(index);
        }
    }
    // Otherwise the last path IOVec this class accepted. For any class with
    // a nonempty DCIS such a node exists whenever the first option is empty:
    // the members accept their own columns, which then all sit on the path.
    let chosen = best.unwrap_or_else(|| {
        path.iter()
            .rev()
            .find(|&&(_, took_accept)| took_accept)
            .map(|&(c, _)| c)
            .expect("leaf class accepts at least one path column")
    });
    node_iovec(matrix, chosen)
}

/// Groups rows by identical accept/reject patterns: the partition the leaf
/// classes must reproduce.
pub fn row_equality_partition(matrix: &AcceptMatrix) -> Vec<Vec<FunctionKey>> {
    let mut groups: Vec<(Vec<bool>, Vec<FunctionKey>)> = Vec::new();
    for (row, key) in matrix.functions.iter().enumerate() {
        match groups.iter_mut().find(|(cells, _)| *cells == matrix.cells[row]) {
            Some((_, members)) => members.push(key.clone()),
            None => groups.push((matrix.cells[row].clone(), vec![key.clone()])),
        }
    }
    groups.into_iter().map(|(_, members)| members).collect()
}

/// `tree.json` IO (canonical JSON, embedded IOVecs).
pub fn write_tree(path: &Path, tree: &DecisionTree) -> Result<(), TreeIoError> {
    let text = to_canonical_json(tree).map_err(|source| TreeIoError::Encode { source })?;
    fs::write(path, text + "\n").map_err(|source| TreeIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_tree(path: &Path) -> Result<DecisionTree, TreeIoError> {
    let text = fs::read_to_string(path).map_err(|source| TreeIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| TreeIoError::Decode {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Error)]
pub enum TreeIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("tree serialization failed: {source}")]
    Encode { source: serde_json::Error },
}
