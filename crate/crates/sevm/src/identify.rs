//! Labeling unknown functions by decision-tree traversal.
//!
//! From the root, the node's IOVec is given to the function: accepted takes
//! the accept branch, anything else the reject branch. At the leaf one more
//! IOVec confirms the match; an unconfirmed function is labeled unknown.
//! Identifications of distinct functions are independent and parallel.

use serde::{Deserialize, Serialize};

use crate::coalesce::{DecisionTree, FunctionKey, NodeIoVec, TreeNode};
use crate::iovec::{run_iovec, translate, ExecutionOutcome, IovecError};
use crate::vm::FunctionImage;

/// One traversal step: which stored IOVec ran, what happened, which branch
/// was taken.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct PathStep {
    pub owner: FunctionKey,
    pub ordinal: usize,
    pub outcome: ExecutionOutcome,
    pub branch: bool,
}

/// Traversal result plus enough diagnostics to read why: the full path, the
/// confirmation outcome, and how many IOVecs the function accepted in total
/// (a function accepting none implements wholly new behavior).
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Identification {
    /// Equivalence class of the confirmed leaf, or None for unknown.
    pub class: Option<Vec<FunctionKey>>,
    pub path: Vec<PathStep>,
    /// Confirmation step at the leaf, absent only on an empty tree.
    pub confirmation: Option<PathStep>,
    pub accepted_count: usize,
    /// IOVec executions spent; at most tree depth + 1.
    pub executions: usize,
}

fn run_node(
    function: &FunctionImage,
    node: &NodeIoVec,
    budget: u64,
) -> Result<ExecutionOutcome, IovecError> {
    if function.dialect == node.iovec.dialect {
        run_iovec(function, &node.iovec, budget)
    } else {
        run_iovec(function, &translate(&node.iovec, function.dialect), budget)
    }
}

/// Walks `function` down the tree, translating node IOVecs on the fly when
/// the dialects differ, and returns the label with diagnostics.
pub fn identify(
    function: &FunctionImage,
    tree: &DecisionTree,
    budget: u64,
) -> Result<Identification, IovecError> {
    let mut path = Vec::new();
    let mut accepted = 0usize;
    let mut executions = 0usize;

    let Some(mut node) = tree.root.as_ref() else {
        return Ok(Identification {
            class: None,
            path,
            confirmation: None,
            accepted_count: 0,
            executions: 0,
        });
    };

    loop {
        match node {
            TreeNode::Interior {
                test,
                accept,
                reject,
            } => {
                let outcome = run_node(function, test, budget)?;
                executions += 1;
                let took_accept = outcome.is_accept();
                accepted += took_accept as usize;
                path.push(PathStep {
                    owner: test.owner.clone(),
                    ordinal: test.ordinal,
                    outcome,
                    branch: took_accept,
                });
                node = if took_accept { accept } else { reject };
            }
            TreeNode::Leaf {
                class,
                confirmation,
            } => {
                let outcome = run_node(function, confirmation, budget)?;
                executions += 1;
                let confirmed = outcome.is_accept();
                accepted += confirmed as usize;
                let step = PathStep {
                    owner: confirmation.owner.clone(),
                    ordinal: confirmation.ordinal,
                    outcome,
                    branch: confirmed,
                };
                return Ok(Identification {
                    class: confirmed.then(|| class.clone()),
                    path,
                    confirmation: Some(step),
                    accepted_count: accepted,
                    executions,
                });
            }
        }
    }
}
