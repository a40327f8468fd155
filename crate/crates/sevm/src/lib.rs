//! Semantic function identification by observed program-state changes.
//!
//! Functions are fingerprinted by IOVecs: reproducible input program states
//! paired with the state changes they cause in a deterministic sandbox VM.
//! A coverage-guided fuzzing loop discovers each function's distinguishing
//! IOVec set, a coalescing phase arranges those sets into a binary decision
//! tree, and unknown functions are labeled by walking the tree and running
//! the IOVec at each node.

pub mod coalesce;
pub mod corpus;
pub mod eval;
pub mod explore;
pub mod identify;
pub mod iovec;
pub mod pipeline;
pub mod taint;
pub mod vm;
