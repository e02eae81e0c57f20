//! Sum-product networks over categorical variables.
//!
//! Networks are rooted DAGs of weighted sums, products and indicator
//! leaves. All inference runs in natural-log space: products add child
//! values and sums combine them with log-sum-exp (or max, for the
//! max-circuit used by MPE). `f64::NEG_INFINITY` stands for probability 0
//! and propagates exactly.

mod evidence;
mod graph;
mod inference;
mod text;

pub use evidence::{Assignment, Evidence};
pub use graph::{
    Node, NodeCounts, NodeId, NodeRef, SpnBuilder, SpnGraph, ValidityReport, VariableId, Violation,
};
pub(crate) use graph::Kind;
pub use inference::{log_sum_exp, MpeResult, SumSelectionTrace, Workspace};
pub use text::{read_spn, write_spn};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpnError {
    #[error("graph contains a cycle")]
    CyclicGraph,
    #[error("node {node} references missing node {child}")]
    DanglingReference { node: NodeId, child: NodeId },
    #[error("node {0} is not reachable from the root")]
    UnreachableNode(NodeId),
    #[error("node {0} has no children")]
    EmptyNode(NodeId),
    #[error("variable {variable} has cardinality {cardinality}, need at least 1")]
    InvalidCardinality { variable: VariableId, cardinality: usize },
    #[error("indicator {node} uses value {value} outside the range of {variable}")]
    InvalidIndicator { node: NodeId, variable: VariableId, value: usize },
    #[error("weight count does not match child count at {node}")]
    WeightCountMismatch { node: NodeId },
    #[error("sum {node} has a negative or non-finite weight")]
    InvalidWeight { node: NodeId },
    #[error("all weights of sum {0} are zero")]
    DegenerateSum(NodeId),
    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
