use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SpnError;

/// Identifies one categorical input variable of a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VariableId(pub usize);

/// Index of a node inside a graph's node arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "X{}", self.0)
    }
}

/// Owned description of a node, used when assembling a graph.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Indicator { variable: VariableId, value: usize },
    Sum { children: Vec<NodeId>, weights: Vec<f64> },
    Product { children: Vec<NodeId> },
}

/// Borrowed view of a node stored in a graph.
#[derive(Clone, Copy, Debug)]
pub enum NodeRef<'a> {
    Indicator { variable: VariableId, value: usize },
    Sum { children: &'a [NodeId], weights: &'a [f64] },
    Product { children: &'a [NodeId] },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Kind {
    Indicator { variable: u32, value: u32 },
    Sum,
    Product,
}

/// Incrementally assembles a graph. Nodes receive consecutive ids.
#[derive(Clone, Debug)]
pub struct SpnBuilder {
    cardinalities: Vec<usize>,
    nodes: Vec<Node>,
}

impl SpnBuilder {
    pub fn new(cardinalities: Vec<usize>) -> Self {
        SpnBuilder { cardinalities, nodes: Vec::new() }
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add(&mut self, node: Node) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(node);
        id
    }

    pub fn indicator(&mut self, variable: VariableId, value: usize) -> NodeId {
        self.add(Node::Indicator { variable, value })
    }

    pub fn product(&mut self, children: Vec<NodeId>) -> NodeId {
        self.add(Node::Product { children })
    }

    pub fn sum(&mut self, children: Vec<NodeId>, weights: Vec<f64>) -> NodeId {
        self.add(Node::Sum { children, weights })
    }

    /// Sum with equal weights over `children`.
    pub fn uniform_sum(&mut self, children: Vec<NodeId>) -> NodeId {
        let w = 1.0 / children.len().max(1) as f64;
        let weights = vec![w; children.len()];
        self.sum(children, weights)
    }

    pub fn build(self, root: NodeId) -> Result<SpnGraph, SpnError> {
        SpnGraph::from_nodes(self.cardinalities, self.nodes, root)
    }
}

/// A sum-product network stored as an index-addressed node arena.
///
/// Children of every node are kept in one flat edge array; each sum edge
/// carries its weight at the same position in `weights`. The graph is
/// immutable during inference and can be shared between threads.
#[derive(Clone, Debug)]
pub struct SpnGraph {
    cardinalities: Vec<usize>,
    kinds: Vec<Kind>,
    offsets: Vec<usize>,
    edges: Vec<NodeId>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    topo: Vec<NodeId>,
    root: NodeId,
    scopes: ScopeTable,
}

impl SpnGraph {
    /// Checks references, indicator ranges, acyclicity and reachability,
    /// then caches the topological order and node scopes.
    pub fn from_nodes(
        cardinalities: Vec<usize>,
        nodes: Vec<Node>,
        root: NodeId,
    ) -> Result<SpnGraph, SpnError> {
        let n = nodes.len();
        if root.index() >= n {
            return Err(SpnError::DanglingReference { node: root, child: root });
        }
        for (v, &c) in cardinalities.iter().enumerate() {
            if c == 0 {
                return Err(SpnError::InvalidCardinality { variable: VariableId(v), cardinality: c });
            }
        }
        let mut kinds = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n + 1);
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for (i, node) in nodes.into_iter().enumerate() {
            let id = NodeId(i as u32);
            match node {
                Node::Indicator { variable, value } => {
                    let card = cardinalities.get(variable.0).copied().unwrap_or(0);
                    if value >= card {
                        return Err(SpnError::InvalidIndicator { node: id, variable, value });
                    }
                    kinds.push(Kind::Indicator { variable: variable.0 as u32, value: value as u32 });
                }
                Node::Sum { children, weights: w } => {
                    if children.is_empty() {
                        return Err(SpnError::EmptyNode(id));
                    }
                    if children.len() != w.len() {
                        return Err(SpnError::WeightCountMismatch { node: id });
                    }
                    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                        return Err(SpnError::InvalidWeight { node: id });
                    }
                    check_children(id, &children, n)?;
                    edges.extend_from_slice(&children);
                    weights.extend_from_slice(&w);
                    kinds.push(Kind::Sum);
                }
                Node::Product { children } => {
                    if children.is_empty() {
                        return Err(SpnError::EmptyNode(id));
                    }
                    check_children(id, &children, n)?;
                    weights.extend(std::iter::repeat(1.0).take(children.len()));
                    edges.extend_from_slice(&children);
                    kinds.push(Kind::Product);
                }
            }
            offsets.push(edges.len());
        }

        let topo = topological_order(&kinds, &offsets, &edges)?;
        check_reachable(root, &offsets, &edges, n)?;
        let scopes = ScopeTable::compute(cardinalities.len(), &kinds, &offsets, &edges, &topo);
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(SpnGraph { cardinalities, kinds, offsets, edges, weights, log_weights, topo, root, scopes })
    }

    pub fn num_vars(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.kinds.len()
    }

    /// Number of sum edges (weights).
    pub fn num_sum_edges(&self) -> usize {
        self.sum_nodes().map(|s| self.offsets[s.index() + 1] - self.offsets[s.index()]).sum()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn cardinality(&self, var: VariableId) -> usize {
        self.cardinalities[var.0]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Children before parents.
    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo
    }

    pub fn node(&self, id: NodeId) -> NodeRef<'_> {
        let range = self.offsets[id.index()]..self.offsets[id.index() + 1];
        match self.kinds[id.index()] {
            Kind::Indicator { variable, value } => NodeRef::Indicator {
                variable: VariableId(variable as usize),
                value: value as usize,
            },
            Kind::Sum => NodeRef::Sum { children: &self.edges[range.clone()], weights: &self.weights[range] },
            Kind::Product => NodeRef::Product { children: &self.edges[range] },
        }
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.kinds.len() as u32).map(NodeId)
    }

    pub fn sum_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&id| self.kinds[id.index()] == Kind::Sum)
    }

    pub fn is_sum(&self, id: NodeId) -> bool {
        self.kinds[id.index()] == Kind::Sum
    }

    pub fn count_kinds(&self) -> NodeCounts {
        let mut c = NodeCounts::default();
        for k in &self.kinds {
            match k {
                Kind::Indicator { .. } => c.indicators += 1,
                Kind::Sum => c.sums += 1,
                Kind::Product => c.products += 1,
            }
        }
        c.edges = self.edges.len();
        c
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.edges[self.edge_range(id)]
    }

    /// Positions of `id`'s outgoing edges in the flat edge/weight arrays.
    #[inline]
    pub fn edge_range(&self, id: NodeId) -> std::ops::Range<usize> {
        self.offsets[id.index()]..self.offsets[id.index() + 1]
    }

    /// Per-edge weights; entries belonging to product edges are 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub(crate) fn kinds(&self) -> &[Kind] {
        &self.kinds
    }

    /// Replace every sum weight at once. `weights` is indexed like the flat
    /// edge array; product entries are ignored and reset to 1.
    pub fn set_weights(&mut self, mut weights: Vec<f64>) -> Result<(), SpnError> {
        if weights.len() != self.edges.len() {
            return Err(SpnError::WeightCountMismatch { node: self.root });
        }
        for id in self.node_ids() {
            let r = self.edge_range(id);
            match self.kinds[id.index()] {
                Kind::Sum => {
                    if weights[r].iter().any(|w| !w.is_finite() || *w < 0.0) {
                        return Err(SpnError::InvalidWeight { node: id });
                    }
                }
                Kind::Product => weights[r].iter_mut().for_each(|w| *w = 1.0),
                Kind::Indicator { .. } => {}
            }
        }
        self.log_weights = weights.iter().map(|w| w.ln()).collect();
        self.weights = weights;
        Ok(())
    }

    /// Rescale each sum's weights to sum to one.
    pub fn normalize_weights(&self) -> Result<SpnGraph, SpnError> {
        let mut weights = self.weights.clone();
        for id in self.sum_nodes() {
            let ws = &mut weights[self.edge_range(id)];
            let total: f64 = ws.iter().sum();
            if total <= 0.0 {
                return Err(SpnError::DegenerateSum(id));
            }
            ws.iter_mut().for_each(|w| *w /= total);
        }
        let mut out = self.clone();
        out.set_weights(weights)?;
        Ok(out)
    }

    /// Every sum's weights add up to one within `tol`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        self.sum_nodes()
            .all(|id| (self.weights[self.edge_range(id)].iter().sum::<f64>() - 1.0).abs() <= tol)
    }

    /// Variables in the scope of `id`, ascending.
    pub fn scope(&self, id: NodeId) -> Vec<VariableId> {
        self.scopes.vars(id.index())
    }

    pub(crate) fn scope_words(&self, id: NodeId) -> &[u64] {
        self.scopes.words(id.index())
    }

    /// Report every completeness and decomposability violation.
    pub fn validate(&self) -> ValidityReport {
        let mut violations = Vec::new();
        for id in self.node_ids() {
            let children = self.children(id);
            match self.kinds[id.index()] {
                Kind::Sum => {
                    let first = children[0];
                    for &c in &children[1..] {
                        if self.scope_words(c) != self.scope_words(first) {
                            violations.push(Violation::Completeness {
                                sum: id,
                                reference_child: first,
                                reference_scope: self.scope(first),
                                child: c,
                                child_scope: self.scope(c),
                            });
                        }
                    }
                }
                Kind::Product => {
                    let mut seen = vec![0u64; self.scopes.stride];
                    let mut overlap = vec![0u64; self.scopes.stride];
                    for &c in children {
                        for ((s, o), w) in seen.iter_mut().zip(overlap.iter_mut()).zip(self.scope_words(c)) {
                            *o |= *s & *w;
                            *s |= *w;
                        }
                    }
                    if overlap.iter().any(|&w| w != 0) {
                        violations.push(Violation::Decomposability {
                            product: id,
                            overlapping: words_to_vars(&overlap),
                        });
                    }
                }
                Kind::Indicator { .. } => {}
            }
        }
        ValidityReport { violations }
    }

    /// SHA-256 over the bit patterns of all edge weights, hex encoded.
    pub fn weight_hash(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.weights {
            h.update(w.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NodeCounts {
    pub indicators: usize,
    pub sums: usize,
    pub products: usize,
    pub edges: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Completeness {
        sum: NodeId,
        reference_child: NodeId,
        reference_scope: Vec<VariableId>,
        child: NodeId,
        child_scope: Vec<VariableId>,
    },
    Decomposability { product: NodeId, overlapping: Vec<VariableId> },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_children(id: NodeId, children: &[NodeId], n: usize) -> Result<(), SpnError> {
    match children.iter().find(|c| c.index() >= n) {
        Some(&child) => Err(SpnError::DanglingReference { node: id, child }),
        None => Ok(()),
    }
}

fn topological_order(kinds: &[Kind], offsets: &[usize], edges: &[NodeId]) -> Result<Vec<NodeId>, SpnError> {
    let n = kinds.len();
    let ordered = (0..n).all(|i| edges[offsets[i]..offsets[i + 1]].iter().all(|c| c.index() < i));
    if ordered {
        return Ok((0..n as u32).map(NodeId).collect());
    }
    // Kahn's algorithm on the child -> parent direction.
    let mut pending: Vec<usize> = (0..n).map(|i| offsets[i + 1] - offsets[i]).collect();
    let mut parent_count = vec![0usize; n + 1];
    for c in edges {
        parent_count[c.index() + 1] += 1;
    }
    for i in 0..n {
        parent_count[i + 1] += parent_count[i];
    }
    let mut parents = vec![0u32; edges.len()];
    let mut fill = parent_count.clone();
    for p in 0..n {
        for c in &edges[offsets[p]..offsets[p + 1]] {
            parents[fill[c.index()]] = p as u32;
            fill[c.index()] += 1;
        }
    }
    let mut queue: std::collections::VecDeque<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = queue.pop_front() {
        order.push(NodeId(i as u32));
        for &p in &parents[parent_count[i]..parent_count[i + 1]] {
            let p = p as usize;
            pending[p] -= 1;
            if pending[p] == 0 {
                queue.push_back(p);
            }
        }
    }
    if order.len() != n {
        return Err(SpnError::CyclicGraph);
    }
    Ok(order)
}

fn check_reachable(root: NodeId, offsets: &[usize], edges: &[NodeId], n: usize) -> Result<(), SpnError> {
    let mut seen = vec![false; n];
    let mut stack = vec![root];
    seen[root.index()] = true;
    while let Some(id) = stack.pop() {
        for &c in &edges[offsets[id.index()]..offsets[id.index() + 1]] {
            if !seen[c.index()] {
                seen[c.index()] = true;
                stack.push(c);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(i) => Err(SpnError::UnreachableNode(NodeId(i as u32))),
        None => Ok(()),
    }
}

/// Per-node variable sets as fixed-stride bit rows.
#[derive(Clone, Debug)]
struct ScopeTable {
    stride: usize,
    words: Vec<u64>,
}

impl ScopeTable {
    fn compute(num_vars: usize, kinds: &[Kind], offsets: &[usize], edges: &[NodeId], topo: &[NodeId]) -> Self {
        let stride = num_vars.div_ceil(64).max(1);
        let mut words = vec![0u64; stride * kinds.len()];
        for &id in topo {
            let i = id.index();
            match kinds[i] {
                Kind::Indicator { variable, .. } => {
                    let v = variable as usize;
                    words[i * stride + v / 64] |= 1 << (v % 64);
                }
                _ => {
                    for c in &edges[offsets[i]..offsets[i + 1]] {
                        let c = c.index();
                        for k in 0..stride {
                            words[i * stride + k] |= words[c * stride + k];
                        }
                    }
                }
            }
        }
        ScopeTable { stride, words }
    }

    fn words(&self, i: usize) -> &[u64] {
        &self.words[i * self.stride..(i + 1) * self.stride]
    }

    fn vars(&self, i: usize) -> Vec<VariableId> {
        words_to_vars(self.words(i))
    }
}

fn words_to_vars(words: &[u64]) -> Vec<VariableId> {
    let mut out = Vec::new();
    for (k, &w) in words.iter().enumerate() {
        let mut w = w;
        while w != 0 {
            let b = w.trailing_zeros() as usize;
            out.push(VariableId(k * 64 + b));
            w &= w - 1;
        }
    }
    out
}

impl<'a> NodeRef<'a> {
    /// Weights of a sum node; empty for other kinds.
    pub fn weights(&self) -> &'a [f64] {
        match self {
            NodeRef::Sum { weights, .. } => weights,
            _ => &[],
        }
    }

    pub fn children(&self) -> &'a [NodeId] {
        match self {
            NodeRef::Sum { children, .. } | NodeRef::Product { children } => children,
            NodeRef::Indicator { .. } => &[],
        }
    }
}
