use std::collections::BTreeMap;

use super::{Assignment, Evidence, Kind, NodeId, SpnError, SpnGraph, VariableId};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Numerically stable `log(Σ exp(x))`; empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(NEG_INF, f64::max);
    if m == NEG_INF {
        return NEG_INF;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Reusable per-pass buffers. One workspace per thread.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    values: Vec<f64>,
    state: Vec<u8>,
    visited: Vec<bool>,
    stack: Vec<NodeId>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Log values of every node from the most recent upward pass.
    /// Nodes that could not influence the root hold `-inf`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SumRule {
    LogSumExp,
    Max,
}

const SKIP: u8 = 0;
const LIVE: u8 = 1;
const DEAD: u8 = 2;

/// Result of MPE inference: the chosen query values and the max-circuit
/// log-value of the completed evidence.
#[derive(Clone, Debug, PartialEq)]
pub struct MpeResult {
    pub assignment: Assignment,
    pub log_value: f64,
}

/// Sum nodes reached by a max-downward pass and the child each selected.
#[derive(Clone, Debug, PartialEq)]
pub struct SumSelectionTrace {
    /// Root log-value of the upward pass.
    pub log_value: f64,
    /// `(sum node, child position)` pairs, one per reached sum.
    pub selections: Vec<(NodeId, usize)>,
}

impl SumSelectionTrace {
    /// Selected edges as positions in the graph's flat weight array.
    pub fn edge_indices<'a>(&'a self, graph: &'a SpnGraph) -> impl Iterator<Item = usize> + 'a {
        self.selections.iter().map(move |&(s, k)| graph.edge_range(s).start + k)
    }
}

#[inline]
fn indicator_log(evidence: &Evidence, variable: u32, value: u32) -> f64 {
    match evidence.values()[variable as usize] {
        Some(x) if x != value as usize => NEG_INF,
        _ => 0.0,
    }
}

impl SpnGraph {
    /// Log-probability of `evidence` under the sum-circuit.
    pub fn evaluate(&self, evidence: &Evidence) -> Result<f64, SpnError> {
        self.evaluate_with(evidence, &mut Workspace::new())
    }

    pub fn evaluate_with(&self, evidence: &Evidence, ws: &mut Workspace) -> Result<f64, SpnError> {
        evidence.check(self)?;
        Ok(self.upward(evidence, SumRule::LogSumExp, ws))
    }

    /// Root log-value of the max-circuit (sums replaced by weighted max).
    pub fn max_value(&self, evidence: &Evidence) -> Result<f64, SpnError> {
        evidence.check(self)?;
        Ok(self.upward(evidence, SumRule::Max, &mut Workspace::new()))
    }

    /// Most probable values of `query` given `evidence`.
    ///
    /// Query variables must be marginalized in `evidence`. Ties at sum
    /// nodes go to the lowest child position.
    pub fn mpe_infer(&self, evidence: &Evidence, query: &[VariableId]) -> Result<MpeResult, SpnError> {
        self.mpe_infer_with(evidence, query, &mut Workspace::new())
    }

    pub fn mpe_infer_with(
        &self,
        evidence: &Evidence,
        query: &[VariableId],
        ws: &mut Workspace,
    ) -> Result<MpeResult, SpnError> {
        evidence.check(self)?;
        if let Some(v) = query.iter().find(|&&v| evidence.is_observed(v)) {
            return Err(SpnError::InvalidEvidence(format!("query variable {v} is observed")));
        }
        let log_value = self.upward(evidence, SumRule::Max, ws);
        if query.is_empty() {
            return Ok(MpeResult { assignment: BTreeMap::new(), log_value });
        }
        let mut chosen = vec![None; self.num_vars()];
        self.downward(ws, |_, _| {}, |var, value| chosen[var] = Some(value));
        let mut assignment = BTreeMap::new();
        for &v in query {
            let value = chosen[v.0].ok_or_else(|| {
                SpnError::InvalidEvidence(format!("query variable {v} is outside the root scope"))
            })?;
            assignment.insert(v, value);
        }
        Ok(MpeResult { assignment, log_value })
    }

    /// Sum-circuit upward pass followed by a max-downward selection pass.
    /// Evidence with probability zero yields an empty selection list.
    pub fn augmented_mpe_pass(&self, evidence: &Evidence) -> Result<SumSelectionTrace, SpnError> {
        self.augmented_mpe_pass_with(evidence, &mut Workspace::new())
    }

    pub fn augmented_mpe_pass_with(
        &self,
        evidence: &Evidence,
        ws: &mut Workspace,
    ) -> Result<SumSelectionTrace, SpnError> {
        evidence.check(self)?;
        let log_value = self.upward(evidence, SumRule::LogSumExp, ws);
        let mut selections = Vec::new();
        if log_value > NEG_INF {
            self.downward(ws, |s, k| selections.push((s, k)), |_, _| {});
        }
        Ok(SumSelectionTrace { log_value, selections })
    }

    /// Marks the nodes whose values can reach the root, skipping the
    /// subgraphs under products with a zero indicator child, then
    /// evaluates the marked nodes in topological order.
    fn upward(&self, evidence: &Evidence, rule: SumRule, ws: &mut Workspace) -> f64 {
        let n = self.num_nodes();
        let kinds = self.kinds();
        ws.state.clear();
        ws.state.resize(n, SKIP);
        ws.values.clear();
        ws.values.resize(n, NEG_INF);

        ws.state[self.root().index()] = LIVE;
        for &id in self.topo_order().iter().rev() {
            let i = id.index();
            if ws.state[i] != LIVE {
                continue;
            }
            let children = self.children(id);
            if kinds[i] == Kind::Product {
                let zero = children.iter().any(|c| match kinds[c.index()] {
                    Kind::Indicator { variable, value } => indicator_log(evidence, variable, value) == NEG_INF,
                    _ => false,
                });
                if zero {
                    ws.state[i] = DEAD;
                    continue;
                }
            }
            for c in children {
                ws.state[c.index()] = LIVE;
            }
        }

        let lw = self.log_weights();
        for &id in self.topo_order() {
            let i = id.index();
            if ws.state[i] != LIVE {
                continue;
            }
            let v = match kinds[i] {
                Kind::Indicator { variable, value } => indicator_log(evidence, variable, value),
                Kind::Product => {
                    let mut acc = 0.0;
                    for c in self.children(id) {
                        acc += ws.values[c.index()];
                    }
                    acc
                }
                Kind::Sum => {
                    let r = self.edge_range(id);
                    let children = self.children(id);
                    let mut m = NEG_INF;
                    let mut finite = 0usize;
                    for (e, c) in r.clone().zip(children) {
                        let t = lw[e] + ws.values[c.index()];
                        if t > NEG_INF {
                            finite += 1;
                            if t > m {
                                m = t;
                            }
                        }
                    }
                    if rule == SumRule::Max || finite <= 1 {
                        m
                    } else {
                        let mut s = 0.0;
                        for (e, c) in r.zip(children) {
                            let t = lw[e] + ws.values[c.index()];
                            if t > NEG_INF {
                                s += (t - m).exp();
                            }
                        }
                        m + s.ln()
                    }
                }
            };
            ws.values[i] = v;
        }
        ws.values[self.root().index()]
    }

    /// From the root: every child of a product, the best child of a sum
    /// (weight times child value, lowest position on ties). Each node is
    /// visited once.
    fn downward(
        &self,
        ws: &mut Workspace,
        mut on_sum: impl FnMut(NodeId, usize),
        mut on_indicator: impl FnMut(usize, usize),
    ) {
        let kinds = self.kinds();
        let lw = self.log_weights();
        ws.visited.clear();
        ws.visited.resize(self.num_nodes(), false);
        ws.stack.clear();
        ws.stack.push(self.root());
        ws.visited[self.root().index()] = true;
        while let Some(id) = ws.stack.pop() {
            match kinds[id.index()] {
                Kind::Indicator { variable, value } => on_indicator(variable as usize, value as usize),
                Kind::Product => {
                    for &c in self.children(id) {
                        if !ws.visited[c.index()] {
                            ws.visited[c.index()] = true;
                            ws.stack.push(c);
                        }
                    }
                }
                Kind::Sum => {
                    let r = self.edge_range(id);
                    let children = self.children(id);
                    let mut best = 0;
                    let mut best_val = NEG_INF;
                    for (k, (e, c)) in r.zip(children).enumerate() {
                        let t = lw[e] + ws.values[c.index()];
                        if t > best_val {
                            best_val = t;
                            best = k;
                        }
                    }
                    on_sum(id, best);
                    let c = children[best];
                    if !ws.visited[c.index()] {
                        ws.visited[c.index()] = true;
                        ws.stack.push(c);
                    }
                }
            }
        }
    }
}
