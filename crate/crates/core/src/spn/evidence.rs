use std::collections::BTreeMap;

use super::{SpnError, SpnGraph, VariableId};

/// Per-variable evidence: an observed category or marginalized out.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Evidence {
    values: Vec<Option<usize>>,
}

/// Values chosen for a set of query variables.
pub type Assignment = BTreeMap<VariableId, usize>;

impl Evidence {
    /// Every variable marginalized.
    pub fn marginal(num_vars: usize) -> Self {
        Evidence { values: vec![None; num_vars] }
    }

    pub fn complete(values: &[usize]) -> Self {
        Evidence { values: values.iter().map(|&v| Some(v)).collect() }
    }

    pub fn from_options(values: Vec<Option<usize>>) -> Self {
        Evidence { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, var: VariableId) -> Option<usize> {
        self.values[var.0]
    }

    pub fn observe(&mut self, var: VariableId, value: usize) {
        self.values[var.0] = Some(value);
    }

    pub fn marginalize(&mut self, var: VariableId) {
        self.values[var.0] = None;
    }

    /// Grow or shrink to `num_vars` entries; new entries are marginalized.
    pub fn resize(&mut self, num_vars: usize) {
        self.values.resize(num_vars, None);
    }

    pub fn values(&self) -> &[Option<usize>] {
        &self.values
    }

    pub fn is_observed(&self, var: VariableId) -> bool {
        self.values[var.0].is_some()
    }

    /// Copy with `assignment` written in as observations.
    pub fn with_assignment(&self, assignment: &Assignment) -> Evidence {
        let mut out = self.clone();
        for (&var, &value) in assignment {
            out.observe(var, value);
        }
        out
    }

    pub(crate) fn check(&self, graph: &SpnGraph) -> Result<(), SpnError> {
        if self.values.len() != graph.num_vars() {
            return Err(SpnError::InvalidEvidence(format!(
                "evidence covers {} variables, graph has {}",
                self.values.len(),
                graph.num_vars()
            )));
        }
        for (v, (value, card)) in self.values.iter().zip(graph.cardinalities()).enumerate() {
            if let Some(x) = value {
                if x >= card {
                    return Err(SpnError::InvalidEvidence(format!(
                        "X{v} observed as {x}, cardinality is {card}"
                    )));
                }
            }
        }
        Ok(())
    }
}
