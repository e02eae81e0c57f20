use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::TaskError;
use crate::polar::{polar_to_evidence, PolarGrid, PolarGridSpec};
use crate::spn::{log_sum_exp, read_spn, write_spn, Assignment, Evidence, SpnGraph, VariableId, Workspace};
use crate::structure::{attach_class_evidence, build_dgsm, ClassLatent, DgsmParams};

/// A place model: the network, which variable is the class, and the
/// polar layout its cell variables follow.
#[derive(Clone, Debug)]
pub struct Model {
    pub graph: SpnGraph,
    pub latent: ClassLatent,
    pub spec: PolarGridSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub index: usize,
    pub label: String,
    /// `log P(y, x)` for every class, in label order.
    pub log_joint: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompletionMode {
    /// Maximize jointly over the missing cells, the class and all hidden
    /// sum choices.
    #[default]
    Max,
    /// For each class, take the completion conditioned on it, then keep
    /// the candidate with the highest `Σ_y P(y, x)`.
    Sum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    /// Inferred values of exactly the masked cells.
    pub assignment: Assignment,
    /// Class with the highest `P(y, x_observed)`.
    pub label: String,
    /// Class value selected by the completion itself.
    pub mpe_label: String,
}

impl Model {
    pub fn build(spec: &PolarGridSpec, params: &DgsmParams, rng: &mut impl rand::Rng) -> Result<Model, TaskError> {
        let s = build_dgsm(spec, params, rng)?;
        Ok(Model { graph: s.graph, latent: s.latent, spec: spec.clone() })
    }

    pub fn labels(&self) -> &[String] {
        &self.latent.labels
    }

    pub fn class_variable(&self) -> VariableId {
        self.latent.variable
    }

    /// Every cell observed, class marginalized.
    pub fn evidence(&self, polar: &PolarGrid) -> Result<Evidence, TaskError> {
        let ev = polar_to_evidence(polar, &self.spec).map_err(|e| TaskError::ShapeMismatch(e.to_string()))?;
        Ok(attach_class_evidence(&ev, &self.latent, None)?)
    }

    /// Every cell observed and the class observed at `label`.
    pub fn labeled_evidence(&self, polar: &PolarGrid, label: &str) -> Result<Evidence, TaskError> {
        let ev = polar_to_evidence(polar, &self.spec).map_err(|e| TaskError::ShapeMismatch(e.to_string()))?;
        attach_class_evidence(&ev, &self.latent, Some(label))
            .map_err(|_| TaskError::UnknownLabel(label.to_string()))
    }

    fn check_evidence(&self, ev: &Evidence) -> Result<(), TaskError> {
        if ev.len() != self.graph.num_vars() {
            return Err(TaskError::ShapeMismatch(format!(
                "evidence has {} variables, model has {}",
                ev.len(),
                self.graph.num_vars()
            )));
        }
        Ok(())
    }

    /// One sum-circuit pass per class with the class observed; the
    /// prediction is the argmax of `log P(y, x)` (lowest index on ties).
    /// Cells marginalized in `evidence` stay marginalized.
    pub fn classify_evidence(&self, evidence: &Evidence, ws: &mut Workspace) -> Result<Classification, TaskError> {
        self.check_evidence(evidence)?;
        let y = self.class_variable();
        let mut ev = evidence.clone();
        let mut log_joint = Vec::with_capacity(self.latent.num_classes());
        for c in 0..self.latent.num_classes() {
            ev.observe(y, c);
            log_joint.push(self.graph.evaluate_with(&ev, ws)?);
        }
        let mut index = 0;
        for (c, &s) in log_joint.iter().enumerate() {
            if s > log_joint[index] {
                index = c;
            }
        }
        Ok(Classification { index, label: self.latent.label(index).to_string(), log_joint })
    }

    pub fn classify(&self, polar: &PolarGrid, ws: &mut Workspace) -> Result<Classification, TaskError> {
        self.classify_evidence(&self.evidence(polar)?, ws)
    }

    /// `log Σ_y P(y, x)`: higher means more familiar.
    pub fn novelty_score(&self, polar: &PolarGrid, ws: &mut Workspace) -> Result<f64, TaskError> {
        Ok(self.graph.evaluate_with(&self.evidence(polar)?, ws)?)
    }

    /// Most probable grid given the class.
    pub fn prototype(&self, label: &str) -> Result<PolarGrid, TaskError> {
        let c = self.latent.index_of(label).map_err(|_| TaskError::UnknownLabel(label.to_string()))?;
        let mut ev = Evidence::marginal(self.graph.num_vars());
        ev.observe(self.class_variable(), c);
        let cells: Vec<VariableId> = (0..self.spec.num_cells()).map(VariableId).collect();
        let mpe = self.graph.mpe_infer(&ev, &cells)?;
        let values: Vec<usize> = mpe.assignment.values().copied().collect();
        Ok(PolarGrid::from_evidence(&Evidence::complete(&values), &self.spec)?)
    }

    /// Infer the cells in `masked`, which must be marginalized in
    /// `evidence` along with the class.
    pub fn complete(
        &self,
        evidence: &Evidence,
        masked: &[VariableId],
        mode: CompletionMode,
        ws: &mut Workspace,
    ) -> Result<Completion, TaskError> {
        self.check_evidence(evidence)?;
        let y = self.class_variable();
        if evidence.is_observed(y) {
            return Err(TaskError::ShapeMismatch("class must be marginalized for completion".into()));
        }
        if let Some(v) = masked.iter().find(|v| v.0 >= self.spec.num_cells() || evidence.is_observed(**v)) {
            return Err(TaskError::ShapeMismatch(format!("masked cell {v} is observed or not a cell")));
        }
        let label = self.classify_evidence(evidence, ws)?.label;
        let (assignment, mpe_index) = match mode {
            CompletionMode::Max => {
                let mut query = masked.to_vec();
                query.push(y);
                let mut a = self.graph.mpe_infer_with(evidence, &query, ws)?.assignment;
                let c = a.remove(&y).expect("class is queried");
                (a, c)
            }
            CompletionMode::Sum => {
                let mut best: Option<(f64, Assignment, usize)> = None;
                for c in 0..self.latent.num_classes() {
                    let mut ev = evidence.clone();
                    ev.observe(y, c);
                    let a = self.graph.mpe_infer_with(&ev, masked, ws)?.assignment;
                    let score = self.graph.evaluate_with(&evidence.with_assignment(&a), ws)?;
                    if best.as_ref().is_none_or(|b| score > b.0) {
                        best = Some((score, a, c));
                    }
                }
                let (_, a, c) = best.expect("at least one class");
                (a, c)
            }
        };
        Ok(Completion { assignment, label, mpe_label: self.latent.label(mpe_index).to_string() })
    }
}

/// Log-sum-exp of per-class log-joints.
pub fn marginal_of(c: &Classification) -> f64 {
    log_sum_exp(&c.log_joint)
}

/// ```text
/// dgsm v1
/// classes <label> <label> ...
/// polar <radius> <angular_bins> <edge> <edge> ...
/// <spn block>
/// ```
pub fn write_model<W: Write>(model: &Model, mut out: W) -> Result<(), TaskError> {
    writeln!(out, "dgsm v1")?;
    writeln!(out, "classes {}", model.latent.labels.join(" "))?;
    let edges: Vec<String> = model.spec.radial_edges.iter().map(|e| e.to_string()).collect();
    writeln!(out, "polar {} {} {}", model.spec.radius, model.spec.angular_bins, edges.join(" "))?;
    write_spn(&model.graph, out)?;
    Ok(())
}

pub fn read_model<R: BufRead>(mut input: R) -> Result<Model, TaskError> {
    let err = |line: usize, m: &str| TaskError::Parse { line, message: m.to_string() };
    let mut line = String::new();
    let mut next = |n: usize| -> Result<String, TaskError> {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(err(n, "unexpected end of file"));
        }
        Ok(line.trim_end().to_string())
    };
    if next(1)? != "dgsm v1" {
        return Err(err(1, "expected `dgsm v1`"));
    }
    let classes = next(2)?;
    let labels: Vec<String> = match classes.strip_prefix("classes ") {
        Some(rest) => rest.split_whitespace().map(String::from).collect(),
        None => return Err(err(2, "expected `classes <label> ...`")),
    };
    let polar = next(3)?;
    let toks: Vec<&str> = polar.split_whitespace().collect();
    if toks.len() < 4 || toks[0] != "polar" {
        return Err(err(3, "expected `polar <radius> <angular_bins> <edges>...`"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| err(3, "bad number"));
    let radius = num(toks[1])?;
    let angular: usize = toks[2].parse().map_err(|_| err(3, "bad angular bin count"))?;
    let edges = toks[3..].iter().map(|t| num(t)).collect::<Result<Vec<_>, _>>()?;
    let spec = PolarGridSpec::with_edges(radius, angular, edges)?;
    drop(next);
    let graph = read_spn(input)?;
    let variable = VariableId(spec.num_cells());
    if graph.num_vars() != spec.num_cells() + 1 || graph.cardinality(variable) != labels.len() {
        return Err(err(4, "network variables do not match the polar layout and class list"));
    }
    Ok(Model { graph, latent: ClassLatent { variable, labels }, spec })
}
