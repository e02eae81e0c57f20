//! Generative hard-EM weight learning.
//!
//! E step: for each sample, a sum-circuit upward pass followed by a
//! max-downward pass selects one child per reached sum. M step: each sum's
//! weights become its smoothed selection frequencies,
//! `(count_j + α) / (Σ_k count_k + K·α)`.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spn::{Evidence, SpnError, SpnGraph, SumSelectionTrace, Workspace};
use crate::structure::{perturb_weights, seeded_rng};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Spn(#[from] SpnError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Dirichlet pseudocount added to every sum edge.
    pub smoothing: f64,
    pub seed: u64,
    /// Visit samples in a seeded random order each iteration. Batch
    /// counting makes the result independent of the order.
    pub shuffle: bool,
    /// Before the first iteration, sum weights are redrawn from
    /// `[1, 1 + init_spread)` and normalized; 0 keeps the given weights.
    pub init_spread: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { iterations: 300, smoothing: 0.1, seed: 0, shuffle: false, init_spread: 1.0 }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<(), LearnError> {
        if self.iterations == 0 {
            return Err(LearnError::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.smoothing >= 0.0) || !self.smoothing.is_finite() {
            return Err(LearnError::InvalidConfig("smoothing must be a finite value ≥ 0".into()));
        }
        if !(self.init_spread >= 0.0) {
            return Err(LearnError::InvalidConfig("init_spread must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Selection counts per edge, indexed like the graph's flat weight array.
#[derive(Clone, Debug, PartialEq)]
pub struct CountAccumulator {
    counts: Vec<f64>,
}

impl CountAccumulator {
    pub fn new(graph: &SpnGraph) -> Self {
        CountAccumulator { counts: vec![0.0; graph.num_edges()] }
    }

    pub fn from_counts(counts: Vec<f64>) -> Self {
        CountAccumulator { counts }
    }

    pub fn add_trace(&mut self, graph: &SpnGraph, trace: &SumSelectionTrace) {
        for e in trace.edge_indices(graph) {
            self.counts[e] += 1.0;
        }
    }

    pub fn merge(&mut self, other: &CountAccumulator) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0.0);
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }
}

/// Most likely child of every reached sum for one sample.
pub fn e_step(graph: &SpnGraph, evidence: &Evidence, ws: &mut Workspace) -> Result<SumSelectionTrace, SpnError> {
    graph.augmented_mpe_pass_with(evidence, ws)
}

/// Smoothed weights for one sum from its child counts. With `alpha == 0`
/// and no counts the weights fall back to uniform.
pub fn smoothed_weights(counts: &[f64], alpha: f64) -> Vec<f64> {
    let k = counts.len() as f64;
    let total: f64 = counts.iter().sum::<f64>() + k * alpha;
    if total <= 0.0 {
        return vec![1.0 / k; counts.len()];
    }
    counts.iter().map(|c| (c + alpha) / total).collect()
}

/// New flat weight vector for `graph` from `counts`.
pub fn m_step(graph: &SpnGraph, counts: &CountAccumulator, alpha: f64) -> Vec<f64> {
    let mut w = graph.weights().to_vec();
    for s in graph.sum_nodes() {
        let r = graph.edge_range(s);
        let new = smoothed_weights(&counts.counts[r.clone()], alpha);
        w[r].copy_from_slice(&new);
    }
    w
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationLog {
    /// 0 is the state before any update.
    pub iteration: usize,
    pub mean_train_loglik: f64,
    pub elapsed_ms: u128,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub graph: SpnGraph,
    pub log: Vec<IterationLog>,
}

impl TrainOutcome {
    pub fn initial_loglik(&self) -> f64 {
        self.log[0].mean_train_loglik
    }

    pub fn final_loglik(&self) -> f64 {
        self.log.last().unwrap().mean_train_loglik
    }
}

/// Write `iteration,mean_train_loglik,elapsed_ms` rows.
pub fn write_train_log<W: Write>(log: &[IterationLog], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,mean_train_loglik,elapsed_ms")?;
    for row in log {
        writeln!(out, "{},{:.10},{}", row.iteration, row.mean_train_loglik, row.elapsed_ms)?;
    }
    Ok(())
}

const CHUNK: usize = 32;

/// One batch E step over all samples: merged counts and mean log-likelihood.
fn batch_e_step(graph: &SpnGraph, data: &[Evidence], order: &[usize]) -> Result<(CountAccumulator, f64), LearnError> {
    let parts: Vec<Result<(CountAccumulator, f64), SpnError>> = order
        .par_chunks(CHUNK)
        .map_init(Workspace::new, |ws, chunk| {
            let mut acc = CountAccumulator::new(graph);
            let mut ll = 0.0;
            for &i in chunk {
                let trace = e_step(graph, &data[i], ws)?;
                acc.add_trace(graph, &trace);
                ll += trace.log_value;
            }
            Ok((acc, ll))
        })
        .collect();
    let mut total = CountAccumulator::new(graph);
    let mut ll = 0.0;
    for p in parts {
        let (acc, l) = p?;
        total.merge(&acc);
        ll += l;
    }
    Ok((total, ll / data.len() as f64))
}

/// Run exactly `config.iterations` hard-EM iterations. The log holds the
/// mean log-likelihood (sum-circuit) before training and after every
/// iteration.
pub fn train(mut graph: SpnGraph, data: &[Evidence], config: &TrainConfig) -> Result<TrainOutcome, LearnError> {
    config.check()?;
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let mut rng = seeded_rng(config.seed);
    if config.init_spread > 0.0 {
        perturb_weights(&mut graph, config.init_spread, &mut rng)?;
    }
    let start = Instant::now();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(config.iterations + 1);
    for it in 0..config.iterations {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let (counts, mean_ll) = batch_e_step(&graph, data, &order)?;
        // the E-step pass scores the weights produced by the previous iteration
        log.push(IterationLog { iteration: it, mean_train_loglik: mean_ll, elapsed_ms: start.elapsed().as_millis() });
        let w = m_step(&graph, &counts, config.smoothing);
        graph.set_weights(w)?;
    }
    let final_ll = mean_loglik(&graph, data)?;
    log.push(IterationLog {
        iteration: config.iterations,
        mean_train_loglik: final_ll,
        elapsed_ms: start.elapsed().as_millis(),
    });
    Ok(TrainOutcome { graph, log })
}

/// Mean sum-circuit log-likelihood over `data`.
pub fn mean_loglik(graph: &SpnGraph, data: &[Evidence]) -> Result<f64, SpnError> {
    let parts: Vec<Result<f64, SpnError>> = data
        .par_chunks(CHUNK)
        .map_init(Workspace::new, |ws, chunk| {
            chunk.iter().map(|e| graph.evaluate_with(e, ws)).sum::<Result<f64, SpnError>>()
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / data.len() as f64)
}
