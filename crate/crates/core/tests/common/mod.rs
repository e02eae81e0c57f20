//! Brute-force references shared by the integration tests. Nothing here
//! calls the library's inference code; graphs are only read through their
//! node accessors.

#![allow(dead_code)]

use dgsm::spn::{Evidence, NodeId, NodeRef, SpnGraph};
use dgsm::structure::{perturb_weights, random_spn, DecompositionParams};
use rand::Rng;

pub fn lse(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Node values for one complete assignment, by plain recursion with a memo.
/// `max` switches sums to weighted max.
pub fn node_value(graph: &SpnGraph, x: &[usize], max: bool) -> f64 {
    fn go(g: &SpnGraph, id: NodeId, x: &[usize], max: bool, memo: &mut Vec<Option<f64>>) -> f64 {
        if let Some(v) = memo[id.index()] {
            return v;
        }
        let v = match g.node(id) {
            NodeRef::Indicator { variable, value } => {
                if x[variable.0] == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            NodeRef::Product { children } => children.iter().map(|&c| go(g, c, x, max, memo)).sum(),
            NodeRef::Sum { children, weights } => {
                let terms = children.iter().zip(weights).map(|(&c, &w)| w.ln() + go(g, c, x, max, memo));
                if max {
                    terms.fold(f64::NEG_INFINITY, f64::max)
                } else {
                    lse(terms)
                }
            }
        };
        memo[id.index()] = Some(v);
        v
    }
    let mut memo = vec![None; graph.num_nodes()];
    go(graph, graph.root(), x, max, &mut memo)
}

/// Every complete assignment of the graph's variables, first variable
/// changing slowest.
pub fn assignments(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &c in cards {
        out = out.into_iter().flat_map(|p| (0..c).map(move |v| [p.clone(), vec![v]].concat())).collect();
    }
    out
}

/// Log-value of the network polynomial for every complete assignment,
/// under the sum and the max rule.
pub struct Table {
    pub rows: Vec<Vec<usize>>,
    pub sum: Vec<f64>,
    pub max: Vec<f64>,
}

impl Table {
    pub fn new(graph: &SpnGraph) -> Table {
        let rows = assignments(graph.cardinalities());
        let sum = rows.iter().map(|x| node_value(graph, x, false)).collect();
        let max = rows.iter().map(|x| node_value(graph, x, true)).collect();
        Table { rows, sum, max }
    }

    fn consistent<'a>(&'a self, ev: &'a Evidence) -> impl Iterator<Item = usize> + 'a {
        (0..self.rows.len()).filter(move |&i| {
            ev.values().iter().zip(&self.rows[i]).all(|(e, &v)| e.map_or(true, |e| e == v))
        })
    }

    pub fn evidence_log_prob(&self, ev: &Evidence) -> f64 {
        lse(self.consistent(ev).map(|i| self.sum[i]))
    }

    pub fn max_value(&self, ev: &Evidence) -> f64 {
        self.consistent(ev).map(|i| self.max[i]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Random valid network over `n` binary variables with random weights.
pub fn random_binary_spn(n: usize, rng: &mut impl Rng) -> SpnGraph {
    let params = DecompositionParams {
        num_decompositions: rng.gen_range(1..=3),
        num_subsets: rng.gen_range(2..=3).min(n.max(2)),
        num_mixtures: rng.gen_range(1..=3),
    };
    let mut g = random_spn(vec![2; n], &params, rng).expect("random network");
    perturb_weights(&mut g, 4.0, rng).expect("weights");
    g
}

/// Each variable observed with probability `p_obs` at a random value.
pub fn random_evidence(cards: &[usize], p_obs: f64, rng: &mut impl Rng) -> Evidence {
    Evidence::from_options(cards.iter().map(|&c| rng.gen_bool(p_obs).then(|| rng.gen_range(0..c))).collect())
}
