//! Random SPN structures built by recursive decomposition, and the
//! assembly of the full place model: one random sub-network per angular
//! view of the polar grid, one random network per class over the view
//! outputs, and a root sum whose latent variable is the class.
//!
//! All randomness comes from the caller's RNG; the library uses
//! `ChaCha8Rng` (see [`seeded_rng`]) so structures reproduce across
//! platforms.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polar::PolarGridSpec;
use crate::spn::{Evidence, NodeId, SpnBuilder, SpnError, SpnGraph, VariableId};

#[derive(Debug, Error)]
pub enum StructureError {
    #[error("invalid structure parameters: {0}")]
    InvalidParams(String),
    #[error("unknown class label `{0}`")]
    UnknownLabel(String),
    #[error(transparent)]
    Spn(#[from] SpnError),
}

/// The portable generator used for every seeded structure and dataset.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, parts…)`, e.g. one per sample or fold.
pub fn derived_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let s = parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)));
    seeded_rng(s)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionParams {
    /// Alternative partitions generated for each set.
    pub num_decompositions: usize,
    /// Parts per partition.
    pub num_subsets: usize,
    /// Sums modeling each subset.
    pub num_mixtures: usize,
}

impl DecompositionParams {
    fn check(&self) -> Result<(), StructureError> {
        if self.num_decompositions == 0 || self.num_subsets == 0 || self.num_mixtures == 0 {
            return Err(StructureError::InvalidParams("decomposition counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// One element of a set being decomposed: either an input variable, or a
/// block of already-built nodes over a shared scope that is never split.
#[derive(Clone, Debug)]
pub enum Unit {
    Variable(VariableId),
    Block(Vec<NodeId>),
}

/// Builder state for random structures: the node arena plus one shared set
/// of indicator leaves per variable.
pub struct StructureBuilder {
    builder: SpnBuilder,
    indicators: Vec<Option<Vec<NodeId>>>,
}

impl StructureBuilder {
    pub fn new(cardinalities: Vec<usize>) -> Self {
        let n = cardinalities.len();
        StructureBuilder { builder: SpnBuilder::new(cardinalities), indicators: vec![None; n] }
    }

    pub fn builder(&mut self) -> &mut SpnBuilder {
        &mut self.builder
    }

    /// Indicator leaves of `var`, created on first use.
    pub fn indicators(&mut self, var: VariableId) -> Vec<NodeId> {
        if let Some(ids) = &self.indicators[var.0] {
            return ids.clone();
        }
        let card = self.builder.cardinalities()[var.0];
        let ids: Vec<NodeId> = (0..card).map(|v| self.builder.indicator(var, v)).collect();
        self.indicators[var.0] = Some(ids.clone());
        ids
    }

    /// `num_mixtures` output sums over `vars`.
    pub fn generate(
        &mut self,
        vars: &[VariableId],
        params: &DecompositionParams,
        rng: &mut impl Rng,
    ) -> Result<Vec<NodeId>, StructureError> {
        let units: Vec<Unit> = vars.iter().map(|&v| Unit::Variable(v)).collect();
        self.generate_units(&units, params, params.num_mixtures, rng)
    }

    /// Output sums over `units`, `outputs` of them at the top level and
    /// `params.num_mixtures` per subset below.
    ///
    /// A single variable becomes sums over its indicators; a single block
    /// is returned as is. Larger sets are split `num_decompositions` times
    /// into `num_subsets` parts (fewer when the set is smaller); every
    /// combination of one mixture per part becomes a product, and each
    /// output sum mixes all products of the level.
    pub fn generate_units(
        &mut self,
        units: &[Unit],
        params: &DecompositionParams,
        outputs: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<NodeId>, StructureError> {
        params.check()?;
        if units.is_empty() {
            return Err(StructureError::InvalidParams("cannot decompose an empty set".into()));
        }
        if outputs == 0 {
            return Err(StructureError::InvalidParams("at least one output sum is required".into()));
        }
        if units.len() > 1 && params.num_subsets > units.len() {
            return Err(StructureError::InvalidParams(format!(
                "{} subsets requested for a set of {}",
                params.num_subsets,
                units.len()
            )));
        }
        self.level(units, params, outputs, rng)
    }

    fn level(
        &mut self,
        units: &[Unit],
        params: &DecompositionParams,
        outputs: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<NodeId>, StructureError> {
        if let [unit] = units {
            return Ok(match unit {
                Unit::Variable(v) => {
                    let leaves = self.indicators(*v);
                    (0..outputs).map(|_| self.builder.uniform_sum(leaves.clone())).collect()
                }
                Unit::Block(nodes) => nodes.clone(),
            });
        }

        let parts = params.num_subsets.min(units.len());
        let mut partitions: Vec<Vec<Vec<usize>>> = Vec::new();
        for _ in 0..params.num_decompositions {
            let p = random_partition(units.len(), parts, rng);
            // identical partitions would only duplicate products
            if !partitions.contains(&p) {
                partitions.push(p);
            }
        }

        let mut products = Vec::new();
        for partition in &partitions {
            let mut subset_mixtures = Vec::with_capacity(partition.len());
            for subset in partition {
                let sub: Vec<Unit> = subset.iter().map(|&i| units[i].clone()).collect();
                subset_mixtures.push(self.level(&sub, params, params.num_mixtures, rng)?);
            }
            for combo in cross_product(&subset_mixtures) {
                products.push(self.builder.product(combo));
            }
        }
        Ok((0..outputs).map(|_| self.builder.uniform_sum(products.clone())).collect())
    }

    pub fn finish(self, root: NodeId) -> Result<SpnGraph, StructureError> {
        Ok(self.builder.build(root)?)
    }
}

/// Shuffle `0..n` and cut into `parts` contiguous chunks whose sizes differ
/// by at most one (larger chunks first). Chunks are sorted so equal
/// partitions compare equal.
fn random_partition(n: usize, parts: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (base, extra) = (n / parts, n % parts);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for k in 0..parts {
        let len = base + usize::from(k < extra);
        let mut chunk = idx[start..start + len].to_vec();
        chunk.sort_unstable();
        out.push(chunk);
        start += len;
    }
    out.sort();
    out
}

/// All combinations taking one node from each list, first list slowest.
/// The first combination uses the first node of every list.
fn cross_product(lists: &[Vec<NodeId>]) -> Vec<Vec<NodeId>> {
    let mut combos: Vec<Vec<NodeId>> = vec![Vec::with_capacity(lists.len())];
    for list in lists {
        let mut next = Vec::with_capacity(combos.len() * list.len());
        for prefix in &combos {
            for &n in list {
                let mut c = prefix.clone();
                c.push(n);
                next.push(c);
            }
        }
        combos = next;
    }
    combos
}

/// Complete network over `cardinalities`: a random structure over all
/// variables, topped by one uniform sum when it has several outputs.
pub fn random_spn(
    cardinalities: Vec<usize>,
    params: &DecompositionParams,
    rng: &mut impl Rng,
) -> Result<SpnGraph, StructureError> {
    let vars: Vec<VariableId> = (0..cardinalities.len()).map(VariableId).collect();
    let mut sb = StructureBuilder::new(cardinalities);
    let outs = sb.generate(&vars, params, rng)?;
    let root = if outs.len() == 1 { outs[0] } else { sb.builder().uniform_sum(outs) };
    sb.finish(root)
}

/// Redraw every sum weight uniformly from `[1, 1 + spread)` and normalize.
pub fn perturb_weights(graph: &mut SpnGraph, spread: f64, rng: &mut impl Rng) -> Result<(), SpnError> {
    let mut w = graph.weights().to_vec();
    let sums: Vec<NodeId> = graph.sum_nodes().collect();
    for s in sums {
        let r = graph.edge_range(s);
        let ws = &mut w[r];
        for x in ws.iter_mut() {
            *x = 1.0 + spread * rng.gen::<f64>();
        }
        let total: f64 = ws.iter().sum();
        ws.iter_mut().for_each(|x| *x /= total);
    }
    graph.set_weights(w)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgsmParams {
    pub num_views: usize,
    pub view_top_sums: usize,
    pub view: DecompositionParams,
    pub class: DecompositionParams,
    pub classes: Vec<String>,
    pub seed: u64,
}

impl Default for DgsmParams {
    fn default() -> Self {
        DgsmParams {
            num_views: 8,
            view_top_sums: 14,
            view: DecompositionParams { num_decompositions: 1, num_subsets: 2, num_mixtures: 4 },
            class: DecompositionParams { num_decompositions: 4, num_subsets: 5, num_mixtures: 2 },
            classes: ["corridor", "doorway", "small_office", "large_office"].map(String::from).to_vec(),
            seed: 42,
        }
    }
}

/// The class variable made explicit at the root sum.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLatent {
    pub variable: VariableId,
    /// Label of root child `i` is `labels[i]`.
    pub labels: Vec<String>,
}

impl ClassLatent {
    pub fn index_of(&self, label: &str) -> Result<usize, StructureError> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| StructureError::UnknownLabel(label.into()))
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }
}

/// Extend `evidence` with the class variable, observed at `label` or
/// marginalized when `label` is `None`.
pub fn attach_class_evidence(
    evidence: &Evidence,
    latent: &ClassLatent,
    label: Option<&str>,
) -> Result<Evidence, StructureError> {
    let mut out = evidence.clone();
    if out.len() <= latent.variable.0 {
        out.resize(latent.variable.0 + 1);
    }
    match label {
        Some(l) => out.observe(latent.variable, latent.index_of(l)?),
        None => out.marginalize(latent.variable),
    }
    Ok(out)
}

/// One view's cells and its top sums.
#[derive(Clone, Debug)]
pub struct ViewSpn {
    pub cells: Vec<VariableId>,
    pub outputs: Vec<NodeId>,
}

#[derive(Clone, Debug)]
pub struct DgsmStructure {
    pub graph: SpnGraph,
    pub latent: ClassLatent,
    pub views: Vec<ViewSpn>,
    /// Root of each class sub-network, in label order.
    pub class_roots: Vec<NodeId>,
}

/// Assemble the place model for `spec`. Variables `0..cells` are the polar
/// cells (empty/occupied/unknown), variable `cells` is the class.
pub fn build_dgsm(
    spec: &PolarGridSpec,
    params: &DgsmParams,
    rng: &mut impl Rng,
) -> Result<DgsmStructure, StructureError> {
    if params.num_views == 0 || spec.angular_bins % params.num_views != 0 {
        return Err(StructureError::InvalidParams(format!(
            "{} views do not divide {} angular bins",
            params.num_views, spec.angular_bins
        )));
    }
    if params.classes.is_empty() || params.view_top_sums == 0 {
        return Err(StructureError::InvalidParams("need at least one class and one view output".into()));
    }
    let mut sorted = params.classes.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != params.classes.len() {
        return Err(StructureError::InvalidParams("class labels must be distinct".into()));
    }

    let cells = spec.num_cells();
    let mut cards = vec![3; cells];
    cards.push(params.classes.len());
    let class_var = VariableId(cells);
    let mut sb = StructureBuilder::new(cards);
    for v in 0..cells {
        sb.indicators(VariableId(v));
    }
    let class_leaves = sb.indicators(class_var);

    let per_view = spec.angular_bins / params.num_views;
    let mut views = Vec::with_capacity(params.num_views);
    for v in 0..params.num_views {
        let cells: Vec<VariableId> = (v * per_view..(v + 1) * per_view)
            .flat_map(|a| (0..spec.radial_bins).map(move |r| spec.variable(a, r)))
            .collect();
        let units: Vec<Unit> = cells.iter().map(|&c| Unit::Variable(c)).collect();
        let outputs = sb.generate_units(&units, &params.view, params.view_top_sums, rng)?;
        views.push(ViewSpn { cells, outputs });
    }

    let view_units: Vec<Unit> = views.iter().map(|v| Unit::Block(v.outputs.clone())).collect();
    let class_params = DecompositionParams {
        num_subsets: params.class.num_subsets.min(view_units.len()),
        ..params.class.clone()
    };
    let mut class_roots = Vec::with_capacity(params.classes.len());
    for _ in &params.classes {
        let outs = sb.generate_units(&view_units, &class_params, 1, rng)?;
        let root = if outs.len() == 1 { outs[0] } else { sb.builder().uniform_sum(outs) };
        class_roots.push(root);
    }
    let tops: Vec<NodeId> =
        class_roots.iter().zip(&class_leaves).map(|(&r, &y)| sb.builder().product(vec![y, r])).collect();
    let root = sb.builder().uniform_sum(tops);
    let graph = sb.finish(root)?;
    Ok(DgsmStructure {
        graph,
        latent: ClassLatent { variable: class_var, labels: params.classes.clone() },
        views,
        class_roots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spn::{write_spn, NodeRef};
    use proptest::prelude::*;

    fn vars(n: usize) -> Vec<VariableId> {
        (0..n).map(VariableId).collect()
    }

    #[test]
    fn singleton_gives_sums_over_indicators() {
        let mut sb = StructureBuilder::new(vec![2]);
        let p = DecompositionParams { num_decompositions: 1, num_subsets: 2, num_mixtures: 4 };
        let outs = sb.generate(&vars(1), &p, &mut seeded_rng(0)).unwrap();
        assert_eq!(outs.len(), 4);
        let root = sb.builder().uniform_sum(outs.clone());
        let g = sb.finish(root).unwrap();
        for o in outs {
            let NodeRef::Sum { children, weights } = g.node(o) else { panic!() };
            assert_eq!(children.len(), 2);
            assert_eq!(weights, &[0.5, 0.5]);
        }
    }

    #[test]
    fn two_variables_counting() {
        let mut sb = StructureBuilder::new(vec![2, 2]);
        let p = DecompositionParams { num_decompositions: 1, num_subsets: 2, num_mixtures: 2 };
        let outs = sb.generate(&vars(2), &p, &mut seeded_rng(1)).unwrap();
        assert_eq!(outs.len(), 2);
        let root = sb.builder().uniform_sum(outs.clone());
        let g = sb.finish(root).unwrap();
        let counts = g.count_kinds();
        assert_eq!(counts.products, 4);
        for o in outs {
            assert_eq!(g.children(o).len(), 4);
        }
        // first product combines the first mixture of each subset
        let first = g.children(g.children(root)[0])[0];
        let kids = g.children(first);
        let leaf_sums: Vec<NodeId> = g.sum_nodes().filter(|&s| g.scope(s).len() == 1).collect();
        assert!(kids.iter().all(|k| leaf_sums.contains(k)));
    }

    #[test]
    fn too_many_subsets_is_rejected() {
        let mut sb = StructureBuilder::new(vec![2; 3]);
        let p = DecompositionParams { num_decompositions: 1, num_subsets: 4, num_mixtures: 2 };
        assert!(matches!(sb.generate(&vars(3), &p, &mut seeded_rng(0)), Err(StructureError::InvalidParams(_))));
    }

    #[test]
    fn view_sized_set_is_valid_and_reproducible() {
        let p = DecompositionParams { num_decompositions: 1, num_subsets: 2, num_mixtures: 4 };
        let build = || {
            let mut sb = StructureBuilder::new(vec![3; 147]);
            let outs = sb.generate_units(
                &vars(147).into_iter().map(Unit::Variable).collect::<Vec<_>>(),
                &p,
                14,
                &mut seeded_rng(7),
            )
            .unwrap();
            let root = sb.builder().uniform_sum(outs);
            sb.finish(root).unwrap()
        };
        let (a, b) = (build(), build());
        assert!(a.validate().is_valid());
        assert_eq!(a.count_kinds(), b.count_kinds());
        assert_eq!(a.scope(a.root()).len(), 147);
    }

    #[test]
    fn partitions_are_near_equal() {
        let mut rng = seeded_rng(3);
        let p = random_partition(8, 5, &mut rng);
        let mut sizes: Vec<usize> = p.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 1, 2, 2, 2]);
        let mut all: Vec<usize> = p.concat();
        all.sort();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn class_labels_round_trip() {
        let latent = ClassLatent {
            variable: VariableId(4),
            labels: DgsmParams::default().classes,
        };
        for (i, l) in latent.labels.iter().enumerate() {
            assert_eq!(latent.index_of(l).unwrap(), i);
            assert_eq!(latent.label(i), l);
        }
        let ev = Evidence::marginal(4);
        let with = attach_class_evidence(&ev, &latent, Some("corridor")).unwrap();
        assert_eq!(with.get(VariableId(4)), Some(0));
        let without = attach_class_evidence(&ev, &latent, None).unwrap();
        assert_eq!(without.get(VariableId(4)), None);
        assert!(matches!(
            attach_class_evidence(&ev, &latent, Some("kitchen")),
            Err(StructureError::UnknownLabel(_))
        ));
    }

    #[test]
    fn default_dgsm_layout() {
        let spec = PolarGridSpec::default();
        let s = build_dgsm(&spec, &DgsmParams::default(), &mut seeded_rng(42)).unwrap();
        let g = &s.graph;
        assert_eq!(g.num_vars(), 1177);
        assert_eq!(g.count_kinds().indicators, 3 * 1176 + 4);
        assert_eq!(s.views.len(), 8);
        let mut seen = std::collections::BTreeSet::new();
        for v in &s.views {
            assert_eq!(v.cells.len(), 147);
            assert_eq!(v.outputs.len(), 14);
            for &o in &v.outputs {
                assert_eq!(g.scope(o), v.cells);
            }
            for c in &v.cells {
                assert!(seen.insert(*c));
            }
        }
        assert!(g.validate().is_valid());
        assert_eq!(g.children(g.root()).len(), 4);
    }

    #[test]
    fn one_class_model() {
        let spec = PolarGridSpec::default();
        let params = DgsmParams { classes: vec!["corridor".into()], ..Default::default() };
        let s = build_dgsm(&spec, &params, &mut seeded_rng(1)).unwrap();
        assert_eq!(s.graph.children(s.graph.root()).len(), 1);
    }

    #[test]
    fn views_must_divide_bins() {
        let spec = PolarGridSpec::default();
        let params = DgsmParams { num_views: 5, ..Default::default() };
        assert!(matches!(build_dgsm(&spec, &params, &mut seeded_rng(1)), Err(StructureError::InvalidParams(_))));
    }

    #[test]
    fn same_seed_same_serialization() {
        let spec = PolarGridSpec::geometric(5.0, 16, 6, 0.3).unwrap();
        let params = DgsmParams::default();
        let text = |seed| {
            let s = build_dgsm(&spec, &params, &mut seeded_rng(seed)).unwrap();
            let mut buf = Vec::new();
            write_spn(&s.graph, &mut buf).unwrap();
            buf
        };
        assert_eq!(text(42), text(42));
        assert_ne!(text(42), text(43));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn generated_graphs_are_valid(
            seed in any::<u64>(),
            n in 1usize..=64,
            decomps in 1usize..=3,
            subsets in 2usize..=4,
            mixtures in 1usize..=3,
        ) {
            let p = DecompositionParams {
                num_decompositions: decomps,
                num_subsets: subsets.min(n.max(1)),
                num_mixtures: mixtures,
            };
            let g = random_spn(vec![2; n], &p, &mut seeded_rng(seed)).unwrap();
            prop_assert!(g.validate().is_valid());
            prop_assert_eq!(g.scope(g.root()).len(), n);
            let again = random_spn(vec![2; n], &p, &mut seeded_rng(seed)).unwrap();
            prop_assert_eq!(g.count_kinds(), again.count_kinds());
        }
    }
}
