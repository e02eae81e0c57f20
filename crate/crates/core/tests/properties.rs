mod common;

use std::collections::BTreeSet;

use common::random_binary_spn;
use dgsm::dataset::{confusion, roc_auc, PlaceSample, SplitPlan};
use dgsm::learning::{e_step, m_step, train, CountAccumulator, TrainConfig};
use dgsm::polar::{cartesian_to_polar, CartesianGrid, Cell, PolarGrid, PolarGridSpec};
use dgsm::spn::{Evidence, VariableId, Workspace};
use dgsm::structure::{random_spn, seeded_rng, DecompositionParams};
use proptest::prelude::*;
use rand::Rng;

fn evidence_strategy(n: usize) -> impl Strategy<Value = Vec<Option<usize>>> {
    proptest::collection::vec(proptest::option::of(0usize..2), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evaluation_is_a_normalized_probability(seed in any::<u64>(), n in 1usize..9, raw in evidence_strategy(8)) {
        let g = random_binary_spn(n, &mut seeded_rng(seed));
        prop_assert!(g.evaluate(&Evidence::marginal(n)).unwrap().abs() < 1e-9);
        let ev = Evidence::from_options(raw[..n].to_vec());
        let v = g.evaluate(&ev).unwrap();
        prop_assert!(v <= 1e-12);
        prop_assert!(g.mpe_infer(&ev, &[]).unwrap().log_value <= v + 1e-12);
        prop_assert_eq!(v.to_bits(), g.evaluate(&ev).unwrap().to_bits());
    }

    #[test]
    fn observing_more_never_raises_probability(seed in any::<u64>(), n in 1usize..9, raw in evidence_strategy(8), extra in 0usize..8, value in 0usize..2) {
        let g = random_binary_spn(n, &mut seeded_rng(seed));
        let mut ev = Evidence::from_options(raw[..n].to_vec());
        let var = VariableId(extra % n);
        ev.marginalize(var);
        let before = g.evaluate(&ev).unwrap();
        ev.observe(var, value);
        prop_assert!(g.evaluate(&ev).unwrap() <= before + 1e-12);
    }

    #[test]
    fn mpe_is_deterministic(seed in any::<u64>(), n in 1usize..9) {
        let g = random_binary_spn(n, &mut seeded_rng(seed));
        let ev = Evidence::marginal(n);
        let query: Vec<VariableId> = (0..n).map(VariableId).collect();
        prop_assert_eq!(g.mpe_infer(&ev, &query).unwrap(), g.mpe_infer(&ev, &query).unwrap());
    }

    #[test]
    fn generated_structures_are_valid(
        seed in any::<u64>(),
        size in 1usize..=64,
        decompositions in 1usize..4,
        subsets in 2usize..5,
        mixtures in 1usize..4,
        card in 1usize..4,
    ) {
        let params = DecompositionParams {
            num_decompositions: decompositions,
            num_subsets: subsets.min(size.max(2)),
            num_mixtures: mixtures,
        };
        let a = random_spn(vec![card; size], &params, &mut seeded_rng(seed)).unwrap();
        let report = a.validate();
        prop_assert!(report.is_valid(), "{:?}", report);
        let b = random_spn(vec![card; size], &params, &mut seeded_rng(seed)).unwrap();
        prop_assert_eq!(a.weight_hash(), b.weight_hash());
        prop_assert_eq!(a.num_nodes(), b.num_nodes());
    }

    #[test]
    fn m_step_keeps_each_sum_on_the_simplex(seed in any::<u64>(), n in 2usize..8, alpha in 0.0f64..2.0, samples in 1usize..20) {
        let mut rng = seeded_rng(seed);
        let g = random_binary_spn(n, &mut rng);
        let mut acc = CountAccumulator::new(&g);
        let mut ws = Workspace::new();
        for _ in 0..samples {
            let x: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let trace = e_step(&g, &Evidence::complete(&x), &mut ws).unwrap();
            // one edge per reached sum
            let sums: BTreeSet<_> = trace.selections.iter().map(|s| s.0).collect();
            prop_assert_eq!(sums.len(), trace.selections.len());
            let before: f64 = acc.counts().iter().sum();
            acc.add_trace(&g, &trace);
            let after: f64 = acc.counts().iter().sum();
            prop_assert_eq!(after - before, trace.selections.len() as f64);
        }
        let w = m_step(&g, &acc, alpha);
        for s in g.sum_nodes() {
            let ws = &w[g.edge_range(s)];
            prop_assert!((ws.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(ws.iter().all(|&x| x >= 0.0));
            if alpha > 0.0 {
                prop_assert!(ws.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn polar_view_ignores_cells_outside_the_disc(seed in any::<u64>()) {
        let spec = PolarGridSpec::geometric(1.0, 16, 5, 0.1).unwrap();
        let mut rng = seeded_rng(seed);
        let mut g = CartesianGrid::centered(1.0, 0.05, Cell::Empty);
        for c in g.cells.iter_mut() {
            *c = Cell::from_index(rng.gen_range(0..3)).unwrap();
        }
        let base = cartesian_to_polar(&g, &spec).unwrap();
        for y in 0..g.height {
            for x in 0..g.width {
                let (dx, dy) = g.cell_offset(x, y);
                if dx.hypot(dy) >= spec.radius + g.resolution {
                    g.set(x, y, Cell::from_index(rng.gen_range(0..3)).unwrap());
                }
            }
        }
        prop_assert_eq!(cartesian_to_polar(&g, &spec).unwrap(), base);
    }

    #[test]
    fn auc_is_the_concordant_pair_fraction(scores in proptest::collection::vec((0u8..12, any::<bool>()), 2..60)) {
        prop_assume!(scores.iter().any(|s| s.1) && scores.iter().any(|s| !s.1));
        let scores: Vec<(f64, bool)> = scores.into_iter().map(|(s, l)| (s as f64, l)).collect();
        let roc = roc_auc(&scores).unwrap();
        let (mut wins, mut pairs) = (0.0, 0.0);
        for p in scores.iter().filter(|s| s.1) {
            for q in scores.iter().filter(|s| !s.1) {
                pairs += 1.0;
                wins += if p.0 > q.0 { 1.0 } else if p.0 == q.0 { 0.5 } else { 0.0 };
            }
        }
        prop_assert!((roc.auc - wins / pairs).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&roc.auc));
    }

    #[test]
    fn confusion_rows_are_distributions(pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..80)) {
        let classes: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        prop_assume!((0..3).all(|c| pairs.iter().any(|p| p.0 == c)));
        let truth: Vec<&str> = pairs.iter().map(|p| classes[p.0].as_str()).collect();
        let pred: Vec<&str> = pairs.iter().map(|p| classes[p.1].as_str()).collect();
        let c = confusion(&truth, &pred, &classes).unwrap();
        for row in &c.matrix {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn floors_never_straddle_a_split(layout in proptest::collection::vec((0usize..5, 0usize..3), 1..60)) {
        let spec = PolarGridSpec::geometric(1.0, 4, 2, 0.4).unwrap();
        let labels = ["a", "b", "novel"];
        let samples: Vec<PlaceSample> = layout
            .iter()
            .enumerate()
            .map(|(i, &(floor, l))| PlaceSample {
                id: format!("s{i}"),
                label: labels[l].into(),
                floor,
                cartesian: None,
                polar: PolarGrid::filled(&spec, Cell::Unknown),
            })
            .collect();
        let train_classes = vec!["a".to_string(), "b".to_string()];
        let plan = SplitPlan::leave_one_floor_out(&samples, &train_classes);
        let floors: BTreeSet<usize> = layout.iter().map(|l| l.0).collect();
        prop_assert_eq!(plan.folds.iter().map(|f| f.test_floor).collect::<BTreeSet<_>>(), floors);
        for fold in &plan.folds {
            for &i in &fold.train {
                prop_assert!(samples[i].floor != fold.test_floor);
                prop_assert!(!fold.test.contains(&i));
                prop_assert!(samples[i].label != "novel");
            }
            for &i in &fold.test {
                prop_assert_eq!(samples[i].floor, fold.test_floor);
            }
        }
    }
}

#[test]
fn training_is_reproducible_and_smoothing_keeps_support() {
    let mut rng = seeded_rng(8);
    let g = random_binary_spn(6, &mut rng);
    let data: Vec<Evidence> = (0..60)
        .map(|_| Evidence::complete(&(0..6).map(|_| rng.gen_range(0..2)).collect::<Vec<_>>()))
        .collect();
    let cfg = TrainConfig { iterations: 8, smoothing: 0.5, seed: 4, ..TrainConfig::default() };
    let a = train(g.clone(), &data, &cfg).unwrap();
    let b = train(g, &data, &cfg).unwrap();
    let bits = |o: &dgsm::learning::TrainOutcome| o.graph.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    for x in common::assignments(&[2; 6]) {
        assert!(a.graph.evaluate(&Evidence::complete(&x)).unwrap().is_finite());
    }
}
