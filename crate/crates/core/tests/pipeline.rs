use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use dgsm::dataset::{generate_world, mean_std, read_dataset, write_dataset};
use dgsm::spn::Workspace;
use dgsm::tasks::{read_model, run_experiment, CompletionMode, ExperimentConfig, PolarConfig, Task};

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default().with_seed(3);
    c.polar = PolarConfig { radius: 5.0, angular_bins: 16, radial_bins: 6, inner_depth: 0.3, radial_edges: None };
    c.world.floors = 2;
    c.world.samples_per_class = 5;
    c.world.novel_samples_per_class = 3;
    c.world.rooms_per_floor = 1;
    c.model.view_top_sums = 3;
    c.model.view.num_mixtures = 2;
    c.model.class.num_decompositions = 2;
    c.model.class.num_subsets = 2;
    c.train.iterations = 4;
    c.protocol.mask_span = 4;
    c.protocol.renders = 1;
    c
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records().map(|rec| headers.iter().map(String::from).zip(rec.unwrap().iter().map(String::from)).collect()).collect()
}

#[test]
fn experiment_outputs_share_one_model_per_fold() {
    let cfg = small_config();
    let spec = cfg.polar.spec().unwrap();
    let samples = generate_world(&cfg.world, &spec).unwrap();
    let out = tempfile::tempdir().unwrap();
    let summary = run_experiment(&cfg, &samples, out.path()).unwrap();
    assert_eq!(summary.folds.len(), 2);

    let metrics = read_csv(&out.path().join("metrics.csv"));
    for (k, fold) in summary.folds.iter().enumerate() {
        let dir = out.path().join(format!("fold{k}"));
        for file in ["classify.csv", "novelty.csv", "prototype.csv", "completion.csv"] {
            let rows = read_csv(&dir.join(file));
            assert!(!rows.is_empty(), "{file}");
            assert!(rows.iter().all(|r| r["model_hash"] == fold.model_hash), "{file}");
        }
        assert_eq!(metrics[k]["model_hash"], fold.model_hash);
        let model = read_model(BufReader::new(fs::File::open(dir.join("model.dgsm")).unwrap())).unwrap();
        assert_eq!(model.graph.weight_hash(), fold.model_hash);

        // the saved model reproduces the recorded predictions
        let mut ws = Workspace::new();
        let by_id: BTreeMap<_, _> = samples.iter().map(|s| (s.id.clone(), s)).collect();
        for row in read_csv(&dir.join("classify.csv")) {
            let c = model.classify(&by_id[&row["id"]].polar, &mut ws).unwrap();
            assert_eq!(c.label, row["predicted"]);
        }
        for row in read_csv(&dir.join("completion.csv")) {
            assert_eq!(row["empty_mask_predicted"], row["classified"]);
        }
        assert_eq!(read_csv(&dir.join("novelty.csv")).len(), fold.test_samples);
    }

    // aggregate rows are the mean and sample deviation of the fold rows
    for column in ["mean_class_accuracy", "auc", "completion_accuracy"] {
        let xs: Vec<f64> = metrics[..2].iter().map(|r| r[column].parse().unwrap()).collect();
        let (m, s) = mean_std(&xs);
        let mean: f64 = metrics[2][column].parse().unwrap();
        let std: f64 = metrics[3][column].parse().unwrap();
        assert_eq!(metrics[2]["fold"], "mean");
        assert!((mean - m).abs() < 2e-6 && (std - s).abs() < 2e-6, "{column}");
    }
}

#[test]
fn task_filter_and_rerun_determinism() {
    let mut cfg = small_config();
    cfg.protocol.tasks = vec![Task::Classify];
    cfg.protocol.completion_mode = CompletionMode::Sum;
    let spec = cfg.polar.spec().unwrap();
    let samples = generate_world(&cfg.world, &spec).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, &samples, a.path()).unwrap();
    run_experiment(&cfg, &samples, b.path()).unwrap();
    let fold = a.path().join("fold0");
    assert!(fold.join("classify.csv").exists());
    for absent in ["novelty.csv", "prototype.csv", "completion.csv"] {
        assert!(!fold.join(absent).exists(), "{absent}");
    }
    assert!(!a.path().join("roc.csv").exists());
    for file in ["metrics.csv", "confusion.csv", "summary.txt", "fold0/classify.csv", "fold1/model.dgsm"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn dataset_on_disk_trains_the_same_model() {
    let cfg = small_config();
    let spec = cfg.polar.spec().unwrap();
    let samples = generate_world(&cfg.world, &spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &samples, &spec, false).unwrap();
    let loaded = read_dataset(dir.path(), &spec).unwrap();
    assert_eq!(loaded.len(), samples.len());
    let mut cfg = cfg;
    cfg.protocol.tasks = vec![Task::Classify];
    let a = run_experiment(&cfg, &samples, &dir.path().join("a")).unwrap();
    let b = run_experiment(&cfg, &loaded, &dir.path().join("b")).unwrap();
    let hashes = |s: &dgsm::tasks::ExperimentSummary| s.folds.iter().map(|f| f.model_hash.clone()).collect::<Vec<_>>();
    assert_eq!(hashes(&a), hashes(&b));
}
