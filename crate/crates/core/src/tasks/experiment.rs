use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{write_model, CompletionMode, Model};
use super::{Context, TaskError};
use crate::dataset::{
    completion_accuracy, confusion, mean_std, roc_auc, Confusion, PlaceSample, Roc, SplitPlan, WorldParams,
};
use crate::learning::{train, write_train_log, TrainConfig};
use crate::polar::{mask_view, pgm_bytes, render_polar, write_polar, Cell, PolarGrid, PolarGridSpec};
use crate::spn::{Evidence, Workspace};
use crate::structure::{derived_rng, DgsmParams};

/// Ring layout of the polar grid. Explicit `radial_edges` override the
/// geometric scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolarConfig {
    pub radius: f64,
    pub angular_bins: usize,
    pub radial_bins: usize,
    /// Depth of the innermost ring, meters.
    pub inner_depth: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radial_edges: Option<Vec<f64>>,
}

impl Default for PolarConfig {
    fn default() -> Self {
        PolarConfig { radius: 5.0, angular_bins: 56, radial_bins: 21, inner_depth: 0.1, radial_edges: None }
    }
}

impl PolarConfig {
    pub fn spec(&self) -> Result<PolarGridSpec, TaskError> {
        Ok(match &self.radial_edges {
            Some(edges) => PolarGridSpec::with_edges(self.radius, self.angular_bins, edges.clone())?,
            None => PolarGridSpec::geometric(self.radius, self.angular_bins, self.radial_bins, self.inner_depth)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Novelty,
    Prototype,
    Complete,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Classify, Task::Novelty, Task::Prototype, Task::Complete];

    pub fn name(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Novelty => "novelty",
            Task::Prototype => "prototype",
            Task::Complete => "complete",
        }
    }
}

impl FromStr for Task {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Task, TaskError> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| TaskError::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub tasks: Vec<Task>,
    /// Angular bins hidden per completion query; 14 of 56 is a 90° sector.
    pub mask_span: usize,
    pub completion_mode: CompletionMode,
    /// Completion examples rendered per fold.
    pub renders: usize,
    /// Write each fold's trained model next to its results.
    pub write_models: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            tasks: Task::ALL.to_vec(),
            mask_span: 14,
            completion_mode: CompletionMode::Max,
            renders: 3,
            write_models: true,
        }
    }
}

/// Everything an experiment needs, one TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub polar: PolarConfig,
    pub world: WorldParams,
    pub model: DgsmParams,
    pub train: TrainConfig,
    pub protocol: ProtocolConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            polar: PolarConfig::default(),
            world: WorldParams::default(),
            model: DgsmParams::default(),
            train: TrainConfig { iterations: 40, ..TrainConfig::default() },
            protocol: ProtocolConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, TaskError> {
        toml::from_str(text).map_err(|e| TaskError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reseed data generation, structure and training from one number.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.world.seed = seed;
        self.model.seed = seed.wrapping_add(1);
        self.train.seed = seed.wrapping_add(2);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionRecord {
    pub id: String,
    pub label: String,
    pub mask_start: usize,
    pub accuracy: f64,
    pub predicted: String,
    pub mpe_class: String,
    pub empty_mask_predicted: String,
    pub classified: String,
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_floor: usize,
    pub model_hash: String,
    pub train_samples: usize,
    pub test_samples: usize,
    pub initial_loglik: f64,
    pub final_loglik: f64,
    pub confusion: Option<Confusion>,
    pub roc: Option<Roc>,
    pub completion: Option<f64>,
    pub completions: Vec<CompletionRecord>,
    pub train_time: Duration,
    pub task_time: Duration,
}

#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub folds: Vec<FoldOutcome>,
    pub elapsed: Duration,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, TaskError> {
    csv::Writer::from_path(path).context(|| format!("creating {}", path.display()))
}

fn write_pgm(path: &Path, grid: &PolarGrid, spec: &PolarGridSpec) -> Result<(), TaskError> {
    const SIZE: usize = 256;
    fs::write(path, pgm_bytes(SIZE, SIZE, &render_polar(grid, spec, SIZE))).context(|| format!("{}", path.display()))
}

/// Leave-one-floor-out protocol: per fold build a model, train it once,
/// then run the selected tasks on the fold's test floor. Results go to
/// `out`: per-fold record CSVs under `fold<k>/`, and `metrics.csv`,
/// `confusion.csv`, `roc.csv` and `summary.txt` at the top level. Train
/// logs (which carry wall-clock times) are the only time-dependent files.
pub fn run_experiment(
    config: &ExperimentConfig,
    samples: &[PlaceSample],
    out: &Path,
) -> Result<ExperimentSummary, TaskError> {
    let start = Instant::now();
    let spec = config.polar.spec()?;
    if config.protocol.mask_span == 0 || config.protocol.mask_span > spec.angular_bins {
        return Err(TaskError::Config(format!("mask_span must lie in 1..={}", spec.angular_bins)));
    }
    let classes = &config.model.classes;
    let plan = SplitPlan::leave_one_floor_out(samples, classes);
    if plan.folds.is_empty() {
        return Err(TaskError::Config("dataset is empty".into()));
    }
    fs::create_dir_all(out)?;
    let tasks = &config.protocol.tasks;
    let mut folds = Vec::with_capacity(plan.folds.len());
    for (k, fold) in plan.folds.iter().enumerate() {
        let dir = out.join(format!("fold{k}"));
        fs::create_dir_all(&dir)?;
        let outcome = run_fold(config, &spec, samples, k, fold, tasks, &dir)
            .map_err(|e| e.context(format!("fold {k} (test floor {})", fold.test_floor)))?;
        folds.push(outcome);
    }
    write_aggregate(out, &folds, classes)?;
    Ok(ExperimentSummary { folds, elapsed: start.elapsed() })
}

fn run_fold(
    config: &ExperimentConfig,
    spec: &PolarGridSpec,
    samples: &[PlaceSample],
    k: usize,
    fold: &crate::dataset::Fold,
    tasks: &[Task],
    dir: &Path,
) -> Result<FoldOutcome, TaskError> {
    let t0 = Instant::now();
    let mut build_rng = derived_rng(config.model.seed, &[k as u64]);
    let model = Model::build(spec, &config.model, &mut build_rng)?;
    let train_data: Vec<Evidence> = fold
        .train
        .iter()
        .map(|&i| model.labeled_evidence(&samples[i].polar, &samples[i].label).context(|| samples[i].id.clone()))
        .collect::<Result<_, _>>()?;
    if train_data.is_empty() {
        return Err(TaskError::Config("fold has no training samples".into()));
    }
    let train_cfg = TrainConfig { seed: derived_rng(config.train.seed, &[k as u64]).gen(), ..config.train.clone() };
    let trained = train(model.graph.clone(), &train_data, &train_cfg)?;
    let (initial_loglik, final_loglik) = (trained.initial_loglik(), trained.final_loglik());
    write_train_log(&trained.log, BufWriter::new(File::create(dir.join("train_log.csv"))?))?;
    let model = Model { graph: trained.graph, ..model };
    drop(train_data);
    let hash = model.graph.weight_hash();
    if config.protocol.write_models {
        let mut w = BufWriter::new(File::create(dir.join("model.dgsm"))?);
        write_model(&model, &mut w)?;
        w.flush()?;
    }
    let train_time = t0.elapsed();

    let t1 = Instant::now();
    let test: Vec<&PlaceSample> = fold.test.iter().map(|&i| &samples[i]).collect();
    let inliers: Vec<&PlaceSample> = test.iter().copied().filter(|s| model.labels().contains(&s.label)).collect();
    let mut outcome = FoldOutcome {
        fold: k,
        test_floor: fold.test_floor,
        model_hash: hash.clone(),
        train_samples: fold.train.len(),
        test_samples: test.len(),
        initial_loglik,
        final_loglik,
        confusion: None,
        roc: None,
        completion: None,
        completions: Vec::new(),
        train_time,
        task_time: Duration::ZERO,
    };

    if tasks.contains(&Task::Classify) {
        let results: Vec<_> = inliers
            .par_iter()
            .map_init(Workspace::new, |ws, s| model.classify(&s.polar, ws).context(|| s.id.clone()))
            .collect::<Result<_, _>>()?;
        let mut w = csv_writer(&dir.join("classify.csv"))?;
        let mut header = vec!["id".to_string(), "label".into(), "predicted".into()];
        header.extend(model.labels().iter().map(|l| format!("log_joint_{l}")));
        header.push("model_hash".into());
        w.write_record(&header)?;
        for (s, r) in inliers.iter().zip(&results) {
            let mut row = vec![s.id.clone(), s.label.clone(), r.label.clone()];
            row.extend(r.log_joint.iter().map(|v| format!("{v:.6}")));
            row.push(hash.clone());
            w.write_record(&row)?;
        }
        w.flush()?;
        let truth: Vec<&str> = inliers.iter().map(|s| s.label.as_str()).collect();
        let pred: Vec<&str> = results.iter().map(|r| r.label.as_str()).collect();
        outcome.confusion = Some(confusion(&truth, &pred, model.labels())?);
    }

    if tasks.contains(&Task::Novelty) {
        let scores: Vec<f64> = test
            .par_iter()
            .map_init(Workspace::new, |ws, s| model.novelty_score(&s.polar, ws).context(|| s.id.clone()))
            .collect::<Result<_, _>>()?;
        let mut w = csv_writer(&dir.join("novelty.csv"))?;
        w.write_record(["id", "label", "inlier", "score", "model_hash"])?;
        let mut pairs = Vec::with_capacity(test.len());
        for (s, &score) in test.iter().zip(&scores) {
            let inlier = model.labels().contains(&s.label);
            pairs.push((score, inlier));
            w.write_record([s.id.as_str(), &s.label, if inlier { "1" } else { "0" }, &format!("{score:.6}"), &hash])?;
        }
        w.flush()?;
        outcome.roc = roc_auc(&pairs).ok();
    }

    if tasks.contains(&Task::Prototype) {
        let mut w = csv_writer(&dir.join("prototype.csv"))?;
        w.write_record(["class", "classified_as", "occupied", "empty", "unknown", "model_hash"])?;
        let mut ws = Workspace::new();
        for label in model.labels() {
            let grid = model.prototype(label)?;
            let classified = model.classify(&grid, &mut ws)?.label;
            let count = |c: Cell| grid.cells.iter().filter(|&&x| x == c).count().to_string();
            w.write_record([
                label.as_str(),
                &classified,
                &count(Cell::Occupied),
                &count(Cell::Empty),
                &count(Cell::Unknown),
                &hash,
            ])?;
            write_polar(&grid, spec, BufWriter::new(File::create(dir.join(format!("prototype_{label}.grid")))?))?;
            write_pgm(&dir.join(format!("prototype_{label}.pgm")), &grid, spec)?;
        }
        w.flush()?;
    }

    if tasks.contains(&Task::Complete) {
        let span = config.protocol.mask_span;
        let mode = config.protocol.completion_mode;
        let records: Vec<(CompletionRecord, PolarGrid)> = inliers
            .par_iter()
            .map_init(Workspace::new, |ws, s| {
                let mut rng = derived_rng(config.train.seed, &[k as u64, fold_index(samples, s) as u64]);
                let start = rng.gen_range(0..spec.angular_bins);
                let ev = model.evidence(&s.polar)?;
                let (masked_ev, masked) = mask_view(&ev, spec, start, span);
                let c = model.complete(&masked_ev, &masked, mode, ws)?;
                let accuracy = completion_accuracy(&s.polar, &c.assignment, &masked)?;
                let empty = model.complete(&ev, &[], mode, ws)?;
                let classified = model.classify_evidence(&ev, ws)?.label;
                let mut filled = s.polar.clone();
                for (v, &val) in &c.assignment {
                    filled.cells[v.0] = Cell::from_index(val).expect("cell value");
                }
                Ok((
                    CompletionRecord {
                        id: s.id.clone(),
                        label: s.label.clone(),
                        mask_start: start,
                        accuracy,
                        predicted: c.label,
                        mpe_class: c.mpe_label,
                        empty_mask_predicted: empty.label,
                        classified,
                    },
                    filled,
                ))
            })
            .collect::<Result<_, TaskError>>()?;
        let mut w = csv_writer(&dir.join("completion.csv"))?;
        w.write_record([
            "id",
            "label",
            "mask_start",
            "accuracy",
            "predicted",
            "mpe_class",
            "empty_mask_predicted",
            "classified",
            "model_hash",
        ])?;
        for (r, _) in &records {
            w.write_record([
                r.id.as_str(),
                &r.label,
                &r.mask_start.to_string(),
                &format!("{:.6}", r.accuracy),
                &r.predicted,
                &r.mpe_class,
                &r.empty_mask_predicted,
                &r.classified,
                &hash,
            ])?;
        }
        w.flush()?;
        for (r, filled) in records.iter().take(config.protocol.renders) {
            let truth = inliers.iter().find(|s| s.id == r.id).expect("record sample");
            let mut masked = truth.polar.clone();
            for j in 0..span {
                for rad in 0..spec.radial_bins {
                    masked.set((r.mask_start + j) % spec.angular_bins, rad, Cell::Unknown);
                }
            }
            write_pgm(&dir.join(format!("completion_{}_truth.pgm", r.id)), &truth.polar, spec)?;
            write_pgm(&dir.join(format!("completion_{}_masked.pgm", r.id)), &masked, spec)?;
            write_pgm(&dir.join(format!("completion_{}_completed.pgm", r.id)), filled, spec)?;
        }
        let accs: Vec<f64> = records.iter().map(|(r, _)| r.accuracy).collect();
        outcome.completion = Some(mean_std(&accs).0);
        outcome.completions = records.into_iter().map(|(r, _)| r).collect();
    }
    outcome.task_time = t1.elapsed();
    Ok(outcome)
}

fn fold_index(samples: &[PlaceSample], s: &PlaceSample) -> usize {
    // position in the full dataset keeps mask draws independent of the fold layout
    samples.iter().position(|x| std::ptr::eq(x, s)).unwrap_or(0)
}

fn write_aggregate(out: &Path, folds: &[FoldOutcome], classes: &[String]) -> Result<(), TaskError> {
    let mut w = csv_writer(&out.join("metrics.csv"))?;
    w.write_record([
        "fold",
        "test_floor",
        "model_hash",
        "train_samples",
        "test_samples",
        "initial_loglik",
        "final_loglik",
        "mean_class_accuracy",
        "auc",
        "completion_accuracy",
    ])?;
    let acc = |f: &FoldOutcome| f.confusion.as_ref().map(|c| c.mean_accuracy);
    let auc = |f: &FoldOutcome| f.roc.as_ref().map(|r| r.auc);
    for f in folds {
        w.write_record([
            f.fold.to_string(),
            f.test_floor.to_string(),
            f.model_hash.clone(),
            f.train_samples.to_string(),
            f.test_samples.to_string(),
            format!("{:.6}", f.initial_loglik),
            format!("{:.6}", f.final_loglik),
            fmt_opt(acc(f)),
            fmt_opt(auc(f)),
            fmt_opt(f.completion),
        ])?;
    }
    let stat = |get: &dyn Fn(&FoldOutcome) -> Option<f64>| -> Option<(f64, f64)> {
        let xs: Option<Vec<f64>> = folds.iter().map(get).collect();
        xs.map(|xs| mean_std(&xs))
    };
    let columns = [stat(&acc), stat(&auc), stat(&|f: &FoldOutcome| f.completion)];
    for (name, pick) in [("mean", 0usize), ("std", 1)] {
        let v = |c: &Option<(f64, f64)>| fmt_opt(c.map(|(m, s)| if pick == 0 { m } else { s }));
        w.write_record([
            name.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            v(&columns[0]),
            v(&columns[1]),
            v(&columns[2]),
        ])?;
    }
    w.flush()?;

    if folds.iter().any(|f| f.confusion.is_some()) {
        let mut w = csv_writer(&out.join("confusion.csv"))?;
        w.write_record(["fold", "true", "predicted", "rate"])?;
        for f in folds {
            if let Some(c) = &f.confusion {
                for (i, row) in c.matrix.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        w.write_record([f.fold.to_string(), classes[i].clone(), classes[j].clone(), format!("{v:.6}")])?;
                    }
                }
            }
        }
        w.flush()?;
    }
    if folds.iter().any(|f| f.roc.is_some()) {
        let mut w = csv_writer(&out.join("roc.csv"))?;
        w.write_record(["fold", "false_positive_rate", "true_positive_rate"])?;
        for f in folds {
            if let Some(r) = &f.roc {
                for (x, y) in &r.points {
                    w.write_record([f.fold.to_string(), format!("{x:.6}"), format!("{y:.6}")])?;
                }
            }
        }
        w.flush()?;
    }

    let mut s = String::new();
    for f in folds {
        let _ = writeln!(
            s,
            "fold {} (test floor {}): model {} train {} test {}",
            f.fold,
            f.test_floor,
            &f.model_hash[..16],
            f.train_samples,
            f.test_samples
        );
        let _ = writeln!(s, "  train log-likelihood {:.3} -> {:.3}", f.initial_loglik, f.final_loglik);
        if let Some(c) = &f.confusion {
            let per: Vec<String> = c.classes.iter().zip(&c.per_class).map(|(l, a)| format!("{l} {a:.3}")).collect();
            let _ = writeln!(s, "  classification {:.4} ({})", c.mean_accuracy, per.join(", "));
        }
        if let Some(r) = &f.roc {
            let _ = writeln!(s, "  novelty AUC {:.4}", r.auc);
        }
        if let Some(c) = f.completion {
            let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for r in &f.completions {
                by.entry(&r.label).or_default().push(r.accuracy);
            }
            let per: Vec<String> = by.iter().map(|(l, v)| format!("{l} {:.3}", mean_std(v).0)).collect();
            let _ = writeln!(s, "  completion {:.4} ({})", c, per.join(", "));
        }
    }
    let mut line = |name: &str, get: &dyn Fn(&FoldOutcome) -> Option<f64>| {
        if let Some((m, sd)) = stat(get) {
            let _ = writeln!(s, "{name}: {m:.4} ± {sd:.4}");
        }
    };
    line("mean class accuracy", &acc);
    line("novelty AUC", &auc);
    line("completion accuracy", &|f: &FoldOutcome| f.completion);
    fs::write(out.join("summary.txt"), s)?;
    Ok(())
}
