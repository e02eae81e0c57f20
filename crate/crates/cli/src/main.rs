use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dgsm::dataset::{generate_world, read_dataset, roc_auc, write_dataset, PlaceSample};
use dgsm::learning::{train, write_train_log};
use dgsm::polar::{mask_view, pgm_bytes, render_polar, write_polar};
use dgsm::spn::{Evidence, Workspace};
use dgsm::structure::derived_rng;
use dgsm::tasks::{
    read_model, run_experiment, write_model, CompletionMode, ExperimentConfig, Model, Task, TaskError,
};
use rand::Rng;

/// Generative place model over polar occupancy grids.
#[derive(Parser, Debug)]
#[command(name = "dgsm", version)]
struct Cli {
    /// TOML config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Reseed data generation, structure and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Also write the Cartesian maps.
        #[arg(long)]
        cartesian: bool,
    },
    /// Build an untrained model.
    Build {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on the inlier samples of a dataset.
    Train {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Leave this floor out of training.
        #[arg(long)]
        exclude_floor: Option<usize>,
        /// Where to write the per-iteration log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Predict the class of every sample whose label the model knows.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        floor: Option<usize>,
    },
    /// Score every sample; report AUC when novel samples are present.
    Novelty {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        floor: Option<usize>,
    },
    /// Most probable grid for each class (or one class).
    Prototype {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "class")]
        class: Option<String>,
    },
    /// Hide a sector of every sample and infer it back.
    Complete {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        floor: Option<usize>,
        /// First hidden angular bin; drawn per sample when absent.
        #[arg(long)]
        mask_start: Option<usize>,
        #[arg(long)]
        mask_span: Option<usize>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<CompletionMode>,
    },
    /// Full leave-one-floor-out protocol.
    Experiment {
        #[arg(long)]
        out: PathBuf,
        /// Load this dataset instead of generating one.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Comma-separated subset of classify,novelty,prototype,complete.
        #[arg(long, value_delimiter = ',', value_parser = parse_task)]
        tasks: Option<Vec<Task>>,
    },
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: TaskError| e.to_string())
}

fn parse_mode(s: &str) -> Result<CompletionMode, String> {
    match s {
        "max" => Ok(CompletionMode::Max),
        "sum" => Ok(CompletionMode::Sum),
        _ => Err(format!("unknown completion mode `{s}` (max or sum)")),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, TaskError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_toml(
            &fs::read_to_string(p).map_err(|e| TaskError::from(e).context(p.display().to_string()))?,
        )?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    Ok(cfg)
}

fn load_model(path: &Path) -> Result<Model, TaskError> {
    let f = File::open(path).map_err(|e| TaskError::from(e).context(path.display().to_string()))?;
    read_model(BufReader::new(f)).map_err(|e| e.context(path.display().to_string()))
}

fn save_model(model: &Model, path: &Path) -> Result<(), TaskError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

fn load_samples(dir: &Path, model: &Model, floor: Option<usize>) -> Result<Vec<PlaceSample>, TaskError> {
    let mut samples = read_dataset(dir, &model.spec).map_err(|e| TaskError::from(e).context(dir.display().to_string()))?;
    if let Some(f) = floor {
        samples.retain(|s| s.floor == f);
    }
    Ok(samples)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, TaskError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<(), TaskError> {
    let cfg = load_config(&cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(TaskError::Config("no subcommand given (see --help)".into()));
    };
    let spec = cfg.polar.spec()?;
    match command {
        Command::GenData { out, cartesian } => {
            let samples = generate_world(&cfg.world, &spec)?;
            write_dataset(&out, &samples, &spec, cartesian)?;
            eprintln!("wrote {} samples to {}", samples.len(), out.display());
        }
        Command::Build { out } => {
            let model = Model::build(&spec, &cfg.model, &mut derived_rng(cfg.model.seed, &[]))?;
            save_model(&model, &out)?;
            let c = model.graph.count_kinds();
            eprintln!(
                "built {} indicators, {} sums, {} products, {} edges",
                c.indicators, c.sums, c.products, c.edges
            );
        }
        Command::Train { model, dataset, out, exclude_floor, log } => {
            let m = load_model(&model)?;
            let samples = load_samples(&dataset, &m, None)?;
            let data: Vec<Evidence> = samples
                .iter()
                .filter(|s| m.labels().contains(&s.label) && Some(s.floor) != exclude_floor)
                .map(|s| m.labeled_evidence(&s.polar, &s.label))
                .collect::<Result<_, _>>()?;
            let outcome = train(m.graph.clone(), &data, &cfg.train)?;
            eprintln!(
                "trained on {} samples: log-likelihood {:.3} -> {:.3}",
                data.len(),
                outcome.initial_loglik(),
                outcome.final_loglik()
            );
            if let Some(p) = log {
                write_train_log(&outcome.log, BufWriter::new(File::create(p)?))?;
            }
            let trained = Model { graph: outcome.graph, ..m };
            save_model(&trained, &out)?;
            println!("model_hash {}", trained.graph.weight_hash());
        }
        Command::Classify { model, dataset, out, floor } => {
            let m = load_model(&model)?;
            let samples = load_samples(&dataset, &m, floor)?;
            let hash = m.graph.weight_hash();
            let mut w = output(&out)?;
            writeln!(w, "id,label,predicted,model_hash")?;
            let mut ws = Workspace::new();
            let (mut hits, mut n) = (0usize, 0usize);
            for s in samples.iter().filter(|s| m.labels().contains(&s.label)) {
                let c = m.classify(&s.polar, &mut ws).map_err(|e| e.context(s.id.clone()))?;
                writeln!(w, "{},{},{},{hash}", s.id, s.label, c.label)?;
                hits += usize::from(c.label == s.label);
                n += 1;
            }
            w.flush()?;
            eprintln!("accuracy {:.4} over {n} samples", hits as f64 / n.max(1) as f64);
        }
        Command::Novelty { model, dataset, out, floor } => {
            let m = load_model(&model)?;
            let samples = load_samples(&dataset, &m, floor)?;
            let hash = m.graph.weight_hash();
            let mut w = output(&out)?;
            writeln!(w, "id,label,inlier,score,model_hash")?;
            let mut ws = Workspace::new();
            let mut pairs = Vec::with_capacity(samples.len());
            for s in &samples {
                let score = m.novelty_score(&s.polar, &mut ws).map_err(|e| e.context(s.id.clone()))?;
                let inlier = m.labels().contains(&s.label);
                writeln!(w, "{},{},{},{score:.6},{hash}", s.id, s.label, u8::from(inlier))?;
                pairs.push((score, inlier));
            }
            w.flush()?;
            if let Ok(roc) = roc_auc(&pairs) {
                eprintln!("AUC {:.4}", roc.auc);
            }
        }
        Command::Prototype { model, out, class } => {
            let m = load_model(&model)?;
            fs::create_dir_all(&out)?;
            let labels: Vec<String> = match class {
                Some(c) => vec![c],
                None => m.labels().to_vec(),
            };
            for label in labels {
                let grid = m.prototype(&label)?;
                write_polar(&grid, &m.spec, BufWriter::new(File::create(out.join(format!("{label}.grid")))?))?;
                fs::write(out.join(format!("{label}.pgm")), pgm_bytes(256, 256, &render_polar(&grid, &m.spec, 256)))?;
                eprintln!("prototype {label} written");
            }
        }
        Command::Complete { model, dataset, out, floor, mask_start, mask_span, mode } => {
            let m = load_model(&model)?;
            let samples = load_samples(&dataset, &m, floor)?;
            let span = mask_span.unwrap_or(cfg.protocol.mask_span);
            let mode = mode.unwrap_or(cfg.protocol.completion_mode);
            let hash = m.graph.weight_hash();
            let mut w = output(&out)?;
            writeln!(w, "id,label,mask_start,accuracy,predicted,mpe_class,model_hash")?;
            let mut ws = Workspace::new();
            let mut total = 0.0;
            let mut n = 0usize;
            for (i, s) in samples.iter().enumerate().filter(|(_, s)| m.labels().contains(&s.label)) {
                let start = mask_start
                    .unwrap_or_else(|| derived_rng(cfg.train.seed, &[i as u64]).gen_range(0..m.spec.angular_bins));
                let (ev, masked) = mask_view(&m.evidence(&s.polar)?, &m.spec, start, span);
                let c = m.complete(&ev, &masked, mode, &mut ws).map_err(|e| e.context(s.id.clone()))?;
                let acc = dgsm::dataset::completion_accuracy(&s.polar, &c.assignment, &masked)?;
                writeln!(w, "{},{},{start},{acc:.6},{},{},{hash}", s.id, s.label, c.label, c.mpe_label)?;
                total += acc;
                n += 1;
            }
            w.flush()?;
            eprintln!("mean masked-cell accuracy {:.4} over {n} samples", total / n.max(1) as f64);
        }
        Command::Experiment { out, dataset, tasks } => {
            let mut cfg = cfg;
            if let Some(t) = tasks {
                cfg.protocol.tasks = t;
            }
            let samples = match dataset {
                Some(d) => read_dataset(&d, &spec).map_err(|e| TaskError::from(e).context(d.display().to_string()))?,
                None => generate_world(&cfg.world, &spec)?,
            };
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.toml"), cfg.to_toml())?;
            let summary = run_experiment(&cfg, &samples, &out)?;
            for f in &summary.folds {
                eprintln!(
                    "fold {}: trained in {:.1}s, tasks in {:.1}s",
                    f.fold,
                    f.train_time.as_secs_f64(),
                    f.task_time.as_secs_f64()
                );
            }
            eprintln!("experiment finished in {:.1}s", summary.elapsed.as_secs_f64());
            print!("{}", fs::read_to_string(out.join("summary.txt"))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
