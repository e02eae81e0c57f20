//! Labeled place observations: a synthetic generator, leave-one-floor-out
//! splits, on-disk persistence and evaluation metrics.

mod metrics;
mod store;
mod world;

pub use metrics::{completion_accuracy, confusion, mean_std, roc_auc, Confusion, MetricsReport, Roc};
pub use store::{read_dataset, write_dataset, ManifestRow, MANIFEST};
pub use world::{
    add_noise, generate_room, generate_world, rasterize, render_sample, sample_pose, Rect, Room, Scene,
    WorldParams, INLIER_CLASSES, NOVEL_CLASSES,
};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::polar::{CartesianGrid, GridError, PolarGrid};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid world parameters: {0}")]
    InvalidParams(String),
    #[error("no robot pose fits inside the sampled {0} room")]
    InfeasibleGeometry(String),
    #[error("scores contain only one class")]
    SingleClass,
    #[error("true class `{0}` has no samples")]
    EmptyClass(String),
    #[error("label `{0}` is not in the class order")]
    UnknownLabel(String),
    #[error("inputs differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("assignment does not cover the masked set: {0}")]
    CoverageMismatch(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One labeled observation. `polar` is the polar view of the raytraced
/// `cartesian` map; the Cartesian map is dropped when loading from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaceSample {
    pub id: String,
    pub label: String,
    pub floor: usize,
    pub cartesian: Option<CartesianGrid>,
    pub polar: PolarGrid,
}

/// Train and test sample indices for one held-out floor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub test_floor: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Leave-one-floor-out folds. Samples whose label is not in `train_classes`
/// only ever appear in test sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
}

impl SplitPlan {
    pub fn leave_one_floor_out(samples: &[PlaceSample], train_classes: &[String]) -> SplitPlan {
        let floors: BTreeSet<usize> = samples.iter().map(|s| s.floor).collect();
        let folds = floors
            .iter()
            .map(|&f| {
                let mut fold = Fold { test_floor: f, train: Vec::new(), test: Vec::new() };
                for (i, s) in samples.iter().enumerate() {
                    if s.floor == f {
                        fold.test.push(i);
                    } else if train_classes.contains(&s.label) {
                        fold.train.push(i);
                    }
                }
                fold
            })
            .collect();
        SplitPlan { folds }
    }
}
