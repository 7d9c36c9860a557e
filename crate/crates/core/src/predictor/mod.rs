//! Initial weight prediction: a trajectory CNN, its training loop, a
//! k-means fallback and top-six weight extraction.

mod cluster;
mod cnn;
mod extract;
mod train;

pub use cluster::{cluster_trajectories, kmeans};
pub use cnn::{bce_loss, binary_accuracy, CnnGradient, CnnModel, ForwardPass, FILTERS, KERNEL, MIN_INPUT_LEN};
pub use extract::{extract_weights, ExtractedWeights, DEFAULT_EPSILON};
pub use train::{evaluate_model, train, EpochStats, TrainConfig, TrainOutcome};

use rayon::prelude::*;

use crate::anim::{trajectory, AnimSequence, Trajectory, WeightMap};
use crate::error::{Error, Result};

/// Upper bound on the bone count and the classifier's output width.
pub const DEFAULT_B_MAX: usize = 32;

/// Per-vertex binary bone-influence labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    rows: Vec<Vec<f64>>,
}

impl LabelSet {
    /// Checks that every entry is 0 or 1, rows share a width and each row
    /// has at least one 1.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width || width == 0 {
                return Err(Error::ShapeMismatch(format!("label row {i} has width {}, expected {width}", row.len())));
            }
            if row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidArgument(format!("label row {i} has a non-binary entry")));
            }
            if !row.contains(&1.0) {
                return Err(Error::InvalidArgument(format!("label row {i} has no bone")));
            }
        }
        Ok(Self { rows })
    }

    /// Labels marking every bone with positive weight, padded to `width`.
    pub fn from_weights(weights: &WeightMap, width: usize) -> Result<Self> {
        if weights.min_bone_count() > width {
            return Err(Error::InvalidArgument(format!(
                "weights reference {} bones but labels have width {width}",
                weights.min_bone_count()
            )));
        }
        Self::new(crate::anim::influence_labels(weights, width))
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    /// Widens every row with zeros.
    pub fn padded(&self, width: usize) -> Result<Self> {
        if width < self.width() {
            return Err(Error::InvalidArgument(format!("cannot shrink labels from {} to {width}", self.width())));
        }
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.resize(width, 0.0);
                r
            })
            .collect();
        Ok(Self { rows })
    }
}

/// Pairs every vertex trajectory of `seq` with its label row.
pub fn training_samples(seq: &AnimSequence, labels: &LabelSet) -> Result<Vec<(Trajectory, Vec<f64>)>> {
    if labels.rows().len() != seq.vertex_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} label rows for {} vertices",
            labels.rows().len(),
            seq.vertex_count()
        )));
    }
    labels
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| Ok((trajectory(seq, i)?, row.clone())))
        .collect()
}

/// Runs the classifier over every vertex trajectory.
pub fn predict(model: &CnnModel, seq: &AnimSequence) -> Result<Vec<Vec<f64>>> {
    let expected = model.input_len();
    let len = 3 * seq.frame_count();
    if expected != len {
        return Err(Error::ShapeMismatch(format!(
            "model was trained on trajectories of length {expected} ({} frames), animation has {} frames",
            expected / 3,
            seq.frame_count()
        )));
    }
    (0..seq.vertex_count())
        .into_par_iter()
        .map(|i| model.forward(&trajectory(seq, i)?.values))
        .collect()
}
