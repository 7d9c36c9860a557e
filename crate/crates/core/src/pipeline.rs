//! End-to-end decomposition: initial weights, alternation, scoring and
//! encoding.

use std::fmt;
use std::str::FromStr;

use crate::anim::{lbs_sequence, AnimSequence, SkinningModel};
use crate::codec::{encode, report_sizes};
use crate::error::{Error, Result};
use crate::fitting::{alternate, FitTrace, SolverConfig};
use crate::metrics::{evaluate, ErrorReport, SizeReport};
use crate::predictor::{cluster_trajectories, extract_weights, predict, CnnModel, DEFAULT_EPSILON};

/// Where the initial bone-influence probabilities come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Initializer {
    /// A trained trajectory classifier.
    Cnn(CnnModel),
    /// Trajectory k-means with `k` clusters (one-hot probabilities).
    Cluster(usize),
}

/// Unresolved initializer as written on a command line: `cluster:<k>` or
/// `cnn:<checkpoint path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitializerSpec {
    Cnn(String),
    Cluster(usize),
}

impl FromStr for InitializerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("initializer `{s}`: expected cluster:<k> or cnn:<path>"));
        match s.split_once(':') {
            Some(("cluster", k)) => match k.parse::<usize>() {
                Ok(k) if k > 0 => Ok(Self::Cluster(k)),
                _ => Err(bad()),
            },
            Some(("cnn", path)) if !path.is_empty() => Ok(Self::Cnn(path.to_string())),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for InitializerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Cnn(path) => write!(f, "cnn:{path}"),
            Self::Cluster(k) => write!(f, "cluster:{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub initializer: Initializer,
    pub solver: SolverConfig,
    /// Probabilities below `epsilon` times a vertex's largest are dropped.
    pub epsilon: f64,
    /// Seed for the clustering initializer.
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(initializer: Initializer) -> Self {
        Self { initializer, solver: SolverConfig::default(), epsilon: DEFAULT_EPSILON, seed: 0 }
    }
}

/// Everything [`decompose`] produces.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub model: SkinningModel,
    pub trace: FitTrace,
    pub report: ErrorReport,
    pub sizes: SizeReport,
    /// Encoded container bytes.
    pub encoded: Vec<u8>,
    /// Classifier label index behind each fitted bone.
    pub active_labels: Vec<usize>,
}

/// Per-vertex bone-influence probabilities from the chosen initializer.
pub fn initial_probabilities(seq: &AnimSequence, initializer: &Initializer, seed: u64) -> Result<Vec<Vec<f64>>> {
    match initializer {
        Initializer::Cnn(model) => predict(model, seq),
        Initializer::Cluster(k) => Ok(cluster_trajectories(seq, *k, seed)?.into_rows()),
    }
}

/// Runs initializer, weight extraction, alternation, scoring and encoding.
pub fn decompose(seq: &AnimSequence, config: &PipelineConfig) -> Result<Decomposition> {
    let probabilities = initial_probabilities(seq, &config.initializer, config.seed)?;
    let extracted = extract_weights(&probabilities, config.epsilon)?;
    log::info!(
        "{} vertices, {} frames, {} bones from the initializer",
        seq.vertex_count(),
        seq.frame_count(),
        extracted.bone_count
    );
    let (model, trace) = alternate(seq, &extracted.weights, extracted.bone_count, &config.solver)?;
    let approx = lbs_sequence(&model)?;
    let report = evaluate(seq, &approx, model.bone_count())?;
    let sizes = report_sizes(&model, seq)?;
    let encoded = encode(&model)?;
    Ok(Decomposition { model, trace, report, sizes, encoded, active_labels: extracted.active_labels })
}
