use crate::anim::{WeightMap, MAX_INFLUENCES};
use crate::error::{Error, Result};

/// Pruning threshold relative to each vertex's largest probability.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Initial weights derived from per-vertex bone probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedWeights {
    /// Weights over the dense bone ids `0..bone_count`.
    pub weights: WeightMap,
    /// Number of bones retained by at least one vertex.
    pub bone_count: usize,
    /// For each dense bone id, the label index it came from.
    pub active_labels: Vec<usize>,
}

/// Keeps the six most probable bones per vertex, drops those below
/// `epsilon` times the vertex's largest probability, renormalizes to a
/// convex combination and renumbers the surviving bones densely.
///
/// Ties are broken toward the lower bone index.
pub fn extract_weights(probabilities: &[Vec<f64>], epsilon: f64) -> Result<ExtractedWeights> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let width = probabilities.first().map_or(0, Vec::len);
    let mut per_vertex = Vec::with_capacity(probabilities.len());
    for (i, row) in probabilities.iter().enumerate() {
        if row.len() != width {
            return Err(Error::ShapeMismatch(format!("vertex {i} has {} probabilities, expected {width}", row.len())));
        }
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidWeights { vertex: i, reason: "probability outside [0, 1]".into() });
        }
        let mut ranked: Vec<usize> = (0..width).collect();
        ranked.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        ranked.truncate(MAX_INFLUENCES);
        let top = ranked.first().map_or(0.0, |&b| row[b]);
        if top <= 0.0 {
            return Err(Error::InvalidWeights { vertex: i, reason: "all probabilities are zero".into() });
        }
        let kept: Vec<(usize, f64)> = ranked
            .into_iter()
            .filter(|&b| row[b] > 0.0 && row[b] >= epsilon * top)
            .map(|b| (b, row[b]))
            .collect();
        let total: f64 = kept.iter().map(|&(_, p)| p).sum();
        per_vertex.push(kept.into_iter().map(|(b, p)| (b, p / total)).collect::<Vec<_>>());
    }

    let mut dense = vec![usize::MAX; width];
    let mut active_labels = Vec::new();
    for label in 0..width {
        if per_vertex.iter().any(|v| v.iter().any(|&(b, _)| b == label)) {
            dense[label] = active_labels.len();
            active_labels.push(label);
        }
    }
    let influences = per_vertex
        .into_iter()
        .map(|v| v.into_iter().map(|(b, w)| (dense[b], w)).collect())
        .collect();
    let weights = WeightMap::new(influences)?;
    Ok(ExtractedWeights { weights, bone_count: active_labels.len(), active_labels })
}
