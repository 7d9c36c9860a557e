//! Per-vertex convex weight fitting.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::nnls::nnls;
use super::{FitWarning, SolverConfig};
use crate::anim::{lbs_vertex, AnimSequence, BoneTransformSet, WeightMap};
use crate::error::{Error, Result};

/// The `(3P + 1) x k` system for one vertex and its `k` candidate bones:
/// `3P` position rows followed by the sum-to-one row scaled by
/// `convexity_scale`.
pub fn vertex_weight_system(
    seq: &AnimSequence,
    transforms: &BoneTransformSet,
    vertex: usize,
    bones: &[usize],
    convexity_scale: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = seq.vertex_count();
    if vertex >= n {
        return Err(Error::VertexOutOfRange { index: vertex, count: n });
    }
    if let Some(&b) = bones.iter().find(|&&b| b >= transforms.bone_count()) {
        return Err(Error::BoneOutOfRange { index: b, count: transforms.bone_count() });
    }
    let p = seq.frame_count();
    let h = seq.rest_pose()[vertex].push(1.0);
    let mut a = DMatrix::zeros(3 * p + 1, bones.len());
    let mut b = DVector::zeros(3 * p + 1);
    for (f, target) in seq.frames().iter().enumerate() {
        for (k, &bone) in bones.iter().enumerate() {
            let moved = transforms.get(f, bone) * h;
            a.view_mut((3 * f, k), (3, 1)).copy_from(&moved);
        }
        b.rows_mut(3 * f, 3).copy_from(&target[vertex]);
    }
    a.row_mut(3 * p).fill(convexity_scale);
    b[3 * p] = convexity_scale;
    Ok((a, b))
}

fn vertex_error(seq: &AnimSequence, transforms: &BoneTransformSet, vertex: usize, influences: &[(usize, f64)]) -> f64 {
    let rest = &seq.rest_pose()[vertex];
    seq.frames()
        .iter()
        .zip(transforms.frames())
        .map(|(targets, t)| (lbs_vertex(rest, influences, t).expect("inputs validated") - targets[vertex]).norm_squared())
        .sum()
}

/// Re-solves every vertex's weights over the bones it already references
/// in `previous`, with transforms held fixed.
///
/// Each vertex gets a non-negative least-squares solve followed by exact
/// renormalization. Slots that reach zero are kept so the support stays
/// fixed. A vertex keeps its previous weights when the new ones would not
/// lower its error, or when every candidate comes out zero (reported as
/// [`FitWarning::DegenerateVertex`]).
pub fn solve_weights(
    seq: &AnimSequence,
    transforms: &BoneTransformSet,
    previous: &WeightMap,
    config: &SolverConfig,
) -> Result<(WeightMap, Vec<FitWarning>)> {
    let n = seq.vertex_count();
    if previous.vertex_count() != n {
        return Err(Error::ShapeMismatch(format!("{} weight rows for {n} vertices", previous.vertex_count())));
    }
    if transforms.frame_count() != seq.frame_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} transform frames for {} animation frames",
            transforms.frame_count(),
            seq.frame_count()
        )));
    }
    if !(config.convexity_row_scale > 0.0 && config.convexity_row_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("convexity row scale {}", config.convexity_row_scale)));
    }
    previous.check(Some(transforms.bone_count()))?;

    let solved: Vec<(Vec<(usize, f64)>, Option<FitWarning>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let old = previous.vertex(i);
            let bones: Vec<usize> = old.iter().map(|&(b, _)| b).collect();
            if bones.len() == 1 {
                return Ok((vec![(bones[0], 1.0)], None));
            }
            let (a, b) = vertex_weight_system(seq, transforms, i, &bones, config.convexity_row_scale)?;
            let x = nnls(&a, &b).x;
            let sum: f64 = x.iter().sum();
            if !(sum > 0.0 && sum.is_finite()) {
                return Ok((old.to_vec(), Some(FitWarning::DegenerateVertex { vertex: i })));
            }
            let candidate: Vec<(usize, f64)> = bones.iter().zip(x.iter()).map(|(&b, &w)| (b, w / sum)).collect();
            if vertex_error(seq, transforms, i, &candidate) > vertex_error(seq, transforms, i, old) {
                Ok((old.to_vec(), None))
            } else {
                Ok((candidate, None))
            }
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for (row, w) in solved {
        rows.push(row);
        warnings.extend(w);
    }
    Ok((WeightMap::new(rows)?, warnings))
}
