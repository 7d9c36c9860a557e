//! Alternating least-squares refinement of skinning weights and bone
//! transforms.
//!
//! Both subproblems minimize the summed squared reconstruction error
//! `sum_p sum_i ||v'_i^p - v_i^p||^2`. The transform system is
//! block-diagonal by frame (each frame owns its `12B` unknowns) and is
//! solved with CGLS; the weight system is block-diagonal by vertex (each
//! vertex owns at most six unknowns plus a sum-to-one row) and is solved
//! with active-set NNLS.

mod alternate;
mod cgls;
mod nnls;
mod transforms;
mod weights;

pub use alternate::{alternate, FitTrace, StepKind, TraceStep};
pub use cgls::{cgls, cgls_dense, CglsOptions, CglsOutcome};
pub use nnls::{nnls, NnlsSolution};
pub use transforms::{frame_system, solve_transforms, solve_transforms_from, TRANSFORM_PARAMS};
pub use weights::{solve_weights, vertex_weight_system};

use crate::anim::{lbs_vertex, AnimSequence, BoneTransformSet, WeightMap};
use crate::error::Result;
use crate::sum::CompensatedSum;

/// Tikhonov damping added to the transform normal equations when a bone's
/// columns are rank deficient.
pub const RANK_DEFICIENT_DAMPING: f64 = 1e-8;

/// Solver settings shared by the fitting steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Number of (weight fit, transform fit) rounds after the first
    /// transform fit.
    pub alternation_iterations: usize,
    /// Relative normal-equation residual at which CGLS stops.
    pub cg_tolerance: f64,
    /// CGLS iteration cap; `None` means ten times the unknown count.
    pub cg_max_iterations: Option<usize>,
    /// Scale of the per-vertex sum-to-one equation.
    pub convexity_row_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { alternation_iterations: 5, cg_tolerance: 1e-10, cg_max_iterations: None, convexity_row_scale: 1.0 }
    }
}

/// Non-fatal conditions met while fitting.
#[derive(Debug, Clone, PartialEq)]
pub enum FitWarning {
    /// The bone's transform columns are rank deficient; damping was applied.
    RankDeficientBone { bone: usize, total_weight: f64 },
    /// CGLS hit its iteration cap for this frame.
    CgNotConverged { frame: usize, relative_residual: f64 },
    /// NNLS produced no usable weights; the previous weights were kept.
    DegenerateVertex { vertex: usize },
}

impl std::fmt::Display for FitWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::RankDeficientBone { bone, total_weight } => {
                write!(f, "bone {bone} is rank deficient (total weight {total_weight:.3e}); damping applied")
            }
            Self::CgNotConverged { frame, relative_residual } => {
                write!(f, "conjugate gradient did not converge in frame {frame} (residual {relative_residual:.3e})")
            }
            Self::DegenerateVertex { vertex } => write!(f, "vertex {vertex} has no usable weights; kept previous"),
        }
    }
}

/// Summed squared reconstruction error over all frames and vertices.
pub fn objective(seq: &AnimSequence, weights: &WeightMap, transforms: &BoneTransformSet) -> Result<f64> {
    let mut total = CompensatedSum::default();
    for (frame, targets) in transforms.frames().iter().zip(seq.frames()) {
        for (i, (rest, target)) in seq.rest_pose().iter().zip(targets).enumerate() {
            let v = lbs_vertex(rest, weights.vertex(i), frame)?;
            total.add((v - target).norm_squared());
        }
    }
    Ok(total.total())
}

/// ERMS (times 100) implied by an objective value.
pub fn erms_from_objective(objective: f64, vertex_count: usize, frame_count: usize) -> f64 {
    100.0 * (objective / (3.0 * vertex_count as f64 * frame_count as f64)).sqrt()
}
