//! Compress mesh animations into linear-blend-skinning models.
//!
//! The pipeline takes a raw sequence of per-frame vertex positions and
//! produces a rest pose, at most six convex bone weights per vertex and a
//! 3x4 affine transform for every bone in every frame:
//!
//! 1. per-vertex trajectories are classified into bone-influence
//!    probabilities, either by a small 1-D CNN ([`predictor::CnnModel`]) or by
//!    trajectory k-means ([`predictor::cluster_trajectories`]);
//! 2. the six most probable bones per vertex become initial weights and
//!    the set of used bones fixes the bone count
//!    ([`predictor::extract_weights`]);
//! 3. transforms and weights are refined alternately by constrained least
//!    squares ([`fitting::alternate`]);
//! 4. the result is scored with [`metrics`] and stored with [`codec`].
//!
//! The guide in `book/` walks through each stage.

pub mod anim;
pub mod codec;
mod error;
pub mod fitting;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
mod sum;

pub use anim::{AnimSequence, BoneTransformSet, SkinningModel, Trajectory, Vec3, WeightMap};
pub use error::{Error, Result};

// Compile the guide's code listings as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/skinning.md")]
    mod skinning {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/predictor.md")]
    mod predictor {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/codec.md")]
    mod codec {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
