//! Animation data model: raw vertex sequences, proxy-bone transforms and
//! sparse skinning weights.

mod io;
mod lbs;
mod synth;

pub use io::{read_anim, write_anim};
pub use lbs::{face_normals, lbs_sequence, lbs_vertex, trajectory};
pub use synth::{make_synthetic_rig, RigParams, SyntheticRig};
pub(crate) use synth::influence_labels;

use nalgebra::{Matrix3x4, Vector3};

use crate::error::{Error, Result};

/// A point or direction in model space.
pub type Vec3 = Vector3<f64>;

/// A 3x4 affine bone transform `[R | t]`. The linear part is unconstrained.
pub type Affine = Matrix3x4<f64>;

/// Maximum number of bone influences stored per vertex.
pub const MAX_INFLUENCES: usize = 6;

/// Tolerance on the per-vertex weight sum.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Identity 3x4 transform.
pub fn identity_affine() -> Affine {
    Affine::identity()
}

/// Pure translation as a 3x4 transform.
pub fn translation_affine(t: Vec3) -> Affine {
    let mut m = Affine::identity();
    m.set_column(3, &t);
    m
}

/// A mesh animation: `P` frames of `N` vertex positions, a face list and a
/// rest pose.
#[derive(Debug, Clone, PartialEq)]
pub struct AnimSequence {
    rest_pose: Vec<Vec3>,
    frames: Vec<Vec<Vec3>>,
    faces: Vec<[usize; 3]>,
}

impl AnimSequence {
    /// Builds a sequence, checking that every frame has as many vertices as
    /// the rest pose, that faces are in range and that all values are finite.
    pub fn new(rest_pose: Vec<Vec3>, frames: Vec<Vec<Vec3>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = rest_pose.len();
        if n == 0 {
            return Err(Error::InvalidArgument("animation has no vertices".into()));
        }
        if frames.is_empty() {
            return Err(Error::InvalidArgument("animation has no frames".into()));
        }
        for (p, frame) in frames.iter().enumerate() {
            if frame.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "frame {p} has {} vertices, rest pose has {n}",
                    frame.len()
                )));
            }
            if frame.iter().any(|v| !all_finite(v)) {
                return Err(Error::NonFinite("frame positions"));
            }
        }
        if rest_pose.iter().any(|v| !all_finite(v)) {
            return Err(Error::NonFinite("rest pose"));
        }
        for (f, face) in faces.iter().enumerate() {
            for &i in face {
                if i >= n {
                    return Err(Error::FaceOutOfRange { face: f, index: i, count: n });
                }
            }
        }
        Ok(Self { rest_pose, frames, faces })
    }

    /// Builds a sequence whose rest pose is the given frame.
    pub fn with_rest_from_frame(frames: Vec<Vec<Vec3>>, faces: Vec<[usize; 3]>, frame: usize) -> Result<Self> {
        let rest = frames
            .get(frame)
            .ok_or(Error::FrameOutOfRange { index: frame, count: frames.len() })?
            .clone();
        Self::new(rest, frames, faces)
    }

    pub fn vertex_count(&self) -> usize {
        self.rest_pose.len()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn rest_pose(&self) -> &[Vec3] {
        &self.rest_pose
    }

    pub fn frames(&self) -> &[Vec<Vec3>] {
        &self.frames
    }

    pub fn frame(&self, p: usize) -> Result<&[Vec3]> {
        self.frames
            .get(p)
            .map(Vec::as_slice)
            .ok_or(Error::FrameOutOfRange { index: p, count: self.frames.len() })
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Returns a copy using frame `p` as the rest pose.
    pub fn rest_from_frame(&self, p: usize) -> Result<Self> {
        let rest = self.frame(p)?.to_vec();
        Ok(Self { rest_pose: rest, ..self.clone() })
    }

    /// Rebuilds a sequence from per-vertex trajectories (the inverse of
    /// [`trajectory`] applied to every vertex).
    pub fn from_trajectories(
        rest_pose: Vec<Vec3>,
        trajectories: &[Trajectory],
        faces: Vec<[usize; 3]>,
    ) -> Result<Self> {
        let n = rest_pose.len();
        if trajectories.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} trajectories for {n} vertices",
                trajectories.len()
            )));
        }
        let len = trajectories.first().map_or(0, |t| t.values.len());
        if len == 0 || len % 3 != 0 || trajectories.iter().any(|t| t.values.len() != len) {
            return Err(Error::ShapeMismatch("trajectories must share a length divisible by 3".into()));
        }
        let p = len / 3;
        let frames = (0..p)
            .map(|f| {
                trajectories
                    .iter()
                    .map(|t| Vec3::new(t.values[3 * f], t.values[3 * f + 1], t.values[3 * f + 2]))
                    .collect()
            })
            .collect();
        Self::new(rest_pose, frames, faces)
    }
}

fn all_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// The motion of a single vertex, flattened frame-major as
/// `x0, y0, z0, x1, y1, z1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub vertex_id: usize,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn frame_count(&self) -> usize {
        self.values.len() / 3
    }
}

/// Per-frame, per-bone affine transforms, indexed `[frame][bone]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneTransformSet {
    bone_count: usize,
    transforms: Vec<Vec<Affine>>,
}

impl BoneTransformSet {
    pub fn new(bone_count: usize, transforms: Vec<Vec<Affine>>) -> Result<Self> {
        if bone_count == 0 {
            return Err(Error::InvalidArgument("bone count must be positive".into()));
        }
        for (p, frame) in transforms.iter().enumerate() {
            if frame.len() != bone_count {
                return Err(Error::ShapeMismatch(format!(
                    "frame {p} has {} transforms, expected {bone_count}",
                    frame.len()
                )));
            }
            if frame.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
                return Err(Error::NonFinite("bone transforms"));
            }
        }
        Ok(Self { bone_count, transforms })
    }

    /// Identity transforms for every bone in every frame.
    pub fn identity(bone_count: usize, frame_count: usize) -> Self {
        Self {
            bone_count,
            transforms: vec![vec![Affine::identity(); bone_count]; frame_count],
        }
    }

    pub fn bone_count(&self) -> usize {
        self.bone_count
    }

    pub fn frame_count(&self) -> usize {
        self.transforms.len()
    }

    pub fn frame(&self, p: usize) -> &[Affine] {
        &self.transforms[p]
    }

    pub fn frames(&self) -> &[Vec<Affine>] {
        &self.transforms
    }

    pub fn get(&self, p: usize, bone: usize) -> &Affine {
        &self.transforms[p][bone]
    }
}

/// Sparse convex skinning weights: per vertex a list of `(bone, weight)`.
///
/// Invariants: at most [`MAX_INFLUENCES`] entries per vertex, unique bone
/// ids, non-negative weights summing to one within
/// [`WEIGHT_SUM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    influences: Vec<Vec<(usize, f64)>>,
}

impl WeightMap {
    /// Validates and wraps per-vertex influence lists.
    pub fn new(influences: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let map = Self { influences };
        map.check(None)?;
        Ok(map)
    }

    /// Every vertex fully bound to bone 0.
    pub fn rigid(vertex_count: usize) -> Self {
        Self { influences: vec![vec![(0, 1.0)]; vertex_count] }
    }

    pub fn vertex_count(&self) -> usize {
        self.influences.len()
    }

    pub fn influences(&self) -> &[Vec<(usize, f64)>] {
        &self.influences
    }

    pub fn vertex(&self, i: usize) -> &[(usize, f64)] {
        &self.influences[i]
    }

    pub fn into_inner(self) -> Vec<Vec<(usize, f64)>> {
        self.influences
    }

    /// Largest bone id referenced, plus one.
    pub fn min_bone_count(&self) -> usize {
        self.influences
            .iter()
            .flat_map(|v| v.iter().map(|&(b, _)| b + 1))
            .max()
            .unwrap_or(0)
    }

    /// Sum over vertices of the weight carried by each bone.
    pub fn bone_totals(&self, bone_count: usize) -> Vec<f64> {
        let mut totals = vec![0.0; bone_count];
        for vertex in &self.influences {
            for &(b, w) in vertex {
                if b < bone_count {
                    totals[b] += w;
                }
            }
        }
        totals
    }

    /// Checks every invariant, optionally also that bone ids are below
    /// `bone_count`.
    pub fn check(&self, bone_count: Option<usize>) -> Result<()> {
        for (i, vertex) in self.influences.iter().enumerate() {
            let bad = |reason: String| Error::InvalidWeights { vertex: i, reason };
            if vertex.is_empty() {
                return Err(bad("no influences".into()));
            }
            if vertex.len() > MAX_INFLUENCES {
                return Err(bad(format!("{} influences, at most {MAX_INFLUENCES} allowed", vertex.len())));
            }
            let mut sum = 0.0;
            for (k, &(b, w)) in vertex.iter().enumerate() {
                if !w.is_finite() || w < 0.0 {
                    return Err(bad(format!("weight {w} for bone {b}")));
                }
                if let Some(count) = bone_count {
                    if b >= count {
                        return Err(Error::BoneOutOfRange { index: b, count });
                    }
                }
                if vertex[..k].iter().any(|&(other, _)| other == b) {
                    return Err(bad(format!("bone {b} listed twice")));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(bad(format!("weights sum to {sum}")));
            }
        }
        Ok(())
    }
}

/// The compressed representation: rest pose, weights and per-frame bone
/// transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinningModel {
    rest_pose: Vec<Vec3>,
    weights: WeightMap,
    transforms: BoneTransformSet,
    faces: Vec<[usize; 3]>,
}

impl SkinningModel {
    pub fn new(
        rest_pose: Vec<Vec3>,
        weights: WeightMap,
        transforms: BoneTransformSet,
        faces: Vec<[usize; 3]>,
    ) -> Result<Self> {
        let n = rest_pose.len();
        if weights.vertex_count() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} weight rows for {n} vertices",
                weights.vertex_count()
            )));
        }
        if transforms.frame_count() == 0 {
            return Err(Error::InvalidArgument("model has no frames".into()));
        }
        weights.check(Some(transforms.bone_count()))?;
        for (f, face) in faces.iter().enumerate() {
            for &i in face {
                if i >= n {
                    return Err(Error::FaceOutOfRange { face: f, index: i, count: n });
                }
            }
        }
        Ok(Self { rest_pose, weights, transforms, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.rest_pose.len()
    }

    pub fn frame_count(&self) -> usize {
        self.transforms.frame_count()
    }

    pub fn bone_count(&self) -> usize {
        self.transforms.bone_count()
    }

    pub fn rest_pose(&self) -> &[Vec3] {
        &self.rest_pose
    }

    pub fn weights(&self) -> &WeightMap {
        &self.weights
    }

    pub fn transforms(&self) -> &BoneTransformSet {
        &self.transforms
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }
}
