//! Procedural articulated-chain animations with known skinning.
//!
//! A chain of `bones` unit-length segments lies along +x. Vertices sit on a
//! helical tube around the chain axis and are triangulated as a strip. Each
//! joint rotates about a fixed random axis with a sinusoidal angle, the root
//! additionally translates, and bone transforms are accumulated down the
//! chain. Vertices near an interior joint blend the two adjacent bones with
//! a smoothstep falloff.

use std::f64::consts::TAU;

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{lbs_vertex, Affine, AnimSequence, BoneTransformSet, SkinningModel, Vec3, WeightMap};
use crate::error::{Error, Result};

const RING: usize = 6;
const TUBE_RADIUS: f64 = 0.25;

/// Knobs for [`SyntheticRig::generate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigParams {
    pub bones: usize,
    pub vertices_per_segment: usize,
    pub frames: usize,
    pub seed: u64,
    /// Half-width (in segment lengths) of the blend zone around each
    /// interior joint. Zero gives rigid one-bone-per-vertex weights.
    pub blend_width: f64,
    /// Peak joint rotation in radians.
    pub amplitude: f64,
}

impl RigParams {
    pub fn new(bones: usize, vertices_per_segment: usize, frames: usize, seed: u64) -> Self {
        Self { bones, vertices_per_segment, frames, seed, blend_width: 0.25, amplitude: 0.5 }
    }

    pub fn blend_width(mut self, width: f64) -> Self {
        self.blend_width = width;
        self
    }

    pub fn amplitude(mut self, radians: f64) -> Self {
        self.amplitude = radians;
        self
    }
}

/// A generated animation together with the weights and transforms that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRig {
    pub sequence: AnimSequence,
    pub weights: WeightMap,
    pub transforms: BoneTransformSet,
}

/// Shorthand for [`SyntheticRig::generate`] with default blend and amplitude.
pub fn make_synthetic_rig(
    bones: usize,
    vertices_per_segment: usize,
    frames: usize,
    seed: u64,
) -> Result<(AnimSequence, WeightMap, BoneTransformSet)> {
    let rig = SyntheticRig::generate(RigParams::new(bones, vertices_per_segment, frames, seed))?;
    Ok((rig.sequence, rig.weights, rig.transforms))
}

struct JointMotion {
    axis: Unit<Vec3>,
    amplitude: f64,
    frequency: f64,
    phase: f64,
}

impl SyntheticRig {
    pub fn generate(params: RigParams) -> Result<Self> {
        let RigParams { bones, vertices_per_segment: per_segment, frames, seed, blend_width, amplitude } = params;
        if bones == 0 || per_segment == 0 {
            return Err(Error::InvalidArgument("rig needs at least one bone and one vertex per segment".into()));
        }
        if frames < 2 {
            return Err(Error::InvalidArgument("rig needs at least two frames".into()));
        }
        if !(0.0..=0.5).contains(&blend_width) {
            return Err(Error::InvalidArgument(format!("blend width {blend_width} outside [0, 0.5]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = bones * per_segment;

        let rest: Vec<Vec3> = (0..n)
            .map(|g| {
                let u = (g as f64 + 0.5) / per_segment as f64;
                let theta = TAU * (g % RING) as f64 / RING as f64;
                Vec3::new(u, TUBE_RADIUS * theta.cos(), TUBE_RADIUS * theta.sin())
            })
            .collect();
        let faces: Vec<[usize; 3]> = (0..n.saturating_sub(RING + 1))
            .flat_map(|g| [[g, g + 1, g + RING], [g + 1, g + RING + 1, g + RING]])
            .collect();

        let influences = rest
            .iter()
            .map(|v| chain_weights(v.x, bones, blend_width))
            .collect();
        let weights = WeightMap::new(influences)?;

        let motions: Vec<JointMotion> = (0..bones)
            .map(|_| {
                let axis = loop {
                    let candidate = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    if candidate.norm() > 0.2 {
                        break Unit::new_normalize(candidate);
                    }
                };
                JointMotion {
                    axis,
                    amplitude: amplitude * rng.gen_range(0.5..1.0),
                    frequency: rng.gen_range(0.5..1.5),
                    phase: rng.gen_range(0.0..TAU),
                }
            })
            .collect();
        let sway = [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)];

        let transforms: Vec<Vec<Affine>> = (0..frames)
            .map(|p| {
                let t = p as f64 / frames as f64;
                let root = Translation3::new(
                    0.3 * (TAU * t + sway[0]).sin(),
                    0.2 * (TAU * t + sway[1]).sin(),
                    0.0,
                );
                let mut parent = Isometry3::from_parts(root, UnitQuaternion::identity());
                motions
                    .iter()
                    .enumerate()
                    .map(|(j, m)| {
                        let angle = m.amplitude * (TAU * m.frequency * t + m.phase).sin();
                        let pivot = Translation3::new(j as f64, 0.0, 0.0);
                        let local = Isometry3::from_parts(pivot, UnitQuaternion::from_axis_angle(&m.axis, angle))
                            * Isometry3::from_parts(pivot.inverse(), UnitQuaternion::identity());
                        parent *= local;
                        parent.to_homogeneous().fixed_view::<3, 4>(0, 0).into_owned()
                    })
                    .collect()
            })
            .collect();
        let transforms = BoneTransformSet::new(bones, transforms)?;

        let positions = transforms
            .frames()
            .iter()
            .map(|frame| {
                rest.iter()
                    .enumerate()
                    .map(|(i, v)| lbs_vertex(v, weights.vertex(i), frame))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let sequence = AnimSequence::new(rest, positions, faces)?;
        Ok(Self { sequence, weights, transforms })
    }

    /// The generating skinning model.
    pub fn model(&self) -> SkinningModel {
        SkinningModel::new(
            self.sequence.rest_pose().to_vec(),
            self.weights.clone(),
            self.transforms.clone(),
            self.sequence.faces().to_vec(),
        )
        .expect("generated rig is consistent")
    }

    /// Binary influence labels of width `b_max` (1 where a bone has
    /// positive weight on the vertex).
    pub fn labels(&self, b_max: usize) -> Vec<Vec<f64>> {
        influence_labels(&self.weights, b_max)
    }
}

/// Binary influence labels from a weight map.
pub(crate) fn influence_labels(weights: &WeightMap, b_max: usize) -> Vec<Vec<f64>> {
    weights
        .influences()
        .iter()
        .map(|vertex| {
            let mut row = vec![0.0; b_max];
            for &(b, w) in vertex {
                if w > 0.0 && b < b_max {
                    row[b] = 1.0;
                }
            }
            row
        })
        .collect()
}

fn chain_weights(u: f64, bones: usize, half_width: f64) -> Vec<(usize, f64)> {
    for joint in 1..bones {
        let d = u - joint as f64;
        if half_width > 0.0 && d.abs() < half_width {
            let s = smoothstep((d + half_width) / (2.0 * half_width));
            return vec![(joint - 1, 1.0 - s), (joint, s)]
                .into_iter()
                .filter(|&(_, w)| w > 0.0)
                .collect();
        }
    }
    vec![((u.floor().max(0.0) as usize).min(bones - 1), 1.0)]
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anim::lbs_sequence;

    #[test]
    fn single_bone_is_rigid() {
        let (_, weights, transforms) = make_synthetic_rig(1, 40, 5, 3).unwrap();
        assert_eq!(transforms.bone_count(), 1);
        assert!(weights.influences().iter().all(|v| v == &vec![(0, 1.0)]));
    }

    #[test]
    fn playback_matches_sequence() {
        let rig = SyntheticRig::generate(RigParams::new(3, 30, 12, 7)).unwrap();
        let replay = lbs_sequence(&rig.model()).unwrap();
        for (a, b) in replay.frames().iter().flatten().zip(rig.sequence.frames().iter().flatten()) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = make_synthetic_rig(4, 20, 10, 99).unwrap();
        let b = make_synthetic_rig(4, 20, 10, 99).unwrap();
        assert_eq!(a, b);
        let c = make_synthetic_rig(4, 20, 10, 100).unwrap();
        assert_ne!(a.2, c.2);
    }

    #[test]
    fn at_most_two_influences_and_convex() {
        let rig = SyntheticRig::generate(RigParams::new(5, 25, 4, 1)).unwrap();
        rig.weights.check(Some(5)).unwrap();
        assert!(rig.weights.influences().iter().all(|v| v.len() <= 2));
        assert!(rig.weights.influences().iter().any(|v| v.len() == 2));
    }

    #[test]
    fn stiff_rig_has_one_bone_per_vertex() {
        let rig = SyntheticRig::generate(RigParams::new(3, 25, 4, 1).blend_width(0.0)).unwrap();
        assert!(rig.weights.influences().iter().all(|v| v.len() == 1));
    }

    #[test]
    fn rejects_single_frame() {
        assert!(make_synthetic_rig(2, 10, 1, 0).is_err());
    }

    #[test]
    fn tube_faces_are_not_degenerate() {
        let rig = SyntheticRig::generate(RigParams::new(3, 40, 6, 5)).unwrap();
        assert!(!rig.sequence.faces().is_empty());
        for p in 0..rig.sequence.frame_count() {
            crate::anim::face_normals(&rig.sequence, p).unwrap();
        }
    }
}
