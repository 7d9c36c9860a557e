use rayon::prelude::*;

use super::{Affine, AnimSequence, SkinningModel, Trajectory, Vec3};
use crate::error::{Error, Result};

/// Linear blend skinning of one vertex: `sum_j w_j * T_j * [rest; 1]`.
pub fn lbs_vertex(rest: &Vec3, weights: &[(usize, f64)], frame_transforms: &[Affine]) -> Result<Vec3> {
    let homogeneous = rest.push(1.0);
    let mut out = Vec3::zeros();
    for &(bone, w) in weights {
        let t = frame_transforms
            .get(bone)
            .ok_or(Error::BoneOutOfRange { index: bone, count: frame_transforms.len() })?;
        out += w * (t * homogeneous);
    }
    Ok(out)
}

/// Plays back a skinning model into a full vertex sequence.
pub fn lbs_sequence(model: &SkinningModel) -> Result<AnimSequence> {
    let rest = model.rest_pose();
    let weights = model.weights();
    let frames = model
        .transforms()
        .frames()
        .par_iter()
        .map(|frame| {
            rest.iter()
                .enumerate()
                .map(|(i, v)| lbs_vertex(v, weights.vertex(i), frame))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    AnimSequence::new(rest.to_vec(), frames, model.faces().to_vec())
}

/// Flattens one vertex's positions over all frames.
pub fn trajectory(seq: &AnimSequence, vertex_id: usize) -> Result<Trajectory> {
    let n = seq.vertex_count();
    if vertex_id >= n {
        return Err(Error::VertexOutOfRange { index: vertex_id, count: n });
    }
    let values = seq
        .frames()
        .iter()
        .flat_map(|frame| frame[vertex_id].iter().copied())
        .collect();
    Ok(Trajectory { vertex_id, values })
}

/// Unit face normals of one frame, following counterclockwise winding.
///
/// Zero-area faces are collected and reported together rather than
/// producing NaN normals.
pub fn face_normals(seq: &AnimSequence, frame: usize) -> Result<Vec<Vec3>> {
    let positions = seq.frame(frame)?;
    let mut degenerate = Vec::new();
    let normals = seq
        .faces()
        .iter()
        .enumerate()
        .map(|(f, &[a, b, c])| {
            let n = (positions[b] - positions[a]).cross(&(positions[c] - positions[a]));
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                degenerate.push(f);
                Vec3::zeros()
            }
        })
        .collect();
    if degenerate.is_empty() {
        Ok(normals)
    } else {
        Err(Error::DegenerateFaces { frame, faces: degenerate })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anim::{translation_affine, BoneTransformSet, WeightMap};
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;

    fn rot_z(angle: f64) -> Affine {
        let r = Rotation3::from_axis_angle(&Vec3::z_axis(), angle);
        let mut m = Affine::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
        m
    }

    #[test]
    fn identity_transform_returns_rest() {
        let v = lbs_vertex(&Vec3::new(1.0, 2.0, 3.0), &[(0, 1.0)], &[Affine::identity()]).unwrap();
        assert_eq!(v, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn half_half_translation_blend() {
        let t = [translation_affine(Vec3::x()), translation_affine(Vec3::y())];
        let v = lbs_vertex(&Vec3::zeros(), &[(0, 0.5), (1, 0.5)], &t).unwrap();
        assert_eq!(v, Vec3::new(0.5, 0.5, 0.0));
    }

    #[test]
    fn quarter_turn_about_z() {
        let v = lbs_vertex(&Vec3::x(), &[(0, 1.0)], &[rot_z(std::f64::consts::FRAC_PI_2)]).unwrap();
        assert_abs_diff_eq!(v, Vec3::y(), epsilon = 1e-15);
    }

    #[test]
    fn out_of_range_bone() {
        let err = lbs_vertex(&Vec3::x(), &[(3, 1.0)], &[Affine::identity()]).unwrap_err();
        assert_eq!(err, Error::BoneOutOfRange { index: 3, count: 1 });
    }

    #[test]
    fn lbs_is_linear_in_rest_position() {
        let t = [rot_z(0.3) + translation_affine(Vec3::new(0.1, 0.0, 0.0)) - Affine::identity(), rot_z(-1.1)];
        let w = [(0, 0.25), (1, 0.75)];
        let a = Vec3::new(0.3, -1.0, 2.0);
        let b = Vec3::new(-0.7, 0.4, 0.9);
        // affine maps: f(a) - f(b) is linear in a - b
        let lhs = lbs_vertex(&(a * 2.0 - b), &w, &t).unwrap();
        let rhs = lbs_vertex(&a, &w, &t).unwrap() * 2.0 - lbs_vertex(&b, &w, &t).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    fn square_model(transforms: Vec<Vec<Affine>>, bones: usize) -> SkinningModel {
        let rest = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let weights = WeightMap::new(vec![vec![(0, 1.0)]; 4]).unwrap();
        SkinningModel::new(rest, weights, BoneTransformSet::new(bones, transforms).unwrap(), vec![[0, 1, 2], [0, 2, 3]])
            .unwrap()
    }

    #[test]
    fn identity_model_plays_rest_pose() {
        let model = square_model(vec![vec![Affine::identity()]; 3], 1);
        let seq = lbs_sequence(&model).unwrap();
        for frame in seq.frames() {
            assert_eq!(frame.as_slice(), model.rest_pose());
        }
        assert_eq!(seq.faces(), model.faces());
    }

    #[test]
    fn per_frame_translation() {
        let transforms = (0..4).map(|t| vec![translation_affine(Vec3::new(t as f64, 0.0, 0.0))]).collect();
        let model = square_model(transforms, 1);
        let seq = lbs_sequence(&model).unwrap();
        for (t, frame) in seq.frames().iter().enumerate() {
            for (v, r) in frame.iter().zip(model.rest_pose()) {
                assert_eq!(*v, r + Vec3::new(t as f64, 0.0, 0.0));
            }
        }
    }

    #[test]
    fn trajectory_layout() {
        let seq = AnimSequence::new(
            vec![Vec3::zeros()],
            vec![vec![Vec3::new(1.0, 2.0, 3.0)], vec![Vec3::new(4.0, 5.0, 6.0)]],
            vec![],
        )
        .unwrap();
        assert_eq!(trajectory(&seq, 0).unwrap().values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(matches!(trajectory(&seq, 1), Err(Error::VertexOutOfRange { .. })));
    }

    #[test]
    fn static_vertex_trajectory() {
        let p = Vec3::new(0.5, -1.0, 2.0);
        let seq = AnimSequence::new(vec![p], vec![vec![p]; 3], vec![]).unwrap();
        let t = trajectory(&seq, 0).unwrap();
        assert_eq!(t.values.len(), 9);
        assert!(t.values.chunks(3).all(|c| c == p.as_slice()));
    }

    fn triangle(points: [Vec3; 3], face: [usize; 3]) -> AnimSequence {
        AnimSequence::new(points.to_vec(), vec![points.to_vec()], vec![face]).unwrap()
    }

    #[test]
    fn normals_follow_winding() {
        let pts = [Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert_eq!(face_normals(&triangle(pts, [0, 1, 2]), 0).unwrap(), vec![Vec3::z()]);
        assert_eq!(face_normals(&triangle(pts, [0, 2, 1]), 0).unwrap(), vec![-Vec3::z()]);
        let shift = Vec3::new(5.0, 5.0, 5.0);
        let moved = [pts[0] + shift, pts[1] + shift, pts[2] + shift];
        assert_abs_diff_eq!(face_normals(&triangle(moved, [0, 1, 2]), 0).unwrap()[0], Vec3::z(), epsilon = 1e-15);
    }

    #[test]
    fn degenerate_face_is_reported() {
        let pts = [Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        let err = face_normals(&triangle(pts, [0, 1, 2]), 0).unwrap_err();
        assert_eq!(err, Error::DegenerateFaces { frame: 0, faces: vec![0] });
    }
}
