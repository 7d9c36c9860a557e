//! Per-frame affine transform fitting.

use nalgebra::{DMatrix, Matrix4, Vector4};
use rayon::prelude::*;

use super::cgls::{cgls, CglsOptions};
use super::{FitWarning, SolverConfig, RANK_DEFICIENT_DAMPING};
use crate::anim::{lbs_vertex, Affine, AnimSequence, BoneTransformSet, Vec3, WeightMap};
use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// Unknowns per bone per frame (a 3x4 affine matrix, row-major).
pub const TRANSFORM_PARAMS: usize = 12;

/// Ratio of smallest to largest eigenvalue of a bone's weighted rest-pose
/// Gram matrix below which the bone counts as rank deficient.
const CONDITION_FLOOR: f64 = 1e-12;

fn homogeneous(v: &Vec3) -> [f64; 4] {
    [v.x, v.y, v.z, 1.0]
}

/// Dense `3N x 12B` matrix of one frame's transform system. Column
/// `12 j + 4 r + c` holds entry `(r, c)` of bone `j`'s transform; row
/// `3 i + r` is coordinate `r` of vertex `i`. The same matrix serves every
/// frame, only the right-hand side changes.
pub fn frame_system(rest_pose: &[Vec3], weights: &WeightMap, bone_count: usize) -> Result<DMatrix<f64>> {
    check_inputs(rest_pose.len(), weights, bone_count)?;
    let cols = TRANSFORM_PARAMS * bone_count;
    let mut a = DMatrix::zeros(3 * rest_pose.len(), cols);
    for (i, rest) in rest_pose.iter().enumerate() {
        let h = homogeneous(rest);
        for &(j, w) in weights.vertex(i) {
            for r in 0..3 {
                for (c, hc) in h.iter().enumerate() {
                    a[(3 * i + r, TRANSFORM_PARAMS * j + 4 * r + c)] += w * hc;
                }
            }
        }
    }
    Ok(a)
}

fn check_inputs(n: usize, weights: &WeightMap, bone_count: usize) -> Result<()> {
    if weights.vertex_count() != n {
        return Err(Error::ShapeMismatch(format!("{} weight rows for {n} vertices", weights.vertex_count())));
    }
    if bone_count == 0 {
        return Err(Error::InvalidArgument("bone count must be positive".into()));
    }
    weights.check(Some(bone_count))
}

/// Bones whose columns are (numerically) rank deficient.
fn rank_deficient_bones(rest_pose: &[Vec3], weights: &WeightMap, bone_count: usize) -> Vec<FitWarning> {
    let mut grams = vec![Matrix4::<f64>::zeros(); bone_count];
    for (i, rest) in rest_pose.iter().enumerate() {
        let h = Vector4::from(homogeneous(rest));
        for &(j, w) in weights.vertex(i) {
            grams[j] += (w * w) * h * h.transpose();
        }
    }
    let totals = weights.bone_totals(bone_count);
    grams
        .into_iter()
        .zip(totals)
        .enumerate()
        .filter_map(|(bone, (gram, total_weight))| {
            let eig = gram.symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.max());
            (total_weight <= 0.0 || hi <= 0.0 || lo <= CONDITION_FLOOR * hi)
                .then_some(FitWarning::RankDeficientBone { bone, total_weight })
        })
        .collect()
}

fn frame_objective(rest_pose: &[Vec3], weights: &WeightMap, transforms: &[Affine], targets: &[Vec3]) -> f64 {
    let mut total = CompensatedSum::default();
    for (i, (rest, target)) in rest_pose.iter().zip(targets).enumerate() {
        let v = lbs_vertex(rest, weights.vertex(i), transforms).expect("inputs validated");
        total.add((v - target).norm_squared());
    }
    total.total()
}

/// Change of variables `v -> (v - center) / scale` for one bone.
#[derive(Clone, Copy)]
struct NormalizedFrame {
    center: Vec3,
    scale: f64,
}

impl NormalizedFrame {
    /// Frames centered on each bone's weighted rest-pose mass.
    fn per_bone(rest: &[Vec3], weights: &WeightMap, bone_count: usize) -> Vec<Self> {
        let mut mass = vec![0.0; bone_count];
        let mut sums = vec![Vec3::zeros(); bone_count];
        for (i, v) in rest.iter().enumerate() {
            for &(j, w) in weights.vertex(i) {
                mass[j] += w;
                sums[j] += w * v;
            }
        }
        let global = rest.iter().sum::<Vec3>() / rest.len() as f64;
        let centers: Vec<Vec3> =
            sums.iter().zip(&mass).map(|(s, &m)| if m > 0.0 { s / m } else { global }).collect();
        let mut spread = vec![0.0; bone_count];
        for (i, v) in rest.iter().enumerate() {
            for &(j, w) in weights.vertex(i) {
                spread[j] += w * (v - centers[j]).norm_squared();
            }
        }
        centers
            .into_iter()
            .zip(spread.iter().zip(&mass))
            .map(|(center, (&sp, &m))| {
                let rms = if m > 0.0 { (sp / m).sqrt() } else { 0.0 };
                Self { center, scale: if rms > 0.0 { rms } else { 1.0 } }
            })
            .collect()
    }

    fn apply(&self, v: &Vec3) -> [f64; 4] {
        homogeneous(&((v - self.center) / self.scale))
    }

    /// `t` acting on original points, rewritten to act on normalized ones.
    fn to_normalized(&self, t: &Affine) -> Affine {
        let linear = t.fixed_view::<3, 3>(0, 0);
        let mut out = *t;
        out.fixed_view_mut::<3, 3>(0, 0).copy_from(&(linear * self.scale));
        out.set_column(3, &(t.column(3) + linear * self.center));
        out
    }

    fn from_normalized(&self, t: &Affine) -> Affine {
        let linear = t.fixed_view::<3, 3>(0, 0) / self.scale;
        let mut out = *t;
        out.fixed_view_mut::<3, 3>(0, 0).copy_from(&linear);
        out.set_column(3, &(t.column(3) - linear * self.center));
        out
    }
}

fn pack(transforms: &[Affine]) -> Vec<f64> {
    let mut x = Vec::with_capacity(TRANSFORM_PARAMS * transforms.len());
    for t in transforms {
        for r in 0..3 {
            for c in 0..4 {
                x.push(t[(r, c)]);
            }
        }
    }
    x
}

fn unpack(x: &[f64]) -> Vec<Affine> {
    x.chunks_exact(TRANSFORM_PARAMS).map(Affine::from_row_slice).collect()
}

/// Fits one set of bone transforms per frame with the weights held fixed,
/// starting CGLS from identity transforms.
///
/// Warnings (rank-deficient bones, unconverged frames) are logged.
pub fn solve_transforms(
    seq: &AnimSequence,
    weights: &WeightMap,
    bone_count: usize,
    config: &SolverConfig,
) -> Result<BoneTransformSet> {
    let (transforms, warnings) = solve_transforms_from(seq, weights, bone_count, None, config)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(transforms)
}

/// [`solve_transforms`] with an optional warm start. When `initial` is
/// given, a frame keeps its initial transforms if the new solve would not
/// lower that frame's error. Warnings are returned rather than logged.
pub fn solve_transforms_from(
    seq: &AnimSequence,
    weights: &WeightMap,
    bone_count: usize,
    initial: Option<&BoneTransformSet>,
    config: &SolverConfig,
) -> Result<(BoneTransformSet, Vec<FitWarning>)> {
    let rest = seq.rest_pose();
    let n = rest.len();
    check_inputs(n, weights, bone_count)?;
    if let Some(init) = initial {
        if init.bone_count() != bone_count || init.frame_count() != seq.frame_count() {
            return Err(Error::ShapeMismatch(format!(
                "initial transforms are {} frames x {} bones, expected {} x {bone_count}",
                init.frame_count(),
                init.bone_count(),
                seq.frame_count()
            )));
        }
    }

    let mut warnings = rank_deficient_bones(rest, weights, bone_count);
    let unknowns = TRANSFORM_PARAMS * bone_count;
    let options = CglsOptions {
        tolerance: config.cg_tolerance,
        max_iterations: config.cg_max_iterations.unwrap_or(10 * unknowns),
        damping: if warnings.is_empty() { 0.0 } else { RANK_DEFICIENT_DAMPING },
    };
    // each bone is solved in coordinates centered and scaled on its own
    // support, which keeps the normal equations well conditioned
    let bone_frames = NormalizedFrame::per_bone(rest, weights, bone_count);
    let columns: Vec<Vec<(usize, f64, [f64; 4])>> = rest
        .iter()
        .enumerate()
        .map(|(i, v)| weights.vertex(i).iter().map(|&(j, w)| (j, w, bone_frames[j].apply(v))).collect())
        .collect();

    let apply_a = |x: &[f64], out: &mut [f64]| {
        for (i, influences) in columns.iter().enumerate() {
            for r in 0..3 {
                let mut acc = 0.0;
                for &(j, w, h) in influences {
                    let base = TRANSFORM_PARAMS * j + 4 * r;
                    acc += w * (x[base] * h[0] + x[base + 1] * h[1] + x[base + 2] * h[2] + x[base + 3] * h[3]);
                }
                out[3 * i + r] = acc;
            }
        }
    };
    let apply_at = |y: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, influences) in columns.iter().enumerate() {
            for &(j, w, h) in influences {
                for r in 0..3 {
                    let s = w * y[3 * i + r];
                    let base = TRANSFORM_PARAMS * j + 4 * r;
                    for c in 0..4 {
                        out[base + c] += s * h[c];
                    }
                }
            }
        }
    };

    let identity = vec![Affine::identity(); bone_count];
    let solved: Vec<(Vec<Affine>, Option<FitWarning>)> = seq
        .frames()
        .par_iter()
        .enumerate()
        .map(|(p, targets)| {
            let b: Vec<f64> = targets.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
            let start = initial.map_or(identity.as_slice(), |t| t.frame(p));
            let normalized: Vec<Affine> = start.iter().zip(&bone_frames).map(|(t, f)| f.to_normalized(t)).collect();
            let x0 = pack(&normalized);
            let out = cgls(apply_a, apply_at, &b, unknowns, Some(&x0), &options);
            let warning = (!out.converged)
                .then_some(FitWarning::CgNotConverged { frame: p, relative_residual: out.relative_residual });
            let candidate: Vec<Affine> =
                unpack(&out.x).iter().zip(&bone_frames).map(|(t, f)| f.from_normalized(t)).collect();
            if initial.is_some()
                && frame_objective(rest, weights, &candidate, targets) > frame_objective(rest, weights, start, targets)
            {
                return (start.to_vec(), warning);
            }
            (candidate, warning)
        })
        .collect();

    let mut frames = Vec::with_capacity(solved.len());
    for (t, w) in solved {
        frames.push(t);
        warnings.extend(w);
    }
    Ok((BoneTransformSet::new(bone_count, frames)?, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anim::{make_synthetic_rig, translation_affine};
    use crate::fitting::objective;
    use nalgebra::DVector;

    #[test]
    fn recovers_synthetic_rig() {
        let (seq, weights, truth) = make_synthetic_rig(3, 60, 8, 4).unwrap();
        let fitted = solve_transforms(&seq, &weights, 3, &SolverConfig::default()).unwrap();
        for p in 0..seq.frame_count() {
            let obj = frame_objective(seq.rest_pose(), &weights, fitted.frame(p), &seq.frames()[p]);
            assert!(obj < 1e-16, "frame {p}: {obj}");
        }
        assert!(objective(&seq, &weights, &truth).unwrap() < 1e-20);
    }

    #[test]
    fn pure_translation_single_bone() {
        let rest: Vec<Vec3> =
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0), Vec3::new(0.0, 0.0, 3.0)];
        let t = Vec3::new(0.5, -1.25, 2.0);
        let moved: Vec<Vec3> = rest.iter().map(|v| v + t).collect();
        let seq = AnimSequence::new(rest.clone(), vec![moved], vec![]).unwrap();
        let fitted = solve_transforms(&seq, &WeightMap::rigid(4), 1, &SolverConfig::default()).unwrap();
        let diff = (fitted.get(0, 0) - translation_affine(t)).abs().max();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn rest_frame_is_exact() {
        let (seq, weights, _) = make_synthetic_rig(2, 30, 3, 1).unwrap();
        let rest_seq = AnimSequence::new(seq.rest_pose().to_vec(), vec![seq.rest_pose().to_vec()], vec![]).unwrap();
        let fitted = solve_transforms(&rest_seq, &weights, 2, &SolverConfig::default()).unwrap();
        assert!(objective(&rest_seq, &weights, &fitted).unwrap() <= 1e-16);
    }

    #[test]
    fn matches_full_dense_solve_over_two_frames() {
        let (seq, weights, _) = make_synthetic_rig(2, 24, 2, 7).unwrap();
        // perturb targets so the fit is not exact
        let frames: Vec<Vec<Vec3>> = seq
            .frames()
            .iter()
            .enumerate()
            .map(|(p, f)| f.iter().enumerate().map(|(i, v)| v + Vec3::repeat(0.01 * ((i * 7 + p * 3) % 5) as f64)).collect())
            .collect();
        let seq = AnimSequence::new(seq.rest_pose().to_vec(), frames, vec![]).unwrap();
        let config = SolverConfig { cg_tolerance: 1e-14, ..SolverConfig::default() };
        let fitted = solve_transforms(&seq, &weights, 2, &config).unwrap();

        // block-diagonal 6N x 24B system solved in one go
        let block = frame_system(seq.rest_pose(), &weights, 2).unwrap();
        let (m, k) = block.shape();
        let mut full = DMatrix::zeros(2 * m, 2 * k);
        full.view_mut((0, 0), (m, k)).copy_from(&block);
        full.view_mut((m, k), (m, k)).copy_from(&block);
        let rhs = DVector::from_iterator(2 * m, seq.frames().iter().flatten().flat_map(|v| [v.x, v.y, v.z]));
        let x = (full.transpose() * &full).cholesky().unwrap().solve(&(full.transpose() * &rhs));
        let dense_obj = (&full * &x - &rhs).norm_squared();
        let fitted_obj = objective(&seq, &weights, &fitted).unwrap();
        assert!((dense_obj - fitted_obj).abs() <= 1e-8 * dense_obj.max(1e-300), "{dense_obj} vs {fitted_obj}");
    }

    #[test]
    fn unused_bone_is_damped_and_reported() {
        let (seq, weights, _) = make_synthetic_rig(1, 12, 3, 0).unwrap();
        let (t, warnings) = solve_transforms_from(&seq, &weights, 2, None, &SolverConfig::default()).unwrap();
        assert!(warnings.iter().any(|w| matches!(w, FitWarning::RankDeficientBone { bone: 1, .. })));
        assert!(t.frames().iter().flatten().all(|m| m.iter().all(|x| x.is_finite())));
    }
}
