//! Approximation-quality measures between an original animation and its
//! skinned reconstruction, plus the compression rate of a skinning model.
//!
//! | measure | definition |
//! |---------|------------|
//! | DisPer | `100 * ||A - A'||_F / ||A - A_avg||_F` |
//! | ERMS | `100 * ||A - A'||_F / sqrt(3NP)` |
//! | MaxAvgDist | mean over frames of the largest vertex distance |
//! | NormDistort | `asin(mean over faces and frames of |n x n'|)` |
//! | CRP | `100 * (1 - (9N + 12BP) / 3NP)` |
//!
//! `A_avg` holds each vertex's time-averaged position in every frame.

use crate::anim::{face_normals, AnimSequence, Vec3};
use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// All error measures for one (original, approximation) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// Distortion percentage.
    pub disper: f64,
    /// Root-mean-square coordinate error, times 100.
    pub erms: f64,
    /// Mean over frames of the worst vertex distance, in model units.
    pub max_avg_dist: f64,
    /// Normal distortion in radians.
    pub norm_distort: f64,
    /// Compression rate in percent.
    pub crp: f64,
}

impl ErrorReport {
    pub const CSV_HEADER: &'static str = "disper,erms,maxavgdist,normdistort,crp";

    /// `disper,erms,maxavgdist,normdistort,crp` without a trailing newline.
    pub fn csv_row(&self) -> String {
        format!(
            "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            self.disper, self.erms, self.max_avg_dist, self.norm_distort, self.crp
        )
    }
}

/// Computes every measure. `bones` is needed for the compression rate.
pub fn evaluate(orig: &AnimSequence, approx: &AnimSequence, bones: usize) -> Result<ErrorReport> {
    Ok(ErrorReport {
        disper: dis_per(orig, approx)?,
        erms: erms(orig, approx)?,
        max_avg_dist: max_avg_dist(orig, approx)?,
        norm_distort: norm_distort(orig, approx)?,
        crp: compression_rate(orig.vertex_count(), orig.frame_count(), bones)?,
    })
}

fn check_shapes(orig: &AnimSequence, approx: &AnimSequence) -> Result<()> {
    if orig.vertex_count() != approx.vertex_count() || orig.frame_count() != approx.frame_count() {
        return Err(Error::ShapeMismatch(format!(
            "original is {} vertices x {} frames, approximation is {} x {}",
            orig.vertex_count(),
            orig.frame_count(),
            approx.vertex_count(),
            approx.frame_count()
        )));
    }
    Ok(())
}

fn squared_error(orig: &AnimSequence, approx: &AnimSequence) -> f64 {
    orig.frames()
        .iter()
        .zip(approx.frames())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).norm_squared()))
        .collect::<CompensatedSum>()
        .total()
}

/// Per-vertex mean position over all frames.
pub fn time_average(seq: &AnimSequence) -> Vec<Vec3> {
    let p = seq.frame_count() as f64;
    (0..seq.vertex_count())
        .map(|i| {
            let mut acc = [CompensatedSum::default(); 3];
            for frame in seq.frames() {
                for (k, s) in acc.iter_mut().enumerate() {
                    s.add(frame[i][k]);
                }
            }
            Vec3::new(acc[0].total(), acc[1].total(), acc[2].total()) / p
        })
        .collect()
}

/// Distortion percentage.
pub fn dis_per(orig: &AnimSequence, approx: &AnimSequence) -> Result<f64> {
    check_shapes(orig, approx)?;
    let avg = time_average(orig);
    let spread = orig
        .frames()
        .iter()
        .flat_map(|frame| frame.iter().zip(&avg).map(|(v, m)| (v - m).norm_squared()))
        .collect::<CompensatedSum>()
        .total();
    if spread <= 0.0 {
        return Err(Error::DegenerateInput("original animation is static, DisPer is undefined".into()));
    }
    Ok(100.0 * (squared_error(orig, approx) / spread).sqrt())
}

/// Root-mean-square coordinate error, times 100.
pub fn erms(orig: &AnimSequence, approx: &AnimSequence) -> Result<f64> {
    check_shapes(orig, approx)?;
    let count = 3.0 * orig.vertex_count() as f64 * orig.frame_count() as f64;
    Ok(100.0 * (squared_error(orig, approx) / count).sqrt())
}

/// Euclidean distance of every vertex at one frame.
pub fn per_vertex_error(orig: &AnimSequence, approx: &AnimSequence, frame: usize) -> Result<Vec<f64>> {
    check_shapes(orig, approx)?;
    let a = orig.frame(frame)?;
    let b = approx.frame(frame)?;
    Ok(a.iter().zip(b).map(|(u, v)| (u - v).norm()).collect())
}

/// Mean over frames of the largest per-vertex distance.
pub fn max_avg_dist(orig: &AnimSequence, approx: &AnimSequence) -> Result<f64> {
    check_shapes(orig, approx)?;
    let total = orig
        .frames()
        .iter()
        .zip(approx.frames())
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max))
        .collect::<CompensatedSum>()
        .total();
    Ok(total / orig.frame_count() as f64)
}

/// Normal distortion in radians, in `[0, pi/2]`.
pub fn norm_distort(orig: &AnimSequence, approx: &AnimSequence) -> Result<f64> {
    check_shapes(orig, approx)?;
    if orig.faces() != approx.faces() {
        return Err(Error::ShapeMismatch("face lists differ".into()));
    }
    let faces = orig.faces().len();
    if faces == 0 {
        return Ok(0.0);
    }
    let mut total = CompensatedSum::default();
    for p in 0..orig.frame_count() {
        let a = face_normals(orig, p)?;
        let b = face_normals(approx, p)?;
        for (u, v) in a.iter().zip(&b) {
            total.add(u.cross(v).norm());
        }
    }
    let mean = total.total() / (faces as f64 * orig.frame_count() as f64);
    debug_assert!(mean <= 1.0 + 1e-12, "mean cross norm {mean} exceeds 1");
    Ok(mean.clamp(0.0, 1.0).asin())
}

/// Counts of stored values for a skinning model versus the raw animation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeReport {
    /// `3NP`.
    pub raw_values: u64,
    /// `9N + 12BP`: rest pose, six weight slots per vertex, transforms.
    pub compressed_values: u64,
    /// Compression rate in percent.
    pub crp: f64,
    /// Set when the model stores more values than the raw animation.
    pub exceeds_raw: bool,
}

/// Value counts and compression rate for `n` vertices, `p` frames and `b`
/// bones.
pub fn size_report(n: usize, p: usize, b: usize) -> Result<SizeReport> {
    if n == 0 || p == 0 || b == 0 {
        return Err(Error::InvalidArgument(format!("sizes must be positive, got N={n} P={p} B={b}")));
    }
    let (n, p, b) = (n as u64, p as u64, b as u64);
    let raw = 3 * n * p;
    let compressed = 3 * n + 6 * n + 12 * b * p;
    let crp = 100.0 * (1.0 - compressed as f64 / raw as f64);
    Ok(SizeReport { raw_values: raw, compressed_values: compressed, crp, exceeds_raw: crp < 0.0 })
}

/// Compression rate in percent. Negative values (model larger than the raw
/// data) are returned unchanged and logged.
pub fn compression_rate(n: usize, p: usize, b: usize) -> Result<f64> {
    let report = size_report(n, p, b)?;
    if report.exceeds_raw {
        log::warn!("skinning model with N={n} P={p} B={b} is larger than the raw animation");
    }
    Ok(report.crp)
}
