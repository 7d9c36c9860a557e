//! Alternation driver and its objective trace.

use std::fmt;
use std::io::{self, Write};

use super::transforms::solve_transforms_from;
use super::weights::solve_weights;
use super::{erms_from_objective, objective, FitWarning, SolverConfig};
use crate::anim::{AnimSequence, BoneTransformSet, SkinningModel, WeightMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// Weight fit.
    Wf,
    /// Transform fit.
    Tf,
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Wf => "WF",
            Self::Tf => "TF",
        })
    }
}

/// Error after one half-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub kind: StepKind,
    /// Summed squared reconstruction error over all frames.
    pub objective: f64,
    pub erms: f64,
}

/// Chronological record of an [`alternate`] run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    pub steps: Vec<TraceStep>,
    pub warnings: Vec<FitWarning>,
}

impl FitTrace {
    pub const CSV_HEADER: &'static str = "step_index,kind,objective,erms";

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(out, "{i},{},{:.10e},{:.10e}", s.kind, s.objective, s.erms)?;
        }
        Ok(())
    }

    /// Objective of the last recorded step.
    pub fn final_objective(&self) -> Option<f64> {
        self.steps.last().map(|s| s.objective)
    }
}

/// Fits transforms to `initial_weights`, then runs
/// `config.alternation_iterations` rounds of weight fit followed by
/// transform fit. The per-vertex bone sets of `initial_weights` are never
/// changed.
pub fn alternate(
    seq: &AnimSequence,
    initial_weights: &WeightMap,
    bone_count: usize,
    config: &SolverConfig,
) -> Result<(SkinningModel, FitTrace)> {
    if !(config.cg_tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!("cg tolerance {}", config.cg_tolerance)));
    }
    if config.cg_max_iterations == Some(0) {
        return Err(Error::InvalidArgument("cg iteration cap must be positive".into()));
    }
    let (n, p) = (seq.vertex_count(), seq.frame_count());
    let mut trace = FitTrace::default();
    let record = |trace: &mut FitTrace, kind, weights: &WeightMap, transforms: &BoneTransformSet| -> Result<()> {
        let objective = objective(seq, weights, transforms)?;
        let erms = erms_from_objective(objective, n, p);
        log::debug!("{kind} step {}: objective {objective:.6e}, erms {erms:.6e}", trace.steps.len());
        trace.steps.push(TraceStep { kind, objective, erms });
        Ok(())
    };

    let mut weights = initial_weights.clone();
    let (mut transforms, warnings) = solve_transforms_from(seq, &weights, bone_count, None, config)?;
    trace.warnings.extend(warnings);
    record(&mut trace, StepKind::Tf, &weights, &transforms)?;

    for _ in 0..config.alternation_iterations {
        let (w, warnings) = solve_weights(seq, &transforms, &weights, config)?;
        weights = w;
        trace.warnings.extend(warnings);
        record(&mut trace, StepKind::Wf, &weights, &transforms)?;

        let (t, warnings) = solve_transforms_from(seq, &weights, bone_count, Some(&transforms), config)?;
        transforms = t;
        trace.warnings.extend(warnings);
        record(&mut trace, StepKind::Tf, &weights, &transforms)?;
    }
    for w in &trace.warnings {
        log::warn!("{w}");
    }
    let model = SkinningModel::new(seq.rest_pose().to_vec(), weights, transforms, seq.faces().to_vec())?;
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anim::make_synthetic_rig;
    use crate::fitting::solve_transforms;

    fn coarse(weights: &WeightMap) -> WeightMap {
        let rows = weights
            .influences()
            .iter()
            .map(|v| v.iter().map(|&(b, _)| (b, 1.0 / v.len() as f64)).collect())
            .collect();
        WeightMap::new(rows).unwrap()
    }

    #[test]
    fn ground_truth_start_is_exact() {
        let (seq, truth, _) = make_synthetic_rig(3, 48, 8, 3).unwrap();
        let (_, trace) = alternate(&seq, &truth, 3, &SolverConfig::default()).unwrap();
        assert_eq!(trace.steps.len(), 11);
        assert!(trace.steps[0].objective < 1e-16, "{}", trace.steps[0].objective);
        for w in trace.steps.windows(2) {
            assert!(w[1].objective <= w[0].objective * (1.0 + 1e-8) + 1e-24);
        }
    }

    #[test]
    fn zero_iterations_is_one_transform_fit() {
        let (seq, truth, _) = make_synthetic_rig(2, 24, 5, 8).unwrap();
        let start = coarse(&truth);
        let config = SolverConfig { alternation_iterations: 0, ..SolverConfig::default() };
        let (model, trace) = alternate(&seq, &start, 2, &config).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(model.weights(), &start);
        assert_eq!(model.transforms(), &solve_transforms(&seq, &start, 2, &config).unwrap());
    }

    #[test]
    fn trace_is_monotone_and_support_fixed() {
        let (seq, truth, _) = make_synthetic_rig(3, 36, 10, 11).unwrap();
        let start = coarse(&truth);
        let (model, trace) = alternate(&seq, &start, 3, &SolverConfig::default()).unwrap();
        for w in trace.steps.windows(2) {
            assert!(w[1].objective <= w[0].objective * (1.0 + 1e-8), "{:?}", trace.steps);
        }
        for (a, b) in model.weights().influences().iter().zip(start.influences()) {
            let bones = |v: &Vec<(usize, f64)>| v.iter().map(|x| x.0).collect::<Vec<_>>();
            assert_eq!(bones(a), bones(b));
        }
        assert!(trace.steps.last().unwrap().objective < trace.steps[0].objective);
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let (seq, truth, _) = make_synthetic_rig(2, 12, 3, 0).unwrap();
        let config = SolverConfig { alternation_iterations: 2, ..SolverConfig::default() };
        let (_, trace) = alternate(&seq, &truth, 2, &config).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 5);
        assert!(text.lines().nth(2).unwrap().starts_with("1,WF,"));
    }
}
