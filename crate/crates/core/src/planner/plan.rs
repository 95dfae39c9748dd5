use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{MovementType, ProbePose};
use crate::slicer::{slice, SegMap, SliceGeometry};
use crate::volume::LabeledVolume;

/// Search phase a step was selected in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Not every target structure is visible yet; composition only.
    Coarse,
    /// All target structures visible; composition plus IoU.
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    pub kind: MovementType,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub pose: ProbePose,
    pub view: SegMap,
    pub movement: Movement,
    /// Progress score against the target: composition only while a target
    /// structure is missing from this view, composition + IoU once all are present.
    pub similarity_to_target: f64,
    /// Phase the step was selected in; `None` for plans that do not search.
    #[serde(default)]
    pub phase: Option<Phase>,
    /// IoU weight used when selecting this step.
    #[serde(default)]
    pub selection_b: Option<f64>,
    #[serde(default)]
    pub via_familiar: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgoalPlan {
    pub planner: String,
    pub start: ProbePose,
    pub target: ProbePose,
    pub start_similarity: f64,
    pub steps: Vec<PlanStep>,
    pub converged: bool,
    /// Set by the six-axis decomposition when the middle Euler angle is near ±90°.
    #[serde(default)]
    pub gimbal_warning: bool,
}

impl SubgoalPlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_pose(&self) -> ProbePose {
        self.steps.last().map_or(self.start, |s| s.pose)
    }

    pub fn final_similarity(&self) -> f64 {
        self.steps
            .last()
            .map_or(self.start_similarity, |s| s.similarity_to_target)
    }

    /// Poses from start through every step.
    pub fn poses(&self) -> Vec<ProbePose> {
        std::iter::once(self.start)
            .chain(self.steps.iter().map(|s| s.pose))
            .collect()
    }

    /// Similarity curve including the start.
    pub fn similarity_curve(&self) -> Vec<f64> {
        std::iter::once(self.start_similarity)
            .chain(self.steps.iter().map(|s| s.similarity_to_target))
            .collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanValidationError {
    #[error("step {step}: re-simulated pose differs from the recorded pose")]
    PoseMismatch { step: usize },
    #[error("step {step}: re-sliced view differs from the recorded view")]
    ViewMismatch { step: usize },
    #[error("step {step}: similarity decreased from {before} to {after}")]
    Decreasing { step: usize, before: f64, after: f64 },
}

/// Re-applies every recorded movement from the start and checks that poses
/// and views are reproduced exactly.
pub fn validate_plan(plan: &SubgoalPlan, vol: &LabeledVolume, geom: &SliceGeometry) -> Result<(), PlanValidationError> {
    let mut pose = plan.start;
    for (i, step) in plan.steps.iter().enumerate() {
        pose = pose.apply(step.movement.kind, step.movement.amount);
        if pose != step.pose {
            return Err(PlanValidationError::PoseMismatch { step: i });
        }
        if !slice(vol, &pose, geom).same_labels(&step.view) {
            return Err(PlanValidationError::ViewMismatch { step: i });
        }
    }
    Ok(())
}

/// Checks the non-decreasing similarity invariant of searched plans.
pub fn check_monotone(plan: &SubgoalPlan) -> Result<(), PlanValidationError> {
    let curve = plan.similarity_curve();
    for (i, w) in curve.windows(2).enumerate() {
        if w[1] < w[0] {
            return Err(PlanValidationError::Decreasing {
                step: i,
                before: w[0],
                after: w[1],
            });
        }
    }
    Ok(())
}
