//! Six-axis baseline: decompose the relative pose into one movement per axis.

use std::f64::consts::FRAC_PI_2;

use super::plan::{Movement, PlanStep, SubgoalPlan};
use super::{PlanError, PlanningContext, SubgoalPlanner};
use crate::pose::{to_euler_xyz, MovementType, ProbePose};
use crate::similarity::{similarity_total, SimilarityWeights};
use crate::slicer::slice;

/// Margin to ±90° of the middle Euler angle at which a plan is flagged.
pub const GIMBAL_MARGIN: f64 = 1e-3;

fn snap(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

/// Fan, Rock, Rotate, Slide, Sweep, Press amounts taking `start` to `target`,
/// plus the gimbal flag. Rotations in radians.
pub fn decompose(start: &ProbePose, target: &ProbePose) -> ([f64; 6], bool) {
    let rel = start.relative_rotation_to(target);
    let [a, b, c] = to_euler_xyz(&rel);
    let t = target.orientation.inverse_transform_vector(&(target.position - start.position));
    let gimbal = (b.abs() - FRAC_PI_2).abs() < GIMBAL_MARGIN;
    ([a, b, c, t.x, t.y, t.z].map(snap), gimbal)
}

/// Always six steps, even when some amounts are zero; similarity is not monotone.
#[derive(Debug, Clone, Copy, Default)]
pub struct NaivePlanner;

impl SubgoalPlanner for NaivePlanner {
    fn name(&self) -> &'static str {
        "naive"
    }

    fn describe(&self) -> &'static str {
        "one movement per axis from an Euler decomposition"
    }

    fn plan(&self, ctx: &PlanningContext<'_>, start: &ProbePose, target: &ProbePose) -> Result<SubgoalPlan, PlanError> {
        let (amounts, gimbal) = decompose(start, target);
        if gimbal {
            log::warn!("naive decomposition is near gimbal lock");
        }
        let target_view = slice(ctx.volume, target, &ctx.geometry);
        let full = SimilarityWeights::full();
        let start_view = slice(ctx.volume, start, &ctx.geometry);
        let mut plan = SubgoalPlan {
            planner: self.name().to_string(),
            start: *start,
            target: *target,
            start_similarity: similarity_total(&start_view, &target_view, &full),
            steps: Vec::with_capacity(6),
            converged: true,
            gimbal_warning: gimbal,
        };
        let mut pose = *start;
        for (m, amount) in MovementType::ALL.into_iter().zip(amounts) {
            pose = pose.apply(m, amount);
            let view = slice(ctx.volume, &pose, &ctx.geometry);
            plan.steps.push(PlanStep {
                pose,
                similarity_to_target: similarity_total(&view, &target_view, &full),
                view,
                movement: Movement { kind: m, amount },
                phase: None,
                selection_b: None,
                via_familiar: None,
            });
        }
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::euler_xyz;
    use nalgebra::Vector3;

    #[test]
    fn decomposition_reaches_target() {
        let start = ProbePose::from_euler_deg([0.2, 0.3, 0.1], [10.0, -20.0, 5.0]);
        let target = ProbePose::from_euler_deg([0.6, 0.5, 0.4], [-30.0, 40.0, 70.0]);
        let (am, gimbal) = decompose(&start, &target);
        assert!(!gimbal);
        let mut p = start;
        for (m, a) in MovementType::ALL.into_iter().zip(am) {
            p = p.apply(m, a);
        }
        assert!(p.approx_eq(&target, 1e-9, 1e-9));
    }

    #[test]
    fn pure_translation_has_zero_rotations() {
        let start = ProbePose::from_euler_deg([0.2, 0.3, 0.1], [0.0, 0.0, 90.0]);
        let target = ProbePose::new(start.position + Vector3::new(0.1, 0.0, 0.0), start.orientation);
        let (am, _) = decompose(&start, &target);
        assert_eq!(&am[..3], &[0.0, 0.0, 0.0]);
        // World +X is local -Y after a quarter turn about Z.
        assert!((am[4] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn gimbal_is_flagged() {
        let start = ProbePose::identity();
        let target = ProbePose::new(Vector3::zeros(), euler_xyz(0.3, FRAC_PI_2, 0.0));
        assert!(decompose(&start, &target).1);
    }
}
