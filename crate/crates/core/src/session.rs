//! Tutoring state machine: free exploration, movement selection, amount
//! specification and submission, with cue playback after a wrong answer.
//!
//! [`step`] is a pure function of the session context, the state and one
//! event, so an event log replays to the same frames.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explain::{
    annotate, build_cue, diff_views, most_important, render_text, AnnotationSet, Anatomy, CueScript, ExplainConfig,
};
use crate::planner::SubgoalPlan;
use crate::pose::{to_euler_xyz, MovementType, ProbePose};
use crate::slicer::{slice, SegMap, SliceGeometry};
use crate::structure::StructureId;
use crate::volume::LabeledVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FreeExploration,
    MovementSelection,
    AmountSpecification,
    CuePlayback,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub pos_threshold_px: f64,
    pub rot_threshold_deg: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            pos_threshold_px: 25.0,
            rot_threshold_deg: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub correct: bool,
    pub pos_err_px: f64,
    pub rot_err_deg: f64,
}

/// Center of the image plane: halfway down the depth axis from the probe tip.
pub fn plane_center(pose: &ProbePose, geom: &SliceGeometry) -> Vector3<f64> {
    pose.position + pose.local_axis(2) * ((geom.depth_px as f64 - 1.0) / 2.0 * geom.pitch())
}

pub fn evaluate_submission(
    submitted: &ProbePose,
    target: &ProbePose,
    geom: &SliceGeometry,
    cfg: &EvalConfig,
) -> Evaluation {
    let pos_err_px = (plane_center(submitted, geom) - plane_center(target, geom)).norm() / geom.pitch();
    let rot_err_deg = submitted.angle_to(target).to_degrees();
    Evaluation {
        correct: pos_err_px <= cfg.pos_threshold_px && rot_err_deg <= cfg.rot_threshold_deg,
        pos_err_px,
        rot_err_deg,
    }
}

pub const DEAD_ZONE_POS: f64 = 0.005;
pub const DEAD_ZONE_ROT_DEG: f64 = 0.5;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("pose change is inside the dead zone")]
pub struct BelowDeadZone;

/// Per-movement delta from `anchor` to `current`, normalized so that 90° and
/// one plane side both count as 1.
pub fn normalized_delta(anchor: &ProbePose, current: &ProbePose, plane_side: f64) -> [f64; 6] {
    let [a, b, c] = to_euler_xyz(&anchor.relative_rotation_to(current));
    let t = anchor.local_translation_to(current) / plane_side;
    [a / FRAC_PI_2, b / FRAC_PI_2, c / FRAC_PI_2, t.x, t.y, t.z]
}

pub fn classify_movement(anchor: &ProbePose, current: &ProbePose, plane_side: f64) -> Result<MovementType, BelowDeadZone> {
    let moved = (current.position - anchor.position).norm();
    if moved < DEAD_ZONE_POS && anchor.angle_to(current).to_degrees() < DEAD_ZONE_ROT_DEG {
        return Err(BelowDeadZone);
    }
    let d = normalized_delta(anchor, current, plane_side);
    // Enum order puts rotations first, so a strict comparison settles ties.
    let mut best = 0;
    for i in 1..6 {
        if d[i].abs() > d[best].abs() {
            best = i;
        }
    }
    Ok(MovementType::ALL[best])
}

/// Signed amount of `m` contained in the change from `anchor` to `proposed`:
/// the twist angle about the local axis for rotations, the local component
/// for translations.
pub fn axis_amount(anchor: &ProbePose, proposed: &ProbePose, m: MovementType) -> f64 {
    let axis = m.axis();
    if m.is_rotation() {
        let q = anchor.relative_rotation_to(proposed);
        let q = q.quaternion();
        let along = q.imag()[axis];
        let a = 2.0 * along.atan2(q.w);
        // Keep the angle in (-π, π].
        if a > std::f64::consts::PI {
            a - 2.0 * std::f64::consts::PI
        } else if a <= -std::f64::consts::PI {
            a + 2.0 * std::f64::consts::PI
        } else {
            a
        }
    } else {
        anchor.local_translation_to(proposed)[axis]
    }
}

pub fn project_to_axis(anchor: &ProbePose, proposed: &ProbePose, m: MovementType) -> ProbePose {
    anchor.apply(m, axis_amount(anchor, proposed, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputKind {
    PoseUpdate { pose: ProbePose },
    GripDown,
    GripUp,
    Advance,
}

impl InputKind {
    pub fn name(&self) -> &'static str {
        match self {
            InputKind::PoseUpdate { .. } => "pose_update",
            InputKind::GripDown => "grip_down",
            InputKind::GripUp => "grip_up",
            InputKind::Advance => "advance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputEvent {
    #[serde(flatten)]
    pub kind: InputKind,
    /// Client time in milliseconds; only the server's frame cap reads it.
    pub t_ms: u64,
}

impl InputEvent {
    pub fn new(kind: InputKind, t_ms: u64) -> Self {
        InputEvent { kind, t_ms }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[error("{event} is not allowed in mode {mode:?}: {reason}")]
pub struct ProtocolViolation {
    pub event: String,
    pub mode: Mode,
    pub reason: String,
}

/// One tutoring case: where the trainee starts and the subgoals to reach.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionCase {
    pub start: ProbePose,
    pub plan: SubgoalPlan,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub case: Arc<SessionCase>,
    pub mode: Mode,
    pub subgoal_index: usize,
    pub current_pose: ProbePose,
    /// Pose frozen on entering movement selection; amount specification
    /// moves away from it along one axis only.
    pub anchor_pose: ProbePose,
    pub selected_movement: Option<MovementType>,
    pub attempts: Vec<u32>,
    pub grip_held: bool,
}

impl SessionState {
    pub fn new(case: Arc<SessionCase>) -> Self {
        let n = case.plan.len();
        SessionState {
            mode: if n == 0 { Mode::Complete } else { Mode::FreeExploration },
            subgoal_index: 0,
            current_pose: case.start,
            anchor_pose: case.start,
            selected_movement: None,
            attempts: vec![0; n],
            grip_held: false,
            case,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.mode == Mode::Complete
    }

    pub fn subgoal_pose(&self) -> Option<ProbePose> {
        self.case.plan.steps.get(self.subgoal_index).map(|s| s.pose)
    }
}

/// Immutable inputs shared by every step of a session.
pub struct SessionContext<'a> {
    pub volume: &'a LabeledVolume,
    pub geometry: SliceGeometry,
    pub anatomy: &'a Anatomy,
    pub explain: ExplainConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFrame {
    pub mode: Mode,
    pub subgoal_index: usize,
    pub pose: ProbePose,
    pub view: SegMap,
    pub annotations: AnnotationSet,
    pub problem_lines: Vec<String>,
    pub anatomy_lines: Vec<String>,
    #[serde(default)]
    pub selected_movement: Option<MovementType>,
    #[serde(default)]
    pub evaluation: Option<Evaluation>,
    #[serde(default)]
    pub cue: Option<CueScript>,
}

fn violation(state: &SessionState, ev: &InputEvent, reason: &str) -> ProtocolViolation {
    ProtocolViolation {
        event: ev.kind.name().to_string(),
        mode: state.mode,
        reason: reason.to_string(),
    }
}

/// Frame for the current pose, annotated against the active subgoal.
pub fn render_frame(ctx: &SessionContext<'_>, state: &SessionState) -> OutputFrame {
    let view = slice(ctx.volume, &state.current_pose, &ctx.geometry);
    let mut frame = OutputFrame {
        mode: state.mode,
        subgoal_index: state.subgoal_index,
        pose: state.current_pose,
        view: SegMap::empty(0, 0),
        annotations: AnnotationSet::default(),
        problem_lines: Vec::new(),
        anatomy_lines: Vec::new(),
        selected_movement: state.selected_movement,
        evaluation: None,
        cue: None,
    };
    if let Some(step) = state.case.plan.steps.get(state.subgoal_index) {
        if let Ok(diff) = diff_views(&view, &step.view, &ctx.explain) {
            let important = most_important(&diff, &view, &step.view).ok();
            let text = render_text(&diff, important, ctx.anatomy, &view, &step.view, &ctx.explain);
            frame.annotations = annotate(&view, &step.view, &diff);
            frame.problem_lines = text.problem_lines;
            frame.anatomy_lines = text.anatomy_lines;
        }
    }
    frame.view = view;
    frame
}

fn cue_for(ctx: &SessionContext<'_>, state: &SessionState) -> Option<CueScript> {
    let step = state.case.plan.steps.get(state.subgoal_index)?;
    let from = slice(ctx.volume, &state.anchor_pose, &ctx.geometry);
    let important = diff_views(&from, &step.view, &ctx.explain)
        .ok()
        .and_then(|d| most_important(&d, &from, &step.view).ok())
        .or_else(|| {
            StructureId::CLINICAL
                .into_iter()
                .filter(|&s| step.view.area(s) > 0)
                .max_by(|a, b| step.view.area(*a).cmp(&step.view.area(*b)).then(b.cmp(a)))
        })?;
    Some(build_cue(
        &state.anchor_pose,
        &step.pose,
        important,
        ctx.anatomy,
        &step.view,
        &ctx.explain,
    ))
}

/// Applies one event. Illegal events leave the state untouched and return
/// the violation.
pub fn step(
    ctx: &SessionContext<'_>,
    state: &SessionState,
    ev: &InputEvent,
) -> Result<(SessionState, Vec<OutputFrame>), ProtocolViolation> {
    let mut s = state.clone();
    if s.mode == Mode::Complete {
        return Err(violation(state, ev, "session is complete"));
    }
    match ev.kind {
        InputKind::GripDown => {
            if s.grip_held {
                return Err(violation(state, ev, "grip already held"));
            }
            s.grip_held = true;
            if s.mode == Mode::MovementSelection {
                s.anchor_pose = s.current_pose;
                s.selected_movement = None;
            }
            Ok((s, Vec::new()))
        }
        InputKind::GripUp => {
            if !s.grip_held {
                return Err(violation(state, ev, "grip not held"));
            }
            s.grip_held = false;
            Ok((s, Vec::new()))
        }
        InputKind::PoseUpdate { pose } => {
            if !s.grip_held {
                return Err(violation(state, ev, "probe is frozen while the grip is released"));
            }
            match s.mode {
                Mode::FreeExploration => s.current_pose = pose,
                Mode::MovementSelection => {
                    s.current_pose = pose;
                    if let Ok(m) = classify_movement(&s.anchor_pose, &pose, ctx.geometry.plane_side) {
                        s.selected_movement = Some(m);
                    }
                }
                Mode::AmountSpecification => {
                    let m = s.selected_movement.expect("movement is selected in amount specification");
                    s.current_pose = project_to_axis(&s.anchor_pose, &pose, m);
                }
                Mode::CuePlayback | Mode::Complete => {
                    return Err(violation(state, ev, "probe input is ignored here"));
                }
            }
            let frame = render_frame(ctx, &s);
            Ok((s, vec![frame]))
        }
        InputKind::Advance => match s.mode {
            Mode::FreeExploration => {
                s.mode = Mode::MovementSelection;
                s.anchor_pose = s.current_pose;
                s.selected_movement = None;
                let frame = render_frame(ctx, &s);
                Ok((s, vec![frame]))
            }
            Mode::MovementSelection => {
                let Some(m) = s.selected_movement else {
                    return Err(violation(state, ev, "no movement classified yet"));
                };
                s.mode = Mode::AmountSpecification;
                s.current_pose = project_to_axis(&s.anchor_pose, &s.current_pose, m);
                let frame = render_frame(ctx, &s);
                Ok((s, vec![frame]))
            }
            Mode::AmountSpecification => {
                let target = s.subgoal_pose().expect("incomplete session has a subgoal");
                let eval = evaluate_submission(&s.current_pose, &target, &ctx.geometry, &ctx.eval);
                let mut frame;
                if eval.correct {
                    s.current_pose = target;
                    s.subgoal_index += 1;
                    s.selected_movement = None;
                    s.mode = if s.subgoal_index == s.case.plan.len() {
                        Mode::Complete
                    } else {
                        Mode::FreeExploration
                    };
                    s.anchor_pose = s.current_pose;
                    frame = render_frame(ctx, &s);
                } else {
                    s.attempts[s.subgoal_index] += 1;
                    s.mode = Mode::CuePlayback;
                    frame = render_frame(ctx, &s);
                    frame.cue = cue_for(ctx, &s);
                }
                frame.evaluation = Some(eval);
                Ok((s, vec![frame]))
            }
            Mode::CuePlayback => {
                s.mode = Mode::FreeExploration;
                s.current_pose = s.anchor_pose;
                s.selected_movement = None;
                let frame = render_frame(ctx, &s);
                Ok((s, vec![frame]))
            }
            Mode::Complete => unreachable!(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{Movement, PlanStep};
    use approx::assert_abs_diff_eq;

    fn geom() -> SliceGeometry {
        SliceGeometry::default()
    }

    #[test]
    fn submission_at_target_is_correct() {
        let p = ProbePose::from_euler_deg([0.3, 0.4, 0.1], [10.0, 20.0, 30.0]);
        let e = evaluate_submission(&p, &p, &geom(), &EvalConfig::default());
        assert!(e.correct);
        assert_eq!((e.pos_err_px, e.rot_err_deg), (0.0, 0.0));
    }

    #[test]
    fn submission_boundaries() {
        let g = geom();
        let t = ProbePose::from_euler_deg([0.5, 0.5, 0.1], [0.0, 0.0, 30.0]);
        let cfg = EvalConfig::default();
        let slide = |px: f64| t.apply(MovementType::Slide, px * g.pitch());
        assert!(!evaluate_submission(&slide(26.0), &t, &g, &cfg).correct);
        assert!(evaluate_submission(&slide(24.9), &t, &g, &cfg).correct);
        assert!(!evaluate_submission(&slide(25.1), &t, &g, &cfg).correct);
        let rot = |deg: f64| t.apply(MovementType::Rotate, deg.to_radians());
        assert!(evaluate_submission(&rot(4.9), &t, &g, &cfg).correct);
        assert!(!evaluate_submission(&rot(5.1), &t, &g, &cfg).correct);
    }

    #[test]
    fn evaluation_is_symmetric() {
        let g = geom();
        let a = ProbePose::from_euler_deg([0.3, 0.4, 0.1], [10.0, 20.0, 30.0]);
        let b = ProbePose::from_euler_deg([0.35, 0.42, 0.12], [12.0, 18.0, 33.0]);
        let cfg = EvalConfig::default();
        let (x, y) = (evaluate_submission(&a, &b, &g, &cfg), evaluate_submission(&b, &a, &g, &cfg));
        assert_abs_diff_eq!(x.pos_err_px, y.pos_err_px, epsilon = 1e-9);
        assert_abs_diff_eq!(x.rot_err_deg, y.rot_err_deg, epsilon = 1e-9);
    }

    #[test]
    fn classification_examples() {
        let a = ProbePose::from_euler_deg([0.5, 0.5, 0.1], [0.0, 30.0, 0.0]);
        assert_eq!(classify_movement(&a, &a.apply(MovementType::Rotate, 20f64.to_radians()), 1.0), Ok(MovementType::Rotate));
        assert_eq!(classify_movement(&a, &a.apply(MovementType::Slide, 0.3), 1.0), Ok(MovementType::Slide));
        let mixed = a.apply(MovementType::Slide, 0.10).apply(MovementType::Fan, 30f64.to_radians());
        assert_eq!(classify_movement(&a, &mixed, 1.0), Ok(MovementType::Fan));
        assert_eq!(classify_movement(&a, &a.apply(MovementType::Press, 0.004), 1.0), Err(BelowDeadZone));
    }

    #[test]
    fn classification_ties_prefer_rotation() {
        let a = ProbePose::identity();
        let b = a.apply(MovementType::Press, 0.5).apply(MovementType::Rock, FRAC_PI_2 / 2.0);
        assert_eq!(classify_movement(&a, &b, 1.0), Ok(MovementType::Rock));
    }

    #[test]
    fn projection_keeps_only_the_selected_axis() {
        let a = ProbePose::from_euler_deg([0.5, 0.5, 0.1], [5.0, -10.0, 40.0]);
        let p = a
            .apply(MovementType::Fan, 0.2)
            .apply(MovementType::Slide, 0.05)
            .apply(MovementType::Rotate, 0.1);
        for m in MovementType::ALL {
            let q = project_to_axis(&a, &p, m);
            let d = normalized_delta(&a, &q, 1.0);
            for (i, x) in d.iter().enumerate() {
                if i != m as usize {
                    assert!(x.abs() < 1e-9, "{m:?} leaks into axis {i}: {x}");
                }
            }
            assert!(project_to_axis(&a, &q, m).approx_eq(&q, 1e-12, 1e-12));
        }
        assert_eq!(project_to_axis(&a, &a, MovementType::Sweep), a);
    }

    fn tiny_case() -> (LabeledVolume, Arc<SessionCase>) {
        let mut labels = vec![0u8; 32 * 32 * 32];
        for z in 8..24 {
            for y in 8..24 {
                for x in 4..16 {
                    labels[(z * 32 + y) * 32 + x] = StructureId::LV.id();
                }
                for x in 16..28 {
                    labels[(z * 32 + y) * 32 + x] = StructureId::RV.id();
                }
            }
        }
        let vol = LabeledVolume::new([32, 32, 32], labels, "test").unwrap();
        let start = ProbePose::from_euler_deg([0.3, 0.5, 0.0], [0.0, 0.0, 0.0]);
        let goal = start.apply(MovementType::Slide, 0.2);
        let g = geom();
        let plan = SubgoalPlan {
            planner: "test".into(),
            start,
            target: goal,
            start_similarity: 0.0,
            steps: vec![PlanStep {
                pose: goal,
                view: slice(&vol, &goal, &g),
                movement: Movement {
                    kind: MovementType::Slide,
                    amount: 0.2,
                },
                similarity_to_target: 12.0,
                phase: None,
                selection_b: None,
                via_familiar: None,
            }],
            converged: true,
            gimbal_warning: false,
        };
        (vol, Arc::new(SessionCase { start, plan }))
    }

    #[test]
    fn full_flow_with_one_wrong_submission() {
        let (vol, case) = tiny_case();
        let anatomy = Anatomy::from_volume(&vol);
        let ctx = SessionContext {
            volume: &vol,
            geometry: geom(),
            anatomy: &anatomy,
            explain: ExplainConfig::default(),
            eval: EvalConfig::default(),
        };
        let ev = |k| InputEvent::new(k, 0);
        let start = case.start;
        let mut s = SessionState::new(case);
        let run = |s: &mut SessionState, k: InputKind| {
            let (n, f) = step(&ctx, s, &ev(k)).unwrap();
            *s = n;
            f
        };
        assert!(step(&ctx, &s, &ev(InputKind::PoseUpdate { pose: start })).is_err());
        run(&mut s, InputKind::Advance);
        assert_eq!(s.mode, Mode::MovementSelection);
        assert!(step(&ctx, &s, &ev(InputKind::Advance)).is_err());
        run(&mut s, InputKind::GripDown);
        let f = run(&mut s, InputKind::PoseUpdate { pose: start.apply(MovementType::Slide, 0.05) });
        assert_eq!(f.len(), 1);
        assert_eq!(s.selected_movement, Some(MovementType::Slide));
        run(&mut s, InputKind::Advance);
        assert_eq!(s.mode, Mode::AmountSpecification);
        // Off-axis input is projected away.
        run(&mut s, InputKind::PoseUpdate { pose: start.apply(MovementType::Slide, 0.1).apply(MovementType::Press, 0.3) });
        assert!(s.current_pose.approx_eq(&start.apply(MovementType::Slide, 0.1), 1e-12, 1e-12));
        let f = run(&mut s, InputKind::Advance);
        assert_eq!(s.mode, Mode::CuePlayback);
        assert_eq!(s.attempts, vec![1]);
        let cue = f[0].cue.as_ref().expect("wrong answer plays a cue");
        assert_eq!(cue.stages.len(), 3);
        run(&mut s, InputKind::Advance);
        assert_eq!((s.mode, s.current_pose), (Mode::FreeExploration, start));

        run(&mut s, InputKind::Advance);
        run(&mut s, InputKind::PoseUpdate { pose: start.apply(MovementType::Slide, 0.19) });
        run(&mut s, InputKind::Advance);
        let f = run(&mut s, InputKind::Advance);
        assert!(f[0].evaluation.unwrap().correct);
        assert!(s.is_complete());
        assert!(step(&ctx, &s, &ev(InputKind::GripUp)).is_err());
    }
}
