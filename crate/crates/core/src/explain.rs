//! Per-subgoal explanations: templated text, image marks, and the 3D cue script.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::PlanStep;
use crate::pose::{MovementType, ProbePose};
use crate::shape::{largest_component_centroid, shape_discrepancy};
use crate::slicer::SegMap;
use crate::structure::StructureId;
use crate::volume::LabeledVolume;

pub const BASELINE_SUBTASK_TEXT: &str = "Try to get the view shown above";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExplainError {
    #[error("current and target views already match")]
    NothingToExplain,
    #[error("views have different dimensions")]
    GeometryMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub eps_area: u32,
    pub eps_shape: f64,
    pub eps_axis: f64,
    pub keyframes: usize,
    pub loop_count: u32,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            eps_area: 20,
            eps_shape: 0.3,
            eps_axis: 0.05,
            keyframes: 60,
            loop_count: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Misshapen {
    pub structure: StructureId,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewDiff {
    /// In the target but not the current view, largest target area first.
    pub missing: Vec<StructureId>,
    /// In the current but not the target view, largest current area first.
    pub incorrect: Vec<StructureId>,
    /// Shared structures whose shapes disagree, largest target area first.
    pub misshapen: Vec<Misshapen>,
}

impl ViewDiff {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.incorrect.is_empty() && self.misshapen.is_empty()
    }
}

/// Stable sort by descending area, ties in id order.
fn sort_by_area(items: &mut [StructureId], view: &SegMap) {
    items.sort_by(|a, b| view.area(*b).cmp(&view.area(*a)).then(a.cmp(b)));
}

pub fn diff_views(current: &SegMap, target: &SegMap, cfg: &ExplainConfig) -> Result<ViewDiff, ExplainError> {
    if !current.same_geometry(target) {
        return Err(ExplainError::GeometryMismatch);
    }
    let mut diff = ViewDiff::default();
    let mut shared = Vec::new();
    for s in StructureId::CLINICAL {
        match (current.present(s, cfg.eps_area), target.present(s, cfg.eps_area)) {
            (false, true) => diff.missing.push(s),
            (true, false) => diff.incorrect.push(s),
            (true, true) => shared.push(s),
            (false, false) => {}
        }
    }
    sort_by_area(&mut diff.missing, target);
    sort_by_area(&mut diff.incorrect, current);
    sort_by_area(&mut shared, target);
    for s in shared {
        let d = shape_discrepancy(&current.mask(s), &target.mask(s)).unwrap_or(0.0);
        if d > cfg.eps_shape {
            diff.misshapen.push(Misshapen {
                structure: s,
                discrepancy: d,
            });
        }
    }
    Ok(diff)
}

/// Chamber before valve, then id order.
fn kind_rank(s: StructureId) -> (u8, u8) {
    (if s.is_chamber() { 0 } else { 1 }, s.id())
}

/// The structure the anatomy lines are about: the largest missing or
/// incorrect structure, or failing that the most misshapen one.
pub fn most_important(diff: &ViewDiff, current: &SegMap, target: &SegMap) -> Result<StructureId, ExplainError> {
    let wrong = diff
        .missing
        .iter()
        .map(|&s| (s, target.area(s)))
        .chain(diff.incorrect.iter().map(|&s| (s, current.area(s))));
    let best = wrong.fold(None::<(StructureId, u32)>, |acc, (s, a)| match acc {
        Some((bs, ba)) if ba > a || (ba == a && kind_rank(bs) <= kind_rank(s)) => Some((bs, ba)),
        _ => Some((s, a)),
    });
    if let Some((s, _)) = best {
        return Ok(s);
    }
    diff.misshapen
        .iter()
        .fold(None::<&Misshapen>, |acc, m| match acc {
            Some(b) if b.discrepancy > m.discrepancy || (b.discrepancy == m.discrepancy && b.structure < m.structure) => Some(b),
            _ => Some(m),
        })
        .map(|m| m.structure)
        .ok_or(ExplainError::NothingToExplain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
    Posterior,
    Anterior,
    Superior,
    Inferior,
}

impl Direction {
    pub fn word(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Posterior => "posterior",
            Direction::Anterior => "anterior",
            Direction::Superior => "superior",
            Direction::Inferior => "inferior",
        }
    }

    /// Form used in rendered sentences; the depth-free Y terms carry both readings.
    pub fn phrase(self) -> &'static str {
        match self {
            Direction::Posterior => "posterior/below",
            Direction::Anterior => "anterior/above",
            other => other.word(),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            Direction::Posterior => Direction::Anterior,
            Direction::Anterior => Direction::Posterior,
            Direction::Superior => Direction::Inferior,
            Direction::Inferior => Direction::Superior,
        }
    }
}

/// One term per axis whose component exceeds `eps_axis` in magnitude, in X, Y, Z order.
pub fn direction_words(delta: &Vector3<f64>, eps_axis: f64) -> Vec<Direction> {
    let pairs = [
        (Direction::Left, Direction::Right),
        (Direction::Posterior, Direction::Anterior),
        (Direction::Superior, Direction::Inferior),
    ];
    pairs
        .iter()
        .zip(delta.iter())
        .filter(|(_, d)| d.abs() > eps_axis)
        .map(|(&(neg, pos), &d)| if d < 0.0 { neg } else { pos })
        .collect()
}

fn phrase(dirs: &[Direction]) -> Option<String> {
    if dirs.is_empty() {
        None
    } else {
        Some(dirs.iter().map(|d| d.phrase()).collect::<Vec<_>>().join("-"))
    }
}

/// 3D centroids of every structure and of the whole heart, computed once per volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Anatomy {
    pub heart_center: Vector3<f64>,
    centroids: Vec<Option<Vector3<f64>>>,
}

impl Anatomy {
    pub fn from_volume(vol: &LabeledVolume) -> Self {
        let [nx, ny, nz] = vol.dims();
        let mut sums = vec![(Vector3::zeros(), 0usize); StructureId::ALL.len()];
        let labels = vol.labels();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let l = labels[vol.index(x, y, z)] as usize;
                    if l != 0 {
                        let e = &mut sums[l];
                        e.0 += vol.voxel_center(x, y, z);
                        e.1 += 1;
                    }
                }
            }
        }
        let (total, count) = sums
            .iter()
            .fold((Vector3::zeros(), 0usize), |(s, n), (v, c)| (s + v, n + c));
        let centroids = sums
            .iter()
            .map(|&(s, n)| (n > 0).then(|| s / n as f64))
            .collect();
        Anatomy {
            heart_center: if count > 0 {
                total / count as f64
            } else {
                Vector3::repeat(0.5)
            },
            centroids,
        }
    }

    pub fn centroid(&self, s: StructureId) -> Option<Vector3<f64>> {
        self.centroids.get(s.id() as usize).copied().flatten()
    }
}

fn bracket_list(items: &[StructureId]) -> String {
    format!("[{}]", items.iter().map(|s| s.name()).collect::<Vec<_>>().join(", "))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextExplanation {
    pub problem_lines: Vec<String>,
    pub anatomy_lines: Vec<String>,
}

pub fn render_text(
    diff: &ViewDiff,
    important: Option<StructureId>,
    anatomy: &Anatomy,
    current: &SegMap,
    target: &SegMap,
    cfg: &ExplainConfig,
) -> TextExplanation {
    let mut out = TextExplanation::default();
    if !diff.missing.is_empty() {
        out.problem_lines
            .push(format!("Try to obtain {}", bracket_list(&diff.missing)));
    }
    if !diff.incorrect.is_empty() {
        out.problem_lines
            .push(format!("Try to avoid {}", bracket_list(&diff.incorrect)));
    }
    for m in &diff.misshapen {
        out.problem_lines
            .push(format!("Try to slice [{}] from another direction", m.structure.name()));
    }
    let Some(important) = important else {
        return out;
    };
    let Some(c) = anatomy.centroid(important) else {
        return out;
    };
    let general = direction_words(&(c - anatomy.heart_center), cfg.eps_axis);
    out.anatomy_lines.push(match phrase(&general) {
        Some(p) => format!("The [{}] is located towards {p} side of the heart", important.name()),
        None => format!("The [{}] is located near the center of the heart", important.name()),
    });

    let mut shared: Vec<StructureId> = StructureId::CLINICAL
        .into_iter()
        .filter(|&s| s != important && current.present(s, cfg.eps_area) && target.present(s, cfg.eps_area))
        .collect();
    sort_by_area(&mut shared, target);
    if let [a, b, ..] = shared[..] {
        let rel = |other: StructureId| {
            anatomy
                .centroid(other)
                .and_then(|o| phrase(&direction_words(&(c - o), cfg.eps_axis)))
                .unwrap_or_else(|| "near".to_string())
        };
        out.anatomy_lines.push(format!(
            "It is positioned {} the [{}] and {} the [{}]",
            rel(a),
            a.name(),
            rel(b),
            b.name()
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub structure: StructureId,
    /// Pixel coordinates `(u, v)` on the view the mark belongs to.
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    /// `×` marks on the current view.
    pub cross_marks: Vec<Mark>,
    /// `?` marks on the target view.
    pub question_marks: Vec<Mark>,
}

fn marks(ids: &[StructureId], view: &SegMap) -> Vec<Mark> {
    ids.iter()
        .filter_map(|&s| {
            largest_component_centroid(&view.mask(s)).map(|(u, v)| Mark { structure: s, u, v })
        })
        .collect()
}

pub fn annotate(current: &SegMap, target: &SegMap, diff: &ViewDiff) -> AnnotationSet {
    AnnotationSet {
        cross_marks: marks(&diff.incorrect, current),
        question_marks: marks(&diff.missing, target),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueStage {
    WholeHeart,
    SemiFocused,
    Focused,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueLabel {
    pub structure: StructureId,
    pub anchor: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueScript {
    pub stages: Vec<CueStage>,
    pub plane_track: Vec<ProbePose>,
    pub start_tag: String,
    pub target_tag: String,
    /// Names shown in the semi-focused stage; the focus itself is not labeled.
    pub labels: Vec<CueLabel>,
    pub focus: StructureId,
    pub loop_count: u32,
}

/// Constant-speed geodesic interpolation along the shorter arc.
pub fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    let mut d = a.inverse() * b;
    if d.w < 0.0 {
        d = UnitQuaternion::new_unchecked(-d.into_inner());
    }
    match d.powf(t) {
        p if p.quaternion().norm().is_finite() => a * p,
        _ => *a,
    }
}

pub fn build_cue(
    start: &ProbePose,
    target: &ProbePose,
    important: StructureId,
    anatomy: &Anatomy,
    target_view: &SegMap,
    cfg: &ExplainConfig,
) -> CueScript {
    let n = cfg.keyframes.max(2);
    let plane_track = (0..n)
        .map(|i| {
            if i == 0 {
                *start
            } else if i == n - 1 {
                *target
            } else {
                let t = i as f64 / (n - 1) as f64;
                ProbePose::new(
                    start.position.lerp(&target.position, t),
                    slerp(&start.orientation, &target.orientation, t),
                )
            }
        })
        .collect();
    let labels = StructureId::CLINICAL
        .into_iter()
        .filter(|&s| s != important && target_view.present(s, cfg.eps_area))
        .filter_map(|s| {
            anatomy.centroid(s).map(|c| CueLabel {
                structure: s,
                anchor: [c.x, c.y, c.z],
            })
        })
        .collect();
    CueScript {
        stages: vec![CueStage::WholeHeart, CueStage::SemiFocused, CueStage::Focused],
        plane_track,
        start_tag: "start/red".into(),
        target_tag: "target/green".into(),
        labels,
        focus: important,
        loop_count: cfg.loop_count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationBundle {
    pub diff: ViewDiff,
    pub problem_lines: Vec<String>,
    pub anatomy_lines: Vec<String>,
    pub important: StructureId,
    pub annotations: AnnotationSet,
    pub cue: CueScript,
}

/// Full explanation for moving from `start` (showing `current`) to `target`.
pub fn explain(
    anatomy: &Anatomy,
    start: &ProbePose,
    current: &SegMap,
    target_pose: &ProbePose,
    target: &SegMap,
    cfg: &ExplainConfig,
) -> Result<ExplanationBundle, ExplainError> {
    let diff = diff_views(current, target, cfg)?;
    let important = most_important(&diff, current, target)?;
    let text = render_text(&diff, Some(important), anatomy, current, target, cfg);
    Ok(ExplanationBundle {
        annotations: annotate(current, target, &diff),
        cue: build_cue(start, target_pose, important, anatomy, target, cfg),
        problem_lines: text.problem_lines,
        anatomy_lines: text.anatomy_lines,
        important,
        diff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrowSign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineGuidance {
    pub shadow_pose: ProbePose,
    pub arrow: MovementType,
    pub sign: ArrowSign,
    pub subtask_text: String,
}

pub fn baseline_guidance(step: &PlanStep) -> BaselineGuidance {
    BaselineGuidance {
        shadow_pose: step.pose,
        arrow: step.movement.kind,
        sign: if step.movement.amount < 0.0 {
            ArrowSign::Negative
        } else {
            ArrowSign::Positive
        },
        subtask_text: BASELINE_SUBTASK_TEXT.to_string(),
    }
}
