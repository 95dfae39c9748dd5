//! Step-by-step subgoal search: at each step sample every single movement,
//! keep the candidate most similar to the target, optionally detour through
//! a familiar view, and stop once the view is close enough.

use serde::{Deserialize, Serialize};

use super::familiar::FamiliarView;
use super::plan::{Movement, Phase, PlanStep, SubgoalPlan};
use super::sampling::{all_target_structures_present, sample_views, Candidate, PhaseConfig};
use super::{PlanError, PlanningContext, SubgoalPlanner};
use crate::pose::ProbePose;
use crate::similarity::{similarity_total, SimilarityWeights};
use crate::slicer::{slice, SegMap};
use crate::structure::StructureId;

/// Condition under which a sampled candidate is swapped for a familiar view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamiliarRule {
    /// A candidate matches a familiar view with similarity ≥ `eps_f`, and the
    /// current view is further from the target than that candidate is from
    /// the familiar view.
    Prose,
    /// A candidate matches a familiar view with similarity ≥ `eps_f`, and
    /// `sim(current, target) < sim(familiar, current)`.
    Literal,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub eps_a: f64,
    pub coarse: PhaseConfig,
    pub fine: PhaseConfig,
    pub eps_f: f64,
    /// Pixel count at which a structure counts as present.
    pub eps_area: u32,
    pub max_steps: usize,
    pub familiar_rule: FamiliarRule,
    /// Range multiplier tried once before declaring a stall.
    pub stall_expansion: usize,
    pub parallel: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            eps_a: 10.0,
            coarse: PhaseConfig::coarse(),
            fine: PhaseConfig::fine(),
            eps_f: 9.0,
            eps_area: 20,
            max_steps: 20,
            familiar_rule: FamiliarRule::Prose,
            stall_expansion: 2,
            parallel: true,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        self.coarse.validate().map_err(PlanError::InvalidConfig)?;
        self.fine.validate().map_err(PlanError::InvalidConfig)?;
        if self.eps_a >= self.fine.weights.max_total() {
            return Err(PlanError::InvalidConfig(format!(
                "eps_a {} is unreachable (max {})",
                self.eps_a,
                self.fine.weights.max_total()
            )));
        }
        if self.stall_expansion < 1 {
            return Err(PlanError::InvalidConfig("stall expansion must be >= 1".into()));
        }
        Ok(())
    }

    pub fn phase(&self, phase: Phase) -> &PhaseConfig {
        match phase {
            Phase::Coarse => &self.coarse,
            Phase::Fine => &self.fine,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GreedyPlanner {
    pub config: PlannerConfig,
}

impl GreedyPlanner {
    pub fn new(config: PlannerConfig) -> Self {
        GreedyPlanner { config }
    }

    fn phase_of(&self, view: &SegMap, target: &SegMap) -> Phase {
        if all_target_structures_present(view, target, self.config.eps_area) {
            Phase::Fine
        } else {
            Phase::Coarse
        }
    }

    /// Similarity under the weights of the phase the view itself is in.
    pub fn progress(&self, view: &SegMap, target: &SegMap) -> f64 {
        let phase = self.phase_of(view, target);
        similarity_total(view, target, &self.config.phase(phase).weights)
    }
}

struct Scored {
    index: usize,
    score: f64,
}

/// Max score; ties broken by smaller |amount|, then movement order, then index.
fn better(a: &Scored, b: &Scored, cands: &[Candidate]) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    let (ca, cb) = (&cands[a.index], &cands[b.index]);
    let (ma, mb) = (ca.amount.abs(), cb.amount.abs());
    if ma != mb {
        return ma < mb;
    }
    if ca.movement != cb.movement {
        return ca.movement < cb.movement;
    }
    a.index < b.index
}

impl SubgoalPlanner for GreedyPlanner {
    fn name(&self) -> &'static str {
        match self.config.familiar_rule {
            FamiliarRule::Prose => "greedy",
            FamiliarRule::Literal => "greedy-literal",
            FamiliarRule::Off => "greedy-nofamiliar",
        }
    }

    fn describe(&self) -> &'static str {
        "step-wise single-movement search with familiar-view detours"
    }

    fn plan(&self, ctx: &PlanningContext<'_>, start: &ProbePose, target: &ProbePose) -> Result<SubgoalPlan, PlanError> {
        self.config.validate()?;
        let cfg = &self.config;
        let target_view = slice(ctx.volume, target, &ctx.geometry);
        if !StructureId::CLINICAL.iter().any(|&s| target_view.area(s) > 0) {
            return Err(PlanError::EmptyTarget);
        }
        let full = SimilarityWeights::full();

        let mut pose = *start;
        let mut view = slice(ctx.volume, start, &ctx.geometry);
        let mut progress = self.progress(&view, &target_view);
        let mut plan = SubgoalPlan {
            planner: self.name().to_string(),
            start: *start,
            target: *target,
            start_similarity: progress,
            steps: Vec::new(),
            converged: false,
            gimbal_warning: false,
        };
        let mut used_familiar = vec![false; ctx.familiar.len()];

        while progress < cfg.eps_a {
            if plan.steps.len() >= cfg.max_steps {
                return Err(PlanError::NonConvergence {
                    reason: format!("reached max_steps = {}", cfg.max_steps),
                    plan: Box::new(plan),
                });
            }
            let phase = self.phase_of(&view, &target_view);
            let base = cfg.phase(phase);
            let weights = base.weights;
            let current_score = similarity_total(&view, &target_view, &weights);
            let current_full = similarity_total(&view, &target_view, &full);

            let mut chosen: Option<(Candidate, Option<usize>)> = None;
            for expansion in [1, cfg.stall_expansion] {
                let phase_cfg = base.expanded(expansion);
                let mut cands = sample_views(ctx.volume, &ctx.geometry, &pose, &phase_cfg, cfg.parallel);
                let admissible = |c: &Candidate| {
                    phase == Phase::Coarse
                        || all_target_structures_present(&c.view, &target_view, cfg.eps_area)
                };
                let scored: Vec<Scored> = cands
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| admissible(c))
                    .map(|(index, c)| Scored {
                        index,
                        score: similarity_total(&c.view, &target_view, &weights),
                    })
                    .collect();

                let best = scored.iter().fold(None::<&Scored>, |acc, s| match acc {
                    Some(b) if !better(s, b, &cands) => Some(b),
                    _ => Some(s),
                });
                // A candidate that already reaches the target means we are not
                // far from it, so no detour.
                let finishes = best.is_some_and(|b| self.progress(&cands[b.index].view, &target_view) >= cfg.eps_a);
                let familiar = if finishes {
                    None
                } else {
                    self.familiar_choice(ctx.familiar, &used_familiar, &cands, &scored, current_full, current_score, &view)
                };
                if let Some((fi, ci)) = familiar {
                    chosen = Some((cands.swap_remove(ci), Some(fi)));
                    break;
                }
                if let Some(b) = best {
                    if b.score > current_score + 1e-9 {
                        chosen = Some((cands.swap_remove(b.index), None));
                        break;
                    }
                }
                if cfg.stall_expansion == 1 {
                    break;
                }
            }

            let Some((cand, familiar)) = chosen else {
                return Err(PlanError::NonConvergence {
                    reason: format!("stalled at similarity {progress:.4} after range expansion"),
                    plan: Box::new(plan),
                });
            };
            if let Some(fi) = familiar {
                used_familiar[fi] = true;
            }
            pose = cand.pose;
            view = cand.view;
            progress = self.progress(&view, &target_view);
            log::debug!(
                "step {}: {} {:+.4} -> {:.4}{}",
                plan.steps.len() + 1,
                cand.movement,
                cand.amount,
                progress,
                familiar.map(|fi| format!(" via {}", ctx.familiar[fi].name)).unwrap_or_default()
            );
            plan.steps.push(PlanStep {
                pose,
                view: view.clone(),
                movement: Movement {
                    kind: cand.movement,
                    amount: cand.amount,
                },
                similarity_to_target: progress,
                phase: Some(phase),
                selection_b: Some(weights.b),
                via_familiar: familiar.map(|fi| ctx.familiar[fi].name.clone()),
            });
        }
        plan.converged = true;
        Ok(plan)
    }
}

impl GreedyPlanner {
    /// Returns `(familiar index, candidate index)` of the detour to take, if any.
    #[allow(clippy::too_many_arguments)]
    fn familiar_choice(
        &self,
        familiar: &[FamiliarView],
        used: &[bool],
        cands: &[Candidate],
        scored: &[Scored],
        current_full: f64,
        current_score: f64,
        current_view: &SegMap,
    ) -> Option<(usize, usize)> {
        let cfg = &self.config;
        if cfg.familiar_rule == FamiliarRule::Off || familiar.is_empty() {
            return None;
        }
        let full = SimilarityWeights::full();
        let mut best: Option<(f64, usize, usize)> = None;
        for (fi, f) in familiar.iter().enumerate() {
            if used[fi] {
                continue;
            }
            let literal_gate = cfg.familiar_rule == FamiliarRule::Literal
                && current_full < similarity_total(&f.view, current_view, &full);
            for s in scored {
                // Never trade progress toward the target for a detour.
                if s.score < current_score {
                    continue;
                }
                let match_score = similarity_total(&cands[s.index].view, &f.view, &full);
                if match_score < cfg.eps_f {
                    continue;
                }
                let gate = match cfg.familiar_rule {
                    FamiliarRule::Prose => current_full < match_score,
                    FamiliarRule::Literal => literal_gate,
                    FamiliarRule::Off => false,
                };
                if gate && best.map_or(true, |(m, _, _)| match_score > m) {
                    best = Some((match_score, fi, s.index));
                }
            }
        }
        best.map(|(_, fi, ci)| (fi, ci))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, PhantomSpec};
    use crate::planner::{check_monotone, default_familiar_views, default_target_pose, validate_plan};
    use crate::pose::MovementType;
    use crate::slicer::SliceGeometry;
    use crate::volume::LabeledVolume;
    use std::sync::OnceLock;

    fn assets() -> &'static (LabeledVolume, Vec<FamiliarView>) {
        static A: OnceLock<(LabeledVolume, Vec<FamiliarView>)> = OnceLock::new();
        A.get_or_init(|| {
            let vol = generate_phantom(&PhantomSpec::with_resolution(64)).unwrap();
            let fam = default_familiar_views(&vol, &SliceGeometry::default());
            (vol, fam)
        })
    }

    fn ctx() -> PlanningContext<'static> {
        let (vol, fam) = assets();
        PlanningContext::new(vol, SliceGeometry::default(), fam)
    }

    fn cand(movement: MovementType, amount: f64) -> Candidate {
        Candidate {
            movement,
            amount,
            pose: ProbePose::identity(),
            view: SegMap::empty(2, 2),
        }
    }

    #[test]
    fn ties_prefer_small_amounts_then_movement_order() {
        let cands = [
            cand(MovementType::Slide, 0.2),
            cand(MovementType::Fan, -0.2),
            cand(MovementType::Rock, 0.1),
        ];
        let s = |index, score| Scored { index, score };
        assert!(better(&s(0, 2.0), &s(2, 1.0), &cands));
        assert!(better(&s(2, 1.0), &s(0, 1.0), &cands));
        assert!(better(&s(1, 1.0), &s(0, 1.0), &cands));
        assert!(!better(&s(0, 1.0), &s(1, 1.0), &cands));
    }

    #[test]
    fn config_rejects_unreachable_threshold() {
        let bad = PlannerConfig {
            eps_a: 12.0,
            ..PlannerConfig::default()
        };
        assert!(matches!(bad.validate(), Err(PlanError::InvalidConfig(_))));
        let bad = PlannerConfig {
            stall_expansion: 0,
            ..PlannerConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(PlannerConfig::default().validate().is_ok());
    }

    #[test]
    fn coarse_grid_offset_is_undone_in_one_step() {
        let target = default_target_pose();
        let a = PhaseConfig::coarse().amounts(MovementType::Fan)[7];
        let start = target.apply(MovementType::Fan, a);
        let plan = GreedyPlanner::default().plan(&ctx(), &start, &target).unwrap();
        assert_eq!(plan.len(), 1, "{:?}", plan.steps.iter().map(|s| s.movement).collect::<Vec<_>>());
        let s = &plan.steps[0];
        assert_eq!((s.movement.kind, s.via_familiar.as_deref()), (MovementType::Fan, None));
        assert!((s.movement.amount + a).abs() < 1e-12);
        assert_eq!(plan.final_similarity(), 12.0);
    }

    #[test]
    fn plans_replay_and_never_lose_similarity() {
        let target = default_target_pose();
        let start = target
            .apply(MovementType::Sweep, 0.05)
            .apply(MovementType::Rock, 0.3)
            .apply(MovementType::Slide, -0.1);
        for rule in [FamiliarRule::Prose, FamiliarRule::Literal, FamiliarRule::Off] {
            let p = GreedyPlanner::new(PlannerConfig {
                familiar_rule: rule,
                ..PlannerConfig::default()
            });
            let plan = match p.plan(&ctx(), &start, &target) {
                Ok(plan) => plan,
                Err(PlanError::NonConvergence { plan, .. }) => *plan,
                Err(e) => panic!("{e}"),
            };
            assert_eq!(plan.planner, p.name());
            validate_plan(&plan, &assets().0, &SliceGeometry::default()).unwrap();
            check_monotone(&plan).unwrap();
        }
    }

    #[test]
    fn step_budget_and_empty_target_are_errors() {
        let target = default_target_pose();
        let start = target.apply(MovementType::Slide, 0.3).apply(MovementType::Rotate, 1.2);
        let p = GreedyPlanner::new(PlannerConfig {
            max_steps: 1,
            ..PlannerConfig::default()
        });
        match p.plan(&ctx(), &start, &target) {
            Err(PlanError::NonConvergence { plan, reason }) => {
                assert_eq!(plan.len(), 1);
                assert!(reason.contains("max_steps"));
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        let outside = ProbePose::from_euler_deg([5.0, 5.0, 5.0], [0.0; 3]);
        assert!(matches!(
            GreedyPlanner::default().plan(&ctx(), &start, &outside),
            Err(PlanError::EmptyTarget)
        ));
    }
}
