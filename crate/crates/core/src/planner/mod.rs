//! Subgoal planners behind a common trait, selectable by name.

mod familiar;
mod greedy;
mod naive;
mod plan;
mod sampling;

use std::collections::BTreeMap;

use thiserror::Error;

pub use familiar::{default_familiar_poses, default_familiar_views, default_target_pose, FamiliarView};
pub use greedy::{FamiliarRule, GreedyPlanner, PlannerConfig};
pub use naive::{decompose, NaivePlanner, GIMBAL_MARGIN};
pub use plan::{check_monotone, validate_plan, Movement, Phase, PlanStep, PlanValidationError, SubgoalPlan};
pub use sampling::{all_target_structures_present, sample_amounts, sample_views, Candidate, PhaseConfig};

use crate::pose::ProbePose;
use crate::slicer::SliceGeometry;
use crate::volume::LabeledVolume;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("target view contains no clinical structure")]
    EmptyTarget,
    #[error("no convergence after {} steps: {reason}", plan.len())]
    NonConvergence { plan: Box<SubgoalPlan>, reason: String },
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
    #[error("unknown planner {name:?}; available: {available}")]
    UnknownPlanner { name: String, available: String },
}

/// Everything a planner may read; shared across calls.
pub struct PlanningContext<'a> {
    pub volume: &'a LabeledVolume,
    pub geometry: SliceGeometry,
    pub familiar: &'a [FamiliarView],
}

impl<'a> PlanningContext<'a> {
    pub fn new(volume: &'a LabeledVolume, geometry: SliceGeometry, familiar: &'a [FamiliarView]) -> Self {
        PlanningContext {
            volume,
            geometry,
            familiar,
        }
    }
}

pub trait SubgoalPlanner: Send + Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn plan(&self, ctx: &PlanningContext<'_>, start: &ProbePose, target: &ProbePose) -> Result<SubgoalPlan, PlanError>;
}

type Factory = Box<dyn Fn() -> Box<dyn SubgoalPlanner> + Send + Sync>;

/// Name-keyed planner factories.
pub struct PlannerRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for PlannerRegistry {
    fn default() -> Self {
        let mut r = PlannerRegistry::empty();
        r.register("greedy", || Box::new(GreedyPlanner::default()));
        r.register("greedy-literal", || {
            Box::new(GreedyPlanner::new(PlannerConfig {
                familiar_rule: FamiliarRule::Literal,
                ..PlannerConfig::default()
            }))
        });
        r.register("naive", || Box::new(NaivePlanner));
        r
    }
}

impl PlannerRegistry {
    pub fn empty() -> Self {
        PlannerRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// Registers or replaces a factory.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn() -> Box<dyn SubgoalPlanner> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn SubgoalPlanner>, PlanError> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| PlanError::UnknownPlanner {
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_builtin_names() {
        let r = PlannerRegistry::default();
        assert_eq!(r.names(), vec!["greedy", "greedy-literal", "naive"]);
        for n in r.names() {
            assert_eq!(r.create(n).unwrap().name(), n);
        }
        let err = r.create("astar").err().unwrap();
        assert!(err.to_string().contains("greedy, greedy-literal, naive"));
    }
}
