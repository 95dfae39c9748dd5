//! Question sets: random start poses with their subgoal and naive plans,
//! stored as a versioned JSON document that re-validates on load.

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::planner::{
    check_monotone, sample_amounts, validate_plan, NaivePlanner, PhaseConfig, PlanError, PlanValidationError,
    PlanningContext, SubgoalPlan, SubgoalPlanner,
};
use crate::pose::{MovementType, ProbePose};
use crate::session::{evaluate_submission, EvalConfig};
use crate::slicer::{slice, SliceGeometry};
use crate::structure::StructureId;
use crate::volume::LabeledVolume;

pub const CASE_FILE_VERSION: u32 = 1;
pub const CASES_SCHEMA: &str = "probenav.cases/v1";
pub const PLAN_SCHEMA: &str = "probenav.plan/v1";

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("n must be >= 1")]
    EmptyRequest,
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("case {case}: no start satisfied the constraints in {attempts} attempts")]
    SamplingExhausted { case: usize, attempts: usize },
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error("unsupported case file version {found} (supported: {CASE_FILE_VERSION})")]
    Version { found: u32 },
    #[error("expected schema {expected:?}, found {found:?}")]
    Schema { expected: &'static str, found: String },
    #[error("case file was built for volume {expected}, loaded volume is {found}")]
    VolumeMismatch { expected: String, found: String },
    #[error("case {id}, {planner} plan: {source}")]
    Invalid {
        id: String,
        planner: String,
        #[source]
        source: PlanValidationError,
    },
    #[error("case {id}: {reason}")]
    Inconsistent { id: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Identifies the exact volume a case set was planned on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeRef {
    pub provenance: String,
    pub dims: [usize; 3],
    /// SHA-256 over dims and labels.
    pub digest: String,
}

impl VolumeRef {
    pub fn of(vol: &LabeledVolume) -> Self {
        let mut h = Sha256::new();
        for d in vol.dims() {
            h.update((d as u64).to_le_bytes());
        }
        h.update(vol.labels());
        VolumeRef {
            provenance: vol.provenance().to_string(),
            dims: vol.dims(),
            digest: hex::encode(h.finalize()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConstraints {
    /// Half-widths of the start position band around the target position.
    pub band_half_width: [f64; 3],
    /// Random Fan/Rock/Rotate perturbations applied to the target orientation.
    pub perturbations: usize,
    pub max_perturbation_deg: f64,
    /// Minimum number of clinical structures present in the start view.
    pub min_structures: usize,
    /// Build the start by applying this many grid movements to the target
    /// instead of band sampling; the subgoal plan must not be longer.
    #[serde(default)]
    pub within_movements: Option<usize>,
    /// Reject starts the subgoal planner does not converge from.
    #[serde(default)]
    pub require_converged: bool,
    /// Attempts per case before giving up.
    pub max_attempts: usize,
}

impl Default for CaseConstraints {
    fn default() -> Self {
        CaseConstraints {
            band_half_width: [0.05, 0.05, 0.025],
            perturbations: 2,
            max_perturbation_deg: 20.0,
            min_structures: 1,
            within_movements: None,
            require_converged: false,
            max_attempts: 200,
        }
    }
}

impl CaseConstraints {
    pub fn validate(&self) -> Result<(), CaseError> {
        let bad = |m: &str| Err(CaseError::InvalidConstraints(m.to_string()));
        if self.band_half_width.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("band half-widths must be finite and non-negative");
        }
        if !(self.max_perturbation_deg.is_finite() && self.max_perturbation_deg >= 0.0) {
            return bad("max perturbation must be finite and non-negative");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1");
        }
        if self.within_movements == Some(0) {
            return bad("within_movements must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionCase {
    pub id: String,
    pub volume: VolumeRef,
    pub start_pose: ProbePose,
    pub target_pose: ProbePose,
    pub plan: SubgoalPlan,
    pub naive_plan: SubgoalPlan,
    /// Seed of the per-case generator; regenerates this case alone.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSet {
    pub schema: String,
    pub version: u32,
    pub volume: VolumeRef,
    pub geometry: SliceGeometry,
    pub seed: u64,
    pub constraints: CaseConstraints,
    pub cases: Vec<QuestionCase>,
}

fn sample_band(rng: &mut ChaCha8Rng, target: &ProbePose, c: &CaseConstraints) -> ProbePose {
    let mut offset = Vector3::zeros();
    for i in 0..3 {
        let w = c.band_half_width[i];
        offset[i] = if w > 0.0 { rng.gen_range(-w..=w) } else { 0.0 };
    }
    let mut pose = ProbePose::new(target.position + offset, target.orientation);
    let max = c.max_perturbation_deg.to_radians();
    for _ in 0..c.perturbations {
        let m = MovementType::ALL[rng.gen_range(0..3)];
        let a = if max > 0.0 { rng.gen_range(-max..=max) } else { 0.0 };
        pose = pose.apply(m, a);
    }
    pose
}

/// `k` movements with amounts from the fine sampling grid, so each is
/// invertible by one planner candidate.
fn sample_constructed(rng: &mut ChaCha8Rng, target: &ProbePose, k: usize) -> ProbePose {
    let grid = PhaseConfig::fine();
    let mut pose = *target;
    for _ in 0..k {
        let m = MovementType::ALL[rng.gen_range(0..6)];
        let amounts = sample_amounts(grid.range_for(m), grid.samples_per_direction);
        pose = pose.apply(m, amounts[rng.gen_range(0..amounts.len())]);
    }
    pose
}

/// Rejection-samples `n` start poses for `target` and plans each with
/// `planner` and the naive baseline. Deterministic given `seed`.
pub fn gen_cases(
    ctx: &PlanningContext<'_>,
    planner: &dyn SubgoalPlanner,
    target: &ProbePose,
    n: usize,
    seed: u64,
    constraints: &CaseConstraints,
) -> Result<Vec<QuestionCase>, CaseError> {
    if n == 0 {
        return Err(CaseError::EmptyRequest);
    }
    constraints.validate()?;
    let volume = VolumeRef::of(ctx.volume);
    let eval = EvalConfig::default();
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(n);
    for i in 0..n {
        let case_seed: u64 = master.gen();
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
        let mut found = None;
        for attempt in 0..constraints.max_attempts {
            let start = match constraints.within_movements {
                Some(k) => sample_constructed(&mut rng, target, k),
                None => sample_band(&mut rng, target, constraints),
            };
            let view = slice(ctx.volume, &start, &ctx.geometry);
            let present = StructureId::CLINICAL.iter().filter(|&&s| view.area(s) > 0).count();
            if present < constraints.min_structures.max(1) {
                continue;
            }
            if evaluate_submission(&start, target, &ctx.geometry, &eval).correct {
                continue;
            }
            let plan = match planner.plan(ctx, &start, target) {
                Ok(p) => p,
                Err(PlanError::NonConvergence { plan, reason }) => {
                    if constraints.require_converged {
                        continue;
                    }
                    log::info!("case {i}: kept non-converged start: {reason}");
                    *plan
                }
                Err(e) => return Err(e.into()),
            };
            // Already similar enough: nothing to teach.
            if plan.is_empty() {
                continue;
            }
            if let Some(k) = constraints.within_movements {
                if !plan.converged || plan.len() > k {
                    continue;
                }
            }
            log::debug!("case {i}: accepted after {} attempts", attempt + 1);
            found = Some((start, plan));
            break;
        }
        let Some((start, plan)) = found else {
            return Err(CaseError::SamplingExhausted {
                case: i,
                attempts: constraints.max_attempts,
            });
        };
        let naive_plan = NaivePlanner.plan(ctx, &start, target)?;
        cases.push(QuestionCase {
            id: format!("case-{i:03}"),
            volume: volume.clone(),
            start_pose: start,
            target_pose: *target,
            plan,
            naive_plan,
            seed: case_seed,
        });
    }
    Ok(cases)
}

fn check_schema(v: &serde_json::Value, expected: &'static str) -> Result<(), CaseError> {
    let found = v.get("schema").and_then(|x| x.as_str()).unwrap_or_default();
    if found != expected {
        return Err(CaseError::Schema {
            expected,
            found: found.to_string(),
        });
    }
    Ok(())
}

/// A single exported plan with the volume it was computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub schema: String,
    pub volume: VolumeRef,
    pub geometry: SliceGeometry,
    pub plan: SubgoalPlan,
}

impl PlanDocument {
    pub fn new(vol: &LabeledVolume, geometry: SliceGeometry, plan: SubgoalPlan) -> Self {
        PlanDocument {
            schema: PLAN_SCHEMA.to_string(),
            volume: VolumeRef::of(vol),
            geometry,
            plan,
        }
    }

    pub fn to_json(&self) -> Result<String, CaseError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, CaseError> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        check_schema(&v, PLAN_SCHEMA)?;
        Ok(serde_json::from_value(v)?)
    }
}

impl CaseSet {
    pub fn new(vol: &LabeledVolume, geometry: SliceGeometry, seed: u64, constraints: CaseConstraints, cases: Vec<QuestionCase>) -> Self {
        CaseSet {
            schema: CASES_SCHEMA.to_string(),
            version: CASE_FILE_VERSION,
            volume: VolumeRef::of(vol),
            geometry,
            seed,
            constraints,
            cases,
        }
    }

    /// Re-simulates every plan against `vol` and checks the recorded metadata.
    pub fn validate(&self, vol: &LabeledVolume) -> Result<(), CaseError> {
        if self.schema != CASES_SCHEMA {
            return Err(CaseError::Schema {
                expected: CASES_SCHEMA,
                found: self.schema.clone(),
            });
        }
        if self.version != CASE_FILE_VERSION {
            return Err(CaseError::Version { found: self.version });
        }
        let found = VolumeRef::of(vol);
        if found.digest != self.volume.digest {
            return Err(CaseError::VolumeMismatch {
                expected: self.volume.digest.clone(),
                found: found.digest,
            });
        }
        for c in &self.cases {
            if c.volume.digest != self.volume.digest {
                return Err(CaseError::Inconsistent {
                    id: c.id.clone(),
                    reason: "volume differs from the case set".into(),
                });
            }
            for p in [&c.plan, &c.naive_plan] {
                if p.start != c.start_pose || p.target != c.target_pose {
                    return Err(CaseError::Inconsistent {
                        id: c.id.clone(),
                        reason: format!("{} plan endpoints differ from the case", p.planner),
                    });
                }
                validate_plan(p, vol, &self.geometry).map_err(|source| CaseError::Invalid {
                    id: c.id.clone(),
                    planner: p.planner.clone(),
                    source,
                })?;
            }
            check_monotone(&c.plan).map_err(|source| CaseError::Invalid {
                id: c.id.clone(),
                planner: c.plan.planner.clone(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, CaseError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CaseError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Parses without validating; see [`CaseSet::load`].
    pub fn from_json(s: &str) -> Result<Self, CaseError> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        check_schema(&v, CASES_SCHEMA)?;
        let version = v.get("version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
        if version != CASE_FILE_VERSION {
            return Err(CaseError::Version { found: version });
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn load(path: impl AsRef<Path>, vol: &LabeledVolume) -> Result<Self, CaseError> {
        let set = Self::from_json(&std::fs::read_to_string(path)?)?;
        set.validate(vol)?;
        Ok(set)
    }
}
