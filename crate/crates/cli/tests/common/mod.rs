#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use probenav::cases::{CaseConstraints, CaseSet, QuestionCase, VolumeRef};
use probenav::planner::{
    check_monotone, default_target_pose, Movement, NaivePlanner, PlanStep, PlanningContext, SubgoalPlan,
    SubgoalPlanner,
};
use probenav::similarity::{similarity_total, SimilarityWeights};
use probenav::{generate_phantom, save_volume, slice, LabeledVolume, MovementType, PhantomSpec, ProbePose, SliceGeometry};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_probenav"))
}

pub fn volume() -> LabeledVolume {
    generate_phantom(&PhantomSpec::with_resolution(64)).unwrap()
}

/// Case whose plan is press +0.05 then slide +0.08, ending on the target.
pub fn two_subgoal_case(vol: &LabeledVolume) -> QuestionCase {
    let geom = SliceGeometry::default();
    let target = default_target_pose();
    let start = target.apply(MovementType::Slide, -0.08).apply(MovementType::Press, -0.05);
    let moves = [(MovementType::Press, 0.05), (MovementType::Slide, 0.08)];
    let tv = slice(vol, &target, &geom);
    let full = SimilarityWeights::full();
    let mut pose = start;
    let mut steps = Vec::new();
    for (kind, amount) in moves {
        pose = pose.apply(kind, amount);
        let view = slice(vol, &pose, &geom);
        steps.push(PlanStep {
            pose,
            similarity_to_target: similarity_total(&view, &tv, &full),
            view,
            movement: Movement { kind, amount },
            phase: None,
            selection_b: None,
            via_familiar: None,
        });
    }
    let plan = SubgoalPlan {
        planner: "scripted".into(),
        start,
        target,
        start_similarity: similarity_total(&slice(vol, &start, &geom), &tv, &full),
        steps,
        converged: true,
        gimbal_warning: false,
    };
    check_monotone(&plan).expect("fixture plan is monotone");
    let ctx = PlanningContext::new(vol, geom, &[]);
    QuestionCase {
        id: "two-step".into(),
        volume: VolumeRef::of(vol),
        start_pose: start,
        target_pose: target,
        naive_plan: NaivePlanner.plan(&ctx, &start, &target).unwrap(),
        plan,
        seed: 0,
    }
}

/// Writes the volume and a one-case set into `dir`.
pub fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let vol = volume();
    let vpath = dir.join("phantom64.pnv");
    save_volume(&vol, &vpath).unwrap();
    let case = two_subgoal_case(&vol);
    let set = CaseSet::new(&vol, SliceGeometry::default(), 0, CaseConstraints::default(), vec![case]);
    set.validate(&vol).unwrap();
    let cpath = dir.join("cases.json");
    set.save(&cpath).unwrap();
    (vpath, cpath)
}

pub fn pose_of(case: &QuestionCase, step: usize) -> ProbePose {
    case.plan.steps[step].pose
}
