use crate::pose::ProbePose;
use crate::slicer::{slice, SegMap, SliceGeometry};
use crate::volume::LabeledVolume;

/// A well-known waypoint view bound to one volume.
#[derive(Debug, Clone)]
pub struct FamiliarView {
    pub name: String,
    pub pose: ProbePose,
    pub view: SegMap,
}

impl FamiliarView {
    pub fn new(name: impl Into<String>, pose: ProbePose, vol: &LabeledVolume, geom: &SliceGeometry) -> Self {
        FamiliarView {
            name: name.into(),
            pose,
            view: slice(vol, &pose, geom),
        }
    }
}

/// Short-axis planes at the mitral, papillary and apical levels of the
/// default phantom: the probe lies on the `y = 0` face and images in +Y.
pub fn default_familiar_poses() -> Vec<(&'static str, ProbePose)> {
    vec![
        ("PSAX-mitral", ProbePose::from_euler_deg([0.5, 0.0, 0.42], [-90.0, 0.0, 0.0])),
        ("PSAX-papillary", ProbePose::from_euler_deg([0.5, 0.0, 0.62], [-90.0, 0.0, 0.0])),
        ("PSAX-apex", ProbePose::from_euler_deg([0.5, 0.0, 0.8], [-90.0, 0.0, 0.0])),
    ]
}

pub fn default_familiar_views(vol: &LabeledVolume, geom: &SliceGeometry) -> Vec<FamiliarView> {
    default_familiar_poses()
        .into_iter()
        .map(|(name, pose)| FamiliarView::new(name, pose, vol, geom))
        .collect()
}

/// Parasternal long-axis pose of the default phantom: plane through the LV,
/// LA, RV, mitral and aortic valves.
pub fn default_target_pose() -> ProbePose {
    ProbePose::from_euler_deg([0.467, 0.526, -0.16], [0.0, 0.0, 45.0])
}
