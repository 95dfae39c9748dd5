//! Probe-navigation tutoring engine for cardiac ultrasound training.
//!
//! A labeled heart volume is sliced along a virtual probe's image plane; the
//! resulting label images are compared with a target view, subgoal plans are
//! searched in the space of the six standard probe movements, and each
//! subgoal is explained with templated text, image marks and a 3D cue script.

pub mod bench;
pub mod cases;
pub mod explain;
pub mod phantom;
pub mod planner;
pub mod pose;
pub mod rle;
pub mod report;
pub mod session;
pub mod shape;
pub mod similarity;
pub mod slicer;
pub mod structure;
pub mod volume;
pub mod wire;

pub use phantom::{generate_phantom, PhantomSpec};
pub use pose::{apply_movement, MovementType, ProbePose};
pub use slicer::{slice, SegMap, SliceGeometry};
pub use structure::{StructureId, StructureSet};
pub use volume::{load_volume, save_volume, LabeledVolume};
