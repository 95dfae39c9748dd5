//! Plane slicing: probe pose in, per-structure label image out.

use serde::{Deserialize, Serialize};

use crate::pose::ProbePose;
use crate::structure::{StructureId, LABEL_COUNT};
use crate::volume::LabeledVolume;

pub const DEFAULT_PLANE_PX: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceGeometry {
    pub width_px: usize,
    pub depth_px: usize,
    /// Physical side of the square image plane in volume units.
    pub plane_side: f64,
}

impl Default for SliceGeometry {
    fn default() -> Self {
        SliceGeometry {
            width_px: DEFAULT_PLANE_PX,
            depth_px: DEFAULT_PLANE_PX,
            plane_side: 1.0,
        }
    }
}

impl SliceGeometry {
    pub fn with_plane_side(plane_side: f64) -> Self {
        SliceGeometry {
            plane_side,
            ..Default::default()
        }
    }

    pub fn pitch(&self) -> f64 {
        self.plane_side / self.width_px as f64
    }
}

/// A binary mask over a `width × height` image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                bits.push(f(u, v));
            }
        }
        BinaryMask { width, height, bits }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.bits[v * self.width + u] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }
}

/// Label image of one slice with cached per-label areas.
///
/// Stores one label per pixel, so the per-category masks are disjoint by
/// construction; [`SegMap::mask`] materializes a single category.
#[derive(Debug, Clone, PartialEq)]
pub struct SegMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    areas: [u32; LABEL_COUNT],
    pose: Option<ProbePose>,
}

impl SegMap {
    /// Panics if `labels` has the wrong length or holds values outside 0..=9.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u8>) -> Self {
        assert_eq!(labels.len(), width * height, "label image size mismatch");
        let mut areas = [0u32; LABEL_COUNT];
        for &l in &labels {
            areas[l as usize] += 1;
        }
        SegMap {
            width,
            height,
            labels,
            areas,
            pose: None,
        }
    }

    pub fn try_from_labels(width: usize, height: usize, labels: Vec<u8>) -> Option<Self> {
        if labels.len() != width * height || labels.iter().any(|&l| l as usize >= LABEL_COUNT) {
            return None;
        }
        Some(Self::from_labels(width, height, labels))
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::from_labels(width, height, vec![0; width * height])
    }

    pub fn with_pose(mut self, pose: ProbePose) -> Self {
        self.pose = Some(pose);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pose(&self) -> Option<&ProbePose> {
        self.pose.as_ref()
    }

    #[inline]
    pub fn label(&self, u: usize, v: usize) -> u8 {
        self.labels[v * self.width + u]
    }

    pub fn area(&self, s: StructureId) -> u32 {
        self.areas[s.id() as usize]
    }

    pub fn areas(&self) -> &[u32; LABEL_COUNT] {
        &self.areas
    }

    /// Present means at least `eps_area` pixels.
    pub fn present(&self, s: StructureId, eps_area: u32) -> bool {
        self.area(s) >= eps_area
    }

    pub fn mask(&self, s: StructureId) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == s.id()).collect(),
        }
    }

    pub fn same_geometry(&self, other: &SegMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// True when label images agree (poses are not compared).
    pub fn same_labels(&self, other: &SegMap) -> bool {
        self.same_geometry(other) && self.labels == other.labels
    }
}

/// Samples the volume on the probe's image plane with nearest-neighbor lookup.
///
/// Pixel `(u, v)` maps to `position + (u - (w-1)/2)·pitch·X̂ + v·pitch·Ẑ`; points
/// outside the volume read as background.
pub fn slice(vol: &LabeledVolume, pose: &ProbePose, geom: &SliceGeometry) -> SegMap {
    let (w, h) = (geom.width_px, geom.depth_px);
    let pitch = geom.pitch();
    let rot = pose.orientation.to_rotation_matrix();
    let m = rot.matrix();
    let lateral = m.column(0) * pitch;
    let depth = m.column(2) * pitch;
    let center_u = (w as f64 - 1.0) / 2.0;
    let mut labels = vec![0u8; w * h];
    let mut areas = [0u32; LABEL_COUNT];
    let origin = pose.position - lateral * center_u;
    for v in 0..h {
        let row = origin + depth * v as f64;
        let out = &mut labels[v * w..(v + 1) * w];
        for (u, px) in out.iter_mut().enumerate() {
            let p = row + lateral * u as f64;
            let l = vol.label_at(&p);
            *px = l;
            areas[l as usize] += 1;
        }
    }
    SegMap {
        width: w,
        height: h,
        labels,
        areas,
        pose: Some(*pose),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, PhantomSpec};
    use crate::pose::{MovementType, ProbePose};
    use nalgebra::UnitQuaternion;
    use std::sync::OnceLock;

    fn phantom() -> &'static LabeledVolume {
        static VOL: OnceLock<LabeledVolume> = OnceLock::new();
        VOL.get_or_init(|| generate_phantom(&PhantomSpec::with_resolution(128)).unwrap())
    }

    #[test]
    fn plane_outside_volume_is_background() {
        let pose = ProbePose::from_euler_deg([3.0, 3.0, 3.0], [0.0, 0.0, 0.0]);
        let map = slice(phantom(), &pose, &SliceGeometry::default());
        assert_eq!(map.area(StructureId::BG) as usize, 256 * 256);
        for s in StructureId::CLINICAL {
            assert!(map.mask(s).is_empty());
        }
    }

    #[test]
    fn slicing_is_deterministic() {
        let pose = ProbePose::from_euler_deg([0.5, 0.52, 0.1], [5.0, 0.0, 45.0]);
        let g = SliceGeometry::default();
        assert_eq!(slice(phantom(), &pose, &g), slice(phantom(), &pose, &g));
    }

    #[test]
    fn areas_match_mask_popcounts_and_masks_are_disjoint() {
        let pose = ProbePose::from_euler_deg([0.5, 0.52, 0.1], [0.0, 0.0, 45.0]);
        let map = slice(phantom(), &pose, &SliceGeometry::default());
        let mut covered = vec![0u8; 256 * 256];
        for s in StructureId::ALL {
            let mask = map.mask(s);
            assert_eq!(mask.count() as u32, map.area(s));
            for (c, &b) in covered.iter_mut().zip(&mask.bits) {
                *c += b as u8;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn quaternion_sign_flip_is_invisible() {
        let pose = ProbePose::from_euler_deg([0.45, 0.5, 0.05], [12.0, -7.0, 38.0]);
        let flipped = ProbePose::new(
            pose.position,
            UnitQuaternion::new_unchecked(-pose.orientation.into_inner()),
        );
        let g = SliceGeometry::default();
        assert!(slice(phantom(), &pose, &g).same_labels(&slice(phantom(), &flipped, &g)));
    }

    #[test]
    fn one_pitch_slide_shifts_one_column() {
        let vol = phantom();
        let g = SliceGeometry::default();
        for pose in [
            ProbePose::from_euler_deg([0.5, 0.52, 0.1], [0.0, 0.0, 45.0]),
            ProbePose::from_euler_deg([0.47, 0.45, 0.05], [8.0, -4.0, 20.0]),
        ] {
            let a = slice(vol, &pose, &g);
            let b = slice(vol, &pose.apply(MovementType::Slide, g.pitch()), &g);
            let mut mismatches = 0;
            let mut compared = 0;
            for v in 0..256 {
                for u in 1..256 {
                    compared += 1;
                    if b.label(u - 1, v) != a.label(u, v) {
                        mismatches += 1;
                    }
                }
            }
            // Sample points coincide up to rounding; only voxel-boundary ties may flip.
            assert!(mismatches * 1000 < compared, "{mismatches} of {compared}");
        }
    }

    #[test]
    fn mask_accessors() {
        let map = SegMap::from_labels(2, 2, vec![0, 4, 4, 9]);
        assert_eq!(map.area(StructureId::LV), 2);
        assert!(map.present(StructureId::LV, 2));
        assert!(!map.present(StructureId::LV, 3));
        assert!(map.mask(StructureId::LV).get(1, 0));
        assert!(SegMap::try_from_labels(2, 2, vec![0, 0, 0, 12]).is_none());
    }
}
