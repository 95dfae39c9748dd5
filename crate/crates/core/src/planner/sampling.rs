use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pose::{MovementType, ProbePose};
use crate::similarity::SimilarityWeights;
use crate::slicer::{slice, SegMap, SliceGeometry};
use crate::structure::StructureId;
use crate::volume::LabeledVolume;

/// Sampling range and weights for one search phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    /// Translation range `[-pos_range, pos_range]` in volume units.
    pub pos_range: f64,
    /// Rotation range `[-rot_range_deg, rot_range_deg]`.
    pub rot_range_deg: f64,
    /// Samples per movement; even, zero excluded.
    pub samples_per_direction: usize,
    pub weights: SimilarityWeights,
}

impl PhaseConfig {
    pub fn coarse() -> Self {
        PhaseConfig {
            pos_range: 1.0,
            rot_range_deg: 90.0,
            samples_per_direction: 10,
            weights: SimilarityWeights::coarse(),
        }
    }

    pub fn fine() -> Self {
        PhaseConfig {
            pos_range: 0.2,
            rot_range_deg: 30.0,
            samples_per_direction: 20,
            weights: SimilarityWeights::full(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.pos_range > 0.0 && self.rot_range_deg > 0.0) {
            return Err("phase ranges must be positive".into());
        }
        if self.samples_per_direction < 2 || self.samples_per_direction % 2 != 0 {
            return Err(format!(
                "samples per direction must be even and >= 2, got {}",
                self.samples_per_direction
            ));
        }
        Ok(())
    }

    /// Range and sample count both scaled by `factor`, keeping the spacing.
    pub fn expanded(&self, factor: usize) -> Self {
        PhaseConfig {
            pos_range: self.pos_range * factor as f64,
            rot_range_deg: self.rot_range_deg * factor as f64,
            samples_per_direction: self.samples_per_direction * factor,
            weights: self.weights,
        }
    }

    pub fn range_for(&self, m: MovementType) -> f64 {
        if m.is_rotation() {
            self.rot_range_deg.to_radians()
        } else {
            self.pos_range
        }
    }

    /// Symmetric amounts `±range·i/(k/2)` for `i = 1..=k/2`, ascending.
    pub fn amounts(&self, m: MovementType) -> Vec<f64> {
        sample_amounts(self.range_for(m), self.samples_per_direction)
    }
}

pub fn sample_amounts(range: f64, k: usize) -> Vec<f64> {
    let half = k / 2;
    let step = |i: usize| range * i as f64 / half as f64;
    (1..=half)
        .rev()
        .map(|i| -step(i))
        .chain((1..=half).map(step))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub movement: MovementType,
    pub amount: f64,
    pub pose: ProbePose,
    pub view: SegMap,
}

/// All single-movement neighbors of `pose` for one phase, sliced. Order is
/// movement enum order, then ascending amount, regardless of `parallel`.
pub fn sample_views(
    vol: &LabeledVolume,
    geom: &SliceGeometry,
    pose: &ProbePose,
    phase: &PhaseConfig,
    parallel: bool,
) -> Vec<Candidate> {
    let moves: Vec<(MovementType, f64)> = MovementType::ALL
        .iter()
        .flat_map(|&m| phase.amounts(m).into_iter().map(move |a| (m, a)))
        .collect();
    let make = |&(m, a): &(MovementType, f64)| {
        let p = pose.apply(m, a);
        Candidate {
            movement: m,
            amount: a,
            pose: p,
            view: slice(vol, &p, geom),
        }
    };
    if parallel {
        moves.par_iter().map(make).collect()
    } else {
        moves.iter().map(make).collect()
    }
}

/// True iff every structure with at least `eps_area` pixels in `target` also
/// has at least `eps_area` pixels in `current`.
pub fn all_target_structures_present(current: &SegMap, target: &SegMap, eps_area: u32) -> bool {
    StructureId::CLINICAL
        .iter()
        .all(|&s| !target.present(s, eps_area) || current.present(s, eps_area))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_amounts_are_symmetric_without_zero() {
        let a = sample_amounts(1.0, 10);
        assert_eq!(a.len(), 10);
        assert!(a.iter().all(|&x| x != 0.0));
        for (x, y) in a.iter().zip(a.iter().rev()) {
            assert_eq!(*x, -*y);
        }
        assert_eq!(a[9], 1.0);
        assert_eq!(a[5], 0.2);
    }

    #[test]
    fn phase_validation() {
        assert!(PhaseConfig::coarse().validate().is_ok());
        let mut p = PhaseConfig::fine();
        p.samples_per_direction = 3;
        assert!(p.validate().is_err());
        p.samples_per_direction = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn presence_predicate() {
        let lv = StructureId::LV.id();
        let mk = |n: usize| {
            let mut l = vec![0u8; 100];
            l[..n].fill(lv);
            SegMap::from_labels(10, 10, l)
        };
        let target = mk(40);
        assert!(all_target_structures_present(&target, &target, 20));
        assert!(!all_target_structures_present(&mk(0), &target, 20));
        assert!(all_target_structures_present(&mk(20), &target, 20));
        assert!(!all_target_structures_present(&mk(19), &target, 20));
    }
}
