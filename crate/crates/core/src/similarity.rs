//! View similarity between two label images: composition agreement
//! (`size_sim`), per-category IoU (`pos_sim`) and their weighted sum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::slicer::SegMap;
use crate::structure::{StructureId, StructureSet, LABEL_COUNT};

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("weights must be non-negative with a positive sum (a = {a}, b = {b})")]
    BadWeights { a: f64, b: f64 },
    #[error("IoU categories must be a subset of the size categories")]
    NotSubset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    pub a: f64,
    pub b: f64,
    pub size_categories: StructureSet,
    pub pos_categories: StructureSet,
}

impl SimilarityWeights {
    pub fn new(a: f64, b: f64) -> Result<Self, WeightsError> {
        Self::with_categories(a, b, StructureSet::clinical(), StructureSet::chambers())
    }

    pub fn with_categories(
        a: f64,
        b: f64,
        size_categories: StructureSet,
        pos_categories: StructureSet,
    ) -> Result<Self, WeightsError> {
        if !(a >= 0.0 && b >= 0.0 && a + b > 0.0) {
            return Err(WeightsError::BadWeights { a, b });
        }
        if !pos_categories.is_subset_of(size_categories) {
            return Err(WeightsError::NotSubset);
        }
        Ok(SimilarityWeights {
            a,
            b,
            size_categories,
            pos_categories,
        })
    }

    /// `a = 1, b = 0`: composition only.
    pub fn coarse() -> Self {
        Self::new(1.0, 0.0).expect("valid")
    }

    /// `a = 1, b = 1`: composition plus chamber IoU.
    pub fn full() -> Self {
        Self::new(1.0, 1.0).expect("valid")
    }

    /// Score of a view against itself.
    pub fn max_total(&self) -> f64 {
        self.a * self.size_categories.len() as f64 + self.b * self.pos_categories.len() as f64
    }
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self::full()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub structure: StructureId,
    pub size_term: Option<f64>,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub size_sim: f64,
    pub pos_sim: f64,
    pub total: f64,
    pub per_category: Vec<CategoryScore>,
}

/// Per-label intersection counts of two label images.
fn intersections(s: &SegMap, l: &SegMap) -> [u32; LABEL_COUNT] {
    assert!(s.same_geometry(l), "segmentation maps differ in geometry");
    let mut inter = [0u32; LABEL_COUNT];
    for (&a, &b) in s.labels().iter().zip(l.labels()) {
        if a == b {
            inter[a as usize] += 1;
        }
    }
    inter
}

/// One term of the composition score; `1` when both are empty.
#[inline]
pub fn size_term(s_area: u32, l_area: u32) -> f64 {
    let max = s_area.max(l_area);
    if max == 0 {
        1.0
    } else {
        1.0 - s_area.abs_diff(l_area) as f64 / max as f64
    }
}

/// IoU with the `∅/∅ = 1` convention.
#[inline]
pub fn iou_term(s_area: u32, l_area: u32, inter: u32) -> f64 {
    let union = s_area + l_area - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn size_sim(s: &SegMap, l: &SegMap, cats: StructureSet) -> f64 {
    assert!(s.same_geometry(l), "segmentation maps differ in geometry");
    cats.iter().map(|c| size_term(s.area(c), l.area(c))).sum()
}

pub fn pos_sim(s: &SegMap, l: &SegMap, cats: StructureSet) -> f64 {
    let inter = intersections(s, l);
    cats.iter()
        .map(|c| iou_term(s.area(c), l.area(c), inter[c.id() as usize]))
        .sum()
}

pub fn similarity(s: &SegMap, l: &SegMap, w: &SimilarityWeights) -> SimilarityScore {
    let inter = intersections(s, l);
    let mut per_category = Vec::with_capacity(w.size_categories.len());
    let mut size = 0.0;
    let mut pos = 0.0;
    for c in w.size_categories.iter() {
        let st = size_term(s.area(c), l.area(c));
        size += st;
        let iou = w
            .pos_categories
            .contains(c)
            .then(|| iou_term(s.area(c), l.area(c), inter[c.id() as usize]));
        per_category.push(CategoryScore {
            structure: c,
            size_term: Some(st),
            iou,
        });
    }
    // Summed separately, in id order, so totals match `pos_sim`.
    for c in w.pos_categories.iter() {
        pos += iou_term(s.area(c), l.area(c), inter[c.id() as usize]);
    }
    SimilarityScore {
        size_sim: size,
        pos_sim: pos,
        total: w.a * size + w.b * pos,
        per_category,
    }
}

/// Allocation-free total used inside the planner's inner loop.
pub fn similarity_total(s: &SegMap, l: &SegMap, w: &SimilarityWeights) -> f64 {
    let size = size_sim(s, l, w.size_categories);
    if w.b == 0.0 {
        return w.a * size;
    }
    w.a * size + w.b * pos_sim(s, l, w.pos_categories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map_with(width: usize, height: usize, cells: &[(usize, usize, StructureId)]) -> SegMap {
        let mut labels = vec![0u8; width * height];
        for &(u, v, s) in cells {
            labels[v * width + u] = s.id();
        }
        SegMap::from_labels(width, height, labels)
    }

    fn block(u0: usize, v0: usize, w: usize, h: usize, s: StructureId) -> Vec<(usize, usize, StructureId)> {
        let mut out = Vec::new();
        for v in v0..v0 + h {
            for u in u0..u0 + w {
                out.push((u, v, s));
            }
        }
        out
    }

    #[test]
    fn identity_scores() {
        let m = map_with(8, 8, &block(1, 1, 3, 2, StructureId::LV));
        assert_eq!(size_sim(&m, &m, StructureSet::clinical()), 8.0);
        assert_eq!(pos_sim(&m, &m, StructureSet::chambers()), 4.0);
        assert_eq!(similarity(&m, &m, &SimilarityWeights::coarse()).total, 8.0);
        assert_eq!(similarity(&m, &m, &SimilarityWeights::full()).total, 12.0);
    }

    #[test]
    fn half_size_lv() {
        // |S_LV| = 50, |L_LV| = 100, everything else empty in both.
        let s = map_with(20, 20, &block(0, 0, 10, 5, StructureId::LV));
        let l = map_with(20, 20, &block(0, 0, 10, 10, StructureId::LV));
        assert_eq!(s.area(StructureId::LV), 50);
        assert_eq!(size_sim(&s, &l, StructureSet::clinical()), 7.5);
    }

    #[test]
    fn empty_versus_one_structure() {
        let s = SegMap::empty(10, 10);
        let l = map_with(10, 10, &block(2, 2, 4, 4, StructureId::RA));
        assert_eq!(size_sim(&s, &l, StructureSet::clinical()), 7.0);
    }

    #[test]
    fn overlapping_squares_iou() {
        // 2x2 squares overlapping in a 1x2 strip: inter 2, union 6.
        let s = map_with(6, 6, &block(0, 0, 2, 2, StructureId::LV));
        let l = map_with(6, 6, &block(1, 0, 2, 2, StructureId::LV));
        let cats = StructureSet::from_slice(&[StructureId::LV]);
        assert_eq!(pos_sim(&s, &l, cats), 2.0 / 6.0);
    }

    #[test]
    fn disjoint_masks_iou() {
        let s = map_with(6, 6, &block(0, 0, 2, 2, StructureId::LV));
        let l = map_with(6, 6, &block(3, 3, 2, 2, StructureId::LV));
        assert_eq!(pos_sim(&s, &l, StructureSet::chambers()), 3.0);
    }

    #[test]
    fn weights_validation() {
        assert!(SimilarityWeights::new(-1.0, 1.0).is_err());
        assert!(SimilarityWeights::new(0.0, 0.0).is_err());
        assert_eq!(
            SimilarityWeights::with_categories(1.0, 1.0, StructureSet::chambers(), StructureSet::clinical()),
            Err(WeightsError::NotSubset)
        );
        assert_eq!(SimilarityWeights::full().max_total(), 12.0);
    }

    fn arb_map() -> impl Strategy<Value = SegMap> {
        prop::collection::vec(0u8..10, 64).prop_map(|l| SegMap::from_labels(8, 8, l))
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(s in arb_map(), l in arb_map()) {
            let w = SimilarityWeights::full();
            let ab = similarity(&s, &l, &w);
            let ba = similarity(&l, &s, &w);
            prop_assert_eq!(ab.total, ba.total);
            for c in &ab.per_category {
                let t = c.size_term.unwrap();
                prop_assert!((0.0..=1.0).contains(&t));
                if let Some(iou) = c.iou {
                    prop_assert!((0.0..=1.0).contains(&iou));
                }
            }
            prop_assert!(ab.total <= w.max_total());
            prop_assert_eq!(similarity_total(&s, &l, &w), ab.total);
        }

        #[test]
        fn shrinking_away_never_raises_size_term(l in arb_map(), drop in prop::collection::vec(any::<bool>(), 64)) {
            // S starts equal to L; removing LV pixels moves |S_LV| away from |L_LV|.
            let lv = StructureId::LV.id();
            let target = l.area(StructureId::LV);
            let mut labels = l.labels().to_vec();
            let mut prev = size_term(target, target);
            for i in 0..labels.len() {
                if labels[i] != lv || !drop[i] {
                    continue;
                }
                labels[i] = 0;
                let s = SegMap::from_labels(8, 8, labels.clone());
                let t = size_term(s.area(StructureId::LV), target);
                prop_assert!(t <= prev);
                prev = t;
            }
        }
    }
}
