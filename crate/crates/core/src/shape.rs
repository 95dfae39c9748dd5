//! Hu moment invariants and mask geometry helpers.

use std::collections::VecDeque;

use thiserror::Error;

use crate::slicer::BinaryMask;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("mask is empty")]
    EmptyMask,
}

/// Invariants with magnitude at or below this are treated as undefined.
const HU_EPS: f64 = 1e-5;

/// The seven Hu moment invariants of a binary mask (pixel centers at integer coordinates).
pub fn hu_moments(mask: &BinaryMask) -> Result<[f64; 7], ShapeError> {
    let mut n = 0.0f64;
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for v in 0..mask.height {
        for u in 0..mask.width {
            if mask.get(u, v) {
                n += 1.0;
                sx += u as f64;
                sy += v as f64;
            }
        }
    }
    if n == 0.0 {
        return Err(ShapeError::EmptyMask);
    }
    let (cx, cy) = (sx / n, sy / n);
    let mut mu = [[0.0f64; 4]; 4];
    for v in 0..mask.height {
        for u in 0..mask.width {
            if !mask.get(u, v) {
                continue;
            }
            let dx = u as f64 - cx;
            let dy = v as f64 - cy;
            let mut xp = 1.0;
            for p in 0..4 {
                let mut yq = 1.0;
                for q in 0..4 - p {
                    mu[p][q] += xp * yq;
                    yq *= dy;
                }
                xp *= dx;
            }
        }
    }
    let eta = |p: usize, q: usize| mu[p][q] / n.powf(1.0 + (p + q) as f64 / 2.0);
    let (n20, n02, n11) = (eta(2, 0), eta(0, 2), eta(1, 1));
    let (n30, n03, n21, n12) = (eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2));

    let a = n30 + n12;
    let b = n21 + n03;
    let h1 = n20 + n02;
    let h2 = (n20 - n02).powi(2) + 4.0 * n11 * n11;
    let h3 = (n30 - 3.0 * n12).powi(2) + (3.0 * n21 - n03).powi(2);
    let h4 = a * a + b * b;
    let h5 = (n30 - 3.0 * n12) * a * (a * a - 3.0 * b * b) + (3.0 * n21 - n03) * b * (3.0 * a * a - b * b);
    let h6 = (n20 - n02) * (a * a - b * b) + 4.0 * n11 * a * b;
    let h7 = (3.0 * n21 - n03) * a * (a * a - 3.0 * b * b) - (n30 - 3.0 * n12) * b * (3.0 * a * a - b * b);
    Ok([h1, h2, h3, h4, h5, h6, h7])
}

/// Contour-matching style dissimilarity over log-scaled Hu invariants:
/// `Σ |1/m_k(S) − 1/m_k(L)|` with `m = sign(h)·log10|h|`, skipping invariants
/// that vanish in either mask. Zero for identical shapes.
pub fn shape_discrepancy(s: &BinaryMask, l: &BinaryMask) -> Result<f64, ShapeError> {
    let hs = hu_moments(s)?;
    let hl = hu_moments(l)?;
    Ok(discrepancy_from_hu(&hs, &hl))
}

pub fn discrepancy_from_hu(hs: &[f64; 7], hl: &[f64; 7]) -> f64 {
    let mut total = 0.0;
    for k in 0..7 {
        let (a, b) = (hs[k].abs(), hl[k].abs());
        if a > HU_EPS && b > HU_EPS {
            let ma = 1.0 / (hs[k].signum() * a.log10());
            let mb = 1.0 / (hl[k].signum() * b.log10());
            total += (ma - mb).abs();
        }
    }
    total
}

/// Pixel centroid `(u, v)` of the largest 4-connected component; the first
/// component in scan order wins ties.
pub fn largest_component_centroid(mask: &BinaryMask) -> Option<(f64, f64)> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut best: Option<(usize, f64, f64)> = None;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || !mask.bits[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut count, mut su, mut sv) = (0usize, 0.0f64, 0.0f64);
        while let Some(i) = queue.pop_front() {
            let (u, v) = (i % w, i / w);
            count += 1;
            su += u as f64;
            sv += v as f64;
            let mut push = |j: usize| {
                if !seen[j] && mask.bits[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if u > 0 {
                push(i - 1);
            }
            if u + 1 < w {
                push(i + 1);
            }
            if v > 0 {
                push(i - w);
            }
            if v + 1 < h {
                push(i + w);
            }
        }
        if best.map_or(true, |(c, _, _)| count > c) {
            best = Some((count, su / count as f64, sv / count as f64));
        }
    }
    best.map(|(_, u, v)| (u, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(size: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        BinaryMask::from_fn(size, size, |u, v| (u as f64 - cx).powi(2) + (v as f64 - cy).powi(2) <= r * r)
    }

    fn ellipse(size: usize, cx: f64, cy: f64, a: f64, b: f64) -> BinaryMask {
        BinaryMask::from_fn(size, size, |u, v| {
            ((u as f64 - cx) / a).powi(2) + ((v as f64 - cy) / b).powi(2) <= 1.0
        })
    }

    fn rotate90(m: &BinaryMask) -> BinaryMask {
        BinaryMask::from_fn(m.height, m.width, |u, v| m.get(v, m.height - 1 - u))
    }

    /// Translate by (dx, dy) and upsample ×2 with nearest neighbor.
    fn shift_and_double(m: &BinaryMask, dx: usize, dy: usize) -> BinaryMask {
        let w = m.width * 2 + dx;
        let h = m.height * 2 + dy;
        BinaryMask::from_fn(w, h, |u, v| {
            u >= dx && v >= dy && m.get((u - dx) / 2, (v - dy) / 2)
        })
    }

    fn blob() -> BinaryMask {
        // An asymmetric shape so higher-order invariants are defined.
        BinaryMask::from_fn(64, 64, |u, v| {
            let (x, y) = (u as f64 - 30.0, v as f64 - 28.0);
            (x / 18.0).powi(2) + (y / 10.0).powi(2) <= 1.0 || (u >= 30 && u < 46 && v >= 28 && v < 50)
        })
    }

    #[test]
    fn identical_masks_have_zero_discrepancy() {
        let m = blob();
        assert_eq!(shape_discrepancy(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn translation_and_scale_invariance() {
        for m in [blob(), ellipse(64, 30.0, 30.0, 20.0, 9.0)] {
            let big = shift_and_double(&m, 7, 3);
            let d = shape_discrepancy(&m, &big).unwrap();
            assert!(d < 0.05, "{d}");
        }
    }

    #[test]
    fn rotation_by_quarter_turns() {
        let m = blob();
        let mut r = m.clone();
        for _ in 0..4 {
            r = rotate90(&r);
            let d = shape_discrepancy(&m, &r).unwrap();
            assert!(d <= 1e-6, "{d}");
        }
    }

    #[test]
    fn disk_versus_thin_rectangle() {
        let d1 = disk(80, 40.0, 40.0, 20.0);
        let d2 = disk(80, 30.0, 45.0, 12.0);
        let rect = BinaryMask::from_fn(80, 80, |u, v| (10..70).contains(&u) && (37..43).contains(&v));
        let disk_rect = shape_discrepancy(&d1, &rect).unwrap();
        let disk_disk = shape_discrepancy(&d1, &d2).unwrap();
        assert!(disk_rect > 0.0);
        assert!(disk_rect > disk_disk, "{disk_rect} vs {disk_disk}");
    }

    #[test]
    fn empty_mask_errors() {
        let e = BinaryMask::new(8, 8);
        assert_eq!(shape_discrepancy(&e, &disk(8, 4.0, 4.0, 2.0)), Err(ShapeError::EmptyMask));
    }

    #[test]
    fn centroid_of_largest_component() {
        let mut m = BinaryMask::new(20, 10);
        for v in 0..4 {
            for u in 0..4 {
                m.set(u + 10, v + 2, true);
            }
        }
        m.set(1, 1, true);
        assert_eq!(largest_component_centroid(&m), Some((11.5, 3.5)));
        assert_eq!(largest_component_centroid(&BinaryMask::new(3, 3)), None);
    }
}
