//! Deterministic analytic heart phantom built from labeled ellipsoids.
//!
//! World axes follow the explanation vocabulary: +X is the patient's right,
//! +Y anterior and +Z inferior. The default probe sits near `z = 0` and
//! images in +Z, so depth in the image grows toward the apex.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::structure::StructureId;
use crate::volume::LabeledVolume;

#[derive(Debug, Error, PartialEq)]
pub enum PhantomError {
    #[error("chambers {a} and {b} overlap by {fraction:.4} of the smaller one (tolerance {tolerance})")]
    Overlap {
        a: StructureId,
        b: StructureId,
        fraction: f64,
        tolerance: f64,
    },
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("invalid phantom spec: {0}")]
    Invalid(String),
}

/// One labeled ellipsoid. `rotation_deg` is an intrinsic X-Y-Z Euler triple
/// mapping the ellipsoid's local axes to world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidSpec {
    pub structure: StructureId,
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    #[serde(default)]
    pub rotation_deg: [f64; 3],
}

impl EllipsoidSpec {
    pub fn rotation(&self) -> Matrix3<f64> {
        let [x, y, z] = self.rotation_deg.map(f64::to_radians);
        (Rotation3::from_axis_angle(&Vector3::x_axis(), x)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), y)
            * Rotation3::from_axis_angle(&Vector3::z_axis(), z))
        .into_inner()
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }

    /// Analytic volume, 4/3·π·abc.
    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.semi_axes.iter().product::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    /// Per-axis jitter applied to every center, drawn from `seed`. Zero keeps the layout exact.
    #[serde(default)]
    pub jitter: f64,
    pub structures: Vec<EllipsoidSpec>,
    pub myo_thickness: f64,
    pub resolution: usize,
    /// Largest allowed chamber/chamber overlap as a fraction of the smaller chamber.
    pub overlap_tolerance: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self::with_resolution(128)
    }
}

impl PhantomSpec {
    pub fn with_resolution(resolution: usize) -> Self {
        use StructureId::*;
        let e = |structure, center, semi_axes, rotation_deg| EllipsoidSpec {
            structure,
            center,
            semi_axes,
            rotation_deg,
        };
        PhantomSpec {
            seed: 0,
            jitter: 0.0,
            structures: vec![
                e(RA, [0.797, 0.493, 0.236], [0.165, 0.148, 0.165], [0.0, 0.0, 0.0]),
                e(LA, [0.302, 0.329, 0.22], [0.165, 0.148, 0.148], [0.0, 0.0, 0.0]),
                e(RV, [0.613, 0.639, 0.601], [0.218, 0.137, 0.266], [0.0, 0.0, -45.0]),
                e(LV, [0.302, 0.361, 0.665], [0.181, 0.165, 0.281], [0.0, 0.0, 0.0]),
                e(TV, [0.74, 0.576, 0.401], [0.094, 0.094, 0.07], [0.0, 0.0, 0.0]),
                e(PV, [0.778, 0.653, 0.474], [0.073, 0.073, 0.07], [0.0, 0.0, 0.0]),
                e(MV, [0.302, 0.345, 0.376], [0.094, 0.094, 0.07], [0.0, 0.0, 0.0]),
                e(AV, [0.402, 0.46, 0.483], [0.073, 0.073, 0.07], [0.0, 0.0, 0.0]),
            ],
            myo_thickness: 0.033,
            resolution,
            overlap_tolerance: 0.01,
        }
    }

    pub fn ellipsoid(&self, s: StructureId) -> Option<&EllipsoidSpec> {
        self.structures.iter().find(|e| e.structure == s)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Ellipsoids after seeded jitter.
    fn placed(&self) -> Vec<EllipsoidSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.structures
            .iter()
            .map(|e| {
                let mut e = e.clone();
                if self.jitter > 0.0 {
                    for c in &mut e.center {
                        *c += rng.gen_range(-self.jitter..=self.jitter);
                    }
                }
                e
            })
            .collect()
    }
}

/// Precedence class: higher wins when ellipsoids overlap.
fn class_rank(s: StructureId) -> u8 {
    if s.is_valve() {
        3
    } else if s.is_chamber() {
        2
    } else if s == StructureId::MYO {
        1
    } else {
        0
    }
}

struct Raster {
    id: u8,
    rank: u8,
    inv_rot: Matrix3<f64>,
    center: Vector3<f64>,
    inv_semi: Vector3<f64>,
    lo: [usize; 3],
    hi: [usize; 3],
}

impl Raster {
    fn new(id: u8, rank: u8, e: &EllipsoidSpec, inflate: f64, n: usize) -> Self {
        let semi = Vector3::from(e.semi_axes).add_scalar(inflate);
        let rot = e.rotation();
        let center = e.center();
        // Axis-aligned half extents of the rotated ellipsoid.
        let half: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| (rot[(i, j)] * semi[j]).powi(2)).sum::<f64>().sqrt())
            .collect();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for i in 0..3 {
            let a = ((center[i] - half[i]) * n as f64 - 0.5).floor().max(0.0) as usize;
            let b = ((center[i] + half[i]) * n as f64 + 0.5).ceil().max(0.0) as usize;
            lo[i] = a.min(n);
            hi[i] = b.min(n);
        }
        Raster {
            id,
            rank,
            inv_rot: rot.transpose(),
            center,
            inv_semi: semi.map(|s| 1.0 / s),
            lo,
            hi,
        }
    }

    #[inline]
    fn q(&self, p: &Vector3<f64>) -> f64 {
        let d = self.inv_rot * (p - self.center);
        d.component_mul(&self.inv_semi).norm_squared()
    }
}

/// Rasterizes `spec`: each voxel takes the label of the innermost ellipsoid
/// containing its center, with valves over chambers over MYO over background.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<LabeledVolume, PhantomError> {
    let n = spec.resolution;
    if n < 32 {
        return Err(PhantomError::Resolution(format!(
            "resolution {n} below minimum of 32 per axis"
        )));
    }
    if !(spec.myo_thickness >= 0.0) {
        return Err(PhantomError::Invalid("negative myocardium thickness".into()));
    }
    let placed = spec.placed();
    for e in &placed {
        if e.structure == StructureId::BG || e.structure == StructureId::MYO {
            return Err(PhantomError::Invalid(format!(
                "{} cannot be given as an ellipsoid",
                e.structure
            )));
        }
        if e.semi_axes.iter().any(|&s| !(s > 0.0)) {
            return Err(PhantomError::Invalid(format!("{} has non-positive semi-axis", e.structure)));
        }
        let rot = e.rotation();
        for i in 0..3 {
            let half = (0..3)
                .map(|j| (rot[(i, j)] * e.semi_axes[j]).powi(2))
                .sum::<f64>()
                .sqrt();
            if e.center[i] - half < 0.0 || e.center[i] + half > 1.0 {
                return Err(PhantomError::Invalid(format!(
                    "{} does not fit in the unit cube",
                    e.structure
                )));
            }
        }
    }

    let mut rasters = Vec::new();
    for e in &placed {
        let rank = class_rank(e.structure);
        rasters.push(Raster::new(e.structure.id(), rank, e, 0.0, n));
        if e.structure.is_chamber() && spec.myo_thickness > 0.0 {
            rasters.push(Raster::new(
                StructureId::MYO.id(),
                class_rank(StructureId::MYO),
                e,
                spec.myo_thickness,
                n,
            ));
        }
    }

    let total = n * n * n;
    let mut labels = vec![0u8; total];
    let mut rank = vec![0u8; total];
    let mut depth = vec![f64::INFINITY; total];
    let h = 1.0 / n as f64;
    for r in &rasters {
        for z in r.lo[2]..r.hi[2] {
            for y in r.lo[1]..r.hi[1] {
                for x in r.lo[0]..r.hi[0] {
                    let p = Vector3::new((x as f64 + 0.5) * h, (y as f64 + 0.5) * h, (z as f64 + 0.5) * h);
                    let q = r.q(&p);
                    if q > 1.0 {
                        continue;
                    }
                    let i = x + n * (y + n * z);
                    if r.rank > rank[i] || (r.rank == rank[i] && q < depth[i]) {
                        labels[i] = r.id;
                        rank[i] = r.rank;
                        depth[i] = q;
                    }
                }
            }
        }
    }

    check_overlaps(spec, &placed, n)?;

    let mut counts = [0usize; 256];
    for &l in &labels {
        counts[l as usize] += 1;
    }
    for e in &placed {
        if counts[e.structure.id() as usize] == 0 {
            return Err(PhantomError::Resolution(format!(
                "{} rasterizes to zero voxels at {n}^3",
                e.structure
            )));
        }
    }

    let provenance = format!("phantom spec sha256:{} resolution {n}", spec.hash());
    LabeledVolume::new([n, n, n], labels, provenance)
        .map_err(|e| PhantomError::Invalid(e.to_string()))
}

fn check_overlaps(spec: &PhantomSpec, placed: &[EllipsoidSpec], n: usize) -> Result<(), PhantomError> {
    let chambers: Vec<(StructureId, Raster)> = placed
        .iter()
        .filter(|e| e.structure.is_chamber())
        .map(|e| (e.structure, Raster::new(e.structure.id(), 2, e, 0.0, n)))
        .collect();
    let h = 1.0 / n as f64;
    let count_in = |r: &Raster, other: Option<&Raster>| {
        let mut c = 0usize;
        let (lo, hi) = match other {
            Some(o) => (
                [0, 1, 2].map(|i| r.lo[i].max(o.lo[i])),
                [0, 1, 2].map(|i| r.hi[i].min(o.hi[i])),
            ),
            None => (r.lo, r.hi),
        };
        for z in lo[2]..hi[2] {
            for y in lo[1]..hi[1] {
                for x in lo[0]..hi[0] {
                    let p = Vector3::new((x as f64 + 0.5) * h, (y as f64 + 0.5) * h, (z as f64 + 0.5) * h);
                    if r.q(&p) <= 1.0 && other.map_or(true, |o| o.q(&p) <= 1.0) {
                        c += 1;
                    }
                }
            }
        }
        c
    };
    for i in 0..chambers.len() {
        for j in i + 1..chambers.len() {
            let (a, ra) = &chambers[i];
            let (b, rb) = &chambers[j];
            let both = count_in(ra, Some(rb));
            if both == 0 {
                continue;
            }
            let smaller = count_in(ra, None).min(count_in(rb, None)).max(1);
            let fraction = both as f64 / smaller as f64;
            if fraction > spec.overlap_tolerance {
                return Err(PhantomError::Overlap {
                    a: *a,
                    b: *b,
                    fraction,
                    tolerance: spec.overlap_tolerance,
                });
            }
        }
    }
    Ok(())
}
