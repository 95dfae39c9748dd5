//! Labeled voxel volumes and the native `SPVL` container format.
//!
//! Layout on disk (all integers little-endian):
//!
//! ```text
//! "SPVL" | version: u16 = 1 | header_len: u32 | header JSON (UTF-8) | labels: u8 * nx*ny*nz
//! ```
//!
//! Labels are stored x-fastest, matching [`LabeledVolume::index`].

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::structure::{StructureId, LABEL_COUNT};

pub const MAGIC: &[u8; 4] = b"SPVL";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("invalid volume: {0}")]
    Invalid(String),
    #[error("structure {0} has no voxels")]
    EmptyStructure(StructureId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl VolumeError {
    fn format(offset: usize, message: impl Into<String>) -> Self {
        VolumeError::Format {
            offset,
            message: message.into(),
        }
    }
}

/// Dense 3D grid of structure labels covering `[0, dims * spacing]` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    labels: Vec<u8>,
    label_table: BTreeMap<u8, String>,
    provenance: String,
}

fn default_label_table() -> BTreeMap<u8, String> {
    StructureId::ALL
        .iter()
        .map(|s| (s.id(), s.name().to_string()))
        .collect()
}

impl LabeledVolume {
    /// Builds a volume whose bounding box is the unit cube.
    pub fn new(dims: [usize; 3], labels: Vec<u8>, provenance: impl Into<String>) -> Result<Self, VolumeError> {
        let spacing = [
            1.0 / dims[0].max(1) as f64,
            1.0 / dims[1].max(1) as f64,
            1.0 / dims[2].max(1) as f64,
        ];
        Self::with_spacing(dims, spacing, labels, default_label_table(), provenance)
    }

    pub fn with_spacing(
        dims: [usize; 3],
        spacing: [f64; 3],
        labels: Vec<u8>,
        label_table: BTreeMap<u8, String>,
        provenance: impl Into<String>,
    ) -> Result<Self, VolumeError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(VolumeError::Invalid(format!("zero-sized dimension in {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::Invalid(format!("bad spacing {spacing:?}")));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if labels.len() != expected {
            return Err(VolumeError::Invalid(format!(
                "label array has {} entries, dims require {expected}",
                labels.len()
            )));
        }
        let mut seen = [false; 256];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(bad) = (0..256).find(|&l| seen[l] && !label_table.contains_key(&(l as u8))) {
            return Err(VolumeError::Invalid(format!("label {bad} missing from label table")));
        }
        Ok(LabeledVolume {
            dims,
            spacing,
            labels,
            label_table,
            provenance: provenance.into(),
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_table(&self) -> &BTreeMap<u8, String> {
        &self.label_table
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.index(x, y, z)]
    }

    /// Center of voxel `(x, y, z)` in volume coordinates.
    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        Vector3::new(
            (x as f64 + 0.5) * self.spacing[0],
            (y as f64 + 0.5) * self.spacing[1],
            (z as f64 + 0.5) * self.spacing[2],
        )
    }

    /// Label of the voxel containing `p`; background outside the volume.
    #[inline]
    pub fn label_at(&self, p: &Vector3<f64>) -> u8 {
        let fx = p.x / self.spacing[0];
        let fy = p.y / self.spacing[1];
        let fz = p.z / self.spacing[2];
        if !(fx >= 0.0 && fy >= 0.0 && fz >= 0.0) {
            return 0;
        }
        let (x, y, z) = (fx as usize, fy as usize, fz as usize);
        if x >= self.dims[0] || y >= self.dims[1] || z >= self.dims[2] {
            return 0;
        }
        self.labels[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Voxel count per label id (0..=9).
    pub fn label_counts(&self) -> [usize; LABEL_COUNT] {
        let mut counts = [0usize; LABEL_COUNT];
        for &l in &self.labels {
            if let Some(c) = counts.get_mut(l as usize) {
                *c += 1;
            }
        }
        counts
    }

    /// Arithmetic mean of the member voxel centers of `s`.
    pub fn structure_centroid(&self, s: StructureId) -> Result<Vector3<f64>, VolumeError> {
        self.centroid_where(|l| l == s.id())
            .ok_or(VolumeError::EmptyStructure(s))
    }

    /// Centroid of every non-background voxel; the reference point for
    /// "side of the heart" descriptions.
    pub fn heart_center(&self) -> Option<Vector3<f64>> {
        self.centroid_where(|l| l != StructureId::BG.id())
    }

    fn centroid_where(&self, pred: impl Fn(u8) -> bool) -> Option<Vector3<f64>> {
        let [nx, ny, nz] = self.dims;
        let mut sum = [0.0f64; 3];
        let mut n = 0usize;
        for z in 0..nz {
            for y in 0..ny {
                let row = self.index(0, y, z);
                for x in 0..nx {
                    if pred(self.labels[row + x]) {
                        sum[0] += x as f64;
                        sum[1] += y as f64;
                        sum[2] += z as f64;
                        n += 1;
                    }
                }
            }
        }
        if n == 0 {
            return None;
        }
        let n = n as f64;
        Some(Vector3::new(
            (sum[0] / n + 0.5) * self.spacing[0],
            (sum[1] / n + 0.5) * self.spacing[1],
            (sum[2] / n + 0.5) * self.spacing[2],
        ))
    }

    /// Number of 6-connected components formed by voxels labeled `s`.
    pub fn component_count(&self, s: StructureId) -> usize {
        let [nx, ny, nz] = self.dims;
        let target = s.id();
        let mut visited = vec![false; self.labels.len()];
        let mut queue = VecDeque::new();
        let mut components = 0;
        for start in 0..self.labels.len() {
            if visited[start] || self.labels[start] != target {
                continue;
            }
            components += 1;
            visited[start] = true;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                let x = i % nx;
                let y = (i / nx) % ny;
                let z = i / (nx * ny);
                let mut visit = |j: usize| {
                    if !visited[j] && self.labels[j] == target {
                        visited[j] = true;
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < nx {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - nx);
                }
                if y + 1 < ny {
                    visit(i + nx);
                }
                if z > 0 {
                    visit(i - nx * ny);
                }
                if z + 1 < nz {
                    visit(i + nx * ny);
                }
            }
        }
        components
    }

    /// True if some voxel of `a` shares a face with a voxel of `b`.
    pub fn touches(&self, a: StructureId, b: StructureId) -> bool {
        let [nx, ny, nz] = self.dims;
        let (a, b) = (a.id(), b.id());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let i = self.index(x, y, z);
                    if self.labels[i] != a {
                        continue;
                    }
                    let hit = (x + 1 < nx && self.labels[i + 1] == b)
                        || (x > 0 && self.labels[i - 1] == b)
                        || (y + 1 < ny && self.labels[i + nx] == b)
                        || (y > 0 && self.labels[i - nx] == b)
                        || (z + 1 < nz && self.labels[i + nx * ny] == b)
                        || (z > 0 && self.labels[i - nx * ny] == b);
                    if hit {
                        return true;
                    }
                }
            }
        }
        false
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    dims: [usize; 3],
    spacing: [f64; 3],
    label_table: BTreeMap<u8, String>,
    provenance: String,
}

/// Serializes a volume into the native container.
pub fn encode_volume(vol: &LabeledVolume) -> Vec<u8> {
    let header = Header {
        dims: vol.dims,
        spacing: vol.spacing,
        label_table: vol.label_table.clone(),
        provenance: vol.provenance.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(10 + json.len() + vol.labels.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&vol.labels);
    out
}

pub fn decode_volume(bytes: &[u8]) -> Result<LabeledVolume, VolumeError> {
    if bytes.len() < 4 {
        return Err(VolumeError::format(bytes.len(), "file shorter than magic"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(VolumeError::format(0, "bad magic, expected \"SPVL\""));
    }
    if bytes.len() < 10 {
        return Err(VolumeError::format(bytes.len(), "truncated fixed header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(VolumeError::format(4, format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let header_end = 10usize
        .checked_add(header_len)
        .ok_or_else(|| VolumeError::format(6, "header length overflow"))?;
    if bytes.len() < header_end {
        return Err(VolumeError::format(
            bytes.len(),
            format!("truncated header: expected {header_len} bytes, found {}", bytes.len() - 10),
        ));
    }
    let header: Header = serde_json::from_slice(&bytes[10..header_end])
        .map_err(|e| VolumeError::format(10 + e.column().saturating_sub(1), format!("bad header JSON: {e}")))?;
    if let Some(axis) = header.dims.iter().position(|&d| d == 0) {
        return Err(VolumeError::format(10, format!("header declares 0 voxels on axis {axis}")));
    }
    let expected = header
        .dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| VolumeError::format(10, "voxel count overflow"))?;
    let actual = bytes.len() - header_end;
    if actual != expected {
        return Err(VolumeError::format(
            header_end + actual.min(expected),
            format!("payload length mismatch: expected {expected} bytes, found {actual}"),
        ));
    }
    LabeledVolume::with_spacing(
        header.dims,
        header.spacing,
        bytes[header_end..].to_vec(),
        header.label_table,
        header.provenance,
    )
    .map_err(|e| VolumeError::format(header_end, e.to_string()))
}

pub fn save_volume(vol: &LabeledVolume, path: impl AsRef<Path>) -> Result<(), VolumeError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_volume(vol))?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<LabeledVolume, VolumeError> {
    decode_volume(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sphere(n: usize, c: [f64; 3], r: f64) -> LabeledVolume {
        let mut labels = vec![0u8; n * n * n];
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let p = [(x as f64 + 0.5) / n as f64, (y as f64 + 0.5) / n as f64, (z as f64 + 0.5) / n as f64];
                    let d2: f64 = (0..3).map(|i| (p[i] - c[i]).powi(2)).sum();
                    if d2 <= r * r {
                        labels[x + n * (y + n * z)] = StructureId::LV.id();
                    }
                }
            }
        }
        LabeledVolume::new([n, n, n], labels, "test sphere").unwrap()
    }

    #[test]
    fn centroid_of_centered_sphere() {
        let vol = sphere(48, [0.5, 0.5, 0.5], 0.2);
        let c = vol.structure_centroid(StructureId::LV).unwrap();
        let half_voxel = 0.5 / 48.0;
        for i in 0..3 {
            assert!((c[i] - 0.5).abs() <= half_voxel, "{c:?}");
        }
    }

    #[test]
    fn centroid_of_absent_structure_errors() {
        let vol = sphere(16, [0.5, 0.5, 0.5], 0.2);
        assert!(matches!(
            vol.structure_centroid(StructureId::RA),
            Err(VolumeError::EmptyStructure(StructureId::RA))
        ));
    }

    #[test]
    fn zero_dimension_header_is_rejected() {
        let vol = sphere(8, [0.5, 0.5, 0.5], 0.3);
        let mut bytes = encode_volume(&vol);
        let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let mut header: serde_json::Value = serde_json::from_slice(&bytes[10..10 + header_len]).unwrap();
        header["dims"] = serde_json::json!([8, 0, 8]);
        let json = serde_json::to_vec(&header).unwrap();
        let mut patched = bytes[..6].to_vec();
        patched.extend_from_slice(&(json.len() as u32).to_le_bytes());
        patched.extend_from_slice(&json);
        patched.extend_from_slice(&bytes.split_off(10 + header_len));
        let err = decode_volume(&patched).unwrap_err();
        assert!(matches!(err, VolumeError::Format { .. }), "{err}");
        assert!(err.to_string().contains("0 voxels"));
    }

    #[test]
    fn truncated_payload_names_lengths() {
        let vol = sphere(8, [0.5, 0.5, 0.5], 0.3);
        let mut bytes = encode_volume(&vol);
        bytes.truncate(bytes.len() - 100);
        match decode_volume(&bytes).unwrap_err() {
            VolumeError::Format { message, .. } => {
                assert!(message.contains("expected 512"), "{message}");
                assert!(message.contains("found 412"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_magic() {
        let err = decode_volume(b"NRRD0004\n").unwrap_err();
        assert!(matches!(err, VolumeError::Format { offset: 0, .. }));
    }

    #[test]
    fn unknown_label_rejected() {
        let err = LabeledVolume::new([2, 1, 1], vec![0, 42], "x").unwrap_err();
        assert!(matches!(err, VolumeError::Invalid(_)));
    }

    #[test]
    fn components_and_contact() {
        let mut labels = vec![0u8; 27];
        labels[0] = 4;
        labels[2] = 4;
        labels[1] = 2;
        let vol = LabeledVolume::new([3, 3, 3], labels, "x").unwrap();
        assert_eq!(vol.component_count(StructureId::LV), 2);
        assert!(vol.touches(StructureId::LV, StructureId::LA));
        assert!(!vol.touches(StructureId::LV, StructureId::RA));
    }

    proptest! {
        #[test]
        fn save_load_round_trip(nx in 1usize..6, ny in 1usize..6, nz in 1usize..6, seed in any::<u64>()) {
            let n = nx * ny * nz;
            let labels: Vec<u8> = (0..n)
                .map(|i| ((seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407)) >> 33) % 10) as u8)
                .collect();
            let vol = LabeledVolume::new([nx, ny, nz], labels, format!("prop {seed}")).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("v.spvl");
            save_volume(&vol, &path).unwrap();
            let back = load_volume(&path).unwrap();
            prop_assert_eq!(back, vol);
        }
    }
}
