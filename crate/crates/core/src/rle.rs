//! Run-length encoding of label images for plan exports and the wire.
//!
//! A run is three bytes: `label: u8, length: u16 LE` with `length >= 1`.
//! Runs cover the image row-major; a run may span rows.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::ProbePose;
use crate::slicer::SegMap;
use crate::structure::LABEL_COUNT;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RleError {
    #[error("run stream length {0} is not a multiple of 3")]
    Ragged(usize),
    #[error("zero-length run at byte {0}")]
    ZeroRun(usize),
    #[error("label {label} at byte {offset} is out of range")]
    BadLabel { label: u8, offset: usize },
    #[error("runs cover {actual} pixels, expected {expected}")]
    Coverage { expected: usize, actual: usize },
    #[error("area table does not match decoded image")]
    AreaMismatch,
    #[error("base64: {0}")]
    Base64(String),
}

pub fn encode_runs(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut iter = labels.iter().copied().peekable();
    while let Some(l) = iter.next() {
        let mut run: u16 = 1;
        while run < u16::MAX && iter.peek() == Some(&l) {
            iter.next();
            run += 1;
        }
        out.push(l);
        out.extend_from_slice(&run.to_le_bytes());
    }
    out
}

pub fn decode_runs(runs: &[u8], expected: usize) -> Result<Vec<u8>, RleError> {
    if runs.len() % 3 != 0 {
        return Err(RleError::Ragged(runs.len()));
    }
    let mut out = Vec::with_capacity(expected);
    for (i, chunk) in runs.chunks_exact(3).enumerate() {
        let label = chunk[0];
        if label as usize >= LABEL_COUNT {
            return Err(RleError::BadLabel { label, offset: i * 3 });
        }
        let n = u16::from_le_bytes([chunk[1], chunk[2]]) as usize;
        if n == 0 {
            return Err(RleError::ZeroRun(i * 3 + 1));
        }
        if out.len() + n > expected {
            return Err(RleError::Coverage {
                expected,
                actual: out.len() + n,
            });
        }
        out.resize(out.len() + n, label);
    }
    if out.len() != expected {
        return Err(RleError::Coverage {
            expected,
            actual: out.len(),
        });
    }
    Ok(out)
}

/// JSON form of a [`SegMap`]: dimensions, per-label area table and base64 runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSegMap {
    pub width: usize,
    pub height: usize,
    pub areas: Vec<u32>,
    pub rle: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<ProbePose>,
}

impl EncodedSegMap {
    pub fn encode(map: &SegMap) -> Self {
        EncodedSegMap {
            width: map.width(),
            height: map.height(),
            areas: map.areas().to_vec(),
            rle: STANDARD.encode(encode_runs(map.labels())),
            pose: map.pose().copied(),
        }
    }

    pub fn decode(&self) -> Result<SegMap, RleError> {
        let runs = STANDARD
            .decode(&self.rle)
            .map_err(|e| RleError::Base64(e.to_string()))?;
        let labels = decode_runs(&runs, self.width * self.height)?;
        let map = SegMap::from_labels(self.width, self.height, labels);
        if map.areas()[..] != self.areas[..] {
            return Err(RleError::AreaMismatch);
        }
        Ok(match self.pose {
            Some(p) => map.with_pose(p),
            None => map,
        })
    }
}

impl Serialize for SegMap {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        EncodedSegMap::encode(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SegMap {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        EncodedSegMap::deserialize(deserializer)?
            .decode()
            .map_err(serde::de::Error::custom)
    }
}
