//! Anatomical structure identifiers shared by every volume, view and explanation.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Label stored in a voxel or slice pixel.
///
/// The numeric ids are fixed: background is 0, the eight clinical structures
/// (four chambers then four valves) are 1..=8 and the myocardium/heart mask is 9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum StructureId {
    BG = 0,
    RA = 1,
    LA = 2,
    RV = 3,
    LV = 4,
    TV = 5,
    PV = 6,
    MV = 7,
    AV = 8,
    MYO = 9,
}

/// Number of label values, background included.
pub const LABEL_COUNT: usize = 10;

impl StructureId {
    pub const ALL: [StructureId; LABEL_COUNT] = [
        StructureId::BG,
        StructureId::RA,
        StructureId::LA,
        StructureId::RV,
        StructureId::LV,
        StructureId::TV,
        StructureId::PV,
        StructureId::MV,
        StructureId::AV,
        StructureId::MYO,
    ];

    pub const CHAMBERS: [StructureId; 4] = [
        StructureId::RA,
        StructureId::LA,
        StructureId::RV,
        StructureId::LV,
    ];

    pub const VALVES: [StructureId; 4] = [
        StructureId::TV,
        StructureId::PV,
        StructureId::MV,
        StructureId::AV,
    ];

    /// Chambers followed by valves, in id order.
    pub const CLINICAL: [StructureId; 8] = [
        StructureId::RA,
        StructureId::LA,
        StructureId::RV,
        StructureId::LV,
        StructureId::TV,
        StructureId::PV,
        StructureId::MV,
        StructureId::AV,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            StructureId::BG => "BG",
            StructureId::RA => "RA",
            StructureId::LA => "LA",
            StructureId::RV => "RV",
            StructureId::LV => "LV",
            StructureId::TV => "TV",
            StructureId::PV => "PV",
            StructureId::MV => "MV",
            StructureId::AV => "AV",
            StructureId::MYO => "MYO",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|s| s.name() == name)
    }

    pub fn long_name(self) -> &'static str {
        match self {
            StructureId::BG => "background",
            StructureId::RA => "right atrium",
            StructureId::LA => "left atrium",
            StructureId::RV => "right ventricle",
            StructureId::LV => "left ventricle",
            StructureId::TV => "tricuspid valve",
            StructureId::PV => "pulmonary valve",
            StructureId::MV => "mitral valve",
            StructureId::AV => "aortic valve",
            StructureId::MYO => "myocardium",
        }
    }

    pub fn is_chamber(self) -> bool {
        Self::CHAMBERS.contains(&self)
    }

    pub fn is_valve(self) -> bool {
        Self::VALVES.contains(&self)
    }

    pub fn is_clinical(self) -> bool {
        self.is_chamber() || self.is_valve()
    }
}

impl fmt::Display for StructureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A small set of structures, stored as a bitmask over label ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StructureSet(u16);

impl StructureSet {
    pub const fn empty() -> Self {
        StructureSet(0)
    }

    pub fn from_slice(items: &[StructureId]) -> Self {
        items.iter().fold(Self::empty(), |s, &id| s.with(id))
    }

    pub fn chambers() -> Self {
        Self::from_slice(&StructureId::CHAMBERS)
    }

    pub fn clinical() -> Self {
        Self::from_slice(&StructureId::CLINICAL)
    }

    pub fn with(self, id: StructureId) -> Self {
        StructureSet(self.0 | (1 << id.id()))
    }

    pub fn contains(self, id: StructureId) -> bool {
        self.0 & (1 << id.id()) != 0
    }

    pub fn is_subset_of(self, other: StructureSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Members in id order.
    pub fn iter(self) -> impl Iterator<Item = StructureId> {
        StructureId::ALL.into_iter().filter(move |s| self.contains(*s))
    }
}

impl FromIterator<StructureId> for StructureSet {
    fn from_iter<T: IntoIterator<Item = StructureId>>(iter: T) -> Self {
        iter.into_iter().fold(Self::empty(), |s, id| s.with(id))
    }
}

impl Serialize for StructureSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for StructureSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let items = Vec::<StructureId>::deserialize(deserializer)?;
        Ok(items.into_iter().collect())
    }
}
