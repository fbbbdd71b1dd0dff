//! The seven software-quality attributes and a compact set type over them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A SQuaRE system quality.
///
/// Variant order is the canonical order used for serialization, model rows
/// and tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QualityAttribute {
    Maintainability,
    Security,
    Reliability,
    Usability,
    Compatibility,
    Performance,
    Portability,
}

pub const QUALITY_COUNT: usize = 7;

impl QualityAttribute {
    pub const ALL: [QualityAttribute; QUALITY_COUNT] = [
        QualityAttribute::Maintainability,
        QualityAttribute::Security,
        QualityAttribute::Reliability,
        QualityAttribute::Usability,
        QualityAttribute::Compatibility,
        QualityAttribute::Performance,
        QualityAttribute::Portability,
    ];

    /// Position in canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Lowercase wire name, e.g. `"security"`.
    pub fn name(self) -> &'static str {
        match self {
            QualityAttribute::Maintainability => "maintainability",
            QualityAttribute::Security => "security",
            QualityAttribute::Reliability => "reliability",
            QualityAttribute::Usability => "usability",
            QualityAttribute::Compatibility => "compatibility",
            QualityAttribute::Performance => "performance",
            QualityAttribute::Portability => "portability",
        }
    }

    /// Display name, e.g. `"Security"`.
    pub fn title(self) -> &'static str {
        match self {
            QualityAttribute::Maintainability => "Maintainability",
            QualityAttribute::Security => "Security",
            QualityAttribute::Reliability => "Reliability",
            QualityAttribute::Usability => "Usability",
            QualityAttribute::Compatibility => "Compatibility",
            QualityAttribute::Performance => "Performance",
            QualityAttribute::Portability => "Portability",
        }
    }
}

impl fmt::Display for QualityAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown quality attribute '{0}'")]
pub struct UnknownQuality(pub String);

impl FromStr for QualityAttribute {
    type Err = UnknownQuality;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|q| q.name() == lower)
            .ok_or_else(|| UnknownQuality(s.to_string()))
    }
}

impl Serialize for QualityAttribute {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for QualityAttribute {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A subset of the seven qualities, stored as a bitmask.
///
/// Iteration always follows canonical order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QualitySet(u8);

impl QualitySet {
    pub const EMPTY: QualitySet = QualitySet(0);
    pub const FULL: QualitySet = QualitySet(0x7f);

    pub fn new() -> Self {
        Self::EMPTY
    }

    pub fn from_bits(bits: u8) -> Self {
        QualitySet(bits & Self::FULL.0)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn insert(&mut self, q: QualityAttribute) {
        self.0 |= 1 << q.index();
    }

    pub fn remove(&mut self, q: QualityAttribute) {
        self.0 &= !(1 << q.index());
    }

    pub fn contains(self, q: QualityAttribute) -> bool {
        self.0 & (1 << q.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: QualitySet) -> QualitySet {
        QualitySet(self.0 | other.0)
    }

    pub fn intersection(self, other: QualitySet) -> QualitySet {
        QualitySet(self.0 & other.0)
    }

    pub fn symmetric_difference(self, other: QualitySet) -> QualitySet {
        QualitySet(self.0 ^ other.0)
    }

    pub fn complement(self) -> QualitySet {
        QualitySet(!self.0 & Self::FULL.0)
    }

    /// First member in canonical order.
    pub fn first(self) -> Option<QualityAttribute> {
        self.iter().next()
    }

    pub fn iter(self) -> impl Iterator<Item = QualityAttribute> {
        QualityAttribute::ALL
            .into_iter()
            .filter(move |q| self.contains(*q))
    }
}

impl FromIterator<QualityAttribute> for QualitySet {
    fn from_iter<I: IntoIterator<Item = QualityAttribute>>(iter: I) -> Self {
        let mut set = QualitySet::EMPTY;
        for q in iter {
            set.insert(q);
        }
        set
    }
}

impl fmt::Display for QualitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, q) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(q.name())?;
        }
        f.write_str("}")
    }
}

impl Serialize for QualitySet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for QualitySet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let names = Vec::<QualityAttribute>::deserialize(deserializer)?;
        Ok(names.into_iter().collect())
    }
}
