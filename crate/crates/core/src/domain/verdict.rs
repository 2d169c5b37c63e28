use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary ground-truth veracity of a claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroundTruth {
    False,
    True,
}

impl GroundTruth {
    pub fn from_bool(value: bool) -> Self {
        if value {
            Self::True
        } else {
            Self::False
        }
    }

    pub fn as_bool(self) -> bool {
        self == Self::True
    }
}

/// A binarized verdict together with the source label it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledVerdict {
    pub value: GroundTruth,
    pub raw_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("verdict label {0:?} has no binary mapping")]
pub struct UnmappedLabel(pub String);

/// Case-insensitive table from source verdict labels to binary truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BTreeMap<String, GroundTruth>", into = "BTreeMap<String, GroundTruth>")]
pub struct VerdictMap {
    entries: BTreeMap<String, GroundTruth>,
}

impl VerdictMap {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, label: &str, value: GroundTruth) {
        self.entries.insert(normalize(label), value);
    }

    pub fn get(&self, label: &str) -> Option<GroundTruth> {
        self.entries.get(&normalize(label)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Six-way Politifact scale: pants-fire, false and mostly-false map to
/// `False`; half-true, mostly-true and true map to `True`.
impl Default for VerdictMap {
    fn default() -> Self {
        let mut map = Self::empty();
        for label in ["pants-fire", "false", "mostly-false"] {
            map.insert(label, GroundTruth::False);
        }
        for label in ["half-true", "mostly-true", "true"] {
            map.insert(label, GroundTruth::True);
        }
        map
    }
}

impl From<BTreeMap<String, GroundTruth>> for VerdictMap {
    fn from(raw: BTreeMap<String, GroundTruth>) -> Self {
        let mut map = Self::empty();
        for (k, v) in raw {
            map.insert(&k, v);
        }
        map
    }
}

impl From<VerdictMap> for BTreeMap<String, GroundTruth> {
    fn from(map: VerdictMap) -> Self {
        map.entries
    }
}

fn normalize(label: &str) -> String {
    label.trim().to_lowercase()
}

pub fn binarize_verdict(raw_label: &str, mapping: &VerdictMap) -> Result<LabeledVerdict, UnmappedLabel> {
    mapping
        .get(raw_label)
        .map(|value| LabeledVerdict { value, raw_label: raw_label.to_string() })
        .ok_or_else(|| UnmappedLabel(raw_label.to_string()))
}
