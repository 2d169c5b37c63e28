use alloc::string::String;
use core::fmt;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// The three admissible verdict values. `Abstain` is the 0.5 "uncertain"
/// answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScoreLevel {
    False,
    Abstain,
    True,
}

impl ScoreLevel {
    pub fn value(self) -> f64 {
        match self {
            Self::False => 0.0,
            Self::Abstain => 0.5,
            Self::True => 1.0,
        }
    }

    pub fn from_value(value: f64) -> Option<Self> {
        if value == 0.0 {
            Some(Self::False)
        } else if value == 0.5 {
            Some(Self::Abstain)
        } else if value == 1.0 {
            Some(Self::True)
        } else {
            None
        }
    }

    /// Human label: False / Uncertain / True.
    pub fn label(self) -> &'static str {
        match self {
            Self::False => "False",
            Self::Abstain => "Uncertain",
            Self::True => "True",
        }
    }

    pub fn is_abstention(self) -> bool {
        self == Self::Abstain
    }
}

impl fmt::Display for ScoreLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for ScoreLevel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for ScoreLevel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        ScoreLevel::from_value(value)
            .ok_or_else(|| de::Error::custom("snapped score must be 0, 0.5 or 1"))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("score {0} is outside [0, 1]")]
    OutOfRange(f64),
}

/// A veracity verdict snapped to `{0, 0.5, 1}`, keeping the raw numeral and
/// the verbatim reply it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VeracityScore {
    pub snapped: ScoreLevel,
    pub raw: Option<f64>,
    pub reply_text: String,
}

impl VeracityScore {
    pub fn from_level(level: ScoreLevel) -> Self {
        Self { snapped: level, raw: None, reply_text: String::new() }
    }

    pub fn with_reply(mut self, reply: impl Into<String>) -> Self {
        self.reply_text = reply.into();
        self
    }

    pub fn value(&self) -> f64 {
        self.snapped.value()
    }

    pub fn is_abstention(&self) -> bool {
        self.snapped.is_abstention()
    }
}

/// Snaps `raw` to the nearest of `{0, 0.5, 1}`. The midpoints 0.25 and 0.75
/// go to 0.5.
pub fn snap_score(raw: f64) -> Result<VeracityScore, ScoreError> {
    if !(0.0..=1.0).contains(&raw) {
        return Err(ScoreError::OutOfRange(raw));
    }
    let snapped = if raw < 0.25 {
        ScoreLevel::False
    } else if raw > 0.75 {
        ScoreLevel::True
    } else {
        ScoreLevel::Abstain
    };
    Ok(VeracityScore { snapped, raw: Some(raw), reply_text: String::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Enumerate the candidates, keep the nearest, break ties toward 0.5.
    fn nearest_oracle(raw: f64) -> f64 {
        let mut best = 0.5;
        let mut best_d = (raw - 0.5).abs();
        for cand in [0.0, 1.0] {
            let d = (raw - cand).abs();
            if d < best_d {
                best = cand;
                best_d = d;
            }
        }
        best
    }

    #[test]
    fn fixed_points_and_midpoints() {
        assert_eq!(snap_score(0.5).unwrap().snapped, ScoreLevel::Abstain);
        assert_eq!(snap_score(0.9).unwrap().snapped, ScoreLevel::True);
        assert_eq!(snap_score(0.25).unwrap().snapped, ScoreLevel::Abstain);
        assert_eq!(snap_score(0.75).unwrap().snapped, ScoreLevel::Abstain);
        assert_eq!(snap_score(0.0).unwrap().snapped, ScoreLevel::False);
        assert_eq!(snap_score(0.9).unwrap().raw, Some(0.9));
    }

    #[test]
    fn out_of_range() {
        assert_eq!(snap_score(-0.1), Err(ScoreError::OutOfRange(-0.1)));
        assert_eq!(snap_score(5.0), Err(ScoreError::OutOfRange(5.0)));
        assert!(snap_score(f64::NAN).is_err());
    }

    #[test]
    fn agrees_with_enumeration_on_a_grid() {
        for i in 0..=1000 {
            let raw = i as f64 / 1000.0;
            let s = snap_score(raw).unwrap();
            assert_eq!(s.value(), nearest_oracle(raw), "raw={raw}");
            assert!((s.value() - raw).abs() <= 0.25);
            assert_eq!(snap_score(s.value()).unwrap().snapped, s.snapped);
        }
    }
}
