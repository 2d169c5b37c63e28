use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Category of the most critical piece of information missing from a claim.
///
/// Letters follow the classification prompt, which has no `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MissingInfoCategory {
    A,
    B,
    C,
    E,
    F,
    G,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CategoryError {
    #[error("invalid category letter {0:?}")]
    InvalidLetter(char),
}

impl MissingInfoCategory {
    pub const ALL: [MissingInfoCategory; 6] = [Self::A, Self::B, Self::C, Self::E, Self::F, Self::G];

    /// Maps an uppercase letter to its category. `D` and everything outside
    /// `{A, B, C, E, F, G}` are rejected.
    pub fn from_letter(letter: char) -> Result<Self, CategoryError> {
        match letter {
            'A' => Ok(Self::A),
            'B' => Ok(Self::B),
            'C' => Ok(Self::C),
            'E' => Ok(Self::E),
            'F' => Ok(Self::F),
            'G' => Ok(Self::G),
            other => Err(CategoryError::InvalidLetter(other)),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Self::A => 'A',
            Self::B => 'B',
            Self::C => 'C',
            Self::E => 'E',
            Self::F => 'F',
            Self::G => 'G',
        }
    }

    /// Display name of the category.
    pub fn name(self) -> &'static str {
        match self {
            Self::A => "Speaker or person",
            Self::B => "Location",
            Self::C => "Textual context and subject specification",
            Self::E => "Non-textual evidence",
            Self::F => "Date and time period",
            Self::G => "Other",
        }
    }
}

impl fmt::Display for MissingInfoCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_letters() {
        assert_eq!(MissingInfoCategory::from_letter('A').unwrap().name(), "Speaker or person");
        assert_eq!(MissingInfoCategory::from_letter('E').unwrap().name(), "Non-textual evidence");
        assert_eq!(
            MissingInfoCategory::from_letter('D'),
            Err(CategoryError::InvalidLetter('D'))
        );
    }

    #[test]
    fn exactly_six_uppercase_letters_map() {
        let ok = ('A'..='Z').filter(|c| MissingInfoCategory::from_letter(*c).is_ok()).count();
        assert_eq!(ok, 6);
        assert!(MissingInfoCategory::from_letter('a').is_err());
        for cat in MissingInfoCategory::ALL {
            assert_eq!(MissingInfoCategory::from_letter(cat.letter()), Ok(cat));
        }
    }
}
