//! Strategies and the per-statement records a batch run produces.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{MissingInfoCategory, Route, VeracityScore};
use crate::metrics::MetricsReport;

/// The uncertainty-resolution strategies that can be run over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// No context, the model may abstain.
    BaselineEnabled,
    /// No context, the model is told to answer 0 or 1.
    BaselineDisabled,
    /// Generic clarifying question, simulated answer, verdict.
    GenericQa,
    /// Category-targeted clarifying question, simulated answer, verdict.
    CategoryQa,
    /// As `CategoryQa` with the 0-or-1 verdict prompt.
    CategoryQaDisabled,
    /// Speaker/location/date/subject extracted from the article as context.
    FillBlank,
    /// The full article as context.
    Oracle,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Self::BaselineEnabled,
        Self::BaselineDisabled,
        Self::GenericQa,
        Self::CategoryQa,
        Self::CategoryQaDisabled,
        Self::FillBlank,
        Self::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BaselineEnabled => "baseline-enabled",
            Self::BaselineDisabled => "baseline-disabled",
            Self::GenericQa => "generic-qa",
            Self::CategoryQa => "category-qa",
            Self::CategoryQaDisabled => "category-qa-disabled",
            Self::FillBlank => "fill-blank",
            Self::Oracle => "oracle",
        }
    }

    /// Row label used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::BaselineEnabled => "Baseline (uncertainty enabled)",
            Self::BaselineDisabled => "Baseline (uncertainty disabled)",
            Self::GenericQa => "Generic QA",
            Self::CategoryQa => "Category-based QA",
            Self::CategoryQaDisabled => "Category-based QA (uncertainty disabled)",
            Self::FillBlank => "Fill-in-the-blank method",
            Self::Oracle => "Oracle Benchmark",
        }
    }

    /// Whether the strategy reads the fact-check article.
    pub fn needs_article(self) -> bool {
        !matches!(self, Self::BaselineEnabled | Self::BaselineDisabled)
    }

    pub fn asks_question(self) -> bool {
        matches!(self, Self::GenericQa | Self::CategoryQa | Self::CategoryQaDisabled)
    }

    /// Completions per statement on the happy path, routing excluded.
    pub fn prompt_budget(self) -> usize {
        match self {
            Self::BaselineEnabled | Self::BaselineDisabled | Self::Oracle => 1,
            Self::FillBlank => 2,
            Self::GenericQa | Self::CategoryQa | Self::CategoryQaDisabled => 3,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| alloc::format!("unknown strategy {s:?}"))
    }
}

/// One completion exchanged while processing a statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub reply: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLengths {
    pub question: usize,
    pub answer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementRecord {
    pub statement_id: String,
    pub strategy: Strategy,
    pub question: Option<String>,
    pub question_categories: Option<Vec<MissingInfoCategory>>,
    pub route: Option<Route>,
    pub answer: Option<String>,
    pub context_block: Option<String>,
    pub score: VeracityScore,
    pub token_lengths: Option<TokenLengths>,
    pub transcript: Vec<TranscriptEntry>,
}

impl StatementRecord {
    pub fn primary_category(&self) -> Option<MissingInfoCategory> {
        self.question_categories.as_ref().and_then(|c| c.first().copied())
    }
}

/// A statement the run did not process, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub statement_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub strategy: Strategy,
    pub records: Vec<StatementRecord>,
    pub skipped: Vec<Skipped>,
    /// Statements whose processing failed; excluded from metrics.
    pub failed: Vec<Skipped>,
    pub metrics: Option<MetricsReport>,
}
