//! Allocation-only core of the claim clarification toolkit.
//!
//! Everything here is pure: the missing-information taxonomy, veracity
//! scores, the prompt catalog and reply parsers, evaluation metrics, corpus
//! n-gram and lexicon analysis, and the clarification session state machine.
//! IO, the model gateway, persistence and the operator surfaces live in the
//! `clarify` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod domain;
pub mod metrics;
pub mod parse;
pub mod prompts;
pub mod record;
pub mod session;

pub use domain::{
    binarize_verdict, snap_score, CategoryAnnotation, GroundTruth, LabeledVerdict,
    MissingInfoCategory, PossibilityLabel, Route, RouteKind, RouteSource, ScoreLevel, Statement,
    VerdictMap, VeracityScore,
};

/// Whitespace-delimited word count, the token measure used for question and
/// answer lengths and as the usage fallback when a backend reports none.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}
