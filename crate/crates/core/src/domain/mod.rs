//! Shared domain types and their small normalization operations.

mod category;
mod route;
mod score;
mod statement;
mod verdict;

pub use category::{CategoryError, MissingInfoCategory};
pub use route::{Route, RouteKind, RouteSource};
pub use score::{snap_score, ScoreError, ScoreLevel, VeracityScore};
pub use statement::{CategoryAnnotation, PossibilityLabel, Statement, StatementError};
pub use verdict::{binarize_verdict, GroundTruth, LabeledVerdict, UnmappedLabel, VerdictMap};
