use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LabeledVerdict, MissingInfoCategory};

/// Whether a claim can be verified in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PossibilityLabel {
    Possible,
    Hard,
    Impossible,
}

impl PossibilityLabel {
    pub const ALL: [PossibilityLabel; 3] = [Self::Possible, Self::Hard, Self::Impossible];

    /// Case-insensitive parse of `possible`, `hard` or `impossible`.
    pub fn parse(text: &str) -> Option<Self> {
        let t = text.trim();
        if t.eq_ignore_ascii_case("possible") {
            Some(Self::Possible)
        } else if t.eq_ignore_ascii_case("hard") {
            Some(Self::Hard)
        } else if t.eq_ignore_ascii_case("impossible") {
            Some(Self::Impossible)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Possible => "possible",
            Self::Hard => "hard",
            Self::Impossible => "impossible",
        }
    }
}

/// One human labeler's category for a statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryAnnotation {
    pub labeler: String,
    pub category: MissingInfoCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatementError {
    #[error("statement text is empty")]
    EmptyText,
    #[error("statement {0} already has {max} annotations", max = Statement::MAX_ANNOTATIONS)]
    TooManyAnnotations(String),
    #[error("labeler {labeler} already annotated statement {statement}")]
    DuplicateLabeler { statement: String, labeler: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub id: String,
    text: String,
    pub possibility: PossibilityLabel,
    pub verdict: Option<LabeledVerdict>,
    pub article: Option<String>,
    annotations: Vec<CategoryAnnotation>,
}

impl Statement {
    pub const MAX_ANNOTATIONS: usize = 3;

    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        possibility: PossibilityLabel,
    ) -> Result<Self, StatementError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(StatementError::EmptyText);
        }
        Ok(Self {
            id: id.into(),
            text,
            possibility,
            verdict: None,
            article: None,
            annotations: Vec::new(),
        })
    }

    pub fn with_verdict(mut self, verdict: LabeledVerdict) -> Self {
        self.verdict = Some(verdict);
        self
    }

    pub fn with_article(mut self, article: impl Into<String>) -> Self {
        self.article = Some(article.into());
        self
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn annotations(&self) -> &[CategoryAnnotation] {
        &self.annotations
    }

    pub fn annotate(
        &mut self,
        labeler: impl Into<String>,
        category: MissingInfoCategory,
    ) -> Result<(), StatementError> {
        let labeler = labeler.into();
        if self.annotations.iter().any(|a| a.labeler == labeler) {
            return Err(StatementError::DuplicateLabeler { statement: self.id.clone(), labeler });
        }
        if self.annotations.len() >= Self::MAX_ANNOTATIONS {
            return Err(StatementError::TooManyAnnotations(self.id.clone()));
        }
        self.annotations.push(CategoryAnnotation { labeler, category });
        Ok(())
    }

    pub fn has_article(&self) -> bool {
        self.article.as_deref().is_some_and(|a| !a.trim().is_empty())
    }
}
