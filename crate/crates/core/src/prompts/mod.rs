//! Prompt catalog and slot rendering.
//!
//! Every prompt the pipeline sends is one of the [`TemplateId`] bodies with
//! its slots substituted verbatim. Bodies are fixed text; rendering never
//! touches anything but the `{slot}` markers.

mod templates;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    GenericQuestion,
    KeywordPair,
    CategoryQuestion,
    RouteDecision,
    VeracityEnabled,
    VeracityEnabledWithContext,
    VeracityEnabledWithBlock,
    VeracityDisabled,
    VeracityDisabledWithContext,
    VeracityDisabledWithBlock,
    SimulatedUser,
    FillBlankExtract,
}

impl TemplateId {
    pub const ALL: [TemplateId; 12] = [
        Self::GenericQuestion,
        Self::KeywordPair,
        Self::CategoryQuestion,
        Self::RouteDecision,
        Self::VeracityEnabled,
        Self::VeracityEnabledWithContext,
        Self::VeracityEnabledWithBlock,
        Self::VeracityDisabled,
        Self::VeracityDisabledWithContext,
        Self::VeracityDisabledWithBlock,
        Self::SimulatedUser,
        Self::FillBlankExtract,
    ];

    pub fn body(self) -> &'static str {
        use templates::*;
        match self {
            Self::GenericQuestion => GENERIC_QUESTION,
            Self::KeywordPair => KEYWORD_PAIR,
            Self::CategoryQuestion => CATEGORY_QUESTION,
            Self::RouteDecision => ROUTE_DECISION,
            Self::VeracityEnabled => VERACITY_ENABLED,
            Self::VeracityEnabledWithContext => VERACITY_ENABLED_QA,
            Self::VeracityEnabledWithBlock => VERACITY_ENABLED_BLOCK,
            Self::VeracityDisabled => VERACITY_DISABLED,
            Self::VeracityDisabledWithContext => VERACITY_DISABLED_QA,
            Self::VeracityDisabledWithBlock => VERACITY_DISABLED_BLOCK,
            Self::SimulatedUser => SIMULATED_USER,
            Self::FillBlankExtract => FILL_BLANK_EXTRACT,
        }
    }

    /// Slots the body references, in order of first appearance.
    pub fn slots(self) -> Vec<Slot> {
        let mut out = Vec::new();
        for segment in segments(self.body()) {
            if let Segment::Slot(slot) = segment {
                if !out.contains(&slot) {
                    out.push(slot);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Statement,
    Question,
    Context,
    Article,
}

impl Slot {
    pub fn name(self) -> &'static str {
        match self {
            Self::Statement => "statement",
            Self::Question => "question",
            Self::Context => "context",
            Self::Article => "article",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "statement" => Some(Self::Statement),
            "question" => Some(Self::Question),
            "context" => Some(Self::Context),
            "article" => Some(Self::Article),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("template slot `{0}` is not bound")]
    MissingSlot(&'static str),
}

/// Slot values for one rendering.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings {
    values: BTreeMap<Slot, String>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, slot: Slot, value: impl Into<String>) -> Self {
        self.values.insert(slot, value.into());
        self
    }

    pub fn statement(self, value: impl Into<String>) -> Self {
        self.bind(Slot::Statement, value)
    }

    pub fn question(self, value: impl Into<String>) -> Self {
        self.bind(Slot::Question, value)
    }

    pub fn context(self, value: impl Into<String>) -> Self {
        self.bind(Slot::Context, value)
    }

    pub fn article(self, value: impl Into<String>) -> Self {
        self.bind(Slot::Article, value)
    }

    pub fn get(&self, slot: Slot) -> Option<&str> {
        self.values.get(&slot).map(String::as_str)
    }
}

enum Segment<'a> {
    Literal(&'a str),
    Slot(Slot),
}

fn segments(body: &str) -> impl Iterator<Item = Segment<'_>> {
    let mut rest = body;
    core::iter::from_fn(move || {
        if rest.is_empty() {
            return None;
        }
        if let Some(open) = rest.find('{') {
            if open > 0 {
                let (lit, tail) = rest.split_at(open);
                rest = tail;
                return Some(Segment::Literal(lit));
            }
            let close = rest.find('}').expect("unterminated slot marker in template");
            let slot = Slot::from_name(&rest[1..close]).expect("unknown slot name in template");
            rest = &rest[close + 1..];
            Some(Segment::Slot(slot))
        } else {
            let lit = rest;
            rest = "";
            Some(Segment::Literal(lit))
        }
    })
}

/// Substitutes every slot of `id`'s body from `bindings`. Bound values are
/// inserted as-is and never re-scanned for markers.
pub fn render(id: TemplateId, bindings: &Bindings) -> Result<String, RenderError> {
    let body = id.body();
    let mut out = String::with_capacity(body.len() + 256);
    for segment in segments(body) {
        match segment {
            Segment::Literal(lit) => out.push_str(lit),
            Segment::Slot(slot) => {
                let value = bindings.get(slot).ok_or(RenderError::MissingSlot(slot.name()))?;
                out.push_str(value);
            }
        }
    }
    Ok(out)
}

/// A catalog entry, suitable for exporting the exact prompt text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: &'static str,
    pub slots: Vec<Slot>,
}

pub fn catalog() -> Vec<PromptTemplate> {
    TemplateId::ALL
        .iter()
        .map(|&id| PromptTemplate { id, body: id.body(), slots: id.slots() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn veracity_enabled_opening() {
        let text = render(TemplateId::VeracityEnabled, &Bindings::new().statement("X")).unwrap();
        assert!(text.starts_with("Rate the truthfulness of the following statement: X."));
        assert!(text.ends_with("If uncertain or lacking context, use 0.5. Do not make assumptions or provide explanations; respond with a number."));
    }

    #[test]
    fn veracity_disabled_suffix() {
        let text = render(TemplateId::VeracityDisabled, &Bindings::new().statement("X")).unwrap();
        assert!(text.ends_with("Respond with 0 or 1 to your best ability; do not provide any other responses. Do not make assumptions or provide explanations; only respond with a number."));
    }

    #[test]
    fn qa_context_is_injected() {
        let b = Bindings::new().statement("S").question("Q?").context("Ans");
        let text = render(TemplateId::VeracityEnabledWithContext, &b).unwrap();
        assert_eq!(
            text,
            "Rate the truthfulness of the following statement: S. The following context from a user may be provided: Question: Q?, Answer: Ans. Please rate the statement's truthfulness on a scale from 0 to 1, where 0 signifies 'False' and 1 signifies 'True'. If uncertain or lacking context, use 0.5. Do not make assumptions or provide explanations; respond with a number."
        );
    }

    #[test]
    fn missing_slot() {
        assert_eq!(
            render(TemplateId::CategoryQuestion, &Bindings::new()),
            Err(RenderError::MissingSlot("statement"))
        );
        assert_eq!(
            render(TemplateId::RouteDecision, &Bindings::new().statement("s")),
            Err(RenderError::MissingSlot("question"))
        );
    }

    #[test]
    fn bound_values_are_not_rescanned() {
        let text =
            render(TemplateId::VeracityEnabled, &Bindings::new().statement("{question}")).unwrap();
        assert!(text.starts_with("Rate the truthfulness of the following statement: {question}."));
    }

    #[test]
    fn slot_inventory() {
        assert_eq!(TemplateId::CategoryQuestion.slots(), [Slot::Statement]);
        assert_eq!(TemplateId::RouteDecision.slots(), [Slot::Statement, Slot::Question]);
        assert_eq!(
            TemplateId::SimulatedUser.slots(),
            [Slot::Statement, Slot::Question, Slot::Article]
        );
        assert_eq!(TemplateId::FillBlankExtract.slots(), [Slot::Statement, Slot::Article]);
        assert_eq!(catalog().len(), TemplateId::ALL.len());
    }
}
