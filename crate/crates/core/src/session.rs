//! State machine for one interactive clarification.
//!
//! ```text
//! AwaitingQuestion ──► AwaitingAnswer ──► Completed
//!        │
//!        ├──────────► RoutedToWeb
//!        └──────────► Failed
//! ```
//!
//! A verdict exists exactly when the session is `Completed`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{MissingInfoCategory, Route, RouteKind, VeracityScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    AwaitingQuestion,
    AwaitingAnswer,
    RoutedToWeb,
    Completed,
    Failed,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AwaitingQuestion => "awaiting_question",
            Self::AwaitingAnswer => "awaiting_answer",
            Self::RoutedToWeb => "routed_to_web",
            Self::Completed => "completed",
            Self::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("statement text is empty")]
    EmptyStatement,
    #[error("answer text is empty")]
    EmptyAnswer,
    #[error("session is {actual:?}, expected {expected:?}")]
    WrongState { expected: SessionState, actual: SessionState },
}

pub const WEB_ROUTE_MESSAGE: &str = "The missing context looks retrievable from the web, so no question is posed to the user. Web retrieval is not performed by this tool.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarifySession {
    pub id: String,
    pub statement: String,
    state: SessionState,
    pub question: Option<String>,
    pub categories: Vec<MissingInfoCategory>,
    pub route: Option<Route>,
    pub answer: Option<String>,
    verdict: Option<VeracityScore>,
    pub diagnostics: Option<String>,
}

impl ClarifySession {
    pub fn new(id: impl Into<String>, statement: impl Into<String>) -> Result<Self, SessionError> {
        let statement = statement.into();
        if statement.trim().is_empty() {
            return Err(SessionError::EmptyStatement);
        }
        Ok(Self {
            id: id.into(),
            statement,
            state: SessionState::AwaitingQuestion,
            question: None,
            categories: Vec::new(),
            route: None,
            answer: None,
            verdict: None,
            diagnostics: None,
        })
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn verdict(&self) -> Option<&VeracityScore> {
        self.verdict.as_ref()
    }

    fn expect(&self, expected: SessionState) -> Result<(), SessionError> {
        if self.state == expected {
            Ok(())
        } else {
            Err(SessionError::WrongState { expected, actual: self.state })
        }
    }

    /// Records the generated question and routing decision. A user route
    /// waits for an answer; a web route ends the session.
    pub fn pose(
        &mut self,
        question: impl Into<String>,
        categories: Vec<MissingInfoCategory>,
        route: Route,
    ) -> Result<(), SessionError> {
        self.expect(SessionState::AwaitingQuestion)?;
        self.question = Some(question.into());
        self.categories = categories;
        self.route = Some(route);
        self.state = match route.kind {
            RouteKind::UserQuery => SessionState::AwaitingAnswer,
            RouteKind::WebRetrieval => {
                self.diagnostics = Some(String::from(WEB_ROUTE_MESSAGE));
                SessionState::RoutedToWeb
            }
        };
        Ok(())
    }

    pub fn fail(&mut self, diagnostics: impl Into<String>) -> Result<(), SessionError> {
        self.expect(SessionState::AwaitingQuestion)?;
        self.diagnostics = Some(diagnostics.into());
        self.state = SessionState::Failed;
        Ok(())
    }

    /// Checks that an answer can be accepted, without changing anything.
    pub fn check_answerable(&self, answer: &str) -> Result<(), SessionError> {
        self.expect(SessionState::AwaitingAnswer)?;
        if answer.trim().is_empty() {
            return Err(SessionError::EmptyAnswer);
        }
        Ok(())
    }

    pub fn complete(&mut self, answer: impl Into<String>, verdict: VeracityScore) -> Result<(), SessionError> {
        let answer = answer.into();
        self.check_answerable(&answer)?;
        self.answer = Some(answer);
        self.verdict = Some(verdict);
        self.state = SessionState::Completed;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{RouteSource, ScoreLevel};

    fn user() -> Route {
        Route::new(RouteKind::UserQuery, RouteSource::LlmRouter)
    }

    #[test]
    fn happy_path() {
        let mut s = ClarifySession::new("s1", "A nurse claims COVID is a hoax.").unwrap();
        s.pose("Which nurse are you referring to?", alloc::vec![MissingInfoCategory::A], user()).unwrap();
        assert_eq!(s.state(), SessionState::AwaitingAnswer);
        assert!(s.verdict().is_none());
        s.complete("Jane Doe", VeracityScore::from_level(ScoreLevel::False)).unwrap();
        assert_eq!(s.state(), SessionState::Completed);
        assert!(s.verdict().is_some());
        assert_eq!(
            s.complete("again", VeracityScore::from_level(ScoreLevel::True)),
            Err(SessionError::WrongState { expected: SessionState::AwaitingAnswer, actual: SessionState::Completed })
        );
    }

    #[test]
    fn web_route_is_terminal() {
        let mut s = ClarifySession::new("s1", "claim").unwrap();
        s.pose("Which law?", alloc::vec![MissingInfoCategory::C], Route::new(RouteKind::WebRetrieval, RouteSource::LlmRouter)).unwrap();
        assert_eq!(s.state(), SessionState::RoutedToWeb);
        assert!(s.complete("x", VeracityScore::from_level(ScoreLevel::True)).is_err());
        assert!(s.fail("late").is_err());
    }

    #[test]
    fn validation() {
        assert_eq!(ClarifySession::new("s", "  "), Err(SessionError::EmptyStatement));
        let mut s = ClarifySession::new("s", "claim").unwrap();
        s.pose("q?", alloc::vec![], user()).unwrap();
        assert_eq!(s.check_answerable(" "), Err(SessionError::EmptyAnswer));
        let mut f = ClarifySession::new("s", "claim").unwrap();
        f.fail("backend down").unwrap();
        assert_eq!(f.state(), SessionState::Failed);
        assert!(f.pose("q", alloc::vec![], user()).is_err());
    }
}
