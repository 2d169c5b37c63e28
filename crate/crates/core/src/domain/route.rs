use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    UserQuery,
    WebRetrieval,
}

/// Which router produced a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteSource {
    LlmRouter,
    HeuristicRouter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Route {
    pub kind: RouteKind,
    pub source: RouteSource,
}

impl Route {
    pub fn new(kind: RouteKind, source: RouteSource) -> Self {
        Self { kind, source }
    }

    pub fn is_user_query(&self) -> bool {
        self.kind == RouteKind::UserQuery
    }
}
