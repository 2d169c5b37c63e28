//! Strategy execution over a corpus and the interactive clarification
//! sessions.
//!
//! Every step renders one catalog prompt, sends it through the gateway and
//! parses the reply. Question and verdict steps retry once with a format
//! reminder appended when the reply does not parse.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use clarify_core::metrics::{AbstainPolicy, MetricsReport};
use clarify_core::parse::{parse_category_reply, parse_route_reply, parse_score_reply, ParseError};
use clarify_core::prompts::{render, Bindings, RenderError, TemplateId};
use clarify_core::record::{RunResult, Skipped, StatementRecord, Strategy, TokenLengths, TranscriptEntry};
use clarify_core::session::{ClarifySession, SessionError};
use clarify_core::{count_tokens, MissingInfoCategory, Route, RouteKind, RouteSource, Statement, VeracityScore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};
use crate::ingest::Corpus;
use crate::store::{RunStore, StoreError};

const CATEGORY_REMINDER: &str = "Remember: end your response with the category letter or letters, separated by a vertical bar.";
const SCORE_REMINDER: &str = "Remember: respond with a single number, 0, 0.5 or 1.";
const QUESTION_REMINDER: &str = "Remember: respond with one clarifying question.";

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unparseable reply: {0}")]
    Parse(#[from] ParseError),
    #[error("statement has no article")]
    MissingArticle,
    #[error("heuristic routing needs a question category")]
    MissingCategory,
    #[error("question is empty")]
    EmptyQuestion,
}

impl StepError {
    pub fn retriable(&self) -> bool {
        match self {
            Self::Gateway(e) => e.retriable(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionMode {
    Generic,
    CategoryBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouterChoice {
    /// Do not route. Batch runs only.
    #[default]
    None,
    Llm,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictMode {
    Enabled,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerdictContext<'a> {
    None,
    Qa { question: &'a str, answer: &'a str },
    Block(&'a str),
}

/// Categories the heuristic router sends to the user; all others go to the
/// web.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeuristicRouter {
    pub user_categories: BTreeSet<MissingInfoCategory>,
}

impl Default for HeuristicRouter {
    fn default() -> Self {
        Self { user_categories: [MissingInfoCategory::A, MissingInfoCategory::E].into() }
    }
}

impl HeuristicRouter {
    pub fn route(&self, primary: MissingInfoCategory) -> Route {
        let kind = if self.user_categories.contains(&primary) {
            RouteKind::UserQuery
        } else {
            RouteKind::WebRetrieval
        };
        Route::new(kind, RouteSource::HeuristicRouter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub router: RouterChoice,
    /// Only user-routed questions get a simulated answer.
    pub enforce_routing: bool,
    pub heuristic: HeuristicRouter,
    pub workers: usize,
    pub policy: AbstainPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            router: RouterChoice::None,
            enforce_routing: false,
            heuristic: HeuristicRouter::default(),
            workers: 4,
            policy: AbstainPolicy::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no statement is eligible for {strategy}: {} skipped ({})", skipped.len(), summarize(skipped))]
    NoEligibleStatements { strategy: Strategy, skipped: Vec<Skipped> },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("worker pool: {0}")]
    Pool(String),
}

fn summarize(skipped: &[Skipped]) -> String {
    let mut counts: std::collections::BTreeMap<&str, usize> = Default::default();
    for s in skipped {
        *counts.entry(s.reason.as_str()).or_default() += 1;
    }
    counts.iter().map(|(r, n)| format!("{n} {r}")).collect::<Vec<_>>().join(", ")
}

pub struct Pipeline {
    gateway: Arc<Gateway>,
    config: PipelineConfig,
}

type Transcript = Vec<TranscriptEntry>;

impl Pipeline {
    pub fn new(gateway: Arc<Gateway>, config: PipelineConfig) -> Self {
        Self { gateway, config }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    fn ask(&self, prompt: String, tag: &str, tx: &mut Transcript) -> Result<String, StepError> {
        let req = self.gateway.request(prompt, tag);
        let c = self.gateway.complete(&req)?;
        tx.push(TranscriptEntry { digest: c.digest, reply: c.text.clone() });
        Ok(c.text)
    }

    fn ask_parsed<T>(
        &self,
        prompt: String,
        tag: &str,
        reminder: &str,
        tx: &mut Transcript,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, StepError> {
        let reply = self.ask(prompt.clone(), tag, tx)?;
        match parse(&reply) {
            Ok(v) => Ok(v),
            Err(first) => {
                tracing::debug!(tag, error = %first, "reply did not parse, retrying with reminder");
                let reply = self.ask(format!("{prompt}\n\n{reminder}"), tag, tx)?;
                Ok(parse(&reply)?)
            }
        }
    }

    pub fn step_question(
        &self,
        statement: &str,
        mode: QuestionMode,
        tx: &mut Transcript,
    ) -> Result<(String, Option<Vec<MissingInfoCategory>>), StepError> {
        let b = Bindings::new().statement(statement);
        match mode {
            QuestionMode::CategoryBased => {
                let prompt = render(TemplateId::CategoryQuestion, &b)?;
                let reply = self.ask_parsed(prompt, "question", CATEGORY_REMINDER, tx, parse_category_reply)?;
                Ok((reply.question, Some(reply.categories)))
            }
            QuestionMode::Generic => {
                let prompt = render(TemplateId::GenericQuestion, &b)?;
                let q = self.ask_parsed(prompt, "question", QUESTION_REMINDER, tx, |r| {
                    let q = r.trim();
                    if q.is_empty() {
                        Err(ParseError::MissingQuestion)
                    } else {
                        Ok(q.to_string())
                    }
                })?;
                Ok((q, None))
            }
        }
    }

    pub fn step_route(
        &self,
        statement: &str,
        question: &str,
        categories: Option<&[MissingInfoCategory]>,
        router: RouterChoice,
        tx: &mut Transcript,
    ) -> Result<Option<Route>, StepError> {
        if question.trim().is_empty() {
            return Err(StepError::EmptyQuestion);
        }
        match router {
            RouterChoice::None => Ok(None),
            RouterChoice::Heuristic => {
                let primary = categories.and_then(|c| c.first()).ok_or(StepError::MissingCategory)?;
                Ok(Some(self.config.heuristic.route(*primary)))
            }
            RouterChoice::Llm => {
                let prompt = render(TemplateId::RouteDecision, &Bindings::new().statement(statement).question(question))?;
                let reply = self.ask(prompt, "route", tx)?;
                Ok(Some(parse_route_reply(&reply)?))
            }
        }
    }

    pub fn step_simulate_user(
        &self,
        statement: &str,
        article: Option<&str>,
        question: &str,
        tx: &mut Transcript,
    ) -> Result<String, StepError> {
        let article = article.filter(|a| !a.trim().is_empty()).ok_or(StepError::MissingArticle)?;
        let prompt = render(
            TemplateId::SimulatedUser,
            &Bindings::new().statement(statement).question(question).article(article),
        )?;
        Ok(self.ask(prompt, "simulated-user", tx)?.trim().to_string())
    }

    pub fn step_fill_blank(
        &self,
        statement: &str,
        article: Option<&str>,
        tx: &mut Transcript,
    ) -> Result<String, StepError> {
        let article = article.filter(|a| !a.trim().is_empty()).ok_or(StepError::MissingArticle)?;
        let prompt = render(TemplateId::FillBlankExtract, &Bindings::new().statement(statement).article(article))?;
        Ok(self.ask(prompt, "fill-blank", tx)?.trim().to_string())
    }

    pub fn step_verdict(
        &self,
        statement: &str,
        context: VerdictContext<'_>,
        mode: VerdictMode,
        tx: &mut Transcript,
    ) -> Result<VeracityScore, StepError> {
        use TemplateId::*;
        let b = Bindings::new().statement(statement);
        let (id, b) = match (context, mode) {
            (VerdictContext::None, VerdictMode::Enabled) => (VeracityEnabled, b),
            (VerdictContext::None, VerdictMode::Disabled) => (VeracityDisabled, b),
            (VerdictContext::Qa { question, answer }, m) => (
                if m == VerdictMode::Enabled { VeracityEnabledWithContext } else { VeracityDisabledWithContext },
                b.question(question).context(answer),
            ),
            (VerdictContext::Block(block), m) => (
                if m == VerdictMode::Enabled { VeracityEnabledWithBlock } else { VeracityDisabledWithBlock },
                b.context(block),
            ),
        };
        let prompt = render(id, &b)?;
        self.ask_parsed(prompt, "verdict", SCORE_REMINDER, tx, parse_score_reply)
    }

    /// Runs one strategy's prompt sequence for one statement.
    pub fn process_statement(&self, st: &Statement, strategy: Strategy) -> Result<StatementRecord, StepError> {
        let mut tx = Transcript::new();
        let text = st.text();
        let article = st.article.as_deref();
        let mut rec = StatementRecord {
            statement_id: st.id.clone(),
            strategy,
            question: None,
            question_categories: None,
            route: None,
            answer: None,
            context_block: None,
            score: VeracityScore::from_level(clarify_core::ScoreLevel::Abstain),
            token_lengths: None,
            transcript: Vec::new(),
        };
        let mode = if strategy == Strategy::CategoryQaDisabled || strategy == Strategy::BaselineDisabled {
            VerdictMode::Disabled
        } else {
            VerdictMode::Enabled
        };
        rec.score = match strategy {
            Strategy::BaselineEnabled | Strategy::BaselineDisabled => {
                self.step_verdict(text, VerdictContext::None, mode, &mut tx)?
            }
            Strategy::GenericQa | Strategy::CategoryQa | Strategy::CategoryQaDisabled => {
                let qmode = if strategy == Strategy::GenericQa {
                    QuestionMode::Generic
                } else {
                    QuestionMode::CategoryBased
                };
                let (question, cats) = self.step_question(text, qmode, &mut tx)?;
                let route = self.step_route(text, &question, cats.as_deref(), self.config.router, &mut tx)?;
                let ask_user = !self.config.enforce_routing || route.is_none_or(|r| r.is_user_query());
                let answer =
                    if ask_user { Some(self.step_simulate_user(text, article, &question, &mut tx)?) } else { None };
                let score = match &answer {
                    Some(a) => self.step_verdict(text, VerdictContext::Qa { question: &question, answer: a }, mode, &mut tx)?,
                    None => self.step_verdict(text, VerdictContext::None, mode, &mut tx)?,
                };
                rec.token_lengths = Some(TokenLengths {
                    question: count_tokens(&question),
                    answer: answer.as_deref().map_or(0, count_tokens),
                });
                rec.question = Some(question);
                rec.question_categories = cats;
                rec.route = route;
                rec.answer = answer;
                score
            }
            Strategy::FillBlank => {
                let block = self.step_fill_blank(text, article, &mut tx)?;
                let score = self.step_verdict(text, VerdictContext::Block(&block), mode, &mut tx)?;
                rec.context_block = Some(block);
                score
            }
            Strategy::Oracle => {
                let article = article.filter(|a| !a.trim().is_empty()).ok_or(StepError::MissingArticle)?;
                let score = self.step_verdict(text, VerdictContext::Block(article), mode, &mut tx)?;
                rec.context_block = Some(article.to_string());
                score
            }
        };
        rec.transcript = tx;
        Ok(rec)
    }

    /// The settings that determine a run's records, hashed into its id.
    /// Worker count is left out so a resumed run may use a different pool.
    pub fn config_snapshot(&self, strategy: Strategy) -> serde_json::Value {
        let g = self.gateway.config();
        serde_json::json!({
            "strategy": strategy,
            "router": self.config.router,
            "enforce_routing": self.config.enforce_routing,
            "heuristic_user_categories": self.config.heuristic.user_categories,
            "policy": self.config.policy,
            "backend": self.gateway.backend_name(),
            "model": g.model,
            "temperature": g.temperature,
            "max_tokens": g.max_tokens,
        })
    }

    /// Runs `strategy` over every eligible statement of `corpus`.
    ///
    /// Statements without a verdict label, or without an article when the
    /// strategy reads one, are skipped. A statement whose steps fail is
    /// recorded as failed and left out of the metrics. With a store, the
    /// run is persisted and a previous unfinished run with the same inputs
    /// is resumed.
    pub fn run_strategy(
        &self,
        corpus: &Corpus,
        strategy: Strategy,
        store: Option<&RunStore>,
    ) -> Result<(RunResult, Option<String>), PipelineError> {
        if corpus.is_empty() {
            return Err(PipelineError::EmptyCorpus);
        }
        let mut skipped = Vec::new();
        let mut eligible = Vec::new();
        for st in &corpus.statements {
            if st.verdict.is_none() {
                skipped.push(Skipped { statement_id: st.id.clone(), reason: "missing verdict label".into() });
            } else if strategy.needs_article() && !st.has_article() {
                skipped.push(Skipped { statement_id: st.id.clone(), reason: "missing article".into() });
            } else {
                eligible.push(st);
            }
        }
        if eligible.is_empty() {
            return Err(PipelineError::NoEligibleStatements { strategy, skipped });
        }

        let (writer, done) = match store {
            Some(s) => {
                let (w, existing) = s.begin_run(strategy, &corpus.digest(), self.config_snapshot(strategy))?;
                (Some(w), crate::store::records_by_id(existing))
            }
            None => (None, HashMap::new()),
        };
        if !done.is_empty() {
            tracing::info!(resumed = done.len(), "resuming run");
        }
        let todo: Vec<&Statement> = eligible.iter().copied().filter(|s| !done.contains_key(&s.id)).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers.max(1))
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?;
        let write_error: Mutex<Option<StoreError>> = Mutex::new(None);
        let fresh: Vec<(String, Result<StatementRecord, StepError>)> = pool.install(|| {
            todo.par_iter()
                .map(|st| {
                    let out = self.process_statement(st, strategy);
                    match &out {
                        Ok(rec) => {
                            if let Some(w) = &writer {
                                if let Err(e) = w.append(rec) {
                                    write_error.lock().expect("error slot").get_or_insert(e);
                                }
                            }
                        }
                        Err(e) => tracing::warn!(statement = %st.id, error = %e, "statement failed"),
                    }
                    (st.id.clone(), out)
                })
                .collect()
        });
        if let Some(e) = write_error.into_inner().expect("error slot") {
            if let (Some(s), Some(w)) = (store, writer) {
                let _ = s.abandon_run(w);
            }
            return Err(e.into());
        }
        let mut fresh: HashMap<String, Result<StatementRecord, StepError>> = fresh.into_iter().collect();
        let mut done = done;
        let mut records = Vec::new();
        let mut failed = Vec::new();
        let mut truths = Vec::new();
        for st in &eligible {
            let rec = match done.remove(&st.id) {
                Some(r) => Ok(r),
                None => fresh.remove(&st.id).expect("every eligible statement processed"),
            };
            match rec {
                Ok(r) => {
                    truths.push(st.verdict.as_ref().expect("eligible has verdict").value);
                    records.push(r);
                }
                Err(e) => failed.push(Skipped { statement_id: st.id.clone(), reason: e.to_string() }),
            }
        }
        let scores: Vec<VeracityScore> = records.iter().map(|r| r.score.clone()).collect();
        let metrics = if records.is_empty() {
            None
        } else {
            MetricsReport::compute(&scores, &truths, self.config.policy, skipped.len()).ok()
        };
        let result = RunResult { strategy, records, skipped, failed, metrics };
        let run_id = match (store, writer) {
            (Some(s), Some(w)) => Some(s.finish_run(w, &result)?),
            _ => None,
        };
        Ok((result, run_id))
    }
}

// ---------------------------------------------------------------- sessions

#[derive(Debug, Error)]
pub enum SessionOpError {
    #[error(transparent)]
    Invalid(SessionError),
    #[error("no session {0}")]
    NotFound(String),
    #[error("session {id} failed: {source}")]
    Step { id: String, source: StepError },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Live sessions keyed by id. Each session has its own lock, so answers to
/// different sessions proceed concurrently while one session's mutations
/// are serialized.
pub struct SessionManager {
    pipeline: Arc<Pipeline>,
    router: RouterChoice,
    sessions: Mutex<HashMap<String, Arc<Mutex<ClarifySession>>>>,
    store: Option<RunStore>,
}

impl SessionManager {
    pub fn new(pipeline: Arc<Pipeline>, store: Option<RunStore>) -> Self {
        let router = match pipeline.config().router {
            RouterChoice::None => RouterChoice::Llm,
            r => r,
        };
        Self { pipeline, router, sessions: Mutex::new(HashMap::new()), store }
    }

    fn persist(&self, s: &ClarifySession) -> Result<(), StoreError> {
        match &self.store {
            Some(store) => store.save_session(s),
            None => Ok(()),
        }
    }

    fn insert(&self, s: ClarifySession) -> Arc<Mutex<ClarifySession>> {
        let slot = Arc::new(Mutex::new(s.clone()));
        self.sessions.lock().expect("session map").insert(s.id.clone(), slot.clone());
        slot
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<ClarifySession>>, SessionOpError> {
        if let Some(s) = self.sessions.lock().expect("session map").get(id) {
            return Ok(s.clone());
        }
        match &self.store {
            Some(store) => match store.load_session(id)? {
                Some(s) => Ok(self.insert(s)),
                None => Err(SessionOpError::NotFound(id.into())),
            },
            None => Err(SessionOpError::NotFound(id.into())),
        }
    }

    /// Generates and routes the clarifying question. On a step failure the
    /// session is kept in the failed state and the error names it.
    pub fn begin_session(&self, statement: &str) -> Result<ClarifySession, SessionOpError> {
        let id = uuid::Uuid::new_v4().to_string();
        let mut session = ClarifySession::new(id.clone(), statement).map_err(SessionOpError::Invalid)?;
        let mut tx = Transcript::new();
        let outcome = self
            .pipeline
            .step_question(statement, QuestionMode::CategoryBased, &mut tx)
            .and_then(|(q, cats)| {
                let route = self.pipeline.step_route(statement, &q, cats.as_deref(), self.router, &mut tx)?;
                Ok((q, cats.unwrap_or_default(), route.expect("router is set")))
            });
        match outcome {
            Ok((q, cats, route)) => {
                session.pose(q, cats, route).map_err(SessionOpError::Invalid)?;
                self.persist(&session)?;
                self.insert(session.clone());
                Ok(session)
            }
            Err(source) => {
                session.fail(source.to_string()).map_err(SessionOpError::Invalid)?;
                self.persist(&session)?;
                self.insert(session);
                Err(SessionOpError::Step { id, source })
            }
        }
    }

    /// Scores the statement with the user's answer as context. A failed
    /// verdict step leaves the session awaiting an answer.
    pub fn answer_session(&self, id: &str, answer: &str) -> Result<ClarifySession, SessionOpError> {
        let slot = self.slot(id)?;
        let mut session = slot.lock().expect("session lock");
        session.check_answerable(answer).map_err(SessionOpError::Invalid)?;
        let question = session.question.clone().unwrap_or_default();
        let mut tx = Transcript::new();
        let verdict = self
            .pipeline
            .step_verdict(
                &session.statement,
                VerdictContext::Qa { question: &question, answer },
                VerdictMode::Enabled,
                &mut tx,
            )
            .map_err(|source| SessionOpError::Step { id: id.into(), source })?;
        let mut updated = session.clone();
        updated.complete(answer, verdict).map_err(SessionOpError::Invalid)?;
        self.persist(&updated)?;
        *session = updated.clone();
        Ok(updated)
    }

    pub fn get(&self, id: &str) -> Result<ClarifySession, SessionOpError> {
        let slot = self.slot(id)?;
        let s = slot.lock().expect("session lock").clone();
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session map").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
