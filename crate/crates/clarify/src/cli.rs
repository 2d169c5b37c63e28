//! Command-line interface. Exit codes: 0 success, 2 configuration error,
//! 3 data error, 4 backend error.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clarify_core::analysis::{
    default_seed_words, expand_seed_lexicon, ngram_frequencies, panels_to_csv, render_panels,
    uncertainty_term_frequencies, EmbeddingStore, TokenizerConfig,
};
use clarify_core::metrics::{
    category_accuracy, render_metrics_table, routing_share, AbstainPolicy, AgreementFilter, MetricsReport,
};
use clarify_core::prompts::catalog;
use clarify_core::record::{StatementRecord, Strategy};
use clarify_core::{MissingInfoCategory, PossibilityLabel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    ChatBackend, Gateway, GatewayConfig, RemoteBackend, RemoteConfig, ScriptFixture, ScriptedBackend,
};
use crate::ingest::{attach_annotations, filter_by_possibility, load_corpus, Corpus, SchemaConfig};
use crate::pipeline::{Pipeline, PipelineConfig, PipelineError, RouterChoice, SessionManager};
use crate::store::RunStore;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("backend error: {0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Backend(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "clarify", version, about = "Clarifying-question claim verification toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one strategy over a corpus and write its metrics report.
    Run(RunArgs),
    /// Corpus and run analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Render stored runs as a metrics table.
    Report(ReportArgs),
    /// Serve the clarification session HTTP API.
    Serve(ServeArgs),
    /// Print the prompt catalog as JSON.
    Prompts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouterArg {
    None,
    Llm,
    Heuristic,
}

impl From<RouterArg> for RouterChoice {
    fn from(r: RouterArg) -> Self {
        match r {
            RouterArg::None => RouterChoice::None,
            RouterArg::Llm => RouterChoice::Llm,
            RouterArg::Heuristic => RouterChoice::Heuristic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    AbstainAsError,
    ResolvedOnly,
}

impl From<PolicyArg> for AbstainPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::AbstainAsError => AbstainPolicy::AbstainAsError,
            PolicyArg::ResolvedOnly => AbstainPolicy::ResolvedOnly,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// `fixture:<path>` for a scripted replay, or `remote` for an
    /// OpenAI-compatible endpoint (CLARIFY_API_BASE, CLARIFY_API_KEY).
    #[arg(long)]
    pub backend: Option<String>,
    /// Model name sent to the backend [env: CLARIFY_MODEL, default gpt-4].
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Requests per minute; unlimited when omitted.
    #[arg(long)]
    pub rpm: Option<u32>,
    /// Store root holding runs, sessions and the completion cache.
    #[arg(long, default_value = "clarify-store")]
    pub store: PathBuf,
    /// Bypass the completion cache.
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run config; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// JSON schema config for the corpus file.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Possibility labels to keep, comma separated, or `all`.
    #[arg(long)]
    pub possibility: Option<String>,
    #[arg(long, value_enum)]
    pub router: Option<RouterArg>,
    #[arg(long)]
    pub enforce_routing: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyArg>,
    /// Directory for the report files.
    #[arg(long, default_value = "reports")]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
}

/// File form of a run's settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: Option<String>,
    pub corpus: Option<PathBuf>,
    pub schema: Option<SchemaConfig>,
    pub possibility: Option<Vec<PossibilityLabel>>,
    pub backend: Option<String>,
    pub router: Option<RouterArg>,
    pub enforce_routing: Option<bool>,
    pub workers: Option<usize>,
    pub policy: Option<AbstainPolicy>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Most frequent unigrams or 2-grams over a replies file.
    Ngrams(NgramArgs),
    /// Expand the seed lexicon and count its words over a replies file.
    Lexicon(LexiconArgs),
    /// Percentage of user-routed questions per category for a stored run.
    RoutingShare(RunRef),
    /// Category prediction accuracy against human annotations.
    CategoryAccuracy(CategoryAccuracyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Replies: one per line, or JSON lines when the extension is .jsonl.
    #[arg(long)]
    pub input: PathBuf,
    /// Field holding the text in JSON-lines input.
    #[arg(long, default_value = "reply")]
    pub field: String,
    /// Newline-separated stopwords to drop.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Emit CSV instead of an aligned table.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Clone, Args)]
pub struct NgramArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Clone, Args)]
pub struct LexiconArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Word vectors, one `word v1 .. vN` line each.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Seed words, one per line; the built-in 19-word list by default.
    #[arg(long)]
    pub seed: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RunRef {
    /// Stored run id.
    #[arg(long, conflicts_with = "records")]
    pub run: Option<String>,
    /// A records.jsonl file, instead of a stored run.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long, default_value = "clarify-store")]
    pub store: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterArg {
    MatchAny,
    TwoOfThree,
    Unanimous,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct CategoryAccuracyArgs {
    #[command(flatten)]
    pub source: RunRef,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// CSV with statement_id, labeler_id, category_letter.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub filter: FilterArg,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Run ids to include; every stored run when omitted.
    #[arg(long)]
    pub run: Vec<String>,
    #[arg(long, default_value = "clarify-store")]
    pub store: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, value_enum, default_value = "llm")]
    pub router: RouterArg,
    #[command(flatten)]
    pub backend: BackendArgs,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => cmd_run(args, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Report(args) => cmd_report(args, out),
        Command::Serve(args) => cmd_serve(args),
        Command::Prompts => {
            let json = serde_json::to_string_pretty(&catalog()).expect("catalog serializes");
            writeln!(out, "{json}").map_err(io_out)
        }
    }
}

fn io_out(e: std::io::Error) -> CliError {
    CliError::Data(format!("writing output: {e}"))
}

fn build_gateway(args: &BackendArgs, spec: Option<&str>) -> Result<(Arc<Gateway>, RunStore), CliError> {
    let spec = spec
        .ok_or_else(|| CliError::Config("--backend is required (fixture:<path> or remote)".into()))?;
    let backend: Arc<dyn ChatBackend> = if let Some(path) = spec.strip_prefix("fixture:") {
        let fx = ScriptFixture::from_path(Path::new(path)).map_err(CliError::Config)?;
        Arc::new(ScriptedBackend::new(fx))
    } else if spec == "remote" {
        Arc::new(RemoteBackend::new(RemoteConfig::from_env()))
    } else {
        return Err(CliError::Config(format!("unknown backend {spec:?}")));
    };
    let mut config = GatewayConfig { requests_per_minute: args.rpm, ..GatewayConfig::default() };
    if let Some(m) = &args.model {
        config.model = m.clone();
    }
    if let Some(t) = args.temperature {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(CliError::Config(format!("temperature {t} must be >= 0")));
        }
        config.temperature = t;
    }
    let store = RunStore::open(&args.store).map_err(|e| CliError::Config(e.to_string()))?;
    let mut gateway = Gateway::new(backend, config);
    if !args.no_cache {
        gateway = gateway.with_cache(Arc::new(store.cache()));
    }
    Ok((Arc::new(gateway), store))
}

fn load_schema(path: Option<&Path>, inline: Option<SchemaConfig>, corpus: &Path) -> Result<SchemaConfig, CliError> {
    match path {
        Some(p) => SchemaConfig::from_path(p).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(inline.unwrap_or_else(|| SchemaConfig::default().for_path(corpus))),
    }
}

fn load(corpus: &Path, schema: &SchemaConfig) -> Result<Corpus, CliError> {
    let outcome = load_corpus(corpus, schema).map_err(|e| CliError::Data(e.to_string()))?;
    if !outcome.rejected.is_empty() {
        eprintln!("{} row(s) rejected:", outcome.rejected.len());
        eprint!("{}", outcome.error_report());
    }
    Ok(outcome.corpus)
}

fn parse_possibility(spec: &str) -> Result<Option<BTreeSet<PossibilityLabel>>, CliError> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(None);
    }
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| PossibilityLabel::parse(s).ok_or_else(|| CliError::Config(format!("unknown possibility {s:?}"))))
        .collect::<Result<BTreeSet<_>, _>>()
        .map(Some)
}

fn cmd_run(args: RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file: RunConfig = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let strategy_name = args
        .strategy
        .clone()
        .or(file.strategy)
        .ok_or_else(|| CliError::Config("--strategy is required".into()))?;
    let strategy: Strategy = strategy_name.parse().map_err(CliError::Config)?;
    let corpus_path = args
        .corpus
        .clone()
        .or(file.corpus)
        .ok_or_else(|| CliError::Config("--corpus is required".into()))?;
    let schema = load_schema(args.schema.as_deref(), file.schema, &corpus_path)?;
    let keep = match (&args.possibility, file.possibility) {
        (Some(spec), _) => parse_possibility(spec)?,
        (None, Some(list)) => Some(list.into_iter().collect()),
        (None, None) => Some([PossibilityLabel::Hard, PossibilityLabel::Impossible].into()),
    };
    let config = PipelineConfig {
        router: args.router.or(file.router).map_or(RouterChoice::None, Into::into),
        enforce_routing: args.enforce_routing || file.enforce_routing.unwrap_or(false),
        workers: args.workers.or(file.workers).unwrap_or(4),
        policy: args.policy.map(Into::into).or(file.policy).unwrap_or_default(),
        ..PipelineConfig::default()
    };
    let (gateway, store) = {
        let spec = args.backend.backend.clone().or(file.backend);
        build_gateway(&args.backend, spec.as_deref())?
    };

    let mut corpus = load(&corpus_path, &schema)?;
    if let Some(keep) = &keep {
        corpus = filter_by_possibility(&corpus, keep);
    }
    let pipeline = Pipeline::new(gateway, config);
    let (result, run_id) = pipeline
        .run_strategy(&corpus, strategy, Some(&store))
        .map_err(|e: PipelineError| CliError::Data(e.to_string()))?;
    let run_id = run_id.expect("store given");
    for s in &result.skipped {
        eprintln!("skipped {}: {}", s.statement_id, s.reason);
    }
    for f in &result.failed {
        eprintln!("failed {}: {}", f.statement_id, f.reason);
    }
    let Some(metrics) = &result.metrics else {
        return Err(CliError::Backend(format!(
            "every eligible statement failed ({}); run {run_id} kept for resume",
            result.failed.first().map_or("", |f| f.reason.as_str())
        )));
    };

    fs::create_dir_all(&args.out).map_err(|e| CliError::Config(format!("{}: {e}", args.out.display())))?;
    let table = render_metrics_table(&[(strategy.display_name(), metrics)]);
    let json = serde_json::to_string_pretty(&ReportFile { run_id: &run_id, strategy, metrics })
        .expect("report serializes");
    let write = |name: String, body: &str| {
        let p = args.out.join(name);
        fs::write(&p, body).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    };
    write(format!("{strategy}.metrics.txt"), &table)?;
    write(format!("{strategy}.metrics.json"), &(json + "\n"))?;
    write(
        format!("{strategy}.records.jsonl"),
        &fs::read_to_string(store.records_path(&run_id)).map_err(|e| CliError::Data(e.to_string()))?,
    )?;
    write!(out, "{table}").map_err(io_out)?;
    writeln!(
        out,
        "run {run_id}: {} records, {} skipped, {} failed",
        result.records.len(),
        result.skipped.len(),
        result.failed.len()
    )
    .map_err(io_out)
}

#[derive(Serialize)]
struct ReportFile<'a> {
    run_id: &'a str,
    strategy: Strategy,
    metrics: &'a MetricsReport,
}

fn read_documents(args: &InputArgs) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
    let jsonl = args.input.extension().is_some_and(|e| e == "jsonl");
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            if !jsonl {
                return Ok(l.to_string());
            }
            let v: serde_json::Value =
                serde_json::from_str(l).map_err(|e| CliError::Data(format!("line {}: {e}", i + 1)))?;
            v.get(&args.field)
                .and_then(|f| f.as_str())
                .map(String::from)
                .ok_or_else(|| CliError::Data(format!("line {}: no string field {:?}", i + 1, args.field)))
        })
        .collect()
}

fn tokenizer(args: &InputArgs) -> Result<TokenizerConfig, CliError> {
    let mut cfg = TokenizerConfig::default();
    if let Some(p) = &args.stopwords {
        let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        cfg.stopwords = text.lines().map(str::trim).filter(|w| !w.is_empty()).map(String::from).collect();
    }
    Ok(cfg)
}

fn load_run_records(r: &RunRef) -> Result<Vec<StatementRecord>, CliError> {
    match (&r.run, &r.records) {
        (Some(id), _) => {
            let store = RunStore::open(&r.store).map_err(|e| CliError::Config(e.to_string()))?;
            store.load_run(id).map(|(_, res)| res.records).map_err(|e| CliError::Data(e.to_string()))
        }
        (None, Some(p)) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .enumerate()
                .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Data(format!("line {}: {e}", i + 1))))
                .collect()
        }
        (None, None) => Err(CliError::Config("give --run or --records".into())),
    }
}

fn cmd_analyze(cmd: AnalyzeCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        AnalyzeCommand::Ngrams(a) => {
            let docs = read_documents(&a.input)?;
            let table = ngram_frequencies(&docs, a.n, a.top, &tokenizer(&a.input)?)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let title = if a.n == 1 { "Unigrams" } else { "2-grams" };
            let body = if a.input.csv { panels_to_csv(&[(title, &table)]) } else { render_panels(&[(title, &table)]) };
            write!(out, "{body}").map_err(io_out)
        }
        AnalyzeCommand::Lexicon(a) => {
            let text = fs::read_to_string(&a.embeddings)
                .map_err(|e| CliError::Data(format!("{}: {e}", a.embeddings.display())))?;
            let store = EmbeddingStore::parse_text(&text, true).map_err(|e| CliError::Data(e.to_string()))?;
            let seed = match &a.seed {
                Some(p) => fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
                    .lines()
                    .map(str::trim)
                    .filter(|w| !w.is_empty())
                    .map(String::from)
                    .collect(),
                None => default_seed_words(),
            };
            let lexicon = expand_seed_lexicon(&seed, &store, a.threshold).map_err(|e| CliError::Config(e.to_string()))?;
            if !lexicon.missing_seeds.is_empty() {
                eprintln!("seed words missing from embeddings: {}", lexicon.missing_seeds.join(", "));
            }
            let docs = read_documents(&a.input)?;
            let table = uncertainty_term_frequencies(&docs, &lexicon, a.top, &tokenizer(&a.input)?)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let title = "Uncertainty terms";
            let body = if a.input.csv { panels_to_csv(&[(title, &table)]) } else { render_panels(&[(title, &table)]) };
            write!(out, "{body}").map_err(io_out)
        }
        AnalyzeCommand::RoutingShare(r) => {
            let records = load_run_records(&r)?;
            let pairs: Vec<(MissingInfoCategory, _)> = records
                .iter()
                .filter_map(|rec| Some((rec.primary_category()?, rec.route?.kind)))
                .collect();
            if pairs.is_empty() {
                return Err(CliError::Data("no record carries both a category and a route".into()));
            }
            write!(out, "{}", routing_share(&pairs).render()).map_err(io_out)
        }
        AnalyzeCommand::CategoryAccuracy(a) => {
            let records = load_run_records(&a.source)?;
            let schema = load_schema(a.schema.as_deref(), None, &a.corpus)?;
            let corpus = attach_annotations(&load(&a.corpus, &schema)?, &a.annotations)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let preds: BTreeMap<String, MissingInfoCategory> = records
                .iter()
                .filter_map(|r| Some((r.statement_id.clone(), r.primary_category()?)))
                .collect();
            let filters = match a.filter {
                FilterArg::MatchAny => vec![AgreementFilter::MatchAny],
                FilterArg::TwoOfThree => vec![AgreementFilter::TwoOfThree],
                FilterArg::Unanimous => vec![AgreementFilter::Unanimous],
                FilterArg::All => vec![AgreementFilter::MatchAny, AgreementFilter::TwoOfThree, AgreementFilter::Unanimous],
            };
            for f in filters {
                let acc = category_accuracy(&preds, &corpus.statements, f).map_err(|e| CliError::Data(e.to_string()))?;
                writeln!(out, "{f:?}").map_err(io_out)?;
                for (c, t) in &acc.per_category {
                    writeln!(out, "  {} ({}): {:.2}  [{}/{}]", c, c.name(), t.percent, t.count, t.total)
                        .map_err(io_out)?;
                }
                writeln!(out, "  total: {:.2}  [{}/{}]", acc.overall.percent, acc.overall.count, acc.overall.total)
                    .map_err(io_out)?;
            }
            Ok(())
        }
    }
}

fn cmd_report(args: ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = RunStore::open(&args.store).map_err(|e| CliError::Config(e.to_string()))?;
    let manifests = if args.run.is_empty() {
        store.list_runs().map_err(|e| CliError::Data(e.to_string()))?
    } else {
        args.run
            .iter()
            .map(|id| store.load_manifest(id))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(e.to_string()))?
    };
    let rows: Vec<(String, &MetricsReport)> = manifests
        .iter()
        .filter_map(|m| Some((format!("{} [{}]", m.strategy.display_name(), m.run_id), m.metrics.as_ref()?)))
        .collect();
    if rows.is_empty() {
        return Err(CliError::Data("no finished runs with metrics".into()));
    }
    if args.json {
        let json: Vec<_> = manifests.iter().filter(|m| m.metrics.is_some()).collect();
        writeln!(out, "{}", serde_json::to_string_pretty(&json).expect("manifests serialize")).map_err(io_out)
    } else {
        let refs: Vec<(&str, &MetricsReport)> = rows.iter().map(|(n, m)| (n.as_str(), *m)).collect();
        write!(out, "{}", render_metrics_table(&refs)).map_err(io_out)
    }
}

fn cmd_serve(args: ServeArgs) -> Result<(), CliError> {
    let (gateway, store) = build_gateway(&args.backend, args.backend.backend.as_deref())?;
    let config = PipelineConfig { router: args.router.into(), ..PipelineConfig::default() };
    let manager = Arc::new(SessionManager::new(Arc::new(Pipeline::new(gateway, config)), Some(store)));
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Config(e.to_string()))?;
    rt.block_on(crate::server::serve(args.bind, manager))
        .map_err(|e| CliError::Config(format!("serving on {}: {e}", args.bind)))
}
