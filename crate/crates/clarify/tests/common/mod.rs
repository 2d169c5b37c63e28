#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use clarify::gateway::{Gateway, GatewayConfig, RetryPolicy, ScriptFixture, ScriptedBackend};
use clarify::ingest::{load_corpus, Corpus, SchemaConfig};
use clarify::pipeline::{Pipeline, PipelineConfig};
use clarify_core::{binarize_verdict, PossibilityLabel, Statement, VerdictMap};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn config() -> GatewayConfig {
    GatewayConfig { model: "test-model".into(), ..GatewayConfig::default() }
}

pub fn scripted(fx: ScriptFixture) -> (Arc<ScriptedBackend>, Arc<Gateway>) {
    let backend = Arc::new(ScriptedBackend::new(fx));
    let gw = Gateway::new(backend.clone(), config()).with_retry(RetryPolicy::no_delay(0));
    (backend, Arc::new(gw))
}

pub fn pipeline(fx: ScriptFixture, config: PipelineConfig) -> (Arc<ScriptedBackend>, Pipeline) {
    let (b, gw) = scripted(fx);
    (b, Pipeline::new(gw, config))
}

pub fn statement(id: &str, text: &str, label: &str, article: Option<&str>) -> Statement {
    let mut s = Statement::new(id, text, PossibilityLabel::Hard)
        .unwrap()
        .with_verdict(binarize_verdict(label, &VerdictMap::default()).unwrap());
    if let Some(a) = article {
        s = s.with_article(a);
    }
    s
}

pub fn e2e_corpus() -> Corpus {
    load_corpus(&fixture("e2e/corpus.csv"), &SchemaConfig::default()).unwrap().corpus
}

pub fn e2e_script() -> ScriptFixture {
    ScriptFixture::from_path(&fixture("e2e/script.json")).unwrap()
}
