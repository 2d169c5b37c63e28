mod common;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use clarify::gateway::{
    request_digest, Gateway, GatewayError, MemoryCache, RemoteBackend, RemoteConfig, RetryPolicy,
};
use common::*;
use proptest::prelude::*;
use serde_json::{json, Value};

type Seen = Vec<(Option<String>, Value)>;

#[derive(Clone, Default)]
struct Mock {
    replies: Arc<Mutex<VecDeque<(u16, Value)>>>,
    seen: Arc<Mutex<Seen>>,
}

async fn chat(State(m): State<Mock>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_string);
    m.seen.lock().unwrap().push((auth, body));
    let (status, reply) = m.replies.lock().unwrap().pop_front().unwrap_or((500, json!({"error": "script empty"})));
    (StatusCode::from_u16(status).unwrap(), Json(reply))
}

fn spawn(replies: Vec<(u16, Value)>) -> (Mock, String) {
    let mock = Mock { replies: Arc::new(Mutex::new(replies.into())), ..Default::default() };
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(mock.clone());
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (mock, format!("http://{addr}/v1"))
}

fn ok(text: &str) -> (u16, Value) {
    (
        200,
        json!({
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 3, "total_tokens": 14}
        }),
    )
}

fn gateway(base: String, retries: u32) -> Gateway {
    let backend = RemoteBackend::new(RemoteConfig {
        api_base: base,
        api_key: Some("sk-test".into()),
        timeout: Duration::from_secs(5),
    });
    Gateway::new(Arc::new(backend), config()).with_retry(RetryPolicy::no_delay(retries))
}

#[test]
fn rate_limit_then_success_is_retried() {
    let (mock, base) = spawn(vec![(429, json!({"error": "slow down"})), (503, json!({})), ok("0.5")]);
    let gw = gateway(base, 4);
    let c = gw.complete(&gw.request("Rate this", "verdict")).unwrap();
    assert_eq!(c.text, "0.5");
    assert_eq!((c.usage.prompt_tokens, c.usage.completion_tokens), (11, 3));
    let seen = mock.seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[0].0.as_deref(), Some("Bearer sk-test"));
    let body = &seen[0].1;
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "Rate this");
}

#[test]
fn retries_are_bounded() {
    let (mock, base) = spawn(vec![(500, json!({})); 5]);
    let gw = gateway(base, 2);
    match gw.complete(&gw.request("x", "t")) {
        Err(e @ GatewayError::BackendExhausted { attempts: 3, .. }) => assert!(e.retriable()),
        other => panic!("{other:?}"),
    }
    assert_eq!(mock.seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (mock, base) = spawn(vec![(400, json!({"error": "bad"})), ok("never")]);
    let gw = gateway(base, 4);
    let err = gw.complete(&gw.request("x", "t")).unwrap_err();
    assert!(matches!(err, GatewayError::Rejected(_)), "{err:?}");
    assert!(!err.retriable());
    assert_eq!(mock.seen.lock().unwrap().len(), 1);

    let (mock, base) = spawn(vec![(401, json!({"error": "who"})), ok("never")]);
    let gw = gateway(base, 4);
    assert!(matches!(gw.complete(&gw.request("x", "t")), Err(GatewayError::AuthFailure(_))));
    assert_eq!(mock.seen.lock().unwrap().len(), 1);
}

#[test]
fn unreachable_host_exhausts_retries() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let gw = gateway(format!("http://127.0.0.1:{port}/v1"), 1);
    assert!(matches!(gw.complete(&gw.request("x", "t")), Err(GatewayError::BackendExhausted { attempts: 2, .. })));
}

#[test]
fn cached_replies_skip_the_network() {
    let (mock, base) = spawn(vec![ok("first"), ok("second")]);
    let gw = gateway(base, 0).with_cache(Arc::new(MemoryCache::default()));
    let req = gw.request("same prompt", "t");
    assert_eq!(gw.complete(&req).unwrap().text, "first");
    let again = gw.complete(&gw.request("same prompt", "other tag")).unwrap();
    assert!(again.cached);
    assert_eq!(again.text, "first");
    assert_eq!(mock.seen.lock().unwrap().len(), 1);
}

proptest! {
    #[test]
    fn digest_changes_with_any_request_field(
        prompt in ".{1,40}",
        extra in "[a-z]{1,5}",
        temp in 0.0f64..1.0,
        max_tokens in 1u32..2048,
    ) {
        let gw = Gateway::new(Arc::new(clarify::gateway::ScriptedBackend::new(Default::default())), config());
        let base = gw.request(prompt.clone(), "t");
        let d = request_digest(&base);
        let mut tagged = base.clone();
        tagged.tag = extra.clone();
        prop_assert_eq!(request_digest(&tagged), d.clone());

        let mut p = base.clone();
        p.messages[0].content.push_str(&extra);
        prop_assert_ne!(request_digest(&p), d.clone());
        let mut m = base.clone();
        m.model.push_str(&extra);
        prop_assert_ne!(request_digest(&m), d.clone());
        let mut t = base.clone();
        t.temperature = temp + 1.0;
        prop_assert_ne!(request_digest(&t), d.clone());
        let mut k = base.clone();
        k.max_tokens = max_tokens + 512;
        prop_assert_ne!(request_digest(&k), d);
    }
}
