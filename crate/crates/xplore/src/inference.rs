//! The model client: one door through which every model-backed operation
//! walks.
//!
//! Four endpoints cover everything the pipeline may ask of a model:
//! generating a view hierarchy for a bare screenshot (`vh_generate`),
//! describing the action between two screens (`action_generate`), deciding
//! whether a screen matches an existing cluster (`cluster_decide`), and
//! answering a multiple-choice question (`qa_answer`).
//!
//! Three backends implement the door. [`MockBackend`] is a pure function of
//! the request — fixture tables and handlers for tests, least-information
//! defaults otherwise — so offline runs are fully deterministic.
//! [`RemoteBackend`] speaks JSON over HTTP (`POST {url}/v1/infer` with
//! `{"endpoint", "payload"}`, reply `{"body": ...}`). The transcript cache
//! sits in front of either: every response is written to
//! `<cache_dir>/<endpoint>/<request_id>.json`, and a request whose id is
//! already cached never reaches the backend, which makes reruns replayable
//! and byte-stable.
//!
//! Request ids are content hashes of `(endpoint, payload)` over a canonical
//! serialization (object keys sorted), so identical requests collide across
//! processes and machines — that is what makes the cache a cassette.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::vh::SimplifiedVh;

/// Environment variable naming a remote backend URL. When unset, the
/// default backend is the mock.
pub const ENV_MODEL_URL: &str = "XPLORE_MODEL_URL";

/// Environment variable naming the transcript cache directory.
pub const ENV_CACHE_DIR: &str = "XPLORE_CACHE_DIR";

/// Default remote timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Errors surfaced by the model client.
#[derive(Debug, Error)]
pub enum ClientError {
    /// The request payload does not match the endpoint's schema.
    #[error("request schema violation for {endpoint}: {reason}")]
    SchemaViolation { endpoint: Endpoint, reason: String },

    /// No backend configured and the cache had no answer.
    #[error("no backend configured and request {request_id} not in cache")]
    NoBackend { request_id: String },

    /// The remote backend did not answer in time.
    #[error("backend timeout: {reason}")]
    BackendTimeout { reason: String },

    /// The remote backend could not be reached at all.
    #[error("backend unreachable: {reason}")]
    BackendUnreachable { reason: String },

    /// The remote backend answered with a non-success status.
    #[error("backend returned HTTP {status}")]
    BackendHttp { status: u16 },

    /// The backend (or a cache file) produced a reply that fails the
    /// endpoint's response schema.
    #[error("malformed backend reply for {endpoint}: {reason}")]
    BackendMalformedReply { endpoint: Endpoint, reason: String },

    /// Reading or writing the transcript cache failed.
    #[error("cache io error on {path}: {source}")]
    CacheIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The four model-backed operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    VhGenerate,
    ActionGenerate,
    ClusterDecide,
    QaAnswer,
}

impl Endpoint {
    pub const ALL: [Endpoint; 4] = [
        Endpoint::VhGenerate,
        Endpoint::ActionGenerate,
        Endpoint::ClusterDecide,
        Endpoint::QaAnswer,
    ];

    /// Stable name, used in cache paths and on the wire.
    pub fn as_str(&self) -> &'static str {
        match self {
            Endpoint::VhGenerate => "vh_generate",
            Endpoint::ActionGenerate => "action_generate",
            Endpoint::ClusterDecide => "cluster_decide",
            Endpoint::QaAnswer => "qa_answer",
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which layer actually produced a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Remote,
    Cache,
}

/// A validated response: the body plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResponse {
    pub body: Value,
    pub backend: BackendKind,
}

/// Canonical serialization of a payload: `serde_json` with its default
/// (sorted) map representation, compact separators. Array order is
/// semantically significant and preserved.
pub fn canonical_json(value: &Value) -> String {
    // serde_json::Value maps are BTreeMap-backed here (the preserve_order
    // feature is off), so plain to_string is already key-sorted.
    value.to_string()
}

/// Deterministic request id: SHA-256 over the canonical serialization of
/// `{"endpoint": ..., "payload": ...}`, hex-encoded. Two payloads that
/// differ only in object key order get the same id.
pub fn request_id(endpoint: Endpoint, payload: &Value) -> String {
    let canonical = canonical_json(&json!({
        "endpoint": endpoint.as_str(),
        "payload": payload,
    }));
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Token-count proxy: whitespace-delimited words of the canonical payload.
pub fn count_tokens(payload: &Value) -> u64 {
    canonical_json(payload).split_whitespace().count() as u64
}

/// Cumulative token accounting, queryable via [`ModelClient::token_usage`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub requests: u64,
    pub total_tokens: u64,
    pub per_endpoint: BTreeMap<String, u64>,
}

impl TokenUsage {
    fn record(&mut self, endpoint: Endpoint, tokens: u64) {
        self.requests += 1;
        self.total_tokens += tokens;
        *self.per_endpoint.entry(endpoint.as_str().to_string()).or_default() += tokens;
    }
}

/// Something that can answer inference requests.
pub trait Backend: Send + Sync {
    fn infer(&self, endpoint: Endpoint, payload: &Value) -> Result<Value, ClientError>;
    fn kind(&self) -> BackendKind;
}

type Handler = Box<dyn Fn(&Value) -> Option<Value> + Send + Sync>;

/// A deterministic offline backend: a pure function of the request.
///
/// Resolution order: exact fixture by request id, then registered handlers
/// (first `Some` wins), then a least-information default per endpoint —
/// `cluster_decide` proposes a new node, `qa_answer` answers option A,
/// `vh_generate` invents a one-line hierarchy, `action_generate` invents a
/// tap.
#[derive(Default)]
pub struct MockBackend {
    fixtures: HashMap<String, Value>,
    handlers: Vec<(Endpoint, Handler)>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pin the response body for one exact request id.
    pub fn with_fixture(mut self, request_id: impl Into<String>, body: Value) -> Self {
        self.fixtures.insert(request_id.into(), body);
        self
    }

    /// Add a payload-inspecting handler for one endpoint. Handlers run in
    /// registration order; returning `None` falls through.
    pub fn with_handler(
        mut self,
        endpoint: Endpoint,
        handler: impl Fn(&Value) -> Option<Value> + Send + Sync + 'static,
    ) -> Self {
        self.handlers.push((endpoint, Box::new(handler)));
        self
    }

    /// A mock whose `cluster_decide` echoes the label hidden in the screen:
    /// it reads the resource id of the first hierarchy line, matches it
    /// against existing node descriptions, and says `match` on a hit or
    /// `new` (described by the label) on a miss. Clustering with this mock
    /// reproduces a ground-truth partition whenever screens carry distinct
    /// root resource ids.
    pub fn label_echo() -> Self {
        Self::new().with_handler(Endpoint::ClusterDecide, |payload| {
            let label = payload["screen"]["vh_lines"]
                .as_array()?
                .first()?
                .as_str()?
                .split('|')
                .nth(2)?
                .to_string();
            if let Some(nodes) = payload["nodes"].as_array() {
                for node in nodes {
                    if node["description"].as_str() == Some(label.as_str()) {
                        return Some(json!({ "match": node["id"] }));
                    }
                }
            }
            Some(json!({ "new": label }))
        })
    }

    fn default_body(endpoint: Endpoint, payload: &Value) -> Value {
        match endpoint {
            Endpoint::VhGenerate => {
                let frame = payload["frame"].as_u64().unwrap_or(0);
                json!({ "vh_lines": [format!("0|GeneratedScreen|frame_{frame}||false")] })
            }
            Endpoint::ActionGenerate => json!({
                "action": { "kind": "tap", "target": { "id": "mock_target", "bounds": null }, "params": null }
            }),
            Endpoint::ClusterDecide => {
                let description = payload["screen"]["vh_lines"]
                    .as_array()
                    .and_then(|lines| {
                        let parsed: Vec<String> =
                            lines.iter().filter_map(|l| l.as_str().map(String::from)).collect();
                        SimplifiedVh::from_lines(parsed).ok()
                    })
                    .and_then(|vh| crate::vh::describe(&vh))
                    .unwrap_or_else(|| "screen".to_string());
                json!({ "new": description })
            }
            Endpoint::QaAnswer => json!({ "reply": "A" }),
        }
    }
}

impl Backend for MockBackend {
    fn infer(&self, endpoint: Endpoint, payload: &Value) -> Result<Value, ClientError> {
        let id = request_id(endpoint, payload);
        if let Some(body) = self.fixtures.get(&id) {
            return Ok(body.clone());
        }
        for (ep, handler) in &self.handlers {
            if *ep == endpoint {
                if let Some(body) = handler(payload) {
                    return Ok(body);
                }
            }
        }
        Ok(Self::default_body(endpoint, payload))
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }
}

/// An HTTP backend: `POST {url}/v1/infer` with `{"endpoint", "payload"}`,
/// expecting `{"body": ...}` back.
pub struct RemoteBackend {
    agent: ureq::Agent,
    url: String,
}

impl RemoteBackend {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        RemoteBackend {
            agent: config.new_agent(),
            url: url.into().trim_end_matches('/').to_string(),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Backend for RemoteBackend {
    fn infer(&self, endpoint: Endpoint, payload: &Value) -> Result<Value, ClientError> {
        let request = json!({ "endpoint": endpoint.as_str(), "payload": payload });
        let response = self
            .agent
            .post(format!("{}/v1/infer", self.url))
            .send_json(&request)
            .map_err(|e| classify_ureq_error(e))?;
        let reply: Value = response.into_body().read_json().map_err(|e| {
            ClientError::BackendMalformedReply { endpoint, reason: format!("unparseable reply: {e}") }
        })?;
        match reply.get("body") {
            Some(body) => Ok(body.clone()),
            None => Err(ClientError::BackendMalformedReply {
                endpoint,
                reason: "reply missing \"body\" field".into(),
            }),
        }
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }
}

fn classify_ureq_error(e: ureq::Error) -> ClientError {
    match e {
        ureq::Error::StatusCode(status) => ClientError::BackendHttp { status },
        ureq::Error::Timeout(reason) => {
            ClientError::BackendTimeout { reason: reason.to_string() }
        }
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
            ClientError::BackendTimeout { reason: io.to_string() }
        }
        other => ClientError::BackendUnreachable { reason: other.to_string() },
    }
}

/// The client every stage talks to: schema validation, transcript cache,
/// backend dispatch, and token accounting, in that order.
///
/// `invoke` is safe under concurrent callers: the tally sits behind a mutex
/// and cache writes go through a temp-file rename.
pub struct ModelClient {
    backend: Option<Box<dyn Backend>>,
    cache_dir: Option<PathBuf>,
    tally: Mutex<TokenUsage>,
}

impl ModelClient {
    pub fn new(backend: Option<Box<dyn Backend>>, cache_dir: Option<PathBuf>) -> Self {
        ModelClient { backend, cache_dir, tally: Mutex::new(TokenUsage::default()) }
    }

    /// A mock-backed client with no cache — the offline default.
    pub fn mock() -> Self {
        Self::new(Some(Box::new(MockBackend::new())), None)
    }

    /// A client with no backend at all: answers come from the cache or not
    /// at all ([`ClientError::NoBackend`]).
    pub fn cache_only(cache_dir: PathBuf) -> Self {
        Self::new(None, Some(cache_dir))
    }

    /// Configure from the environment: `XPLORE_MODEL_URL` set means a remote
    /// backend (default timeout), unset means the mock; `XPLORE_CACHE_DIR`
    /// switches the transcript cache on.
    pub fn from_env() -> Self {
        let backend: Box<dyn Backend> = match std::env::var(ENV_MODEL_URL) {
            Ok(url) if !url.is_empty() => Box::new(RemoteBackend::new(url, DEFAULT_TIMEOUT)),
            _ => Box::new(MockBackend::new()),
        };
        let cache_dir = std::env::var(ENV_CACHE_DIR).ok().filter(|s| !s.is_empty()).map(PathBuf::from);
        Self::new(Some(backend), cache_dir)
    }

    /// The kind of the configured backend, if any (the cache layer answers
    /// as [`BackendKind::Cache`] regardless).
    pub fn backend_kind(&self) -> Option<BackendKind> {
        self.backend.as_ref().map(|b| b.kind())
    }

    /// Snapshot of the token tally.
    pub fn token_usage(&self) -> TokenUsage {
        self.tally.lock().expect("tally lock").clone()
    }

    /// Validate, consult the cache, dispatch, validate the reply, cache it.
    ///
    /// Every invoke — cache hit or not — records the payload's token count.
    pub fn invoke(&self, endpoint: Endpoint, payload: Value) -> Result<InferenceResponse, ClientError> {
        validate_request(endpoint, &payload)?;
        self.tally
            .lock()
            .expect("tally lock")
            .record(endpoint, count_tokens(&payload));

        let id = request_id(endpoint, &payload);
        if let Some(dir) = &self.cache_dir {
            let path = cache_path(dir, endpoint, &id);
            if path.is_file() {
                let raw = std::fs::read_to_string(&path)
                    .map_err(|source| ClientError::CacheIo { path: path.clone(), source })?;
                let body: Value = serde_json::from_str(&raw).map_err(|e| {
                    ClientError::BackendMalformedReply {
                        endpoint,
                        reason: format!("cache file {} unparseable: {e}", path.display()),
                    }
                })?;
                validate_response(endpoint, &body)?;
                return Ok(InferenceResponse { body, backend: BackendKind::Cache });
            }
        }

        let backend = self
            .backend
            .as_ref()
            .ok_or(ClientError::NoBackend { request_id: id.clone() })?;
        let body = backend.infer(endpoint, &payload)?;
        validate_response(endpoint, &body)?;

        if let Some(dir) = &self.cache_dir {
            write_cache_entry(dir, endpoint, &id, &body)?;
        }
        Ok(InferenceResponse { body, backend: backend.kind() })
    }
}

/// Where a request's transcript lives under a cache root.
pub fn cache_path(dir: &Path, endpoint: Endpoint, request_id: &str) -> PathBuf {
    dir.join(endpoint.as_str()).join(format!("{request_id}.json"))
}

fn write_cache_entry(
    dir: &Path,
    endpoint: Endpoint,
    id: &str,
    body: &Value,
) -> Result<(), ClientError> {
    let path = cache_path(dir, endpoint, id);
    let parent = path.parent().expect("cache path has a parent");
    let io_err = |source, path: &Path| ClientError::CacheIo { path: path.to_path_buf(), source };
    std::fs::create_dir_all(parent).map_err(|e| io_err(e, parent))?;
    let mut text = serde_json::to_string_pretty(body).expect("json value serializes");
    text.push('\n');
    // Write-then-rename keeps concurrent readers from seeing a torn file.
    let tmp = parent.join(format!(".{id}.tmp"));
    std::fs::write(&tmp, text).map_err(|e| io_err(e, &tmp))?;
    std::fs::rename(&tmp, &path).map_err(|e| io_err(e, &path))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Endpoint schemas
// ---------------------------------------------------------------------------

fn schema_err(endpoint: Endpoint, reason: impl Into<String>) -> ClientError {
    ClientError::SchemaViolation { endpoint, reason: reason.into() }
}

fn reply_err(endpoint: Endpoint, reason: impl Into<String>) -> ClientError {
    ClientError::BackendMalformedReply { endpoint, reason: reason.into() }
}

fn check_screen_ref(v: &Value, what: &str) -> Result<(), String> {
    if !v.is_object() {
        return Err(format!("{what} must be an object"));
    }
    if !v["frame"].is_u64() {
        return Err(format!("{what}.frame must be a non-negative integer"));
    }
    check_vh_lines(&v["vh_lines"], &format!("{what}.vh_lines"))
}

fn check_vh_lines(v: &Value, what: &str) -> Result<(), String> {
    let arr = v.as_array().ok_or(format!("{what} must be an array"))?;
    let lines: Result<Vec<String>, String> = arr
        .iter()
        .map(|l| l.as_str().map(String::from).ok_or(format!("{what} entries must be strings")))
        .collect();
    SimplifiedVh::from_lines(lines?).map_err(|e| format!("{what}: {e}"))?;
    Ok(())
}

/// Structural check of an action object (the typed authority lives in the
/// sequence module; this guards the wire).
fn check_action_shape(v: &Value, what: &str) -> Result<(), String> {
    const KINDS: [&str; 6] = ["tap", "long_tap", "scroll", "text_input", "back", "swipe"];
    let kind = v["kind"].as_str().ok_or(format!("{what}.kind must be a string"))?;
    if !KINDS.contains(&kind) {
        return Err(format!("{what}.kind {kind:?} is not a known action kind"));
    }
    let target = &v["target"];
    let has_target = match target {
        Value::Null => false,
        Value::Object(_) => {
            let id_ok = target["id"].is_string() || target["id"].is_null();
            let bounds_ok = target["bounds"].is_null()
                || serde_json::from_value::<crate::vh::Bounds>(target["bounds"].clone()).is_ok();
            if !id_ok || !bounds_ok {
                return Err(format!("{what}.target has malformed id or bounds"));
            }
            target["id"].is_string() || !target["bounds"].is_null()
        }
        _ => return Err(format!("{what}.target must be an object or null")),
    };
    match kind {
        "tap" | "long_tap" if !has_target => Err(format!("{what}: {kind} requires a target")),
        "back" if has_target => Err(format!("{what}: back carries no target")),
        _ => Ok(()),
    }
}

/// Check a payload against its endpoint's request schema.
pub fn validate_request(endpoint: Endpoint, payload: &Value) -> Result<(), ClientError> {
    let err = |reason: String| schema_err(endpoint, reason);
    if !payload.is_object() {
        return Err(err("payload must be an object".into()));
    }
    match endpoint {
        Endpoint::VhGenerate => {
            if !payload["frame"].is_u64() {
                return Err(err("frame must be a non-negative integer".into()));
            }
            if !payload["source_id"].is_string() {
                return Err(err("source_id must be a string".into()));
            }
        }
        Endpoint::ActionGenerate => {
            check_screen_ref(&payload["pre"], "pre").map_err(err)?;
            check_screen_ref(&payload["post"], "post").map_err(err)?;
        }
        Endpoint::ClusterDecide => {
            check_screen_ref(&payload["screen"], "screen").map_err(err)?;
            let nodes = payload["nodes"].as_array().ok_or_else(|| err("nodes must be an array".into()))?;
            for (i, node) in nodes.iter().enumerate() {
                if !node["id"].is_u64() || !node["description"].is_string() {
                    return Err(err(format!("nodes[{i}] must have integer id and string description")));
                }
            }
        }
        Endpoint::QaAnswer => {
            let ctx = payload["context"].as_array().ok_or_else(|| err("context must be an array".into()))?;
            if ctx.iter().any(|l| !l.is_string()) {
                return Err(err("context entries must be strings".into()));
            }
            if !payload["question"].is_string() {
                return Err(err("question must be a string".into()));
            }
            let options = payload["options"].as_array().ok_or_else(|| err("options must be an array".into()))?;
            if options.len() != 5 || options.iter().any(|o| !o.is_string()) {
                return Err(err("options must be exactly five strings".into()));
            }
        }
    }
    Ok(())
}

/// Check a reply body against its endpoint's response schema.
pub fn validate_response(endpoint: Endpoint, body: &Value) -> Result<(), ClientError> {
    let err = |reason: String| reply_err(endpoint, reason);
    if !body.is_object() {
        return Err(err("reply must be an object".into()));
    }
    match endpoint {
        Endpoint::VhGenerate => check_vh_lines(&body["vh_lines"], "vh_lines").map_err(err)?,
        Endpoint::ActionGenerate => check_action_shape(&body["action"], "action").map_err(err)?,
        Endpoint::ClusterDecide => {
            let has_match = !body["match"].is_null();
            let has_new = !body["new"].is_null();
            match (has_match, has_new) {
                (true, false) => {
                    if !body["match"].is_u64() {
                        return Err(err("match must be a non-negative integer".into()));
                    }
                }
                (false, true) => {
                    if !body["new"].is_string() {
                        return Err(err("new must be a string description".into()));
                    }
                }
                _ => return Err(err("reply must carry exactly one of \"match\" or \"new\"".into())),
            }
        }
        Endpoint::QaAnswer => {
            if !body["reply"].is_string() {
                return Err(err("reply must be a string".into()));
            }
        }
    }
    Ok(())
}
