//! End-to-end orchestration with resumable, content-addressed artifacts.
//!
//! [`run_pipeline`] drives ingest → keyframes → sequence → cluster → graph
//! → (optional) qa from one [`PipelineConfig`]. Every stage writes its
//! artifact under `<out_dir>/artifacts/` and registers a hash of its inputs
//! in the [`ArtifactStore`] index; on the next run a stage is recomputed
//! iff its input hash changed, its artifact files are missing, or an
//! upstream stage was recomputed this run — otherwise the artifact is
//! reused as-is. Because every writer is deterministic (sorted maps,
//! pretty JSON, trailing newline) two runs with the same seed and a
//! populated response cache produce byte-identical artifact trees.
//!
//! The run report (`report.json`, per-stage status/timing/counts plus token
//! totals) lives *next to* the artifacts directory, not inside it: timings
//! differ between runs and must not break artifact-tree comparisons.
//! Errors carry the stage that raised them and classify as validation or
//! backend failures so callers can map them to exit codes; artifacts
//! written before a failure are retained.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cluster::{
    cluster_model, cluster_rule, read_clusters, screens_of, write_clusters, ClusterAssignment,
    ClusterError, ClusterMethod, RuleClusterConfig,
};
use crate::graph::{
    build_graph, export_dot, prompt_context, read_graph, write_graph, GraphError,
    GuiTransitionGraph,
};
use crate::inference::{
    canonical_json, ClientError, MockBackend, ModelClient, RemoteBackend, TokenUsage,
    DEFAULT_TIMEOUT, ENV_CACHE_DIR, ENV_MODEL_URL,
};
use crate::ingest::{read_manifest_doc, FrameSequence, IngestError};
use crate::keyframe::{
    compute_ydiff, extract_keyframes, segment_actions, ActionSegment, SegmenterConfig,
};
use crate::sequence::{
    build_sequence_with, read_sequence, read_trace, write_sequence, BuildOptions,
    ExplorationSequence, SequenceError, TraceEvent,
};
use crate::simulate::read_app_model;
use crate::tasks::{
    answer_items, generate_qa_from_graph, save_predictions, save_qa, score_mc, write_metrics,
    QaCounts, TaskError,
};

/// Name of the artifact directory under the output directory.
pub const ARTIFACTS_DIR: &str = "artifacts";
/// Name of the store index inside the artifact directory.
pub const INDEX_FILE: &str = "index.json";
/// Stage artifact file names.
pub const KEYFRAMES_FILE: &str = "keyframes.json";
pub const SEQUENCE_FILE: &str = "sequence.json";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const GRAPH_DOT_FILE: &str = "graph.dot";
pub const QA_FILE: &str = "qa.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
/// The run report, written next to (not inside) the artifact directory.
pub const REPORT_FILE: &str = "report.json";

/// Did a failing stage's inputs break, or its backend?
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Validation,
    Backend,
}

/// Errors raised by the orchestration layer.
#[derive(Debug, Error)]
pub enum PipelineError {
    /// The configuration itself is unusable.
    #[error("invalid configuration: {reason}")]
    Config { reason: String },

    /// A stage failed; `kind` separates bad inputs from backend trouble.
    #[error("{stage} stage failed: {message}")]
    Stage {
        stage: &'static str,
        kind: FailureKind,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit code: 1 for validation/config/io, 2 for backend failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Stage { kind: FailureKind::Backend, .. } => 2,
            _ => 1,
        }
    }
}

fn stage_err(
    stage: &'static str,
    kind: FailureKind,
    err: impl std::fmt::Display,
) -> PipelineError {
    PipelineError::Stage { stage, kind, message: err.to_string() }
}

fn client_failure(e: &ClientError) -> FailureKind {
    match e {
        ClientError::SchemaViolation { .. } | ClientError::CacheIo { .. } => {
            FailureKind::Validation
        }
        _ => FailureKind::Backend,
    }
}

fn sequence_failure(e: &SequenceError) -> FailureKind {
    match e {
        SequenceError::ClientUnavailable { source } => client_failure(source),
        _ => FailureKind::Validation,
    }
}

fn cluster_failure(e: &ClusterError) -> FailureKind {
    match e {
        ClusterError::ClientUnavailable { source } => client_failure(source),
        _ => FailureKind::Validation,
    }
}

fn task_failure(e: &TaskError) -> FailureKind {
    match e {
        TaskError::ClientUnavailable { source } => client_failure(source),
        _ => FailureKind::Validation,
    }
}

// -- configuration -----------------------------------------------------------

fn default_prompt_budget() -> usize {
    600
}

fn default_parallelism() -> usize {
    4
}

/// Segmenter thresholds as plain config fields (validated into a
/// [`SegmenterConfig`] at run time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmenterSettings {
    pub theta_high: f64,
    pub theta_low: f64,
    pub min_static: usize,
}

impl Default for SegmenterSettings {
    fn default() -> Self {
        let cfg = SegmenterConfig::default();
        SegmenterSettings {
            theta_high: cfg.theta_high(),
            theta_low: cfg.theta_low(),
            min_static: cfg.min_static(),
        }
    }
}

/// Clustering knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSettings {
    pub method: ClusterMethod,
    pub tau_vh: f64,
    pub tau_img: f64,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        let cfg = RuleClusterConfig::default();
        ClusterSettings { method: ClusterMethod::Rule, tau_vh: cfg.tau_vh, tau_img: cfg.tau_img }
    }
}

/// How to reach the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    /// Resolve from `XPLORE_MODEL_URL` / `XPLORE_CACHE_DIR` (unset = mock).
    #[default]
    Env,
    Mock,
    Remote,
    Cache,
}

/// Backend selection plus its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSettings {
    #[serde(default)]
    pub kind: BackendChoice,
    #[serde(default)]
    pub model_url: Option<String>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl BackendSettings {
    fn cache_dir(&self) -> Option<PathBuf> {
        self.cache_dir
            .clone()
            .or_else(|| std::env::var(ENV_CACHE_DIR).ok().filter(|v| !v.is_empty()).map(Into::into))
    }

    fn remote_url(&self) -> Option<String> {
        self.model_url
            .clone()
            .or_else(|| std::env::var(ENV_MODEL_URL).ok().filter(|v| !v.is_empty()))
    }

    /// Build the client and a stable identity string for staleness hashes.
    pub fn build_client(&self) -> Result<(ModelClient, String), PipelineError> {
        match self.kind {
            BackendChoice::Env => {
                let id = match self.remote_url() {
                    Some(url) => format!("remote:{url}"),
                    None => "mock".to_string(),
                };
                Ok((ModelClient::from_env(), id))
            }
            BackendChoice::Mock => Ok((
                ModelClient::new(Some(Box::new(MockBackend::new())), self.cache_dir()),
                "mock".to_string(),
            )),
            BackendChoice::Remote => {
                let url = self.remote_url().ok_or_else(|| PipelineError::Config {
                    reason: "remote backend requires model_url (or XPLORE_MODEL_URL)".into(),
                })?;
                let backend = RemoteBackend::new(url.clone(), DEFAULT_TIMEOUT);
                Ok((
                    ModelClient::new(Some(Box::new(backend)), self.cache_dir()),
                    format!("remote:{url}"),
                ))
            }
            BackendChoice::Cache => {
                let dir = self.cache_dir().ok_or_else(|| PipelineError::Config {
                    reason: "cache backend requires cache_dir (or XPLORE_CACHE_DIR)".into(),
                })?;
                Ok((ModelClient::cache_only(dir), "cache".to_string()))
            }
        }
    }
}

/// The QA stage: which app model grounds the items and how many per family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaSettings {
    pub app_model: PathBuf,
    #[serde(flatten)]
    pub counts: QaCounts,
}

/// Everything one pipeline run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// The recording's `manifest.json`.
    pub manifest: PathBuf,
    /// Optional ground-truth `trace.jsonl`.
    #[serde(default)]
    pub trace: Option<PathBuf>,
    /// Where artifacts and the report go.
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Whitespace-token budget for graph prompt context.
    #[serde(default = "default_prompt_budget")]
    pub prompt_budget: usize,
    /// Bounded fan-out for model calls.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub segmenter: SegmenterSettings,
    #[serde(default)]
    pub cluster: ClusterSettings,
    #[serde(default)]
    pub backend: BackendSettings,
    #[serde(default)]
    pub qa: Option<QaSettings>,
}

impl PipelineConfig {
    /// A config for `manifest` writing under `out_dir`, defaults elsewhere.
    pub fn new(manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            manifest: manifest.into(),
            trace: None,
            out_dir: out_dir.into(),
            seed: 0,
            prompt_budget: default_prompt_budget(),
            parallelism: default_parallelism(),
            segmenter: SegmenterSettings::default(),
            cluster: ClusterSettings::default(),
            backend: BackendSettings::default(),
            qa: None,
        }
    }

    /// Check every range invariant that can be checked without touching
    /// the filesystem.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.segmenter_config()?;
        self.rule_config().validate().map_err(|e| PipelineError::Config {
            reason: e.to_string(),
        })?;
        if self.prompt_budget == 0 {
            return Err(PipelineError::Config { reason: "prompt_budget must be ≥ 1".into() });
        }
        if self.parallelism == 0 {
            return Err(PipelineError::Config { reason: "parallelism must be ≥ 1".into() });
        }
        Ok(())
    }

    pub fn segmenter_config(&self) -> Result<SegmenterConfig, PipelineError> {
        SegmenterConfig::new(
            self.segmenter.theta_high,
            self.segmenter.theta_low,
            self.segmenter.min_static,
        )
        .map_err(|e| PipelineError::Config { reason: e.to_string() })
    }

    pub fn rule_config(&self) -> RuleClusterConfig {
        RuleClusterConfig { tau_vh: self.cluster.tau_vh, tau_img: self.cluster.tau_img }
    }
}

/// Parse a TOML pipeline config.
pub fn load_config(path: &Path) -> Result<PipelineConfig, PipelineError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| PipelineError::Io { path: path.into(), source })?;
    let cfg: PipelineConfig =
        toml::from_str(&raw).map_err(|e| PipelineError::Config { reason: e.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

// -- hashing -------------------------------------------------------------------

fn hash_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Content hash of a file.
pub fn file_hash(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path)
        .map_err(|source| PipelineError::Io { path: path.into(), source })?;
    Ok(hash_bytes(&bytes))
}

fn hash_value(value: &Value) -> String {
    hash_bytes(canonical_json(value).as_bytes())
}

// -- artifact store --------------------------------------------------------------

/// One stage's registration: the hash of its inputs when it last ran, and
/// the artifact files it produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub inputs_hash: String,
    pub files: Vec<String>,
}

/// Content-addressed artifact index over `<out_dir>/artifacts/`.
///
/// Staleness rule: a stage may be reused iff its recorded input hash equals
/// the current one and all its files still exist. [`run_pipeline`] adds the
/// cascade: a stage whose upstream was recomputed is recomputed too, even
/// when the recomputed upstream artifact came out byte-identical.
#[derive(Debug)]
pub struct ArtifactStore {
    root: PathBuf,
    index: BTreeMap<String, StageEntry>,
}

impl ArtifactStore {
    /// Open (creating the directory if needed) and load the index. An
    /// unreadable index is treated as empty: everything recomputes.
    pub fn open(root: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(root)
            .map_err(|source| PipelineError::Io { path: root.into(), source })?;
        let index_path = root.join(INDEX_FILE);
        let index = if index_path.is_file() {
            let raw = std::fs::read_to_string(&index_path)
                .map_err(|source| PipelineError::Io { path: index_path.clone(), source })?;
            match serde_json::from_str(&raw) {
                Ok(index) => index,
                Err(e) => {
                    log::warn!("ignoring corrupt artifact index {}: {e}", index_path.display());
                    BTreeMap::new()
                }
            }
        } else {
            BTreeMap::new()
        };
        Ok(ArtifactStore { root: root.to_path_buf(), index })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Absolute path of an artifact file.
    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    /// Can this stage be reused for these inputs?
    pub fn is_fresh(&self, stage: &str, inputs_hash: &str) -> bool {
        match self.index.get(stage) {
            Some(entry) => {
                entry.inputs_hash == inputs_hash
                    && entry.files.iter().all(|f| self.path(f).is_file())
            }
            None => false,
        }
    }

    /// Register a stage run.
    pub fn record(&mut self, stage: &str, inputs_hash: String, files: &[&str]) {
        self.index.insert(
            stage.to_string(),
            StageEntry { inputs_hash, files: files.iter().map(|f| f.to_string()).collect() },
        );
    }

    /// Persist the index (deterministic serialization).
    pub fn save(&self) -> Result<(), PipelineError> {
        let mut text =
            serde_json::to_string_pretty(&self.index).expect("index entries serialize");
        text.push('\n');
        let path = self.root.join(INDEX_FILE);
        std::fs::write(&path, text).map_err(|source| PipelineError::Io { path, source })
    }
}

// -- keyframes artifact ------------------------------------------------------------

/// The keyframes stage artifact: segments plus the deduplicated keyframe set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframeArtifact {
    pub source_id: String,
    pub frame_count: usize,
    pub keyframes: Vec<usize>,
    pub segments: Vec<ActionSegment>,
}

/// Write a `keyframes.json`.
pub fn write_keyframes(path: &Path, artifact: &KeyframeArtifact) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(artifact).expect("keyframe artifacts serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| PipelineError::Io { path: path.into(), source })
}

/// Read a `keyframes.json`.
pub fn read_keyframes(path: &Path) -> Result<KeyframeArtifact, PipelineError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| PipelineError::Io { path: path.into(), source })?;
    serde_json::from_str(&raw).map_err(|e| {
        stage_err("keyframes", FailureKind::Validation, format!("malformed artifact: {e}"))
    })
}

// -- run report ---------------------------------------------------------------------

/// Did a stage recompute or reuse its artifact?
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Computed,
    Cached,
}

/// One stage's entry in the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub status: StageStatus,
    pub duration_ms: u64,
    pub counts: BTreeMap<String, Value>,
}

/// The run report: what ran, how long it took, what the model cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub source_id: String,
    pub seed: u64,
    pub backend: String,
    pub out_dir: PathBuf,
    pub stages: Vec<StageReport>,
    pub tokens: TokenUsage,
}

impl RunReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

/// Write `report.json` (at the output root, outside `artifacts/`).
pub fn write_report(path: &Path, report: &RunReport) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(report).expect("reports serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| PipelineError::Io { path: path.into(), source })
}

// -- the pipeline ---------------------------------------------------------------------

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn counts(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Lazily loaded shared inputs: decoding frames is deferred until a stage
/// actually needs pixels, so a fully cached run never touches them.
struct Inputs<'a> {
    cfg: &'a PipelineConfig,
    frames: Option<FrameSequence>,
    ingest: Option<StageReport>,
}

impl<'a> Inputs<'a> {
    fn new(cfg: &'a PipelineConfig) -> Self {
        Inputs { cfg, frames: None, ingest: None }
    }

    fn frames(&mut self) -> Result<&FrameSequence, PipelineError> {
        if self.frames.is_none() {
            let start = Instant::now();
            let frames = FrameSequence::load(&self.cfg.manifest)
                .map_err(|e: IngestError| stage_err("ingest", FailureKind::Validation, e))?;
            self.ingest = Some(StageReport {
                stage: "ingest".into(),
                status: StageStatus::Computed,
                duration_ms: elapsed_ms(start),
                counts: counts(&[
                    ("frames", json!(frames.len())),
                    ("width", json!(frames.manifest.width)),
                    ("height", json!(frames.manifest.height)),
                ]),
            });
            self.frames = Some(frames);
        }
        Ok(self.frames.as_ref().expect("frames just loaded"))
    }
}

/// Run the whole pipeline per `cfg`. Stage artifacts land under
/// `<out_dir>/artifacts/`, the report under `<out_dir>/report.json`; the
/// report is also returned. Stage errors name their stage; artifacts
/// already written stay on disk.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|source| PipelineError::Io { path: cfg.out_dir.clone(), source })?;
    let mut store = ArtifactStore::open(&cfg.out_dir.join(ARTIFACTS_DIR))?;
    let (client, backend_id) = cfg.backend.build_client()?;
    let mut inputs = Inputs::new(cfg);
    let mut stages: Vec<StageReport> = Vec::new();

    // -- keyframes ---------------------------------------------------------
    let start = Instant::now();
    let manifest_doc = read_manifest_doc(&cfg.manifest)
        .map_err(|e| stage_err("ingest", FailureKind::Validation, e))?;
    let mut frame_hashes = Vec::with_capacity(manifest_doc.frame_count());
    for path in &manifest_doc.frame_paths {
        frame_hashes.push(file_hash(path)?);
    }
    let kf_hash = hash_value(&json!({
        "manifest": file_hash(&cfg.manifest)?,
        "frames": frame_hashes,
        "segmenter": cfg.segmenter,
    }));
    let kf_ran = !store.is_fresh("keyframes", &kf_hash);
    let keyframe_artifact: KeyframeArtifact = if kf_ran {
        let frames = inputs.frames()?;
        let segmenter = cfg.segmenter_config()?;
        let diffs = compute_ydiff(frames)
            .map_err(|e| stage_err("keyframes", FailureKind::Validation, e))?;
        let segments = segment_actions(&diffs, &segmenter);
        let keyframes = extract_keyframes(frames, &segments)
            .map_err(|e| stage_err("keyframes", FailureKind::Validation, e))?;
        let artifact = KeyframeArtifact {
            source_id: frames.manifest.source_id.clone(),
            frame_count: frames.len(),
            keyframes,
            segments,
        };
        write_keyframes(&store.path(KEYFRAMES_FILE), &artifact)?;
        store.record("keyframes", kf_hash, &[KEYFRAMES_FILE]);
        store.save()?;
        artifact
    } else {
        read_keyframes(&store.path(KEYFRAMES_FILE))?
    };
    stages.push(StageReport {
        stage: "keyframes".into(),
        status: if kf_ran { StageStatus::Computed } else { StageStatus::Cached },
        duration_ms: elapsed_ms(start),
        counts: counts(&[
            ("segments", json!(keyframe_artifact.segments.len())),
            ("keyframes", json!(keyframe_artifact.keyframes.len())),
        ]),
    });
    let source_id = keyframe_artifact.source_id.clone();

    // -- sequence ----------------------------------------------------------
    let start = Instant::now();
    let trace_hash = match &cfg.trace {
        Some(path) => json!(file_hash(path)?),
        None => Value::Null,
    };
    let seq_hash = hash_value(&json!({
        "keyframes": file_hash(&store.path(KEYFRAMES_FILE))?,
        "trace": trace_hash,
        "backend": backend_id,
    }));
    let seq_ran = kf_ran || !store.is_fresh("sequence", &seq_hash);
    let mut sequence: Option<ExplorationSequence> = None;
    let mut seq_counts = BTreeMap::new();
    if seq_ran {
        let trace_events: Option<Vec<TraceEvent>> = match &cfg.trace {
            Some(path) => Some(
                read_trace(path).map_err(|e| stage_err("sequence", sequence_failure(&e), e))?,
            ),
            None => None,
        };
        let frames = inputs.frames()?;
        let options = BuildOptions { parallelism: cfg.parallelism };
        let (seq, build) = build_sequence_with(
            frames,
            &keyframe_artifact.segments,
            trace_events.as_deref(),
            &client,
            &options,
        )
        .map_err(|e| stage_err("sequence", sequence_failure(&e), e))?;
        write_sequence(&store.path(SEQUENCE_FILE), &seq)
            .map_err(|e| stage_err("sequence", FailureKind::Validation, e))?;
        store.record("sequence", seq_hash, &[SEQUENCE_FILE]);
        store.save()?;
        seq_counts = counts(&[
            ("steps", json!(build.steps)),
            ("ground_truth_actions", json!(build.ground_truth_actions)),
            ("generated_actions", json!(build.generated_actions)),
            ("ground_truth_vh", json!(build.ground_truth_vh)),
            ("generated_vh", json!(build.generated_vh)),
            ("dropped_trace_events", json!(build.dropped_trace_events)),
        ]);
        sequence = Some(seq);
    }
    stages.push(StageReport {
        stage: "sequence".into(),
        status: if seq_ran { StageStatus::Computed } else { StageStatus::Cached },
        duration_ms: elapsed_ms(start),
        counts: seq_counts,
    });

    // Rehydrating a cached sequence needs decoded frames, so defer it.
    macro_rules! ensure_sequence {
        () => {{
            if sequence.is_none() {
                let frames = inputs.frames()?;
                sequence = Some(
                    read_sequence(&store.path(SEQUENCE_FILE), frames)
                        .map_err(|e| stage_err("sequence", FailureKind::Validation, e))?,
                );
            }
            sequence.as_ref().expect("sequence just loaded")
        }};
    }

    // -- cluster -----------------------------------------------------------
    let start = Instant::now();
    let mut cluster_inputs = json!({
        "sequence": file_hash(&store.path(SEQUENCE_FILE))?,
        "method": cfg.cluster.method,
    });
    match cfg.cluster.method {
        ClusterMethod::Rule => {
            cluster_inputs["rule"] = json!({
                "tau_vh": cfg.cluster.tau_vh,
                "tau_img": cfg.cluster.tau_img,
            });
        }
        ClusterMethod::Model => {
            cluster_inputs["backend"] = json!(backend_id);
        }
    }
    let cluster_hash = hash_value(&cluster_inputs);
    let cluster_ran = seq_ran || !store.is_fresh("cluster", &cluster_hash);
    let mut clusters: Option<ClusterAssignment> = None;
    let mut cluster_counts = BTreeMap::new();
    if cluster_ran {
        let seq = ensure_sequence!();
        let screens = screens_of(seq);
        let assignment = match cfg.cluster.method {
            ClusterMethod::Rule => cluster_rule(&screens, &cfg.rule_config()),
            ClusterMethod::Model => cluster_model(&screens, &client)
                .map_err(|e| stage_err("cluster", cluster_failure(&e), e))?,
        };
        write_clusters(&store.path(CLUSTERS_FILE), &assignment)
            .map_err(|e| stage_err("cluster", FailureKind::Validation, e))?;
        store.record("cluster", cluster_hash, &[CLUSTERS_FILE]);
        store.save()?;
        cluster_counts = counts(&[
            ("screens", json!(screens.len())),
            ("nodes", json!(assignment.nodes.len())),
        ]);
        clusters = Some(assignment);
    }
    stages.push(StageReport {
        stage: "cluster".into(),
        status: if cluster_ran { StageStatus::Computed } else { StageStatus::Cached },
        duration_ms: elapsed_ms(start),
        counts: cluster_counts,
    });

    // -- graph -------------------------------------------------------------
    let start = Instant::now();
    let graph_hash = hash_value(&json!({
        "sequence": file_hash(&store.path(SEQUENCE_FILE))?,
        "cluster": file_hash(&store.path(CLUSTERS_FILE))?,
    }));
    let graph_ran = cluster_ran || !store.is_fresh("graph", &graph_hash);
    let mut graph: Option<GuiTransitionGraph> = None;
    let mut graph_counts = BTreeMap::new();
    if graph_ran {
        let assignment = match clusters.take() {
            Some(a) => a,
            None => read_clusters(&store.path(CLUSTERS_FILE))
                .map_err(|e| stage_err("cluster", FailureKind::Validation, e))?,
        };
        let seq = ensure_sequence!();
        let g = build_graph(seq, &assignment)
            .map_err(|e: GraphError| stage_err("graph", FailureKind::Validation, e))?;
        write_graph(&store.path(GRAPH_FILE), &g)
            .map_err(|e| stage_err("graph", FailureKind::Validation, e))?;
        std::fs::write(store.path(GRAPH_DOT_FILE), export_dot(&g))
            .map_err(|source| PipelineError::Io { path: store.path(GRAPH_DOT_FILE), source })?;
        store.record("graph", graph_hash, &[GRAPH_FILE, GRAPH_DOT_FILE]);
        store.save()?;
        graph_counts = counts(&[
            ("nodes", json!(g.node_count())),
            ("edges", json!(g.edge_count())),
            ("home", json!(g.home)),
        ]);
        graph = Some(g);
    }
    stages.push(StageReport {
        stage: "graph".into(),
        status: if graph_ran { StageStatus::Computed } else { StageStatus::Cached },
        duration_ms: elapsed_ms(start),
        counts: graph_counts,
    });

    // -- qa (optional) -------------------------------------------------------
    if let Some(qa) = cfg.qa.as_ref().filter(|qa| qa.counts.total() > 0) {
        let start = Instant::now();
        let qa_hash = hash_value(&json!({
            "graph": file_hash(&store.path(GRAPH_FILE))?,
            "app_model": file_hash(&qa.app_model)?,
            "counts": qa.counts,
            "seed": cfg.seed,
            "budget": cfg.prompt_budget,
            "backend": backend_id,
        }));
        let qa_ran = graph_ran || !store.is_fresh("qa", &qa_hash);
        let mut qa_counts = BTreeMap::new();
        if qa_ran {
            let g = match graph.take() {
                Some(g) => g,
                None => read_graph(&store.path(GRAPH_FILE))
                    .map_err(|e| stage_err("graph", FailureKind::Validation, e))?,
            };
            let model = read_app_model(&qa.app_model)
                .map_err(|e| stage_err("qa", FailureKind::Validation, e))?;
            let items =
                generate_qa_from_graph(&g, &model, &qa.counts, cfg.seed, &source_id)
                    .map_err(|e| stage_err("qa", task_failure(&e), e))?;
            let ctx = prompt_context(&g, cfg.prompt_budget)
                .map_err(|e| stage_err("qa", FailureKind::Validation, e))?;
            let predictions = answer_items(&client, &ctx, &items, cfg.parallelism)
                .map_err(|e| stage_err("qa", task_failure(&e), e))?;
            let metrics = score_mc(&predictions);
            save_qa(&store.path(QA_FILE), &items)
                .map_err(|e| stage_err("qa", FailureKind::Validation, e))?;
            save_predictions(&store.path(PREDICTIONS_FILE), &predictions)
                .map_err(|e| stage_err("qa", FailureKind::Validation, e))?;
            write_metrics(&store.path(METRICS_FILE), &metrics)
                .map_err(|e| stage_err("qa", FailureKind::Validation, e))?;
            store.record("qa", qa_hash, &[QA_FILE, PREDICTIONS_FILE, METRICS_FILE]);
            store.save()?;
            let abstained = predictions.iter().filter(|p| p.chosen.is_none()).count();
            qa_counts = counts(&[
                ("items", json!(items.len())),
                ("abstained", json!(abstained)),
                ("macro_accuracy", json!(metrics.macro_accuracy)),
            ]);
        }
        stages.push(StageReport {
            stage: "qa".into(),
            status: if qa_ran { StageStatus::Computed } else { StageStatus::Cached },
            duration_ms: elapsed_ms(start),
            counts: qa_counts,
        });
    }

    // Ingest appears first when frames were decoded; otherwise it is
    // reported as cached with no counts.
    let ingest = inputs.ingest.take().unwrap_or(StageReport {
        stage: "ingest".into(),
        status: StageStatus::Cached,
        duration_ms: 0,
        counts: BTreeMap::new(),
    });
    stages.insert(0, ingest);

    let report = RunReport {
        source_id,
        seed: cfg.seed,
        backend: backend_id,
        out_dir: cfg.out_dir.clone(),
        stages,
        tokens: client.token_usage(),
    };
    write_report(&cfg.out_dir.join(REPORT_FILE), &report)?;
    Ok(report)
}
