//! Downstream GUI-understanding tasks: generation, answering, and scoring.
//!
//! Five five-way multiple-choice task families probe what a transition
//! graph knows: `overview` (what is this app), `page_analysis` (what is
//! this screen for), `usage` (how do I reach a screen), `action_recall`
//! (what happened at step k), and `seq_verify` (which operation order is
//! possible). [`generate_qa_from_graph`] manufactures items with seeded,
//! reproducible distractors and a known `gt_index`, so a model's answers
//! can be graded exactly; [`answer_item`] sends graph context plus lettered
//! options through the model client and parses the reply; [`score_mc`]
//! reports per-task and macro accuracy, counting abstentions as wrong.
//!
//! A separate Mind2Web-style ruler, [`score_automation`], grades predicted
//! UI actions against references: element accuracy (resource-id equality,
//! else bounding-box IoU above a configurable threshold), operation
//! accuracy (action kind), and step success rate (both at once).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::graph::{
    extract_triples, reachability, usage_path, GuiTransitionGraph, PromptContext,
};
use crate::inference::{ClientError, Endpoint, ModelClient};
use crate::sequence::Action;
use crate::simulate::AppModel;
use crate::vh::Bounds;

/// Errors raised by the task layer.
#[derive(Debug, Error)]
pub enum TaskError {
    /// A QA line failed structural checks beyond the counted ones.
    #[error("malformed qa item on line {line}: {reason}")]
    MalformedQa { line: usize, reason: String },

    /// An item does not have exactly five options.
    #[error("qa item on line {line} has {count} options; exactly 5 required")]
    BadOptionCount { line: usize, count: usize },

    /// An item's ground-truth index is out of range.
    #[error("qa item on line {line} has gt index {gt}; must be 0..=4")]
    BadGtIndex { line: usize, gt: usize },

    /// The graph cannot support the requested items.
    #[error("cannot generate {task} items: {reason}")]
    InsufficientMaterial { task: TaskKind, reason: String },

    /// The model client failed while answering.
    #[error("model client unavailable: {source}")]
    ClientUnavailable {
        #[source]
        source: ClientError,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The five task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Overview,
    PageAnalysis,
    Usage,
    ActionRecall,
    SeqVerify,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Overview,
        TaskKind::PageAnalysis,
        TaskKind::Usage,
        TaskKind::ActionRecall,
        TaskKind::SeqVerify,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Overview => "overview",
            TaskKind::PageAnalysis => "page_analysis",
            TaskKind::Usage => "usage",
            TaskKind::ActionRecall => "action_recall",
            TaskKind::SeqVerify => "seq_verify",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One five-way multiple-choice item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub task: TaskKind,
    pub question: String,
    /// Exactly five pairwise-distinct options.
    pub options: Vec<String>,
    /// Index of the correct option, 0..=4.
    #[serde(rename = "gt")]
    pub gt_index: usize,
    pub source_id: String,
    /// Task-specific payload (e.g. the edge indices behind a `seq_verify`
    /// item) for downstream verification.
    pub meta: Value,
}

impl QaItem {
    /// Structural validity: five distinct options, gt index in range.
    fn check(&self) -> Result<(), ItemFlaw> {
        if self.options.len() != 5 {
            return Err(ItemFlaw::OptionCount(self.options.len()));
        }
        if self.gt_index > 4 {
            return Err(ItemFlaw::GtIndex(self.gt_index));
        }
        for (i, a) in self.options.iter().enumerate() {
            if self.options[i + 1..].contains(a) {
                return Err(ItemFlaw::Duplicate(a.clone()));
            }
        }
        Ok(())
    }
}

enum ItemFlaw {
    OptionCount(usize),
    GtIndex(usize),
    Duplicate(String),
}

fn flaw_to_error(flaw: ItemFlaw, line: usize) -> TaskError {
    match flaw {
        ItemFlaw::OptionCount(count) => TaskError::BadOptionCount { line, count },
        ItemFlaw::GtIndex(gt) => TaskError::BadGtIndex { line, gt },
        ItemFlaw::Duplicate(option) => TaskError::MalformedQa {
            line,
            reason: format!("duplicate option {option:?}"),
        },
    }
}

/// Load and validate a `qa.jsonl` file (one item per line, blanks skipped).
pub fn load_qa(path: &Path) -> Result<Vec<QaItem>, TaskError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| TaskError::Io { path: path.into(), source })?;
    let mut items = Vec::new();
    for (index, text) in raw.lines().enumerate() {
        let line = index + 1;
        if text.trim().is_empty() {
            continue;
        }
        let item: QaItem = serde_json::from_str(text)
            .map_err(|e| TaskError::MalformedQa { line, reason: e.to_string() })?;
        item.check().map_err(|flaw| flaw_to_error(flaw, line))?;
        items.push(item);
    }
    Ok(items)
}

/// Write a `qa.jsonl` file.
pub fn save_qa(path: &Path, items: &[QaItem]) -> Result<(), TaskError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("qa items serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| TaskError::Io { path: path.into(), source })
}

/// A graded answer: the item plus the chosen option (`None` = abstain).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(flatten)]
    pub item: QaItem,
    pub chosen: Option<usize>,
}

/// Load a `predictions.jsonl` file.
pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>, TaskError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| TaskError::Io { path: path.into(), source })?;
    let mut records = Vec::new();
    for (index, text) in raw.lines().enumerate() {
        let line = index + 1;
        if text.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(text)
            .map_err(|e| TaskError::MalformedQa { line, reason: e.to_string() })?;
        record.item.check().map_err(|flaw| flaw_to_error(flaw, line))?;
        if let Some(chosen) = record.chosen {
            if chosen > 4 {
                return Err(TaskError::MalformedQa {
                    line,
                    reason: format!("chosen index {chosen} out of range"),
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Write a `predictions.jsonl` file.
pub fn save_predictions(path: &Path, records: &[PredictionRecord]) -> Result<(), TaskError> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("predictions serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| TaskError::Io { path: path.into(), source })
}

// -- answering ---------------------------------------------------------------

/// The `qa_answer` request for an item: graph context lines, the question,
/// and the five options lettered A–E. Public so tests can precompute the
/// request id of every item and key oracle fixtures by it.
pub fn qa_request_payload(ctx: &PromptContext, item: &QaItem) -> Value {
    let options: Vec<String> = item
        .options
        .iter()
        .enumerate()
        .map(|(i, option)| format!("{}. {option}", char::from(b'A' + i as u8)))
        .collect();
    json!({
        "context": ctx.lines(),
        "question": item.question,
        "options": options,
    })
}

/// Extract a choice from a model reply: the first standalone letter A–E
/// (uppercase, not embedded in a longer word) wins; anything else abstains.
pub fn parse_choice(reply: &str) -> Option<usize> {
    let chars: Vec<char> = reply.chars().collect();
    for (i, &ch) in chars.iter().enumerate() {
        if !('A'..='E').contains(&ch) {
            continue;
        }
        let detached_before = i == 0 || !chars[i - 1].is_alphanumeric();
        let detached_after = i + 1 == chars.len() || !chars[i + 1].is_alphanumeric();
        if detached_before && detached_after {
            return Some((ch as u8 - b'A') as usize);
        }
    }
    None
}

/// Ask the model one item and parse its reply.
pub fn answer_item(
    client: &ModelClient,
    ctx: &PromptContext,
    item: &QaItem,
) -> Result<PredictionRecord, TaskError> {
    let payload = qa_request_payload(ctx, item);
    let response = client
        .invoke(Endpoint::QaAnswer, payload)
        .map_err(|source| TaskError::ClientUnavailable { source })?;
    let reply = response.body["reply"].as_str().unwrap_or_default();
    Ok(PredictionRecord { item: item.clone(), chosen: parse_choice(reply) })
}

/// Answer a batch with bounded parallelism; records come back in item order.
pub fn answer_items(
    client: &ModelClient,
    ctx: &PromptContext,
    items: &[QaItem],
    parallelism: usize,
) -> Result<Vec<PredictionRecord>, TaskError> {
    crate::sequence::run_jobs(items, parallelism, |item| answer_item(client, ctx, item))
}

// -- scoring ------------------------------------------------------------------

/// Accuracy of one task family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// The metrics report: per-task scores plus their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub per_task: BTreeMap<TaskKind, TaskScore>,
    pub macro_accuracy: f64,
}

/// Grade multiple-choice predictions. Abstentions count as incorrect; the
/// macro accuracy averages over the tasks present (0.0 when empty).
pub fn score_mc(predictions: &[PredictionRecord]) -> TaskMetrics {
    let mut per_task: BTreeMap<TaskKind, TaskScore> = BTreeMap::new();
    for record in predictions {
        let score = per_task
            .entry(record.item.task)
            .or_insert(TaskScore { correct: 0, total: 0, accuracy: 0.0 });
        score.total += 1;
        if record.chosen == Some(record.item.gt_index) {
            score.correct += 1;
        }
    }
    for score in per_task.values_mut() {
        score.accuracy = score.correct as f64 / score.total as f64;
    }
    let macro_accuracy = if per_task.is_empty() {
        0.0
    } else {
        per_task.values().map(|s| s.accuracy).sum::<f64>() / per_task.len() as f64
    };
    TaskMetrics { per_task, macro_accuracy }
}

/// Serialize a metrics report (pretty, trailing newline).
pub fn metrics_to_json(metrics: &TaskMetrics) -> String {
    let mut text = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    text.push('\n');
    text
}

/// Write `metrics.json`.
pub fn write_metrics(path: &Path, metrics: &TaskMetrics) -> Result<(), TaskError> {
    std::fs::write(path, metrics_to_json(metrics))
        .map_err(|source| TaskError::Io { path: path.into(), source })
}

// -- automation scoring --------------------------------------------------------

/// Element-match rule knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Minimum bounding-box IoU for an element match when resource ids
    /// cannot decide.
    pub iou_threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { iou_threshold: 0.5 }
    }
}

/// One step of an automation episode: what the model predicted (possibly
/// nothing) against what actually had to happen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutomationStep {
    pub predicted: Option<Action>,
    pub reference: Action,
}

/// Mind2Web-style automation metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutomationMetrics {
    /// Fraction of steps whose predicted element matches the reference.
    pub ele_acc: f64,
    /// Fraction of steps whose operation kind matches.
    pub op_acc: f64,
    /// Fraction of steps where both match.
    pub step_sr: f64,
}

/// Intersection-over-union of two boxes (0.0 when the union is empty).
pub fn iou(a: &Bounds, b: &Bounds) -> f64 {
    let intersection = a.intersection_area(b);
    let union = a.area() + b.area() - intersection;
    if union <= 0 {
        return 0.0;
    }
    intersection as f64 / union as f64
}

fn elements_match(predicted: &Action, reference: &Action, cfg: &MatchConfig) -> bool {
    match (&predicted.target, &reference.target) {
        (None, None) => true,
        (Some(p), Some(r)) => {
            let by_id = match (&p.id, &r.id) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            };
            let by_box = match (&p.bounds, &r.bounds) {
                (Some(a), Some(b)) => iou(a, b) >= cfg.iou_threshold,
                _ => false,
            };
            by_id || by_box
        }
        _ => false,
    }
}

/// Grade automation steps with the default match rule.
pub fn score_automation(steps: &[AutomationStep]) -> AutomationMetrics {
    score_automation_with(steps, &MatchConfig::default())
}

/// Grade automation steps: a step with no prediction misses everything.
pub fn score_automation_with(steps: &[AutomationStep], cfg: &MatchConfig) -> AutomationMetrics {
    if steps.is_empty() {
        return AutomationMetrics { ele_acc: 0.0, op_acc: 0.0, step_sr: 0.0 };
    }
    let (mut ele, mut op, mut both) = (0usize, 0usize, 0usize);
    for step in steps {
        let Some(predicted) = &step.predicted else { continue };
        let e = elements_match(predicted, &step.reference, cfg);
        let o = predicted.kind == step.reference.kind;
        ele += e as usize;
        op += o as usize;
        both += (e && o) as usize;
    }
    let n = steps.len() as f64;
    AutomationMetrics {
        ele_acc: ele as f64 / n,
        op_acc: op as f64 / n,
        step_sr: both as f64 / n,
    }
}

// -- generation -----------------------------------------------------------------

/// How many items to generate per task family (0 skips a family).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QaCounts {
    pub overview: usize,
    pub page_analysis: usize,
    pub usage: usize,
    pub action_recall: usize,
    pub seq_verify: usize,
}

impl QaCounts {
    /// The same count for every family.
    pub fn uniform(n: usize) -> Self {
        QaCounts {
            overview: n,
            page_analysis: n,
            usage: n,
            action_recall: n,
            seq_verify: n,
        }
    }

    pub fn total(&self) -> usize {
        self.overview + self.page_analysis + self.usage + self.action_recall + self.seq_verify
    }
}

/// Dedup candidate distractors against the answer, top up from a filler
/// stream, and slot the answer at a seeded position. Returns the five
/// options and the ground-truth index.
fn assemble_options(
    rng: &mut ChaCha8Rng,
    answer: String,
    candidates: Vec<String>,
    filler: impl Fn(usize) -> String,
) -> (Vec<String>, usize) {
    let mut options: Vec<String> = Vec::with_capacity(5);
    for candidate in candidates {
        if candidate != answer && !options.contains(&candidate) {
            options.push(candidate);
            if options.len() == 4 {
                break;
            }
        }
    }
    let mut k = 0;
    while options.len() < 4 {
        let fill = filler(k);
        k += 1;
        if fill != answer && !options.contains(&fill) {
            options.push(fill);
        }
    }
    let gt_index = rng.gen_range(0..5);
    options.insert(gt_index, answer);
    (options, gt_index)
}

/// A human-readable, globally unique name for an edge.
fn edge_phrase(g: &GuiTransitionGraph, edge: usize) -> String {
    let e = &g.edges[edge];
    format!("{} (node {} to node {})", e.action.label(), e.src, e.dst)
}

fn node_label(g: &GuiTransitionGraph, node: usize) -> String {
    let description = &g.nodes[node].description;
    if description.is_empty() {
        format!("screen node {node}")
    } else {
        description.clone()
    }
}

/// Generate QA items from a graph and the app model it was mined from.
/// Items are emitted family by family in [`TaskKind::ALL`] order and are a
/// pure function of `(g, model, counts, seed, source_id)`.
pub fn generate_qa_from_graph(
    g: &GuiTransitionGraph,
    model: &AppModel,
    counts: &QaCounts,
    seed: u64,
    source_id: &str,
) -> Result<Vec<QaItem>, TaskError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(counts.total());
    for _ in 0..counts.overview {
        items.push(gen_overview(g, model, &mut rng, source_id));
    }
    for _ in 0..counts.page_analysis {
        items.push(gen_page_analysis(g, model, &mut rng, source_id));
    }
    if counts.usage > 0 {
        let reachable = reachable_targets(g);
        if reachable.is_empty() {
            return Err(TaskError::InsufficientMaterial {
                task: TaskKind::Usage,
                reason: "no screen other than home is reachable".into(),
            });
        }
        for _ in 0..counts.usage {
            items.push(gen_usage(g, &reachable, &mut rng, source_id));
        }
    }
    if counts.action_recall > 0 {
        if g.edges.is_empty() {
            return Err(TaskError::InsufficientMaterial {
                task: TaskKind::ActionRecall,
                reason: "the graph has no transitions".into(),
            });
        }
        for _ in 0..counts.action_recall {
            items.push(gen_action_recall(g, &mut rng, source_id));
        }
    }
    if counts.seq_verify > 0 {
        let triples = extract_triples(g, counts.seq_verify * 16 + 64);
        if triples.is_empty() {
            return Err(TaskError::InsufficientMaterial {
                task: TaskKind::SeqVerify,
                reason: "no strict precedence triples exist".into(),
            });
        }
        for _ in 0..counts.seq_verify {
            items.push(gen_seq_verify(g, &triples, &mut rng, source_id));
        }
    }
    debug_assert!(items.iter().all(|i| i.check().is_ok()));
    Ok(items)
}

fn gen_overview(
    g: &GuiTransitionGraph,
    model: &AppModel,
    rng: &mut ChaCha8Rng,
    source_id: &str,
) -> QaItem {
    let summary = |screens: usize, transitions: usize, home: &str| {
        format!(
            "An app with {screens} screens and {transitions} transitions; its home screen is: {home}"
        )
    };
    let home_desc = node_label(g, g.home);
    let answer = summary(g.node_count(), g.edge_count(), &home_desc);

    let mut candidates = Vec::new();
    let dn = rng.gen_range(1..=3);
    let de = rng.gen_range(1..=3);
    candidates.push(summary(g.node_count() + dn, g.edge_count(), &home_desc));
    candidates.push(summary(g.node_count(), g.edge_count() + de, &home_desc));
    candidates.push(summary(g.node_count() + dn, g.edge_count() + de, &home_desc));
    let mut other_descs: Vec<String> = model
        .screens
        .iter()
        .map(|s| s.description.clone())
        .filter(|d| *d != home_desc)
        .collect();
    other_descs.shuffle(rng);
    if let Some(desc) = other_descs.first() {
        candidates.push(summary(g.node_count(), g.edge_count(), desc));
    }
    let (options, gt_index) = assemble_options(rng, answer, candidates, |k| {
        summary(g.node_count() + k + 4, g.edge_count() + k + 4, &home_desc)
    });
    QaItem {
        task: TaskKind::Overview,
        question: "Which of the following best describes this app?".into(),
        options,
        gt_index,
        source_id: source_id.into(),
        meta: json!({}),
    }
}

fn gen_page_analysis(
    g: &GuiTransitionGraph,
    model: &AppModel,
    rng: &mut ChaCha8Rng,
    source_id: &str,
) -> QaItem {
    let node = rng.gen_range(0..g.node_count());
    let answer = node_label(g, node);
    let mut candidates: Vec<String> = (0..g.node_count())
        .filter(|&n| n != node)
        .map(|n| node_label(g, n))
        .chain(model.screens.iter().map(|s| s.description.clone()))
        .collect();
    candidates.shuffle(rng);
    let (options, gt_index) = assemble_options(rng, answer, candidates, |k| {
        format!("a screen that never appears ({k})")
    });
    QaItem {
        task: TaskKind::PageAnalysis,
        question: format!("What is the function of screen node {node}?"),
        options,
        gt_index,
        source_id: source_id.into(),
        meta: json!({ "node": node }),
    }
}

/// Nodes other than home that a usage question can target.
fn reachable_targets(g: &GuiTransitionGraph) -> Vec<usize> {
    reachability(g)
        .into_iter()
        .find(|set| set.node_id == g.home)
        .map(|set| set.reachable.into_iter().filter(|&n| n != g.home).collect())
        .unwrap_or_default()
}

fn render_action_sequence(labels: &[String]) -> String {
    labels
        .iter()
        .enumerate()
        .map(|(i, label)| format!("{}. {label}", i + 1))
        .collect::<Vec<_>>()
        .join("; ")
}

fn gen_usage(
    g: &GuiTransitionGraph,
    targets: &[usize],
    rng: &mut ChaCha8Rng,
    source_id: &str,
) -> QaItem {
    let target = targets[rng.gen_range(0..targets.len())];
    let path = usage_path(g, target).expect("targets are reachable from home");
    let labels: Vec<String> = path.iter().map(Action::label).collect();
    let answer = render_action_sequence(&labels);

    let all_labels: Vec<String> = g.edges.iter().map(|e| e.action.label()).collect();
    let mut candidates = Vec::new();
    for _ in 0..24 {
        let mut corrupted = labels.clone();
        match rng.gen_range(0..4) {
            0 if corrupted.len() >= 2 => corrupted.reverse(),
            1 if corrupted.len() >= 2 => {
                let i = rng.gen_range(0..corrupted.len());
                let j = rng.gen_range(0..corrupted.len());
                corrupted.swap(i, j);
            }
            2 => {
                let i = rng.gen_range(0..corrupted.len());
                corrupted[i] = all_labels[rng.gen_range(0..all_labels.len())].clone();
            }
            _ => {
                if corrupted.len() >= 2 {
                    corrupted.pop();
                } else {
                    corrupted.push(corrupted[0].clone());
                }
            }
        }
        candidates.push(render_action_sequence(&corrupted));
    }
    let (options, gt_index) = assemble_options(rng, answer, candidates, |k| {
        format!("1. tap phantom_{k}")
    });
    QaItem {
        task: TaskKind::Usage,
        question: format!(
            "Starting from the home screen, which action sequence reaches node {target}?"
        ),
        options,
        gt_index,
        source_id: source_id.into(),
        meta: json!({ "target": target, "path_len": labels.len() }),
    }
}

fn gen_action_recall(g: &GuiTransitionGraph, rng: &mut ChaCha8Rng, source_id: &str) -> QaItem {
    let edge = rng.gen_range(0..g.edges.len());
    let step = g.edges[edge].first_step;
    let answer = g.edges[edge].action.label();
    let mut candidates: Vec<String> = (0..g.edges.len())
        .filter(|&e| e != edge)
        .map(|e| g.edges[e].action.label())
        .collect();
    candidates.shuffle(rng);
    let (options, gt_index) =
        assemble_options(rng, answer, candidates, |k| format!("tap phantom_{k}"));
    QaItem {
        task: TaskKind::ActionRecall,
        question: format!("Which action was performed at exploration step {step}?"),
        options,
        gt_index,
        source_id: source_id.into(),
        meta: json!({ "step": step, "edge": edge }),
    }
}

/// The six orderings of three items; the identity comes first.
const PERMS: [[usize; 3]; 6] =
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn gen_seq_verify(
    g: &GuiTransitionGraph,
    triples: &[crate::graph::PrecedenceTriple],
    rng: &mut ChaCha8Rng,
    source_id: &str,
) -> QaItem {
    let triple = &triples[rng.gen_range(0..triples.len())];
    let edges = [triple.a, triple.b, triple.c];
    let phrase = |perm: &[usize; 3]| {
        format!(
            "first {}; then {}; finally {}",
            edge_phrase(g, edges[perm[0]]),
            edge_phrase(g, edges[perm[1]]),
            edge_phrase(g, edges[perm[2]])
        )
    };

    // Four of the five non-identity permutations, then the true order at a
    // seeded slot. Distinct edges make every permutation a distinct string.
    let mut wrong: Vec<[usize; 3]> = PERMS[1..].to_vec();
    wrong.remove(rng.gen_range(0..wrong.len()));
    wrong.shuffle(rng);
    let gt_index = rng.gen_range(0..5);
    let mut perms: Vec<[usize; 3]> = Vec::with_capacity(5);
    for (slot, w) in wrong.iter().enumerate() {
        if slot == gt_index {
            perms.push(PERMS[0]);
        }
        perms.push(*w);
    }
    if perms.len() < 5 {
        perms.push(PERMS[0]);
    }
    let options: Vec<String> = perms.iter().map(|p| phrase(p)).collect();
    let option_edges: Vec<Vec<usize>> =
        perms.iter().map(|p| p.iter().map(|&i| edges[i]).collect()).collect();

    QaItem {
        task: TaskKind::SeqVerify,
        question: "Which ordering of these operations is actually possible?".into(),
        options,
        gt_index,
        source_id: source_id.into(),
        meta: json!({ "edges": edges, "perms": option_edges }),
    }
}
