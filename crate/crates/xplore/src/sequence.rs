//! From keyframes to a textual exploration sequence.
//!
//! A recording's action segments say *where* things happened; this module
//! says *what* happened. Each segment becomes an [`ExplorationStep`]: the
//! settled screen before the burst, the action that caused it, and the
//! settled screen after. Screens carry their luminance plane and a
//! simplified view hierarchy; both the hierarchy and the action are pulled
//! from a ground-truth trace when one covers the segment (an explorer's log,
//! aligned by the rule *event frame inside the burst*), and requested from
//! the model client otherwise. Every record is labeled with its provenance,
//! so downstream consumers can tell replayed truth from model output.
//!
//! The build never reorders anything: one step per segment, in segment
//! order, regardless of which records came from the trace and which from
//! the client. Generation requests for independent records are issued with
//! bounded parallelism (default [`DEFAULT_PARALLELISM`]); results are keyed
//! by index, so the assembled sequence is identical at any worker count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::inference::{ClientError, Endpoint, ModelClient};
use crate::ingest::{FrameSequence, LumaPlane};
use crate::keyframe::{extract_keyframes, ActionSegment, KeyframeError};
use crate::vh::{simplify, SimplifiedVh, ViewHierarchy};

/// Upper bound on in-flight generation requests during a build.
pub const DEFAULT_PARALLELISM: usize = 4;

/// Errors raised while assembling or (de)serializing a sequence.
#[derive(Debug, Error)]
pub enum SequenceError {
    #[error(transparent)]
    Keyframe(#[from] KeyframeError),

    /// An action violates the taxonomy's rules.
    #[error("invalid action: {reason}")]
    InvalidAction { reason: String },

    /// A generation request was needed and the client failed.
    #[error("model client unavailable: {source}")]
    ClientUnavailable {
        #[source]
        source: ClientError,
    },

    /// A trace file line failed to parse or validate.
    #[error("malformed trace at line {line}: {reason}")]
    MalformedTrace { line: usize, reason: String },

    /// A sequence document failed to parse or validate.
    #[error("malformed sequence document: {reason}")]
    MalformedDoc { reason: String },

    /// A frame index points outside the recording.
    #[error("frame {frame} out of range for a {count}-frame recording")]
    FrameOutOfRange { frame: usize, count: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The six interaction kinds a step can carry.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Tap,
    LongTap,
    Scroll,
    TextInput,
    Back,
    Swipe,
}

impl ActionKind {
    pub const ALL: [ActionKind; 6] = [
        ActionKind::Tap,
        ActionKind::LongTap,
        ActionKind::Scroll,
        ActionKind::TextInput,
        ActionKind::Back,
        ActionKind::Swipe,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::Tap => "tap",
            ActionKind::LongTap => "long_tap",
            ActionKind::Scroll => "scroll",
            ActionKind::TextInput => "text_input",
            ActionKind::Back => "back",
            ActionKind::Swipe => "swipe",
        }
    }
}

impl std::fmt::Display for ActionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What an action acted on: a resource id, bounds, or both.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ElementTarget {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub bounds: Option<crate::vh::Bounds>,
}

impl ElementTarget {
    pub fn by_id(id: impl Into<String>) -> Self {
        ElementTarget { id: Some(id.into()), bounds: None }
    }

    pub fn is_empty(&self) -> bool {
        self.id.is_none() && self.bounds.is_none()
    }
}

/// One user interaction.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Action {
    pub kind: ActionKind,
    #[serde(default)]
    pub target: Option<ElementTarget>,
    #[serde(default)]
    pub params: Option<String>,
}

impl Action {
    /// A tap on an element known by resource id.
    pub fn tap(id: impl Into<String>) -> Self {
        Action { kind: ActionKind::Tap, target: Some(ElementTarget::by_id(id)), params: None }
    }

    /// The system back action (never targeted).
    pub fn back() -> Self {
        Action { kind: ActionKind::Back, target: None, params: None }
    }

    /// Enforce the taxonomy rules: taps need a target, back never has one,
    /// and a present target must actually name something.
    pub fn validate(&self) -> Result<(), SequenceError> {
        let err = |reason: String| Err(SequenceError::InvalidAction { reason });
        if let Some(target) = &self.target {
            if target.is_empty() {
                return err(format!("{} target carries neither id nor bounds", self.kind));
            }
        }
        match self.kind {
            ActionKind::Tap | ActionKind::LongTap if self.target.is_none() => {
                err(format!("{} requires a target", self.kind))
            }
            ActionKind::Back if self.target.is_some() => {
                err("back carries no target".into())
            }
            _ => Ok(()),
        }
    }

    /// A compact human-readable label (graph exports, prompt context):
    /// kind, then the target's id or bounds, then params.
    pub fn label(&self) -> String {
        let mut parts = vec![self.kind.as_str().to_string()];
        if let Some(target) = &self.target {
            if let Some(id) = &target.id {
                parts.push(id.clone());
            } else if let Some(b) = &target.bounds {
                parts.push(format!("[{},{},{},{}]", b.left, b.top, b.right, b.bottom));
            }
        }
        if let Some(params) = &self.params {
            parts.push(params.clone());
        }
        parts.join(" ")
    }
}

/// Where a record came from: replayed from a recording's own logs, or
/// produced by the model client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GroundTruth,
    Generated,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::GroundTruth => "ground_truth",
            Provenance::Generated => "generated",
        }
    }
}

/// A settled screen at one keyframe: pixels plus simplified hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenRecord {
    pub keyframe_index: usize,
    pub luma: Arc<LumaPlane>,
    pub vh: SimplifiedVh,
    pub vh_source: Provenance,
}

/// One action between two settled screens.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationStep {
    pub pre: ScreenRecord,
    pub action: Action,
    pub action_source: Provenance,
    pub post: ScreenRecord,
}

/// The textual exploration sequence: everything the graph stages consume.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationSequence {
    pub source_id: String,
    pub steps: Vec<ExplorationStep>,
}

impl ExplorationSequence {
    /// Check the ordering invariants: within a step the pre screen precedes
    /// the post screen, steps never overlap, and every action is legal.
    pub fn validate(&self) -> Result<(), SequenceError> {
        for (i, step) in self.steps.iter().enumerate() {
            step.action.validate()?;
            if step.pre.keyframe_index >= step.post.keyframe_index {
                return Err(SequenceError::MalformedDoc {
                    reason: format!(
                        "step {i}: pre keyframe {} not before post keyframe {}",
                        step.pre.keyframe_index, step.post.keyframe_index
                    ),
                });
            }
        }
        for pair in self.steps.windows(2) {
            if pair[0].post.keyframe_index > pair[1].pre.keyframe_index {
                return Err(SequenceError::MalformedDoc {
                    reason: format!(
                        "steps overlap: post keyframe {} after next pre keyframe {}",
                        pair[0].post.keyframe_index, pair[1].pre.keyframe_index
                    ),
                });
            }
        }
        Ok(())
    }

    /// The serializable form (screens inlined per step).
    pub fn to_doc(&self) -> SequenceDoc {
        let screen_doc = |s: &ScreenRecord| ScreenRefDoc {
            frame: s.keyframe_index,
            vh_lines: s.vh.lines().to_vec(),
            vh_source: s.vh_source,
        };
        SequenceDoc {
            source_id: self.source_id.clone(),
            steps: self
                .steps
                .iter()
                .map(|step| StepDoc {
                    pre: screen_doc(&step.pre),
                    action: step.action.clone(),
                    action_source: step.action_source,
                    post: screen_doc(&step.post),
                })
                .collect(),
        }
    }

    /// Rehydrate from a document, pulling luminance planes back out of the
    /// recording it was built from.
    pub fn from_doc(doc: &SequenceDoc, frames: &FrameSequence) -> Result<Self, SequenceError> {
        let screen = |s: &ScreenRefDoc| -> Result<ScreenRecord, SequenceError> {
            if s.frame >= frames.len() {
                return Err(SequenceError::FrameOutOfRange { frame: s.frame, count: frames.len() });
            }
            let vh = SimplifiedVh::from_lines(s.vh_lines.clone())
                .map_err(|e| SequenceError::MalformedDoc { reason: e.to_string() })?;
            Ok(ScreenRecord {
                keyframe_index: s.frame,
                luma: frames.plane(s.frame).clone(),
                vh,
                vh_source: s.vh_source,
            })
        };
        let steps = doc
            .steps
            .iter()
            .map(|step| {
                Ok(ExplorationStep {
                    pre: screen(&step.pre)?,
                    action: step.action.clone(),
                    action_source: step.action_source,
                    post: screen(&step.post)?,
                })
            })
            .collect::<Result<Vec<_>, SequenceError>>()?;
        let seq = ExplorationSequence { source_id: doc.source_id.clone(), steps };
        seq.validate()?;
        Ok(seq)
    }
}

/// Wire form of a screen reference inside a sequence document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenRefDoc {
    pub frame: usize,
    pub vh_lines: Vec<String>,
    pub vh_source: Provenance,
}

/// Wire form of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDoc {
    pub pre: ScreenRefDoc,
    pub action: Action,
    pub action_source: Provenance,
    pub post: ScreenRefDoc,
}

/// Wire form of a whole sequence (`sequence.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDoc {
    pub source_id: String,
    pub steps: Vec<StepDoc>,
}

/// Write a sequence as pretty JSON.
pub fn write_sequence(path: &Path, seq: &ExplorationSequence) -> Result<(), SequenceError> {
    let mut text = serde_json::to_string_pretty(&seq.to_doc()).expect("sequence docs serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| SequenceError::Io { path: path.into(), source })
}

/// Read a sequence document and rehydrate it against its recording.
pub fn read_sequence(path: &Path, frames: &FrameSequence) -> Result<ExplorationSequence, SequenceError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| SequenceError::Io { path: path.into(), source })?;
    let doc: SequenceDoc = serde_json::from_str(&raw)
        .map_err(|e| SequenceError::MalformedDoc { reason: e.to_string() })?;
    ExplorationSequence::from_doc(&doc, frames)
}

// ---------------------------------------------------------------------------
// Ground-truth traces
// ---------------------------------------------------------------------------

/// One logged event of an exploration: the frame where the action fired,
/// the action itself, and (optionally) full hierarchies of the settled
/// screens around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub frame: usize,
    pub action: Action,
    #[serde(default)]
    pub pre_vh: Option<ViewHierarchy>,
    #[serde(default)]
    pub post_vh: Option<ViewHierarchy>,
}

/// Read a `trace.jsonl` file: one event per non-blank line, in order.
pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>, SequenceError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| SequenceError::Io { path: path.into(), source })?;
    let mut events = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event: TraceEvent = serde_json::from_str(line)
            .map_err(|e| SequenceError::MalformedTrace { line: i + 1, reason: e.to_string() })?;
        event.action.validate().map_err(|e| SequenceError::MalformedTrace {
            line: i + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Write a `trace.jsonl` file.
pub fn write_trace(path: &Path, events: &[TraceEvent]) -> Result<(), SequenceError> {
    let mut out = String::new();
    for event in events {
        out.push_str(&serde_json::to_string(event).expect("trace events serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| SequenceError::Io { path: path.into(), source })
}

/// Which trace event (by index) covers each segment, plus the events that
/// covered nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// Per segment: the index of the matching trace event, if any.
    pub matches: Vec<Option<usize>>,
    /// Trace events that landed outside every burst, or were surplus inside
    /// one. Dropped (with a warning) by the build.
    pub unmatched_events: Vec<usize>,
}

/// Greedy interval matching: event `e` covers segment `s` iff
/// `e.frame ∈ [s.change_start, s.change_end]`; each event covers at most one
/// segment, first match wins. Both inputs must be in ascending frame order.
pub fn align_trace(segments: &[ActionSegment], events: &[TraceEvent]) -> Alignment {
    let mut matches = vec![None; segments.len()];
    let mut unmatched_events = Vec::new();
    let mut next_event = 0;
    for (si, seg) in segments.iter().enumerate() {
        while next_event < events.len() && events[next_event].frame < seg.change_start {
            unmatched_events.push(next_event);
            next_event += 1;
        }
        if next_event < events.len() && events[next_event].frame <= seg.change_end {
            matches[si] = Some(next_event);
            next_event += 1;
            // Surplus events inside the same burst can never cover a later
            // segment (bursts are disjoint and ordered), so drop them now.
            while next_event < events.len() && events[next_event].frame <= seg.change_end {
                unmatched_events.push(next_event);
                next_event += 1;
            }
        }
    }
    unmatched_events.extend(next_event..events.len());
    Alignment { matches, unmatched_events }
}

/// What a build did: how many records came from where.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceBuild {
    pub steps: usize,
    pub ground_truth_actions: usize,
    pub generated_actions: usize,
    pub ground_truth_vh: usize,
    pub generated_vh: usize,
    /// Trace events that matched no segment (logged and skipped).
    pub dropped_trace_events: usize,
}

/// Build knobs.
#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Maximum concurrent client requests (at least 1).
    pub parallelism: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { parallelism: DEFAULT_PARALLELISM }
    }
}

/// Assemble the exploration sequence for a recording with default options.
pub fn build_sequence(
    frames: &FrameSequence,
    segments: &[ActionSegment],
    gt_trace: Option<&[TraceEvent]>,
    client: &ModelClient,
) -> Result<(ExplorationSequence, SequenceBuild), SequenceError> {
    build_sequence_with(frames, segments, gt_trace, client, &BuildOptions::default())
}

/// Assemble the exploration sequence: one step per segment, ground truth
/// where the trace covers, client generation elsewhere.
pub fn build_sequence_with(
    frames: &FrameSequence,
    segments: &[ActionSegment],
    gt_trace: Option<&[TraceEvent]>,
    client: &ModelClient,
    options: &BuildOptions,
) -> Result<(ExplorationSequence, SequenceBuild), SequenceError> {
    let keyframes = extract_keyframes(frames, segments)?;
    let source_id = frames.manifest.source_id.clone();

    if let Some(events) = gt_trace {
        for event in events {
            if event.frame >= frames.len() {
                return Err(SequenceError::FrameOutOfRange {
                    frame: event.frame,
                    count: frames.len(),
                });
            }
            event.action.validate()?;
        }
    }

    let alignment = gt_trace.map(|events| align_trace(segments, events));
    let mut report = SequenceBuild { steps: segments.len(), ..SequenceBuild::default() };
    if let (Some(events), Some(al)) = (gt_trace, alignment.as_ref()) {
        report.dropped_trace_events = al.unmatched_events.len();
        for &ei in &al.unmatched_events {
            log::warn!(
                "trace event at frame {} matches no action segment; dropped",
                events[ei].frame
            );
        }
    }

    // Resolve every keyframe's hierarchy: ground truth from covering events
    // first (first writer wins on shared keyframes), generation for the rest.
    let mut vh_by_frame: BTreeMap<usize, (SimplifiedVh, Provenance)> = BTreeMap::new();
    if let (Some(events), Some(al)) = (gt_trace, alignment.as_ref()) {
        for (seg, matched) in segments.iter().zip(&al.matches) {
            if let Some(ei) = matched {
                let event = &events[*ei];
                if let Some(vh) = &event.pre_vh {
                    vh_by_frame
                        .entry(seg.pre_keyframe)
                        .or_insert_with(|| (simplify(vh), Provenance::GroundTruth));
                }
                if let Some(vh) = &event.post_vh {
                    vh_by_frame
                        .entry(seg.post_keyframe)
                        .or_insert_with(|| (simplify(vh), Provenance::GroundTruth));
                }
            }
        }
    }
    report.ground_truth_vh = vh_by_frame.len();

    let missing_vh: Vec<usize> =
        keyframes.iter().copied().filter(|kf| !vh_by_frame.contains_key(kf)).collect();
    report.generated_vh = missing_vh.len();
    let generated = run_jobs(&missing_vh, options.parallelism, |&frame| {
        let payload = json!({ "frame": frame, "source_id": source_id });
        let response = client
            .invoke(Endpoint::VhGenerate, payload)
            .map_err(|source| SequenceError::ClientUnavailable { source })?;
        let lines: Vec<String> = response.body["vh_lines"]
            .as_array()
            .expect("reply schema guarantees vh_lines")
            .iter()
            .map(|l| l.as_str().expect("reply schema guarantees strings").to_string())
            .collect();
        let vh = SimplifiedVh::from_lines(lines).expect("reply schema validates lines");
        Ok::<_, SequenceError>((frame, vh))
    })?;
    for (frame, vh) in generated {
        vh_by_frame.insert(frame, (vh, Provenance::Generated));
    }

    let screen = |frame: usize| -> ScreenRecord {
        let (vh, vh_source) = vh_by_frame[&frame].clone();
        ScreenRecord { keyframe_index: frame, luma: frames.plane(frame).clone(), vh, vh_source }
    };

    // Resolve every segment's action, now that screens exist for prompts.
    let mut actions: Vec<Option<(Action, Provenance)>> = vec![None; segments.len()];
    if let (Some(events), Some(al)) = (gt_trace, alignment.as_ref()) {
        for (si, matched) in al.matches.iter().enumerate() {
            if let Some(ei) = matched {
                actions[si] = Some((events[*ei].action.clone(), Provenance::GroundTruth));
            }
        }
    }
    let missing_actions: Vec<usize> =
        (0..segments.len()).filter(|&si| actions[si].is_none()).collect();
    report.ground_truth_actions = segments.len() - missing_actions.len();
    report.generated_actions = missing_actions.len();
    let screen_ref = |frame: usize| {
        json!({ "frame": frame, "vh_lines": vh_by_frame[&frame].0.lines() })
    };
    let generated = run_jobs(&missing_actions, options.parallelism, |&si| {
        let seg = &segments[si];
        let payload = json!({
            "pre": screen_ref(seg.pre_keyframe),
            "post": screen_ref(seg.post_keyframe),
        });
        let response = client
            .invoke(Endpoint::ActionGenerate, payload)
            .map_err(|source| SequenceError::ClientUnavailable { source })?;
        let action: Action = serde_json::from_value(response.body["action"].clone())
            .map_err(|e| SequenceError::InvalidAction { reason: e.to_string() })?;
        action.validate()?;
        Ok::<_, SequenceError>((si, action))
    })?;
    for (si, action) in generated {
        actions[si] = Some((action, Provenance::Generated));
    }

    let steps = segments
        .iter()
        .zip(actions)
        .map(|(seg, action)| {
            let (action, action_source) = action.expect("every segment resolved");
            ExplorationStep {
                pre: screen(seg.pre_keyframe),
                action,
                action_source,
                post: screen(seg.post_keyframe),
            }
        })
        .collect();

    let sequence = ExplorationSequence { source_id, steps };
    sequence.validate()?;
    Ok((sequence, report))
}

/// Run independent jobs with bounded parallelism. Results come back in job
/// order; on failure the lowest-indexed error wins, independent of timing.
pub(crate) fn run_jobs<J: Sync, T: Send, E: Send>(
    jobs: &[J],
    parallelism: usize,
    run: impl Fn(&J) -> Result<T, E> + Sync,
) -> Result<Vec<T>, E> {
    let n = jobs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let workers = parallelism.max(1).min(n);
    if workers == 1 {
        return jobs.iter().map(run).collect();
    }
    let slots: Vec<Mutex<Option<Result<T, E>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = run(&jobs[i]);
                *slots[i].lock().expect("job slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("job slot lock").expect("every job ran"))
        .collect()
}
