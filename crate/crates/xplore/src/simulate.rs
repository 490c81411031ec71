//! The ground-truth factory: synthetic apps, an automated explorer, and a
//! deterministic renderer.
//!
//! Everything the pipeline is supposed to reconstruct is first *constructed*
//! here, so every stage can be graded against an oracle. An [`AppModel`]
//! declares screens, clickable elements, tap transitions, and a back map.
//! [`explore`] walks it — depth-first like an automated UI crawler, or
//! uniformly at random from a seed — producing a screen-level trace.
//! [`gt_graph`] folds that trace into the transition graph the pipeline
//! should recover, and [`render`] turns it into the recording the pipeline
//! actually consumes: flat-shaded frames, `static_run` settled frames per
//! screen, `transition_run` animation frames per action.
//!
//! The animation frames are a 50/50 luminance blend of the two screens with
//! a centered checkerboard "ripple" whose polarity alternates every frame.
//! The ripple is what makes the renderer an *analytic* oracle: settled
//! pixels stay in [23, 222], so every boundary into, inside, and out of a
//! burst moves at least `(w·h/4) · 23` luminance units — comfortably above
//! the segmenter's upper threshold — no matter how similar the two screens
//! are (self-transitions included), while consecutive settled frames stay
//! byte-identical. Segment boundaries are therefore exact by construction:
//! event `i` fires at frame `static_run + i·(transition_run + static_run)`,
//! and its burst spans Y-Diff indices `event−1 ..= event+transition_run−1`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ScreenNode;
use crate::graph::{GuiTransitionGraph, TransitionEdge};
use crate::ingest::{FrameManifest, FrameSequence, IngestError, LumaPlane};
use crate::keyframe::SegmenterConfig;
use crate::sequence::{Action, SequenceError, TraceEvent};
use crate::vh::{Bounds, VhNode, ViewHierarchy};

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum SimulateError {
    /// The app model violates its invariants.
    #[error("invalid app model: {reason}")]
    InvalidModel { reason: String },

    /// A render or policy configuration is out of range.
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },

    /// An app model document failed to parse.
    #[error("malformed app model document: {reason}")]
    MalformedDoc { reason: String },

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error(transparent)]
    Sequence(#[from] SequenceError),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One interactive (or inert) element on a screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    #[serde(rename = "id")]
    pub element_id: String,
    pub bounds: Bounds,
    pub clickable: bool,
    pub text: String,
}

/// One functional screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screen {
    #[serde(rename = "id")]
    pub screen_id: usize,
    pub description: String,
    pub elements: Vec<Element>,
}

/// A declarative synthetic app: what the simulated interface *is*.
///
/// `transitions` maps a tap on `(screen, element)` to the destination
/// screen; a tap with no entry stays put. `back_map` is the (static) back
/// stack. Screen ids are dense indices into `screens`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppModel {
    pub width: u32,
    pub height: u32,
    pub home: usize,
    pub screens: Vec<Screen>,
    pub transitions: BTreeMap<(usize, String), usize>,
    pub back_map: BTreeMap<usize, usize>,
}

impl AppModel {
    pub fn screen(&self, sid: usize) -> Option<&Screen> {
        self.screens.get(sid)
    }

    /// Where a tap on `element` of `screen` leads (staying put when the
    /// model defines nothing).
    pub fn tap_target(&self, screen: usize, element: &str) -> usize {
        self.transitions.get(&(screen, element.to_string())).copied().unwrap_or(screen)
    }

    /// Check the model invariants: dense screen ids, valid home, transitions
    /// referencing existing *clickable* elements and existing destinations,
    /// valid back targets, per-screen unique element ids, and every screen
    /// reachable from home via tap transitions.
    pub fn validate(&self) -> Result<(), SimulateError> {
        let err = |reason: String| Err(SimulateError::InvalidModel { reason });
        if self.width == 0 || self.height == 0 {
            return err("screen dimensions must be positive".into());
        }
        if self.screens.is_empty() {
            return err("model has no screens".into());
        }
        for (expect, screen) in self.screens.iter().enumerate() {
            if screen.screen_id != expect {
                return err(format!("screen ids not dense at {expect}"));
            }
            let mut ids = BTreeSet::new();
            for element in &screen.elements {
                if !ids.insert(&element.element_id) {
                    return err(format!(
                        "screen {expect} repeats element id {}",
                        element.element_id
                    ));
                }
            }
        }
        if self.home >= self.screens.len() {
            return err(format!("home screen {} does not exist", self.home));
        }
        for (&(sid, ref eid), &dst) in &self.transitions {
            let screen = self
                .screen(sid)
                .ok_or(SimulateError::InvalidModel {
                    reason: format!("transition from missing screen {sid}"),
                })?;
            let element = screen.elements.iter().find(|e| &e.element_id == eid);
            match element {
                None => {
                    return err(format!("transition from missing element {eid} of screen {sid}"))
                }
                Some(e) if !e.clickable => {
                    return err(format!("transition from non-clickable element {eid}"))
                }
                Some(_) => {}
            }
            if dst >= self.screens.len() {
                return err(format!("transition to missing screen {dst}"));
            }
        }
        for (&from, &to) in &self.back_map {
            if from >= self.screens.len() || to >= self.screens.len() {
                return err(format!("back edge {from}→{to} references a missing screen"));
            }
        }
        // Reachability via taps.
        let mut seen = BTreeSet::from([self.home]);
        let mut queue = VecDeque::from([self.home]);
        while let Some(sid) = queue.pop_front() {
            for (&(src, _), &dst) in &self.transitions {
                if src == sid && seen.insert(dst) {
                    queue.push_back(dst);
                }
            }
        }
        if seen.len() != self.screens.len() {
            return err(format!(
                "only {} of {} screens reachable from home",
                seen.len(),
                self.screens.len()
            ));
        }
        Ok(())
    }
}

// -- appmodel.json ----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TransitionDoc {
    screen: usize,
    element: String,
    to: usize,
}

#[derive(Serialize, Deserialize)]
struct AppModelDoc {
    width: u32,
    height: u32,
    home: usize,
    screens: Vec<Screen>,
    transitions: Vec<TransitionDoc>,
    back: BTreeMap<usize, usize>,
}

/// Serialize a model as `appmodel.json` (pretty, deterministic).
pub fn app_model_to_json(model: &AppModel) -> String {
    let doc = AppModelDoc {
        width: model.width,
        height: model.height,
        home: model.home,
        screens: model.screens.clone(),
        transitions: model
            .transitions
            .iter()
            .map(|(&(screen, ref element), &to)| TransitionDoc {
                screen,
                element: element.clone(),
                to,
            })
            .collect(),
        back: model.back_map.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("app models serialize");
    text.push('\n');
    text
}

/// Parse and validate an `appmodel.json`.
pub fn app_model_from_json(raw: &str) -> Result<AppModel, SimulateError> {
    let doc: AppModelDoc = serde_json::from_str(raw)
        .map_err(|e| SimulateError::MalformedDoc { reason: e.to_string() })?;
    let mut transitions = BTreeMap::new();
    for t in doc.transitions {
        if transitions.insert((t.screen, t.element.clone()), t.to).is_some() {
            return Err(SimulateError::MalformedDoc {
                reason: format!("duplicate transition for screen {} element {}", t.screen, t.element),
            });
        }
    }
    let model = AppModel {
        width: doc.width,
        height: doc.height,
        home: doc.home,
        screens: doc.screens,
        transitions,
        back_map: doc.back,
    };
    model.validate()?;
    Ok(model)
}

/// Write `appmodel.json`.
pub fn write_app_model(path: &Path, model: &AppModel) -> Result<(), SimulateError> {
    std::fs::write(path, app_model_to_json(model))
        .map_err(|source| SimulateError::Io { path: path.into(), source })
}

/// Read and validate an `appmodel.json`.
pub fn read_app_model(path: &Path) -> Result<AppModel, SimulateError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| SimulateError::Io { path: path.into(), source })?;
    app_model_from_json(&raw)
}

// -- random models ----------------------------------------------------------

const ELEMENT_ROWS: usize = 4;

fn element_bounds(width: u32, row: usize) -> Bounds {
    let top = 30 + (row as i32) * 50;
    Bounds::new(10, top, width as i32 - 10, top + 36).expect("generated bounds are ordered")
}

/// Generate a random valid app model: a spanning tree of tap transitions
/// rooted at home (so everything is reachable), a few extra cross edges,
/// back edges ascending the tree, and an occasional inert label. Element
/// and screen resource ids are globally unique, so distinct screens share
/// no hierarchy lines — the property rule-based clustering relies on.
pub fn random_app_model(seed: u64, n_screens: usize) -> AppModel {
    assert!(n_screens >= 1, "a model needs at least one screen");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (width, height) = (144u32, 256u32);

    // Tap targets per screen, capped so elements fit the fixed row layout.
    let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); n_screens];
    let mut back_map = BTreeMap::from([(0usize, 0usize)]);
    for sid in 1..n_screens {
        let candidates: Vec<usize> =
            (0..sid).filter(|&p| outgoing[p].len() < ELEMENT_ROWS).collect();
        let parent = candidates[rng.gen_range(0..candidates.len())];
        outgoing[parent].push(sid);
        back_map.insert(sid, parent);
    }
    if n_screens > 1 {
        let extras = rng.gen_range(0..=n_screens / 2);
        for _ in 0..extras {
            let src = rng.gen_range(0..n_screens);
            let dst = rng.gen_range(0..n_screens);
            if outgoing[src].len() < ELEMENT_ROWS {
                outgoing[src].push(dst);
            }
        }
    }

    let mut screens = Vec::with_capacity(n_screens);
    let mut transitions = BTreeMap::new();
    for (sid, targets) in outgoing.iter().enumerate() {
        let mut elements = Vec::new();
        for (k, &target) in targets.iter().enumerate() {
            let element_id = format!("s{sid}_e{k}");
            elements.push(Element {
                element_id: element_id.clone(),
                bounds: element_bounds(width, k),
                clickable: true,
                text: format!("open {target}"),
            });
            transitions.insert((sid, element_id), target);
        }
        if targets.len() < ELEMENT_ROWS && rng.gen_bool(0.4) {
            elements.push(Element {
                element_id: format!("s{sid}_label"),
                bounds: element_bounds(width, targets.len()),
                clickable: false,
                text: "info".into(),
            });
        }
        screens.push(Screen {
            screen_id: sid,
            description: format!("screen {sid} panel"),
            elements,
        });
    }

    let model = AppModel { width, height, home: 0, screens, transitions, back_map };
    debug_assert!(model.validate().is_ok());
    model
}

// -- view hierarchies -------------------------------------------------------

/// The full hierarchy dump of one screen: a root container labeled
/// `screen_<id>` with one child node per element.
pub fn vh_for_screen(model: &AppModel, sid: usize) -> Result<ViewHierarchy, SimulateError> {
    let screen = model
        .screen(sid)
        .ok_or(SimulateError::InvalidModel { reason: format!("no screen {sid}") })?;
    let mut root = VhNode::new(
        "FrameLayout",
        Bounds::new(0, 0, model.width as i32, model.height as i32)
            .expect("screen bounds are ordered"),
    );
    root.resource_id = Some(format!("screen_{sid}"));
    for element in &screen.elements {
        let class = if element.clickable { "Button" } else { "TextView" };
        let mut node = VhNode::new(class, element.bounds);
        node.resource_id = Some(element.element_id.clone());
        node.text = Some(element.text.clone());
        node.clickable = element.clickable;
        root.children.push(node);
    }
    ViewHierarchy::new(model.width, model.height, root)
        .map_err(|e| SimulateError::InvalidModel { reason: e.to_string() })
}

// -- exploration ------------------------------------------------------------

/// How to drive the app.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Dfs,
    Random,
}

/// Exploration policy: strategy, seed (random only), and step cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationPolicy {
    pub kind: PolicyKind,
    pub seed: u64,
    pub max_steps: usize,
}

impl ExplorationPolicy {
    pub fn dfs(max_steps: usize) -> Self {
        ExplorationPolicy { kind: PolicyKind::Dfs, seed: 0, max_steps }
    }

    pub fn random(seed: u64, max_steps: usize) -> Self {
        ExplorationPolicy { kind: PolicyKind::Random, seed, max_steps }
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        if self.max_steps == 0 {
            return Err(SimulateError::InvalidConfig { reason: "max_steps must be ≥ 1".into() });
        }
        Ok(())
    }
}

/// One screen-level event of an exploration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub pre_screen: usize,
    pub action: Action,
    pub post_screen: usize,
}

/// Drive the model with a policy; the trace is fully determined by
/// `(model, policy)`.
pub fn explore(model: &AppModel, policy: &ExplorationPolicy) -> Result<Vec<TraceStep>, SimulateError> {
    model.validate()?;
    policy.validate()?;
    Ok(match policy.kind {
        PolicyKind::Dfs => explore_dfs(model, policy.max_steps),
        PolicyKind::Random => explore_random(model, policy.seed, policy.max_steps),
    })
}

fn clickable_ids(screen: &Screen) -> VecDeque<String> {
    screen.elements.iter().filter(|e| e.clickable).map(|e| e.element_id.clone()).collect()
}

/// Depth-first crawling: tap every clickable of the current screen once (in
/// declaration order), then travel — back edge preferred, observed taps
/// otherwise — to the nearest screen that still has untried clickables.
fn explore_dfs(model: &AppModel, max_steps: usize) -> Vec<TraceStep> {
    let mut steps = Vec::new();
    let mut current = model.home;
    let mut untried: BTreeMap<usize, VecDeque<String>> = BTreeMap::new();
    let mut observed: BTreeMap<usize, Vec<(String, usize)>> = BTreeMap::new();
    untried.insert(current, clickable_ids(&model.screens[current]));

    while steps.len() < max_steps {
        if let Some(element) = untried.get_mut(&current).and_then(VecDeque::pop_front) {
            let target = model.tap_target(current, &element);
            steps.push(TraceStep {
                pre_screen: current,
                action: Action::tap(element.clone()),
                post_screen: target,
            });
            observed.entry(current).or_default().push((element, target));
            current = target;
            untried
                .entry(current)
                .or_insert_with(|| clickable_ids(&model.screens[current]));
        } else {
            if !untried.values().any(|queue| !queue.is_empty()) {
                break; // everything tried everywhere: exhaustion
            }
            let Some(walk) = navigate(model, &observed, &untried, current) else {
                break; // untried work exists but cannot be reached
            };
            for (action, next) in walk {
                if steps.len() >= max_steps {
                    return steps;
                }
                steps.push(TraceStep { pre_screen: current, action, post_screen: next });
                current = next;
            }
        }
    }
    steps
}

/// Shortest action walk from `from` to any screen with untried clickables,
/// over the back edge (preferred at equal length) and the taps exercised so
/// far. Deterministic: BFS with a fixed edge order.
fn navigate(
    model: &AppModel,
    observed: &BTreeMap<usize, Vec<(String, usize)>>,
    untried: &BTreeMap<usize, VecDeque<String>>,
    from: usize,
) -> Option<Vec<(Action, usize)>> {
    let edges_of = |sid: usize| -> Vec<(Action, usize)> {
        let mut edges = Vec::new();
        if let Some(&back) = model.back_map.get(&sid) {
            if back != sid {
                edges.push((Action::back(), back));
            }
        }
        if let Some(taps) = observed.get(&sid) {
            for (element, target) in taps {
                edges.push((Action::tap(element.clone()), *target));
            }
        }
        edges
    };
    let is_goal =
        |sid: usize| untried.get(&sid).map(|q| !q.is_empty()).unwrap_or(false);

    let mut parent: BTreeMap<usize, (usize, Action)> = BTreeMap::new();
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(sid) = queue.pop_front() {
        if is_goal(sid) {
            let mut walk = Vec::new();
            let mut at = sid;
            while at != from {
                let (prev, action) = parent.remove(&at).expect("path recorded");
                walk.push((action, at));
                at = prev;
            }
            walk.reverse();
            return Some(walk);
        }
        for (action, next) in edges_of(sid) {
            if seen.insert(next) {
                parent.insert(next, (sid, action));
                queue.push_back(next);
            }
        }
    }
    None
}

/// Uniform random interaction: at each step pick among the screen's
/// clickables plus (when available) back.
fn explore_random(model: &AppModel, seed: u64, max_steps: usize) -> Vec<TraceStep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = Vec::new();
    let mut current = model.home;
    for _ in 0..max_steps {
        let screen = &model.screens[current];
        let mut options: Vec<(Action, usize)> = screen
            .elements
            .iter()
            .filter(|e| e.clickable)
            .map(|e| (Action::tap(&e.element_id), model.tap_target(current, &e.element_id)))
            .collect();
        match model.back_map.get(&current) {
            Some(&back) if back != current => options.push((Action::back(), back)),
            _ => {}
        }
        if options.is_empty() {
            break;
        }
        let (action, target) = options.swap_remove(rng.gen_range(0..options.len()));
        steps.push(TraceStep { pre_screen: current, action, post_screen: target });
        current = target;
    }
    steps
}

// -- ground-truth graph -----------------------------------------------------

/// Fold a trace into the transition graph the pipeline should recover:
/// nodes are the screens the trace visited (first-visit order, home first),
/// edges the exercised transitions with the usual `(src, dst, action)`
/// merge. An empty trace yields the lone home node. Node `representative`/
/// `members` carry the screen id (there are no keyframes on this side).
pub fn gt_graph(model: &AppModel, trace: &[TraceStep]) -> GuiTransitionGraph {
    let mut node_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut nodes: Vec<ScreenNode> = Vec::new();
    let intern = |sid: usize, nodes: &mut Vec<ScreenNode>, node_of: &mut BTreeMap<usize, usize>| {
        *node_of.entry(sid).or_insert_with(|| {
            let node_id = nodes.len();
            nodes.push(ScreenNode {
                node_id,
                description: model.screens[sid].description.clone(),
                representative: sid,
                members: vec![sid],
            });
            node_id
        })
    };

    let first = trace.first().map(|s| s.pre_screen).unwrap_or(model.home);
    let home = intern(first, &mut nodes, &mut node_of);

    let mut merged: BTreeMap<(usize, usize, Action), (usize, usize)> = BTreeMap::new();
    for (index, step) in trace.iter().enumerate() {
        let src = intern(step.pre_screen, &mut nodes, &mut node_of);
        let dst = intern(step.post_screen, &mut nodes, &mut node_of);
        merged
            .entry((src, dst, step.action.clone()))
            .and_modify(|(occurrences, _)| *occurrences += 1)
            .or_insert((1, index));
    }
    let edges = merged
        .into_iter()
        .map(|((src, dst, action), (occurrences, first_step))| TransitionEdge {
            src,
            dst,
            action,
            occurrences,
            first_step,
        })
        .collect();
    let graph = GuiTransitionGraph { home, nodes, edges };
    debug_assert!(graph.validate().is_ok());
    graph
}

// -- rendering --------------------------------------------------------------

/// Frame-geometry knobs for the renderer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    /// Settled frames per screen dwell. Must exceed the segmenter's
    /// `min_static` so bursts never bleed together.
    pub static_run: usize,
    /// Animation frames per action.
    pub transition_run: usize,
    pub fps: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { width: 144, height: 256, static_run: 4, transition_run: 3, fps: 10.0 }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), SimulateError> {
        let err = |reason: String| Err(SimulateError::InvalidConfig { reason });
        if self.width == 0 || self.height == 0 {
            return err("frame dimensions must be positive".into());
        }
        let min_static = SegmenterConfig::default().min_static();
        if self.static_run < min_static + 1 {
            return err(format!(
                "static_run {} must be at least min_static + 1 = {}",
                self.static_run,
                min_static + 1
            ));
        }
        if self.transition_run == 0 {
            return err("transition_run must be ≥ 1".into());
        }
        if !(self.fps > 0.0) {
            return err("fps must be positive".into());
        }
        Ok(())
    }

    /// The frame index where event `i` fires (its first animation frame).
    pub fn event_frame(&self, i: usize) -> usize {
        self.static_run + i * (self.transition_run + self.static_run)
    }

    /// Total frames for a trace of `n` events.
    pub fn total_frames(&self, n: usize) -> usize {
        self.static_run + n * (self.transition_run + self.static_run)
    }
}

/// Background shade of a screen: injective for the first 200 screen ids and
/// always within [23, 222], keeping settled pixels away from the ripple's
/// 0/255 extremes.
pub fn screen_shade(sid: usize) -> u8 {
    (23 + (sid * 97) % 200) as u8
}

fn element_shade(sid: usize, k: usize) -> u8 {
    (23 + (sid * 97 + (k + 1) * 53) % 200) as u8
}

fn render_screen(model: &AppModel, sid: usize, cfg: &RenderConfig) -> LumaPlane {
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let mut samples = vec![screen_shade(sid); w * h];
    for (k, element) in model.screens[sid].elements.iter().enumerate() {
        let shade = element_shade(sid, k);
        let b = &element.bounds;
        let x0 = b.left.max(0) as usize;
        let x1 = (b.right.max(0) as usize).min(w);
        let y0 = b.top.max(0) as usize;
        let y1 = (b.bottom.max(0) as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                samples[y * w + x] = shade;
            }
        }
    }
    LumaPlane::new(cfg.width, cfg.height, samples).expect("rendered planes are well-formed")
}

/// Animation frame `j` between two settled screens: the 50/50 blend with a
/// centered checkerboard ripple whose polarity flips each frame.
fn render_transition(a: &LumaPlane, b: &LumaPlane, j: usize, cfg: &RenderConfig) -> LumaPlane {
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let (rx0, ry0) = (w / 4, h / 4);
    let (rx1, ry1) = (rx0 + w / 2, ry0 + h / 2);
    let (sa, sb) = (a.samples(), b.samples());
    let mut samples = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            samples[i] = if x >= rx0 && x < rx1 && y >= ry0 && y < ry1 {
                if (x + y + j) % 2 == 0 {
                    255
                } else {
                    0
                }
            } else {
                ((sa[i] as u16 + sb[i] as u16) / 2) as u8
            };
        }
    }
    LumaPlane::new(cfg.width, cfg.height, samples).expect("rendered planes are well-formed")
}

/// A rendered corpus: the frames and the frame-indexed trace events (with
/// full hierarchy dumps) that go with them.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub frames: FrameSequence,
    pub events: Vec<TraceEvent>,
}

/// Render a trace into a recording: `static_run` settled frames, then per
/// event `transition_run` animation frames plus the destination's settled
/// dwell. Each event's frame index is its first animation frame.
pub fn render(
    model: &AppModel,
    trace: &[TraceStep],
    cfg: &RenderConfig,
    source_id: &str,
) -> Result<RenderOutput, SimulateError> {
    model.validate()?;
    cfg.validate()?;
    for (i, step) in trace.iter().enumerate() {
        for sid in [step.pre_screen, step.post_screen] {
            if sid >= model.screens.len() {
                return Err(SimulateError::InvalidModel {
                    reason: format!("trace step {i} references missing screen {sid}"),
                });
            }
        }
        if i == 0 && step.pre_screen != model.home {
            return Err(SimulateError::InvalidModel {
                reason: "trace must start at the home screen".into(),
            });
        }
        if i > 0 && trace[i - 1].post_screen != step.pre_screen {
            return Err(SimulateError::InvalidModel {
                reason: format!("trace step {i} does not continue from step {}", i - 1),
            });
        }
    }

    let rendered: BTreeMap<usize, Arc<LumaPlane>> = trace
        .iter()
        .flat_map(|s| [s.pre_screen, s.post_screen])
        .chain([model.home])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|sid| (sid, Arc::new(render_screen(model, sid, cfg))))
        .collect();

    let mut planes: Vec<Arc<LumaPlane>> = Vec::with_capacity(cfg.total_frames(trace.len()));
    let mut events = Vec::with_capacity(trace.len());
    let start = trace.first().map(|s| s.pre_screen).unwrap_or(model.home);
    for _ in 0..cfg.static_run {
        planes.push(rendered[&start].clone());
    }
    for step in trace {
        events.push(TraceEvent {
            frame: planes.len(),
            action: step.action.clone(),
            pre_vh: Some(vh_for_screen(model, step.pre_screen)?),
            post_vh: Some(vh_for_screen(model, step.post_screen)?),
        });
        let (a, b) = (&rendered[&step.pre_screen], &rendered[&step.post_screen]);
        for j in 0..cfg.transition_run {
            planes.push(Arc::new(render_transition(a, b, j, cfg)));
        }
        for _ in 0..cfg.static_run {
            planes.push(rendered[&step.post_screen].clone());
        }
    }

    let manifest = FrameManifest {
        source_id: source_id.to_string(),
        fps: cfg.fps,
        width: cfg.width,
        height: cfg.height,
        frame_paths: (0..planes.len())
            .map(|i| PathBuf::from(format!("frames/{i:05}.pgm")))
            .collect(),
    };
    Ok(RenderOutput { frames: FrameSequence::from_planes(manifest, planes)?, events })
}

/// Where [`write_corpus`] put everything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPaths {
    pub manifest: PathBuf,
    pub trace: PathBuf,
    pub app_model: PathBuf,
    pub frames_dir: PathBuf,
}

/// Render a trace and write the whole corpus to disk: `manifest.json`,
/// `frames/*.pgm`, `trace.jsonl`, and `appmodel.json`.
pub fn write_corpus(
    dir: &Path,
    model: &AppModel,
    trace: &[TraceStep],
    cfg: &RenderConfig,
    source_id: &str,
) -> Result<CorpusPaths, SimulateError> {
    let output = render(model, trace, cfg, source_id)?;
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir)
        .map_err(|source| SimulateError::Io { path: frames_dir.clone(), source })?;

    for (i, plane) in output.frames.planes().iter().enumerate() {
        let path = dir.join(&output.frames.manifest.frame_paths[i]);
        crate::ingest::write_pgm(&path, plane)?;
    }

    let manifest_path = dir.join("manifest.json");
    let manifest_json = crate::ingest::manifest_to_json(&output.frames.manifest, dir)?;
    std::fs::write(&manifest_path, manifest_json)
        .map_err(|source| SimulateError::Io { path: manifest_path.clone(), source })?;

    let trace_path = dir.join("trace.jsonl");
    crate::sequence::write_trace(&trace_path, &output.events)?;

    let model_path = dir.join("appmodel.json");
    write_app_model(&model_path, model)?;

    Ok(CorpusPaths {
        manifest: manifest_path,
        trace: trace_path,
        app_model: model_path,
        frames_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyframe::{compute_ydiff, segment_actions, ActionSegment};

    /// Two screens, one button each way.
    fn ping_pong() -> AppModel {
        let button = |sid: usize| Element {
            element_id: format!("s{sid}_e0"),
            bounds: element_bounds(144, 0),
            clickable: true,
            text: "go".into(),
        };
        AppModel {
            width: 144,
            height: 256,
            home: 0,
            screens: vec![
                Screen { screen_id: 0, description: "home".into(), elements: vec![button(0)] },
                Screen { screen_id: 1, description: "detail".into(), elements: vec![button(1)] },
            ],
            transitions: BTreeMap::from([
                ((0, "s0_e0".to_string()), 1),
                ((1, "s1_e0".to_string()), 0),
            ]),
            back_map: BTreeMap::from([(0, 0), (1, 0)]),
        }
    }

    #[test]
    fn generated_models_validate() {
        for seed in 0..6 {
            let model = random_app_model(seed, 5 + (seed as usize) * 4);
            model.validate().unwrap();
            // Every clickable element has a transition; inert ones do not.
            for screen in &model.screens {
                for element in &screen.elements {
                    let has_transition = model
                        .transitions
                        .contains_key(&(screen.screen_id, element.element_id.clone()));
                    assert_eq!(has_transition, element.clickable);
                }
            }
            // Descriptions are unique; screen labels disjoint.
            let descriptions: BTreeSet<&str> =
                model.screens.iter().map(|s| s.description.as_str()).collect();
            assert_eq!(descriptions.len(), model.screens.len());
        }
    }

    #[test]
    fn generated_models_are_seed_deterministic() {
        assert_eq!(random_app_model(7, 12), random_app_model(7, 12));
        assert_ne!(random_app_model(7, 12), random_app_model(8, 12));
    }

    #[test]
    fn dfs_covers_the_ping_pong_model() {
        let model = ping_pong();
        let trace = explore(&model, &ExplorationPolicy::dfs(50)).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace[0], TraceStep {
            pre_screen: 0,
            action: Action::tap("s0_e0"),
            post_screen: 1,
        });
        assert_eq!(trace[1], TraceStep {
            pre_screen: 1,
            action: Action::tap("s1_e0"),
            post_screen: 0,
        });
    }

    #[test]
    fn dfs_covers_every_transition_of_generated_models() {
        for seed in 0..4 {
            let model = random_app_model(seed, 10);
            let trace = explore(&model, &ExplorationPolicy::dfs(10_000)).unwrap();
            let exercised: BTreeSet<(usize, String)> = trace
                .iter()
                .filter_map(|s| match &s.action.target {
                    Some(t) if s.action.kind == crate::sequence::ActionKind::Tap => {
                        Some((s.pre_screen, t.id.clone().unwrap()))
                    }
                    _ => None,
                })
                .collect();
            for key in model.transitions.keys() {
                assert!(exercised.contains(key), "transition {key:?} never exercised");
            }
        }
    }

    #[test]
    fn home_without_clickables_yields_no_steps() {
        let model = AppModel {
            width: 144,
            height: 256,
            home: 0,
            screens: vec![Screen {
                screen_id: 0,
                description: "lonely".into(),
                elements: vec![],
            }],
            transitions: BTreeMap::new(),
            back_map: BTreeMap::from([(0, 0)]),
        };
        let trace = explore(&model, &ExplorationPolicy::dfs(10)).unwrap();
        assert!(trace.is_empty());
    }

    #[test]
    fn random_policy_is_seed_deterministic() {
        let model = random_app_model(3, 8);
        let a = explore(&model, &ExplorationPolicy::random(42, 30)).unwrap();
        let b = explore(&model, &ExplorationPolicy::random(42, 30)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30, "random exploration runs to the step cap");
    }

    #[test]
    fn gt_graph_of_full_and_empty_traces() {
        let model = ping_pong();
        let trace = explore(&model, &ExplorationPolicy::dfs(50)).unwrap();
        let g = gt_graph(&model, &trace);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.home, 0);

        let empty = gt_graph(&model, &[]);
        assert_eq!(empty.node_count(), 1);
        assert_eq!(empty.edge_count(), 0);
        assert_eq!(empty.nodes[0].description, "home");
    }

    #[test]
    fn render_frame_arithmetic_matches_defaults() {
        let model = ping_pong();
        let trace = vec![TraceStep {
            pre_screen: 0,
            action: Action::tap("s0_e0"),
            post_screen: 1,
        }];
        let cfg = RenderConfig::default();
        let out = render(&model, &trace, &cfg, "rec").unwrap();
        assert_eq!(out.frames.len(), 11, "4 + 3 + 4 frames");
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].frame, 4, "event fires at the first animation frame");
        assert_eq!(cfg.event_frame(0), 4);
        assert_eq!(cfg.event_frame(1), 11);
    }

    #[test]
    fn settled_runs_are_flat_in_ydiff() {
        let model = ping_pong();
        let trace = vec![TraceStep {
            pre_screen: 0,
            action: Action::tap("s0_e0"),
            post_screen: 1,
        }];
        let out = render(&model, &trace, &RenderConfig::default(), "rec").unwrap();
        let diffs = compute_ydiff(&out.frames).unwrap();
        for i in [0, 1, 2, 7, 8, 9] {
            assert_eq!(diffs.values()[i], 0.0, "settled boundary {i} must be silent");
        }
        for i in 3..=6 {
            assert!(
                diffs.values()[i] > 0.02,
                "animation boundary {i} must be loud, got {}",
                diffs.values()[i]
            );
        }
    }

    #[test]
    fn segment_boundaries_are_exact_by_construction() {
        let model = ping_pong();
        let trace = explore(&model, &ExplorationPolicy::dfs(50)).unwrap();
        let cfg = RenderConfig::default();
        let out = render(&model, &trace, &cfg, "rec").unwrap();
        let diffs = compute_ydiff(&out.frames).unwrap();
        let segments = segment_actions(&diffs, &SegmenterConfig::default());
        assert_eq!(segments.len(), trace.len());
        for (i, seg) in segments.iter().enumerate() {
            let f = cfg.event_frame(i);
            let expected = ActionSegment {
                pre_keyframe: f - 2,
                change_start: f - 1,
                change_end: f + cfg.transition_run - 1,
                post_keyframe: f + cfg.transition_run,
            };
            assert_eq!(*seg, expected, "segment {i}");
        }
    }

    #[test]
    fn self_transitions_still_make_a_visible_burst() {
        let model = AppModel {
            width: 144,
            height: 256,
            home: 0,
            screens: vec![Screen {
                screen_id: 0,
                description: "loop".into(),
                elements: vec![Element {
                    element_id: "s0_e0".into(),
                    bounds: element_bounds(144, 0),
                    clickable: true,
                    text: "refresh".into(),
                }],
            }],
            transitions: BTreeMap::from([((0, "s0_e0".to_string()), 0)]),
            back_map: BTreeMap::from([(0, 0)]),
        };
        let trace = vec![TraceStep {
            pre_screen: 0,
            action: Action::tap("s0_e0"),
            post_screen: 0,
        }];
        let out = render(&model, &trace, &RenderConfig::default(), "rec").unwrap();
        let diffs = compute_ydiff(&out.frames).unwrap();
        let segments = segment_actions(&diffs, &SegmenterConfig::default());
        assert_eq!(segments.len(), 1, "the ripple makes even a no-op transition visible");
    }

    #[test]
    fn shades_are_injective_within_two_hundred() {
        let shades: BTreeSet<u8> = (0..200).map(screen_shade).collect();
        assert_eq!(shades.len(), 200);
        assert!(shades.iter().all(|&s| (23..=222).contains(&s)));
    }

    #[test]
    fn vh_dump_mirrors_the_screen() {
        let model = ping_pong();
        let vh = vh_for_screen(&model, 1).unwrap();
        assert_eq!(vh.root.resource_id.as_deref(), Some("screen_1"));
        assert_eq!(vh.root.children.len(), 1);
        assert_eq!(vh.root.children[0].resource_id.as_deref(), Some("s1_e0"));
        assert!(vh.root.children[0].clickable);
    }

    #[test]
    fn corpus_round_trips_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let model = ping_pong();
        let trace = explore(&model, &ExplorationPolicy::dfs(50)).unwrap();
        let cfg = RenderConfig::default();
        let paths = write_corpus(dir.path(), &model, &trace, &cfg, "demo").unwrap();

        let loaded = FrameSequence::load(&paths.manifest).unwrap();
        let rendered = render(&model, &trace, &cfg, "demo").unwrap();
        assert_eq!(loaded.len(), rendered.frames.len());
        for i in 0..loaded.len() {
            assert_eq!(
                loaded.plane(i).samples(),
                rendered.frames.plane(i).samples(),
                "frame {i} survives the PGM round trip"
            );
        }
        let events = crate::sequence::read_trace(&paths.trace).unwrap();
        assert_eq!(events, rendered.events);
        let back = read_app_model(&paths.app_model).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn render_rejects_disjointed_traces() {
        let model = ping_pong();
        let broken = vec![
            TraceStep { pre_screen: 0, action: Action::tap("s0_e0"), post_screen: 1 },
            TraceStep { pre_screen: 0, action: Action::tap("s0_e0"), post_screen: 1 },
        ];
        assert!(matches!(
            render(&model, &broken, &RenderConfig::default(), "rec"),
            Err(SimulateError::InvalidModel { .. })
        ));
    }

    #[test]
    fn config_validation_guards_the_segmenter_contract() {
        let mut cfg = RenderConfig { static_run: 2, ..RenderConfig::default() };
        assert!(cfg.validate().is_err(), "static_run must exceed min_static");
        cfg.static_run = 3;
        assert!(cfg.validate().is_ok());
        cfg.transition_run = 0;
        assert!(cfg.validate().is_err());
    }
}
