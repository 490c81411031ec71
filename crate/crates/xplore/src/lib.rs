//! Mine GUI transition graphs from screen recordings.
//!
//! A screen recording of somebody exploring an app contains, implicitly, a
//! map of that app: which screens exist, which taps lead where, and in what
//! order things must happen. This crate makes the map explicit. Luminance
//! differencing over adjacent frames finds the moments an action fired,
//! keyframes on either side of each burst capture the settled screens,
//! view hierarchies describe what was on them, sequential clustering merges
//! keyframes that show the same screen, and the result is a directed
//! multigraph of screens whose edges carry the actions that caused each
//! transition. Downstream, the graph answers multiple-choice questions
//! about the app and scores step-level automation predictions.
//!
//! The crate is organised as a pipeline; each module is one stage:
//!
//! * [`ingest`] — frame manifests, decoding, luminance planes
//! * [`keyframe`] — Y-Diff series, hysteresis action segmentation, keyframes
//! * [`vh`] — view-hierarchy parsing, simplification, similarity measures
//! * [`inference`] — pluggable model backend (mock / remote / replay cache)
//! * [`sequence`] — keyframes + actions assembled into exploration steps
//! * [`cluster`] — sequential screen clustering (rule-based or model-backed)
//! * [`graph`] — the GUI transition graph and its query operations
//! * [`tasks`] — question generation, answering, and scoring
//! * [`simulate`] — synthetic apps, explorers, and a deterministic renderer
//! * [`pipeline`] — resumable artifact-store pipeline over all stages
//!
//! The [`simulate`] module is the oracle side of the house: it builds apps
//! whose true transition graph is known, explores them, and renders the
//! exploration to frames, so the whole pipeline can be verified end to end.
//!
//! # Where to start
//!
//! The `examples/` directory is the primary tour; each example is runnable
//! with `cargo run --example <name>`:
//!
//! * `end_to_end` — synthetic app → recording → recovered graph, checked
//!   against ground truth
//! * `extract_keyframes` — Y-Diff segmentation on a tiny hand-made video
//! * `simplify_vh` — hierarchy parsing, simplification, and similarity
//! * `cluster_screens` — rule-based vs model-backed clustering
//! * `build_graph_dot` — graph construction, reachability, paths, DOT export
//! * `generate_and_answer_qa` — question generation and scoring
//! * `model_cache_replay` — request caching and token accounting
//! * `keyframe_reduction` — action-aware extraction vs 1 FPS sampling
//!
//! A thin `xplore` binary exposes the same stages as subcommands for shell
//! use; see `xplore --help`.

pub mod cluster;
pub mod graph;
pub mod inference;
pub mod ingest;
pub mod keyframe;
pub mod pipeline;
pub mod sequence;
pub mod simulate;
pub mod tasks;
pub mod vh;

pub mod cli;
