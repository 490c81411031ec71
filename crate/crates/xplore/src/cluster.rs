//! Screen clustering: from a linear run of keyframes to functional nodes.
//!
//! Exploration revisits screens constantly; the graph wants one node per
//! *functional* screen, not one per keyframe. Two sequential clusterers
//! produce that mapping. [`cluster_rule`] is self-contained: a screen joins
//! the lowest-numbered existing node whose representative it resembles —
//! hierarchy similarity at least `tau_vh` *and* screenshot similarity at
//! least `tau_img` — and founds a new node otherwise. [`cluster_model`]
//! delegates the same decision to the model client, one `cluster_decide`
//! request per screen, carrying the screen's simplified hierarchy and the
//! current node list.
//!
//! Both scans are order-deterministic: the same screens in the same order
//! produce bit-identical output. [`assignment_quality`] scores a predicted
//! assignment against a reference partition (Rand index + exactness up to
//! relabeling), which is how the synthetic corpus grades clustering.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::inference::{ClientError, Endpoint, ModelClient};
use crate::sequence::{ExplorationSequence, ScreenRecord};
use crate::vh::{describe, screenshot_similarity, simplified_similarity, SimplifiedVh};

/// Errors raised by clustering and its serialization.
#[derive(Debug, Error)]
pub enum ClusterError {
    /// The model-backed clusterer could not get a decision.
    #[error("model client unavailable: {source}")]
    ClientUnavailable {
        #[source]
        source: ClientError,
    },

    /// Predicted and reference assignments cover different keyframes.
    #[error("keyframe universe mismatch: {reason}")]
    UniverseMismatch { reason: String },

    /// A clusters document failed to parse or validate.
    #[error("malformed clusters document: {reason}")]
    MalformedDoc { reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which algorithm produced an assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    Rule,
    Model,
}

/// One functional screen: id, description, and the keyframes that landed on
/// it. The representative (first member) is what later screens are compared
/// against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenNode {
    #[serde(rename = "id")]
    pub node_id: usize,
    pub description: String,
    pub representative: usize,
    pub members: Vec<usize>,
}

/// A complete clustering: the node list plus keyframe → node mapping.
///
/// Serializes to the `clusters.json` shape (assignment keys become strings,
/// as JSON requires).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub method: ClusterMethod,
    pub nodes: Vec<ScreenNode>,
    pub assignment: BTreeMap<usize, usize>,
}

impl ClusterAssignment {
    /// The node a keyframe was assigned to.
    pub fn node_of(&self, keyframe: usize) -> Option<usize> {
        self.assignment.get(&keyframe).copied()
    }

    /// Check the partition property: dense node ids, non-empty member lists
    /// led by the representative, and exact agreement between the node
    /// member lists and the assignment map.
    pub fn validate(&self) -> Result<(), ClusterError> {
        let err = |reason: String| Err(ClusterError::MalformedDoc { reason });
        let mut seen = BTreeMap::new();
        for (expect_id, node) in self.nodes.iter().enumerate() {
            if node.node_id != expect_id {
                return err(format!("node ids not dense: expected {expect_id}, got {}", node.node_id));
            }
            if node.members.is_empty() {
                return err(format!("node {expect_id} has no members"));
            }
            if node.representative != node.members[0] {
                return err(format!("node {expect_id} representative is not its first member"));
            }
            for &kf in &node.members {
                if seen.insert(kf, node.node_id).is_some() {
                    return err(format!("keyframe {kf} appears in more than one node"));
                }
            }
        }
        if seen != self.assignment {
            return err("assignment map disagrees with node member lists".into());
        }
        Ok(())
    }
}

/// Thresholds for the rule-based clusterer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleClusterConfig {
    /// Minimum hierarchy similarity to join a node.
    pub tau_vh: f64,
    /// Minimum screenshot similarity to join a node.
    pub tau_img: f64,
}

impl Default for RuleClusterConfig {
    fn default() -> Self {
        RuleClusterConfig { tau_vh: 0.8, tau_img: 0.9 }
    }
}

impl RuleClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        for (name, v) in [("tau_vh", self.tau_vh), ("tau_img", self.tau_img)] {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                return Err(ClusterError::MalformedDoc {
                    reason: format!("{name} must lie in [0, 1], got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// The distinct screens of a sequence, in first-appearance order (which is
/// keyframe order, since steps are ordered). This is the input both
/// clusterers expect.
pub fn screens_of(sequence: &ExplorationSequence) -> Vec<ScreenRecord> {
    let mut seen = std::collections::BTreeSet::new();
    let mut screens = Vec::new();
    for step in &sequence.steps {
        for record in [&step.pre, &step.post] {
            if seen.insert(record.keyframe_index) {
                screens.push(record.clone());
            }
        }
    }
    screens
}

fn node_description(vh: &SimplifiedVh, keyframe: usize) -> String {
    describe(vh).unwrap_or_else(|| format!("screen {keyframe}"))
}

/// Rule-based sequential clustering.
///
/// Each screen joins the lowest-id node whose representative passes both
/// thresholds; otherwise it founds a new node described by its hierarchy.
/// Screenshots of mismatched dimensions count as similarity zero (different
/// surfaces are different screens). A repeated keyframe index is skipped
/// with a warning — upstream deduplicates.
pub fn cluster_rule(screens: &[ScreenRecord], cfg: &RuleClusterConfig) -> ClusterAssignment {
    let mut nodes: Vec<ScreenNode> = Vec::new();
    let mut assignment = BTreeMap::new();
    let mut representatives: Vec<ScreenRecord> = Vec::new();

    for screen in screens {
        let kf = screen.keyframe_index;
        if assignment.contains_key(&kf) {
            log::warn!("keyframe {kf} appears twice in the cluster input; ignoring repeat");
            continue;
        }
        // The cheap text comparison gates the pixel comparison.
        let joined = representatives.iter().position(|rep| {
            simplified_similarity(&rep.vh, &screen.vh) >= cfg.tau_vh
                && screenshot_similarity(&rep.luma, &screen.luma).unwrap_or(0.0) >= cfg.tau_img
        });
        match joined {
            Some(node_id) => {
                nodes[node_id].members.push(kf);
                assignment.insert(kf, node_id);
            }
            None => {
                let node_id = nodes.len();
                nodes.push(ScreenNode {
                    node_id,
                    description: node_description(&screen.vh, kf),
                    representative: kf,
                    members: vec![kf],
                });
                representatives.push(screen.clone());
                assignment.insert(kf, node_id);
            }
        }
    }
    ClusterAssignment { method: ClusterMethod::Rule, nodes, assignment }
}

/// Model-backed sequential clustering.
///
/// One `cluster_decide` request per screen, carrying the simplified
/// hierarchy (plus a screenshot digest a richer backend could resolve) and
/// the current nodes. A `match` against an unknown node id is demoted to a
/// new node with an automatic description, with a warning — the scan never
/// fails on a confused backend.
pub fn cluster_model(
    screens: &[ScreenRecord],
    client: &ModelClient,
) -> Result<ClusterAssignment, ClusterError> {
    let mut nodes: Vec<ScreenNode> = Vec::new();
    let mut assignment = BTreeMap::new();

    for screen in screens {
        let kf = screen.keyframe_index;
        if assignment.contains_key(&kf) {
            log::warn!("keyframe {kf} appears twice in the cluster input; ignoring repeat");
            continue;
        }
        let payload = json!({
            "screen": {
                "frame": kf,
                "vh_lines": screen.vh.lines(),
                "screenshot_sha256": hex::encode(Sha256::digest(screen.luma.samples())),
            },
            "nodes": nodes
                .iter()
                .map(|n| json!({ "id": n.node_id, "description": n.description }))
                .collect::<Vec<_>>(),
        });
        let response = client
            .invoke(Endpoint::ClusterDecide, payload)
            .map_err(|source| ClusterError::ClientUnavailable { source })?;

        let matched = response.body.get("match").and_then(|m| m.as_u64()).map(|id| id as usize);
        match matched {
            Some(node_id) if node_id < nodes.len() => {
                nodes[node_id].members.push(kf);
                assignment.insert(kf, node_id);
            }
            Some(bad_id) => {
                log::warn!(
                    "cluster decision for keyframe {kf} matched unknown node {bad_id}; creating a new node"
                );
                let node_id = nodes.len();
                nodes.push(ScreenNode {
                    node_id,
                    description: node_description(&screen.vh, kf),
                    representative: kf,
                    members: vec![kf],
                });
                assignment.insert(kf, node_id);
            }
            None => {
                let description = response.body["new"]
                    .as_str()
                    .map(String::from)
                    .unwrap_or_else(|| node_description(&screen.vh, kf));
                let node_id = nodes.len();
                nodes.push(ScreenNode {
                    node_id,
                    description,
                    representative: kf,
                    members: vec![kf],
                });
                assignment.insert(kf, node_id);
            }
        }
    }
    Ok(ClusterAssignment { method: ClusterMethod::Model, nodes, assignment })
}

/// How well a predicted assignment matches a reference partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    /// Fraction of keyframe pairs on which the two partitions agree
    /// (together in both, or apart in both). 1.0 when fewer than two
    /// keyframes exist.
    pub rand_index: f64,
    /// True iff the partitions are identical up to relabeling.
    pub exact: bool,
}

/// Score a predicted assignment against a reference keyframe → label map.
pub fn assignment_quality(
    pred: &ClusterAssignment,
    reference: &BTreeMap<usize, usize>,
) -> Result<ClusterQuality, ClusterError> {
    let pred_keys: Vec<usize> = pred.assignment.keys().copied().collect();
    let ref_keys: Vec<usize> = reference.keys().copied().collect();
    if pred_keys != ref_keys {
        return Err(ClusterError::UniverseMismatch {
            reason: format!(
                "prediction covers {} keyframes, reference covers {}",
                pred_keys.len(),
                ref_keys.len()
            ),
        });
    }

    let n = pred_keys.len();
    let mut agree = 0u64;
    let mut total = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (pred_keys[i], pred_keys[j]);
            let together_pred = pred.assignment[&a] == pred.assignment[&b];
            let together_ref = reference[&a] == reference[&b];
            total += 1;
            if together_pred == together_ref {
                agree += 1;
            }
        }
    }
    let rand_index = if total == 0 { 1.0 } else { agree as f64 / total as f64 };

    // Exactness: the pred → ref label relation must be a bijection.
    let mut forward = BTreeMap::new();
    let mut backward = BTreeMap::new();
    let mut exact = true;
    for &kf in &pred_keys {
        let (p, r) = (pred.assignment[&kf], reference[&kf]);
        if *forward.entry(p).or_insert(r) != r || *backward.entry(r).or_insert(p) != p {
            exact = false;
            break;
        }
    }
    Ok(ClusterQuality { rand_index, exact })
}

/// Write an assignment as pretty JSON (`clusters.json`).
pub fn write_clusters(path: &Path, clusters: &ClusterAssignment) -> Result<(), ClusterError> {
    let mut text = serde_json::to_string_pretty(clusters).expect("cluster docs serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| ClusterError::Io { path: path.into(), source })
}

/// Read and validate a `clusters.json`.
pub fn read_clusters(path: &Path) -> Result<ClusterAssignment, ClusterError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|source| ClusterError::Io { path: path.into(), source })?;
    let clusters: ClusterAssignment = serde_json::from_str(&raw)
        .map_err(|e| ClusterError::MalformedDoc { reason: e.to_string() })?;
    clusters.validate()?;
    Ok(clusters)
}
