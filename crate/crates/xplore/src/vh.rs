//! View hierarchies: parsing, simplification, and similarity.
//!
//! A view hierarchy ("VH") is the structural dump of a GUI screen — a tree
//! of nodes with class names, resource ids, text, bounds, and clickability.
//! The wire form is JSON:
//!
//! ```json
//! {
//!   "screen": [144, 256],
//!   "root": {
//!     "class": "Screen", "id": "screen_0", "text": null,
//!     "bounds": [0, 0, 144, 256], "clickable": false,
//!     "children": [ ... ]
//!   }
//! }
//! ```
//!
//! Raw dumps are deep and noisy; [`simplify`] flattens one to the compact
//! line-per-node form that clustering and model prompts consume. Similarity
//! between screens comes in two flavours: structural (multiset Jaccard over
//! `(class, resource_id)` signatures) and visual (one minus the normalised
//! mean absolute luminance difference).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::LumaPlane;

/// Maximum characters of node text kept by [`simplify`].
pub const TEXT_TRUNCATE_CHARS: usize = 32;

/// Errors from hierarchy parsing and comparison.
#[derive(Debug, Error)]
pub enum VhError {
    /// Not parseable as JSON at all.
    #[error("malformed view hierarchy: {reason}")]
    MalformedVh { reason: String },

    /// Parsed, but violates the schema (reversed bounds, zero screen, a
    /// simplified line that does not match the line format).
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },

    /// Two planes being compared have different dimensions.
    #[error("dimension mismatch: {a:?} vs {b:?}")]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },
}

/// A screen-space rectangle, `[left, top, right, bottom]` in pixels with
/// `left <= right` and `top <= bottom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bounds {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Bounds {
    pub fn new(left: i32, top: i32, right: i32, bottom: i32) -> Result<Self, VhError> {
        if left > right || top > bottom {
            return Err(VhError::SchemaViolation {
                path: "bounds".into(),
                reason: format!("reversed bounds [{left}, {top}, {right}, {bottom}]"),
            });
        }
        Ok(Bounds { left, top, right, bottom })
    }

    pub fn width(&self) -> i64 {
        i64::from(self.right) - i64::from(self.left)
    }

    pub fn height(&self) -> i64 {
        i64::from(self.bottom) - i64::from(self.top)
    }

    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    /// Intersection area with another rectangle (zero when disjoint).
    pub fn intersection_area(&self, other: &Bounds) -> i64 {
        let w = (i64::from(self.right.min(other.right)) - i64::from(self.left.max(other.left))).max(0);
        let h = (i64::from(self.bottom.min(other.bottom)) - i64::from(self.top.max(other.top))).max(0);
        w * h
    }

    /// Intersection over union. Two zero-area rectangles have IoU 0.
    pub fn iou(&self, other: &Bounds) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

// Bounds travel as a plain 4-array on the wire.
impl Serialize for Bounds {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.left, self.top, self.right, self.bottom].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Bounds {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [left, top, right, bottom] = <[i32; 4]>::deserialize(d)?;
        Bounds::new(left, top, right, bottom).map_err(serde::de::Error::custom)
    }
}

/// One node of a raw view hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VhNode {
    #[serde(rename = "class")]
    pub class_name: String,
    #[serde(rename = "id", default)]
    pub resource_id: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
    pub bounds: Bounds,
    #[serde(default)]
    pub clickable: bool,
    #[serde(default)]
    pub children: Vec<VhNode>,
}

impl VhNode {
    /// Leaf constructor; add children by pushing into `children`.
    pub fn new(class_name: &str, bounds: Bounds) -> Self {
        VhNode {
            class_name: class_name.to_string(),
            resource_id: None,
            text: None,
            bounds,
            clickable: false,
            children: Vec::new(),
        }
    }

    fn node_count(&self) -> usize {
        1 + self.children.iter().map(VhNode::node_count).sum::<usize>()
    }
}

/// A full screen dump: screen dimensions plus the root node.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewHierarchy {
    pub screen_width: u32,
    pub screen_height: u32,
    pub root: VhNode,
}

#[derive(Serialize, Deserialize)]
struct VhDoc {
    screen: (u32, u32),
    root: VhNode,
}

impl ViewHierarchy {
    pub fn new(screen_width: u32, screen_height: u32, root: VhNode) -> Result<Self, VhError> {
        let vh = ViewHierarchy { screen_width, screen_height, root };
        vh.validate()?;
        Ok(vh)
    }

    fn validate(&self) -> Result<(), VhError> {
        if self.screen_width == 0 || self.screen_height == 0 {
            return Err(VhError::SchemaViolation {
                path: "screen".into(),
                reason: "screen dimensions must be positive".into(),
            });
        }
        Ok(())
    }

    /// Number of nodes in the tree.
    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Canonical one-line JSON form. Serialize → parse → serialize is
    /// byte-identical: key order is fixed and no formatting varies.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(&VhDoc {
            screen: (self.screen_width, self.screen_height),
            root: self.root.clone(),
        })
        .expect("view hierarchies always serialize")
    }

    /// The canonical form as a JSON value (for embedding in other documents).
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(VhDoc {
            screen: (self.screen_width, self.screen_height),
            root: self.root.clone(),
        })
        .expect("view hierarchies always serialize")
    }
}

impl Serialize for ViewHierarchy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        VhDoc { screen: (self.screen_width, self.screen_height), root: self.root.clone() }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ViewHierarchy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = VhDoc::deserialize(deserializer)?;
        ViewHierarchy::new(doc.screen.0, doc.screen.1, doc.root).map_err(serde::de::Error::custom)
    }
}

/// Parse a view hierarchy document.
pub fn parse_vh(doc: &str) -> Result<ViewHierarchy, VhError> {
    let parsed: VhDoc = serde_json::from_str(doc).map_err(|e| {
        // Bounds violations surface through serde as custom errors; keep
        // them distinguishable from plain syntax problems.
        if e.is_data() && e.to_string().contains("schema violation") {
            VhError::SchemaViolation { path: "bounds".into(), reason: e.to_string() }
        } else {
            VhError::MalformedVh { reason: e.to_string() }
        }
    })?;
    ViewHierarchy::new(parsed.screen.0, parsed.screen.1, parsed.root)
}

/// Parse a view hierarchy from an in-memory JSON value.
pub fn parse_vh_value(value: &serde_json::Value) -> Result<ViewHierarchy, VhError> {
    parse_vh(&value.to_string())
}

/// The flattened form consumed by clustering and model prompts: one line per
/// retained node, `depth|class_name|resource_id|text|clickable`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplifiedVh {
    lines: Vec<String>,
}

/// Fields of one simplified line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimplifiedLine {
    pub depth: usize,
    pub class_name: String,
    pub resource_id: String,
    pub text: String,
    pub clickable: bool,
}

impl SimplifiedVh {
    /// Wrap pre-built lines (e.g. from a model backend), validating each
    /// against the line format.
    pub fn from_lines(lines: Vec<String>) -> Result<Self, VhError> {
        for (i, line) in lines.iter().enumerate() {
            parse_line(line).map_err(|reason| VhError::SchemaViolation {
                path: format!("line {i}"),
                reason,
            })?;
        }
        Ok(SimplifiedVh { lines })
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Parsed fields per line. Lines are validated on construction, so this
    /// cannot fail.
    pub fn parsed(&self) -> Vec<SimplifiedLine> {
        self.lines
            .iter()
            .map(|l| parse_line(l).expect("lines validated on construction"))
            .collect()
    }

    /// The `(class_name, resource_id)` signature of every line.
    pub fn signatures(&self) -> Vec<(String, String)> {
        self.parsed()
            .into_iter()
            .map(|l| (l.class_name, l.resource_id))
            .collect()
    }
}

/// Split one simplified line back into fields. The first three fields and
/// the last cannot contain `|` (depth is numeric, class/id are sanitised,
/// clickable is a bool), so any interior `|` belongs to the text field —
/// which [`simplify`] sanitises anyway; this parser is just defensive.
fn parse_line(line: &str) -> Result<SimplifiedLine, String> {
    let mut head = line.splitn(4, '|');
    let depth = head
        .next()
        .ok_or("empty line")?
        .parse::<usize>()
        .map_err(|e| format!("bad depth: {e}"))?;
    let class_name = head.next().ok_or("missing class field")?.to_string();
    let resource_id = head.next().ok_or("missing id field")?.to_string();
    let tail = head.next().ok_or("missing text/clickable fields")?;
    let (text, clickable) = tail.rsplit_once('|').ok_or("missing clickable field")?;
    let clickable = clickable
        .parse::<bool>()
        .map_err(|e| format!("bad clickable flag: {e}"))?;
    if class_name.is_empty() {
        return Err("class field must be non-empty".into());
    }
    Ok(SimplifiedLine {
        depth,
        class_name,
        resource_id: resource_id.to_string(),
        text: text.to_string(),
        clickable,
    })
}

fn sanitize(s: &str) -> String {
    s.replace(['|', '\n', '\r'], " ")
}

fn truncate_chars(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// Flatten a hierarchy to its simplified line form.
///
/// Two cleanup passes run before emission:
///
/// 1. every node with zero-area bounds is dropped along with its subtree
///    (invisible containers hide their content too);
/// 2. chains of single-child containers with no resource id, no text, and no
///    clickability collapse into their child, which takes the container's
///    depth.
///
/// Text is sanitised (`|` and newlines become spaces) and truncated to
/// [`TEXT_TRUNCATE_CHARS`] characters.
pub fn simplify(vh: &ViewHierarchy) -> SimplifiedVh {
    fn prune(node: &VhNode) -> Option<VhNode> {
        if node.bounds.area() == 0 {
            return None;
        }
        let mut kept = node.clone();
        kept.children = node.children.iter().filter_map(prune).collect();
        Some(kept)
    }

    fn lacks_identity(node: &VhNode) -> bool {
        node.resource_id.as_deref().map_or(true, str::is_empty)
            && node.text.as_deref().map_or(true, str::is_empty)
            && !node.clickable
    }

    fn emit(node: &VhNode, depth: usize, out: &mut Vec<String>) {
        if node.children.len() == 1 && lacks_identity(node) {
            emit(&node.children[0], depth, out);
            return;
        }
        let text = truncate_chars(
            &sanitize(node.text.as_deref().unwrap_or("")),
            TEXT_TRUNCATE_CHARS,
        );
        out.push(format!(
            "{}|{}|{}|{}|{}",
            depth,
            sanitize(&node.class_name),
            sanitize(node.resource_id.as_deref().unwrap_or("")),
            text,
            node.clickable
        ));
        for child in &node.children {
            emit(child, depth + 1, out);
        }
    }

    let mut lines = Vec::new();
    if let Some(clean) = prune(&vh.root) {
        emit(&clean, 0, &mut lines);
    }
    SimplifiedVh { lines }
}

/// Multiset Jaccard similarity: sum of per-key minimum counts over sum of
/// per-key maximum counts. Two empty multisets are identical, hence 1.0.
fn multiset_jaccard<T: Ord>(a: Vec<T>, b: Vec<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let mut counts: BTreeMap<T, (u64, u64)> = BTreeMap::new();
    for x in a {
        counts.entry(x).or_default().0 += 1;
    }
    for x in b {
        counts.entry(x).or_default().1 += 1;
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (ca, cb) in counts.values() {
        inter += ca.min(cb);
        union += ca.max(cb);
    }
    inter as f64 / union as f64
}

/// Structural similarity of two raw hierarchies: multiset Jaccard over the
/// `(class_name, resource_id)` signatures of every node in each tree.
pub fn vh_similarity(a: &ViewHierarchy, b: &ViewHierarchy) -> f64 {
    fn collect(node: &VhNode, out: &mut Vec<(String, String)>) {
        out.push((
            node.class_name.clone(),
            node.resource_id.clone().unwrap_or_default(),
        ));
        for c in &node.children {
            collect(c, out);
        }
    }
    let mut sa = Vec::new();
    let mut sb = Vec::new();
    collect(&a.root, &mut sa);
    collect(&b.root, &mut sb);
    multiset_jaccard(sa, sb)
}

/// Structural similarity of two simplified hierarchies — the same Jaccard
/// kernel as [`vh_similarity`], over line signatures. Ground-truth dumps are
/// simplified and generated hierarchies arrive already simplified, so this
/// is the form clustering compares.
pub fn simplified_similarity(a: &SimplifiedVh, b: &SimplifiedVh) -> f64 {
    multiset_jaccard(a.signatures(), b.signatures())
}

/// Visual similarity of two screenshots: one minus the normalised mean
/// absolute luminance difference. Identical planes score 1.0; black vs
/// white scores 0.0.
pub fn screenshot_similarity(a: &LumaPlane, b: &LumaPlane) -> Result<f64, VhError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(VhError::DimensionMismatch {
            a: (a.width(), a.height()),
            b: (b.width(), b.height()),
        });
    }
    let sum: u64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| u64::from(x.abs_diff(y)))
        .sum();
    let denom = 255u64 * a.pixel_count() as u64;
    Ok(1.0 - sum as f64 / denom as f64)
}

/// A short human-readable label for a simplified screen: the texts of its
/// first few clickable elements, else its first class name. `None` for an
/// empty hierarchy.
pub fn describe(vh: &SimplifiedVh) -> Option<String> {
    let parsed = vh.parsed();
    let texts: Vec<&str> = parsed
        .iter()
        .filter(|l| l.clickable && !l.text.is_empty())
        .map(|l| l.text.as_str())
        .take(3)
        .collect();
    if !texts.is_empty() {
        return Some(texts.join(", "));
    }
    parsed.first().map(|l| l.class_name.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::LumaPlane;

    fn b(l: i32, t: i32, r: i32, bo: i32) -> Bounds {
        Bounds::new(l, t, r, bo).unwrap()
    }

    fn node(class: &str, id: Option<&str>, bounds: Bounds) -> VhNode {
        let mut n = VhNode::new(class, bounds);
        n.resource_id = id.map(String::from);
        n
    }

    fn hierarchy(root: VhNode) -> ViewHierarchy {
        ViewHierarchy::new(100, 200, root).unwrap()
    }

    #[test]
    fn parse_and_canonical_round_trip() {
        let doc = r#"{
            "screen": [100, 200],
            "root": {
                "class": "Frame", "id": "root", "text": null,
                "bounds": [0, 0, 100, 200], "clickable": false,
                "children": [
                    {"class": "Button", "id": "ok", "text": "OK",
                     "bounds": [10, 10, 60, 40], "clickable": true, "children": []}
                ]
            }
        }"#;
        let vh = parse_vh(doc).unwrap();
        assert_eq!(vh.node_count(), 2);
        let canon = vh.to_canonical_json();
        let vh2 = parse_vh(&canon).unwrap();
        assert_eq!(vh, vh2);
        assert_eq!(canon, vh2.to_canonical_json(), "canonical form must be stable");
    }

    #[test]
    fn bad_json_is_malformed() {
        assert!(matches!(parse_vh("{nope"), Err(VhError::MalformedVh { .. })));
    }

    #[test]
    fn reversed_bounds_violate_schema() {
        let doc = r#"{"screen": [10, 10], "root":
            {"class": "X", "bounds": [5, 0, 1, 10], "clickable": false, "children": []}}"#;
        assert!(matches!(parse_vh(doc), Err(VhError::SchemaViolation { .. })));
    }

    #[test]
    fn zero_screen_violates_schema() {
        let doc = r#"{"screen": [0, 10], "root":
            {"class": "X", "bounds": [0, 0, 1, 1], "clickable": false, "children": []}}"#;
        assert!(matches!(parse_vh(doc), Err(VhError::SchemaViolation { .. })));
    }

    #[test]
    fn single_visible_node_gives_one_line() {
        let mut n = node("Button", Some("go"), b(0, 0, 10, 10));
        n.text = Some("Go".into());
        n.clickable = true;
        let simple = simplify(&hierarchy(n));
        assert_eq!(simple.lines(), &["0|Button|go|Go|true".to_string()]);
    }

    #[test]
    fn container_chain_collapses_to_the_button() {
        let mut button = node("Button", Some("go"), b(0, 0, 10, 10));
        button.clickable = true;
        let mut inner = node("Frame", None, b(0, 0, 50, 50));
        inner.children.push(button);
        let mut outer = node("Layout", None, b(0, 0, 100, 100));
        outer.children.push(inner);
        let simple = simplify(&hierarchy(outer));
        assert_eq!(simple.lines(), &["0|Button|go||true".to_string()]);
    }

    #[test]
    fn zero_area_subtree_is_dropped() {
        let mut hidden = node("Frame", Some("gone"), b(5, 5, 5, 50));
        hidden.children.push(node("Button", Some("never"), b(0, 0, 10, 10)));
        let mut root = node("Layout", Some("root"), b(0, 0, 100, 100));
        root.children.push(hidden);
        root.children.push(node("Label", Some("hello"), b(0, 0, 30, 10)));
        let simple = simplify(&hierarchy(root));
        assert_eq!(
            simple.lines(),
            &[
                "0|Layout|root||false".to_string(),
                "1|Label|hello||false".to_string(),
            ]
        );
    }

    #[test]
    fn dropping_a_sibling_can_expose_a_collapsible_container() {
        // Container has two children but one is zero-area; after pruning it
        // has one child and no identity, so it collapses.
        let mut container = node("Frame", None, b(0, 0, 100, 100));
        container.children.push(node("Gone", None, b(0, 0, 0, 10)));
        container.children.push(node("Label", Some("x"), b(0, 0, 10, 10)));
        let simple = simplify(&hierarchy(container));
        assert_eq!(simple.lines(), &["0|Label|x||false".to_string()]);
    }

    #[test]
    fn text_is_truncated_and_sanitised() {
        let mut n = node("Label", None, b(0, 0, 10, 10));
        n.text = Some(format!("a|b\n{}", "x".repeat(100)));
        let simple = simplify(&hierarchy(n));
        let line = &simple.lines()[0];
        let parsed = parse_line(line).unwrap();
        assert_eq!(parsed.text.chars().count(), TEXT_TRUNCATE_CHARS);
        assert!(parsed.text.starts_with("a b "));
        assert!(!parsed.text.contains('|'));
    }

    #[test]
    fn from_lines_validates_format() {
        assert!(SimplifiedVh::from_lines(vec!["0|Button|go|Go|true".into()]).is_ok());
        assert!(SimplifiedVh::from_lines(vec!["not a line".into()]).is_err());
        assert!(SimplifiedVh::from_lines(vec!["x|Button|go|Go|true".into()]).is_err());
        assert!(SimplifiedVh::from_lines(vec!["0|Button|go|Go|maybe".into()]).is_err());
        assert!(SimplifiedVh::from_lines(vec!["0||go|Go|true".into()]).is_err());
    }

    #[test]
    fn multiset_jaccard_worked_example() {
        // {x, x, y} vs {x, y, z}: intersection 2, union 4.
        assert_eq!(multiset_jaccard(vec!["x", "x", "y"], vec!["x", "y", "z"]), 0.5);
    }

    #[test]
    fn jaccard_edges() {
        assert_eq!(multiset_jaccard::<&str>(vec![], vec![]), 1.0);
        assert_eq!(multiset_jaccard(vec!["a"], vec![]), 0.0);
        assert_eq!(multiset_jaccard(vec!["a", "b"], vec!["a", "b"]), 1.0);
        assert_eq!(multiset_jaccard(vec!["a"], vec!["b"]), 0.0);
    }

    #[test]
    fn vh_similarity_on_trees() {
        let mut root_a = node("Frame", Some("r"), b(0, 0, 100, 100));
        root_a.children.push(node("Button", Some("x"), b(0, 0, 10, 10)));
        root_a.children.push(node("Button", Some("x"), b(20, 0, 30, 10)));
        let mut root_b = node("Frame", Some("r"), b(0, 0, 100, 100));
        root_b.children.push(node("Button", Some("x"), b(0, 0, 10, 10)));
        root_b.children.push(node("Button", Some("y"), b(20, 0, 30, 10)));
        let (a, b_) = (hierarchy(root_a.clone()), hierarchy(root_b));
        // Signatures {r, x, x} vs {r, x, y}: intersection 2, union 4.
        assert_eq!(vh_similarity(&a, &b_), 0.5);
        assert_eq!(vh_similarity(&a, &hierarchy(root_a)), 1.0);
    }

    #[test]
    fn simplified_similarity_matches_kernel() {
        let a = SimplifiedVh::from_lines(vec![
            "0|Frame|r||false".into(),
            "1|Button|x||true".into(),
            "1|Button|x||true".into(),
        ])
        .unwrap();
        let b = SimplifiedVh::from_lines(vec![
            "0|Frame|r||false".into(),
            "1|Button|x||true".into(),
            "1|Button|z||true".into(),
        ])
        .unwrap();
        assert_eq!(simplified_similarity(&a, &b), 0.5);
        let empty = SimplifiedVh::from_lines(vec![]).unwrap();
        assert_eq!(simplified_similarity(&empty, &empty), 1.0);
    }

    #[test]
    fn screenshot_similarity_range() {
        let black = LumaPlane::new(2, 2, vec![0; 4]).unwrap();
        let white = LumaPlane::new(2, 2, vec![255; 4]).unwrap();
        assert_eq!(screenshot_similarity(&black, &black).unwrap(), 1.0);
        assert_eq!(screenshot_similarity(&black, &white).unwrap(), 0.0);
        let off = LumaPlane::new(2, 3, vec![0; 6]).unwrap();
        assert!(matches!(
            screenshot_similarity(&black, &off),
            Err(VhError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn iou_cases() {
        let a = b(0, 0, 10, 10);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&b(20, 20, 30, 30)), 0.0);
        // Half-overlapping squares: 50 / 150.
        let c = b(5, 0, 15, 10);
        assert!((a.iou(&c) - 1.0 / 3.0).abs() < 1e-12);
        // Degenerate rectangles.
        let line = b(0, 0, 0, 10);
        assert_eq!(line.iou(&line), 0.0);
    }

    #[test]
    fn describe_prefers_clickable_texts() {
        let vh = SimplifiedVh::from_lines(vec![
            "0|Frame|r|Title here|false".into(),
            "1|Button|a|Settings|true".into(),
            "1|Button|b|Profile|true".into(),
        ])
        .unwrap();
        assert_eq!(describe(&vh).unwrap(), "Settings, Profile");
        let bare = SimplifiedVh::from_lines(vec!["0|Frame|r||false".into()]).unwrap();
        assert_eq!(describe(&bare).unwrap(), "Frame");
        assert_eq!(describe(&SimplifiedVh::from_lines(vec![]).unwrap()), None);
    }
}
