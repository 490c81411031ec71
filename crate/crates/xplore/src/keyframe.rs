//! Action-aware keyframe extraction via luminance differencing.
//!
//! Sampling a recording at a fixed rate wastes most of its frames: between
//! actions the screen is static, and during an animation every frame is
//! half-transitioned garbage. This module instead finds the *bursts* of
//! change caused by actions and keeps one settled frame on each side of
//! every burst — at most two keyframes per action.
//!
//! The change signal is the Y-Diff series: for adjacent frames, the mean
//! absolute luminance difference normalised to `[0, 1]`:
//!
//! ```text
//! values[i] = sum_pixels |Y[i+1] - Y[i]|  /  (255 * width * height)
//! ```
//!
//! Segmentation runs a hysteresis state machine over the series. Two
//! thresholds avoid flicker-induced splits during animations: a burst opens
//! only when a value exceeds `theta_high` while the machine is settled, and
//! it closes only after `min_static` consecutive values at or below
//! `theta_low`. Values in the gray zone `(theta_low, theta_high]` never open
//! a burst but do keep an open one alive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FrameSequence;

/// Errors from Y-Diff computation and keyframe extraction.
#[derive(Debug, Error)]
pub enum KeyframeError {
    /// Differencing needs at least two frames.
    #[error("too few frames: need at least 2, got {got}")]
    TooFewFrames { got: usize },

    /// A Y-Diff value outside `[0, 1]`.
    #[error("y-diff value out of range at index {index}: {value}")]
    ValueOutOfRange { index: usize, value: f64 },

    /// Segmenter thresholds that make no sense.
    #[error("bad segmenter config: {reason}")]
    BadConfig { reason: String },

    /// A keyframe index past the end of the recording.
    #[error("keyframe index {index} out of range for {frames} frames")]
    IndexOutOfRange { index: usize, frames: usize },
}

/// Normalised per-boundary change values; `values()[i]` measures the change
/// between frames `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct YDiffSeries {
    values: Vec<f64>,
}

impl YDiffSeries {
    /// Wrap a raw series, checking every value lies in `[0, 1]`.
    pub fn new(values: Vec<f64>) -> Result<Self, KeyframeError> {
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(KeyframeError::ValueOutOfRange { index, value });
            }
        }
        Ok(YDiffSeries { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Hysteresis thresholds for action segmentation. Construct via [`SegmenterConfig::new`]
/// (or take the defaults), which enforces `0 <= theta_low <= theta_high <= 1`
/// and `min_static >= 1`; the fields are private so a held config is always valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    theta_high: f64,
    theta_low: f64,
    min_static: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            theta_high: 0.01,
            theta_low: 0.003,
            min_static: 2,
        }
    }
}

impl SegmenterConfig {
    pub fn new(theta_high: f64, theta_low: f64, min_static: usize) -> Result<Self, KeyframeError> {
        let cfg = SegmenterConfig { theta_high, theta_low, min_static };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), KeyframeError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v) && !v.is_nan();
        if !in_unit(self.theta_low) || !in_unit(self.theta_high) || self.theta_low > self.theta_high
        {
            return Err(KeyframeError::BadConfig {
                reason: format!(
                    "need 0 <= theta_low <= theta_high <= 1, got low={} high={}",
                    self.theta_low, self.theta_high
                ),
            });
        }
        if self.min_static == 0 {
            return Err(KeyframeError::BadConfig {
                reason: "min_static must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn theta_high(&self) -> f64 {
        self.theta_high
    }

    pub fn theta_low(&self) -> f64 {
        self.theta_low
    }

    pub fn min_static(&self) -> usize {
        self.min_static
    }
}

/// One detected action: the burst of change and the settled frames around it.
///
/// `change_start..=change_end` index the Y-Diff series (boundary `i` sits
/// between frames `i` and `i + 1`); the keyframes index frames. Except for a
/// burst that opens on the very first boundary or runs off the end of the
/// recording, `pre_keyframe < change_start <= change_end < post_keyframe`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSegment {
    #[serde(rename = "pre")]
    pub pre_keyframe: usize,
    pub change_start: usize,
    pub change_end: usize,
    #[serde(rename = "post")]
    pub post_keyframe: usize,
}

/// Compute the Y-Diff series of a recording.
///
/// Sums are accumulated in integers, so the result is exact up to the final
/// division. Needs at least two frames.
pub fn compute_ydiff(seq: &FrameSequence) -> Result<YDiffSeries, KeyframeError> {
    if seq.len() < 2 {
        return Err(KeyframeError::TooFewFrames { got: seq.len() });
    }
    let denom = 255u64 * u64::from(seq.manifest.width) * u64::from(seq.manifest.height);
    let mut values = Vec::with_capacity(seq.len() - 1);
    for pair in seq.planes().windows(2) {
        let (a, b) = (pair[0].samples(), pair[1].samples());
        let sum: u64 = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| u64::from(x.abs_diff(y)))
            .sum();
        values.push(sum as f64 / denom as f64);
    }
    YDiffSeries::new(values)
}

/// Segment a Y-Diff series into action bursts with hysteresis.
///
/// The machine starts settled (the sequence start counts as a static run).
/// A burst opens at the first value above `theta_high` and closes at the
/// last value above `theta_low` before `min_static` consecutive values at or
/// below `theta_low`. The pre keyframe is the frame before the burst opens;
/// the post keyframe is the frame right after it closes.
///
/// Degenerate inputs get explicit policies: a burst opening on boundary 0
/// takes frame 0 as its pre keyframe (there is no settled frame to offer),
/// and a burst still open at the end of the series closes at its last active
/// boundary with the final frame as its post keyframe.
pub fn segment_actions(diffs: &YDiffSeries, cfg: &SegmenterConfig) -> Vec<ActionSegment> {
    enum State {
        Settled,
        Active { start: usize, last_active: usize },
    }

    let close = |start: usize, last_active: usize, post: usize| ActionSegment {
        pre_keyframe: start.saturating_sub(1),
        change_start: start,
        change_end: last_active,
        post_keyframe: post,
    };

    let mut segments = Vec::new();
    let mut state = State::Settled;
    let mut settle_run = 0usize;

    for (i, &v) in diffs.values().iter().enumerate() {
        match state {
            State::Settled => {
                if v > cfg.theta_high {
                    state = State::Active { start: i, last_active: i };
                    settle_run = 0;
                }
            }
            State::Active { start, last_active } => {
                if v > cfg.theta_low {
                    state = State::Active { start, last_active: i };
                    settle_run = 0;
                } else {
                    settle_run += 1;
                    if settle_run >= cfg.min_static {
                        segments.push(close(start, last_active, last_active + 1));
                        state = State::Settled;
                        settle_run = 0;
                    }
                }
            }
        }
    }
    if let State::Active { start, last_active } = state {
        // Ran off the end before settling: the final frame stands in as the
        // post keyframe.
        segments.push(close(start, last_active, diffs.len()));
    }
    segments
}

/// The deduplicated, sorted union of pre/post keyframes over all segments,
/// bounds-checked against the recording.
pub fn extract_keyframes(
    seq: &FrameSequence,
    segments: &[ActionSegment],
) -> Result<Vec<usize>, KeyframeError> {
    let mut set = std::collections::BTreeSet::new();
    for seg in segments {
        set.insert(seg.pre_keyframe);
        set.insert(seg.post_keyframe);
    }
    let frames = seq.len();
    for &index in &set {
        if index >= frames {
            return Err(KeyframeError::IndexOutOfRange { index, frames });
        }
    }
    Ok(set.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FrameManifest, LumaPlane};
    use std::path::PathBuf;
    use std::sync::Arc;

    fn seq_of(planes: Vec<LumaPlane>) -> FrameSequence {
        let (w, h) = (planes[0].width(), planes[0].height());
        let manifest = FrameManifest {
            source_id: "t".into(),
            fps: 1.0,
            width: w,
            height: h,
            frame_paths: (0..planes.len()).map(|i| PathBuf::from(format!("{i}.pgm"))).collect(),
        };
        FrameSequence::from_planes(manifest, planes.into_iter().map(Arc::new).collect()).unwrap()
    }

    fn flat(w: u32, h: u32, v: u8) -> LumaPlane {
        LumaPlane::new(w, h, vec![v; (w * h) as usize]).unwrap()
    }

    fn series(values: &[f64]) -> YDiffSeries {
        YDiffSeries::new(values.to_vec()).unwrap()
    }

    #[test]
    fn identical_frames_have_zero_diff() {
        let seq = seq_of(vec![flat(4, 4, 100), flat(4, 4, 100), flat(4, 4, 100)]);
        assert_eq!(compute_ydiff(&seq).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn single_pixel_change_is_normalised() {
        // One of 16 pixels jumps by 255: 255 / (255 * 16) = 0.0625.
        let mut b = vec![0u8; 16];
        b[5] = 255;
        let seq = seq_of(vec![flat(4, 4, 0), LumaPlane::new(4, 4, b).unwrap()]);
        assert_eq!(compute_ydiff(&seq).unwrap().values(), &[0.0625]);
    }

    #[test]
    fn black_to_white_is_exactly_one() {
        let seq = seq_of(vec![flat(2, 2, 0), flat(2, 2, 255)]);
        assert_eq!(compute_ydiff(&seq).unwrap().values(), &[1.0]);
    }

    #[test]
    fn one_frame_is_too_few() {
        let seq = seq_of(vec![flat(2, 2, 0)]);
        assert!(matches!(
            compute_ydiff(&seq),
            Err(KeyframeError::TooFewFrames { got: 1 })
        ));
    }

    #[test]
    fn ydiff_series_rejects_out_of_range() {
        assert!(YDiffSeries::new(vec![0.0, 1.1]).is_err());
        assert!(YDiffSeries::new(vec![-0.1]).is_err());
        assert!(YDiffSeries::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn worked_segmentation_example() {
        // Boundaries: two static, two active, two static. The burst covers
        // diffs 2..=3; the settled frames around it are 1 and 4.
        let segs = segment_actions(&series(&[0.0, 0.0, 0.5, 0.5, 0.0, 0.0]), &SegmenterConfig::default());
        assert_eq!(
            segs,
            vec![ActionSegment {
                pre_keyframe: 1,
                change_start: 2,
                change_end: 3,
                post_keyframe: 4,
            }]
        );
    }

    #[test]
    fn constant_video_yields_no_segments() {
        let segs = segment_actions(&series(&[0.0; 8]), &SegmenterConfig::default());
        assert!(segs.is_empty());
    }

    #[test]
    fn two_bursts_with_enough_separation() {
        let segs = segment_actions(
            &series(&[0.0, 0.0, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0]),
            &SegmenterConfig::default(),
        );
        assert_eq!(segs.len(), 2);
        assert_eq!((segs[0].change_start, segs[0].change_end), (2, 2));
        assert_eq!((segs[0].pre_keyframe, segs[0].post_keyframe), (1, 3));
        assert_eq!((segs[1].change_start, segs[1].change_end), (5, 6));
        assert_eq!((segs[1].pre_keyframe, segs[1].post_keyframe), (4, 7));
    }

    #[test]
    fn short_lull_does_not_split_a_burst() {
        // A single low boundary inside the burst is below min_static = 2, so
        // the burst continues through it.
        let segs = segment_actions(
            &series(&[0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.0]),
            &SegmenterConfig::default(),
        );
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].change_start, segs[0].change_end), (2, 4));
        assert_eq!((segs[0].pre_keyframe, segs[0].post_keyframe), (1, 5));
    }

    #[test]
    fn gray_zone_never_opens_but_does_extend() {
        let cfg = SegmenterConfig::default(); // low 0.003, high 0.01
        // Settled machine ignores gray values entirely.
        assert!(segment_actions(&series(&[0.0, 0.005, 0.006, 0.0]), &cfg).is_empty());
        // An open burst is kept alive by a gray value and closes after it.
        let segs = segment_actions(&series(&[0.0, 0.0, 0.5, 0.005, 0.0, 0.0]), &cfg);
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].change_start, segs[0].change_end), (2, 3));
        assert_eq!(segs[0].post_keyframe, 4);
    }

    #[test]
    fn burst_open_at_end_closes_on_final_frame() {
        // Burst opens at diff 2 and the series ends before min_static lows
        // accumulate. Post keyframe falls back to the last frame (index 4,
        // since 4 boundaries mean 5 frames).
        let segs = segment_actions(&series(&[0.0, 0.0, 0.5, 0.0]), &SegmenterConfig::default());
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].change_start, segs[0].change_end), (2, 2));
        assert_eq!(segs[0].post_keyframe, 4);
    }

    #[test]
    fn burst_opening_on_first_boundary_takes_frame_zero() {
        let segs = segment_actions(&series(&[0.5, 0.0, 0.0]), &SegmenterConfig::default());
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].pre_keyframe, 0);
        assert_eq!((segs[0].change_start, segs[0].change_end), (0, 0));
        assert_eq!(segs[0].post_keyframe, 1);
    }

    #[test]
    fn sequence_start_counts_as_settled() {
        // Only one low value before the burst — fewer than min_static — but
        // the machine starts settled, so the burst still opens.
        let segs = segment_actions(&series(&[0.0, 0.5, 0.0, 0.0]), &SegmenterConfig::default());
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].pre_keyframe, segs[0].change_start), (0, 1));
    }

    #[test]
    fn config_validation() {
        assert!(SegmenterConfig::new(0.01, 0.003, 2).is_ok());
        assert!(SegmenterConfig::new(0.003, 0.01, 2).is_err()); // low > high
        assert!(SegmenterConfig::new(0.01, 0.003, 0).is_err()); // min_static 0
        assert!(SegmenterConfig::new(1.5, 0.0, 1).is_err()); // out of unit range
    }

    #[test]
    fn keyframes_are_deduped_and_sorted() {
        let seq = seq_of(vec![flat(2, 2, 0); 10]);
        let segments = vec![
            ActionSegment { pre_keyframe: 1, change_start: 2, change_end: 3, post_keyframe: 4 },
            ActionSegment { pre_keyframe: 4, change_start: 5, change_end: 6, post_keyframe: 7 },
        ];
        assert_eq!(extract_keyframes(&seq, &segments).unwrap(), vec![1, 4, 7]);
    }

    #[test]
    fn keyframe_out_of_range_is_rejected() {
        let seq = seq_of(vec![flat(2, 2, 0); 3]);
        let segments = vec![ActionSegment {
            pre_keyframe: 1,
            change_start: 2,
            change_end: 2,
            post_keyframe: 3,
        }];
        assert!(matches!(
            extract_keyframes(&seq, &segments),
            Err(KeyframeError::IndexOutOfRange { index: 3, frames: 3 })
        ));
    }

    #[test]
    fn alternating_blocks_segment_exactly() {
        // Build K alternating (static, burst) blocks and check the machine
        // recovers every constructed boundary exactly.
        for k in 1..6 {
            let mut values = Vec::new();
            let mut expected = Vec::new();
            for b in 0..k {
                let static_len = 3 + (b % 2);
                let burst_len = 1 + (b % 3);
                values.extend(std::iter::repeat(0.0).take(static_len));
                let start = values.len();
                values.extend(std::iter::repeat(0.25).take(burst_len));
                let end = values.len() - 1;
                expected.push((start, end));
            }
            values.extend([0.0, 0.0, 0.0]);
            let segs = segment_actions(&series(&values), &SegmenterConfig::default());
            assert_eq!(segs.len(), k);
            for (seg, (start, end)) in segs.iter().zip(expected) {
                assert_eq!(seg.change_start, start);
                assert_eq!(seg.change_end, end);
                assert_eq!(seg.pre_keyframe, start - 1);
                assert_eq!(seg.post_keyframe, end + 1);
            }
        }
    }
}
