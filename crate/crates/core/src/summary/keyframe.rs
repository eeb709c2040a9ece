use crate::error::{Error, Result};

use super::frame::FrameSequence;

/// How keyframes are picked out of a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyframePolicy {
    /// Every `interval`-th frame, starting at frame 0.
    FixedInterval { interval: usize },
    /// A frame whose mean absolute intensity change (scaled to `[0, 1]`)
    /// against the last selected keyframe exceeds `threshold`.
    FrameDifference { threshold: f64 },
}

impl KeyframePolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::FixedInterval { interval: 0 } => {
                Err(Error::InvalidConfig("keyframe interval must be positive".into()))
            }
            Self::FrameDifference { threshold } if !(threshold > 0.0 && threshold.is_finite()) => {
                Err(Error::InvalidConfig(format!("keyframe threshold {threshold} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Mean absolute per-byte difference of two frames, divided by 255.
pub fn mean_abs_change(a: &[u8], b: &[u8]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let total: u64 = a.iter().zip(b).map(|(x, y)| x.abs_diff(*y) as u64).sum();
    total as f64 / (a.len() as f64 * 255.0)
}

/// Indices of the selected keyframes, ascending. Frame 0 is always selected.
pub fn extract_keyframes(seq: &FrameSequence, policy: KeyframePolicy) -> Result<Vec<usize>> {
    policy.validate()?;
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let frames = seq.frames();
    let selected = match policy {
        KeyframePolicy::FixedInterval { interval } => (0..frames.len()).step_by(interval).collect(),
        KeyframePolicy::FrameDifference { threshold } => {
            let mut selected = vec![0];
            let mut last = 0;
            for t in 1..frames.len() {
                if mean_abs_change(&frames[last].pixels, &frames[t].pixels) > threshold {
                    selected.push(t);
                    last = t;
                }
            }
            selected
        }
    };
    Ok(selected)
}
