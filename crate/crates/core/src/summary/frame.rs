use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BoundingBox;

/// A labelled region painted onto a synthetic frame.
///
/// Real decoded video carries no labels; the synthetic provider reads them
/// to decide which class a patch depicts.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRegion {
    pub label: u32,
    pub bbox: BoundingBox,
}

/// One decoded frame: an 8-bit `height x width x 3` intensity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: String,
    pub timestamp: f64,
    pub pixels: Vec<u8>,
    pub regions: Vec<LabeledRegion>,
}

impl Frame {
    pub fn new(frame_id: impl Into<String>, timestamp: f64, pixels: Vec<u8>) -> Self {
        Self { frame_id: frame_id.into(), timestamp, pixels, regions: Vec::new() }
    }

    pub fn with_regions(mut self, regions: Vec<LabeledRegion>) -> Self {
        self.regions = regions;
        self
    }

    /// Class label at a pixel position; the last region containing it wins, 0 elsewhere.
    pub fn label_at(&self, x: f64, y: f64) -> u32 {
        self.regions.iter().rev().find(|r| r.bbox.contains_point(x, y)).map_or(0, |r| r.label)
    }
}

/// Decoded frames of one video, in presentation order.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    video_id: String,
    height: usize,
    width: usize,
    frames: Vec<Frame>,
}

impl FrameSequence {
    pub fn new(video_id: impl Into<String>, height: usize, width: usize, frames: Vec<Frame>) -> Result<Self> {
        let expected = height * width * 3;
        for (i, f) in frames.iter().enumerate() {
            if f.pixels.len() != expected {
                return Err(Error::InvalidSequence(format!(
                    "frame {i} has {} bytes, expected {expected}",
                    f.pixels.len()
                )));
            }
            if !f.timestamp.is_finite() {
                return Err(Error::InvalidSequence(format!("frame {i} has a non-finite timestamp")));
            }
            if i > 0 && f.timestamp <= frames[i - 1].timestamp {
                return Err(Error::InvalidSequence(format!("timestamps not strictly increasing at frame {i}")));
            }
        }
        let mut ids: Vec<&str> = frames.iter().map(|f| f.frame_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidSequence(format!("duplicate frame id {}", w[0])));
        }
        Ok(Self { video_id: video_id.into(), height, width, frames })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// One frame of a frame JSONL corpus.
///
/// `{"video_id", "frame_id", "timestamp", "height", "width", "pixels": [u8; H*W*3], "regions": [{"label", "box"}]}`
/// with `regions` optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLine {
    pub video_id: String,
    pub frame_id: String,
    pub timestamp: f64,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLine {
    pub label: u32,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// Groups frame lines into one sequence per video, in order of first appearance.
pub fn read_frame_sequences<R: BufRead>(reader: R) -> Result<Vec<FrameSequence>> {
    let mut videos: Vec<(String, usize, usize, Vec<Frame>)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| Error::Parse { line: i + 1, message };
        let f: FrameLine = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        let frame = Frame::new(f.frame_id, f.timestamp, f.pixels)
            .with_regions(f.regions.into_iter().map(|r| LabeledRegion { label: r.label, bbox: r.bbox }).collect());
        match videos.iter_mut().find(|v| v.0 == f.video_id) {
            Some(v) if (v.1, v.2) != (f.height, f.width) => {
                return Err(parse(format!(
                    "frame size {}x{} differs from earlier frames of {}",
                    f.height, f.width, v.0
                )));
            }
            Some(v) => v.3.push(frame),
            None => videos.push((f.video_id, f.height, f.width, vec![frame])),
        }
    }
    videos.into_iter().map(|(id, h, w, frames)| FrameSequence::new(id, h, w, frames)).collect()
}

pub fn read_frame_sequences_file(path: &Path) -> Result<Vec<FrameSequence>> {
    read_frame_sequences(BufReader::new(File::open(path)?))
}

impl FrameSequence {
    pub fn to_lines(&self) -> Vec<FrameLine> {
        self.frames
            .iter()
            .map(|f| FrameLine {
                video_id: self.video_id.clone(),
                frame_id: f.frame_id.clone(),
                timestamp: f.timestamp,
                height: self.height,
                width: self.width,
                pixels: f.pixels.clone(),
                regions: f.regions.iter().map(|r| RegionLine { label: r.label, bbox: r.bbox }).collect(),
            })
            .collect()
    }
}
