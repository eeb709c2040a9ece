//! Second-stage frame scorers.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BoundingBox;

/// One stored patch of a candidate frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidatePatch {
    #[serde(skip)]
    pub patch_ref: u64,
    pub embedding: Vec<f64>,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, Copy)]
pub struct RerankRequest<'a> {
    pub video_id: &'a str,
    pub frame_id: &'a str,
    pub text: &'a str,
    /// Unit-norm query vector.
    pub query: &'a [f64],
    /// Every stored patch of the frame, ascending by handle.
    pub patches: &'a [CandidatePatch],
    /// Position in `patches` of the patch that fast search matched.
    pub representative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameScore {
    pub score: f64,
    /// Never empty.
    pub boxes: Vec<BoundingBox>,
}

pub trait RerankScorer: Send + Sync {
    fn score(&self, request: &RerankRequest<'_>) -> Result<FrameScore>;

    /// Whether distinct frames may be scored concurrently.
    fn is_concurrent(&self) -> bool {
        true
    }
}

/// Best exact dot product between the query and any patch of the frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceScorer;

impl RerankScorer for ReferenceScorer {
    fn score(&self, request: &RerankRequest<'_>) -> Result<FrameScore> {
        let mut best: Option<(f64, BoundingBox)> = None;
        for patch in request.patches {
            let s: f64 = request.query.iter().zip(&patch.embedding).map(|(a, b)| a * b).sum();
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, patch.bbox));
            }
        }
        let (score, bbox) = best.ok_or_else(|| Error::ScorerFailure {
            frame_id: request.frame_id.to_string(),
            reason: "frame has no patches".into(),
        })?;
        Ok(FrameScore { score, boxes: vec![bbox] })
    }
}

/// Same score for every frame; keeps the fast-search box.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantScorer {
    pub value: f64,
}

impl RerankScorer for ConstantScorer {
    fn score(&self, request: &RerankRequest<'_>) -> Result<FrameScore> {
        let patch = request.patches.get(request.representative).ok_or_else(|| Error::ScorerFailure {
            frame_id: request.frame_id.to_string(),
            reason: "representative patch missing".into(),
        })?;
        Ok(FrameScore { score: self.value, boxes: vec![patch.bbox] })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    frame_id: &'a str,
    text: &'a str,
    patches: &'a [CandidatePatch],
}

#[derive(Deserialize)]
struct WireResponse {
    l_s: f64,
    boxes: Vec<[f64; 4]>,
}

struct Session {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

/// Out-of-process scorer speaking one JSON object per line over stdin/stdout.
///
/// The command runs under `sh -c`, is started on first use and kept alive
/// for later requests. Requests are serialized through a single pipe.
pub struct ExternalScorer {
    command: String,
    session: Mutex<Option<Session>>,
}

impl std::fmt::Debug for ExternalScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalScorer").field("command", &self.command).finish()
    }
}

impl ExternalScorer {
    pub fn new(command: impl Into<String>) -> Self {
        Self { command: command.into(), session: Mutex::new(None) }
    }

    fn spawn(&self) -> std::io::Result<Session> {
        let mut child =
            Command::new("sh").arg("-c").arg(&self.command).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Session { child, stdin, stdout })
    }

    fn exchange(&self, request: &RerankRequest<'_>) -> std::result::Result<FrameScore, String> {
        let mut guard = self.session.lock().map_err(|_| "scorer lock poisoned".to_string())?;
        if guard.is_none() {
            *guard = Some(self.spawn().map_err(|e| format!("cannot start `{}`: {e}", self.command))?);
        }
        let session = guard.as_mut().expect("session started");
        let wire = WireRequest { frame_id: request.frame_id, text: request.text, patches: request.patches };
        let result = (|| {
            serde_json::to_writer(&mut session.stdin, &wire).map_err(|e| e.to_string())?;
            session.stdin.write_all(b"\n").map_err(|e| e.to_string())?;
            session.stdin.flush().map_err(|e| e.to_string())?;
            let mut line = String::new();
            if session.stdout.read_line(&mut line).map_err(|e| e.to_string())? == 0 {
                return Err("scorer closed its output".to_string());
            }
            let resp: WireResponse = serde_json::from_str(&line).map_err(|e| format!("bad response: {e}"))?;
            if !resp.l_s.is_finite() {
                return Err("non-finite l_s".to_string());
            }
            let boxes = resp
                .boxes
                .into_iter()
                .map(|b| BoundingBox::try_from(b).map_err(|e| e.to_string()))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if boxes.is_empty() {
                return Err("response has no boxes".to_string());
            }
            Ok(FrameScore { score: resp.l_s, boxes })
        })();
        if result.is_err() {
            // a broken pipe is not reused
            if let Some(mut s) = guard.take() {
                let _ = s.child.kill();
                let _ = s.child.wait();
            }
        }
        result
    }
}

impl RerankScorer for ExternalScorer {
    fn score(&self, request: &RerankRequest<'_>) -> Result<FrameScore> {
        self.exchange(request).map_err(|reason| Error::ScorerFailure { frame_id: request.frame_id.to_string(), reason })
    }

    fn is_concurrent(&self) -> bool {
        false
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Ok(mut guard) = self.session.lock() {
            if let Some(mut s) = guard.take() {
                drop(s.stdin);
                let _ = s.child.wait();
            }
        }
    }
}
