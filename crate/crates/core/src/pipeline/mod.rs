//! Scan orchestration: the main loop (card detection and OCR over a bounded
//! LIFO buffer), the vote window, and the completion loop (fake media and
//! tamper models over the best saved frames).
//!
//! The virtual clock runs the whole scan as a discrete-event simulation on
//! one thread, so results are reproducible for any worker count. The wall
//! clock runs real producer and consumer threads and sleeps for the
//! simulated model latencies.

mod buffer;
mod completion;
mod scan;
mod vote;
mod wall;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cardsynth::{Media, Side};
use crate::infer::{CardCategory, InferError};
use crate::ocrdecode::Expiry;
use crate::verdict::{ScanPayload, TamperObject};

pub use buffer::{FrameBuffer, SharedFrameBuffer};
pub use completion::{merge_tamper, run_completion, select_completion_frames, CompletionOutcome, SavedFrame};
pub use scan::{run_scan, run_scan_traced, StartRecord};
pub use vote::{vote_expiry, vote_pan};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("session has no frames")]
    EmptySession,
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Infer(#[from] InferError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One worker, no buffer: frames that arrive while busy are lost.
    Blocking,
    /// One worker fed from the two-frame LIFO buffer.
    Buffered,
    /// Several workers fed from the LIFO buffer.
    Parallel,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Blocking, Mode::Buffered, Mode::Parallel];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Blocking => "blocking",
            Mode::Buffered => "buffered",
            Mode::Parallel => "parallel",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected blocking, buffered or parallel)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    Virtual,
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Parallel-mode worker count; the profile's count when `None`.
    pub workers: Option<usize>,
    pub buffer_capacity: usize,
    pub vote_window_ms: f64,
    pub completion_budget_ms: f64,
    pub completion_max_frames: usize,
    pub clock: Clock,
    /// End a one-sided scan when the vote window closes. When false the main
    /// loop runs to the horizon, which is how frame rates are compared.
    pub stop_on_vote: bool,
    /// Vote across the window; when false the first Luhn-valid read wins.
    pub voting: bool,
    pub zoom: bool,
    pub small_font_ratio: f64,
    pub latency_jitter: bool,
    /// Wall clock only: real milliseconds per simulated millisecond.
    pub wall_time_scale: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Parallel,
            workers: None,
            buffer_capacity: 2,
            vote_window_ms: 1500.0,
            completion_budget_ms: 1000.0,
            completion_max_frames: 6,
            clock: Clock::Virtual,
            stop_on_vote: true,
            voting: true,
            zoom: true,
            small_font_ratio: crate::ocrdecode::DEFAULT_SMALL_FONT_RATIO,
            latency_jitter: true,
            wall_time_scale: 1.0,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn with_mode(mode: Mode, seed: u64) -> Self {
        Self { mode, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_string()));
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        if !(self.vote_window_ms >= 0.0 && self.completion_budget_ms >= 0.0) {
            return bad("windows and budgets must be non-negative");
        }
        if !(self.wall_time_scale > 0.0) {
            return bad("wall_time_scale must be positive");
        }
        Ok(())
    }

    /// Worker count and buffer capacity actually used by the mode.
    pub fn shape(&self, profile_workers: usize) -> (usize, usize) {
        match self.mode {
            Mode::Blocking => (1, 0),
            Mode::Buffered => (1, self.buffer_capacity),
            Mode::Parallel => (self.workers.unwrap_or(profile_workers), self.buffer_capacity),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Seeking,
    Voting,
    Completion,
    Done,
}

/// One Luhn-valid read enrolled in the vote.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoteRead {
    pub frame_index: usize,
    pub completed_ms: f64,
    pub digits: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub session_id: String,
    pub mode: Mode,
    pub profile: String,
    pub final_pan: Option<String>,
    pub final_confidence: Option<f64>,
    pub expiry: Option<Expiry>,
    pub sides_seen: BTreeSet<Side>,
    pub media_votes: BTreeMap<Media, usize>,
    pub tamper_objects: Vec<TamperObject>,
    pub frames_produced: usize,
    pub frames_processed: usize,
    pub frames_failed: usize,
    pub frames_dropped: usize,
    /// Reads assembled on number-side frames, valid or not.
    pub ocr_reads: usize,
    pub vote_reads: Vec<VoteRead>,
    pub first_read_ms: Option<f64>,
    pub zoomed: bool,
    /// Main-loop end, including the vote window.
    pub duration_ms: f64,
    pub fps: f64,
    pub gave_up: bool,
    pub completion_frames: usize,
    pub completion_processed: usize,
    pub completion_ms: f64,
    pub card_detect_counts: BTreeMap<CardCategory, usize>,
}

impl ScanResult {
    /// Whether the scan read `truth_pan` before giving up.
    pub fn succeeded(&self, truth_pan: &str) -> bool {
        !self.gave_up && self.final_pan.as_deref() == Some(truth_pan)
    }

    /// The distilled report sent for a verdict. The card number keeps only
    /// its BIN and last four digits unless `unmasked`.
    pub fn payload(&self, unmasked: bool) -> ScanPayload {
        ScanPayload {
            session_id: self.session_id.clone(),
            final_pan: self
                .final_pan
                .as_deref()
                .map(|p| if unmasked { p.to_string() } else { mask_pan(p) }),
            expiry: self.expiry,
            sides_seen: self.sides_seen.clone(),
            media_votes: self.media_votes.clone(),
            tamper_objects: self.tamper_objects.clone(),
            frames_produced: self.frames_produced,
            frames_processed: self.frames_processed,
            fps: self.fps,
            duration_ms: self.duration_ms,
            gave_up: self.gave_up,
            mode: self.mode,
            profile: self.profile.clone(),
        }
    }
}

/// Keeps the first six and last four digits.
pub fn mask_pan(pan: &str) -> String {
    let n = pan.chars().count();
    if n <= 10 {
        return "*".repeat(n);
    }
    pan.chars()
        .enumerate()
        .map(|(i, c)| if i < 6 || i >= n - 4 { c } else { '*' })
        .collect()
}
