use std::collections::BTreeMap;

use serde::Serialize;

use super::PipelineConfig;
use crate::cardsynth::{Media, Side};
use crate::infer::{simulate_latency, Backends, DeviceProfile, FrameView, ModelKind, TamperObservation};
use crate::seed;
use crate::verdict::TamperObject;

/// A centred frame kept for the completion loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SavedFrame {
    pub frame_index: usize,
    pub timestamp_ms: f64,
    pub side: Side,
    /// Card-detection confidence.
    pub confidence: f64,
}

/// Per side, the `max_per_side` frames with the highest card-detection
/// confidence, most recent first among equals. Number side comes first.
pub fn select_completion_frames(saved: &[SavedFrame], max_per_side: usize) -> Vec<SavedFrame> {
    let mut out = Vec::new();
    for side in [Side::Number, Side::NonNumber] {
        let mut pool: Vec<SavedFrame> = saved.iter().filter(|f| f.side == side).copied().collect();
        pool.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(b.timestamp_ms.total_cmp(&a.timestamp_ms))
                .then(b.frame_index.cmp(&a.frame_index))
        });
        let mut seen = Vec::new();
        pool.retain(|f| {
            let fresh = !seen.contains(&f.timestamp_ms.to_bits());
            seen.push(f.timestamp_ms.to_bits());
            fresh
        });
        out.extend(pool.into_iter().take(max_per_side));
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CompletionOutcome {
    pub media_votes: BTreeMap<Media, usize>,
    pub tamper_objects: Vec<TamperObject>,
    pub frames_processed: usize,
    pub frames_failed: usize,
    /// Virtual time spent, from loop start to the last finished frame.
    pub elapsed_ms: f64,
}

/// Merges per-frame logo observations: one entry per logo with its highest
/// confidence and the number of frames it appeared in.
pub fn merge_tamper(observations: &[TamperObservation]) -> Vec<TamperObject> {
    let mut merged: BTreeMap<_, TamperObject> = BTreeMap::new();
    for obs in observations {
        let mut ids: Vec<_> = obs.objects.iter().map(|o| o.logo_id).collect();
        ids.sort();
        ids.dedup();
        for o in &obs.objects {
            let e = merged.entry(o.logo_id).or_insert(TamperObject { logo_id: o.logo_id, confidence: 0.0, frames: 0 });
            e.confidence = e.confidence.max(o.confidence);
        }
        for id in ids {
            merged.get_mut(&id).unwrap().frames += 1;
        }
    }
    merged.into_values().collect()
}

/// Runs fake-media and tamper detection over the selected frames.
///
/// Frames are handed to the first free worker in order. A frame that starts
/// within the budget runs to completion; the rest are skipped.
pub fn run_completion<F>(
    frames: &[SavedFrame],
    view_of: F,
    backends: &dyn Backends,
    profile: &DeviceProfile,
    cfg: &PipelineConfig,
) -> CompletionOutcome
where
    F: Fn(usize) -> FrameView,
{
    let (workers, _) = cfg.shape(profile.workers);
    let mut free_at = vec![0.0f64; workers.max(1)];
    let mut out = CompletionOutcome::default();
    let mut observations = Vec::new();
    for f in frames {
        let (w, start) = free_at
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .unwrap();
        if start > cfg.completion_budget_ms {
            break;
        }
        let jitter = cfg
            .latency_jitter
            .then(|| seed::derive(cfg.seed, &[seed::tag("completion-latency"), f.frame_index as u64]));
        let cost = simulate_latency(profile, ModelKind::FakeMedia, jitter) + simulate_latency(profile, ModelKind::Tamper, jitter);
        free_at[w] = start + cost;
        out.elapsed_ms = out.elapsed_ms.max(start + cost);
        let view = view_of(f.frame_index);
        let call = seed::derive(cfg.seed, &[seed::tag("completion"), f.frame_index as u64]);
        match (backends.fake_media(&view, call), backends.tamper(&view, call)) {
            (Ok(media), Ok(tamper)) => {
                *out.media_votes.entry(media.category).or_default() += 1;
                observations.push(tamper);
                out.frames_processed += 1;
            }
            (Err(e), _) | (_, Err(e)) => {
                log::warn!("completion frame {} failed: {e}", f.frame_index);
                out.frames_failed += 1;
            }
        }
    }
    out.tamper_objects = merge_tamper(&observations);
    out
}
