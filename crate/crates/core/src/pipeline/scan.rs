use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::completion::{run_completion, select_completion_frames, SavedFrame};
use super::vote::{vote_expiry, vote_pan};
use super::{Clock, Phase, PipelineConfig, PipelineError, ScanResult, VoteRead};
use crate::cardsynth::{ScanSession, Side};
use crate::infer::{simulate_latency, Backends, CardCategory, CardDetectLabel, DeviceProfile, FrameView, ModelKind};
use crate::ocrdecode::{
    assemble_expiry, assemble_pan, decode_boxes, needs_zoom, nms, DigitBox, Expiry, PanCandidate,
    DEFAULT_IOU_THRESHOLD, DEFAULT_SCORE_THRESHOLD,
};
use crate::seed;
use crate::Rect;

const WORK_EPS: f64 = 1e-9;

pub(crate) struct Ctx<'a> {
    pub session: &'a ScanSession,
    pub backends: &'a dyn Backends,
    pub profile: &'a DeviceProfile,
    pub cfg: &'a PipelineConfig,
}

impl Ctx<'_> {
    pub fn view(&self, index: usize) -> FrameView {
        if self.backends.needs_pixels() {
            let (raster, truth) = self.session.render(index);
            FrameView { truth, raster: Some(raster) }
        } else {
            FrameView { truth: self.session.truth(index), raster: None }
        }
    }

    fn horizon(&self) -> f64 {
        self.session.give_up_ms().min(self.session.end_ms())
    }
}

pub(crate) enum Outcome {
    Failed(String),
    Done {
        detect: CardDetectLabel,
        read: Option<PanCandidate>,
        expiry: Option<Expiry>,
    },
}

pub(crate) struct Job {
    pub frame_index: usize,
    pub work_ms: f64,
    pub outcome: Outcome,
}

/// Scan state shared by the virtual and wall clocks.
pub(crate) struct ScanCore {
    pub phase: Phase,
    horizon: f64,
    window_close: Option<f64>,
    candidates: Vec<PanCandidate>,
    vote_reads: Vec<VoteRead>,
    final_pan: Option<PanCandidate>,
    first_read_ms: Option<f64>,
    zoom_crop: Option<Rect>,
    saved: Vec<SavedFrame>,
    sides_seen: BTreeSet<Side>,
    expiry_reads: Vec<(Expiry, f64)>,
    card_detect_counts: BTreeMap<CardCategory, usize>,
    pub frames_produced: usize,
    pub frames_dropped: usize,
    frames_processed: usize,
    frames_failed: usize,
    ocr_reads: usize,
    pub end_ms: Option<f64>,
}

impl ScanCore {
    pub fn new(horizon: f64) -> Self {
        Self {
            phase: Phase::Seeking,
            horizon,
            window_close: None,
            candidates: Vec::new(),
            vote_reads: Vec::new(),
            final_pan: None,
            first_read_ms: None,
            zoom_crop: None,
            saved: Vec::new(),
            sides_seen: BTreeSet::new(),
            expiry_reads: Vec::new(),
            card_detect_counts: BTreeMap::new(),
            frames_produced: 0,
            frames_dropped: 0,
            frames_processed: 0,
            frames_failed: 0,
            ocr_reads: 0,
            end_ms: None,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn ended(&self) -> bool {
        self.end_ms.is_some()
    }

    fn ocr_active(&self) -> bool {
        matches!(self.phase, Phase::Seeking | Phase::Voting)
    }

    /// Next vote-window deadline, if a window is open.
    pub fn pending_window(&self) -> Option<f64> {
        (self.phase == Phase::Voting).then_some(self.window_close).flatten()
    }

    fn read_view(
        &self,
        ctx: &Ctx,
        view: &FrameView,
        call: u64,
    ) -> Result<(Vec<DigitBox>, Option<PanCandidate>, Option<Expiry>), String> {
        let geom = ctx.backends.geometry();
        let out = ctx.backends.ocr(view, call).map_err(|e| e.to_string())?;
        let boxes = decode_boxes(&out, geom, DEFAULT_SCORE_THRESHOLD).map_err(|e| e.to_string())?;
        let boxes = nms(&boxes, DEFAULT_IOU_THRESHOLD);
        let pan = assemble_pan(&boxes);
        let expiry = assemble_expiry(&boxes);
        Ok((boxes, pan, expiry))
    }

    /// Runs the models for a frame as it starts. OCR runs only on
    /// number-side frames while the scan still wants reads. The first frame
    /// whose digits are too small fixes a zoom crop that later frames reuse;
    /// that frame pays for a second OCR pass.
    pub fn plan(&mut self, ctx: &Ctx, index: usize) -> Job {
        let cfg = ctx.cfg;
        let call = seed::derive(cfg.seed, &[seed::tag("frame"), index as u64]);
        let jitter = cfg.latency_jitter.then(|| seed::derive(cfg.seed, &[seed::tag("latency"), index as u64]));
        let mut work_ms = simulate_latency(ctx.profile, ModelKind::CardDetect, jitter)
            + simulate_latency(ctx.profile, ModelKind::Ocr, jitter);
        let view = ctx.view(index);
        let detect = match ctx.backends.card_detect(&view, call) {
            Ok(d) => d,
            Err(e) => return Job { frame_index: index, work_ms, outcome: Outcome::Failed(e.to_string()) },
        };
        let mut read = None;
        let mut expiry = None;
        if detect.category == CardCategory::NumberSide && self.ocr_active() {
            let zoom_call = seed::derive(call, &[seed::tag("zoom")]);
            let attempt = match self.zoom_crop {
                Some(crop) => self.read_view(ctx, &view.zoomed(&crop), zoom_call),
                None => self.read_view(ctx, &view, call).and_then(|(boxes, pan, exp)| {
                    let crop = cfg
                        .zoom
                        .then(|| needs_zoom(&boxes, ctx.backends.geometry(), cfg.small_font_ratio))
                        .flatten();
                    match crop {
                        None => Ok((boxes, pan, exp)),
                        Some(crop) => {
                            self.zoom_crop = Some(crop);
                            work_ms += simulate_latency(
                                ctx.profile,
                                ModelKind::Ocr,
                                jitter.map(|s| seed::derive(s, &[seed::tag("zoom")])),
                            );
                            self.read_view(ctx, &view.zoomed(&crop), zoom_call)
                        }
                    }
                }),
            };
            match attempt {
                Ok((_, pan, exp)) => {
                    read = pan;
                    expiry = exp;
                }
                Err(e) => return Job { frame_index: index, work_ms, outcome: Outcome::Failed(e) },
            }
        }
        Job { frame_index: index, work_ms, outcome: Outcome::Done { detect, read, expiry } }
    }

    /// Applies a finished frame at time `t`.
    pub fn complete(&mut self, ctx: &Ctx, job: Job, t: f64) {
        self.frames_processed += 1;
        let (detect, read, expiry) = match job.outcome {
            Outcome::Failed(e) => {
                log::warn!("{}: frame {} failed: {e}", ctx.session.session_id, job.frame_index);
                self.frames_failed += 1;
                return;
            }
            Outcome::Done { detect, read, expiry } => (detect, read, expiry),
        };
        *self.card_detect_counts.entry(detect.category).or_default() += 1;
        let side = match detect.category {
            CardCategory::NumberSide => Some(Side::Number),
            CardCategory::NonNumberSide => Some(Side::NonNumber),
            CardCategory::Background => None,
        };
        if let Some(side) = side {
            self.sides_seen.insert(side);
            self.saved.push(SavedFrame {
                frame_index: job.frame_index,
                timestamp_ms: ctx.session.frames[job.frame_index].timestamp_ms,
                side,
                confidence: detect.confidence,
            });
        }
        if !self.ocr_active() {
            return;
        }
        let Some(read) = read else { return };
        self.ocr_reads += 1;
        if let Some(e) = expiry {
            self.expiry_reads.push((e, read.confidence));
        }
        if !read.luhn_valid {
            return;
        }
        self.first_read_ms.get_or_insert(t);
        self.vote_reads.push(VoteRead {
            frame_index: job.frame_index,
            completed_ms: t,
            digits: read.digits.clone(),
            confidence: read.confidence,
        });
        if ctx.cfg.voting {
            if self.window_close.is_none() {
                self.window_close = Some(t + ctx.cfg.vote_window_ms);
                self.phase = Phase::Voting;
            }
            self.candidates.push(read);
        } else {
            self.final_pan = Some(read);
            self.close_main_loop(ctx, t);
        }
    }

    fn close_main_loop(&mut self, ctx: &Ctx, t: f64) {
        self.phase = Phase::Completion;
        if ctx.cfg.stop_on_vote && !ctx.session.script.both_sides {
            self.end_ms = Some(t);
        }
    }

    /// Moves time forward to `t`, closing the vote window or the scan when
    /// their deadlines have passed. Events at exactly the deadline have
    /// already been applied.
    pub fn advance_to(&mut self, ctx: &Ctx, t: f64) {
        if let Some(close) = self.pending_window() {
            if t >= close {
                self.final_pan = vote_pan(&self.candidates);
                self.close_main_loop(ctx, close.min(self.horizon));
            }
        }
        if self.end_ms.is_none() && t >= self.horizon {
            if self.phase == Phase::Voting {
                self.final_pan = vote_pan(&self.candidates);
                self.phase = Phase::Completion;
            }
            self.end_ms = Some(self.horizon);
        }
    }

    pub fn finish(mut self, ctx: &Ctx) -> ScanResult {
        let end = self.end_ms.unwrap_or(self.horizon);
        self.phase = Phase::Done;
        let frames = select_completion_frames(&self.saved, ctx.cfg.completion_max_frames);
        let completion = run_completion(&frames, |i| ctx.view(i), ctx.backends, ctx.profile, ctx.cfg);
        let fps = if end > 0.0 { self.frames_processed as f64 * 1000.0 / end } else { 0.0 };
        ScanResult {
            session_id: ctx.session.session_id.clone(),
            mode: ctx.cfg.mode,
            profile: ctx.profile.name.clone(),
            final_pan: self.final_pan.as_ref().map(|p| p.digits.clone()),
            final_confidence: self.final_pan.as_ref().map(|p| p.confidence),
            expiry: vote_expiry(&self.expiry_reads),
            sides_seen: self.sides_seen,
            media_votes: completion.media_votes,
            tamper_objects: completion.tamper_objects,
            frames_produced: self.frames_produced,
            frames_processed: self.frames_processed,
            frames_failed: self.frames_failed,
            frames_dropped: self.frames_dropped,
            ocr_reads: self.ocr_reads,
            vote_reads: self.vote_reads,
            first_read_ms: self.first_read_ms,
            zoomed: self.zoom_crop.is_some(),
            duration_ms: end,
            fps,
            gave_up: self.final_pan.is_none(),
            completion_frames: frames.len(),
            completion_processed: completion.frames_processed,
            completion_ms: completion.elapsed_ms,
            card_detect_counts: self.card_detect_counts,
        }
    }
}

/// When a frame entered a worker, and the newest frame produced by then.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StartRecord {
    pub frame_index: usize,
    pub start_ms: f64,
    pub newest_produced: usize,
}

/// Runs one scan session through the main loop and completion loop.
pub fn run_scan(
    session: &ScanSession,
    backends: &dyn Backends,
    profile: &DeviceProfile,
    cfg: &PipelineConfig,
) -> Result<ScanResult, PipelineError> {
    run_scan_traced(session, backends, profile, cfg).map(|(r, _)| r)
}

/// [`run_scan`] plus the start time of every processed frame. The trace is
/// empty under the wall clock.
pub fn run_scan_traced(
    session: &ScanSession,
    backends: &dyn Backends,
    profile: &DeviceProfile,
    cfg: &PipelineConfig,
) -> Result<(ScanResult, Vec<StartRecord>), PipelineError> {
    cfg.validate()?;
    profile.validate()?;
    if session.frames.is_empty() {
        return Err(PipelineError::EmptySession);
    }
    let ctx = Ctx { session, backends, profile, cfg };
    match cfg.clock {
        Clock::Virtual => Ok(run_virtual(&ctx)),
        Clock::Wall => Ok((super::wall::run_wall(&ctx), Vec::new())),
    }
}

struct Active {
    job: Job,
    remaining: f64,
    seq: usize,
}

/// Discrete-event main loop. Active jobs share the device: each of `k`
/// concurrent jobs advances at `min(1, capacity / k)`. At equal times,
/// completions are handled before the vote deadline, which comes before
/// frame arrivals.
fn run_virtual(ctx: &Ctx) -> (ScanResult, Vec<StartRecord>) {
    let (workers, capacity) = ctx.cfg.shape(ctx.profile.workers);
    let throughput = if workers > 1 { ctx.profile.capacity() } else { 1.0 };
    let mut core = ScanCore::new(ctx.horizon());
    let mut buffer = super::FrameBuffer::new(capacity);
    let mut active: Vec<Active> = Vec::new();
    let mut trace = Vec::new();
    let mut next = 0usize;
    let mut seq = 0usize;
    let mut t = 0.0f64;

    let mut start = |core: &mut ScanCore, active: &mut Vec<Active>, trace: &mut Vec<StartRecord>, i: usize, t: f64, newest: usize| {
        let job = core.plan(ctx, i);
        trace.push(StartRecord { frame_index: i, start_ms: t, newest_produced: newest });
        active.push(Active { remaining: job.work_ms, job, seq });
        seq += 1;
    };

    loop {
        let rate = if active.is_empty() { 0.0 } else { (throughput / active.len() as f64).min(1.0) };
        let t_done = active
            .iter()
            .map(|a| t + a.remaining / rate)
            .fold(f64::INFINITY, f64::min);
        let t_arrive = ctx
            .session
            .frames
            .get(next)
            .map(|f| f.timestamp_ms)
            .filter(|&a| a < core.horizon())
            .unwrap_or(f64::INFINITY);
        let t_window = core.pending_window().unwrap_or(f64::INFINITY);
        let t_next = t_done.min(t_arrive).min(t_window).min(core.horizon());
        for a in &mut active {
            a.remaining -= rate * (t_next - t);
        }
        t = t_next;

        if t_done <= t {
            let (mut finished, rest): (Vec<_>, Vec<_>) =
                active.drain(..).partition(|a| a.remaining <= WORK_EPS * a.job.work_ms.max(1.0));
            active = rest;
            finished.sort_by_key(|a| a.seq);
            for a in finished {
                core.complete(ctx, a.job, t);
                if core.ended() {
                    break;
                }
            }
            if core.ended() {
                break;
            }
            while active.len() < workers {
                let Some(i) = buffer.pop() else { break };
                start(&mut core, &mut active, &mut trace, i, t, next - 1);
            }
        }
        core.advance_to(ctx, t);
        if core.ended() {
            break;
        }
        if t_arrive <= t {
            let i = next;
            next += 1;
            core.frames_produced += 1;
            if active.len() < workers && buffer.is_empty() {
                start(&mut core, &mut active, &mut trace, i, t, i);
            } else if buffer.push(i).is_some() {
                core.frames_dropped += 1;
            }
        }
    }
    (core.finish(ctx), trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cardsynth::{generate_session, CardSpec, FontStyle, Layout, SessionScript};
    use crate::infer::{builtin_profile, BackendConfig, OracleBackends};
    use crate::ocrdecode::HeadGeometry;
    use crate::pipeline::Mode;

    fn session(script: SessionScript, seed: u64) -> ScanSession {
        let card = CardSpec {
            pan: "4111111111111111".into(),
            expiry: Some(Expiry { month: 8, year: 26 }),
            layout: Layout::QuadGroups,
            font_style: FontStyle::Flat,
            digit_height_px: 30,
            number_side_logos: vec![],
            back_side_logos: vec![],
        };
        generate_session("s001", card, &script, seed).unwrap()
    }

    fn oracle(eps: f64) -> OracleBackends {
        OracleBackends::new(HeadGeometry::default(), BackendConfig::clean(5).with_digit_error(eps)).unwrap()
    }

    #[test]
    fn clean_fast_scan_succeeds() {
        let s = session(SessionScript::default(), 1);
        let p = builtin_profile("iphone-xr-like").unwrap();
        let r = run_scan(&s, &oracle(0.0), &p, &PipelineConfig::default()).unwrap();
        assert!(r.succeeded("4111111111111111"), "{r:?}");
        assert_eq!(r.expiry, Some(Expiry { month: 8, year: 26 }));
        let first = r.first_read_ms.unwrap();
        assert!((r.duration_ms - (first + 1500.0)).abs() < 1e-6);
        assert!(r.completion_processed > 0);
    }

    #[test]
    fn background_only_gives_up() {
        let script = SessionScript { entry_frames: 60, centered_frames: 0, ..Default::default() };
        let s = session(script, 2);
        let p = builtin_profile("pixel-2-like").unwrap();
        let r = run_scan(&s, &oracle(0.0), &p, &PipelineConfig::default()).unwrap();
        assert!(r.gave_up);
        assert!(r.final_pan.is_none());
        assert!(r.vote_reads.is_empty());
    }

    #[test]
    fn slow_device_processes_few_frames() {
        let script = SessionScript { centered_frames: 470, ..Default::default() };
        let s = session(script, 3);
        let mut p = builtin_profile("budget-android-like").unwrap();
        p.ocr_ms = 2000.0 - p.card_detect_ms;
        let cfg = PipelineConfig { mode: Mode::Buffered, latency_jitter: false, ..Default::default() };
        let r = run_scan(&s, &oracle(0.9), &p, &cfg).unwrap();
        assert_eq!(s.give_up_ms(), 16_000.0);
        assert!(r.frames_processed <= 8, "{}", r.frames_processed);
    }

    #[test]
    fn blocking_waits_for_next_frame() {
        let script = SessionScript { entry_frames: 0, centered_frames: 600, ..Default::default() };
        let s = session(script, 4);
        let p = builtin_profile("lg-k20-like").unwrap();
        let cfg = PipelineConfig { mode: Mode::Blocking, stop_on_vote: false, latency_jitter: false, ..Default::default() };
        let (r, trace) = run_scan_traced(&s, &oracle(0.0), &p, &cfg).unwrap();
        // 962 ms of work spans 29 frame periods
        for w in trace.windows(2) {
            assert_eq!(w[1].frame_index - w[0].frame_index, 29);
        }
        assert!((r.fps - 1000.0 / (29.0 * 1000.0 / 30.0)).abs() < 0.05, "{}", r.fps);
    }
}
