use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::raster::{RasterFrame, FRAME_H, FRAME_W};
use super::render::{layout_truth, render_frame};
use super::spec::{CardSpec, FrameTruth, Media, SceneSpec, Side, CARD_H, CARD_W};
use super::SynthError;
use crate::seed;
use crate::Rect;

/// Mean give-up times observed for one- and two-sided scans.
pub const GIVE_UP_ONE_SIDE_MS: f64 = 16_000.0;
pub const GIVE_UP_TWO_SIDES_MS: f64 = 21_000.0;

/// How a simulated user moves the card in front of the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScript {
    pub camera_fps: f64,
    /// Off-centre frames while the card is brought into view.
    pub entry_frames: u32,
    /// Centred frames per side.
    pub centered_frames: u32,
    /// Off-centre frames as the card leaves the view.
    pub exit_frames: u32,
    /// Per-frame placement jitter in pixels.
    pub jitter_px: f64,
    pub both_sides: bool,
    pub media: Media,
    /// Card width as a share of frame width when centred.
    pub card_scale: f64,
    pub blur_sigma: f64,
    pub noise_amp: f64,
    /// Defaults to the one- or two-sided give-up time.
    pub give_up_ms: Option<f64>,
}

impl Default for SessionScript {
    fn default() -> Self {
        Self {
            camera_fps: 30.0,
            entry_frames: 10,
            centered_frames: 60,
            exit_frames: 0,
            jitter_px: 6.0,
            both_sides: false,
            media: Media::Physical,
            card_scale: 0.85,
            blur_sigma: 0.0,
            noise_amp: 0.0,
            give_up_ms: None,
        }
    }
}

impl SessionScript {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParam(m.to_string()));
        if !(self.camera_fps > 0.0 && self.camera_fps <= 120.0) {
            return bad("camera_fps must be in (0, 120]");
        }
        if self.entry_frames + self.centered_frames + self.exit_frames == 0 {
            return bad("session needs at least one frame");
        }
        if !(self.card_scale >= 0.4 && self.card_scale <= 1.0) {
            return bad("card_scale must be in [0.4, 1]");
        }
        if !(self.jitter_px >= 0.0 && self.jitter_px <= 0.1 * FRAME_H as f64 / 2.0) {
            return bad("jitter_px must be in [0, 18.75]");
        }
        if !(self.blur_sigma >= 0.0 && self.noise_amp >= 0.0) {
            return bad("blur and noise must be non-negative");
        }
        Ok(())
    }

    pub fn give_up(&self) -> f64 {
        self.give_up_ms.unwrap_or(if self.both_sides { GIVE_UP_TWO_SIDES_MS } else { GIVE_UP_ONE_SIDE_MS })
    }

    pub fn frame_period_ms(&self) -> f64 {
        1000.0 / self.camera_fps
    }
}

/// One camera frame of a session. Pixels and truth are derived on demand
/// from the scene and render seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFrame {
    pub index: usize,
    pub timestamp_ms: f64,
    pub scene: SceneSpec,
    pub render_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSession {
    pub session_id: String,
    pub seed: u64,
    pub card: Arc<CardSpec>,
    pub script: SessionScript,
    pub frames: Vec<SessionFrame>,
}

impl ScanSession {
    pub fn camera_fps(&self) -> f64 {
        self.script.camera_fps
    }

    pub fn give_up_ms(&self) -> f64 {
        self.script.give_up()
    }

    /// Time at which the camera stops delivering frames.
    pub fn end_ms(&self) -> f64 {
        self.frames.last().map_or(0.0, |f| f.timestamp_ms + self.script.frame_period_ms())
    }

    pub fn truth(&self, index: usize) -> FrameTruth {
        layout_truth(&self.card, &self.frames[index].scene).expect("session scenes are validated at generation")
    }

    pub fn raster(&self, index: usize) -> RasterFrame {
        let f = &self.frames[index];
        render_frame(&self.card, &f.scene, f.render_seed).expect("session scenes are validated at generation").0
    }

    pub fn render(&self, index: usize) -> (RasterFrame, FrameTruth) {
        let f = &self.frames[index];
        render_frame(&self.card, &f.scene, f.render_seed).expect("session scenes are validated at generation")
    }
}

fn centered_rect(scale: f64, dx: f64, dy: f64) -> Rect {
    let w = scale * FRAME_W as f64;
    let h = w * CARD_H / CARD_W;
    Rect::from_center(FRAME_W as f64 / 2.0 + dx, FRAME_H as f64 / 2.0 + dy, w, h)
}

/// Builds a timed scan: entry frames drifting in from one side, centred
/// number-side frames, centred back-side frames when `both_sides`, then
/// exit frames. Deterministic in (spec, script, seed).
pub fn generate_session(
    session_id: impl Into<String>,
    spec: CardSpec,
    script: &SessionScript,
    seed: u64,
) -> Result<ScanSession, SynthError> {
    spec.validate()?;
    script.validate()?;
    let mut rng = seed::rng(seed, &[seed::tag("session")]);
    let period = script.frame_period_ms();
    let dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let entry_dy: f64 = rng.gen_range(-20.0..20.0);
    let mut scenes: Vec<SceneSpec> = Vec::new();
    let scene = |side, rect: Rect, centered| SceneSpec {
        side,
        card_rect: rect,
        centered,
        media: script.media,
        blur_sigma: script.blur_sigma,
        noise_amp: script.noise_amp,
    };

    let n_entry = script.entry_frames.max(1) as f64;
    for k in 0..script.entry_frames {
        // from 45% of the frame width off-centre down to 15%
        let off = (0.45 - 0.30 * k as f64 / n_entry) * FRAME_W as f64;
        scenes.push(scene(Side::Number, centered_rect(script.card_scale, dir * off, entry_dy), false));
    }
    let sides: &[Side] = if script.both_sides { &[Side::Number, Side::NonNumber] } else { &[Side::Number] };
    let mut last_side = Side::Number;
    for &side in sides {
        for _ in 0..script.centered_frames {
            let j = script.jitter_px;
            let (dx, dy) = if j > 0.0 { (rng.gen_range(-j..=j), rng.gen_range(-j..=j)) } else { (0.0, 0.0) };
            let s = (script.card_scale * rng.gen_range(0.985..=1.015)).clamp(0.4, 1.0);
            scenes.push(scene(side, centered_rect(s, dx, dy), true));
        }
        last_side = side;
    }
    let n_exit = script.exit_frames.max(1) as f64;
    for k in 0..script.exit_frames {
        let off = (0.15 + 0.30 * (k + 1) as f64 / n_exit) * FRAME_W as f64;
        scenes.push(scene(last_side, centered_rect(script.card_scale, -dir * off, entry_dy), false));
    }

    let frames = scenes
        .into_iter()
        .enumerate()
        .map(|(index, scene)| {
            scene.validate()?;
            Ok(SessionFrame {
                index,
                timestamp_ms: index as f64 * period,
                scene,
                render_seed: seed::derive(seed, &[seed::tag("frame"), index as u64]),
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    Ok(ScanSession {
        session_id: session_id.into(),
        seed,
        card: Arc::new(spec),
        script: script.clone(),
        frames,
    })
}
