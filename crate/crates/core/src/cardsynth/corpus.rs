use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::session::{generate_session, ScanSession, SessionFrame, SessionScript};
use super::spec::{
    line_width, CardSpec, FontStyle, FrameTruth, Layout, LogoId, LogoMark, Media, Network, SceneSpec, CARD_W,
    DIGIT_GAP, MAX_LINE_SHARE,
};
use super::SynthError;
use crate::ocrdecode::{luhn_check_digit, Expiry};
use crate::seed;
use crate::Rect;

/// Declared sampling ranges for a synthetic corpus. Bounds are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRanges {
    pub camera_fps: f64,
    pub digit_height: (u32, u32),
    pub font_styles: Vec<FontStyle>,
    pub media: Vec<Media>,
    pub networks: Vec<Network>,
    pub both_sides_prob: f64,
    pub entry_frames: u32,
    pub centered_frames: u32,
    pub exit_frames: u32,
    /// Keep the card centred until the give-up time instead of using
    /// `centered_frames`.
    pub fill_to_give_up: bool,
    pub jitter_px: f64,
    pub card_scale: (f64, f64),
    pub blur_sigma: (f64, f64),
    pub noise_amp: (f64, f64),
    /// Chance that the number-side network logo disagrees with the BIN.
    pub tamper_prob: f64,
    pub expiry_prob: f64,
}

impl Default for CorpusRanges {
    fn default() -> Self {
        Self {
            camera_fps: 30.0,
            digit_height: (26, 34),
            font_styles: vec![FontStyle::Flat, FontStyle::Embossed],
            media: vec![Media::Physical],
            networks: vec![Network::Visa, Network::Mastercard, Network::Amex, Network::Discover],
            both_sides_prob: 0.0,
            entry_frames: 10,
            centered_frames: 60,
            exit_frames: 0,
            fill_to_give_up: false,
            jitter_px: 6.0,
            card_scale: (0.8, 0.95),
            blur_sigma: (0.0, 0.0),
            noise_amp: (0.0, 0.0),
            tamper_prob: 0.0,
            expiry_prob: 0.8,
        }
    }
}

impl CorpusRanges {
    /// Benchmark corpus: one-sided physical scans where the user keeps the
    /// card centred until giving up.
    pub fn sweep() -> Self {
        Self {
            fill_to_give_up: true,
            entry_frames: 15,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParam(m.to_string()));
        if self.font_styles.is_empty() || self.media.is_empty() || self.networks.is_empty() {
            return bad("font_styles, media and networks must be non-empty");
        }
        if self.networks.contains(&Network::Unknown) {
            return bad("cannot sample PANs for an unknown network");
        }
        if self.digit_height.0 > self.digit_height.1 || self.digit_height.0 < 8 {
            return bad("digit_height range must be ordered and at least 8");
        }
        if self.card_scale.0 > self.card_scale.1 || self.blur_sigma.0 > self.blur_sigma.1 || self.noise_amp.0 > self.noise_amp.1 {
            return bad("ranges must be ordered");
        }
        for p in [self.both_sides_prob, self.tamper_prob, self.expiry_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must be in [0, 1]");
            }
        }
        Ok(())
    }
}

fn pan_prefix<R: Rng>(rng: &mut R, network: Network) -> String {
    match network {
        Network::Visa => "4".into(),
        Network::Mastercard => format!("5{}", rng.gen_range(1..=5)),
        Network::Amex => if rng.gen_bool(0.5) { "34" } else { "37" }.into(),
        Network::Discover => "6011".into(),
        Network::Unknown => "9".into(),
    }
}

/// Random Luhn-valid card number for a network.
pub fn sample_pan<R: Rng>(rng: &mut R, network: Network) -> String {
    let len = if network == Network::Amex { 15 } else { 16 };
    let mut pan = pan_prefix(rng, network);
    while pan.len() < len - 1 {
        pan.push(char::from(b'0' + rng.gen_range(0..10u8)));
    }
    let check = luhn_check_digit(&pan).expect("generated digits");
    pan.push(char::from(b'0' + check));
    pan
}

fn max_digit_height(layout: Layout) -> u32 {
    (8..=80)
        .rev()
        .find(|&h| line_width(layout.groups(), h as f64, DIGIT_GAP) <= MAX_LINE_SHARE * CARD_W)
        .unwrap_or(8)
}

const NETWORK_LOGO_FRONT: Rect = Rect::new(0.78, 0.76, 0.16, 0.16);
const BANK_LOGO_FRONT: Rect = Rect::new(0.05, 0.08, 0.14, 0.16);
const NETWORK_LOGO_BACK: Rect = Rect::new(0.80, 0.74, 0.14, 0.16);
const BANK_LOGO_BACK: Rect = Rect::new(0.06, 0.70, 0.12, 0.16);

/// Samples a card. With probability `tamper_prob` the front network logo
/// is swapped for another network's.
pub fn sample_card<R: Rng>(rng: &mut R, ranges: &CorpusRanges) -> CardSpec {
    let network = *ranges.networks.choose(rng).expect("validated");
    let layout = if network == Network::Amex { Layout::Amex } else { Layout::QuadGroups };
    let pan = sample_pan(rng, network);
    let expiry = rng.gen_bool(ranges.expiry_prob).then(|| Expiry {
        month: rng.gen_range(1..=12),
        year: rng.gen_range(24..=35),
    });
    let font_style = *ranges.font_styles.choose(rng).expect("validated");
    let cap = max_digit_height(layout);
    let digit_height_px = rng.gen_range(ranges.digit_height.0..=ranges.digit_height.1).min(cap);
    let bank = *[LogoId::BankA, LogoId::BankB, LogoId::BankC].choose(rng).unwrap();
    let true_logo = network.logo().expect("known network");
    let front_logo = if rng.gen_bool(ranges.tamper_prob) {
        let others: Vec<LogoId> = [LogoId::Visa, LogoId::Mastercard, LogoId::Amex, LogoId::Discover]
            .into_iter()
            .filter(|l| *l != true_logo)
            .collect();
        *others.choose(rng).unwrap()
    } else {
        true_logo
    };
    CardSpec {
        pan,
        expiry,
        layout,
        font_style,
        digit_height_px,
        number_side_logos: vec![
            LogoMark { logo_id: bank, position: BANK_LOGO_FRONT },
            LogoMark { logo_id: front_logo, position: NETWORK_LOGO_FRONT },
        ],
        back_side_logos: vec![
            LogoMark { logo_id: true_logo, position: NETWORK_LOGO_BACK },
            LogoMark { logo_id: bank, position: BANK_LOGO_BACK },
        ],
    }
}

fn sample_range<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

pub fn session_id(i: usize) -> String {
    format!("s{:03}", i + 1)
}

/// Samples `count` sessions without touching the filesystem.
pub fn generate_sessions(count: usize, ranges: &CorpusRanges, seed: u64) -> Result<Vec<ScanSession>, SynthError> {
    if count == 0 {
        return Err(SynthError::InvalidParam("count must be at least 1".into()));
    }
    ranges.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| sample_session(i, ranges, seed))
        .collect()
}

/// The `i`-th session of the corpus defined by (ranges, seed).
pub fn sample_session(i: usize, ranges: &CorpusRanges, seed: u64) -> Result<ScanSession, SynthError> {
    let mut rng = seed::rng(seed, &[seed::tag("corpus"), i as u64]);
    let card = sample_card(&mut rng, ranges);
    let both_sides = rng.gen_bool(ranges.both_sides_prob);
    let mut script = SessionScript {
        camera_fps: ranges.camera_fps,
        entry_frames: ranges.entry_frames,
        centered_frames: ranges.centered_frames,
        exit_frames: ranges.exit_frames,
        jitter_px: ranges.jitter_px,
        both_sides,
        media: *ranges.media.choose(&mut rng).expect("validated"),
        card_scale: sample_range(&mut rng, ranges.card_scale),
        blur_sigma: sample_range(&mut rng, ranges.blur_sigma),
        noise_amp: sample_range(&mut rng, ranges.noise_amp),
        give_up_ms: None,
    };
    if ranges.fill_to_give_up {
        let total = (script.give_up() * script.camera_fps / 1000.0).ceil() as u32;
        let sides = if both_sides { 2 } else { 1 };
        script.centered_frames = total.saturating_sub(script.entry_frames + script.exit_frames).div_ceil(sides).max(1);
    }
    generate_session(session_id(i), card, &script, seed::derive(seed, &[seed::tag("session"), i as u64]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FrameFormat {
    Png,
    Ppm,
    /// Annotations only; frames are re-rendered from their scene on load.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub session_id: String,
    pub camera_fps: f64,
    pub give_up_ms: f64,
    pub pan: String,
    pub layout: Layout,
    pub media: Media,
    pub frame_files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub seed: u64,
    pub count: usize,
    pub frame_format: FrameFormat,
    pub ranges: CorpusRanges,
    pub sessions: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp_ms: f64,
    pub file: Option<String>,
    pub scene: SceneSpec,
    pub render_seed: u64,
    pub truth: FrameTruth,
}

/// Contents of a session's `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub seed: u64,
    pub camera_fps: f64,
    pub give_up_ms: f64,
    pub card: CardSpec,
    pub script: SessionScript,
    pub frames: Vec<FrameRecord>,
}

impl SessionRecord {
    pub fn into_session(self) -> Result<ScanSession, SynthError> {
        self.card.validate()?;
        self.script.validate()?;
        let frames = self
            .frames
            .into_iter()
            .map(|f| {
                f.scene.validate()?;
                Ok(SessionFrame {
                    index: f.index,
                    timestamp_ms: f.timestamp_ms,
                    scene: f.scene,
                    render_seed: f.render_seed,
                })
            })
            .collect::<Result<Vec<_>, SynthError>>()?;
        if frames.windows(2).any(|w| w[1].timestamp_ms <= w[0].timestamp_ms) {
            return Err(SynthError::InvalidParam(format!("{}: timestamps not increasing", self.session_id)));
        }
        Ok(ScanSession {
            session_id: self.session_id,
            seed: self.seed,
            card: Arc::new(self.card),
            script: self.script,
            frames,
        })
    }
}

fn io_err(path: &Path, e: std::io::Error) -> SynthError {
    SynthError::Write(format!("{}: {e}", path.display()))
}

fn write_session(dir: &Path, s: &ScanSession, format: FrameFormat) -> Result<SessionRecord, SynthError> {
    let sdir = dir.join(&s.session_id);
    fs::create_dir_all(&sdir).map_err(|e| io_err(&sdir, e))?;
    let mut frames = Vec::with_capacity(s.frames.len());
    for f in &s.frames {
        let (file, truth) = match format {
            FrameFormat::None => (None, s.truth(f.index)),
            FrameFormat::Png | FrameFormat::Ppm => {
                let (raster, truth) = s.render(f.index);
                let ext = if format == FrameFormat::Png { "png" } else { "ppm" };
                let name = format!("frame_{:04}.{ext}", f.index);
                let path = sdir.join(&name);
                let out = BufWriter::new(fs::File::create(&path).map_err(|e| io_err(&path, e))?);
                match format {
                    FrameFormat::Png => raster.write_png(out)?,
                    _ => raster.write_ppm(out)?,
                }
                (Some(format!("{}/{name}", s.session_id)), truth)
            }
        };
        frames.push(FrameRecord {
            index: f.index,
            timestamp_ms: f.timestamp_ms,
            file,
            scene: f.scene,
            render_seed: f.render_seed,
            truth,
        });
    }
    let record = SessionRecord {
        session_id: s.session_id.clone(),
        seed: s.seed,
        camera_fps: s.camera_fps(),
        give_up_ms: s.give_up_ms(),
        card: (*s.card).clone(),
        script: s.script.clone(),
        frames,
    };
    write_json(&sdir.join("truth.json"), &record)?;
    Ok(record)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SynthError> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(|e| io_err(path, e))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes `count` sessions under `out_dir` plus `manifest.json`.
pub fn generate_corpus(
    count: usize,
    ranges: &CorpusRanges,
    seed: u64,
    out_dir: &Path,
    format: FrameFormat,
) -> Result<Manifest, SynthError> {
    let sessions = generate_sessions(count, ranges, seed)?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let records = sessions
        .par_iter()
        .map(|s| write_session(out_dir, s, format))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = Manifest {
        generator: concat!("cardpipe ", env!("CARGO_PKG_VERSION")).to_string(),
        seed,
        count,
        frame_format: format,
        ranges: ranges.clone(),
        sessions: records
            .iter()
            .map(|r| ManifestEntry {
                session_id: r.session_id.clone(),
                camera_fps: r.camera_fps,
                give_up_ms: r.give_up_ms,
                pan: r.card.pan.clone(),
                layout: r.card.layout,
                media: r.script.media,
                frame_files: r.frames.iter().filter_map(|f| f.file.clone()).collect(),
            })
            .collect(),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, SynthError> {
    let path = dir.join("manifest.json");
    let bytes = fs::read(&path).map_err(|e| SynthError::Read(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn session_dir(corpus: &Path, session_id: &str) -> PathBuf {
    corpus.join(session_id)
}

pub fn load_session(corpus: &Path, session_id: &str) -> Result<ScanSession, SynthError> {
    let path = session_dir(corpus, session_id).join("truth.json");
    let bytes = fs::read(&path).map_err(|e| SynthError::Read(format!("{}: {e}", path.display())))?;
    let record: SessionRecord = serde_json::from_slice(&bytes)?;
    record.into_session()
}

/// Loads every session listed in the manifest, in manifest order.
pub fn load_corpus(corpus: &Path) -> Result<(Manifest, Vec<ScanSession>), SynthError> {
    let manifest = read_manifest(corpus)?;
    let sessions = manifest
        .sessions
        .par_iter()
        .map(|e| load_session(corpus, &e.session_id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((manifest, sessions))
}
