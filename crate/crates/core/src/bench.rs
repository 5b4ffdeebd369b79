//! Measurement harness: success rate against frame rate, main-loop mode
//! comparison and the useful-frames experiment, all under the virtual clock.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cardsynth::{generate_session, CardSpec, ScanSession, SessionScript, SynthError};
use crate::infer::{Backends, BackendConfig, DeviceProfile, FrameView, InferError, OracleBackends};
use crate::ocrdecode::{read_pan, HeadGeometry};
use crate::pipeline::{run_scan, Mode, PipelineConfig, PipelineError, ScanResult};
use crate::seed;

pub const CSV_HEADER: [&str; 7] = ["profile", "mode", "session_id", "success", "fps", "duration_ms", "frames_processed"];

/// Default per-digit error rate for the standard corpus.
pub const STANDARD_DIGIT_ERROR: f64 = 0.15;

/// Length of the mode-comparison session.
pub const COMPARE_SESSION_MS: f64 = 20_000.0;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("sweep needs at least one {0}")]
    Empty(&'static str),
    #[error("target rate {fps} fps exceeds the session's {native} fps")]
    FpsAboveNative { fps: f64, native: f64 },
    #[error("invalid rate {0}")]
    InvalidRate(f64),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub profiles: Vec<DeviceProfile>,
    pub modes: Vec<Mode>,
    pub sessions: Vec<ScanSession>,
    pub backend: BackendConfig,
    pub seed: u64,
    /// Parallel-mode worker override.
    pub workers: Option<usize>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.profiles.is_empty() {
            return Err(BenchError::Empty("profile"));
        }
        if self.modes.is_empty() {
            return Err(BenchError::Empty("mode"));
        }
        if self.sessions.is_empty() {
            return Err(BenchError::Empty("session"));
        }
        self.backend.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub profile: String,
    pub mode: Mode,
    pub session_id: String,
    pub success: bool,
    pub fps: f64,
    pub duration_ms: f64,
    pub frames_processed: usize,
}

impl SweepRow {
    fn from_result(r: &ScanResult, truth_pan: &str) -> Self {
        Self {
            profile: r.profile.clone(),
            mode: r.mode,
            session_id: r.session_id.clone(),
            success: r.succeeded(truth_pan),
            fps: r.fps,
            duration_ms: r.duration_ms,
            frames_processed: r.frames_processed,
        }
    }
}

/// Scan seed for a session; shared by every profile and mode so that a
/// frame reads the same way wherever it is processed.
pub fn session_scan_seed(base: u64, session_id: &str) -> u64 {
    seed::derive(base, &[seed::tag("scan"), seed::tag(session_id)])
}

/// Runs every (profile, mode, session) combination. Rows come back in
/// profile, mode, session order regardless of scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, BenchError> {
    spec.validate()?;
    let backends = OracleBackends::new(HeadGeometry::default(), spec.backend)?;
    let jobs: Vec<(&DeviceProfile, Mode, &ScanSession)> = spec
        .profiles
        .iter()
        .flat_map(|p| spec.modes.iter().flat_map(move |&m| spec.sessions.iter().map(move |s| (p, m, s))))
        .collect();
    jobs.par_iter()
        .map(|(p, mode, s)| {
            let cfg = PipelineConfig {
                mode: *mode,
                workers: spec.workers,
                seed: session_scan_seed(spec.seed, &s.session_id),
                ..PipelineConfig::default()
            };
            let r = run_scan(s, &backends, p, &cfg)?;
            Ok(SweepRow::from_result(&r, &s.card.pan))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket {
    pub label: &'static str,
    pub min_fps: f64,
    pub max_fps: Option<f64>,
    pub sessions: usize,
    pub successes: usize,
    pub success_rate: Option<f64>,
    pub mean_duration_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketStats {
    pub total: usize,
    pub buckets: Vec<Bucket>,
}

impl BucketStats {
    pub fn rates(&self) -> Vec<Option<f64>> {
        self.buckets.iter().map(|b| b.success_rate).collect()
    }
}

/// Splits sessions by measured frame rate into <1, 1-2 and >=2 fps.
pub fn bucket_by_fps(rows: &[SweepRow]) -> BucketStats {
    let bounds: [(&'static str, f64, Option<f64>); 3] = [("<1", 0.0, Some(1.0)), ("1-2", 1.0, Some(2.0)), (">=2", 2.0, None)];
    let buckets = bounds
        .iter()
        .map(|&(label, lo, hi)| {
            let members: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.fps >= lo && hi.is_none_or(|h| r.fps < h))
                .collect();
            let n = members.len();
            let successes = members.iter().filter(|r| r.success).count();
            Bucket {
                label,
                min_fps: lo,
                max_fps: hi,
                sessions: n,
                successes,
                success_rate: (n > 0).then(|| successes as f64 / n as f64),
                mean_duration_ms: (n > 0).then(|| members.iter().map(|r| r.duration_ms).sum::<f64>() / n as f64),
            }
        })
        .collect();
    BucketStats { total: rows.len(), buckets }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSummary {
    pub profile: String,
    pub mode: Mode,
    pub sessions: usize,
    pub mean_fps: f64,
    pub success_rate: f64,
    pub mean_duration_ms: f64,
}

/// Per (profile, mode) averages, in first-appearance order.
pub fn summarize_profiles(rows: &[SweepRow]) -> Vec<ProfileSummary> {
    let mut keys: Vec<(String, Mode)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(p, m)| *p == r.profile && *m == r.mode) {
            keys.push((r.profile.clone(), r.mode));
        }
    }
    keys.into_iter()
        .map(|(profile, mode)| {
            let g: Vec<&SweepRow> = rows.iter().filter(|r| r.profile == profile && r.mode == mode).collect();
            let n = g.len() as f64;
            ProfileSummary {
                sessions: g.len(),
                mean_fps: g.iter().map(|r| r.fps).sum::<f64>() / n,
                success_rate: g.iter().filter(|r| r.success).count() as f64 / n,
                mean_duration_ms: g.iter().map(|r| r.duration_ms).sum::<f64>() / n,
                profile,
                mode,
            }
        })
        .collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side has no variance.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsefulRow {
    pub fps: f64,
    pub processed: usize,
    pub useful: usize,
    pub fraction: f64,
}

/// Re-samples the session at each target rate and counts frames whose
/// card-number read is exactly right. A frame reads the same way at every
/// rate, as if the same video were replayed with wider frame spacing.
pub fn useful_frames(session: &ScanSession, rates: &[f64], backends: &dyn Backends, seed: u64) -> Result<Vec<UsefulRow>, BenchError> {
    let native = session.camera_fps();
    let geom = backends.geometry();
    let end = session.end_ms();
    rates
        .iter()
        .map(|&fps| {
            if !(fps > 0.0 && fps.is_finite()) {
                return Err(BenchError::InvalidRate(fps));
            }
            if fps > native + 1e-9 {
                return Err(BenchError::FpsAboveNative { fps, native });
            }
            let mut processed = 0;
            let mut useful = 0;
            let period = 1000.0 / fps;
            let mut k = 0usize;
            loop {
                let t = k as f64 * period;
                if t >= end {
                    break;
                }
                k += 1;
                let i = ((t * native / 1000.0 + 1e-9).floor() as usize).min(session.frames.len() - 1);
                processed += 1;
                let view = if backends.needs_pixels() {
                    let (raster, truth) = session.render(i);
                    FrameView { truth, raster: Some(raster) }
                } else {
                    FrameView { truth: session.truth(i), raster: None }
                };
                let call = seed::derive(seed, &[seed::tag("frame"), i as u64]);
                let out = backends.ocr(&view, call)?;
                if read_pan(&out, geom).map_err(InferError::from)?.is_some_and(|p| p.digits == session.card.pan) {
                    useful += 1;
                }
            }
            Ok(UsefulRow { fps, processed, useful, fraction: if processed > 0 { useful as f64 / processed as f64 } else { 0.0 } })
        })
        .collect()
}

/// A `COMPARE_SESSION_MS` session at the profile's camera rate with the
/// card centred throughout.
pub fn compare_session(card: CardSpec, profile: &DeviceProfile, seed: u64) -> Result<ScanSession, BenchError> {
    let frames = (COMPARE_SESSION_MS * profile.camera_fps / 1000.0).round() as u32;
    let script = SessionScript {
        camera_fps: profile.camera_fps,
        entry_frames: 0,
        centered_frames: frames,
        exit_frames: 0,
        give_up_ms: Some(COMPARE_SESSION_MS),
        ..SessionScript::default()
    };
    Ok(generate_session(format!("compare-{}", profile.name), card, &script, seed)?)
}

/// Frame rate of each mode over the whole session; the main loop keeps
/// running after the vote.
pub fn compare_modes(
    profile: &DeviceProfile,
    session: &ScanSession,
    modes: &[Mode],
    backend: BackendConfig,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<SweepRow>, BenchError> {
    if modes.is_empty() {
        return Err(BenchError::Empty("mode"));
    }
    let backends = OracleBackends::new(HeadGeometry::default(), backend)?;
    modes
        .iter()
        .map(|&mode| {
            let cfg = PipelineConfig {
                mode,
                workers,
                stop_on_vote: false,
                seed: session_scan_seed(seed, &session.session_id),
                ..PipelineConfig::default()
            };
            let r = run_scan(session, &backends, profile, &cfg)?;
            Ok(SweepRow::from_result(&r, &session.card.pan))
        })
        .collect()
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Write { path: path.display().to_string(), source }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<(), BenchError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record([
            r.profile.clone(),
            r.mode.to_string(),
            r.session_id.clone(),
            r.success.to_string(),
            format!("{:.4}", r.fps),
            format!("{:.3}", r.duration_ms),
            r.frames_processed.to_string(),
        ])?;
    }
    out.flush().map_err(|e| BenchError::Write { path: "csv".into(), source: e })?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepMetadata {
    pub seed: u64,
    pub digit_error_rate: f64,
    pub detect_error_rate: f64,
    pub media_error_rate: f64,
    pub tamper_error_rate: f64,
    pub sessions: usize,
    pub profiles: Vec<String>,
    pub modes: Vec<Mode>,
    /// Scan duration runs to the close of the vote window.
    pub duration_includes_vote_window: bool,
    pub clock: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub metadata: SweepMetadata,
    pub buckets: BucketStats,
    pub profiles: Vec<ProfileSummary>,
    /// Rank correlation of mean fps and success rate across profiles.
    pub spearman_fps_success: Option<f64>,
}

pub fn summarize(spec: &SweepSpec, rows: &[SweepRow]) -> SweepSummary {
    let profiles = summarize_profiles(rows);
    let fps: Vec<f64> = profiles.iter().map(|p| p.mean_fps).collect();
    let success: Vec<f64> = profiles.iter().map(|p| p.success_rate).collect();
    SweepSummary {
        metadata: SweepMetadata {
            seed: spec.seed,
            digit_error_rate: spec.backend.digit_error_rate,
            detect_error_rate: spec.backend.detect_error_rate,
            media_error_rate: spec.backend.media_error_rate,
            tamper_error_rate: spec.backend.tamper_error_rate,
            sessions: spec.sessions.len(),
            profiles: spec.profiles.iter().map(|p| p.name.clone()).collect(),
            modes: spec.modes.clone(),
            duration_includes_vote_window: true,
            clock: "virtual",
        },
        buckets: bucket_by_fps(rows),
        spearman_fps_success: if profiles.len() > 1 { spearman(&fps, &success) } else { None },
        profiles,
    }
}

/// Writes `sweep.csv`, `summary.json` and `curve.tsv` into `dir`.
pub fn write_outputs(dir: &Path, rows: &[SweepRow], summary: &SweepSummary) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(write_err(dir))?;
    let csv_path = dir.join("sweep.csv");
    write_csv(rows, fs::File::create(&csv_path).map_err(write_err(&csv_path))?)?;
    let json_path = dir.join("summary.json");
    let mut json = serde_json::to_vec_pretty(summary).expect("summary serializes");
    json.push(b'\n');
    fs::write(&json_path, json).map_err(write_err(&json_path))?;
    let tsv_path = dir.join("curve.tsv");
    let mut tsv = String::from("# profile\tmode\tmean_fps\tsuccess_rate\tmean_duration_ms\n");
    for p in &summary.profiles {
        tsv.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\t{:.1}\n",
            p.profile, p.mode, p.mean_fps, p.success_rate, p.mean_duration_ms
        ));
    }
    fs::write(&tsv_path, tsv).map_err(write_err(&tsv_path))?;
    Ok(())
}

pub fn write_useful_csv<W: Write>(rows: &[UsefulRow], w: W) -> Result<(), BenchError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["fps", "processed", "useful", "fraction"])?;
    for r in rows {
        out.write_record([format!("{}", r.fps), r.processed.to_string(), r.useful.to_string(), format!("{:.4}", r.fraction)])?;
    }
    out.flush().map_err(|e| BenchError::Write { path: "csv".into(), source: e })?;
    Ok(())
}
