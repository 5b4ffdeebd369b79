//! Model backends for the four per-frame tasks and simulated device latency.
//!
//! [`OracleBackends`] answers from ground truth with injectable error rates.
//! [`TemplateBackends`] reads digits from pixels and uses the oracle for the
//! remaining tasks.

mod oracle;
mod profile;
mod template;

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cardsynth::{FrameTruth, LogoId, Media, RasterFrame};
use crate::ocrdecode::{DecodeError, HeadGeometry, RawHeadOutput};
use crate::Rect;

pub use oracle::{oracle_card_detect, oracle_fake_media, oracle_ocr, oracle_tamper, OracleOcr};
pub use profile::{
    builtin_profile, builtin_profiles, simulate_latency, DeviceProfile, ModelKind, CALIBRATED, LATENCY_JITTER, PROFILE_DIR_ENV,
};
pub use template::{template_recognize, TEMPLATE_MIN_NCC};

#[derive(Debug, Error)]
pub enum InferError {
    #[error("unknown model id {0:?}")]
    UnknownModel(String),
    #[error("unknown device profile {0:?}")]
    UnknownProfile(String),
    #[error("invalid device profile: {0}")]
    InvalidProfile(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("backend needs pixels but the frame has none")]
    MissingPixels,
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("cannot read profile {path}: {source}")]
    ProfileIo { path: String, source: std::io::Error },
}

/// Error injection for the oracle backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Per-digit chance of reading a wrong digit.
    pub digit_error_rate: f64,
    pub detect_error_rate: f64,
    pub media_error_rate: f64,
    pub tamper_error_rate: f64,
    pub seed: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self::clean(0)
    }
}

impl BackendConfig {
    pub fn clean(seed: u64) -> Self {
        Self {
            digit_error_rate: 0.0,
            detect_error_rate: 0.0,
            media_error_rate: 0.0,
            tamper_error_rate: 0.0,
            seed,
        }
    }

    pub fn with_digit_error(mut self, rate: f64) -> Self {
        self.digit_error_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<(), InferError> {
        for r in [self.digit_error_rate, self.detect_error_rate, self.media_error_rate, self.tamper_error_rate] {
            if !(0.0..1.0).contains(&r) {
                return Err(InferError::InvalidConfig(format!("error rate {r} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Parses `ε_d,ε_c,ε_m,ε_t`. Missing trailing rates default to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates(pub [f64; 4]);

impl FromStr for ErrorRates {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.is_empty() || parts.len() > 4 {
            return Err("expected 1 to 4 comma-separated rates".into());
        }
        let mut r = [0.0; 4];
        for (i, p) in parts.iter().enumerate() {
            r[i] = p.parse::<f64>().map_err(|e| format!("{p:?}: {e}"))?;
            if !(0.0..1.0).contains(&r[i]) {
                return Err(format!("rate {} outside [0, 1)", r[i]));
            }
        }
        Ok(ErrorRates(r))
    }
}

impl ErrorRates {
    pub fn config(self, seed: u64) -> BackendConfig {
        let [d, c, m, t] = self.0;
        BackendConfig {
            digit_error_rate: d,
            detect_error_rate: c,
            media_error_rate: m,
            tamper_error_rate: t,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardCategory {
    NumberSide,
    NonNumberSide,
    Background,
}

impl CardCategory {
    pub const ALL: [CardCategory; 3] = [CardCategory::NumberSide, CardCategory::NonNumberSide, CardCategory::Background];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardDetectLabel {
    pub category: CardCategory,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FakeMediaLabel {
    pub category: Media,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedLogo {
    pub logo_id: LogoId,
    pub confidence: f64,
    pub rect: Rect,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TamperObservation {
    pub objects: Vec<ObservedLogo>,
}

/// What a backend sees of one frame. Pixels are present only when the
/// backend asked for them.
#[derive(Debug, Clone)]
pub struct FrameView {
    pub truth: FrameTruth,
    pub raster: Option<RasterFrame>,
}

impl FrameView {
    /// The view after cropping to `crop` and resampling to full size.
    pub fn zoomed(&self, crop: &Rect) -> FrameView {
        FrameView {
            truth: self.truth.zoomed(crop),
            raster: self.raster.as_ref().map(|r| r.crop_resize(crop)),
        }
    }
}

/// The four per-frame models. Implementations are immutable and take an
/// explicit per-call seed, so any schedule reproduces the serial result.
pub trait Backends: Send + Sync {
    fn geometry(&self) -> &HeadGeometry;
    fn needs_pixels(&self) -> bool {
        false
    }
    fn ocr(&self, view: &FrameView, call_seed: u64) -> Result<RawHeadOutput, InferError>;
    fn card_detect(&self, view: &FrameView, call_seed: u64) -> Result<CardDetectLabel, InferError>;
    fn fake_media(&self, view: &FrameView, call_seed: u64) -> Result<FakeMediaLabel, InferError>;
    fn tamper(&self, view: &FrameView, call_seed: u64) -> Result<TamperObservation, InferError>;
}

#[derive(Debug)]
pub struct OracleBackends {
    geom: HeadGeometry,
    cfg: BackendConfig,
    warnings: AtomicU64,
}

impl OracleBackends {
    pub fn new(geom: HeadGeometry, cfg: BackendConfig) -> Result<Self, InferError> {
        geom.validate()?;
        cfg.validate()?;
        Ok(Self { geom, cfg, warnings: AtomicU64::new(0) })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    /// Truth boxes that overlapped no anchor and fell back to the nearest one.
    pub fn anchor_warnings(&self) -> u64 {
        self.warnings.load(Ordering::Relaxed)
    }
}

impl Backends for OracleBackends {
    fn geometry(&self) -> &HeadGeometry {
        &self.geom
    }

    fn ocr(&self, view: &FrameView, call_seed: u64) -> Result<RawHeadOutput, InferError> {
        let r = oracle_ocr(&view.truth, &self.geom, &self.cfg, call_seed);
        if r.fallback_anchors > 0 {
            self.warnings.fetch_add(r.fallback_anchors as u64, Ordering::Relaxed);
        }
        Ok(r.output)
    }

    fn card_detect(&self, view: &FrameView, call_seed: u64) -> Result<CardDetectLabel, InferError> {
        Ok(oracle_card_detect(&view.truth, &self.cfg, call_seed))
    }

    fn fake_media(&self, view: &FrameView, call_seed: u64) -> Result<FakeMediaLabel, InferError> {
        Ok(oracle_fake_media(&view.truth, &self.cfg, call_seed))
    }

    fn tamper(&self, view: &FrameView, call_seed: u64) -> Result<TamperObservation, InferError> {
        Ok(oracle_tamper(&view.truth, &self.cfg, call_seed))
    }
}

/// Pixel-reading OCR; the other tasks come from the oracle.
#[derive(Debug)]
pub struct TemplateBackends {
    oracle: OracleBackends,
}

impl TemplateBackends {
    pub fn new(geom: HeadGeometry, cfg: BackendConfig) -> Result<Self, InferError> {
        Ok(Self { oracle: OracleBackends::new(geom, cfg)? })
    }
}

impl Backends for TemplateBackends {
    fn geometry(&self) -> &HeadGeometry {
        self.oracle.geometry()
    }

    fn needs_pixels(&self) -> bool {
        true
    }

    fn ocr(&self, view: &FrameView, _call_seed: u64) -> Result<RawHeadOutput, InferError> {
        let raster = view.raster.as_ref().ok_or(InferError::MissingPixels)?;
        Ok(template_recognize(raster, self.geometry()))
    }

    fn card_detect(&self, view: &FrameView, call_seed: u64) -> Result<CardDetectLabel, InferError> {
        self.oracle.card_detect(view, call_seed)
    }

    fn fake_media(&self, view: &FrameView, call_seed: u64) -> Result<FakeMediaLabel, InferError> {
        self.oracle.fake_media(view, call_seed)
    }

    fn tamper(&self, view: &FrameView, call_seed: u64) -> Result<TamperObservation, InferError> {
        self.oracle.tamper(view, call_seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_rates_parse() {
        assert_eq!("0.1,0.2".parse::<ErrorRates>().unwrap(), ErrorRates([0.1, 0.2, 0.0, 0.0]));
        assert!("0.1,x".parse::<ErrorRates>().is_err());
        assert!("1.0".parse::<ErrorRates>().is_err());
        assert!("0,0,0,0,0".parse::<ErrorRates>().is_err());
    }

    #[test]
    fn config_rejects_rate_of_one() {
        let mut c = BackendConfig::clean(1);
        c.media_error_rate = 1.0;
        assert!(c.validate().is_err());
    }
}
