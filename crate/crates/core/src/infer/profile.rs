use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::InferError;
use crate::seed;

/// Directory searched for `<name>.json` profiles before the built-ins.
pub const PROFILE_DIR_ENV: &str = "CARDPIPE_PROFILE_DIR";

/// Relative latency jitter applied by [`simulate_latency`].
pub const LATENCY_JITTER: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ocr,
    CardDetect,
    FakeMedia,
    Tamper,
}

impl ModelKind {
    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Ocr => "ocr",
            ModelKind::CardDetect => "card_detect",
            ModelKind::FakeMedia => "fake_media",
            ModelKind::Tamper => "tamper",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = InferError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ocr" => Ok(ModelKind::Ocr),
            "card_detect" => Ok(ModelKind::CardDetect),
            "fake_media" => Ok(ModelKind::FakeMedia),
            "tamper" => Ok(ModelKind::Tamper),
            _ => Err(InferError::UnknownModel(s.to_string())),
        }
    }
}

/// A simulated device: per-model latency, worker count and camera cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    #[serde(rename = "_comment", default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub name: String,
    pub ocr_ms: f64,
    pub card_detect_ms: f64,
    pub fake_media_ms: f64,
    pub tamper_ms: f64,
    pub workers: usize,
    pub camera_fps: f64,
    /// Total inference throughput, in single-worker units, when several
    /// workers run at once. Each of `k` concurrent jobs advances at
    /// `min(1, parallel_capacity / k)`. Defaults to `workers`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallel_capacity: Option<f64>,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<(), InferError> {
        let bad = |m: String| Err(InferError::InvalidProfile(format!("{}: {m}", self.name)));
        for (k, v) in [
            ("ocr_ms", self.ocr_ms),
            ("card_detect_ms", self.card_detect_ms),
            ("fake_media_ms", self.fake_media_ms),
            ("tamper_ms", self.tamper_ms),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{k} must be positive"));
            }
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.camera_fps.is_finite() && self.camera_fps > 0.0) {
            return bad("camera_fps must be positive".into());
        }
        if let Some(c) = self.parallel_capacity {
            if !(c.is_finite() && c >= 1.0) {
                return bad("parallel_capacity must be at least 1".into());
            }
        }
        Ok(())
    }

    pub fn latency(&self, model: ModelKind) -> f64 {
        match model {
            ModelKind::Ocr => self.ocr_ms,
            ModelKind::CardDetect => self.card_detect_ms,
            ModelKind::FakeMedia => self.fake_media_ms,
            ModelKind::Tamper => self.tamper_ms,
        }
    }

    pub fn capacity(&self) -> f64 {
        self.parallel_capacity.unwrap_or(self.workers as f64)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, InferError> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let p: DeviceProfile =
            serde_path_to_error::deserialize(de).map_err(|e| InferError::InvalidProfile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, InferError> {
        let bytes = std::fs::read(path).map_err(|source| InferError::ProfileIo {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&bytes)
    }

    /// Finds a profile by file path, then in `$CARDPIPE_PROFILE_DIR`, then
    /// among the built-ins.
    pub fn resolve(name_or_path: &str) -> Result<Self, InferError> {
        let path = Path::new(name_or_path);
        if path.is_file() {
            return Self::load(path);
        }
        if let Ok(dir) = std::env::var(PROFILE_DIR_ENV) {
            let candidate = Path::new(&dir).join(format!("{name_or_path}.json"));
            if candidate.is_file() {
                return Self::load(&candidate);
            }
        }
        builtin_profile(name_or_path)
    }
}

const BUILTIN: [(&str, &str); 9] = [
    ("iphone-5s-like", include_str!("../../profiles/iphone-5s-like.json")),
    ("iphone-se-like", include_str!("../../profiles/iphone-se-like.json")),
    ("iphone-xr-like", include_str!("../../profiles/iphone-xr-like.json")),
    ("lg-k20-like", include_str!("../../profiles/lg-k20-like.json")),
    ("xiaomi-redmi-7-like", include_str!("../../profiles/xiaomi-redmi-7-like.json")),
    ("pixel-2-like", include_str!("../../profiles/pixel-2-like.json")),
    ("midrange-android-like", include_str!("../../profiles/midrange-android-like.json")),
    ("entry-android-like", include_str!("../../profiles/entry-android-like.json")),
    ("budget-android-like", include_str!("../../profiles/budget-android-like.json")),
];

/// The six profiles calibrated against measured producer/consumer FPS.
pub const CALIBRATED: [&str; 6] = [
    "iphone-5s-like",
    "iphone-se-like",
    "iphone-xr-like",
    "lg-k20-like",
    "xiaomi-redmi-7-like",
    "pixel-2-like",
];

pub fn builtin_profile(name: &str) -> Result<DeviceProfile, InferError> {
    let (_, json) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| InferError::UnknownProfile(name.to_string()))?;
    DeviceProfile::from_json(json.as_bytes())
}

pub fn builtin_profiles() -> Vec<DeviceProfile> {
    BUILTIN
        .iter()
        .map(|(n, _)| builtin_profile(n).expect("built-in profiles are valid"))
        .collect()
}

/// Latency of one model call. With `jitter_seed`, the result is drawn
/// uniformly within ±5% of the profile value.
pub fn simulate_latency(profile: &DeviceProfile, model: ModelKind, jitter_seed: Option<u64>) -> f64 {
    let base = profile.latency(model);
    match jitter_seed {
        None => base,
        Some(s) => {
            let mut rng = seed::rng(s, &[seed::tag(model.id())]);
            base * (1.0 + rng.gen_range(-LATENCY_JITTER..=LATENCY_JITTER))
        }
    }
}
