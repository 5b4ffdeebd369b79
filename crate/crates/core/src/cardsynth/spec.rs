use serde::{Deserialize, Serialize};

use super::font::cell_width;
use super::raster::{FRAME_H, FRAME_W};
use super::SynthError;
use crate::ocrdecode::{luhn_valid, Expiry};
use crate::Rect;

/// Canonical card render size; digit heights are given at this size.
pub const CARD_W: f64 = 600.0;
pub const CARD_H: f64 = 375.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    #[serde(rename = "quad-groups-4-4-4-4")]
    QuadGroups,
    #[serde(rename = "amex-4-6-5")]
    Amex,
}

impl Layout {
    pub fn groups(self) -> &'static [usize] {
        match self {
            Layout::QuadGroups => &[4, 4, 4, 4],
            Layout::Amex => &[4, 6, 5],
        }
    }

    pub fn pan_len(self) -> usize {
        self.groups().iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FontStyle {
    Flat,
    Embossed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogoId {
    Visa,
    Mastercard,
    Amex,
    Discover,
    BankA,
    BankB,
    BankC,
}

impl LogoId {
    pub const ALL: [LogoId; 7] = [
        LogoId::Visa,
        LogoId::Mastercard,
        LogoId::Amex,
        LogoId::Discover,
        LogoId::BankA,
        LogoId::BankB,
        LogoId::BankC,
    ];

    /// The card network this logo identifies, if it is a network mark.
    pub fn network(self) -> Option<Network> {
        match self {
            LogoId::Visa => Some(Network::Visa),
            LogoId::Mastercard => Some(Network::Mastercard),
            LogoId::Amex => Some(Network::Amex),
            LogoId::Discover => Some(Network::Discover),
            _ => None,
        }
    }

    pub fn is_bank(self) -> bool {
        self.network().is_none()
    }

    pub fn color(self) -> [u8; 3] {
        match self {
            LogoId::Visa => [70, 110, 200],
            LogoId::Mastercard => [235, 120, 40],
            LogoId::Amex => [60, 150, 200],
            LogoId::Discover => [240, 140, 60],
            LogoId::BankA => [200, 60, 70],
            LogoId::BankB => [60, 160, 90],
            LogoId::BankC => [150, 90, 180],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Network {
    Visa,
    Mastercard,
    Amex,
    Discover,
    Unknown,
}

impl Network {
    pub fn logo(self) -> Option<LogoId> {
        match self {
            Network::Visa => Some(LogoId::Visa),
            Network::Mastercard => Some(LogoId::Mastercard),
            Network::Amex => Some(LogoId::Amex),
            Network::Discover => Some(LogoId::Discover),
            Network::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogoMark {
    pub logo_id: LogoId,
    /// Normalized card coordinates.
    pub position: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardSpec {
    pub pan: String,
    pub expiry: Option<Expiry>,
    pub layout: Layout,
    pub font_style: FontStyle,
    pub digit_height_px: u32,
    pub number_side_logos: Vec<LogoMark>,
    pub back_side_logos: Vec<LogoMark>,
}

/// Digit spacing as a fraction of digit height.
pub(crate) const DIGIT_GAP: f64 = 0.15;
/// Extra space between digit groups, as a fraction of glyph width.
pub(crate) const GROUP_GAP: f64 = 0.6;
/// The card-number line may use at most this share of the card width.
pub(crate) const MAX_LINE_SHARE: f64 = 0.92;

pub(crate) fn line_width(groups: &[usize], h: f64, gap: f64) -> f64 {
    let n: usize = groups.iter().sum();
    let w = cell_width(h);
    n as f64 * w + (n - 1) as f64 * gap * h + (groups.len() - 1) as f64 * GROUP_GAP * w
}

impl CardSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.pan.len() != self.layout.pan_len() {
            return bad(format!("pan has {} digits, layout needs {}", self.pan.len(), self.layout.pan_len()));
        }
        match luhn_valid(&self.pan) {
            Ok(true) => {}
            Ok(false) => return bad("pan fails the Luhn check".into()),
            Err(e) => return bad(format!("pan: {e}")),
        }
        if !(8..=80).contains(&self.digit_height_px) {
            return bad(format!("digit height {} outside [8, 80]", self.digit_height_px));
        }
        if let Some(e) = self.expiry {
            if !(1..=12).contains(&e.month) || e.year > 99 {
                return bad(format!("expiry {:02}/{:02}", e.month, e.year));
            }
        }
        for m in self.number_side_logos.iter().chain(&self.back_side_logos) {
            let p = m.position;
            if p.is_degenerate() || p.x < 0.0 || p.y < 0.0 || p.right() > 1.0 || p.bottom() > 1.0 {
                return bad(format!("logo {:?} outside the card", m.logo_id));
            }
        }
        let width = line_width(self.layout.groups(), self.digit_height_px as f64, DIGIT_GAP);
        if width > MAX_LINE_SHARE * CARD_W {
            return Err(SynthError::LayoutOverflow {
                digit_height: self.digit_height_px,
                width,
            });
        }
        Ok(())
    }

    pub fn network_logo(&self) -> Option<LogoId> {
        self.number_side_logos.iter().map(|m| m.logo_id).find(|l| l.network().is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Number,
    NonNumber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Media {
    Physical,
    Screen,
    Paper,
    Cardboard,
}

impl Media {
    pub const ALL: [Media; 4] = [Media::Physical, Media::Screen, Media::Paper, Media::Cardboard];

    pub fn is_fake(self) -> bool {
        self != Media::Physical
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub side: Side,
    /// Card placement in frame pixels.
    pub card_rect: Rect,
    pub centered: bool,
    pub media: Media,
    pub blur_sigma: f64,
    pub noise_amp: f64,
}

impl SceneSpec {
    /// Whether a placement meets the centering rule: center within 10% of
    /// the frame center and at least 40% of the frame width covered.
    pub fn placement_is_centered(r: &Rect) -> bool {
        let (cx, cy) = r.center();
        (cx - FRAME_W as f64 / 2.0).abs() <= 0.1 * FRAME_W as f64
            && (cy - FRAME_H as f64 / 2.0).abs() <= 0.1 * FRAME_H as f64
            && r.w >= 0.4 * FRAME_W as f64
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.card_rect.is_degenerate() {
            return Err(SynthError::DegenerateCard);
        }
        if self.centered && !Self::placement_is_centered(&self.card_rect) {
            return Err(SynthError::InvalidScene("marked centered but placement is not".into()));
        }
        if !(self.blur_sigma >= 0.0 && self.noise_amp >= 0.0) {
            return Err(SynthError::InvalidScene("blur and noise must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthDigit {
    pub rect: Rect,
    pub digit: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthLogo {
    pub logo_id: LogoId,
    pub rect: Rect,
}

/// Exact annotation of one rendered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    /// Card-number glyph cells, left to right.
    pub digit_boxes: Vec<TruthDigit>,
    /// Expiry glyph cells (MMYY), left to right.
    pub expiry_boxes: Vec<TruthDigit>,
    pub side: Side,
    pub centered: bool,
    pub media: Media,
    pub logo_marks: Vec<TruthLogo>,
    pub session_pan: String,
}

impl FrameTruth {
    /// Maps the annotation into a crop that is resampled to a full frame.
    pub fn zoomed(&self, crop: &Rect) -> FrameTruth {
        let frame = Rect::new(0.0, 0.0, FRAME_W as f64, FRAME_H as f64);
        let sx = FRAME_W as f64 / crop.w;
        let sy = FRAME_H as f64 / crop.h;
        let map = |r: &Rect| -> Option<Rect> {
            Rect::new((r.x - crop.x) * sx, (r.y - crop.y) * sy, r.w * sx, r.h * sy).intersection(&frame)
        };
        let digits = |v: &[TruthDigit]| -> Vec<TruthDigit> {
            v.iter().filter_map(|d| map(&d.rect).map(|rect| TruthDigit { rect, digit: d.digit })).collect()
        };
        FrameTruth {
            digit_boxes: digits(&self.digit_boxes),
            expiry_boxes: digits(&self.expiry_boxes),
            logo_marks: self
                .logo_marks
                .iter()
                .filter_map(|l| map(&l.rect).map(|rect| TruthLogo { logo_id: l.logo_id, rect }))
                .collect(),
            ..self.clone()
        }
    }
}
