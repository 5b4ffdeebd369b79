use rand::seq::SliceRandom;
use rand::Rng;

use super::{BackendConfig, CardCategory, CardDetectLabel, FakeMediaLabel, ObservedLogo, TamperObservation};
use crate::cardsynth::{FrameTruth, LogoId, Media, Side};
use crate::ocrdecode::{best_anchor, encode_box, nearest_anchor, HeadGeometry, RawHeadOutput};
use crate::seed;

pub(crate) const DIGIT_SCORE: f32 = 0.95;
pub(crate) const LABEL_CONFIDENCE: f64 = 0.9;

pub struct OracleOcr {
    pub output: RawHeadOutput,
    /// Truth boxes that overlapped no anchor.
    pub fallback_anchors: usize,
    /// Truth boxes that lost their anchor slot to a better-matching box.
    pub collisions: usize,
}

/// Writes each truth digit (card number and expiry) into its best-IoU anchor
/// slot. Each digit is replaced by a random wrong digit with probability
/// `digit_error_rate`. When two digits want the same slot, the one with the
/// higher IoU keeps it.
pub fn oracle_ocr(truth: &FrameTruth, geom: &HeadGeometry, cfg: &BackendConfig, call_seed: u64) -> OracleOcr {
    let mut out = RawHeadOutput::background(geom);
    let mut rng = seed::rng(cfg.seed, &[seed::tag("ocr"), call_seed]);
    let mut fallback_anchors = 0;
    let mut targets = Vec::new();
    for (i, d) in truth.digit_boxes.iter().chain(&truth.expiry_boxes).enumerate() {
        let mut digit = d.digit;
        if cfg.digit_error_rate > 0.0 && rng.gen_bool(cfg.digit_error_rate.min(1.0)) {
            digit = (digit + rng.gen_range(1..10u8)) % 10;
        }
        let (slot, iou) = best_anchor(geom, &d.rect);
        let (slot, iou) = if iou > 0.0 {
            (slot, iou)
        } else {
            fallback_anchors += 1;
            (nearest_anchor(geom, &d.rect), 0.0)
        };
        targets.push((iou, i, slot, d.rect, digit));
    }
    targets.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut taken = std::collections::HashSet::new();
    let mut collisions = 0;
    let mut scores = vec![0.0f32; geom.categories];
    for (_, _, slot, rect, digit) in targets {
        if !taken.insert(slot) {
            collisions += 1;
            continue;
        }
        let (s, r, c, a) = slot;
        let anchor = geom.anchor_for(s, r, c, a).expect("slot from geometry");
        scores.fill(0.0);
        scores[0] = 1.0 - DIGIT_SCORE;
        scores[digit as usize + 1] = DIGIT_SCORE;
        out.set_slot(geom, s, r, c, a, encode_box(&anchor, &rect), &scores);
    }
    OracleOcr { output: out, fallback_anchors, collisions }
}

pub fn oracle_card_detect(truth: &FrameTruth, cfg: &BackendConfig, call_seed: u64) -> CardDetectLabel {
    let mut rng = seed::rng(cfg.seed, &[seed::tag("card_detect"), call_seed]);
    let mut category = match (truth.centered, truth.side) {
        (false, _) => CardCategory::Background,
        (true, Side::Number) => CardCategory::NumberSide,
        (true, Side::NonNumber) => CardCategory::NonNumberSide,
    };
    if cfg.detect_error_rate > 0.0 && rng.gen_bool(cfg.detect_error_rate) {
        let others: Vec<_> = CardCategory::ALL.into_iter().filter(|c| *c != category).collect();
        category = *others.choose(&mut rng).unwrap();
    }
    CardDetectLabel { category, confidence: LABEL_CONFIDENCE }
}

pub fn oracle_fake_media(truth: &FrameTruth, cfg: &BackendConfig, call_seed: u64) -> FakeMediaLabel {
    let mut rng = seed::rng(cfg.seed, &[seed::tag("fake_media"), call_seed]);
    let mut category = truth.media;
    if cfg.media_error_rate > 0.0 && rng.gen_bool(cfg.media_error_rate) {
        let others: Vec<_> = Media::ALL.into_iter().filter(|m| *m != category).collect();
        category = *others.choose(&mut rng).unwrap();
    }
    FakeMediaLabel { category, confidence: LABEL_CONFIDENCE }
}

/// Reports the truth logos. With probability `tamper_error_rate` one logo is
/// dropped or relabelled, or a spurious one added when there are none.
pub fn oracle_tamper(truth: &FrameTruth, cfg: &BackendConfig, call_seed: u64) -> TamperObservation {
    let mut rng = seed::rng(cfg.seed, &[seed::tag("tamper"), call_seed]);
    let mut objects: Vec<ObservedLogo> = truth
        .logo_marks
        .iter()
        .map(|m| ObservedLogo { logo_id: m.logo_id, confidence: LABEL_CONFIDENCE, rect: m.rect })
        .collect();
    if cfg.tamper_error_rate > 0.0 && rng.gen_bool(cfg.tamper_error_rate) {
        if objects.is_empty() {
            objects.push(ObservedLogo {
                logo_id: *LogoId::ALL.choose(&mut rng).unwrap(),
                confidence: LABEL_CONFIDENCE,
                rect: crate::Rect::new(0.0, 0.0, 1.0, 1.0),
            });
        } else {
            let i = rng.gen_range(0..objects.len());
            if rng.gen_bool(0.5) {
                objects.remove(i);
            } else {
                let old = objects[i].logo_id;
                let others: Vec<_> = LogoId::ALL.into_iter().filter(|l| *l != old).collect();
                objects[i].logo_id = *others.choose(&mut rng).unwrap();
            }
        }
    }
    TamperObservation { objects }
}
