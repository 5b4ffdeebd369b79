use serde::{Deserialize, Serialize};

use super::head::{HeadGeometry, RawHeadOutput, BACKGROUND, REGRESSION_COORDS};
use super::DecodeError;
use crate::Rect;

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.5;

/// Scores are treated as already normalized when they sum to one within this.
const NORMALIZED_TOLERANCE: f32 = 1e-4;

/// One detected digit in input-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DigitBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub digit: u8,
    pub score: f64,
    pub scale: usize,
    pub row: usize,
    pub col: usize,
    pub anchor: usize,
}

impl DigitBox {
    pub fn rect(&self) -> Rect {
        Rect::from_center(self.cx, self.cy, self.w, self.h)
    }
}

/// Faster-RCNN style box parameterization relative to an anchor.
pub fn encode_box(anchor: &Rect, target: &Rect) -> [f32; 4] {
    let (ax, ay) = anchor.center();
    let (x, y) = target.center();
    [
        ((x - ax) / anchor.w) as f32,
        ((y - ay) / anchor.h) as f32,
        (target.w / anchor.w).ln() as f32,
        (target.h / anchor.h).ln() as f32,
    ]
}

pub fn decode_box(anchor: &Rect, t: [f32; 4]) -> Rect {
    let (ax, ay) = anchor.center();
    Rect::from_center(
        ax + t[0] as f64 * anchor.w,
        ay + t[1] as f64 * anchor.h,
        anchor.w * (t[2] as f64).exp(),
        anchor.h * (t[3] as f64).exp(),
    )
}

/// Anchor slot with the highest IoU against `target`, with that IoU.
///
/// Ties keep the first slot in (scale, row, col, anchor) order.
pub fn best_anchor(geom: &HeadGeometry, target: &Rect) -> ((usize, usize, usize, usize), f64) {
    let mut best = ((0, 0, 0, 0), -1.0);
    for (si, s) in geom.scales.iter().enumerate() {
        let (sx, sy) = geom.strides(si);
        let max_h = geom.anchor_height_strides * sy;
        let max_w = max_h * geom.anchor_aspects.iter().cloned().fold(0.0, f64::max);
        // only cells whose anchors can reach the target
        let c0 = (((target.x - max_w / 2.0) / sx).floor().max(0.0)) as usize;
        let c1 = ((((target.right() + max_w / 2.0) / sx).ceil()) as usize).min(s.cols);
        let r0 = (((target.y - max_h / 2.0) / sy).floor().max(0.0)) as usize;
        let r1 = ((((target.bottom() + max_h / 2.0) / sy).ceil()) as usize).min(s.rows);
        for row in r0..r1 {
            for col in c0..c1 {
                for a in 0..geom.anchors_per_cell() {
                    let iou = geom.anchor_unchecked(si, row, col, a).iou(target);
                    if iou > best.1 {
                        best = ((si, row, col, a), iou);
                    }
                }
            }
        }
    }
    best
}

/// Anchor slot whose center is nearest to the target center.
pub fn nearest_anchor(geom: &HeadGeometry, target: &Rect) -> (usize, usize, usize, usize) {
    let (tx, ty) = target.center();
    let mut best = ((0, 0, 0, 0), f64::INFINITY);
    for (si, s) in geom.scales.iter().enumerate() {
        let (sx, sy) = geom.strides(si);
        let col = ((tx / sx).floor().max(0.0) as usize).min(s.cols - 1);
        let row = ((ty / sy).floor().max(0.0) as usize).min(s.rows - 1);
        for a in 0..geom.anchors_per_cell() {
            let anchor = geom.anchor_unchecked(si, row, col, a);
            let (ax, ay) = anchor.center();
            let d = (ax - tx).powi(2) + (ay - ty).powi(2) + (anchor.h - target.h).powi(2) + (anchor.w - target.w).powi(2);
            if d < best.1 {
                best = ((si, row, col, a), d);
            }
        }
    }
    best.0
}

fn normalized(scores: &[f32]) -> Vec<f64> {
    let sum: f32 = scores.iter().sum();
    if (sum - 1.0).abs() <= NORMALIZED_TOLERANCE && scores.iter().all(|&s| s >= 0.0) {
        return scores.iter().map(|&s| s as f64).collect();
    }
    let max = scores.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = scores.iter().map(|&s| (s as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Emits a box for every anchor slot whose best category is a digit scoring
/// at least `score_threshold`.
pub fn decode_boxes(out: &RawHeadOutput, geom: &HeadGeometry, score_threshold: f64) -> Result<Vec<DigitBox>, DecodeError> {
    geom.validate()?;
    out.check_shape(geom)?;
    let a_per = geom.anchors_per_cell();
    let cats = geom.categories;
    let frame = geom.input_rect();
    let mut boxes = Vec::new();
    for (si, s) in out.scales.iter().enumerate() {
        if let Some(offset) = s.regression.iter().position(|v| !v.is_finite()) {
            return Err(DecodeError::NonFinite { tensor: "regression", scale: si, offset });
        }
        if let Some(offset) = s.scores.iter().position(|v| !v.is_finite()) {
            return Err(DecodeError::NonFinite { tensor: "score", scale: si, offset });
        }
        for row in 0..s.rows {
            for col in 0..s.cols {
                for a in 0..a_per {
                    let slot = RawHeadOutput::slot(geom, s.cols, row, col, a);
                    let raw = &s.scores[slot * cats..(slot + 1) * cats];
                    // cheap reject before normalizing
                    if raw[BACKGROUND] >= 0.5 && raw[BACKGROUND] <= 1.0 && (raw.iter().sum::<f32>() - 1.0).abs() <= NORMALIZED_TOLERANCE {
                        continue;
                    }
                    let probs = normalized(raw);
                    let (best, &score) = probs
                        .iter()
                        .enumerate()
                        .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(&x.0)))
                        .expect("categories >= 2");
                    if best == BACKGROUND || score < score_threshold {
                        continue;
                    }
                    let t: [f32; 4] = s.regression[slot * REGRESSION_COORDS..(slot + 1) * REGRESSION_COORDS]
                        .try_into()
                        .expect("four coordinates");
                    let anchor = geom.anchor_unchecked(si, row, col, a);
                    let rect = decode_box(&anchor, t);
                    if rect.is_degenerate() || rect.intersection(&frame).is_none() {
                        continue;
                    }
                    let (cx, cy) = rect.center();
                    boxes.push(DigitBox {
                        cx,
                        cy,
                        w: rect.w,
                        h: rect.h,
                        digit: (best - 1) as u8,
                        score,
                        scale: si,
                        row,
                        col,
                        anchor: a,
                    });
                }
            }
        }
    }
    Ok(boxes)
}
