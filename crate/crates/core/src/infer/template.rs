use std::collections::HashMap;

use crate::cardsynth::font::{cell_width, glyph_mask, GLYPH_COLS};
use crate::cardsynth::{RasterFrame, FRAME_H, FRAME_W};
use crate::ocrdecode::{best_anchor, encode_box, HeadGeometry, RawHeadOutput};
use crate::Rect;

/// Minimum normalized cross-correlation for a glyph match.
pub const TEMPLATE_MIN_NCC: f64 = 0.7;

const BRIGHT_LUMA: f32 = 190.0;
const DARK_LUMA: f32 = 60.0;
const MIN_GLYPH_H: usize = 6;
const MAX_GLYPH_H: usize = 90;
const MAX_GLYPH_ASPECT: f64 = 1.2;

#[derive(Debug, Clone, Copy)]
struct Blob {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Blob {
    fn w(&self) -> usize {
        self.x1 - self.x0 + 1
    }
    fn h(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

/// Bounding boxes of the 8-connected components of `mask`, in scan order.
fn components(mask: &[bool], w: usize, h: usize) -> Vec<Blob> {
    let mut seen = vec![false; mask.len()];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut b = Blob { x0: start % w, y0: start / w, x1: start % w, y1: start / w };
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            b.x0 = b.x0.min(x);
            b.x1 = b.x1.max(x);
            b.y0 = b.y0.min(y);
            b.y1 = b.y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        blobs.push(b);
    }
    blobs
}

/// Pearson correlation between the luma patch at (x, y) and a binary mask.
fn ncc(luma: &[f32], x: usize, y: usize, mask: &[bool], w: usize, h: usize) -> f64 {
    let n = (w * h) as f64;
    let (mut sv, mut st, mut svv, mut stt, mut svt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for j in 0..h {
        let row = &luma[(y + j) * FRAME_W + x..(y + j) * FRAME_W + x + w];
        for (i, &v) in row.iter().enumerate() {
            let v = v as f64;
            let t = if mask[j * w + i] { 1.0 } else { 0.0 };
            sv += v;
            st += t;
            svv += v * v;
            stt += t * t;
            svt += v * t;
        }
    }
    let cov = svt - sv * st / n;
    let var = (svv - sv * sv / n) * (stt - st * st / n);
    if var <= 1e-9 {
        0.0
    } else {
        cov / var.sqrt()
    }
}

fn ink_left(mask: &[bool], w: usize, h: usize) -> usize {
    (0..w).find(|&x| (0..h).any(|y| mask[y * w + x])).unwrap_or(0)
}

/// Best (ncc, digit, cell) for a glyph-sized blob. Cell widths near the
/// font aspect and one-pixel shifts are tried; the template's leftmost ink
/// column is aligned with the blob's.
fn match_blob(luma: &[f32], b: &Blob, dark_ink: bool, cache: &mut HashMap<(u8, usize, usize), Vec<bool>>) -> Option<(f64, u8, Rect)> {
    let h = b.h();
    let nominal = cell_width(h as f64).round() as i64;
    let sign = if dark_ink { -1.0 } else { 1.0 };
    let mut best: Option<(f64, u8, Rect)> = None;
    for digit in 0..10u8 {
        for w in (nominal - 1).max(GLYPH_COLS as i64)..=nominal + 1 {
            let w = w as usize;
            let mask = cache.entry((digit, w, h)).or_insert_with(|| glyph_mask(digit, w, h));
            let left = ink_left(mask, w, h) as i64;
            for dx in -1..=1i64 {
                let x = b.x0 as i64 - left + dx;
                if x < 0 || x as usize + w > FRAME_W || b.y0 + h > FRAME_H {
                    continue;
                }
                let score = sign * ncc(luma, x as usize, b.y0, mask, w, h);
                if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                    best = Some((score, digit, Rect::new(x as f64, b.y0 as f64, w as f64, h as f64)));
                }
            }
        }
    }
    best.filter(|(s, _, _)| *s >= TEMPLATE_MIN_NCC)
}

/// Reads digit glyphs from pixels and encodes them as head output.
///
/// Candidate glyphs are the connected components of very bright or very
/// dark pixels with glyph-like proportions. Each is matched against the ten
/// font templates; a correlation peak of at least [`TEMPLATE_MIN_NCC`]
/// becomes a digit score at the best-IoU anchor.
pub fn template_recognize(frame: &RasterFrame, geom: &HeadGeometry) -> RawHeadOutput {
    let luma = frame.luma();
    let mut cache = HashMap::new();
    let mut hits = Vec::new();
    for dark_ink in [false, true] {
        let mask: Vec<bool> = luma
            .iter()
            .map(|&l| if dark_ink { l < DARK_LUMA } else { l > BRIGHT_LUMA })
            .collect();
        for b in components(&mask, FRAME_W, FRAME_H) {
            let h = b.h();
            if !(MIN_GLYPH_H..=MAX_GLYPH_H).contains(&h) || b.w() as f64 > MAX_GLYPH_ASPECT * h as f64 {
                continue;
            }
            if let Some(hit) = match_blob(&luma, &b, dark_ink, &mut cache) {
                hits.push(hit);
            }
        }
    }
    hits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.x.total_cmp(&b.2.x)).then(a.2.y.total_cmp(&b.2.y)));
    let mut out = RawHeadOutput::background(geom);
    let mut taken = std::collections::HashSet::new();
    let mut scores = vec![0.0f32; geom.categories];
    for (score, digit, rect) in hits {
        let ((s, r, c, a), iou) = best_anchor(geom, &rect);
        if iou <= 0.0 || !taken.insert((s, r, c, a)) {
            continue;
        }
        let anchor = geom.anchor_for(s, r, c, a).expect("slot from geometry");
        let p = score.min(1.0) as f32;
        scores.fill(0.0);
        scores[0] = 1.0 - p;
        scores[digit as usize + 1] = p;
        out.set_slot(geom, s, r, c, a, encode_box(&anchor, &rect), &scores);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cardsynth::{generate_session, CardSpec, FontStyle, Layout, SessionScript};
    use crate::ocrdecode::{decode_boxes, read_pan, DEFAULT_SCORE_THRESHOLD};

    fn session(style: FontStyle, blur: f64) -> crate::cardsynth::ScanSession {
        let card = CardSpec {
            pan: "5105105105105100".into(),
            expiry: Some(crate::ocrdecode::Expiry { month: 8, year: 26 }),
            layout: Layout::QuadGroups,
            font_style: style,
            digit_height_px: 32,
            number_side_logos: vec![],
            back_side_logos: vec![],
        };
        let script = SessionScript { entry_frames: 0, centered_frames: 1, jitter_px: 0.0, blur_sigma: blur, card_scale: 0.95, ..Default::default() };
        generate_session("t", card, &script, 11).unwrap()
    }

    #[test]
    fn reads_clean_flat_and_embossed() {
        let geom = HeadGeometry::default();
        for style in [FontStyle::Flat, FontStyle::Embossed] {
            let s = session(style, 0.0);
            let out = template_recognize(&s.raster(0), &geom);
            let pan = read_pan(&out, &geom).unwrap().expect("pan");
            assert_eq!(pan.digits, "5105105105105100", "{style:?}");
        }
    }

    #[test]
    fn blank_frame_is_background() {
        let geom = HeadGeometry::default();
        let out = template_recognize(&RasterFrame::filled([128, 128, 128]), &geom);
        assert_eq!(out, RawHeadOutput::background(&geom));
    }

    #[test]
    fn blur_loses_boxes() {
        let geom = HeadGeometry::default();
        let count = |blur| {
            let s = session(FontStyle::Flat, blur);
            decode_boxes(&template_recognize(&s.raster(0), &geom), &geom, DEFAULT_SCORE_THRESHOLD).unwrap().len()
        };
        assert!(count(3.0) < count(0.0));
    }

    #[test]
    fn components_are_eight_connected() {
        let mut m = vec![false; 16];
        m[0] = true;
        m[5] = true;
        m[15] = true;
        let c = components(&m, 4, 4);
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].w(), c[0].h()), (2, 2));
    }
}
