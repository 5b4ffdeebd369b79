use super::{assemble_pan, DigitBox, HeadGeometry};
use crate::Rect;

pub const DEFAULT_SMALL_FONT_RATIO: f64 = 0.04;

/// Growth applied to the tight digit bounds before fitting the aspect ratio.
const CROP_MARGIN: f64 = 1.25;

/// Decides whether a frame should be re-run on a zoomed crop.
///
/// Triggers when the median digit height is below `small_font_ratio` of the
/// input height and the boxes did not yield a Luhn-valid card number. The
/// returned crop covers every box with a 25% margin, has the input aspect
/// ratio and lies inside the frame.
pub fn needs_zoom(boxes: &[DigitBox], geom: &HeadGeometry, small_font_ratio: f64) -> Option<Rect> {
    if boxes.is_empty() {
        return None;
    }
    let mut heights: Vec<f64> = boxes.iter().map(|b| b.h).collect();
    heights.sort_by(f64::total_cmp);
    let n = heights.len();
    let median = if n % 2 == 1 { heights[n / 2] } else { (heights[n / 2 - 1] + heights[n / 2]) / 2.0 };
    if median / geom.input_h >= small_font_ratio {
        return None;
    }
    if assemble_pan(boxes).is_some_and(|c| c.luhn_valid) {
        return None;
    }
    let bounds = boxes.iter().map(DigitBox::rect).reduce(|a, b| a.union(&b))?;
    Some(fit_crop(&bounds, geom))
}

/// Expands `bounds` by the margin, grows it to the input aspect ratio and
/// shifts it into the frame (shrinking only when it cannot fit).
pub(crate) fn fit_crop(bounds: &Rect, geom: &HeadGeometry) -> Rect {
    let aspect = geom.input_w / geom.input_h;
    let (cx, cy) = bounds.center();
    let mut w = (bounds.w * CROP_MARGIN).max(bounds.h * CROP_MARGIN * aspect);
    if w > geom.input_w {
        w = geom.input_w;
    }
    let h = w / aspect;
    let x = (cx - w / 2.0).clamp(0.0, geom.input_w - w);
    let y = (cy - h / 2.0).clamp(0.0, geom.input_h - h);
    Rect::new(x, y, w, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(h: f64, n: usize, digits: Option<&str>) -> Vec<DigitBox> {
        (0..n)
            .map(|i| DigitBox {
                cx: 200.0 + i as f64 * h * 0.9,
                cy: 190.0,
                w: h * 0.7,
                h,
                digit: digits.map_or(3, |d| d.as_bytes()[i] - b'0'),
                score: 0.9,
                scale: 0,
                row: 0,
                col: 0,
                anchor: 0,
            })
            .collect()
    }

    #[test]
    fn small_digits_without_pan_zoom() {
        let g = HeadGeometry::default();
        let crop = needs_zoom(&line(10.0, 9, None), &g, 0.04).unwrap();
        assert!((crop.w / crop.h - 1.6).abs() < 1e-9);
        assert!(crop.x >= 0.0 && crop.y >= 0.0 && crop.right() <= 600.0 + 1e-9 && crop.bottom() <= 375.0 + 1e-9);
        for b in line(10.0, 9, None) {
            let r = b.rect();
            assert!(r.x >= crop.x && r.right() <= crop.right());
        }
    }

    #[test]
    fn large_digits_do_not_zoom() {
        assert!(needs_zoom(&line(30.0, 9, None), &HeadGeometry::default(), 0.04).is_none());
    }

    #[test]
    fn valid_pan_suppresses_zoom() {
        let boxes = line(10.0, 16, Some("4111111111111111"));
        assert!(needs_zoom(&boxes, &HeadGeometry::default(), 0.04).is_none());
    }

    #[test]
    fn empty_is_none() {
        assert!(needs_zoom(&[], &HeadGeometry::default(), 0.04).is_none());
    }

    #[test]
    fn crop_clamps_at_frame_edge() {
        let g = HeadGeometry::default();
        let c = fit_crop(&Rect::new(560.0, 350.0, 30.0, 20.0), &g);
        assert!(c.right() <= 600.0 + 1e-9 && c.bottom() <= 375.0 + 1e-9);
        let big = fit_crop(&Rect::new(0.0, 0.0, 590.0, 300.0), &g);
        assert_eq!((big.w, big.h), (600.0, 375.0));
    }
}
