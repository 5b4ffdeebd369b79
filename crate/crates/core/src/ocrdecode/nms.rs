use std::cmp::Ordering;

use super::DigitBox;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.45;

/// Score descending, then left to right, then remaining fields so the order
/// is total.
pub(crate) fn priority(a: &DigitBox, b: &DigitBox) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.cx.total_cmp(&b.cx))
        .then(a.cy.total_cmp(&b.cy))
        .then((a.scale, a.row, a.col, a.anchor).cmp(&(b.scale, b.row, b.col, b.anchor)))
        .then(a.digit.cmp(&b.digit))
}

/// Greedy class-agnostic non-max suppression.
///
/// A box survives iff its IoU with every higher-priority survivor is below
/// `iou_threshold`. Output is in priority order.
pub fn nms(boxes: &[DigitBox], iou_threshold: f64) -> Vec<DigitBox> {
    let mut sorted = boxes.to_vec();
    sorted.sort_by(priority);
    let mut kept: Vec<DigitBox> = Vec::with_capacity(sorted.len());
    for b in sorted {
        let r = b.rect();
        if kept.iter().all(|k| k.rect().iou(&r) < iou_threshold) {
            kept.push(b);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64, score: f64) -> DigitBox {
        DigitBox { cx, cy, w, h, digit: 1, score, scale: 0, row: 0, col: 0, anchor: 0 }
    }

    #[test]
    fn identical_boxes_keep_best() {
        let out = nms(&[bx(10.0, 10.0, 5.0, 8.0, 0.8), bx(10.0, 10.0, 5.0, 8.0, 0.9)], 0.45);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 0.9);
    }

    #[test]
    fn disjoint_boxes_all_kept() {
        let input: Vec<_> = (0..10).map(|i| bx(i as f64 * 20.0, 10.0, 10.0, 10.0, 0.5 + i as f64 * 0.01)).collect();
        assert_eq!(nms(&input, 0.45).len(), 10);
    }

    #[test]
    fn suppressed_box_does_not_suppress() {
        // a overlaps b, b overlaps c, a and c are disjoint: greedy keeps a and c
        let a = bx(0.0, 0.0, 10.0, 10.0, 0.9);
        let b = bx(4.0, 0.0, 10.0, 10.0, 0.8);
        let c = bx(9.0, 0.0, 10.0, 10.0, 0.7);
        let out = nms(&[c, b, a], 0.3);
        assert_eq!(out.iter().map(|x| x.score).collect::<Vec<_>>(), vec![0.9, 0.7]);
    }

    #[test]
    fn empty_input() {
        assert!(nms(&[], 0.5).is_empty());
    }
}
