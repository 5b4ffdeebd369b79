use serde::{Deserialize, Serialize};

use super::{luhn_valid, DigitBox};

/// Vertical-center tolerance for grouping boxes into a text line, as a
/// fraction of the median box height.
const LINE_TOLERANCE: f64 = 0.6;

pub const PAN_LENGTHS: [usize; 2] = [15, 16];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanCandidate {
    pub digits: String,
    /// Mean digit score.
    pub confidence: f64,
    pub boxes: Vec<DigitBox>,
    pub luhn_valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Expiry {
    pub month: u8,
    pub year: u8,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Groups boxes into text lines, top to bottom, each sorted left to right.
pub fn group_lines(boxes: &[DigitBox]) -> Vec<Vec<DigitBox>> {
    if boxes.is_empty() {
        return Vec::new();
    }
    let tol = LINE_TOLERANCE * median(boxes.iter().map(|b| b.h).collect());
    let mut sorted = boxes.to_vec();
    sorted.sort_by(|a, b| {
        a.cy.total_cmp(&b.cy)
            .then(a.cx.total_cmp(&b.cx))
            .then(b.score.total_cmp(&a.score))
            .then(a.digit.cmp(&b.digit))
            .then(a.h.total_cmp(&b.h))
            .then(a.w.total_cmp(&b.w))
    });
    let mut lines: Vec<Vec<DigitBox>> = Vec::new();
    let mut line_cy = 0.0;
    for b in sorted {
        match lines.last_mut() {
            Some(line) if (b.cy - line_cy).abs() <= tol => {
                line.push(b);
                line_cy = line.iter().map(|x| x.cy).sum::<f64>() / line.len() as f64;
            }
            _ => {
                line_cy = b.cy;
                lines.push(vec![b]);
            }
        }
    }
    for line in &mut lines {
        line.sort_by(|a, b| a.cx.total_cmp(&b.cx).then(b.score.total_cmp(&a.score)));
    }
    lines
}

fn mean_score(line: &[DigitBox]) -> f64 {
    line.iter().map(|b| b.score).sum::<f64>() / line.len() as f64
}

fn digit_string(line: &[DigitBox]) -> String {
    line.iter().map(|b| char::from(b'0' + b.digit)).collect()
}

/// Reads the card number from the line holding the most digits.
///
/// Returns `None` unless that line has a valid card-number length. Luhn
/// validity is recorded on the candidate, not required.
pub fn assemble_pan(boxes: &[DigitBox]) -> Option<PanCandidate> {
    let lines = group_lines(boxes);
    let line = lines.into_iter().max_by(|a, b| {
        a.len()
            .cmp(&b.len())
            .then(mean_score(a).total_cmp(&mean_score(b)))
            // prefer the upper line on a full tie
            .then(b[0].cy.total_cmp(&a[0].cy))
    })?;
    if !PAN_LENGTHS.contains(&line.len()) {
        return None;
    }
    let digits = digit_string(&line);
    let valid = luhn_valid(&digits).unwrap_or(false);
    Some(PanCandidate {
        confidence: mean_score(&line),
        luhn_valid: valid,
        digits,
        boxes: line,
    })
}

/// Reads an MMYY expiry from a four-digit line. When several lines qualify
/// the highest-scoring one wins.
pub fn assemble_expiry(boxes: &[DigitBox]) -> Option<Expiry> {
    group_lines(boxes)
        .into_iter()
        .filter(|l| l.len() == 4)
        .filter_map(|l| {
            let d: Vec<u8> = l.iter().map(|b| b.digit).collect();
            let month = d[0] * 10 + d[1];
            let year = d[2] * 10 + d[3];
            (1..=12).contains(&month).then(|| (Expiry { month, year }, mean_score(&l), l[0].cy))
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.total_cmp(&a.2)))
        .map(|(e, _, _)| e)
}
