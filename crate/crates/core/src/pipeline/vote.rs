use std::collections::BTreeMap;

use crate::ocrdecode::{Expiry, PanCandidate};

/// Plurality vote over card-number reads.
///
/// Ties go to the larger summed confidence, then to the lexicographically
/// smaller number. The returned candidate is the most confident read of the
/// winning number, with its confidence replaced by the group mean.
pub fn vote_pan(candidates: &[PanCandidate]) -> Option<PanCandidate> {
    let mut groups: BTreeMap<&str, (usize, f64, &PanCandidate)> = BTreeMap::new();
    for c in candidates {
        let g = groups.entry(c.digits.as_str()).or_insert((0, 0.0, c));
        g.0 += 1;
        g.1 += c.confidence;
        if c.confidence > g.2.confidence {
            g.2 = c;
        }
    }
    // BTreeMap iterates in ascending digit order, so `>` keeps the smaller
    // string on a full tie
    let mut best: Option<(&str, usize, f64, &PanCandidate)> = None;
    for (digits, (n, sum, rep)) in groups {
        let better = match best {
            None => true,
            Some((_, bn, bs, _)) => n > bn || (n == bn && sum > bs),
        };
        if better {
            best = Some((digits, n, sum, rep));
        }
    }
    best.map(|(_, n, sum, rep)| PanCandidate { confidence: sum / n as f64, ..rep.clone() })
}

/// Plurality vote over expiry reads; ties go to the larger summed
/// confidence, then to the earlier date.
pub fn vote_expiry(reads: &[(Expiry, f64)]) -> Option<Expiry> {
    let mut groups: BTreeMap<(u8, u8), (usize, f64)> = BTreeMap::new();
    for (e, conf) in reads {
        let g = groups.entry((e.year, e.month)).or_insert((0, 0.0));
        g.0 += 1;
        g.1 += conf;
    }
    let mut best: Option<((u8, u8), usize, f64)> = None;
    for (k, (n, sum)) in groups {
        if best.is_none_or(|(_, bn, bs)| n > bn || (n == bn && sum > bs)) {
            best = Some((k, n, sum));
        }
    }
    best.map(|((year, month), _, _)| Expiry { month, year })
}
