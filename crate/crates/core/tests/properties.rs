use proptest::prelude::*;

use cardpipe::cardsynth::{generate_session, sample_card, sample_session, CorpusRanges, SessionScript};
use cardpipe::infer::{builtin_profile, BackendConfig, Backends, DeviceProfile, FrameView, OracleBackends};
use cardpipe::ocrdecode::{
    assemble_pan, decode_box, decode_boxes, encode_box, luhn_valid, needs_zoom, nms, DigitBox, HeadGeometry, PanCandidate,
    DEFAULT_SCORE_THRESHOLD, DEFAULT_SMALL_FONT_RATIO,
};
use cardpipe::pipeline::{run_scan, run_scan_traced, vote_pan, Mode, PipelineConfig};
use cardpipe::{seed, Rect};

fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let (ax0, ay0, ax1, ay1) = (a.0 - a.2 / 2.0, a.1 - a.3 / 2.0, a.0 + a.2 / 2.0, a.1 + a.3 / 2.0);
    let (bx0, by0, bx1, by1) = (b.0 - b.2 / 2.0, b.1 - b.3 / 2.0, b.0 + b.2 / 2.0, b.1 + b.3 / 2.0);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = a.2 * a.3 + b.2 * b.3 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Box `i` survives iff no surviving higher-scored box overlaps it. Scores
/// are distinct, so the recursion is well founded.
fn brute_force_nms(boxes: &[DigitBox], t: f64) -> Vec<usize> {
    fn kept(i: usize, boxes: &[DigitBox], t: f64, memo: &mut Vec<Option<bool>>) -> bool {
        if let Some(k) = memo[i] {
            return k;
        }
        let me = (boxes[i].cx, boxes[i].cy, boxes[i].w, boxes[i].h);
        let mut k = true;
        for j in 0..boxes.len() {
            if boxes[j].score > boxes[i].score && iou(me, (boxes[j].cx, boxes[j].cy, boxes[j].w, boxes[j].h)) >= t && kept(j, boxes, t, memo) {
                k = false;
                break;
            }
        }
        memo[i] = Some(k);
        k
    }
    let mut memo = vec![None; boxes.len()];
    (0..boxes.len()).filter(|&i| kept(i, boxes, t, &mut memo)).collect()
}

fn box_set() -> impl Strategy<Value = Vec<DigitBox>> {
    (1usize..=64).prop_flat_map(|n| {
        (
            prop::collection::vec((0.0..200.0f64, 0.0..100.0f64, 2.0..40.0f64, 2.0..40.0f64, 0u8..10), n),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        )
            .prop_map(|(raw, order)| {
                raw.into_iter()
                    .zip(order)
                    .map(|((cx, cy, w, h, digit), rank)| DigitBox {
                        cx,
                        cy,
                        w,
                        h,
                        digit,
                        score: 0.5 + rank as f64 * 1e-3,
                        scale: 0,
                        row: 0,
                        col: 0,
                        anchor: 0,
                    })
                    .collect()
            })
    })
}

fn luhn_table(s: &str) -> bool {
    const DOUBLED: [u32; 10] = [0, 2, 4, 6, 8, 1, 3, 5, 7, 9];
    let sum: u32 = s
        .bytes()
        .rev()
        .enumerate()
        .map(|(i, b)| {
            let d = (b - b'0') as u32;
            if i % 2 == 1 {
                DOUBLED[d as usize]
            } else {
                d
            }
        })
        .sum();
    sum % 10 == 0
}

fn pan_line(pan: &str, x0: f64, y: f64, h: f64, pitch: f64) -> Vec<DigitBox> {
    pan.bytes()
        .enumerate()
        .map(|(i, b)| DigitBox {
            cx: x0 + i as f64 * pitch,
            cy: y,
            w: h * 0.7,
            h,
            digit: b - b'0',
            score: 0.9,
            scale: 0,
            row: 0,
            col: i,
            anchor: 0,
        })
        .collect()
}

fn profile_with(ocr_ms: f64, cd_ms: f64, workers: usize) -> DeviceProfile {
    DeviceProfile {
        name: "prop".into(),
        ocr_ms,
        card_detect_ms: cd_ms,
        workers,
        parallel_capacity: Some((workers as f64 * 0.8).max(1.0)),
        ..builtin_profile("pixel-2-like").unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn nms_matches_brute_force(boxes in box_set(), t in 0.1..0.9f64) {
        let mut got: Vec<usize> = nms(&boxes, t)
            .iter()
            .map(|k| boxes.iter().position(|b| b.score == k.score).unwrap())
            .collect();
        got.sort_unstable();
        prop_assert_eq!(got, brute_force_nms(&boxes, t));
    }

    #[test]
    fn nms_output_is_pairwise_separated(boxes in box_set()) {
        let kept = nms(&boxes, 0.45);
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(a.rect().iou(&b.rect()) < 0.45);
            }
        }
    }

    #[test]
    fn luhn_matches_table(s in "[0-9]{1,19}") {
        prop_assert_eq!(luhn_valid(&s).unwrap(), luhn_table(&s));
    }

    #[test]
    fn luhn_rejects_non_digits(s in "[0-9]{0,8}[a-z ][0-9]{0,8}") {
        prop_assert!(luhn_valid(&s).is_err());
    }

    #[test]
    fn assemble_is_permutation_invariant(
        digits in "[0-9]{16}",
        order in Just((0..16).collect::<Vec<usize>>()).prop_shuffle(),
        h in 14.0..40.0f64,
    ) {
        let line = pan_line(&digits, 40.0, 180.0, h, h * 0.8);
        let shuffled: Vec<DigitBox> = order.iter().map(|&i| line[i]).collect();
        let a = assemble_pan(&line).map(|c| c.digits);
        let b = assemble_pan(&shuffled).map(|c| c.digits);
        prop_assert_eq!(a.as_deref(), Some(digits.as_str()));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn encode_decode_round_trip(
        ax in 0.0..580.0f64, ay in 0.0..360.0f64, aw in 5.0..60.0f64, ah in 5.0..60.0f64,
        tx in 0.0..580.0f64, ty in 0.0..360.0f64, tw in 1.0..80.0f64, th in 1.0..80.0f64,
    ) {
        let anchor = Rect::new(ax, ay, aw, ah);
        let target = Rect::new(tx, ty, tw, th);
        let back = decode_box(&anchor, encode_box(&anchor, &target));
        let (c1, c2) = (back.center(), target.center());
        prop_assert!((c1.0 - c2.0).abs() < 1e-3 && (c1.1 - c2.1).abs() < 1e-3, "{:?} vs {:?}", back, target);
        prop_assert!((back.w / target.w - 1.0).abs() < 1e-5 && (back.h / target.h - 1.0).abs() < 1e-5);
    }

    #[test]
    fn vote_keeps_winner_when_it_gains_reads(
        reads in prop::collection::vec((prop::sample::select(vec!["4111111111111111", "4111111111111112", "5105105105105100"]), 0.5..1.0f64), 1..12),
        extra in 1usize..4,
    ) {
        let cands: Vec<PanCandidate> = reads
            .iter()
            .map(|(d, c)| PanCandidate { digits: d.to_string(), confidence: *c, boxes: vec![], luhn_valid: true })
            .collect();
        let winner = vote_pan(&cands).unwrap();
        let mut more = cands.clone();
        for _ in 0..extra {
            more.push(PanCandidate { confidence: 0.5, ..winner.clone() });
        }
        prop_assert_eq!(vote_pan(&more).unwrap().digits, winner.digits);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scans_are_deterministic(i in 0usize..50, seed in any::<u64>(), mode in prop::sample::select(Mode::ALL.to_vec())) {
        let session = sample_session(i, &CorpusRanges::default(), seed).unwrap();
        let backends = OracleBackends::new(HeadGeometry::default(), BackendConfig::clean(seed).with_digit_error(0.1)).unwrap();
        let profile = builtin_profile("xiaomi-redmi-7-like").unwrap();
        let cfg = PipelineConfig { mode, seed, ..PipelineConfig::default() };
        let a = run_scan(&session, &backends, &profile, &cfg).unwrap();
        let b = run_scan(&session, &backends, &profile, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn started_frames_are_fresh(
        seed in any::<u64>(),
        ocr_ms in 5.0..600.0f64,
        workers in 1usize..5,
        mode in prop::sample::select(Mode::ALL.to_vec()),
    ) {
        let session = sample_session(0, &CorpusRanges::default(), seed).unwrap();
        let backends = OracleBackends::new(HeadGeometry::default(), BackendConfig::clean(seed)).unwrap();
        let profile = profile_with(ocr_ms, 10.0, workers);
        let cfg = PipelineConfig { mode, seed, stop_on_vote: false, ..PipelineConfig::default() };
        let (workers, capacity) = cfg.shape(profile.workers);
        // newer frames are either still buffered or running on another worker
        let bound = capacity.max(1) + workers - 1;
        let (_, trace) = run_scan_traced(&session, &backends, &profile, &cfg).unwrap();
        prop_assert!(!trace.is_empty());
        for r in &trace {
            prop_assert!(r.newest_produced >= r.frame_index);
            prop_assert!(r.newest_produced - r.frame_index < bound, "{:?} bound {}", r, bound);
            prop_assert!(r.start_ms + 1e-9 >= session.frames[r.frame_index].timestamp_ms);
        }
    }

    #[test]
    fn buffering_never_lowers_throughput(seed in any::<u64>(), ocr_ms in 5.0..1500.0f64, cd_ms in 0.0..50.0f64) {
        let mut rng = seed::rng(seed, &[]);
        let card = sample_card(&mut rng, &CorpusRanges::default());
        let script = SessionScript { entry_frames: 0, centered_frames: 300, give_up_ms: Some(10_000.0), ..SessionScript::default() };
        let session = generate_session("prop", card, &script, seed).unwrap();
        let backends = OracleBackends::new(HeadGeometry::default(), BackendConfig::clean(seed)).unwrap();
        let profile = profile_with(ocr_ms, cd_ms, 1);
        let fps = |mode| {
            let cfg = PipelineConfig { mode, seed, stop_on_vote: false, latency_jitter: false, ..PipelineConfig::default() };
            run_scan(&session, &backends, &profile, &cfg).unwrap().fps
        };
        let (blocking, buffered, parallel) = (fps(Mode::Blocking), fps(Mode::Buffered), fps(Mode::Parallel));
        prop_assert!(buffered >= blocking, "buffered {} < blocking {}", buffered, blocking);
        // one worker in parallel mode is the buffered design
        prop_assert_eq!(parallel, buffered);
    }

    #[test]
    fn zooming_once_is_enough(seed in any::<u64>(), scale in 0.4..0.7f64, height in 8u32..15, idx in 0usize..20) {
        let mut rng = seed::rng(seed, &[]);
        let card = sample_card(&mut rng, &CorpusRanges { digit_height: (height, height), ..CorpusRanges::default() });
        let script = SessionScript { entry_frames: 0, centered_frames: 20, card_scale: scale, jitter_px: 0.0, ..SessionScript::default() };
        let session = generate_session("zoom", card, &script, seed).unwrap();
        let geom = HeadGeometry::default();
        let backends = OracleBackends::new(geom.clone(), BackendConfig::clean(seed)).unwrap();
        let read = |view: &FrameView| nms(&decode_boxes(&backends.ocr(view, 1).unwrap(), &geom, DEFAULT_SCORE_THRESHOLD).unwrap(), 0.45);
        let view = FrameView { truth: session.truth(idx), raster: None };
        let crop = needs_zoom(&read(&view), &geom, DEFAULT_SMALL_FONT_RATIO);
        prop_assert!(crop.is_some(), "small digits should trigger zoom");
        let crop = crop.unwrap();
        prop_assert!(crop.x >= 0.0 && crop.y >= 0.0 && crop.right() <= geom.input_w + 1e-9 && crop.bottom() <= geom.input_h + 1e-9);
        prop_assert!((crop.w / crop.h - geom.input_w / geom.input_h).abs() < 1e-9);
        prop_assert_eq!(needs_zoom(&read(&view.zoomed(&crop)), &geom, DEFAULT_SMALL_FONT_RATIO), None);
    }
}
