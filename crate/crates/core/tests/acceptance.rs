//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use cardpipe::bench::{self, SweepSpec};
use cardpipe::cardsynth::{generate_sessions, sample_card, CorpusRanges, LogoId, Media, Network, Side};
use cardpipe::infer::{builtin_profile, builtin_profiles, oracle_ocr, BackendConfig, Backends, FrameView, OracleBackends, TemplateBackends, CALIBRATED};
use cardpipe::ocrdecode::{
    assemble_pan, decode_boxes, head_output_len, luhn_valid, nms, read_pan, DigitBox, HeadGeometry, DEFAULT_IOU_THRESHOLD,
    DEFAULT_SCORE_THRESHOLD,
};
use cardpipe::pipeline::{run_scan, Mode, PipelineConfig};
use cardpipe::verdict::{decide, Decision, ExpectedCard, RuleId, RulesConfig, ScanPayload, TamperObject};
use cardpipe::seed;

type Outcome = Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn geometry() -> Outcome {
    let n = head_output_len(&HeadGeometry::default());
    check(n == 51_300, format!("{n} output values"))
}

fn luhn_table(s: &[u8]) -> bool {
    const DOUBLED: [u32; 10] = [0, 2, 4, 6, 8, 1, 3, 5, 7, 9];
    let sum: u32 = s
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &b)| {
            let d = (b - b'0') as usize;
            if i % 2 == 1 {
                DOUBLED[d]
            } else {
                d as u32
            }
        })
        .sum();
    sum % 10 == 0
}

fn luhn_oracle() -> Outcome {
    let mut valid = 0usize;
    let mut disagreements = 0usize;
    for n in 0..1_000_000u32 {
        let s = format!("{n:06}");
        let got = luhn_valid(&s).map_err(|e| e.to_string())?;
        if got != luhn_table(s.as_bytes()) {
            disagreements += 1;
        }
        valid += got as usize;
    }
    check(disagreements == 0 && valid == 100_000, format!("{disagreements} disagreements, {valid} valid of 10^6"))
}

fn round_trip() -> Outcome {
    let geom = HeadGeometry::default();
    let cfg = BackendConfig::clean(3);
    let sessions = generate_sessions(200, &CorpusRanges::default(), 3).map_err(|e| e.to_string())?;
    let mut frames = 0usize;
    let mut recovered = 0usize;
    let mut worst = 0.0f64;
    'outer: for s in &sessions {
        for i in (0..s.frames.len()).step_by(7) {
            let truth = s.truth(i);
            if !(truth.centered && truth.side == Side::Number) {
                continue;
            }
            frames += 1;
            let out = oracle_ocr(&truth, &geom, &cfg, i as u64).output;
            let boxes = nms(&decode_boxes(&out, &geom, DEFAULT_SCORE_THRESHOLD).map_err(|e| e.to_string())?, DEFAULT_IOU_THRESHOLD);
            if let Some(c) = assemble_pan(&boxes).filter(|c| c.digits == s.card.pan) {
                recovered += 1;
                for (b, t) in c.boxes.iter().zip(&truth.digit_boxes) {
                    let (tx, ty) = t.rect.center();
                    worst = worst.max((b.cx - tx).abs()).max((b.cy - ty).abs());
                }
            }
            if frames == 1000 {
                break 'outer;
            }
        }
    }
    check(
        frames == 1000 && recovered == frames && worst <= 1e-4,
        format!("{recovered}/{frames} frames recovered, worst center error {worst:.2e} px"),
    )
}

fn reference_nms(boxes: &[DigitBox], t: f64) -> BTreeSet<usize> {
    let iou = |a: &DigitBox, b: &DigitBox| {
        let iw = ((a.cx + a.w / 2.0).min(b.cx + b.w / 2.0) - (a.cx - a.w / 2.0).max(b.cx - b.w / 2.0)).max(0.0);
        let ih = ((a.cy + a.h / 2.0).min(b.cy + b.h / 2.0) - (a.cy - a.h / 2.0).max(b.cy - b.h / 2.0)).max(0.0);
        let inter = iw * ih;
        inter / (a.w * a.h + b.w * b.h - inter)
    };
    // scores are distinct: process in score order, checking every earlier survivor
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score));
    let mut kept = BTreeSet::new();
    for (pos, &i) in order.iter().enumerate() {
        let suppressed = order[..pos].iter().any(|&j| kept.contains(&j) && iou(&boxes[i], &boxes[j]) >= t);
        if !suppressed {
            kept.insert(i);
        }
    }
    kept
}

fn nms_equivalence() -> Outcome {
    let mut rng = seed::rng(4, &[]);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=64);
        let mut scores: Vec<f64> = (0..n).map(|k| 0.5 + k as f64 * 1e-3).collect();
        for k in (1..n).rev() {
            scores.swap(k, rng.gen_range(0..=k));
        }
        let boxes: Vec<DigitBox> = scores
            .iter()
            .map(|&score| DigitBox {
                cx: rng.gen_range(0.0..200.0),
                cy: rng.gen_range(0.0..100.0),
                w: rng.gen_range(2.0..40.0),
                h: rng.gen_range(2.0..40.0),
                digit: rng.gen_range(0..10),
                score,
                scale: 0,
                row: 0,
                col: 0,
                anchor: 0,
            })
            .collect();
        let got: BTreeSet<usize> = nms(&boxes, DEFAULT_IOU_THRESHOLD)
            .iter()
            .map(|k| boxes.iter().position(|b| b.score == k.score).unwrap())
            .collect();
        if got != reference_nms(&boxes, DEFAULT_IOU_THRESHOLD) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches} of 1000 box sets differ"))
}

fn voting() -> Outcome {
    let profile = builtin_profile("iphone-xr-like").map_err(|e| e.to_string())?;
    // long enough that a vote window opened by a late first read still closes in frame
    let ranges = CorpusRanges { centered_frames: 120, ..CorpusRanges::default() };
    let sessions = generate_sessions(1000, &ranges, 5).map_err(|e| e.to_string())?;
    let backends = OracleBackends::new(HeadGeometry::default(), BackendConfig::clean(5).with_digit_error(0.1)).map_err(|e| e.to_string())?;
    let run = |voting: bool| -> Result<Vec<(bool, usize)>, String> {
        sessions
            .par_iter()
            .map(|s| {
                let cfg = PipelineConfig { voting, seed: bench::session_scan_seed(5, &s.session_id), ..PipelineConfig::default() };
                let r = run_scan(s, &backends, &profile, &cfg).map_err(|e| e.to_string())?;
                Ok((r.succeeded(&s.card.pan), r.vote_reads.len()))
            })
            .collect()
    };
    let voted = run(true)?;
    let first = run(false)?;
    let rate = |v: &[&(bool, usize)]| v.iter().filter(|r| r.0).count() as f64 / v.len() as f64;
    let qualifying: Vec<&(bool, usize)> = voted.iter().filter(|r| r.1 >= 5).collect();
    let all: Vec<&(bool, usize)> = voted.iter().collect();
    let first: Vec<&(bool, usize)> = first.iter().collect();
    let share = qualifying.len() as f64 / voted.len() as f64;
    let (with, overall, without) = (rate(&qualifying), rate(&all), rate(&first));
    check(
        share >= 0.95 && with >= 0.99 && without <= 0.90,
        format!(
            "voting {:.1}% on {} sessions with >=5 window reads ({:.1}% overall), first read {:.1}%",
            with * 100.0,
            qualifying.len(),
            overall * 100.0,
            without * 100.0
        ),
    )
}

/// Blocking, buffered and parallel FPS for the 20 s reference run.
const REFERENCE_FPS: [(&str, [f64; 3]); 6] = [
    ("iphone-5s-like", [1.65, 1.70, 2.95]),
    ("iphone-se-like", [7.60, 7.90, 14.90]),
    ("iphone-xr-like", [28.45, 32.60, 32.60]),
    ("lg-k20-like", [1.03, 1.04, 1.39]),
    ("xiaomi-redmi-7-like", [3.16, 3.47, 4.89]),
    ("pixel-2-like", [3.66, 4.35, 7.95]),
];

fn mode_ordering() -> Outcome {
    assert_eq!(CALIBRATED.len(), REFERENCE_FPS.len());
    let mut rng = seed::rng(6, &[seed::tag("compare")]);
    let card = sample_card(&mut rng, &CorpusRanges::default());
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, reference) in REFERENCE_FPS {
        let p = builtin_profile(name).map_err(|e| e.to_string())?;
        let session = bench::compare_session(card.clone(), &p, 6).map_err(|e| e.to_string())?;
        let rows = bench::compare_modes(&p, &session, &Mode::ALL, BackendConfig::clean(6), 6, None).map_err(|e| e.to_string())?;
        let fps: Vec<f64> = rows.iter().map(|r| r.fps).collect();
        let ordered = fps[2] >= fps[1] && fps[1] >= fps[0];
        let within = fps.iter().zip(reference).all(|(g, r)| (g / r - 1.0).abs() <= 0.15);
        ok &= ordered && within;
        lines.push(format!("{name} {:.2}/{:.2}/{:.2}{}", fps[0], fps[1], fps[2], if ordered && within { "" } else { " (!)" }));
    }
    check(ok, lines.join(", "))
}

fn fps_success() -> Outcome {
    let sessions = generate_sessions(500, &CorpusRanges::sweep(), 7).map_err(|e| e.to_string())?;
    let spec = SweepSpec {
        profiles: builtin_profiles(),
        modes: vec![Mode::Parallel],
        sessions,
        backend: BackendConfig::clean(7).with_digit_error(bench::STANDARD_DIGIT_ERROR),
        seed: 7,
        workers: None,
    };
    let rows = bench::run_sweep(&spec).map_err(|e| e.to_string())?;
    let summary = bench::summarize(&spec, &rows);
    let rates = summary.buckets.rates();
    let [Some(low), Some(mid), Some(high)] = rates[..] else {
        return Err(format!("empty bucket: {rates:?}"));
    };
    let rho = summary.spearman_fps_success.unwrap_or(f64::NAN);
    let counts: Vec<usize> = summary.buckets.buckets.iter().map(|b| b.sessions).collect();
    check(
        low <= mid && mid <= high && high - low >= 0.15 && rho > 0.0,
        format!(
            "success <1: {:.1}%, 1-2: {:.1}%, >=2: {:.1}% (sessions {counts:?}), spearman {rho:.2}",
            low * 100.0,
            mid * 100.0,
            high * 100.0
        ),
    )
}

fn useful_frames() -> Outcome {
    let sessions = generate_sessions(27, &CorpusRanges::sweep(), 8).map_err(|e| e.to_string())?;
    let backends = OracleBackends::new(HeadGeometry::default(), BackendConfig::clean(8).with_digit_error(0.03)).map_err(|e| e.to_string())?;
    let rates: Vec<f64> = (1..=10).map(f64::from).collect();
    let per_session: Vec<Vec<bench::UsefulRow>> = sessions
        .par_iter()
        .map(|s| bench::useful_frames(s, &rates, &backends, bench::session_scan_seed(8, &s.session_id)).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let mut processed = vec![0usize; rates.len()];
    let mut useful = vec![0usize; rates.len()];
    for rows in &per_session {
        for (k, r) in rows.iter().enumerate() {
            processed[k] += r.processed;
            useful[k] += r.useful;
        }
    }
    let fractions: Vec<f64> = useful.iter().zip(&processed).map(|(&u, &p)| u as f64 / p as f64).collect();
    let lo = fractions.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = fractions.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ratio = useful[9] as f64 / useful[4] as f64;
    check(
        hi - lo < 0.1 && (ratio - 2.0).abs() <= 0.4,
        format!("useful fraction {lo:.3}..{hi:.3} over 1-10 fps, useful(10)/useful(5) = {ratio:.2}"),
    )
}

fn payload(pan: &str) -> ScanPayload {
    ScanPayload {
        session_id: "s001".into(),
        final_pan: Some(pan.into()),
        expiry: None,
        sides_seen: BTreeSet::from([Side::Number]),
        media_votes: BTreeMap::from([(Media::Physical, 5)]),
        tamper_objects: vec![],
        frames_produced: 60,
        frames_processed: 20,
        fps: 8.0,
        duration_ms: 2500.0,
        gave_up: false,
        mode: Mode::Parallel,
        profile: "pixel-2-like".into(),
    }
}

fn fake_media() -> Outcome {
    let pan = "4111111111111111";
    let expected = ExpectedCard { pan_on_record: pan.into(), issuer_logo: None };
    let screen = ScanPayload { media_votes: BTreeMap::from([(Media::Screen, 3), (Media::Physical, 2)]), ..payload(pan) };
    let physical = ScanPayload { media_votes: BTreeMap::from([(Media::Physical, 3), (Media::Screen, 2)]), ..payload(pan) };
    let a = decide(&screen, &expected, &RulesConfig::new());
    let b = decide(&physical, &expected, &RulesConfig::new());
    check(
        a.decision == Decision::Reject && a.rules().contains(&RuleId::FakeMedia) && !b.rules().contains(&RuleId::FakeMedia),
        format!("screen 3/physical 2 -> {:?} {:?}; physical 3/screen 2 -> {:?} {:?}", a.decision, a.rules(), b.decision, b.rules()),
    )
}

fn bin_consistency() -> Outcome {
    let pan = "4111111111111111";
    let expected = ExpectedCard { pan_on_record: pan.into(), issuer_logo: None };
    let observed = |frames| ScanPayload {
        tamper_objects: vec![TamperObject { logo_id: LogoId::Mastercard, confidence: 0.9, frames }],
        ..payload(pan)
    };
    let two = decide(&observed(2), &expected, &RulesConfig::new());
    let one = decide(&observed(1), &expected, &RulesConfig::new());

    // end to end: a visa card whose front network mark was swapped
    let ranges = CorpusRanges { networks: vec![Network::Visa], tamper_prob: 1.0, ..CorpusRanges::default() };
    let sessions = generate_sessions(5, &ranges, 10).map_err(|e| e.to_string())?;
    let backends = OracleBackends::new(HeadGeometry::default(), BackendConfig::clean(10)).map_err(|e| e.to_string())?;
    let profile = builtin_profile("iphone-xr-like").map_err(|e| e.to_string())?;
    let mut flagged = 0;
    for s in &sessions {
        let r = run_scan(s, &backends, &profile, &PipelineConfig::default()).map_err(|e| e.to_string())?;
        let v = decide(&r.payload(true), &ExpectedCard { pan_on_record: s.card.pan.clone(), issuer_logo: None }, &RulesConfig::new());
        flagged += v.rules().contains(&RuleId::TamperInconsistent) as usize;
    }
    check(
        two.decision == Decision::Reject && two.rules().contains(&RuleId::TamperInconsistent) && !one.rules().contains(&RuleId::TamperInconsistent) && flagged == sessions.len(),
        format!(
            "visa BIN + mastercard in 2 frames -> {:?} {:?}; 1 frame -> {:?}; tampered scans flagged {flagged}/{}",
            two.decision,
            two.rules(),
            one.decision,
            sessions.len()
        ),
    )
}

fn template_backend() -> Outcome {
    let geom = HeadGeometry::default();
    let backends = TemplateBackends::new(geom.clone(), BackendConfig::clean(11)).map_err(|e| e.to_string())?;
    let sessions = generate_sessions(200, &CorpusRanges::default(), 11).map_err(|e| e.to_string())?;
    let results: Vec<(usize, usize, bool, f64)> = sessions
        .par_iter()
        .map(|s| {
            let i = s.frames.iter().position(|f| f.scene.centered).expect("centered frame");
            let (raster, truth) = s.render(i);
            let min_h = truth.digit_boxes.iter().map(|d| d.rect.h).fold(f64::INFINITY, f64::min);
            let out = backends.ocr(&FrameView { truth: truth.clone(), raster: Some(raster) }, 0).map_err(|e| e.to_string())?;
            let boxes = nms(&decode_boxes(&out, &geom, DEFAULT_SCORE_THRESHOLD).map_err(|e| e.to_string())?, DEFAULT_IOU_THRESHOLD);
            let correct = truth
                .digit_boxes
                .iter()
                .filter(|t| {
                    boxes
                        .iter()
                        .filter(|b| b.rect().iou(&t.rect) >= 0.5)
                        .max_by(|a, b| a.score.total_cmp(&b.score))
                        .is_some_and(|b| b.digit == t.digit)
                })
                .count();
            let pan_ok = read_pan(&out, &geom).map_err(|e| e.to_string())?.is_some_and(|p| p.digits == s.card.pan);
            Ok((correct, truth.digit_boxes.len(), pan_ok, min_h))
        })
        .collect::<Result<_, String>>()?;
    let min_h = results.iter().map(|r| r.3).fold(f64::INFINITY, f64::min);
    let digits: usize = results.iter().map(|r| r.1).sum();
    let correct: usize = results.iter().map(|r| r.0).sum();
    let pans = results.iter().filter(|r| r.2).count();
    let digit_acc = correct as f64 / digits as f64;
    let pan_rate = pans as f64 / results.len() as f64;
    check(
        min_h >= 20.0 && digit_acc >= 0.99 && pan_rate >= 0.95,
        format!("digit accuracy {:.2}%, full number {pans}/{} (min digit height {min_h:.1} px)", digit_acc * 100.0, results.len()),
    )
}

fn cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cardpipe")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn dir_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for e in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let e = e.map_err(|e| e.to_string())?;
        files.insert(e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let corpus = root.join("corpus");
    let corpus_s = corpus.to_str().unwrap();
    cli(&["synth", "--count", "24", "--seed", "12", "--out", corpus_s, "--frames", "none", "--preset", "sweep"])?;
    let mut same = Vec::new();
    let scan = ["scan", "--session", "s001", "--profile", "iphone-xr-like", "--seed", "9", "--mode", "parallel", "--error-rates", "0.1,0.05,0.05,0.05"];
    same.push(("scan", cli(&scan)? == cli(&scan)?));
    let scan_corpus = ["scan", "--session", "s007", "--corpus", corpus_s, "--profile", "pixel-2-like", "--seed", "9", "--error-rates", "0.15"];
    same.push(("scan --corpus", cli(&scan_corpus)? == cli(&scan_corpus)?));
    let mut sweeps = Vec::new();
    for run in ["a", "b"] {
        let out = root.join(run);
        let stdout = cli(&["bench", "--seed", "12", "--corpus", corpus_s, "--modes", "blocking,parallel", "--out", out.to_str().unwrap()])?;
        sweeps.push((stdout, dir_bytes(&out)?));
    }
    same.push(("bench sweep", sweeps[0] == sweeps[1] && sweeps[0].1.len() == 3));
    let modes = ["bench", "--seed", "12", "--modes", "blocking,buffered,parallel", "--profile", "lg-k20-like"];
    same.push(("bench modes", cli(&modes)? == cli(&modes)?));
    let useful = ["bench", "--seed", "12", "--experiment", "useful", "--sessions", "4"];
    same.push(("bench useful", cli(&useful)? == cli(&useful)?));
    let differing: Vec<&str> = same.iter().filter(|s| !s.1).map(|s| s.0).collect();
    check(
        differing.is_empty(),
        if differing.is_empty() { format!("{} command pairs byte-identical", same.len()) } else { format!("outputs differ: {differing:?}") },
    )
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: 1, name: "head geometry", limit: Some(Duration::from_millis(1)), run: geometry },
        Criterion { id: 2, name: "luhn oracle equivalence", limit: Some(secs(10)), run: luhn_oracle },
        Criterion { id: 3, name: "encode/decode round trip", limit: Some(secs(60)), run: round_trip },
        Criterion { id: 4, name: "nms brute-force equivalence", limit: Some(secs(30)), run: nms_equivalence },
        Criterion { id: 5, name: "voting redundancy", limit: Some(secs(120)), run: voting },
        Criterion { id: 6, name: "mode ordering", limit: Some(secs(60)), run: mode_ordering },
        Criterion { id: 7, name: "fps vs success", limit: Some(secs(300)), run: fps_success },
        Criterion { id: 8, name: "useful-frames constancy", limit: Some(secs(120)), run: useful_frames },
        Criterion { id: 9, name: "fake-media voting", limit: Some(secs(1)), run: fake_media },
        Criterion { id: 10, name: "bin consistency", limit: Some(secs(5)), run: bin_consistency },
        Criterion { id: 11, name: "template backend", limit: Some(secs(120)), run: template_backend },
        Criterion { id: 12, name: "determinism", limit: None, run: determinism },
    ];
    let filter: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let over = c.limit.is_some_and(|l| took > l);
        let (status, detail) = match outcome {
            Ok(d) if !over => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over time limit {:?}", c.limit.unwrap())),
            Err(d) => ("FAIL", d),
        };
        failed += (status == "FAIL") as usize;
        println!("{status} criterion {:>2} {}: {detail} [{:.2?}]", c.id, c.name, took);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
