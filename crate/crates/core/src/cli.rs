//! Command-line surface. Machine-readable results go to stdout, logs to
//! stderr, and files are only written under `--out`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{self, SweepSpec};
use crate::cardsynth::{self, CorpusRanges, FrameFormat, ScanSession, Side};
use crate::infer::{builtin_profiles, Backends, DeviceProfile, ErrorRates, OracleBackends, TemplateBackends, CALIBRATED};
use crate::ocrdecode::{self, DigitBox, Expiry, PanCandidate};
use crate::pipeline::{self, mask_pan, Clock, Mode, PipelineConfig};
use crate::seed;
use crate::verdict::{self, RulesConfig};

#[derive(Debug, Parser)]
#[command(name = "cardpipe", version, about = "Synthetic card-scan pipeline and benchmark harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded corpus of scan sessions.
    Synth(SynthArgs),
    /// Run the scan pipeline on one session and print its report.
    Scan(ScanArgs),
    /// Decode a raw head tensor file.
    Decode(DecodeArgs),
    /// Frame-rate sweeps, mode comparison and useful-frames experiments.
    Bench(BenchArgs),
    /// Apply the fraud rules to a scan report.
    Verdict(VerdictArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Standard,
    Sweep,
}

impl Preset {
    fn ranges(self) -> CorpusRanges {
        match self {
            Preset::Standard => CorpusRanges::default(),
            Preset::Sweep => CorpusRanges::sweep(),
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "png")]
    pub frames: FrameFormat,
    #[arg(long, value_enum, default_value = "standard")]
    pub preset: Preset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Oracle,
    Template,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Session id such as `s001`.
    #[arg(long)]
    pub session: String,
    /// Corpus directory; without it the session is synthesized from the seed.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Built-in profile name or path to a profile JSON file.
    #[arg(long, default_value = "pixel-2-like")]
    pub profile: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "parallel")]
    pub mode: Mode,
    #[arg(long)]
    pub workers: Option<usize>,
    /// `ε_d,ε_c,ε_m,ε_t`
    #[arg(long, default_value = "0,0,0,0")]
    pub error_rates: ErrorRates,
    #[arg(long)]
    pub unmasked: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "oracle")]
    pub backend: Backend,
    #[arg(long, value_enum, default_value = "virtual")]
    pub clock: Clock,
    /// First Luhn-valid read wins.
    #[arg(long)]
    pub no_voting: bool,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub unmasked: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Sweep,
    Modes,
    Useful,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub seed: u64,
    /// Defaults to `sweep` when `--corpus` is given and `modes` otherwise.
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Profile names or paths. Sweeps default to every built-in profile,
    /// mode comparisons to the calibrated ones.
    #[arg(long, value_delimiter = ',')]
    pub profile: Vec<String>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub modes: Vec<Mode>,
    /// Alias for a single `--modes` entry.
    #[arg(long, value_enum, conflicts_with = "modes")]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "0.15,0,0,0")]
    pub error_rates: ErrorRates,
    /// Sessions for the useful-frames experiment.
    #[arg(long, default_value_t = 27)]
    pub sessions: usize,
    /// Simulated rates for the useful-frames experiment.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    pub rates: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerdictArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub expected: PathBuf,
    /// Sides that must have been seen, e.g. `number,non-number`.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub require_sides: Vec<SideArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Number,
    NonNumber,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Number => Side::Number,
            SideArg::NonNumber => Side::NonNumber,
        }
    }
}

/// Runs a parsed command, writing results to `stdout`. Returns the exit code.
pub fn run<W: Write>(cli: Cli, stdout: &mut W) -> Result<i32> {
    match cli.command {
        Command::Synth(a) => synth(a, stdout),
        Command::Scan(a) => scan(a, stdout),
        Command::Decode(a) => decode(a, stdout),
        Command::Bench(a) => bench_cmd(a, stdout),
        Command::Verdict(a) => verdict_cmd(a, stdout),
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn synth<W: Write>(a: SynthArgs, stdout: &mut W) -> Result<i32> {
    let manifest = cardsynth::generate_corpus(a.count, &a.preset.ranges(), a.seed, &a.out, a.frames)?;
    log::info!("wrote {} sessions to {}", manifest.sessions.len(), a.out.display());
    writeln!(stdout, "{}", a.out.display())?;
    Ok(0)
}

fn session_index(id: &str) -> Result<usize> {
    match id.strip_prefix('s').and_then(|n| n.parse::<usize>().ok()) {
        Some(n) if n >= 1 => Ok(n - 1),
        _ => bail!("session id {id:?} is not of the form s001"),
    }
}

fn load_or_synth(id: &str, corpus: Option<&Path>, seed: u64) -> Result<ScanSession> {
    Ok(match corpus {
        Some(dir) => cardsynth::load_session(dir, id)?,
        None => cardsynth::sample_session(session_index(id)?, &CorpusRanges::default(), seed)?,
    })
}

fn scan<W: Write>(a: ScanArgs, stdout: &mut W) -> Result<i32> {
    let session = load_or_synth(&a.session, a.corpus.as_deref(), a.seed)?;
    let profile = DeviceProfile::resolve(&a.profile)?;
    let backend_cfg = a.error_rates.config(a.seed);
    let geom = ocrdecode::HeadGeometry::default();
    let backends: Box<dyn Backends> = match a.backend {
        Backend::Oracle => Box::new(OracleBackends::new(geom, backend_cfg)?),
        Backend::Template => Box::new(TemplateBackends::new(geom, backend_cfg)?),
    };
    let cfg = PipelineConfig {
        mode: a.mode,
        workers: a.workers,
        clock: a.clock,
        voting: !a.no_voting,
        seed: bench::session_scan_seed(a.seed, &session.session_id),
        ..PipelineConfig::default()
    };
    let result = pipeline::run_scan(&session, backends.as_ref(), &profile, &cfg)?;
    let report = pretty(&result.payload(a.unmasked));
    if let Some(dir) = &a.out {
        write_file(dir, "report.json", &report)?;
    }
    stdout.write_all(&report)?;
    Ok(0)
}

#[derive(Serialize)]
struct DecodeReport {
    boxes: Vec<DigitBox>,
    pan: Option<PanCandidate>,
    expiry: Option<Expiry>,
}

fn decode<W: Write>(a: DecodeArgs, stdout: &mut W) -> Result<i32> {
    let file = fs::File::open(&a.file).with_context(|| format!("opening {}", a.file.display()))?;
    let (geom, out) = ocrdecode::read_head_file(io::BufReader::new(file))?;
    let raw = ocrdecode::decode_boxes(&out, &geom, ocrdecode::DEFAULT_SCORE_THRESHOLD)?;
    let boxes = ocrdecode::nms(&raw, ocrdecode::DEFAULT_IOU_THRESHOLD);
    if boxes.is_empty() {
        writeln!(stdout, "no candidates")?;
        return Ok(0);
    }
    let mut pan = ocrdecode::assemble_pan(&boxes);
    if let Some(p) = pan.as_mut().filter(|_| !a.unmasked) {
        p.digits = mask_pan(&p.digits);
    }
    let report = pretty(&DecodeReport { expiry: ocrdecode::assemble_expiry(&boxes), boxes, pan });
    if let Some(dir) = &a.out {
        write_file(dir, "decode.json", &report)?;
    }
    stdout.write_all(&report)?;
    Ok(0)
}

fn resolve_profiles(names: &[String], default: impl FnOnce() -> Vec<DeviceProfile>) -> Result<Vec<DeviceProfile>> {
    if names.is_empty() {
        return Ok(default());
    }
    names.iter().map(|n| Ok(DeviceProfile::resolve(n)?)).collect()
}

fn bench_cmd<W: Write>(a: BenchArgs, stdout: &mut W) -> Result<i32> {
    let experiment = a.experiment.unwrap_or(if a.corpus.is_some() { Experiment::Sweep } else { Experiment::Modes });
    let mut modes = a.modes.clone();
    modes.extend(a.mode);
    let backend = a.error_rates.config(a.seed);
    match experiment {
        Experiment::Sweep => {
            let Some(corpus) = &a.corpus else { bail!("sweep needs --corpus") };
            let (_, sessions) = cardsynth::load_corpus(corpus)?;
            let spec = SweepSpec {
                profiles: resolve_profiles(&a.profile, builtin_profiles)?,
                modes: if modes.is_empty() { vec![Mode::Parallel] } else { modes },
                sessions,
                backend,
                seed: a.seed,
                workers: a.workers,
            };
            let rows = bench::run_sweep(&spec)?;
            let summary = bench::summarize(&spec, &rows);
            if let Some(dir) = &a.out {
                bench::write_outputs(dir, &rows, &summary)?;
            }
            bench::write_csv(&rows, &mut *stdout)?;
        }
        Experiment::Modes => {
            let profiles = resolve_profiles(&a.profile, || {
                CALIBRATED.iter().map(|n| crate::infer::builtin_profile(n).expect("built-in")).collect()
            })?;
            let modes = if modes.is_empty() { Mode::ALL.to_vec() } else { modes };
            let mut rng = seed::rng(a.seed, &[seed::tag("compare")]);
            let card = cardsynth::sample_card(&mut rng, &CorpusRanges::default());
            let mut rows = Vec::new();
            for p in &profiles {
                let session = bench::compare_session(card.clone(), p, a.seed)?;
                rows.extend(bench::compare_modes(p, &session, &modes, backend, a.seed, a.workers)?);
            }
            if let Some(dir) = &a.out {
                let mut buf = Vec::new();
                bench::write_csv(&rows, &mut buf)?;
                write_file(dir, "modes.csv", &buf)?;
            }
            bench::write_csv(&rows, &mut *stdout)?;
        }
        Experiment::Useful => {
            let sessions = match &a.corpus {
                Some(dir) => cardsynth::load_corpus(dir)?.1,
                None => cardsynth::generate_sessions(a.sessions, &CorpusRanges::sweep(), a.seed)?,
            };
            let backends = OracleBackends::new(ocrdecode::HeadGeometry::default(), backend)?;
            let mut totals: Vec<bench::UsefulRow> = Vec::new();
            for s in &sessions {
                let rows = bench::useful_frames(s, &a.rates, &backends, bench::session_scan_seed(a.seed, &s.session_id))?;
                if totals.is_empty() {
                    totals = rows;
                } else {
                    for (t, r) in totals.iter_mut().zip(rows) {
                        t.processed += r.processed;
                        t.useful += r.useful;
                    }
                }
            }
            for t in &mut totals {
                t.fraction = if t.processed > 0 { t.useful as f64 / t.processed as f64 } else { 0.0 };
            }
            if let Some(dir) = &a.out {
                let mut buf = Vec::new();
                bench::write_useful_csv(&totals, &mut buf)?;
                write_file(dir, "useful.csv", &buf)?;
            }
            bench::write_useful_csv(&totals, &mut *stdout)?;
        }
    }
    Ok(0)
}

fn verdict_cmd<W: Write>(a: VerdictArgs, stdout: &mut W) -> Result<i32> {
    let read = |p: &Path| fs::read(p).with_context(|| format!("reading {}", p.display()));
    let payload = verdict::parse_payload(&read(&a.report)?)?;
    let expected = verdict::parse_expected(&read(&a.expected)?)?;
    let rules = RulesConfig::requiring(a.require_sides.iter().map(|&s| Side::from(s)));
    let v = verdict::decide(&payload, &expected, &rules);
    let out = pretty(&v);
    if let Some(dir) = &a.out {
        write_file(dir, "verdict.json", &out)?;
    }
    stdout.write_all(&out)?;
    Ok(v.decision.exit_code())
}
