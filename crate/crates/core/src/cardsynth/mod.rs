//! Procedural card frames and timed scan sessions with exact annotations.

mod corpus;
pub mod font;
mod raster;
mod render;
mod session;
mod spec;

pub use corpus::{
    generate_corpus, generate_sessions, load_corpus, load_session, read_manifest, sample_card, sample_pan,
    sample_session, session_id, CorpusRanges, FrameFormat, FrameRecord, Manifest, ManifestEntry, SessionRecord,
};
pub use raster::{RasterFrame, FRAME_H, FRAME_W};
pub use render::{layout_truth, render_frame};
pub use session::{
    generate_session, ScanSession, SessionFrame, SessionScript, GIVE_UP_ONE_SIDE_MS, GIVE_UP_TWO_SIDES_MS,
};
pub use spec::{
    CardSpec, FontStyle, FrameTruth, Layout, LogoId, LogoMark, Media, Network, SceneSpec, Side, TruthDigit,
    TruthLogo, CARD_H, CARD_W,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid card spec: {0}")]
    InvalidSpec(String),
    #[error("card number line ({width:.0}px at digit height {digit_height}) does not fit the card")]
    LayoutOverflow { digit_height: u32, width: f64 },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("card rectangle has zero area")]
    DegenerateCard,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("image codec: {0}")]
    Image(String),
    #[error("cannot write {0}")]
    Write(String),
    #[error("cannot read {0}")]
    Read(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
