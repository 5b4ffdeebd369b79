//! Post-processing for the single-pass OCR head.
//!
//! The head predicts, for every cell of two feature grids, three anchor
//! proposals with four regression coordinates and eleven category scores
//! (background plus the ten digits). This module decodes those tensors into
//! digit boxes, suppresses duplicates, assembles the card number and
//! expiry lines and validates card numbers with the Luhn checksum.

mod assemble;
mod decode;
mod head;
mod luhn;
mod nms;
mod tensor_file;
mod zoom;

pub use assemble::{assemble_expiry, assemble_pan, group_lines, Expiry, PanCandidate};
pub use decode::{best_anchor, decode_box, decode_boxes, encode_box, nearest_anchor, DigitBox, DEFAULT_SCORE_THRESHOLD};
pub use head::{head_output_len, GridScale, HeadGeometry, RawHeadOutput, ScaleOutput};
pub use luhn::{luhn_check_digit, luhn_valid, LuhnError};
pub use nms::{nms, DEFAULT_IOU_THRESHOLD};
pub use tensor_file::{read_head_file, write_head_file, HEAD_FILE_MAGIC};
pub use zoom::{needs_zoom, DEFAULT_SMALL_FONT_RATIO};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid head geometry: {0}")]
    InvalidGeometry(String),
    #[error("index out of range: scale {scale}, row {row}, col {col}, anchor {anchor}")]
    IndexOutOfRange {
        scale: usize,
        row: usize,
        col: usize,
        anchor: usize,
    },
    #[error("tensor shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {tensor} tensor of scale {scale} at offset {offset}")]
    NonFinite {
        tensor: &'static str,
        scale: usize,
        offset: usize,
    },
    #[error("bad head file magic")]
    BadMagic,
    #[error("head file truncated")]
    Truncated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Decode, suppress and assemble in one call, using default thresholds.
pub fn read_pan(out: &RawHeadOutput, geom: &HeadGeometry) -> Result<Option<PanCandidate>, DecodeError> {
    let boxes = decode_boxes(out, geom, DEFAULT_SCORE_THRESHOLD)?;
    Ok(assemble_pan(&nms(&boxes, DEFAULT_IOU_THRESHOLD)))
}
