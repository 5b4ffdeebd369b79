//! Card-scan verification pipeline.
//!
//! The crate is organised the way a scan flows through the system:
//!
//! * [`cardsynth`] renders synthetic card frames and timed scan sessions with
//!   exact ground truth.
//! * [`ocrdecode`] turns the two-scale OCR head output into digit boxes, runs
//!   non-max suppression, assembles card numbers and validates them with Luhn.
//! * [`infer`] provides the model backends (truth-driven oracle, template
//!   matcher) and per-device latency profiles.
//! * [`pipeline`] schedules frames through the main loop and completion loop
//!   with a bounded LIFO buffer, votes across frames and produces a report.
//! * [`verdict`] applies the server-side consistency rules.
//! * [`bench`] sweeps profiles and modes and aggregates success rates.

pub mod bench;
pub mod cardsynth;
pub mod cli;
pub mod geometry;
pub mod infer;
pub mod ocrdecode;
pub mod pipeline;
pub mod seed;
pub mod verdict;

pub use geometry::Rect;
