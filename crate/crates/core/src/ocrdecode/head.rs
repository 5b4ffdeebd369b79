use serde::{Deserialize, Serialize};

use super::DecodeError;
use crate::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridScale {
    pub rows: usize,
    pub cols: usize,
}

/// Shape of the OCR head: input size, feature grids and anchor layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadGeometry {
    pub input_w: f64,
    pub input_h: f64,
    pub scales: Vec<GridScale>,
    /// Width/height ratio of each anchor in a cell.
    pub anchor_aspects: Vec<f64>,
    /// Anchor height as a multiple of the vertical stride.
    pub anchor_height_strides: f64,
    /// Background plus the ten digits.
    pub categories: usize,
}

pub const REGRESSION_COORDS: usize = 4;
pub const BACKGROUND: usize = 0;

impl Default for HeadGeometry {
    fn default() -> Self {
        Self {
            input_w: 600.0,
            input_h: 375.0,
            scales: vec![GridScale { rows: 24, cols: 38 }, GridScale { rows: 12, cols: 19 }],
            anchor_aspects: vec![0.5, 0.65, 0.8],
            anchor_height_strides: 2.0,
            categories: 11,
        }
    }
}

impl HeadGeometry {
    pub fn with_scales(scales: Vec<GridScale>) -> Self {
        Self { scales, ..Self::default() }
    }

    pub fn anchors_per_cell(&self) -> usize {
        self.anchor_aspects.len()
    }

    /// Output activations per grid cell (regression plus classification).
    pub fn per_cell_len(&self) -> usize {
        let a = self.anchors_per_cell();
        a * REGRESSION_COORDS + a * self.categories
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        let bad = |m: &str| Err(DecodeError::InvalidGeometry(m.to_string()));
        if !(self.input_w > 0.0 && self.input_h > 0.0) {
            return bad("input size must be positive");
        }
        if self.scales.is_empty() || self.scales.iter().any(|s| s.rows == 0 || s.cols == 0) {
            return bad("every scale needs at least one row and column");
        }
        if self.anchor_aspects.is_empty() || self.anchor_aspects.iter().any(|a| !(*a > 0.0)) {
            return bad("anchor aspects must be positive");
        }
        if self.categories < 2 {
            return bad("need background plus at least one category");
        }
        Ok(())
    }

    pub fn strides(&self, scale: usize) -> (f64, f64) {
        let s = self.scales[scale];
        (self.input_w / s.cols as f64, self.input_h / s.rows as f64)
    }

    /// Prior box for one (scale, cell, anchor).
    pub fn anchor_for(&self, scale: usize, row: usize, col: usize, anchor: usize) -> Result<Rect, DecodeError> {
        let in_range = self
            .scales
            .get(scale)
            .is_some_and(|s| row < s.rows && col < s.cols && anchor < self.anchors_per_cell());
        if !in_range {
            return Err(DecodeError::IndexOutOfRange { scale, row, col, anchor });
        }
        Ok(self.anchor_unchecked(scale, row, col, anchor))
    }

    pub(crate) fn anchor_unchecked(&self, scale: usize, row: usize, col: usize, anchor: usize) -> Rect {
        let (sx, sy) = self.strides(scale);
        let h = self.anchor_height_strides * sy;
        let w = h * self.anchor_aspects[anchor];
        Rect::from_center((col as f64 + 0.5) * sx, (row as f64 + 0.5) * sy, w, h)
    }

    pub fn input_rect(&self) -> Rect {
        Rect::new(0.0, 0.0, self.input_w, self.input_h)
    }
}

/// Total number of head activations across all scales.
pub fn head_output_len(geom: &HeadGeometry) -> usize {
    geom.scales.iter().map(|s| s.rows * s.cols).sum::<usize>() * geom.per_cell_len()
}

/// Regression and score tensors for one grid, row-major by (row, col, anchor).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleOutput {
    pub rows: usize,
    pub cols: usize,
    pub regression: Vec<f32>,
    pub scores: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawHeadOutput {
    pub scales: Vec<ScaleOutput>,
}

impl RawHeadOutput {
    /// Zero regression and certain background everywhere.
    pub fn background(geom: &HeadGeometry) -> Self {
        let a = geom.anchors_per_cell();
        let scales = geom
            .scales
            .iter()
            .map(|s| {
                let slots = s.rows * s.cols * a;
                let mut scores = vec![0.0f32; slots * geom.categories];
                for slot in 0..slots {
                    scores[slot * geom.categories + BACKGROUND] = 1.0;
                }
                ScaleOutput {
                    rows: s.rows,
                    cols: s.cols,
                    regression: vec![0.0; slots * REGRESSION_COORDS],
                    scores,
                }
            })
            .collect();
        Self { scales }
    }

    pub fn check_shape(&self, geom: &HeadGeometry) -> Result<(), DecodeError> {
        if self.scales.len() != geom.scales.len() {
            return Err(DecodeError::ShapeMismatch(format!(
                "{} scales, geometry has {}",
                self.scales.len(),
                geom.scales.len()
            )));
        }
        let a = geom.anchors_per_cell();
        for (i, (out, g)) in self.scales.iter().zip(&geom.scales).enumerate() {
            let slots = g.rows * g.cols * a;
            if out.rows != g.rows
                || out.cols != g.cols
                || out.regression.len() != slots * REGRESSION_COORDS
                || out.scores.len() != slots * geom.categories
            {
                return Err(DecodeError::ShapeMismatch(format!("scale {i} does not match {}x{}", g.rows, g.cols)));
            }
        }
        Ok(())
    }

    pub(crate) fn slot(geom: &HeadGeometry, cols: usize, row: usize, col: usize, anchor: usize) -> usize {
        (row * cols + col) * geom.anchors_per_cell() + anchor
    }

    /// Overwrites one anchor slot with a regression target and score vector.
    pub fn set_slot(
        &mut self,
        geom: &HeadGeometry,
        scale: usize,
        row: usize,
        col: usize,
        anchor: usize,
        regression: [f32; 4],
        scores: &[f32],
    ) {
        let out = &mut self.scales[scale];
        let slot = Self::slot(geom, out.cols, row, col, anchor);
        out.regression[slot * REGRESSION_COORDS..(slot + 1) * REGRESSION_COORDS].copy_from_slice(&regression);
        out.scores[slot * geom.categories..(slot + 1) * geom.categories].copy_from_slice(scores);
    }

    pub fn slot_scores(&self, geom: &HeadGeometry, scale: usize, row: usize, col: usize, anchor: usize) -> &[f32] {
        let out = &self.scales[scale];
        let slot = Self::slot(geom, out.cols, row, col, anchor);
        &out.scores[slot * geom.categories..(slot + 1) * geom.categories]
    }

    pub fn len(&self) -> usize {
        self.scales.iter().map(|s| s.regression.len() + s.scores.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat layout: for each scale, the regression tensor then the score tensor.
    pub fn to_flat(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.len());
        for s in &self.scales {
            v.extend_from_slice(&s.regression);
            v.extend_from_slice(&s.scores);
        }
        v
    }

    pub fn from_flat(geom: &HeadGeometry, values: &[f32]) -> Result<Self, DecodeError> {
        let expected = head_output_len(geom);
        if values.len() != expected {
            return Err(DecodeError::ShapeMismatch(format!("{} values, expected {expected}", values.len())));
        }
        let a = geom.anchors_per_cell();
        let mut rest = values;
        let mut scales = Vec::with_capacity(geom.scales.len());
        for g in &geom.scales {
            let slots = g.rows * g.cols * a;
            let (reg, tail) = rest.split_at(slots * REGRESSION_COORDS);
            let (scores, tail) = tail.split_at(slots * geom.categories);
            rest = tail;
            scales.push(ScaleOutput {
                rows: g.rows,
                cols: g.cols,
                regression: reg.to_vec(),
                scores: scores.to_vec(),
            });
        }
        Ok(Self { scales })
    }
}
