//! Built-in 5x7 digit font. Glyph rows are 5-bit masks, most significant
//! bit on the left. Every digit has ink in its top and bottom rows, so a
//! scaled glyph's ink spans exactly the cell height.

pub const GLYPH_COLS: usize = 5;
pub const GLYPH_ROWS: usize = 7;

const GLYPHS: [[u8; GLYPH_ROWS]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
];

pub fn glyph_bit(digit: u8, row: usize, col: usize) -> bool {
    GLYPHS[digit as usize][row] >> (GLYPH_COLS - 1 - col) & 1 == 1
}

/// Nearest-neighbor sample of the glyph at cell pixel (`x`, `y`) for a
/// cell of `w` x `h` pixels.
#[inline]
pub fn sample(digit: u8, x: usize, y: usize, w: usize, h: usize) -> bool {
    glyph_bit(digit, y * GLYPH_ROWS / h, x * GLYPH_COLS / w)
}

/// Row-major ink mask of a glyph scaled to `w` x `h`.
pub fn glyph_mask(digit: u8, w: usize, h: usize) -> Vec<bool> {
    let mut m = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            m.push(sample(digit, x, y, w, h));
        }
    }
    m
}

/// Glyph cell width for a given height, keeping the 5:7 aspect.
pub fn cell_width(h: f64) -> f64 {
    h * GLYPH_COLS as f64 / GLYPH_ROWS as f64
}
