use rand::Rng;

use super::font::{cell_width, sample};
use super::raster::{RasterFrame, FRAME_H, FRAME_W};
use super::spec::{
    line_width, CardSpec, FontStyle, FrameTruth, LogoMark, Media, SceneSpec, Side, TruthDigit, TruthLogo, CARD_H,
    CARD_W, DIGIT_GAP, GROUP_GAP,
};
use super::SynthError;
use crate::seed;
use crate::Rect;

/// Vertical center of the card-number line, as a share of card height.
const PAN_LINE_Y: f64 = 0.55;
const EXPIRY_GAP: f64 = 0.3;
/// Space between the number line and the expiry line, in digit heights.
const EXPIRY_LEADING: f64 = 0.6;

pub(crate) const FLAT_INK: [u8; 3] = [22, 22, 28];
pub(crate) const EMBOSS_FACE: [u8; 3] = [238, 238, 232];
const STRIPE: [u8; 3] = [26, 24, 24];
const SIGNATURE_PANEL: [u8; 3] = [236, 234, 222];
const SCANLINE_PERIOD: usize = 4;
const SCANLINE_GAIN: f64 = 0.85;

/// Glyph cells of one text line in canonical card coordinates.
fn line_cells(groups: &[usize], h: f64, gap: f64, top: f64) -> Vec<Rect> {
    let w = cell_width(h);
    let mut x = (CARD_W - line_width(groups, h, gap)) / 2.0;
    let mut cells = Vec::new();
    for (gi, &n) in groups.iter().enumerate() {
        if gi > 0 {
            x += GROUP_GAP * w;
        }
        for _ in 0..n {
            cells.push(Rect::new(x, top, w, h));
            x += w + gap * h;
        }
    }
    cells
}

struct CardToFrame {
    card: Rect,
}

impl CardToFrame {
    fn x(&self, xc: f64) -> f64 {
        self.card.x + xc * self.card.w / CARD_W
    }
    fn y(&self, yc: f64) -> f64 {
        self.card.y + yc * self.card.h / CARD_H
    }
    /// Integer pixel rectangle of a card-space rectangle.
    fn pixel_rect(&self, r: &Rect) -> Option<(i64, i64, usize, usize)> {
        let x0 = self.x(r.x).round() as i64;
        let x1 = self.x(r.right()).round() as i64;
        let y0 = self.y(r.y).round() as i64;
        let y1 = self.y(r.bottom()).round() as i64;
        (x1 > x0 && y1 > y0).then(|| (x0, y0, (x1 - x0) as usize, (y1 - y0) as usize))
    }
    fn normalized(&self, p: &Rect) -> Option<(i64, i64, usize, usize)> {
        self.pixel_rect(&Rect::new(p.x * CARD_W, p.y * CARD_H, p.w * CARD_W, p.h * CARD_H))
    }
}

fn frame_rect() -> Rect {
    Rect::new(0.0, 0.0, FRAME_W as f64, FRAME_H as f64)
}

struct GlyphPlacement {
    digit: u8,
    px: (i64, i64, usize, usize),
}

struct Layout {
    pan: Vec<GlyphPlacement>,
    expiry: Vec<GlyphPlacement>,
}

fn layout(spec: &CardSpec, scene: &SceneSpec) -> Layout {
    let map = CardToFrame { card: scene.card_rect };
    if scene.side != Side::Number {
        return Layout { pan: vec![], expiry: vec![] };
    }
    let h = spec.digit_height_px as f64;
    let top = PAN_LINE_Y * CARD_H - h / 2.0;
    let place = |cells: Vec<Rect>, digits: &[u8]| -> Vec<GlyphPlacement> {
        cells
            .iter()
            .zip(digits)
            .filter_map(|(c, &digit)| map.pixel_rect(c).map(|px| GlyphPlacement { digit, px }))
            .collect()
    };
    let pan_digits: Vec<u8> = spec.pan.bytes().map(|b| b - b'0').collect();
    let pan = place(line_cells(spec.layout.groups(), h, DIGIT_GAP, top), &pan_digits);
    let expiry = match spec.expiry {
        Some(e) => {
            let d = [e.month / 10, e.month % 10, e.year / 10, e.year % 10];
            place(line_cells(&[2, 2], h, EXPIRY_GAP, top + h * (1.0 + EXPIRY_LEADING)), &d)
        }
        None => vec![],
    };
    Layout { pan, expiry }
}

fn side_logos(spec: &CardSpec, side: Side) -> &[LogoMark] {
    match side {
        Side::Number => &spec.number_side_logos,
        Side::NonNumber => &spec.back_side_logos,
    }
}

/// Ground truth for a scene without rasterizing it.
pub fn layout_truth(spec: &CardSpec, scene: &SceneSpec) -> Result<FrameTruth, SynthError> {
    scene.validate()?;
    let frame = frame_rect();
    let map = CardToFrame { card: scene.card_rect };
    let lay = layout(spec, scene);
    let clip = |v: &[GlyphPlacement]| -> Vec<TruthDigit> {
        v.iter()
            .filter_map(|g| {
                let (x, y, w, h) = g.px;
                Rect::new(x as f64, y as f64, w as f64, h as f64)
                    .intersection(&frame)
                    .map(|rect| TruthDigit { rect, digit: g.digit })
            })
            .collect()
    };
    let logo_marks = side_logos(spec, scene.side)
        .iter()
        .filter_map(|m| {
            let (x, y, w, h) = map.normalized(&m.position)?;
            Rect::new(x as f64, y as f64, w as f64, h as f64)
                .intersection(&frame)
                .map(|rect| TruthLogo { logo_id: m.logo_id, rect })
        })
        .collect();
    Ok(FrameTruth {
        digit_boxes: clip(&lay.pan),
        expiry_boxes: clip(&lay.expiry),
        side: scene.side,
        centered: scene.centered,
        media: scene.media,
        logo_marks,
        session_pan: spec.pan.clone(),
    })
}

fn scale_to_luma(rgb: [f64; 3], target: f64) -> [u8; 3] {
    let l = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
    let k = target / l.max(1.0);
    rgb.map(|c| (c * k).round().clamp(0.0, 255.0) as u8)
}

/// Card and background colours are a property of the card, so every frame
/// of a session shares them.
fn palette(spec: &CardSpec) -> ([u8; 3], [u8; 3]) {
    let mut rng = seed::rng(seed::tag(&spec.pan), &[seed::tag("palette")]);
    let mut pick = |lo: f64, hi: f64| {
        let rgb = [rng.gen_range(60.0..200.0), rng.gen_range(60.0..200.0), rng.gen_range(60.0..200.0)];
        scale_to_luma(rgb, rng.gen_range(lo..hi))
    };
    (pick(108.0, 160.0), pick(95.0, 165.0))
}

fn fill_rounded(frame: &mut RasterFrame, px: (i64, i64, usize, usize), radius_share: f64, rgb: [u8; 3]) {
    let (x0, y0, w, h) = px;
    let r = (w.min(h) as f64 * radius_share).max(0.0);
    for j in 0..h {
        for i in 0..w {
            let (fx, fy) = (i as f64 + 0.5, j as f64 + 0.5);
            let dx = (r - fx).max(fx - (w as f64 - r)).max(0.0);
            let dy = (r - fy).max(fy - (h as f64 - r)).max(0.0);
            if dx * dx + dy * dy <= r * r {
                frame.put(x0 + i as i64, y0 + j as i64, rgb);
            }
        }
    }
}

fn draw_glyph(frame: &mut RasterFrame, g: &GlyphPlacement, dx: i64, dy: i64, rgb: [u8; 3]) {
    let (x0, y0, w, h) = g.px;
    for j in 0..h {
        for i in 0..w {
            if sample(g.digit, i, j, w, h) {
                frame.put(x0 + dx + i as i64, y0 + dy + j as i64, rgb);
            }
        }
    }
}

fn shade(rgb: [u8; 3], k: f64) -> [u8; 3] {
    rgb.map(|c| (c as f64 * k).round().clamp(0.0, 255.0) as u8)
}

/// Renders one frame and its annotation. Deterministic in (spec, scene, seed).
pub fn render_frame(spec: &CardSpec, scene: &SceneSpec, seed: u64) -> Result<(RasterFrame, FrameTruth), SynthError> {
    spec.validate()?;
    let truth = layout_truth(spec, scene)?;
    let (card_rgb, bg_rgb) = palette(spec);
    let map = CardToFrame { card: scene.card_rect };

    let mut frame = RasterFrame::filled(bg_rgb);
    frame.map_pixels(&frame_rect(), |x, y, p| {
        let g = ((x as f64 / FRAME_W as f64) - 0.5) * 14.0 + ((y as f64 / FRAME_H as f64) - 0.5) * 8.0;
        p.map(|c| (c as f64 + g).round().clamp(0.0, 255.0) as u8)
    });

    let Some(card_px) = map.pixel_rect(&Rect::new(0.0, 0.0, CARD_W, CARD_H)) else {
        return Err(SynthError::DegenerateCard);
    };
    fill_rounded(&mut frame, card_px, 0.06, card_rgb);

    for m in side_logos(spec, scene.side) {
        if let Some(px) = map.normalized(&m.position) {
            fill_rounded(&mut frame, px, 0.2, m.logo_id.color());
        }
    }
    match scene.side {
        Side::Number => {
            let lay = layout(spec, scene);
            for g in lay.pan.iter().chain(&lay.expiry) {
                match spec.font_style {
                    FontStyle::Flat => draw_glyph(&mut frame, g, 0, 0, FLAT_INK),
                    FontStyle::Embossed => {
                        let off = ((g.px.3 as f64 / 14.0).round() as i64).max(1);
                        draw_glyph(&mut frame, g, off, off, shade(card_rgb, 0.72));
                        draw_glyph(&mut frame, g, 0, 0, EMBOSS_FACE);
                    }
                }
            }
        }
        Side::NonNumber => {
            if let Some(px) = map.pixel_rect(&Rect::new(0.0, 0.1 * CARD_H, CARD_W, 0.18 * CARD_H)) {
                fill_rounded(&mut frame, px, 0.0, STRIPE);
            }
            if let Some(px) = map.normalized(&Rect::new(0.06, 0.40, 0.6, 0.14)) {
                fill_rounded(&mut frame, px, 0.0, SIGNATURE_PANEL);
            }
        }
    }

    let card_region = Rect::new(card_px.0 as f64, card_px.1 as f64, card_px.2 as f64, card_px.3 as f64);
    match scene.media {
        Media::Physical => {}
        Media::Screen => frame.map_pixels(&card_region, |_, y, p| {
            if y % SCANLINE_PERIOD < SCANLINE_PERIOD / 2 {
                shade(p, SCANLINE_GAIN)
            } else {
                p
            }
        }),
        Media::Paper => frame.map_pixels(&card_region, |_, _, p| {
            let l = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            p.map(|c| (0.4 * c as f64 + 0.6 * l).round() as u8)
        }),
        Media::Cardboard => {
            let brown = [150.0, 110.0, 70.0];
            frame.map_pixels(&card_region, |_, _, p| {
                let mut o = [0u8; 3];
                for c in 0..3 {
                    o[c] = (0.7 * p[c] as f64 + 0.3 * brown[c]).round() as u8;
                }
                o
            })
        }
    }

    frame.blur(scene.blur_sigma);
    if scene.noise_amp > 0.0 {
        let mut rng = seed::rng(seed, &[seed::tag("noise")]);
        let amp = scene.noise_amp;
        frame.map_pixels(&frame_rect(), |_, _, p| {
            p.map(|c| (c as f64 + rng.gen_range(-amp..=amp)).round().clamp(0.0, 255.0) as u8)
        });
    }
    Ok((frame, truth))
}
