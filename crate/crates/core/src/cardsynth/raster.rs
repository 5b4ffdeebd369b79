use std::io::{BufRead, Read, Write};

use super::SynthError;
use crate::Rect;

pub const FRAME_W: usize = 600;
pub const FRAME_H: usize = 375;

/// A 600x375 8-bit RGB frame.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterFrame {
    data: Vec<u8>,
}

impl std::fmt::Debug for RasterFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RasterFrame({}x{})", FRAME_W, FRAME_H)
    }
}

impl RasterFrame {
    pub fn filled(rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(FRAME_W * FRAME_H * 3);
        for _ in 0..FRAME_W * FRAME_H {
            data.extend_from_slice(&rgb);
        }
        Self { data }
    }

    pub fn from_rgb(width: usize, height: usize, data: Vec<u8>) -> Result<Self, SynthError> {
        if width != FRAME_W || height != FRAME_H || data.len() != FRAME_W * FRAME_H * 3 {
            return Err(SynthError::InvalidFrame(format!("{width}x{height} with {} bytes", data.len())));
        }
        Ok(Self { data })
    }

    pub fn width(&self) -> usize {
        FRAME_W
    }

    pub fn height(&self) -> usize {
        FRAME_H
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * FRAME_W + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < FRAME_W && (y as usize) < FRAME_H {
            let i = (y as usize * FRAME_W + x as usize) * 3;
            self.data[i..i + 3].copy_from_slice(&rgb);
        }
    }

    pub fn map_pixels(&mut self, region: &Rect, mut f: impl FnMut(usize, usize, [u8; 3]) -> [u8; 3]) {
        let (x0, y0, x1, y1) = clamp_region(region);
        for y in y0..y1 {
            for x in x0..x1 {
                let v = f(x, y, self.get(x, y));
                self.put(x as i64, y as i64, v);
            }
        }
    }

    /// Rec. 601 luma per pixel.
    pub fn luma(&self) -> Vec<f32> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
            .collect()
    }

    /// Separable Gaussian blur of every channel.
    pub fn blur(&mut self, sigma: f64) {
        if sigma <= 0.0 {
            return;
        }
        let radius = (3.0 * sigma).ceil() as i64;
        let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let norm: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.into_iter().map(|k| k / norm).collect();
        let src: Vec<f64> = self.data.iter().map(|&v| v as f64).collect();
        let mut tmp = vec![0.0; src.len()];
        let idx = |x: i64, y: i64, c: usize| ((y as usize) * FRAME_W + x as usize) * 3 + c;
        for y in 0..FRAME_H as i64 {
            for x in 0..FRAME_W as i64 {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for (k, w) in kernel.iter().enumerate() {
                        let sx = (x + k as i64 - radius).clamp(0, FRAME_W as i64 - 1);
                        acc += w * src[idx(sx, y, c)];
                    }
                    tmp[idx(x, y, c)] = acc;
                }
            }
        }
        for y in 0..FRAME_H as i64 {
            for x in 0..FRAME_W as i64 {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for (k, w) in kernel.iter().enumerate() {
                        let sy = (y + k as i64 - radius).clamp(0, FRAME_H as i64 - 1);
                        acc += w * tmp[idx(x, sy, c)];
                    }
                    self.data[idx(x, y, c)] = acc.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }

    /// Nearest-neighbor resample of `crop` to a full frame.
    pub fn crop_resize(&self, crop: &Rect) -> RasterFrame {
        let mut out = Vec::with_capacity(self.data.len());
        let sx = crop.w / FRAME_W as f64;
        let sy = crop.h / FRAME_H as f64;
        for j in 0..FRAME_H {
            let y = ((crop.y + (j as f64 + 0.5) * sy).floor() as i64).clamp(0, FRAME_H as i64 - 1) as usize;
            for i in 0..FRAME_W {
                let x = ((crop.x + (i as f64 + 0.5) * sx).floor() as i64).clamp(0, FRAME_W as i64 - 1) as usize;
                out.extend_from_slice(&self.get(x, y));
            }
        }
        RasterFrame { data: out }
    }

    pub fn write_png<W: Write>(&self, w: W) -> Result<(), SynthError> {
        let mut enc = png::Encoder::new(w, FRAME_W as u32, FRAME_H as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| SynthError::Image(e.to_string()))?;
        writer.write_image_data(&self.data).map_err(|e| SynthError::Image(e.to_string()))?;
        writer.finish().map_err(|e| SynthError::Image(e.to_string()))
    }

    pub fn read_png<R: BufRead + std::io::Seek>(r: R) -> Result<Self, SynthError> {
        let dec = png::Decoder::new(r);
        let mut reader = dec.read_info().map_err(|e| SynthError::Image(e.to_string()))?;
        let size = reader.output_buffer_size().ok_or_else(|| SynthError::Image("png too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(|e| SynthError::Image(e.to_string()))?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(SynthError::Image(format!("unsupported png {:?}/{:?}", info.color_type, info.bit_depth)));
        }
        buf.truncate(info.buffer_size());
        Self::from_rgb(info.width as usize, info.height as usize, buf)
    }

    /// Binary PPM (P6).
    pub fn write_ppm<W: Write>(&self, mut w: W) -> Result<(), SynthError> {
        write!(w, "P6\n{} {}\n255\n", FRAME_W, FRAME_H)?;
        w.write_all(&self.data)?;
        Ok(())
    }

    pub fn read_ppm<R: Read>(mut r: R) -> Result<Self, SynthError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let bad = || SynthError::Image("malformed P6 header".into());
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad());
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).to_string());
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(bad());
        }
        let w: usize = fields[1].parse().map_err(|_| bad())?;
        let h: usize = fields[2].parse().map_err(|_| bad())?;
        // single whitespace byte after maxval
        let data = bytes.get(pos + 1..).ok_or_else(bad)?.to_vec();
        Self::from_rgb(w, h, data)
    }
}

fn clamp_region(r: &Rect) -> (usize, usize, usize, usize) {
    let x0 = r.x.floor().clamp(0.0, FRAME_W as f64) as usize;
    let y0 = r.y.floor().clamp(0.0, FRAME_H as f64) as usize;
    let x1 = r.right().ceil().clamp(0.0, FRAME_W as f64) as usize;
    let y1 = r.bottom().ceil().clamp(0.0, FRAME_H as f64) as usize;
    (x0, y0, x1, y1)
}
