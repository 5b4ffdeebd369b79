//! `DDHEAD01` head-tensor files.
//!
//! Layout: the 8-byte magic, a little-endian `u32` scale count, `rows` and
//! `cols` as `u32` for every scale, then for each scale in order its
//! row-major `f32` regression tensor followed by its score tensor.

use std::io::{Read, Write};

use super::head::{GridScale, HeadGeometry, RawHeadOutput};
use super::DecodeError;

pub const HEAD_FILE_MAGIC: &[u8; 8] = b"DDHEAD01";

pub fn write_head_file<W: Write>(mut w: W, out: &RawHeadOutput) -> Result<(), DecodeError> {
    w.write_all(HEAD_FILE_MAGIC)?;
    w.write_all(&(out.scales.len() as u32).to_le_bytes())?;
    for s in &out.scales {
        w.write_all(&(s.rows as u32).to_le_bytes())?;
        w.write_all(&(s.cols as u32).to_le_bytes())?;
    }
    for s in &out.scales {
        for v in s.regression.iter().chain(&s.scores) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DecodeError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> DecodeError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        DecodeError::Truncated
    } else {
        DecodeError::Io(e)
    }
}

/// Reads a head file. The returned geometry carries the file's grids and
/// the default anchor layout.
pub fn read_head_file<R: Read>(mut r: R) -> Result<(HeadGeometry, RawHeadOutput), DecodeError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != HEAD_FILE_MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let n = read_u32(&mut r)? as usize;
    if n == 0 || n > 16 {
        return Err(DecodeError::InvalidGeometry(format!("{n} scales")));
    }
    let mut scales = Vec::with_capacity(n);
    for _ in 0..n {
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        if rows == 0 || cols == 0 || rows * cols > 1 << 20 {
            return Err(DecodeError::InvalidGeometry(format!("grid {rows}x{cols}")));
        }
        scales.push(GridScale { rows, cols });
    }
    let geom = HeadGeometry::with_scales(scales);
    let len = super::head_output_len(&geom);
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes).map_err(truncated)?;
    let values: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let out = RawHeadOutput::from_flat(&geom, &values)?;
    Ok((geom, out))
}
