//! Spectrogram files: a raw `f32` blob with an 8-byte shape header, and
//! grayscale PNG for inspection.

use std::path::Path;

use crate::error::{AppError, AppResult};
use crate::fsutil::write_atomic;

/// `u32 rows, u32 cols` little-endian, then row-major `f32` little-endian.
pub fn encode_blob(rows: usize, cols: usize, values: &[f32]) -> Vec<u8> {
    assert_eq!(values.len(), rows * cols);
    let mut out = Vec::with_capacity(8 + 4 * values.len());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_blob(bytes: &[u8]) -> Option<(usize, usize, Vec<f32>)> {
    if bytes.len() < 8 {
        return None;
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().ok()?) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().ok()?) as usize;
    let body = &bytes[8..];
    if body.len() != rows.checked_mul(cols)?.checked_mul(4)? {
        return None;
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Some((rows, cols, values))
}

pub fn write_blob(path: &Path, rows: usize, cols: usize, values: &[f32]) -> AppResult<()> {
    write_atomic(path, &encode_blob(rows, cols, values))
}

pub fn read_blob(path: &Path) -> AppResult<(usize, usize, Vec<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode_blob(&bytes).ok_or_else(|| AppError::malformed(path, "bad spectrogram blob"))
}

/// Writes `[0, 1]` values as 8-bit grayscale with row 0 (lowest frequency)
/// at the bottom.
pub fn write_png(path: &Path, rows: usize, cols: usize, values: &[f32]) -> AppResult<()> {
    let mut img = image::GrayImage::new(cols as u32, rows as u32);
    for r in 0..rows {
        for c in 0..cols {
            let v = (values[r * cols + c].clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel(c as u32, (rows - 1 - r) as u32, image::Luma([v]));
        }
    }
    img.save(path).map_err(|e| AppError::malformed(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_round_trip_and_rejects_truncation() {
        let v: Vec<f32> = (0..6).map(|i| i as f32 / 5.0).collect();
        let b = encode_blob(2, 3, &v);
        assert_eq!(b.len(), 8 + 24);
        assert_eq!(decode_blob(&b), Some((2, 3, v)));
        assert_eq!(decode_blob(&b[..b.len() - 1]), None);
        assert_eq!(decode_blob(&b[..4]), None);
    }
}
