//! Middlebury `.flo`: magic float 202021.25, little-endian `i32` width and
//! height, then row-major interleaved `(u, v)` as little-endian `f32`.

use crate::error::{format_err, invalid, Result};
use crate::field::{FlowField, Plane};

use super::{FlowFileRecord, FlowFormat};

pub const FLO_MAGIC: f32 = 202021.25;
const HEADER: usize = 12;
/// Components at or beyond this magnitude mark unknown flow.
pub const UNKNOWN_FLOW: f32 = 1e9;

pub fn read_flo(bytes: &[u8]) -> Result<FlowFileRecord> {
    if bytes.len() < HEADER {
        return format_err(
            bytes.len(),
            format!("truncated header: expected {HEADER} bytes, got {}", bytes.len()),
        );
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return format_err(0, format!("bad magic {magic}, expected {FLO_MAGIC}"));
    }
    let width = i32::from_le_bytes(word(4));
    let height = i32::from_le_bytes(word(8));
    if width <= 0 || height <= 0 {
        return format_err(4, format!("invalid dimensions {width}x{height}"));
    }
    let (w, h) = (width as usize, height as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER));
    let Some(expected) = expected else {
        return format_err(4, format!("dimensions {width}x{height} overflow"));
    };
    if bytes.len() < expected {
        return format_err(
            bytes.len(),
            format!("truncated payload: expected {expected} bytes, got {}", bytes.len()),
        );
    }
    if bytes.len() > expected {
        return format_err(
            expected,
            format!("trailing data: expected {expected} bytes, got {}", bytes.len()),
        );
    }
    let mut data = Vec::with_capacity(2 * w * h);
    let mut valid = Plane::filled(h, w, 1.0);
    for p in 0..w * h {
        let off = HEADER + 8 * p;
        let u = f32::from_le_bytes(word(off));
        let v = f32::from_le_bytes(word(off + 4));
        if !u.is_finite() || !v.is_finite() || u.abs() >= UNKNOWN_FLOW || v.abs() >= UNKNOWN_FLOW {
            valid.data[p] = 0.0;
            data.extend_from_slice(&[0.0, 0.0]);
        } else {
            data.extend_from_slice(&[u as f64, v as f64]);
        }
    }
    Ok(FlowFileRecord {
        flow: FlowField::from_vec(h, w, data)?,
        valid,
        format: FlowFormat::Flo,
    })
}

/// Encodes `flow` as `f32`; lossless for values representable in `f32`.
pub fn write_flo(flow: &FlowField) -> Result<Vec<u8>> {
    let (h, w) = (flow.height(), flow.width());
    if h > i32::MAX as usize || w > i32::MAX as usize {
        return invalid("flow too large for the .flo format");
    }
    let mut out = Vec::with_capacity(HEADER + 8 * h * w);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for &c in flow.as_slice() {
        out.extend_from_slice(&(c as f32).to_le_bytes());
    }
    Ok(out)
}
