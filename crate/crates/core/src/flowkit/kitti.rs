//! KITTI 16-bit RGB PNG flow: `u = (R - 2^15) / 64`, `v = (G - 2^15) / 64`,
//! `B > 0` marks a valid pixel.

use std::io::Cursor;

use image::{DynamicImage, ImageBuffer, ImageFormat, Rgb};

use super::{FlowFileRecord, FlowFormat};
use crate::error::{format_err, Result};
use crate::field::{FlowField, Plane};

const SCALE: f64 = 64.0;
const ZERO: f64 = 32768.0;
/// Byte offset of the bit-depth field in a PNG stream (signature + IHDR length,
/// tag, width and height).
const PNG_BIT_DEPTH_OFFSET: usize = 24;

pub fn encode_component(value: f64) -> u16 {
    (value * SCALE + ZERO).round().clamp(0.0, 65535.0) as u16
}

pub fn decode_component(stored: u16) -> f64 {
    (stored as f64 - ZERO) / SCALE
}

pub fn read_kitti_png(bytes: &[u8]) -> Result<FlowFileRecord> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    let rgb = match img {
        DynamicImage::ImageRgb16(b) => b,
        DynamicImage::ImageRgba16(_) => {
            return format_err(PNG_BIT_DEPTH_OFFSET, "expected 3-channel 16-bit PNG, got RGBA")
        }
        other => {
            return format_err(
                PNG_BIT_DEPTH_OFFSET,
                format!("expected 16-bit RGB PNG, got {:?}", other.color()),
            )
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut flow = FlowField::zeros(h, w);
    let mut valid = Plane::filled(h, w, 0.0);
    for (x, y, px) in rgb.enumerate_pixels() {
        let [r, g, b] = px.0;
        if b > 0 {
            let (x, y) = (x as usize, y as usize);
            flow.set(y, x, decode_component(r), decode_component(g));
            valid.set(y, x, 1.0);
        }
    }
    Ok(FlowFileRecord {
        flow,
        valid,
        format: FlowFormat::KittiPng,
    })
}

/// Pixels with `valid < 0.5` are stored as all-zero.
pub fn write_kitti_png(flow: &FlowField, valid: &Plane) -> Result<Vec<u8>> {
    let (h, w) = (flow.height(), flow.width());
    if !valid.same_dims(h, w) {
        return crate::error::invalid("validity mask does not match the flow");
    }
    let buf = ImageBuffer::<Rgb<u16>, Vec<u16>>::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        if valid.get(y, x) >= 0.5 {
            let (u, v) = flow.get(y, x);
            Rgb([encode_component(u), encode_component(v), 1])
        } else {
            Rgb([0, 0, 0])
        }
    });
    let mut out = Vec::new();
    DynamicImage::ImageRgb16(buf).write_to(&mut Cursor::new(&mut out), ImageFormat::Png)?;
    Ok(out)
}
