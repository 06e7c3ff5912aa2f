//! Image and flow files on disk.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use super::{flo, kitti, FlowFileRecord};
use crate::error::{invalid, Result};
use crate::field::{FlowField, Image, Plane};

/// Decodes an 8- or 16-bit PNG or a PNM image into `[0, 1]` intensities.
/// Grey images stay single-channel; alpha is dropped.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let dynamic = image::load_from_memory(bytes)?;
    from_dynamic(dynamic)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    decode_image(&bytes)
}

fn from_dynamic(dynamic: DynamicImage) -> Result<Image> {
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    match dynamic {
        DynamicImage::ImageLuma8(b) => {
            Image::new(h, w, 1, b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect())
        }
        DynamicImage::ImageLuma16(b) => {
            Image::new(h, w, 1, b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect())
        }
        DynamicImage::ImageLumaA8(_) => from_dynamic(DynamicImage::ImageLuma8(dynamic.to_luma8())),
        DynamicImage::ImageLumaA16(_) => {
            from_dynamic(DynamicImage::ImageLuma16(dynamic.to_luma16()))
        }
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            let b = dynamic.to_rgb8();
            Image::new(h, w, 3, b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect())
        }
        _ => {
            let b = dynamic.to_rgb16();
            Image::new(h, w, 3, b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect())
        }
    }
}

/// Bit depth and container for [`encode_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageEncoding {
    Png8,
    Png16,
    Ppm,
}

impl ImageEncoding {
    /// Chooses from the file extension: `.ppm`/`.pgm`/`.pnm` give PNM, anything
    /// else 8-bit PNG.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(e) if e == "ppm" || e == "pgm" || e == "pnm" => Self::Ppm,
            _ => Self::Png8,
        }
    }
}

fn quantize(v: f32, max: f32) -> f32 {
    (v.clamp(0.0, 1.0) * max).round()
}

fn to_dynamic(image: &Image, sixteen: bool) -> DynamicImage {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let data = image.data();
    match (image.channels(), sixteen) {
        (1, false) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, data.iter().map(|&v| quantize(v, 255.0) as u8).collect())
                .expect("buffer size matches"),
        ),
        (1, true) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, data.iter().map(|&v| quantize(v, 65535.0) as u16).collect())
                .expect("buffer size matches"),
        ),
        (_, false) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, data.iter().map(|&v| quantize(v, 255.0) as u8).collect())
                .expect("buffer size matches"),
        ),
        (_, true) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, data.iter().map(|&v| quantize(v, 65535.0) as u16).collect())
                .expect("buffer size matches"),
        ),
    }
}

/// Encodes with values clamped to `[0, 1]` and rounded to the bit depth.
pub fn encode_image(image: &Image, encoding: ImageEncoding) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut cursor = Cursor::new(&mut out);
    match encoding {
        ImageEncoding::Png8 => to_dynamic(image, false).write_to(&mut cursor, ImageFormat::Png)?,
        ImageEncoding::Png16 => to_dynamic(image, true).write_to(&mut cursor, ImageFormat::Png)?,
        ImageEncoding::Ppm => to_dynamic(image, false).write_to(&mut cursor, ImageFormat::Pnm)?,
    }
    Ok(out)
}

pub fn write_image(image: &Image, path: impl AsRef<Path>, encoding: ImageEncoding) -> Result<()> {
    std::fs::write(path, encode_image(image, encoding)?)?;
    Ok(())
}

/// Reads `.flo` or KITTI `.png` flow, chosen by extension.
pub fn read_flow_file(path: impl AsRef<Path>) -> Result<FlowFileRecord> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("flo") => flo::read_flo(&bytes),
        Some(e) if e.eq_ignore_ascii_case("png") => kitti::read_kitti_png(&bytes),
        _ => invalid(format!("unknown flow file type: {}", path.display())),
    }
}

/// Writes `.flo` or KITTI `.png` flow, chosen by extension. `.flo` drops
/// the validity mask.
pub fn write_flow_file(path: impl AsRef<Path>, flow: &FlowField, valid: Option<&Plane>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("flo") => flo::write_flo(flow)?,
        Some(e) if e.eq_ignore_ascii_case("png") => {
            let all = Plane::filled(flow.height(), flow.width(), 1.0);
            kitti::write_kitti_png(flow, valid.unwrap_or(&all))?
        }
        _ => return invalid(format!("unknown flow file type: {}", path.display())),
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Writes a `[0, 1]` mask as an 8-bit grey PNG.
pub fn write_mask_png(mask: &Plane, path: impl AsRef<Path>) -> Result<()> {
    let img = Image::new(
        mask.height,
        mask.width,
        1,
        mask.data.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect(),
    )?;
    write_image(&img, path, ImageEncoding::Png8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(c: usize) -> Image {
        Image::from_fn(5, 6, c, |y, x, k| ((y * 6 + x) * 7 + k * 31) as f32 % 256.0 / 255.0)
    }

    #[test]
    fn png8_roundtrip_exact_on_grid() {
        for c in [1, 3] {
            let img = sample(c);
            for enc in [ImageEncoding::Png8, ImageEncoding::Ppm] {
                let back = decode_image(&encode_image(&img, enc).unwrap()).unwrap();
                assert_eq!(back.channels(), c);
                for (a, b) in img.data().iter().zip(back.data()) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn png16_keeps_precision() {
        let img = Image::from_fn(3, 3, 3, |y, x, c| (y * 9 + x * 3 + c) as f32 / 1000.0);
        let back = decode_image(&encode_image(&img, ImageEncoding::Png16).unwrap()).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-7);
        }
    }

    #[test]
    fn flow_files_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let flow = FlowField::from_fn(4, 3, |y, x| (x as f64 * 0.5, y as f64 * -0.25));
        for name in ["a.flo", "a.png"] {
            let p = dir.path().join(name);
            write_flow_file(&p, &flow, None).unwrap();
            assert_eq!(read_flow_file(&p).unwrap().flow, flow);
        }
        assert!(write_flow_file(dir.path().join("a.txt"), &flow, None).is_err());
    }
}
