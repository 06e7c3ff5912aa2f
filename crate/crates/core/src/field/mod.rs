//! Dense 2-D field primitives.
//!
//! Images are stored in single precision; every quantity that enters a loss
//! or a gradient is `f64`. All containers are row-major with interleaved
//! channels (`(y * width + x) * channels + c`).

mod conv;
mod deriv;
mod sample;

pub use conv::{conv2d, conv2d_backward, Conv2dGrads, Kernel};
pub use deriv::{spatial_derivative, Axis};
pub use sample::{
    backward_warp, bilinear_sample, downsample2, forward_splat, forward_splat_count,
    resize_field, resize_flow, resize_image, warp_plane_with_offset, BorderPolicy, Taps,
};

use crate::error::{invalid, Result};

/// Multi-channel image with intensities nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return invalid("image dimensions must be positive");
        }
        if channels != 1 && channels != 3 {
            return invalid(format!("image must have 1 or 3 channels, got {channels}"));
        }
        if data.len() != height * width * channels {
            return invalid(format!(
                "image data length {} does not match {height}x{width}x{channels}",
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite image value at index {i}"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Builds an image by evaluating `f(y, x, c)` at every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Channel mean multiplied by `scale`, as a double-precision plane.
    pub fn intensity(&self, scale: f64) -> Plane {
        let c = self.channels;
        let data = self
            .data
            .chunks_exact(c)
            .map(|px| px.iter().map(|&v| v as f64).sum::<f64>() / c as f64 * scale)
            .collect();
        Plane {
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Copies the `h x w` window whose top-left corner is `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Image> {
        if h == 0 || w == 0 || y0 + h > self.height || x0 + w > self.width {
            return invalid(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds {}x{} image",
                self.height, self.width
            ));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(h * w * c);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Ok(Image {
            height: h,
            width: w,
            channels: c,
            data,
        })
    }

    /// Single-channel view of one channel as `f64`.
    pub fn channel_plane(&self, c: usize) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self
                .data
                .chunks_exact(self.channels)
                .map(|px| px[c] as f64)
                .collect(),
        }
    }

    pub fn to_field(&self) -> Field {
        Field {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn from_field(field: &Field) -> Result<Image> {
        Image::new(
            field.height,
            field.width,
            field.channels,
            field.data.iter().map(|&v| v as f32).collect(),
        )
    }
}

/// Single-channel double-precision field. Also used for masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Per-pixel fraction of interpolation mass that fell inside the source frame.
pub type ValidityMask = Plane;

impl Plane {
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_dims(&self, height: usize, width: usize) -> bool {
        self.height == height && self.width == width
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Multi-channel double-precision field (HWC layout).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }
}

impl From<Plane> for Field {
    fn from(p: Plane) -> Self {
        Field {
            height: p.height,
            width: p.width,
            channels: 1,
            data: p.data,
        }
    }
}

/// Per-pixel displacement `(u, v)` in pixels; `u` is the x offset.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 2],
        }
    }

    pub fn constant(height: usize, width: usize, u: f64, v: f64) -> Self {
        Self::from_fn(height, width, |_, _| (u, v))
    }

    /// Interleaved `(u, v)` data, validated for length and finiteness.
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return invalid("flow dimensions must be positive");
        }
        if data.len() != height * width * 2 {
            return invalid(format!(
                "flow data length {} does not match {height}x{width}x2",
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!(
                "non-finite flow at pixel ({}, {})",
                i / 2 / width,
                i / 2 % width
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let mut data = Vec::with_capacity(height * width * 2);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(y, x);
                data.push(u);
                data.push(v);
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> (f64, f64) {
        let i = (y * self.width + x) * 2;
        (self.data[i], self.data[i + 1])
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, u: f64, v: f64) {
        let i = (y * self.width + x) * 2;
        self.data[i] = u;
        self.data[i + 1] = v;
    }

    #[inline]
    pub fn add_at(&mut self, y: usize, x: usize, du: f64, dv: f64) {
        let i = (y * self.width + x) * 2;
        self.data[i] += du;
        self.data[i + 1] += dv;
    }

    pub fn same_dims(&self, height: usize, width: usize) -> bool {
        self.height == height && self.width == width
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => invalid(format!(
                "non-finite flow at pixel ({}, {})",
                i / 2 / self.width,
                i / 2 % self.width
            )),
            None => Ok(()),
        }
    }

    pub fn to_field(&self) -> Field {
        Field {
            height: self.height,
            width: self.width,
            channels: 2,
            data: self.data.clone(),
        }
    }

    pub fn from_field(field: Field) -> Result<Self> {
        if field.channels != 2 {
            return invalid(format!("flow needs 2 channels, got {}", field.channels));
        }
        Self::from_vec(field.height, field.width, field.data)
    }

    /// Copies the `h x w` window whose top-left corner is `(y0, x0)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<FlowField> {
        if h == 0 || w == 0 || y0 + h > self.height || x0 + w > self.width {
            return invalid(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds {}x{} flow",
                self.height, self.width
            ));
        }
        Ok(FlowField::from_fn(h, w, |y, x| self.get(y + y0, x + x0)))
    }

    /// Elementwise `self + alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &FlowField) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.data
            .chunks_exact(2)
            .map(|uv| uv[0].hypot(uv[1]))
            .sum::<f64>()
            / (self.height * self.width) as f64
    }
}
