//! Census-transform photometric loss with occlusion masking and full-image warping.

use super::CropWindow;
use crate::error::{invalid, Result};
use crate::field::{warp_plane_with_offset, BorderPolicy, Field, FlowField, Image, Plane};

/// How the masked per-pixel penalties are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanNormalization {
    /// Divide by the pixel count.
    #[default]
    AllPixels,
    /// Divide by the sum of the applied mask weights.
    MaskSum,
}

/// Constants of the census photometric distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensusParams {
    /// Odd side length of the census window.
    pub window: usize,
    /// Soft-Hamming saturation constant.
    pub saturation: f64,
    /// Charbonnier offset applied to the distance map.
    pub eps: f64,
    /// Charbonnier exponent applied to the distance map.
    pub alpha: f64,
    /// Multiplier applied to the channel-mean intensity before differencing.
    pub intensity_scale: f64,
    pub normalization: MeanNormalization,
}

impl Default for CensusParams {
    fn default() -> Self {
        Self {
            window: 7,
            saturation: 0.1,
            eps: 1e-6,
            alpha: 0.25,
            intensity_scale: 1.0,
            normalization: MeanNormalization::AllPixels,
        }
    }
}

impl CensusParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return invalid(format!("census window must be odd and >= 3, got {}", self.window));
        }
        if !(self.saturation > 0.0) || !(self.eps > 0.0) || !(self.alpha > 0.0) {
            return invalid("census saturation, eps and alpha must be positive");
        }
        if !(self.intensity_scale > 0.0) {
            return invalid("intensity scale must be positive");
        }
        Ok(())
    }
}

/// Window offsets `(dy, dx)` in row-major order, centre excluded.
pub fn census_offsets(window: usize) -> Vec<(isize, isize)> {
    let r = (window / 2) as isize;
    let mut offs = Vec::with_capacity(window * window - 1);
    for dy in -r..=r {
        for dx in -r..=r {
            if dy != 0 || dx != 0 {
                offs.push((dy, dx));
            }
        }
    }
    offs
}

/// Census features of an intensity plane plus the per-pixel fraction of
/// window neighbours that lie inside the frame.
pub fn census_of_plane(intensity: &Plane, window: usize) -> (Field, Plane) {
    let offs = census_offsets(window);
    let (h, w) = (intensity.height, intensity.width);
    let nk = offs.len();
    let mut feat = Field::zeros(h, w, nk);
    let mut border = Plane::filled(h, w, 0.0);
    for y in 0..h {
        for x in 0..w {
            let c = intensity.get(y, x);
            let mut inside = 0usize;
            for (k, &(dy, dx)) in offs.iter().enumerate() {
                let ny = y as isize + dy;
                let nx = x as isize + dx;
                let nb = if ny >= 0 && ny < h as isize && nx >= 0 && nx < w as isize {
                    inside += 1;
                    intensity.get(ny as usize, nx as usize)
                } else {
                    0.0
                };
                feat.data[(y * w + x) * nk + k] = c - nb;
            }
            border.set(y, x, inside as f64 / nk as f64);
        }
    }
    (feat, border)
}

/// Census transform of an image (channel-mean intensity times `intensity_scale`).
///
/// Returns `window² - 1` feature channels and the border-validity mask.
pub fn census_transform(image: &Image, window: usize, intensity_scale: f64) -> Result<(Field, Plane)> {
    if window < 3 || window.is_multiple_of(2) {
        return invalid(format!("census window must be odd and >= 3, got {window}"));
    }
    Ok(census_of_plane(&image.intensity(intensity_scale), window))
}

/// Per-pixel `Σ_k d_k² / (saturation + d_k²)` with `d = a - b`.
pub fn soft_hamming(a: &Field, b: &Field, saturation: f64) -> Result<Plane> {
    if a.height != b.height || a.width != b.width || a.channels != b.channels {
        return invalid(format!(
            "feature shapes differ: {}x{}x{} vs {}x{}x{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        ));
    }
    let nk = a.channels;
    let data = a
        .data
        .chunks_exact(nk)
        .zip(b.data.chunks_exact(nk))
        .map(|(fa, fb)| {
            fa.iter()
                .zip(fb)
                .map(|(x, y)| {
                    let d2 = (x - y) * (x - y);
                    d2 / (saturation + d2)
                })
                .sum()
        })
        .collect();
    Ok(Plane {
        height: a.height,
        width: a.width,
        data,
    })
}

/// Precomputed reference side of the photometric loss for one image pair.
///
/// Frame 1 census features and the frame 2 intensity are fixed, so a solver
/// can evaluate many flows without redoing that work.
#[derive(Debug, Clone)]
pub struct PhotometricTerm {
    params: CensusParams,
    offsets: Vec<(isize, isize)>,
    ref_features: Field,
    border: Plane,
    target: Plane,
    offset: (f64, f64),
}

impl PhotometricTerm {
    /// `offset` is the position of frame 1's pixel grid inside `target_full`.
    pub fn new(
        reference: &Image,
        target_full: &Image,
        offset: (f64, f64),
        params: CensusParams,
    ) -> Result<Self> {
        params.validate()?;
        let (ref_features, border) =
            census_of_plane(&reference.intensity(params.intensity_scale), params.window);
        Ok(Self {
            params,
            offsets: census_offsets(params.window),
            ref_features,
            border,
            target: target_full.intensity(params.intensity_scale),
            offset,
        })
    }

    pub fn height(&self) -> usize {
        self.border.height
    }

    pub fn width(&self) -> usize {
        self.border.width
    }

    pub fn border_validity(&self) -> &Plane {
        &self.border
    }

    /// Per-pixel census distance between frame 1 and frame 2 warped by `flow`.
    pub fn distance_map(&self, flow: &FlowField) -> Result<Plane> {
        self.check(flow, None)?;
        let warped = warp_plane_with_offset(&self.target, flow, self.offset, BorderPolicy::ZeroPad);
        let (wf, _) = census_of_plane(&warped.value, self.params.window);
        soft_hamming(&self.ref_features, &wf, self.params.saturation)
    }

    fn check(&self, flow: &FlowField, occlusion: Option<&Plane>) -> Result<()> {
        let (h, w) = (self.height(), self.width());
        if !flow.same_dims(h, w) {
            return invalid(format!(
                "flow {}x{} does not match frame {h}x{w}",
                flow.height(),
                flow.width()
            ));
        }
        if let Some(m) = occlusion {
            if !m.same_dims(h, w) {
                return invalid(format!(
                    "occlusion mask {}x{} does not match frame {h}x{w}",
                    m.height, m.width
                ));
            }
        }
        flow.check_finite()
    }

    /// Loss value and its gradient with respect to `flow`; the mask is a constant.
    pub fn evaluate(&self, flow: &FlowField, occlusion: &Plane) -> Result<(f64, FlowField)> {
        self.check(flow, Some(occlusion))?;
        let (h, w) = (self.height(), self.width());
        let n = h * w;
        let nk = self.offsets.len();
        let p = &self.params;
        let warped = warp_plane_with_offset(&self.target, flow, self.offset, BorderPolicy::ZeroPad);
        let iw = &warped.value.data;

        let neighbour = |y: usize, x: usize, dy: isize, dx: isize| -> Option<usize> {
            let ny = y as isize + dy;
            let nx = x as isize + dx;
            (ny >= 0 && ny < h as isize && nx >= 0 && nx < w as isize)
                .then(|| ny as usize * w + nx as usize)
        };

        let mut dist = vec![0.0; n];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let rf = &self.ref_features.data[i * nk..(i + 1) * nk];
                let mut s = 0.0;
                for (k, &(dy, dx)) in self.offsets.iter().enumerate() {
                    let nb = neighbour(y, x, dy, dx).map_or(0.0, |j| iw[j]);
                    let d = rf[k] - (iw[i] - nb);
                    let d2 = d * d;
                    s += d2 / (p.saturation + d2);
                }
                dist[i] = s;
            }
        }

        let weights: Vec<f64> = occlusion
            .data
            .iter()
            .zip(&self.border.data)
            .map(|(m, b)| m * b)
            .collect();
        let norm = match p.normalization {
            MeanNormalization::AllPixels => n as f64,
            MeanNormalization::MaskSum => weights.iter().sum::<f64>().max(1e-12),
        };
        let eps2 = p.eps * p.eps;
        let mut loss = 0.0;
        let mut dl_ds = vec![0.0; n];
        for i in 0..n {
            let s = dist[i];
            let base = s * s + eps2;
            loss += weights[i] * base.powf(p.alpha);
            dl_ds[i] = weights[i] * p.alpha * 2.0 * s * base.powf(p.alpha - 1.0) / norm;
        }
        loss /= norm;

        let mut g_iw = vec![0.0; n];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let g = dl_ds[i];
                if g == 0.0 {
                    continue;
                }
                let rf = &self.ref_features.data[i * nk..(i + 1) * nk];
                for (k, &(dy, dx)) in self.offsets.iter().enumerate() {
                    let nbi = neighbour(y, x, dy, dx);
                    let nb = nbi.map_or(0.0, |j| iw[j]);
                    let d = rf[k] - (iw[i] - nb);
                    let denom = p.saturation + d * d;
                    let gd = g * 2.0 * d * p.saturation / (denom * denom);
                    g_iw[i] -= gd;
                    if let Some(j) = nbi {
                        g_iw[j] += gd;
                    }
                }
            }
        }

        let mut grad = FlowField::zeros(h, w);
        for (i, (gx, gy)) in warped.grad_x.iter().zip(&warped.grad_y).enumerate() {
            grad.as_mut_slice()[2 * i] = g_iw[i] * gx;
            grad.as_mut_slice()[2 * i + 1] = g_iw[i] * gy;
        }
        Ok((loss, grad))
    }
}

/// Occlusion-masked census photometric loss of `i1_crop` against `i2_full`
/// warped by `flow`, where `crop` places the flow grid inside `i2_full`.
///
/// Passing a crop equal to the full frame gives plain warping.
pub fn photometric_loss(
    i1_crop: &Image,
    i2_full: &Image,
    crop: &CropWindow,
    flow: &FlowField,
    occlusion: &Plane,
    params: &CensusParams,
) -> Result<(f64, FlowField)> {
    crop.validate()?;
    if i2_full.height() != crop.full_height || i2_full.width() != crop.full_width {
        return invalid(format!(
            "second image is {}x{} but the crop window expects a {}x{} frame",
            i2_full.height(),
            i2_full.width(),
            crop.full_height,
            crop.full_width
        ));
    }
    if i1_crop.height() != crop.height || i1_crop.width() != crop.width {
        return invalid(format!(
            "first image is {}x{} but the crop window is {}x{}",
            i1_crop.height(),
            i1_crop.width(),
            crop.height,
            crop.width
        ));
    }
    let term = PhotometricTerm::new(i1_crop, i2_full, crop.offset(), *params)?;
    term.evaluate(flow, occlusion)
}
