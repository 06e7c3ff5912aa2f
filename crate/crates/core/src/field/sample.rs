use super::{Field, FlowField, Image, Plane, ValidityMask};
use crate::error::{invalid, Result};

/// How samples outside the frame are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BorderPolicy {
    /// Outside taps read zero; validity records the in-frame mass.
    #[default]
    ZeroPad,
    /// Outside taps read the nearest border pixel.
    Clamp,
}

/// The four bilinear taps of a real-valued coordinate, with the partial
/// derivatives of each weight with respect to the coordinate.
#[derive(Debug, Clone, Copy)]
pub struct Taps {
    pub index: [usize; 4],
    pub active: [bool; 4],
    pub weight: [f64; 4],
    pub dweight_dx: [f64; 4],
    pub dweight_dy: [f64; 4],
    pub validity: f64,
}

impl Taps {
    pub fn new(x: f64, y: f64, height: usize, width: usize, policy: BorderPolicy) -> Taps {
        // Beyond one pixel outside, every tap is out of frame; clamping keeps
        // the integer conversion in range without changing any sampled value.
        let x = x.clamp(-2.0, width as f64 + 1.0);
        let y = y.clamp(-2.0, height as f64 + 1.0);
        let x0f = x.floor();
        let y0f = y.floor();
        let fx = x - x0f;
        let fy = y - y0f;
        let x0 = x0f as i64;
        let y0 = y0f as i64;

        let cols = [x0, x0 + 1, x0, x0 + 1];
        let rows = [y0, y0, y0 + 1, y0 + 1];
        let weight = [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ];
        let dweight_dx = [-(1.0 - fy), 1.0 - fy, -fy, fy];
        let dweight_dy = [-(1.0 - fx), -fx, 1.0 - fx, fx];

        let mut index = [0usize; 4];
        let mut active = [false; 4];
        let mut validity = 0.0;
        for k in 0..4 {
            let inside =
                cols[k] >= 0 && cols[k] < width as i64 && rows[k] >= 0 && rows[k] < height as i64;
            if inside {
                validity += weight[k];
            }
            match policy {
                BorderPolicy::ZeroPad => {
                    if inside {
                        index[k] = rows[k] as usize * width + cols[k] as usize;
                        active[k] = true;
                    }
                }
                BorderPolicy::Clamp => {
                    let cx = cols[k].clamp(0, width as i64 - 1) as usize;
                    let cy = rows[k].clamp(0, height as i64 - 1) as usize;
                    index[k] = cy * width + cx;
                    active[k] = true;
                }
            }
        }
        Taps {
            index,
            active,
            weight,
            dweight_dx,
            dweight_dy,
            validity,
        }
    }

    /// Interpolated value of channel `c` of an interleaved buffer.
    #[inline]
    pub fn sample(&self, data: &[f64], channels: usize, c: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..4 {
            if self.active[k] {
                acc += self.weight[k] * data[self.index[k] * channels + c];
            }
        }
        acc
    }

    /// Interpolated value and its derivatives with respect to `(x, y)`.
    #[inline]
    pub fn sample_with_grad(&self, data: &[f64], channels: usize, c: usize) -> (f64, f64, f64) {
        let (mut val, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for k in 0..4 {
            if self.active[k] {
                let s = data[self.index[k] * channels + c];
                val += self.weight[k] * s;
                gx += self.dweight_dx[k] * s;
                gy += self.dweight_dy[k] * s;
            }
        }
        (val, gx, gy)
    }
}

fn check_coords(coords: &[[f64; 2]]) -> Result<()> {
    match coords
        .iter()
        .position(|c| !c[0].is_finite() || !c[1].is_finite())
    {
        Some(i) => invalid(format!("non-finite sampling coordinate at index {i}")),
        None => Ok(()),
    }
}

/// Samples `image` at one `(x, y)` coordinate per output pixel.
///
/// `coords` holds `out_height * out_width` entries in row-major order.
pub fn bilinear_sample(
    image: &Image,
    coords: &[[f64; 2]],
    out_height: usize,
    out_width: usize,
    policy: BorderPolicy,
) -> Result<(Image, ValidityMask)> {
    if coords.len() != out_height * out_width {
        return invalid(format!(
            "expected {} coordinates, got {}",
            out_height * out_width,
            coords.len()
        ));
    }
    check_coords(coords)?;
    let src = image.to_field();
    let c = image.channels();
    let mut out = Vec::with_capacity(coords.len() * c);
    let mut validity = Vec::with_capacity(coords.len());
    for &[x, y] in coords {
        let taps = Taps::new(x, y, image.height(), image.width(), policy);
        for ch in 0..c {
            out.push(taps.sample(&src.data, c, ch) as f32);
        }
        validity.push(taps.validity);
    }
    Ok((
        Image::new(out_height, out_width, c, out)?,
        Plane {
            height: out_height,
            width: out_width,
            data: validity,
        },
    ))
}

/// Reconstructs frame 1 by sampling `image` at `p + flow(p)`.
pub fn backward_warp(
    image: &Image,
    flow: &FlowField,
    policy: BorderPolicy,
) -> Result<(Image, ValidityMask)> {
    if !flow.same_dims(image.height(), image.width()) {
        return invalid(format!(
            "flow {}x{} does not match image {}x{}",
            flow.height(),
            flow.width(),
            image.height(),
            image.width()
        ));
    }
    flow.check_finite()?;
    let coords: Vec<[f64; 2]> = (0..flow.height())
        .flat_map(|y| (0..flow.width()).map(move |x| (y, x)))
        .map(|(y, x)| {
            let (u, v) = flow.get(y, x);
            [x as f64 + u, y as f64 + v]
        })
        .collect();
    bilinear_sample(image, &coords, flow.height(), flow.width(), policy)
}

/// Result of warping a single plane, including coordinate derivatives.
#[derive(Debug, Clone)]
pub struct WarpedPlane {
    pub value: Plane,
    pub grad_x: Vec<f64>,
    pub grad_y: Vec<f64>,
    pub validity: Plane,
}

/// Samples `plane` at `p + offset + flow(p)` for every pixel `p` of the flow grid.
///
/// The offset places the flow grid inside a larger source frame, which is
/// how a crop is warped against its uncropped second image.
pub fn warp_plane_with_offset(
    plane: &Plane,
    flow: &FlowField,
    offset: (f64, f64),
    policy: BorderPolicy,
) -> WarpedPlane {
    let (h, w) = (flow.height(), flow.width());
    let n = h * w;
    let mut value = Vec::with_capacity(n);
    let mut grad_x = Vec::with_capacity(n);
    let mut grad_y = Vec::with_capacity(n);
    let mut validity = Vec::with_capacity(n);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(y, x);
            let taps = Taps::new(
                x as f64 + offset.0 + u,
                y as f64 + offset.1 + v,
                plane.height,
                plane.width,
                policy,
            );
            let (val, gx, gy) = taps.sample_with_grad(&plane.data, 1, 0);
            value.push(val);
            grad_x.push(gx);
            grad_y.push(gy);
            validity.push(taps.validity);
        }
    }
    WarpedPlane {
        value: Plane {
            height: h,
            width: w,
            data: value,
        },
        grad_x,
        grad_y,
        validity: Plane {
            height: h,
            width: w,
            data: validity,
        },
    }
}

/// Forward-splats unit mass from every source pixel to its target and
/// returns the coverage map together with the mass that left the frame.
pub fn forward_splat(flow: &FlowField) -> Result<(Plane, f64)> {
    flow.check_finite()?;
    let (h, w) = (flow.height(), flow.width());
    let mut counts = vec![0.0; h * w];
    let mut discarded = 0.0;
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(y, x);
            let taps = Taps::new(x as f64 + u, y as f64 + v, h, w, BorderPolicy::ZeroPad);
            for k in 0..4 {
                if taps.active[k] {
                    counts[taps.index[k]] += taps.weight[k];
                }
            }
            discarded += 1.0 - taps.validity;
        }
    }
    Ok((
        Plane {
            height: h,
            width: w,
            data: counts,
        },
        discarded,
    ))
}

/// Range map: per-pixel mass received when every pixel splats to `p + flow(p)`.
pub fn forward_splat_count(flow: &FlowField) -> Result<Plane> {
    forward_splat(flow).map(|(counts, _)| counts)
}

fn source_coord(dst: usize, in_len: usize, out_len: usize) -> f64 {
    (dst as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5
}

/// Bilinear resize using pixel-centre alignment and border clamping.
pub fn resize_field(field: &Field, height: usize, width: usize) -> Result<Field> {
    if height == 0 || width == 0 {
        return invalid("resize target must be non-empty");
    }
    let c = field.channels;
    let mut out = Field::zeros(height, width, c);
    for y in 0..height {
        let sy = source_coord(y, field.height, height);
        for x in 0..width {
            let sx = source_coord(x, field.width, width);
            let taps = Taps::new(sx, sy, field.height, field.width, BorderPolicy::Clamp);
            for ch in 0..c {
                out.set(y, x, ch, taps.sample(&field.data, c, ch));
            }
        }
    }
    Ok(out)
}

pub fn resize_image(image: &Image, height: usize, width: usize) -> Result<Image> {
    Image::from_field(&resize_field(&image.to_field(), height, width)?)
}

/// Resizes a flow field and rescales its vectors to the new pixel grid.
pub fn resize_flow(flow: &FlowField, height: usize, width: usize) -> Result<FlowField> {
    let mut f = resize_field(&flow.to_field(), height, width)?;
    let sx = width as f64 / flow.width() as f64;
    let sy = height as f64 / flow.height() as f64;
    for uv in f.data.chunks_exact_mut(2) {
        uv[0] *= sx;
        uv[1] *= sy;
    }
    FlowField::from_field(f)
}

/// 2x2 box downsampling; odd trailing rows and columns are dropped.
pub fn downsample2(field: &Field) -> Result<Field> {
    let (h, w) = (field.height / 2, field.width / 2);
    if h == 0 || w == 0 {
        return invalid(format!(
            "cannot halve a {}x{} field",
            field.height, field.width
        ));
    }
    let c = field.channels;
    Ok(Field::from_fn(h, w, c, |y, x, ch| {
        0.25 * (field.get(2 * y, 2 * x, ch)
            + field.get(2 * y, 2 * x + 1, ch)
            + field.get(2 * y + 1, 2 * x, ch)
            + field.get(2 * y + 1, 2 * x + 1, ch))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, 1, |_, x, _| x as f32 / (w - 1) as f32)
    }

    #[test]
    fn lattice_point_is_exact() {
        let img = Image::from_fn(5, 6, 3, |y, x, c| (y * 7 + x * 3 + c) as f32 / 64.0);
        let (out, valid) = bilinear_sample(&img, &[[2.0, 3.0]], 1, 1, BorderPolicy::ZeroPad).unwrap();
        for c in 0..3 {
            assert_eq!(out.get(0, 0, c), img.get(3, 2, c));
        }
        assert_eq!(valid.data[0], 1.0);
    }

    #[test]
    fn midpoint_between_zero_and_one() {
        let img = Image::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let (out, _) = bilinear_sample(&img, &[[0.5, 0.0]], 1, 1, BorderPolicy::ZeroPad).unwrap();
        assert_eq!(out.get(0, 0, 0), 0.5);
    }

    #[test]
    fn far_outside_is_zero_and_invalid() {
        let img = Image::from_fn(4, 4, 1, |_, _, _| 1.0);
        let (out, valid) =
            bilinear_sample(&img, &[[-5.0, -5.0]], 1, 1, BorderPolicy::ZeroPad).unwrap();
        assert_eq!(out.get(0, 0, 0), 0.0);
        assert_eq!(valid.data[0], 0.0);
        let (out, valid) = bilinear_sample(&img, &[[-5.0, -5.0]], 1, 1, BorderPolicy::Clamp).unwrap();
        assert_eq!(out.get(0, 0, 0), 1.0);
        assert_eq!(valid.data[0], 0.0);
    }

    #[test]
    fn non_finite_coordinate_rejected() {
        let img = Image::zeros(2, 2, 1);
        assert!(bilinear_sample(&img, &[[f64::NAN, 0.0]], 1, 1, BorderPolicy::ZeroPad).is_err());
    }

    #[test]
    fn bilinear_function_reproduced_exactly() {
        // f(x, y) = 1 + 2x + 3y + 0.5xy is reproduced by bilinear interpolation.
        let f = |x: f64, y: f64| 1.0 + 2.0 * x + 3.0 * y + 0.5 * x * y;
        let field = Field::from_fn(6, 7, 1, |y, x, _| f(x as f64, y as f64));
        for &(x, y) in &[(0.3, 0.7), (2.25, 4.5), (5.9, 4.99), (3.0, 1.5)] {
            let taps = Taps::new(x, y, 6, 7, BorderPolicy::ZeroPad);
            assert!((taps.sample(&field.data, 1, 0) - f(x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_flow_warp_is_identity() {
        let img = Image::from_fn(5, 7, 3, |y, x, c| ((y * 13 + x * 5 + c * 3) % 11) as f32 / 10.0);
        let (out, valid) =
            backward_warp(&img, &FlowField::zeros(5, 7), BorderPolicy::ZeroPad).unwrap();
        assert_eq!(out, img);
        assert!(valid.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn unit_shift_on_ramp() {
        let (h, w) = (4, 6);
        let img = ramp(h, w);
        let flow = FlowField::constant(h, w, 1.0, 0.0);
        let (out, valid) = backward_warp(&img, &flow, BorderPolicy::ZeroPad).unwrap();
        // brute-force oracle: out(y, x) = img(y, x + 1) if inside, else 0
        for y in 0..h {
            for x in 0..w {
                let (expect, ev) = if x + 1 < w {
                    (img.get(y, x + 1, 0), 1.0)
                } else {
                    (0.0, 0.0)
                };
                assert_eq!(out.get(y, x, 0), expect);
                assert_eq!(valid.get(y, x), ev);
            }
        }
    }

    #[test]
    fn flow_leaving_frame_is_invalid() {
        let img = ramp(4, 4);
        let mut flow = FlowField::zeros(4, 4);
        flow.set(1, 1, -10.0, 0.0);
        let (_, valid) = backward_warp(&img, &flow, BorderPolicy::ZeroPad).unwrap();
        assert_eq!(valid.get(1, 1), 0.0);
        assert_eq!(valid.get(2, 2), 1.0);
    }

    #[test]
    fn warp_dimension_mismatch() {
        let img = ramp(4, 4);
        assert!(backward_warp(&img, &FlowField::zeros(4, 5), BorderPolicy::ZeroPad).is_err());
    }

    #[test]
    fn splat_zero_flow_counts_one() {
        let counts = forward_splat_count(&FlowField::zeros(5, 6)).unwrap();
        assert!(counts.data.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn splat_collision_and_vacancy() {
        let mut flow = FlowField::zeros(3, 3);
        // (1,0) -> (1,1): collides with pixel (1,1)
        flow.set(0, 1, 0.0, 1.0);
        let counts = forward_splat_count(&flow).unwrap();
        assert_eq!(counts.get(1, 1), 2.0);
        assert_eq!(counts.get(0, 1), 0.0);
    }

    #[test]
    fn splat_half_pixel() {
        let mut flow = FlowField::zeros(3, 4);
        flow.set(1, 1, 0.5, 0.0);
        let (counts, discarded) = forward_splat(&flow).unwrap();
        // pixel (1,1) sends 0.5 to itself and 0.5 to (1,2); (1,2) keeps its own 1
        assert_eq!(counts.get(1, 1), 0.5);
        assert_eq!(counts.get(1, 2), 1.5);
        assert_eq!(discarded, 0.0);
    }

    #[test]
    fn resize_flow_scales_vectors() {
        let flow = FlowField::constant(4, 5, 3.0, 1.0);
        let big = resize_flow(&flow, 8, 10).unwrap();
        for y in 0..8 {
            for x in 0..10 {
                assert_eq!(big.get(y, x), (6.0, 2.0));
            }
        }
    }

    #[test]
    fn downsample_box_average() {
        let f = Field::from_fn(4, 4, 1, |y, x, _| (y * 4 + x) as f64);
        let d = downsample2(&f).unwrap();
        assert_eq!((d.height, d.width), (2, 2));
        assert_eq!(d.get(0, 0, 0), (0.0 + 1.0 + 4.0 + 5.0) / 4.0);
    }
}
