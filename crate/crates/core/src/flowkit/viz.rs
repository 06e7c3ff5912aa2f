use std::f64::consts::TAU;

use crate::field::{FlowField, Image};

/// HSV rendering: hue is the flow direction, saturation the magnitude
/// divided by `max_norm` (default: the largest magnitude in the field),
/// value 1. Zero flow is white.
pub fn colorize_flow(flow: &FlowField, max_norm: Option<f64>) -> Image {
    let max = max_norm.unwrap_or_else(|| {
        flow.as_slice()
            .chunks_exact(2)
            .map(|c| c[0].hypot(c[1]))
            .fold(0.0, f64::max)
    });
    Image::from_fn(flow.height(), flow.width(), 3, |y, x, c| {
        let (u, v) = flow.get(y, x);
        let mag = u.hypot(v);
        let s = if max > 0.0 { (mag / max).min(1.0) } else { 0.0 };
        let hue = v.atan2(u).rem_euclid(TAU) / TAU;
        hsv_channel(hue, s, c) as f32
    })
}

/// Channel `c` of the RGB colour with hue `h` in turns, saturation `s` and value 1.
fn hsv_channel(h: f64, s: f64, c: usize) -> f64 {
    // standard HSV: f(n) = V - V S max(0, min(k, 4 - k, 1)), k = (n + 6h) mod 6
    let n = [5.0, 3.0, 1.0][c];
    let k = (n + 6.0 * h).rem_euclid(6.0);
    1.0 - s * k.min(4.0 - k).clamp(0.0, 1.0)
}

/// Hue in turns of an RGB colour produced by [`colorize_flow`].
pub fn hue_of(rgb: [f32; 3]) -> Option<f64> {
    let [r, g, b] = rgb.map(|v| v as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d <= 0.0 {
        return None;
    }
    let h = if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    };
    Some(h / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(img: &Image, y: usize, x: usize) -> [f32; 3] {
        [img.get(y, x, 0), img.get(y, x, 1), img.get(y, x, 2)]
    }

    #[test]
    fn zero_flow_is_white() {
        let img = colorize_flow(&FlowField::zeros(3, 4), None);
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn primary_directions() {
        let flow = FlowField::from_fn(1, 3, |_, x| [(1.0, 0.0), (-0.5, 0.866), (-0.5, -0.866)][x]);
        let img = colorize_flow(&flow, Some(1.0));
        let red = px(&img, 0, 0);
        assert_eq!(red, [1.0, 0.0, 0.0]);
        let green = px(&img, 0, 1);
        assert!(green[1] > 0.99 && green[0] < 0.01 && green[2] < 0.01);
    }

    #[test]
    fn opposite_flow_has_antipodal_hue() {
        for k in 0..16 {
            let a = k as f64 * TAU / 16.0 + 0.1;
            let flow = FlowField::from_fn(1, 2, |_, x| {
                let s = if x == 0 { 1.0 } else { -1.0 };
                (s * 2.0 * a.cos(), s * 2.0 * a.sin())
            });
            let img = colorize_flow(&flow, None);
            let h0 = hue_of(px(&img, 0, 0)).unwrap();
            let h1 = hue_of(px(&img, 0, 1)).unwrap();
            let d = (h1 - h0).rem_euclid(1.0);
            assert!((d - 0.5).abs() < 1e-6, "{h0} {h1}");
        }
    }

    #[test]
    fn normalization_invariance() {
        let flow = FlowField::from_fn(4, 5, |y, x| (x as f64 - 2.0, y as f64 * 0.5 - 1.0));
        let mut scaled = flow.clone();
        scaled.scale(4.0);
        assert_eq!(colorize_flow(&flow, Some(2.0)), colorize_flow(&scaled, Some(8.0)));
        assert_eq!(colorize_flow(&flow, None), colorize_flow(&scaled, None));
        let mut odd = flow.clone();
        odd.scale(3.7);
        let (a, b) = (colorize_flow(&flow, None), colorize_flow(&odd, None));
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-6);
        }
    }
}
