//! Synthetic scenes with analytic flow and occlusion, built on smooth
//! sinusoidal textures that can be sampled at any real position.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{FlowField, Image, Plane};
use crate::objectives::CropWindow;
use crate::solver::SolverConfig;

/// Solver settings for the synthetic scenes. The textures have strong
/// gradients everywhere, and at the preset edge sensitivity of 150 the
/// smoothness weights all but vanish; 10 keeps them in play.
pub fn benchmark_solver_config() -> SolverConfig {
    let mut config = SolverConfig::default();
    config.weights.edge_lambda = 10.0;
    config
}

#[derive(Debug, Clone)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: [f64; 3],
}

/// A band-limited random texture defined on the whole plane.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<Wave>,
    norm: [f64; 3],
}

impl Texture {
    /// Sum of 24 plane waves with spatial frequencies log-uniform in
    /// `[0.05, 0.8]` rad/px, so every pyramid level sees texture.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<Wave> = (0..24)
            .map(|_| {
                let f = rng.random_range(0.05f64.ln()..0.8f64.ln()).exp();
                let dir = rng.random_range(0.0..TAU);
                Wave {
                    kx: f * dir.cos(),
                    ky: f * dir.sin(),
                    phase: rng.random_range(0.0..TAU),
                    amp: [
                        rng.random_range(0.2..1.0),
                        rng.random_range(0.2..1.0),
                        rng.random_range(0.2..1.0),
                    ],
                }
            })
            .collect();
        let mut norm = [0.0; 3];
        for w in &waves {
            for c in 0..3 {
                norm[c] += w.amp[c];
            }
        }
        Self { waves, norm }
    }

    /// Value in `[0, 1]` of channel `c` at real position `(x, y)`.
    pub fn value(&self, x: f64, y: f64, c: usize) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|w| w.amp[c] * (w.kx * x + w.ky * y + w.phase).sin())
            .sum();
        0.5 + 0.5 * s / self.norm[c]
    }

    /// Renders an image whose pixel `(x, y)` shows the texture at `at(x, y)`.
    pub fn render(
        &self,
        height: usize,
        width: usize,
        channels: usize,
        at: impl Fn(f64, f64) -> (f64, f64),
    ) -> Image {
        Image::from_fn(height, width, channels, |y, x, c| {
            let (sx, sy) = at(x as f64, y as f64);
            self.value(sx, sy, c) as f32
        })
    }
}

/// A random textured image.
pub fn texture(height: usize, width: usize, channels: usize, seed: u64) -> Image {
    Texture::random(seed).render(height, width, channels, |x, y| (x, y))
}

/// Two frames, the true flow of frame 1 and its true visibility in frame 2.
#[derive(Debug, Clone)]
pub struct FlowScene {
    pub i1: Image,
    pub i2: Image,
    pub flow: FlowField,
    /// True frame 2 to frame 1 flow.
    pub backward: FlowField,
    /// 1 where the frame 1 pixel is visible in frame 2.
    pub visible: Plane,
}

fn inside(x: f64, y: f64, h: usize, w: usize) -> bool {
    x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64
}

/// Frame 2 is frame 1 translated by `(dx, dy)`; content enters from outside
/// the frame, so nothing wraps.
pub fn translation_pair(height: usize, width: usize, shift: (f64, f64), seed: u64) -> FlowScene {
    let tex = Texture::random(seed);
    let (dx, dy) = shift;
    FlowScene {
        i1: tex.render(height, width, 3, |x, y| (x, y)),
        i2: tex.render(height, width, 3, |x, y| (x - dx, y - dy)),
        flow: FlowField::constant(height, width, dx, dy),
        backward: FlowField::constant(height, width, -dx, -dy),
        visible: Plane::from_fn(height, width, |y, x| {
            inside(x as f64 + dx, y as f64 + dy, height, width) as u8 as f64
        }),
    }
}

/// Zoom about the frame centre: `flow(p) = zoom * (p - c)`. Used with a
/// centred crop, motion near the crop border leaves the crop but stays in
/// the frame.
pub fn zoom_pair(height: usize, width: usize, zoom: f64, seed: u64) -> FlowScene {
    let tex = Texture::random(seed);
    let (cx, cy) = ((width - 1) as f64 / 2.0, (height - 1) as f64 / 2.0);
    let inv = 1.0 / (1.0 + zoom);
    let shrink = zoom / (1.0 + zoom);
    FlowScene {
        i1: tex.render(height, width, 3, |x, y| (x, y)),
        i2: tex.render(height, width, 3, |x, y| (cx + (x - cx) * inv, cy + (y - cy) * inv)),
        flow: FlowField::from_fn(height, width, |y, x| {
            (zoom * (x as f64 - cx), zoom * (y as f64 - cy))
        }),
        backward: FlowField::from_fn(height, width, |y, x| {
            (-shrink * (x as f64 - cx), -shrink * (y as f64 - cy))
        }),
        visible: Plane::from_fn(height, width, |y, x| {
            let (u, v) = (zoom * (x as f64 - cx), zoom * (y as f64 - cy));
            inside(x as f64 + u, y as f64 + v, height, width) as u8 as f64
        }),
    }
}

/// The centred crop of size `crop_h x crop_w` inside a `height x width` frame.
pub fn centred_crop(height: usize, width: usize, crop_h: usize, crop_w: usize) -> CropWindow {
    CropWindow::new(
        (width - crop_w) / 2,
        (height - crop_h) / 2,
        crop_h,
        crop_w,
        height,
        width,
    )
    .expect("crop fits the frame")
}

/// A textured square of side `size` with top-left `(x0, y0)` moving by the
/// integer `shift` over a static textured background.
pub fn moving_square(
    height: usize,
    width: usize,
    size: usize,
    origin: (usize, usize),
    shift: (i64, i64),
    seed: u64,
) -> FlowScene {
    let bg = Texture::random(seed);
    let fg = Texture::random(seed.wrapping_add(0x5eed));
    let (x0, y0) = (origin.0 as i64, origin.1 as i64);
    let s = size as i64;
    let in_square = |x: i64, y: i64, ox: i64, oy: i64| x >= ox && x < ox + s && y >= oy && y < oy + s;
    let frame = |ox: i64, oy: i64| {
        Image::from_fn(height, width, 3, |y, x, c| {
            let (xi, yi) = (x as i64, y as i64);
            if in_square(xi, yi, ox, oy) {
                fg.value((xi - ox) as f64, (yi - oy) as f64, c) as f32
            } else {
                bg.value(x as f64, y as f64, c) as f32
            }
        })
    };
    let (dx, dy) = shift;
    let (h, w) = (height as i64, width as i64);
    FlowScene {
        i1: frame(x0, y0),
        i2: frame(x0 + dx, y0 + dy),
        flow: FlowField::from_fn(height, width, |y, x| {
            if in_square(x as i64, y as i64, x0, y0) {
                (dx as f64, dy as f64)
            } else {
                (0.0, 0.0)
            }
        }),
        backward: FlowField::from_fn(height, width, |y, x| {
            if in_square(x as i64, y as i64, x0 + dx, y0 + dy) {
                (-dx as f64, -dy as f64)
            } else {
                (0.0, 0.0)
            }
        }),
        visible: Plane::from_fn(height, width, |y, x| {
            let (xi, yi) = (x as i64, y as i64);
            let visible = if in_square(xi, yi, x0, y0) {
                let (tx, ty) = (xi + dx, yi + dy);
                tx >= 0 && ty >= 0 && tx < w && ty < h
            } else {
                !in_square(xi, yi, x0 + dx, y0 + dy)
            };
            visible as u8 as f64
        }),
    }
}

/// Frames `t-1`, `t`, `t+1` of a panning background with a faster
/// foreground strip at the right edge that leaves the frame.
#[derive(Debug, Clone)]
pub struct StripSequence {
    pub prev: Image,
    pub cur: Image,
    pub next: Image,
    /// True `t -> t+1` flow.
    pub forward: FlowField,
    /// True `t -> t-1` flow.
    pub backward: FlowField,
    /// 1 where the frame `t` pixel has no correspondence in frame `t+1`.
    pub occluded: Plane,
}

/// The strip of width `strip_width` is flush with the right border at time
/// `t` and moves `strip_speed` px per frame to the right; the background
/// moves `bg_speed` px per frame to the right.
pub fn exiting_strip_sequence(
    height: usize,
    width: usize,
    strip_width: usize,
    bg_speed: f64,
    strip_speed: f64,
    seed: u64,
) -> StripSequence {
    let bg = Texture::random(seed);
    let fg = Texture::random(seed.wrapping_add(0xf00d));
    let x0 = (width - strip_width) as f64;
    let sw = strip_width as f64;
    let in_strip = |x: f64, t: f64| {
        let left = x0 + t * strip_speed;
        x >= left - 1e-9 && x < left + sw - 1e-9
    };
    let frame = |t: f64| {
        Image::from_fn(height, width, 3, |y, x, c| {
            let (xf, yf) = (x as f64, y as f64);
            if in_strip(xf, t) {
                fg.value(xf - t * strip_speed, yf, c) as f32
            } else {
                bg.value(xf - t * bg_speed, yf, c) as f32
            }
        })
    };
    let speed = |x: usize| if in_strip(x as f64, 0.0) { strip_speed } else { bg_speed };
    StripSequence {
        prev: frame(-1.0),
        cur: frame(0.0),
        next: frame(1.0),
        forward: FlowField::from_fn(height, width, |_, x| (speed(x), 0.0)),
        backward: FlowField::from_fn(height, width, |_, x| (-speed(x), 0.0)),
        occluded: Plane::from_fn(height, width, |_, x| {
            let target = x as f64 + speed(x);
            let exits = target > (width - 1) as f64;
            let covered = !in_strip(x as f64, 0.0) && in_strip(target.round(), 1.0);
            (exits || covered) as u8 as f64
        }),
    }
}
