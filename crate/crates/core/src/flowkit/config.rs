//! Flat `key = value` run configuration with dataset presets.
//!
//! Blank lines and `#` comments are ignored. `preset` is applied first
//! wherever it appears, then every other key in file order, then CLI overrides.

use std::fmt;
use std::str::FromStr;

use super::ErrorRateMode;
use crate::error::{format_err, invalid, Error, Result};
use crate::objectives::{LossWeights, MeanNormalization};
use crate::occlusion::{FbParams, OcclusionMethod};
use crate::selfsup::InversionHyper;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    #[default]
    Chairs,
    Sintel,
    Kitti,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chairs" => Ok(Self::Chairs),
            "sintel" => Ok(Self::Sintel),
            "kitti" => Ok(Self::Kitti),
            _ => invalid(format!("unknown preset {s:?} (chairs, sintel, kitti)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Chairs => "chairs",
            Self::Sintel => "sintel",
            Self::Kitti => "kitti",
        })
    }
}

/// Everything the CLI needs to run any command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub solver: SolverConfig,
    pub inversion: InversionHyper,
    pub er_mode: ErrorRateMode,
    /// Working resolution `(height, width)` for evaluation; flow is resized
    /// back with rescaled components before metrics.
    pub eval_size: (usize, usize),
    pub eval_resize: bool,
    /// Sampling weight of generated labels when mixed with another source.
    pub label_mix: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::Chairs)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidInput(format!("cannot parse {key} = {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => invalid(format!("cannot parse {key} = {value:?} as a boolean")),
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (weights, occlusion, eval_size) = match preset {
            Preset::Chairs => (LossWeights::chairs(), OcclusionMethod::range_map(), (384, 512)),
            Preset::Sintel => (LossWeights::sintel(), OcclusionMethod::range_map(), (480, 928)),
            Preset::Kitti => (LossWeights::kitti(), OcclusionMethod::forward_backward(), (488, 1144)),
        };
        let mut solver = SolverConfig {
            weights,
            occlusion,
            ..SolverConfig::default()
        };
        solver.ramp.final_weight = weights.self_sup;
        Self {
            preset,
            solver,
            inversion: InversionHyper::default(),
            er_mode: ErrorRateMode::Conjunction,
            eval_size,
            eval_resize: false,
            label_mix: 0.5,
        }
    }

    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.solver;
        let w = &mut s.weights;
        let c = &mut s.census;
        match key {
            "preset" => *self = Self::preset(parse(key, value)?),
            "levels" => s.levels = parse(key, value)?,
            "steps" => {
                s.steps_per_level = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<_>>()?;
                if s.steps_per_level.len() == 1 && s.levels > 1 {
                    s.steps_per_level = vec![s.steps_per_level[0]; s.levels];
                }
            }
            "learning_rate" => s.learning_rate = parse(key, value)?,
            "decay_fraction" => s.decay_fraction = parse(key, value)?,
            "decay_factor" => s.decay_factor = parse(key, value)?,
            "adam_beta1" => s.adam.beta1 = parse(key, value)?,
            "adam_beta2" => s.adam.beta2 = parse(key, value)?,
            "adam_eps" => s.adam.eps = parse(key, value)?,
            "occlusion" => {
                s.occlusion = match value {
                    "none" => OcclusionMethod::None,
                    "range_map" => OcclusionMethod::range_map(),
                    "fb" | "forward_backward" => OcclusionMethod::forward_backward(),
                    _ => return invalid(format!("unknown occlusion method {value:?}")),
                }
            }
            "range_threshold" => {
                s.occlusion = OcclusionMethod::RangeMap {
                    threshold: parse(key, value)?,
                }
            }
            "fb_alpha1" | "fb_alpha2" => {
                let mut p = match s.occlusion {
                    OcclusionMethod::ForwardBackward(p) => p,
                    _ => FbParams::default(),
                };
                if key == "fb_alpha1" {
                    p.alpha1 = parse(key, value)?;
                } else {
                    p.alpha2 = parse(key, value)?;
                }
                s.occlusion = OcclusionMethod::ForwardBackward(p);
            }
            "occlusion_period" => s.occlusion_period = parse(key, value)?,
            "full_image_warping" => s.full_image_warping = parse_bool(key, value)?,
            "photo_weight" => w.photo = parse(key, value)?,
            "smooth_weight" => w.smooth = parse(key, value)?,
            "self_weight" => {
                w.self_sup = parse(key, value)?;
                s.ramp.final_weight = w.self_sup;
            }
            "edge_lambda" => w.edge_lambda = parse(key, value)?,
            "smooth_order" => w.smooth_order = parse(key, value)?,
            "charbonnier_eps" => w.eps = parse(key, value)?,
            "charbonnier_alpha" => w.alpha = parse(key, value)?,
            "gamma" => w.gamma = parse(key, value)?,
            "iterations" => w.iterations = parse(key, value)?,
            "census_window" => c.window = parse(key, value)?,
            "census_saturation" => c.saturation = parse(key, value)?,
            "census_eps" => c.eps = parse(key, value)?,
            "census_alpha" => c.alpha = parse(key, value)?,
            "intensity_scale" => c.intensity_scale = parse(key, value)?,
            "normalization" => {
                c.normalization = match value {
                    "all_pixels" => MeanNormalization::AllPixels,
                    "mask_sum" => MeanNormalization::MaskSum,
                    _ => return invalid(format!("unknown normalization {value:?}")),
                }
            }
            "ramp_start" => s.ramp.start = parse(key, value)?,
            "ramp_end" => s.ramp.end = parse(key, value)?,
            "checkpoints" => s.checkpoints_per_level = parse(key, value)?,
            "seed" => {
                s.seed = parse(key, value)?;
                self.inversion.seed = s.seed;
            }
            "inversion_steps" => self.inversion.steps = parse(key, value)?,
            "inversion_lr" => self.inversion.learning_rate = parse(key, value)?,
            "er_mode" => {
                self.er_mode = match value {
                    "conjunction" | "and" => ErrorRateMode::Conjunction,
                    "disjunction" | "or" => ErrorRateMode::Disjunction,
                    _ => return invalid(format!("unknown error-rate mode {value:?}")),
                }
            }
            "eval_height" => self.eval_size.0 = parse(key, value)?,
            "eval_width" => self.eval_size.1 = parse(key, value)?,
            "eval_resize" => self.eval_resize = parse_bool(key, value)?,
            "label_mix" => self.label_mix = parse(key, value)?,
            _ => return invalid(format!("unknown configuration key {key:?}")),
        }
        Ok(())
    }

    /// Builds a configuration from file text and `key=value` overrides.
    pub fn from_sources(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = match file {
            Some(text) => parse_key_values(text)?,
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().cloned());
        let mut config = match pairs.iter().rev().find(|(k, _)| k == "preset") {
            Some((_, v)) => Self::preset(v.parse()?),
            None => Self::default(),
        };
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.inversion.steps == 0 || !(self.inversion.learning_rate > 0.0) {
            return invalid("inversion training needs positive steps and learning rate");
        }
        if self.eval_size.0 == 0 || self.eval_size.1 == 0 {
            return invalid("evaluation size must be positive");
        }
        if !(0.0..=1.0).contains(&self.label_mix) {
            return invalid("label mix must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Parses `key = value` lines; the error offset is the byte where the bad line starts.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line = raw.split('#').next().unwrap_or("").trim();
        if !line.is_empty() {
            let Some((k, v)) = line.split_once('=') else {
                return format_err(offset, format!("expected key = value, got {line:?}"));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return format_err(offset, "empty key");
            }
            out.push((k.to_string(), v.to_string()));
        }
        offset += raw.len();
    }
    Ok(out)
}

/// Splits a CLI `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => invalid(format!("expected key=value, got {s:?}")),
    }
}
