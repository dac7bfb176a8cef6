//! Plain-text `key=value` run configuration.
//!
//! One key per line; `#` starts a comment. Unknown keys are rejected so
//! typos fail loudly. Defaults follow the published training setup where
//! one exists (8 frames, 2x2 windows at 50% retention, temporal scales
//! {1, 2}) and the toy test geometry otherwise.

use crate::alignment::LossConfig;
use crate::encoder::{EncoderConfig, Variant};
use crate::error::{Error, Result};
use crate::mcm::{BoundaryPolicy, MixMode};
use crate::tensor::Real;
use crate::wsm::MaskStrategy;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub seed: u64,
    pub temporal_views: usize,
    pub spatial_views: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            encoder: EncoderConfig::default(),
            loss: LossConfig::default(),
            seed: 0,
            temporal_views: 3,
            spatial_views: 1,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let e = &mut self.encoder;
        match key {
            "frames" => e.frames = parse_num(key, value)?,
            "height" => e.height = parse_num(key, value)?,
            "width" => e.width = parse_num(key, value)?,
            "patch" => e.patch = parse_num(key, value)?,
            "d_model" => e.d_model = parse_num(key, value)?,
            "layers" => e.layers = parse_num(key, value)?,
            "heads" => e.heads = parse_num(key, value)?,
            "window_w1" => e.window.w1 = parse_num(key, value)?,
            "window_w2" => e.window.w2 = parse_num(key, value)?,
            "window_r" => e.window.r = parse_num(key, value)?,
            "scales" => {
                e.mix.scales = value
                    .split(',')
                    .map(|s| parse_num::<usize>(key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            "gamma" => e.mix.gamma = parse_num(key, value)?,
            "mix_mode" => {
                e.mix.mode = match value {
                    "separate" => MixMode::Separate,
                    "continual" => MixMode::Continual,
                    other => return Err(Error::config(format!("{key}: unknown mode {other:?}"))),
                }
            }
            "boundary" => {
                e.mix.boundary = match value {
                    "zero_fill" => BoundaryPolicy::ZeroFill,
                    "self_fill" => BoundaryPolicy::SelfFill,
                    other => return Err(Error::config(format!("{key}: unknown policy {other:?}"))),
                }
            }
            "mask_strategy" => {
                e.mask_strategy = match value {
                    "repeat_window_shift" => MaskStrategy::RepeatWindowShift,
                    "uniform_shift" => MaskStrategy::UniformShift,
                    "random" => MaskStrategy::Random { seed: self.seed },
                    "random_shift" => MaskStrategy::RandomShift { seed: self.seed },
                    "random_window_shift" => MaskStrategy::RandomWindowShift { seed: self.seed },
                    other => {
                        return Err(Error::config(format!("{key}: unknown strategy {other:?}")))
                    }
                }
            }
            "variant" => e.variant = Variant::parse(value)?,
            "ln_eps" => e.ln_eps = parse_num(key, value)?,
            "lambda_distill" => self.loss.lambda_distill = parse_num(key, value)?,
            "logit_scale" => self.loss.logit_scale = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "temporal_views" => self.temporal_views = parse_num(key, value)?,
            "spatial_views" => self.spatial_views = parse_num(key, value)?,
            other => return Err(Error::config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Parse a whole config file body.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "line {}: expected key=value, got {line:?}",
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Validate the composed configuration as a whole.
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.loss.validate()?;
        if self.temporal_views == 0 || self.spatial_views == 0 {
            return Err(Error::config("view counts must be positive".to_string()));
        }
        Ok(())
    }
}

/// `Real`-typed convenience wrapper used by tests.
pub fn real(v: f64) -> Real {
    v as Real
}
