use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_model::NATIVE_FPS;
use crate::error::{Error, Result};

/// Seconds between the previous and the current frame of a pair.
pub const PAIR_GAP_SECONDS: f64 = 0.4;

/// Native frames between previous and current frame (0.4 s at 10 fps).
pub const PAIR_OFFSET: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub target_resolution: (u32, u32),
    pub temporal_stride: u32,
    pub pair_offset: u32,
}

impl SamplingPlan {
    pub fn new(width: u32, height: u32, temporal_stride: u32) -> Result<Self> {
        let plan = Self {
            target_resolution: (width, height),
            temporal_stride,
            pair_offset: PAIR_OFFSET,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.target_resolution;
        if w == 0 || h == 0 {
            return Err(Error::config(format!("resolution {w}x{h} must be non-zero")));
        }
        if self.temporal_stride == 0 {
            return Err(Error::config("temporal stride must be >= 1"));
        }
        let gap = self.pair_offset as f64 / NATIVE_FPS;
        if (gap - PAIR_GAP_SECONDS).abs() > 1e-9 {
            return Err(Error::config(format!(
                "pair offset {} gives a {gap} s gap, expected {PAIR_GAP_SECONDS} s",
                self.pair_offset
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.target_resolution.0 as usize
    }

    pub fn height(&self) -> usize {
        self.target_resolution.1 as usize
    }
}

/// Named down-sampling presets. Strides reproduce the 10x/20x/40x
/// reduction in training samples of the three sampled datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingPreset {
    Full,
    Sample1,
    Sample2,
    Sample3,
    /// Desk-scale preset for synthetic data.
    Tiny,
    Custom {
        width: u32,
        height: u32,
        stride: u32,
    },
}

impl SamplingPreset {
    pub fn name(&self) -> String {
        match self {
            SamplingPreset::Full => "full".into(),
            SamplingPreset::Sample1 => "sample1".into(),
            SamplingPreset::Sample2 => "sample2".into(),
            SamplingPreset::Sample3 => "sample3".into(),
            SamplingPreset::Tiny => "tiny".into(),
            SamplingPreset::Custom {
                width,
                height,
                stride,
            } => format!("custom:{width}x{height}:{stride}"),
        }
    }
}

impl fmt::Display for SamplingPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for SamplingPreset {
    type Err = Error;

    /// Accepts the preset names, or `custom:<w>x<h>:<stride>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SamplingPreset::Full),
            "sample1" => Ok(SamplingPreset::Sample1),
            "sample2" => Ok(SamplingPreset::Sample2),
            "sample3" => Ok(SamplingPreset::Sample3),
            "tiny" => Ok(SamplingPreset::Tiny),
            other => parse_custom(other)
                .ok_or_else(|| Error::config(format!("unknown sampling preset `{other}`"))),
        }
    }
}

fn parse_custom(s: &str) -> Option<SamplingPreset> {
    let rest = s.strip_prefix("custom:")?;
    let (res, stride) = rest.split_once(':')?;
    let (w, h) = res.split_once('x')?;
    Some(SamplingPreset::Custom {
        width: w.parse().ok()?,
        height: h.parse().ok()?,
        stride: stride.parse().ok()?,
    })
}

pub fn build_sampling_plan(preset: SamplingPreset) -> Result<SamplingPlan> {
    match preset {
        SamplingPreset::Full => SamplingPlan::new(1920, 1080, 1),
        SamplingPreset::Sample1 => SamplingPlan::new(640, 360, 10),
        SamplingPreset::Sample2 => SamplingPlan::new(320, 180, 20),
        SamplingPreset::Sample3 => SamplingPlan::new(160, 90, 40),
        SamplingPreset::Tiny => SamplingPlan::new(64, 36, 1),
        SamplingPreset::Custom {
            width,
            height,
            stride,
        } => SamplingPlan::new(width, height, stride),
    }
}
