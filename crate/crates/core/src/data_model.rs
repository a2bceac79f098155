//! Domain types shared across the pipeline, plus target normalization.

use std::fmt;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Native camera/semantic sampling rate of the source recordings.
pub const NATIVE_FPS: f64 = 10.0;

/// Number of numeric semantic-map features.
pub const SEMANTIC_FEATURES: usize = 20;

/// Width of the optional route-folder one-hot block.
pub const FOLDER_DUMMIES: usize = 27;

/// Semantic-map columns, in model input order.
pub const SEMANTIC_COLUMNS: [&str; SEMANTIC_FEATURES] = [
    "hereMmLatitude",
    "hereMmLongitude",
    "hereSpeedLimit",
    "hereSpeedLimit_2",
    "hereFreeFlowSpeed",
    "hereSignal",
    "hereYield",
    "herePedestrian",
    "hereIntersection",
    "hereMmIntersection",
    "hereSegmentExitHeading",
    "hereSegmentEntryHeading",
    "hereCurvature",
    "hereCurrentHeading",
    "here1mHeading",
    "here5mHeading",
    "here10mHeading",
    "here20mHeading",
    "here50mHeading",
    "hereTurnNumber",
];

/// Index of a column in [`SEMANTIC_COLUMNS`].
pub fn semantic_index(name: &str) -> Option<usize> {
    SEMANTIC_COLUMNS.iter().position(|c| *c == name)
}

/// One timestep: route, chapter and the native 10 fps frame index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleKey {
    pub route_id: String,
    pub chapter_id: String,
    pub frame_index: u32,
}

impl SampleKey {
    pub fn new(route_id: impl Into<String>, chapter_id: impl Into<String>, frame_index: u32) -> Self {
        Self {
            route_id: route_id.into(),
            chapter_id: chapter_id.into(),
            frame_index,
        }
    }

    /// `route/chapter`, the chapter identifier used in prediction files.
    pub fn chapter_path(&self) -> String {
        format!("{}/{}", self.route_id, self.chapter_id)
    }
}

impl fmt::Display for SampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}#{}", self.route_id, self.chapter_id, self.frame_index)
    }
}

/// Steering angle in degrees and speed in km/h.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetPair {
    pub steering_angle: f64,
    pub speed: f64,
}

impl TargetPair {
    pub fn new(steering_angle: f64, speed: f64) -> Self {
        Self {
            steering_angle,
            speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub angle_mean: f64,
    pub angle_std: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
}

/// Image channel statistics together with target statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub image_channel_mean: [f64; 3],
    pub image_channel_std: [f64; 3],
    pub angle_mean: f64,
    pub angle_std: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
}

impl NormalizationStats {
    pub fn new(image: ImageStats, target: TargetStats) -> Result<Self> {
        let s = Self {
            image_channel_mean: image.mean,
            image_channel_std: image.std,
            angle_mean: target.angle_mean,
            angle_std: target.angle_std,
            speed_mean: target.speed_mean,
            speed_std: target.speed_std,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn image(&self) -> ImageStats {
        ImageStats {
            mean: self.image_channel_mean,
            std: self.image_channel_std,
        }
    }

    pub fn target(&self) -> TargetStats {
        TargetStats {
            angle_mean: self.angle_mean,
            angle_std: self.angle_std,
            speed_mean: self.speed_mean,
            speed_std: self.speed_std,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        for (c, &s) in self.image_channel_std.iter().enumerate() {
            positive(&format!("image_channel_std[{c}]"), s)?;
        }
        positive("angle_std", self.angle_std)?;
        positive("speed_std", self.speed_std)?;
        let means = [
            self.image_channel_mean[0],
            self.image_channel_mean[1],
            self.image_channel_mean[2],
            self.angle_mean,
            self.speed_mean,
        ];
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("normalization means must be finite"));
        }
        Ok(())
    }
}

/// Map a raw target pair into normalized training space.
pub fn normalize_target(t: TargetPair, s: &NormalizationStats) -> Result<[f64; 2]> {
    s.validate()?;
    Ok([
        (t.steering_angle - s.angle_mean) / s.angle_std,
        (t.speed - s.speed_mean) / s.speed_std,
    ])
}

pub fn denormalize_target(n: [f64; 2], s: &NormalizationStats) -> Result<TargetPair> {
    s.validate()?;
    Ok(TargetPair {
        steering_angle: n[0] * s.angle_std + s.angle_mean,
        speed: n[1] * s.speed_std + s.speed_mean,
    })
}

/// Population mean and standard deviation of each target, two-pass.
///
/// Must only ever be fed the training split.
pub fn compute_target_stats(training_targets: &[TargetPair]) -> Result<TargetStats> {
    let n = training_targets.len();
    if n < 2 {
        return Err(Error::validation(format!(
            "target statistics need at least 2 samples, got {n}"
        )));
    }
    let (angle_mean, angle_std) =
        mean_std(training_targets.iter().map(|t| t.steering_angle), n, "steering angle")?;
    let (speed_mean, speed_std) = mean_std(training_targets.iter().map(|t| t.speed), n, "speed")?;
    Ok(TargetStats {
        angle_mean,
        angle_std,
        speed_mean,
        speed_std,
    })
}

fn mean_std(values: impl Iterator<Item = f64>, n: usize, what: &str) -> Result<(f64, f64)> {
    // Sorting first makes the sums independent of input order.
    let mut v: Vec<f64> = values.collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation(format!("non-finite {what} target")));
    }
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1.0) {
        return Err(Error::validation(format!(
            "{what} targets have zero variance; cannot normalize"
        )));
    }
    Ok((mean, std))
}

/// The numeric semantic features of one timestep, after imputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticFeatureVector {
    pub values: [f64; SEMANTIC_FEATURES],
    pub folder_onehot: Option<Vec<f64>>,
    pub missing_mask: [bool; SEMANTIC_FEATURES],
}

impl SemanticFeatureVector {
    /// Build from raw cells; `None` or NaN cells are imputed with 0.
    pub fn from_cells(cells: [Option<f64>; SEMANTIC_FEATURES]) -> Self {
        let mut values = [0.0; SEMANTIC_FEATURES];
        let mut missing_mask = [false; SEMANTIC_FEATURES];
        for (i, c) in cells.iter().enumerate() {
            match c {
                Some(v) if v.is_finite() => values[i] = *v,
                _ => missing_mask[i] = true,
            }
        }
        Self {
            values,
            folder_onehot: None,
            missing_mask,
        }
    }

    pub fn with_folder(mut self, folder_index: usize) -> Result<Self> {
        self.folder_onehot = Some(folder_onehot(folder_index)?);
        Ok(self)
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        let i = semantic_index(column)?;
        (!self.missing_mask[i]).then_some(self.values[i])
    }

    /// Feature dimension fed to the encoder: 20 or 47.
    pub fn dim(&self) -> usize {
        SEMANTIC_FEATURES + self.folder_onehot.as_ref().map_or(0, Vec::len)
    }

    pub fn all_missing(&self) -> bool {
        self.missing_mask.iter().all(|&m| m)
    }

    pub fn zeros() -> Self {
        Self::from_cells([None; SEMANTIC_FEATURES])
    }
}

pub fn folder_onehot(index: usize) -> Result<Vec<f64>> {
    if index >= FOLDER_DUMMIES {
        return Err(Error::config(format!(
            "route folder index {index} exceeds the {FOLDER_DUMMIES} folder dummies"
        )));
    }
    let mut v = vec![0.0; FOLDER_DUMMIES];
    v[index] = 1.0;
    Ok(v)
}

/// A channel-normalized image in (channel, height, width) layout.
pub type NormalizedImage = Array3<f64>;

/// Current frame and the frame 0.4 s earlier, both normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub previous: NormalizedImage,
    pub current: NormalizedImage,
}

/// Convert interleaved RGB8 pixels to a normalized CHW image.
pub fn normalize_rgb(pixels: &[u8], width: usize, height: usize, stats: &ImageStats) -> NormalizedImage {
    debug_assert_eq!(pixels.len(), width * height * 3);
    let mut out = Array3::<f64>::zeros((3, height, width));
    for y in 0..height {
        for x in 0..width {
            let p = (y * width + x) * 3;
            for c in 0..3 {
                out[[c, y, x]] = (pixels[p + c] as f64 / 255.0 - stats.mean[c]) / stats.std[c];
            }
        }
    }
    out
}
