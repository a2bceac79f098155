//! Frame decoding, area-averaging resize and frame-pair loading.

use std::path::Path;

use crate::data_model::{normalize_rgb, FramePair, NormalizationStats, SampleKey};
use crate::error::{Error, Result};
use crate::ingest::layout::{ChapterKey, DatasetLayout};
use crate::ingest::sampling::SamplingPlan;

/// An interleaved RGB8 image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            pixels,
        }
    }
}

/// Decode a frame; any decoding failure is a hard error.
pub fn decode_frame(path: &Path) -> Result<RgbImage> {
    let reader = image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let rgb = img.to_rgb8();
    Ok(RgbImage {
        width: rgb.width() as usize,
        height: rgb.height() as usize,
        pixels: rgb.into_raw(),
    })
}

/// Interpolation used when resizing to the sampling plan resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResizeKernel {
    /// Each destination pixel is the overlap-weighted mean of the source
    /// pixels its footprint covers.
    #[default]
    Area,
    Nearest,
}

/// Overlap weights of every destination cell along one axis.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let start = d as f64 * scale;
            let end = (d + 1) as f64 * scale;
            let mut w = Vec::new();
            let mut s = start.floor() as usize;
            while (s as f64) < end && s < src {
                let lo = start.max(s as f64);
                let hi = end.min((s + 1) as f64);
                if hi > lo {
                    w.push((s, (hi - lo) / scale));
                }
                s += 1;
            }
            w
        })
        .collect()
}

pub fn resize(img: &RgbImage, width: usize, height: usize, kernel: ResizeKernel) -> RgbImage {
    if img.width == width && img.height == height {
        return img.clone();
    }
    match kernel {
        ResizeKernel::Area => resize_area(img, width, height),
        ResizeKernel::Nearest => resize_nearest(img, width, height),
    }
}

fn resize_area(img: &RgbImage, width: usize, height: usize) -> RgbImage {
    let xw = area_weights(img.width, width);
    let yw = area_weights(img.height, height);
    // Horizontal pass into f64, then vertical pass.
    let mut tmp = vec![0.0f64; img.height * width * 3];
    for y in 0..img.height {
        for (dx, weights) in xw.iter().enumerate() {
            for c in 0..3 {
                let mut acc = 0.0;
                for &(sx, w) in weights {
                    acc += w * img.pixels[(y * img.width + sx) * 3 + c] as f64;
                }
                tmp[(y * width + dx) * 3 + c] = acc;
            }
        }
    }
    let mut pixels = vec![0u8; width * height * 3];
    for (dy, weights) in yw.iter().enumerate() {
        for dx in 0..width {
            for c in 0..3 {
                let mut acc = 0.0;
                for &(sy, w) in weights {
                    acc += w * tmp[(sy * width + dx) * 3 + c];
                }
                pixels[(dy * width + dx) * 3 + c] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    RgbImage {
        width,
        height,
        pixels,
    }
}

fn resize_nearest(img: &RgbImage, width: usize, height: usize) -> RgbImage {
    let mut pixels = Vec::with_capacity(width * height * 3);
    for dy in 0..height {
        let sy = ((dy as f64 + 0.5) * img.height as f64 / height as f64) as usize;
        for dx in 0..width {
            let sx = ((dx as f64 + 0.5) * img.width as f64 / width as f64) as usize;
            let p = (sy.min(img.height - 1) * img.width + sx.min(img.width - 1)) * 3;
            pixels.extend_from_slice(&img.pixels[p..p + 3]);
        }
    }
    RgbImage {
        width,
        height,
        pixels,
    }
}

/// Outcome of loading the pair anchored at a sample key.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameLoad {
    Pair(FramePair),
    /// The anchor has no predecessor `pair_offset` frames earlier; the
    /// sample is skipped.
    WarmUp,
}

/// Index of the previous frame of a pair, or `None` during warm-up.
pub fn previous_index(frame_index: u32, plan: &SamplingPlan) -> Option<u32> {
    frame_index.checked_sub(plan.pair_offset)
}

pub fn load_resized(path: &Path, plan: &SamplingPlan, kernel: ResizeKernel) -> Result<RgbImage> {
    let img = decode_frame(path)?;
    Ok(resize(&img, plan.width(), plan.height(), kernel))
}

/// Load and normalize the (previous, current) frames for `key` from disk.
pub fn load_frame_pair(
    layout: &DatasetLayout,
    key: &SampleKey,
    plan: &SamplingPlan,
    stats: &NormalizationStats,
) -> Result<FrameLoad> {
    let chapter = ChapterKey::new(&key.route_id, &key.chapter_id);
    let Some(prev_index) = previous_index(key.frame_index, plan) else {
        return Ok(FrameLoad::WarmUp);
    };
    let prev_path = layout.frame_path(&chapter, prev_index);
    if !prev_path.exists() {
        return Ok(FrameLoad::WarmUp);
    }
    let cur = load_resized(&layout.frame_path(&chapter, key.frame_index), plan, ResizeKernel::Area)?;
    let prev = load_resized(&prev_path, plan, ResizeKernel::Area)?;
    let image_stats = stats.image();
    Ok(FrameLoad::Pair(FramePair {
        previous: normalize_rgb(&prev.pixels, prev.width, prev.height, &image_stats),
        current: normalize_rgb(&cur.pixels, cur.width, cur.height, &image_stats),
    }))
}
