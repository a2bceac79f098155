//! Deterministic kinematic driving data in the on-disk dataset layout.
//!
//! Each chapter drives a generated road at 10 fps. Steering is
//! `steering_gain * curvature`; speed follows the active zone limit through
//! a first-order lag. Semantic rows are filled from the same geometry and
//! frames are rendered from it, so both modalities carry the targets.

pub mod render;
pub mod road;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use render::{render_frame, RenderConfig};
pub use road::{CurvatureProcess, EventKind, EventRates, Road, ZoneProcess};

use crate::data_model::{NATIVE_FPS, SEMANTIC_COLUMNS, SEMANTIC_FEATURES};
use crate::error::{Error, Result};
use crate::ingest::{ChapterKey, DatasetLayout, Split};
use road::{event_active, generate_events, generate_zones, lag_step, zone_index};

pub const LOOKAHEADS_M: [f64; 5] = [1.0, 5.0, 10.0, 20.0, 50.0];
const SEGMENT_M: f64 = 100.0;
const TURN_CURVATURE: f64 = 0.02;
const ORIGIN_LAT: f64 = 48.1;
const ORIGIN_LON: f64 = 11.5;
const METRES_PER_DEGREE: f64 = 111_320.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub seed: u64,
    pub n_routes: usize,
    pub n_chapters: usize,
    /// Frames per chapter at the native 10 fps.
    pub chapter_length: usize,
    pub curvature: CurvatureProcess,
    pub zones: ZoneProcess,
    pub events: EventRates,
    /// First-order lag time constant of speed, seconds.
    pub speed_lag_seconds: f64,
    /// Steering wheel degrees per unit curvature (deg·m).
    pub steering_gain: f64,
    /// Speed at frame 0; the first zone's limit when unset.
    pub initial_speed: Option<f64>,
    /// Probability that any semantic cell is left blank.
    pub blank_fraction: f64,
    pub frame_width: usize,
    pub frame_height: usize,
    pub pixel_noise: u8,
    pub jpeg_quality: u8,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl RouteSpec {
    /// Five-minute chapters.
    pub fn full(seed: u64) -> Self {
        Self {
            seed,
            n_routes: 3,
            n_chapters: 12,
            chapter_length: 3000,
            curvature: CurvatureProcess::default(),
            zones: ZoneProcess::default(),
            events: EventRates::default(),
            speed_lag_seconds: 5.0,
            steering_gain: 2320.0,
            initial_speed: None,
            blank_fraction: 0.02,
            frame_width: 128,
            frame_height: 72,
            pixel_noise: 16,
            jpeg_quality: 90,
            val_fraction: 0.15,
            test_fraction: 0.15,
        }
    }

    /// Many nine-second chapters at the tiny sampling resolution. Short
    /// chapters spread heading and position levels across splits, and the
    /// heavy pixel noise keeps the frames from being a near-perfect
    /// curvature readout.
    pub fn desk(seed: u64) -> Self {
        Self {
            n_routes: 4,
            n_chapters: 40,
            chapter_length: 90,
            frame_width: 64,
            frame_height: 36,
            pixel_noise: 60,
            ..Self::full(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.n_chapters < 3 {
            return bad("synthetic data needs at least 3 chapters (one per split)");
        }
        if self.n_routes == 0 || self.n_routes > self.n_chapters {
            return bad("n_routes must be between 1 and n_chapters");
        }
        if self.chapter_length < 5 {
            return bad("chapter_length must be at least 5 frames");
        }
        if self.zones.limits.is_empty() || self.zones.limits.iter().any(|l| *l <= 0.0) {
            return bad("zone limits must be positive");
        }
        if self.zones.min_length_m <= 0.0 || self.zones.max_length_m < self.zones.min_length_m {
            return bad("zone lengths must satisfy 0 < min <= max");
        }
        if self.speed_lag_seconds <= 0.0 {
            return bad("speed_lag_seconds must be positive");
        }
        if !(0.0..1.0).contains(&self.blank_fraction) {
            return bad("blank_fraction must be in [0, 1)");
        }
        if self.frame_width < 8 || self.frame_height < 8 {
            return bad("frames must be at least 8x8");
        }
        if !(1..=100).contains(&self.jpeg_quality) {
            return bad("jpeg_quality must be in 1..=100");
        }
        if self.val_fraction < 0.0 || self.test_fraction < 0.0 || self.val_fraction + self.test_fraction >= 1.0 {
            return bad("val_fraction + test_fraction must be below 1");
        }
        Ok(())
    }

    pub fn chapter_key(&self, c: usize) -> ChapterKey {
        ChapterKey::new(format!("route{:02}", c % self.n_routes), format!("chapter{c:03}"))
    }

    /// Chapter splits: a seeded shuffle, at least one chapter each for
    /// validation and test.
    pub fn splits(&self) -> BTreeMap<ChapterKey, Split> {
        let n = self.n_chapters;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed ^ 0x5917_u64));
        let n_val = ((n as f64 * self.val_fraction).round() as usize).max(1);
        let n_test = ((n as f64 * self.test_fraction).round() as usize).max(1);
        let n_val = n_val.min(n - 2);
        let n_test = n_test.min(n - 1 - n_val);
        order
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let split = if i < n_val {
                    Split::Val
                } else if i < n_val + n_test {
                    Split::Test
                } else {
                    Split::Train
                };
                (self.chapter_key(c), split)
            })
            .collect()
    }
}

/// Ground truth and semantic cells of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SimFrame {
    pub frame_index: u32,
    /// Arc length travelled, metres.
    pub s: f64,
    pub speed: f64,
    pub steering: f64,
    /// Semantic cells in column order, before blanking.
    pub semantic: [f64; SEMANTIC_FEATURES],
    pub blank: [bool; SEMANTIC_FEATURES],
}

#[derive(Debug, Clone)]
pub struct ChapterSim {
    pub key: ChapterKey,
    pub road: Road,
    pub zones: Vec<(f64, f64)>,
    pub events: Vec<(f64, EventKind)>,
    pub frames: Vec<SimFrame>,
}

fn chapter_rng(seed: u64, chapter: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((chapter as u64) << 8) | stream);
    rng
}

/// Target speed at `s`: the zone limit, reduced near yield and pedestrian
/// markers.
fn target_speed(sim_zones: &[(f64, f64)], events: &[(f64, EventKind)], s: f64) -> f64 {
    let mut v = sim_zones[zone_index(sim_zones, s)].1;
    if event_active(events, EventKind::Yield, s) {
        v *= 0.8;
    }
    if event_active(events, EventKind::Pedestrian, s) {
        v = (v - 10.0).max(0.5 * v);
    }
    v
}

pub fn simulate_chapter(spec: &RouteSpec, chapter: usize) -> ChapterSim {
    let dt = 1.0 / NATIVE_FPS;
    let max_limit = spec.zones.limits.iter().copied().fold(0.0, f64::max);
    let v0 = spec.initial_speed.unwrap_or(0.0).max(max_limit);
    let length = (v0 / 3.6 * dt * spec.chapter_length as f64 + 2.0 * SEGMENT_M + 60.0).ceil() as usize;

    let mut geo = chapter_rng(spec.seed, chapter, 0);
    let base_heading = geo.random_range(150.0..210.0);
    let road = Road::generate(&spec.curvature, base_heading, length, &mut geo);
    let zones = generate_zones(&spec.zones, length as f64, &mut chapter_rng(spec.seed, chapter, 1));
    let events = generate_events(&spec.events, length as f64, &mut chapter_rng(spec.seed, chapter, 2));
    let mut blank_rng = chapter_rng(spec.seed, chapter, 3);

    let turn_starts: Vec<f64> = road
        .kappa
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].abs() < TURN_CURVATURE && w[1].abs() >= TURN_CURVATURE)
        .map(|(i, _)| (i + 1) as f64)
        .collect();

    let cos_lat = ORIGIN_LAT.to_radians().cos();
    let mut s = 0.0;
    let mut v = spec.initial_speed.unwrap_or(zones[0].1);
    let mut frames = Vec::with_capacity(spec.chapter_length);
    for f in 0..spec.chapter_length {
        let zi = zone_index(&zones, s);
        let limit = zones[zi].1;
        let next_limit = zones.get(zi + 1).map_or(limit, |z| z.1);
        let (x, y) = road.position_at(s);
        let flag = |k| if event_active(&events, k, s) { 1.0 } else { 0.0 };
        let near_junction = events
            .iter()
            .any(|&(p, k)| k != EventKind::Pedestrian && (s - p).abs() <= 20.0);
        let seg = (s / SEGMENT_M).floor() * SEGMENT_M;
        let now = road.heading_at(s);
        let mut sem = [0.0; SEMANTIC_FEATURES];
        sem[0] = ORIGIN_LAT + y / METRES_PER_DEGREE;
        sem[1] = ORIGIN_LON + x / (METRES_PER_DEGREE * cos_lat);
        sem[2] = limit;
        sem[3] = next_limit;
        sem[4] = 0.92 * limit;
        sem[5] = flag(EventKind::Signal);
        sem[6] = flag(EventKind::Yield);
        sem[7] = flag(EventKind::Pedestrian);
        sem[8] = if sem[5] > 0.0 || sem[6] > 0.0 { 1.0 } else { 0.0 };
        sem[9] = if near_junction { 1.0 } else { 0.0 };
        sem[10] = road.heading_at(seg + SEGMENT_M);
        sem[11] = road.heading_at(seg);
        sem[12] = road.curvature_at(s);
        sem[13] = now;
        for (j, d) in LOOKAHEADS_M.iter().enumerate() {
            sem[14 + j] = road.heading_at(s + d);
        }
        sem[19] = turn_starts.partition_point(|&t| t <= s) as f64;
        let mut blank = [false; SEMANTIC_FEATURES];
        for b in blank.iter_mut() {
            *b = blank_rng.random::<f64>() < spec.blank_fraction;
        }
        frames.push(SimFrame {
            frame_index: f as u32,
            s,
            speed: v,
            steering: spec.steering_gain * road.curvature_at(s),
            semantic: sem,
            blank,
        });
        s += v / 3.6 * dt;
        v = lag_step(v, target_speed(&zones, &events, s), dt, spec.speed_lag_seconds);
    }
    ChapterSim {
        key: spec.chapter_key(chapter),
        road,
        zones,
        events,
        frames,
    }
}

fn semantic_csv(sim: &ChapterSim) -> String {
    let mut out = String::from("frameIndex");
    for c in SEMANTIC_COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for f in &sim.frames {
        write!(out, "{}", f.frame_index).unwrap();
        for (j, v) in f.semantic.iter().enumerate() {
            out.push(',');
            if f.blank[j] {
                continue;
            }
            match j {
                0 | 1 => write!(out, "{v:.8}"),
                12 => write!(out, "{v:.9}"),
                5..=9 | 19 => write!(out, "{v:.0}"),
                _ => write!(out, "{v:.6}"),
            }
            .unwrap();
        }
        out.push('\n');
    }
    out
}

fn targets_csv(sim: &ChapterSim) -> String {
    let mut out = String::from("frameIndex,canSteering,canSpeed\n");
    for f in &sim.frames {
        writeln!(out, "{},{:.6},{:.6}", f.frame_index, f.steering, f.speed).unwrap();
    }
    out
}

fn encode_jpeg(px: &[u8], w: usize, h: usize, quality: u8) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode(px, w as u32, h as u32, image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::Image {
            path: Default::default(),
            message: e.to_string(),
        })?;
    Ok(buf)
}

fn write_chapter(spec: &RouteSpec, layout: &DatasetLayout, chapter: usize) -> Result<()> {
    let sim = simulate_chapter(spec, chapter);
    let dir = layout.chapter_dir(&sim.key);
    let frames = dir.join("frames");
    fs::create_dir_all(&frames).map_err(|e| Error::io(&frames, e))?;
    let write = |p: &Path, bytes: &[u8]| fs::write(p, bytes).map_err(|e| Error::io(p, e));
    write(&layout.semantic_path(&sim.key), semantic_csv(&sim).as_bytes())?;
    write(&layout.targets_path(&sim.key), targets_csv(&sim).as_bytes())?;
    let cfg = RenderConfig {
        width: spec.frame_width,
        height: spec.frame_height,
        noise: spec.pixel_noise,
    };
    for f in &sim.frames {
        let noise_seed = spec.seed ^ ((chapter as u64) << 32) ^ f.frame_index as u64;
        let px = render_frame(&sim.road, f.s, &cfg, noise_seed);
        let jpg = encode_jpeg(&px, cfg.width, cfg.height, spec.jpeg_quality)?;
        write(&layout.frame_path(&sim.key, f.frame_index), &jpg)?;
    }
    Ok(())
}

/// Write the dataset under `root`: chapters in parallel, each chapter
/// generated serially from its own random streams.
pub fn generate(spec: &RouteSpec, root: &Path) -> Result<DatasetLayout> {
    spec.validate()?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let layout = DatasetLayout::with_splits(root, spec.splits());
    (0..spec.n_chapters)
        .into_par_iter()
        .map(|c| write_chapter(spec, &layout, c))
        .collect::<Result<Vec<()>>>()?;
    layout.write_splits()?;
    DatasetLayout::open(root)
}
