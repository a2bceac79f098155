//! Flat-shaded forward-camera frames: sky, grass, a road whose centreline
//! follows the geometry ahead, edge lines and centre dashes that scroll
//! with distance travelled.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::road::Road;

const CAMERA_HEIGHT_M: f64 = 1.5;
const ROAD_HALF_WIDTH_M: f64 = 3.6;
const LINE_HALF_WIDTH_M: f64 = 0.12;
const DASH_PERIOD_M: f64 = 12.0;
const DASH_LENGTH_M: f64 = 6.0;
const MAX_DEPTH_M: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// Per-channel uniform pixel noise amplitude.
    pub noise: u8,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 72,
            noise: 4,
        }
    }
}

/// Render the view from arc length `s`; returns packed RGB8.
pub fn render_frame(road: &Road, s: f64, cfg: &RenderConfig, noise_seed: u64) -> Vec<u8> {
    let (w, h) = (cfg.width, cfg.height);
    let horizon = 0.4 * h as f64;
    let focal = 0.9 * w as f64;
    let cx = w as f64 / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut px = vec![0u8; w * h * 3];
    for y in 0..h {
        let row = y as f64 + 0.5;
        let ground = row > horizon;
        let depth = if ground {
            (focal * CAMERA_HEIGHT_M / (row - horizon)).min(MAX_DEPTH_M)
        } else {
            MAX_DEPTH_M
        };
        let (fwd, right) = if ground { road.relative(s, depth) } else { (1.0, 0.0) };
        let z = fwd.max(0.5);
        let centre = cx + focal * right / z;
        let scale = focal / z;
        let dash_on = (s + depth).rem_euclid(DASH_PERIOD_M) < DASH_LENGTH_M;
        let fog = (depth / MAX_DEPTH_M).min(1.0);
        for x in 0..w {
            let col = x as f64 + 0.5;
            let rgb: [f64; 3] = if !ground {
                let t = row / horizon;
                [110.0 + 60.0 * t, 160.0 + 40.0 * t, 235.0]
            } else {
                let off = (col - centre) / scale;
                let a = off.abs();
                if a > ROAD_HALF_WIDTH_M {
                    [70.0 + 40.0 * fog, 125.0 + 20.0 * fog, 55.0 + 50.0 * fog]
                } else if a > ROAD_HALF_WIDTH_M - 2.0 * LINE_HALF_WIDTH_M {
                    [235.0, 235.0, 235.0]
                } else if a < LINE_HALF_WIDTH_M && dash_on {
                    [240.0, 210.0, 60.0]
                } else {
                    [85.0 + 30.0 * fog, 85.0 + 30.0 * fog, 90.0 + 30.0 * fog]
                }
            };
            let p = (y * w + x) * 3;
            for c in 0..3 {
                let n = if cfg.noise > 0 {
                    rng.random_range(-(cfg.noise as i32)..=cfg.noise as i32)
                } else {
                    0
                };
                px[p + c] = (rgb[c].round() as i32 + n).clamp(0, 255) as u8;
            }
        }
    }
    px
}

#[cfg(test)]
mod tests {
    use super::*;

    fn road_centre_column(px: &[u8], w: usize, y: usize) -> f64 {
        // Mean column of road-grey-or-marking pixels on row y.
        let cols: Vec<usize> = (0..w)
            .filter(|&x| {
                let p = (y * w + x) * 3;
                let (r, g, b) = (px[p] as i32, px[p + 1] as i32, px[p + 2] as i32);
                !(g > r + 30 && g > b + 30)
            })
            .collect();
        cols.iter().sum::<usize>() as f64 / cols.len() as f64
    }

    #[test]
    fn road_bends_toward_the_curve() {
        let cfg = RenderConfig {
            noise: 0,
            ..RenderConfig::default()
        };
        let y = (0.55 * cfg.height as f64) as usize;
        let straight = Road::from_curvature(0.0, vec![0.0; 400]);
        let right = Road::from_curvature(0.0, vec![0.01; 400]);
        let left = Road::from_curvature(0.0, vec![-0.01; 400]);
        let c0 = road_centre_column(&render_frame(&straight, 0.0, &cfg, 0), cfg.width, y);
        let cr = road_centre_column(&render_frame(&right, 0.0, &cfg, 0), cfg.width, y);
        let cl = road_centre_column(&render_frame(&left, 0.0, &cfg, 0), cfg.width, y);
        assert!((c0 - cfg.width as f64 / 2.0).abs() < 1.0, "{c0}");
        assert!(cr > c0 + 3.0 && cl < c0 - 3.0, "{cl} {c0} {cr}");
    }

    #[test]
    fn dashes_move_with_distance() {
        let cfg = RenderConfig {
            noise: 0,
            ..RenderConfig::default()
        };
        let road = Road::from_curvature(0.0, vec![0.0; 400]);
        assert_ne!(render_frame(&road, 0.0, &cfg, 0), render_frame(&road, 3.0, &cfg, 0));
        assert_eq!(render_frame(&road, 0.0, &cfg, 0), render_frame(&road, DASH_PERIOD_M, &cfg, 0));
    }
}
