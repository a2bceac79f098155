//! Road geometry on a one-metre arc-length grid and the vehicle's
//! longitudinal dynamics along it.
//!
//! Headings are compass degrees (clockwise from north); positions are
//! metres east (x) and north (y) of the chapter origin.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

/// Curvature as a smooth bounded random walk in arc length: a leaky
/// integrator of AR(1) noise, pulled back toward the base heading so the
/// road keeps a general direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureProcess {
    /// Innovation scale of the curvature rate, 1/m² per step.
    pub sigma: f64,
    /// Step-to-step correlation of the curvature rate.
    pub rho: f64,
    /// Per-metre decay of curvature toward zero.
    pub leak: f64,
    /// Per-metre pull toward the base heading, 1/m per radian.
    pub heading_restore: f64,
    /// Bound on |curvature|, 1/m.
    pub max_curvature: f64,
}

impl CurvatureProcess {
    pub fn straight() -> Self {
        Self {
            sigma: 0.0,
            ..Self::default()
        }
    }
}

impl Default for CurvatureProcess {
    fn default() -> Self {
        Self {
            sigma: 1e-4,
            rho: 0.97,
            leak: 0.04,
            heading_restore: 6e-4,
            max_curvature: 0.04,
        }
    }
}

/// Grid spacing of the geometry, metres.
pub const STEP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub base_heading: f64,
    /// Curvature on [i, i + 1).
    pub kappa: Vec<f64>,
    /// Heading offset from `base_heading` at node i, radians.
    psi: Vec<f64>,
    xy: Vec<(f64, f64)>,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Displacement along a constant-curvature arc of length `len` starting at
/// compass heading `theta` (radians).
fn arc(theta: f64, kappa: f64, len: f64) -> (f64, f64) {
    let half = kappa * len / 2.0;
    let chord = len * sinc(half);
    let mid = theta + half;
    (chord * mid.sin(), chord * mid.cos())
}

impl Road {
    pub fn from_curvature(base_heading: f64, kappa: Vec<f64>) -> Self {
        let n = kappa.len();
        let mut psi = Vec::with_capacity(n + 1);
        let mut xy = Vec::with_capacity(n + 1);
        psi.push(0.0);
        xy.push((0.0, 0.0));
        let base = base_heading.to_radians();
        for i in 0..n {
            let (dx, dy) = arc(base + psi[i], kappa[i], STEP);
            xy.push((xy[i].0 + dx, xy[i].1 + dy));
            psi.push(psi[i] + kappa[i] * STEP);
        }
        Self {
            base_heading,
            kappa,
            psi,
            xy,
        }
    }

    pub fn generate(process: &CurvatureProcess, base_heading: f64, length: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut kappa = Vec::with_capacity(length);
        let (mut k, mut u, mut psi) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..length {
            kappa.push(k);
            psi += k * STEP;
            let xi: f64 = StandardNormal.sample(rng);
            u = process.rho * u + process.sigma * xi;
            k = ((1.0 - process.leak) * k + u - process.heading_restore * psi)
                .clamp(-process.max_curvature, process.max_curvature);
        }
        Self::from_curvature(base_heading, kappa)
    }

    /// Arc length covered by the grid.
    pub fn length(&self) -> f64 {
        self.kappa.len() as f64 * STEP
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.length());
        let i = ((s / STEP).floor() as usize).min(self.kappa.len().saturating_sub(1));
        (i, s - i as f64 * STEP)
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.kappa[self.locate(s).0]
    }

    /// Unwrapped heading in degrees.
    pub fn heading_unwrapped(&self, s: f64) -> f64 {
        let (i, r) = self.locate(s);
        self.base_heading + (self.psi[i] + self.kappa[i] * r).to_degrees()
    }

    /// Compass heading in [0, 360).
    pub fn heading_at(&self, s: f64) -> f64 {
        self.heading_unwrapped(s).rem_euclid(360.0)
    }

    pub fn position_at(&self, s: f64) -> (f64, f64) {
        let (i, r) = self.locate(s);
        let (dx, dy) = arc((self.base_heading.to_radians()) + self.psi[i], self.kappa[i], r);
        (self.xy[i].0 + dx, self.xy[i].1 + dy)
    }

    /// Offset of the road point at `s + ahead` in the vehicle frame at `s`:
    /// (forward, right) metres.
    pub fn relative(&self, s: f64, ahead: f64) -> (f64, f64) {
        let (x0, y0) = self.position_at(s);
        let (x1, y1) = self.position_at(s + ahead);
        let th = self.heading_unwrapped(s).to_radians();
        let (dx, dy) = (x1 - x0, y1 - y0);
        (dx * th.sin() + dy * th.cos(), dx * th.cos() - dy * th.sin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneProcess {
    /// Speed limits, km/h; consecutive zones differ when more than one is given.
    pub limits: Vec<f64>,
    pub min_length_m: f64,
    pub max_length_m: f64,
}

impl Default for ZoneProcess {
    fn default() -> Self {
        Self {
            limits: vec![30.0, 50.0, 80.0],
            min_length_m: 300.0,
            max_length_m: 900.0,
        }
    }
}

/// Zones as (start, limit), starts ascending from 0.
pub fn generate_zones(p: &ZoneProcess, length: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut s = 0.0;
    let mut prev: Option<usize> = None;
    while s < length {
        let mut i = rng.random_range(0..p.limits.len());
        if p.limits.len() > 1 && Some(i) == prev {
            i = (i + 1 + rng.random_range(0..p.limits.len() - 1)) % p.limits.len();
        }
        out.push((s, p.limits[i]));
        prev = Some(i);
        s += if p.max_length_m > p.min_length_m {
            rng.random_range(p.min_length_m..p.max_length_m)
        } else {
            p.min_length_m
        };
    }
    out
}

pub fn zone_index(zones: &[(f64, f64)], s: f64) -> usize {
    zones.partition_point(|&(start, _)| start <= s).saturating_sub(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Signal,
    Yield,
    Pedestrian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRates {
    pub signal_per_km: f64,
    pub yield_per_km: f64,
    pub pedestrian_per_km: f64,
}

impl EventRates {
    pub fn none() -> Self {
        Self {
            signal_per_km: 0.0,
            yield_per_km: 0.0,
            pedestrian_per_km: 0.0,
        }
    }
}

impl Default for EventRates {
    fn default() -> Self {
        Self {
            signal_per_km: 1.5,
            yield_per_km: 1.0,
            pedestrian_per_km: 1.0,
        }
    }
}

/// Markers are active from this far before their location...
pub const EVENT_LEAD_M: f64 = 40.0;
/// ...until this far past it.
pub const EVENT_TAIL_M: f64 = 10.0;

/// Poisson-placed event locations, sorted by position.
pub fn generate_events(rates: &EventRates, length: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, EventKind)> {
    let mut out = Vec::new();
    for (kind, rate) in [
        (EventKind::Signal, rates.signal_per_km),
        (EventKind::Yield, rates.yield_per_km),
        (EventKind::Pedestrian, rates.pedestrian_per_km),
    ] {
        if rate <= 0.0 {
            continue;
        }
        let gap = Exp::new(rate / 1000.0).expect("positive rate");
        let mut s = gap.sample(rng);
        while s < length {
            out.push((s, kind));
            s += gap.sample(rng);
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out
}

pub fn event_active(events: &[(f64, EventKind)], kind: EventKind, s: f64) -> bool {
    events
        .iter()
        .any(|&(p, k)| k == kind && s >= p - EVENT_LEAD_M && s <= p + EVENT_TAIL_M)
}

/// One step of the first-order speed lag, exact for a constant target.
pub fn lag_step(v: f64, target: f64, dt: f64, tau: f64) -> f64 {
    target + (v - target) * (-dt / tau).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn straight_road_keeps_its_heading() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let road = Road::generate(&CurvatureProcess::straight(), 135.0, 500, &mut rng);
        assert!(road.kappa.iter().all(|&k| k == 0.0));
        for s in [0.0, 10.5, 250.0, 499.0] {
            assert_eq!(road.heading_at(s), 135.0);
        }
        let (x, y) = road.position_at(100.0);
        let t = 135f64.to_radians();
        assert!((x - 100.0 * t.sin()).abs() < 1e-9 && (y - 100.0 * t.cos()).abs() < 1e-9);
    }

    #[test]
    fn constant_curvature_traces_a_circle() {
        let k = 0.01;
        let road = Road::from_curvature(0.0, vec![k; 400]);
        // Quarter circle of radius 100 m heading north then turning east.
        let s = std::f64::consts::FRAC_PI_2 / k;
        let (x, y) = road.position_at(s);
        assert!((x - 100.0).abs() < 1e-9 && (y - 100.0).abs() < 1e-9, "{x} {y}");
        assert!((road.heading_at(s) - 90.0).abs() < 1e-9);
        let (fwd, right) = road.relative(0.0, s);
        assert!((fwd - 100.0).abs() < 1e-9 && (right - 100.0).abs() < 1e-9);
    }

    #[test]
    fn curvature_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = CurvatureProcess::default();
        let road = Road::generate(&p, 180.0, 20_000, &mut rng);
        assert!(road.kappa.iter().all(|k| k.abs() <= p.max_curvature));
        let sd = (road.kappa.iter().map(|k| k * k).sum::<f64>() / road.kappa.len() as f64).sqrt();
        assert!(sd > 2e-3 && sd < 3e-2, "curvature rms {sd}");
        let max_dev = (0..20_000)
            .map(|s| (road.heading_unwrapped(s as f64) - 180.0).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 150.0, "heading wandered {max_dev} degrees");
    }

    #[test]
    fn zones_alternate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = generate_zones(&ZoneProcess::default(), 20_000.0, &mut rng);
        assert!(z.windows(2).all(|w| w[0].1 != w[1].1 && w[0].0 < w[1].0));
        assert_eq!(zone_index(&z, 0.0), 0);
        assert_eq!(zone_index(&z, z[3].0), 3);
        assert_eq!(zone_index(&z, z[3].0 - 1e-9), 2);
    }

    #[test]
    fn lag_reaches_one_over_e_after_tau() {
        let (mut v, dt, tau) = (30.0, 0.1, 5.0);
        for _ in 0..50 {
            v = lag_step(v, 50.0, dt, tau);
        }
        assert!((50.0 - v - 20.0 * (-1.0f64).exp()).abs() < 1e-9);
    }
}
