//! Mean squared error in raw units, overall and per zone.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::zones::ZoneLabel;
use crate::data_model::{SampleKey, TargetPair};
use crate::error::{Error, Result};

/// Angle MSE in degrees², speed MSE in (km/h)², and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mse {
    pub mse_angle: f64,
    pub mse_speed: f64,
    pub combined: f64,
    pub count: usize,
}

impl Mse {
    pub fn from_sums(angle_sq: f64, speed_sq: f64, count: usize) -> Self {
        let n = count.max(1) as f64;
        let (a, s) = (angle_sq / n, speed_sq / n);
        Self {
            mse_angle: a,
            mse_speed: s,
            combined: a + s,
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: Mse,
    /// Only zones with at least one sample appear.
    pub zones: Vec<(ZoneLabel, Mse)>,
}

impl MetricReport {
    pub fn zone(&self, z: ZoneLabel) -> Option<&Mse> {
        self.zones.iter().find(|(l, _)| *l == z).map(|(_, m)| m)
    }
}

/// Pair predictions with ground truth by key, in key order.
pub fn align(pred: &[(SampleKey, TargetPair)], truth: &[(SampleKey, TargetPair)]) -> Result<Vec<(SampleKey, TargetPair, TargetPair)>> {
    let truth_map: BTreeMap<&SampleKey, TargetPair> = truth.iter().map(|(k, t)| (k, *t)).collect();
    let pred_map: BTreeMap<&SampleKey, TargetPair> = pred.iter().map(|(k, t)| (k, *t)).collect();
    if pred_map.len() != pred.len() || truth_map.len() != truth.len() {
        return Err(Error::validation("duplicate sample keys"));
    }
    let missing: Vec<String> = truth_map
        .keys()
        .filter(|k| !pred_map.contains_key(*k))
        .map(|k| k.to_string())
        .collect();
    let extra: Vec<String> = pred_map
        .keys()
        .filter(|k| !truth_map.contains_key(*k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::validation(format!(
            "key sets differ: {} missing from predictions [{}], {} without ground truth [{}]",
            missing.len(),
            preview(&missing),
            extra.len(),
            preview(&extra)
        )));
    }
    Ok(truth_map
        .into_iter()
        .map(|(k, t)| (k.clone(), pred_map[k], t))
        .collect())
}

pub(crate) fn preview(keys: &[String]) -> String {
    const SHOWN: usize = 5;
    let mut s = keys.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if keys.len() > SHOWN {
        s.push_str(", ...");
    }
    s
}

fn sq(p: &TargetPair, t: &TargetPair) -> (f64, f64) {
    ((p.steering_angle - t.steering_angle).powi(2), (p.speed - t.speed).powi(2))
}

/// Overall MSE over identical, non-empty key sets.
pub fn mse(pred: &[(SampleKey, TargetPair)], truth: &[(SampleKey, TargetPair)]) -> Result<Mse> {
    if truth.is_empty() {
        return Err(Error::validation("no samples to evaluate"));
    }
    let rows = align(pred, truth)?;
    let (a, s) = rows.iter().fold((0.0, 0.0), |(a, s), (_, p, t)| {
        let (da, ds) = sq(p, t);
        (a + da, s + ds)
    });
    Ok(Mse::from_sums(a, s, rows.len()))
}

/// Overall MSE plus one entry per zone that has samples.
pub fn per_zone_report(
    pred: &[(SampleKey, TargetPair)],
    truth: &[(SampleKey, TargetPair)],
    labels: &BTreeMap<SampleKey, BTreeSet<ZoneLabel>>,
) -> Result<MetricReport> {
    let overall = mse(pred, truth)?;
    let rows = align(pred, truth)?;
    let mut sums: BTreeMap<ZoneLabel, (f64, f64, usize)> = BTreeMap::new();
    for (k, p, t) in &rows {
        let (da, ds) = sq(p, t);
        for z in labels.get(k).into_iter().flatten() {
            let e = sums.entry(*z).or_insert((0.0, 0.0, 0));
            e.0 += da;
            e.1 += ds;
            e.2 += 1;
        }
    }
    Ok(MetricReport {
        overall,
        zones: sums
            .into_iter()
            .map(|(z, (a, s, n))| (z, Mse::from_sums(a, s, n)))
            .collect(),
    })
}
