//! Likelihood-weighted averaging of member predictions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::binning::BinnedDistribution;
use crate::data_model::SampleKey;
use crate::error::{Error, Result};
use crate::evaluation::metrics::preview;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Each member is weighted by the likelihood of its own prediction.
    #[default]
    PerSample,
    /// Each member gets one weight: the mean likelihood of its predictions.
    PerModel,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_sample" => Ok(Weighting::PerSample),
            "per_model" => Ok(Weighting::PerModel),
            other => Err(Error::config(format!("unknown weighting `{other}` (per_sample | per_model)"))),
        }
    }
}

/// Weighted mean of `values`; plain mean when the weights sum to zero.
/// Equal values come back unchanged and the result is kept inside the
/// members' range despite rounding.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return lo;
    }
    let sw: f64 = weights.iter().sum();
    let m = if sw > 0.0 {
        values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / sw
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    m.clamp(lo, hi)
}

/// Combine members aligned by key. Output is in key order.
pub fn combine(members: &[Vec<(SampleKey, f64)>], d: &BinnedDistribution, weighting: Weighting) -> Result<Vec<(SampleKey, f64)>> {
    if members.is_empty() {
        return Err(Error::validation("ensemble needs at least one member"));
    }
    let maps: Vec<BTreeMap<&SampleKey, f64>> = members
        .iter()
        .map(|m| m.iter().map(|(k, v)| (k, *v)).collect())
        .collect();
    for (i, (m, map)) in members.iter().zip(&maps).enumerate() {
        if map.len() != m.len() {
            return Err(Error::validation(format!("member {i} has duplicate sample keys")));
        }
    }
    let reference = &maps[0];
    for (i, map) in maps.iter().enumerate().skip(1) {
        let missing: Vec<String> = reference.keys().filter(|k| !map.contains_key(*k)).map(|k| k.to_string()).collect();
        let extra: Vec<String> = map.keys().filter(|k| !reference.contains_key(*k)).map(|k| k.to_string()).collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(Error::validation(format!(
                "member {i} key set differs from member 0: missing [{}], unexpected [{}]",
                preview(&missing),
                preview(&extra)
            )));
        }
    }
    let global: Option<Vec<f64>> = (weighting == Weighting::PerModel).then(|| {
        members
            .iter()
            .map(|m| m.iter().map(|(_, v)| d.likelihood(*v)).sum::<f64>() / m.len().max(1) as f64)
            .collect()
    });
    let mut values = vec![0.0; members.len()];
    let mut weights = vec![0.0; members.len()];
    Ok(reference
        .keys()
        .map(|k| {
            for (j, map) in maps.iter().enumerate() {
                values[j] = map[k];
                weights[j] = match &global {
                    Some(g) => g[j],
                    None => d.likelihood(values[j]),
                };
            }
            ((*k).clone(), weighted_mean(&values, &weights))
        })
        .collect())
}
