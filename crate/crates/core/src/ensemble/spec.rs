//! Ensemble membership files and assembly from a prediction store.
//!
//! Spec file, one `key = value` per line, `#` starts a comment:
//!
//! ```text
//! angle = model3@1, model4@1, model5@1
//! speed = model2@1, model3@1, model4@1, model5@1, model1@2
//! weighting = per_sample
//! ```
//!
//! A member `model@k` reads `<store>/<model>/epoch<k>.csv`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::binning::{fit_distribution, BinnedDistribution, ANGLE_BINS, SPEED_BINS};
use super::combine::{combine, Weighting};
use crate::data_model::{SampleKey, TargetPair};
use crate::error::{Error, Result};
use crate::evaluation::read_prediction_csv;
use crate::ingest::{Dataset, Split};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Member {
    pub model: String,
    pub epoch: usize,
}

impl Member {
    pub fn new(model: impl Into<String>, epoch: usize) -> Self {
        Self {
            model: model.into(),
            epoch,
        }
    }
}

impl fmt::Display for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.model, self.epoch)
    }
}

impl FromStr for Member {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (model, epoch) = s
            .trim()
            .rsplit_once('@')
            .ok_or_else(|| Error::config(format!("member `{s}` is not model@epoch")))?;
        let epoch = epoch
            .parse()
            .map_err(|_| Error::config(format!("member `{s}` has a bad epoch")))?;
        if model.is_empty() || model.contains(['/', '\\']) {
            return Err(Error::config(format!("member `{s}` has a bad model id")));
        }
        Ok(Self::new(model, epoch))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub angle_members: Vec<Member>,
    pub speed_members: Vec<Member>,
    pub weighting: Weighting,
    pub angle_bins: usize,
    pub speed_bins: usize,
}

impl EnsembleSpec {
    pub fn new(angle_members: Vec<Member>, speed_members: Vec<Member>) -> Result<Self> {
        let s = Self {
            angle_members,
            speed_members,
            weighting: Weighting::default(),
            angle_bins: ANGLE_BINS,
            speed_bins: SPEED_BINS,
        };
        s.validate()?;
        Ok(s)
    }

    /// Angle from epoch 1 of models 3-5; speed from epoch 1 of models 2-5
    /// and epoch 2 of model 1.
    pub fn published() -> Self {
        let m = |i: usize, e: usize| Member::new(format!("model{i}"), e);
        Self::new(
            vec![m(3, 1), m(4, 1), m(5, 1)],
            vec![m(2, 1), m(3, 1), m(4, 1), m(5, 1), m(1, 2)],
        )
        .expect("non-empty")
    }

    pub fn validate(&self) -> Result<()> {
        if self.angle_members.is_empty() || self.speed_members.is_empty() {
            return Err(Error::config("ensemble spec needs at least one angle and one speed member"));
        }
        if self.angle_bins == 0 || self.speed_bins == 0 {
            return Err(Error::config("bin counts must be positive"));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut angle = None;
        let mut speed = None;
        let mut weighting = Weighting::default();
        let (mut angle_bins, mut speed_bins) = (ANGLE_BINS, SPEED_BINS);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("ensemble spec line {}: expected key = value", i + 1)))?;
            let members = |v: &str| -> Result<Vec<Member>> {
                v.split(',').filter(|m| !m.trim().is_empty()).map(str::parse).collect()
            };
            let bins = |v: &str| -> Result<usize> {
                v.trim()
                    .parse()
                    .map_err(|_| Error::config(format!("ensemble spec line {}: bad bin count", i + 1)))
            };
            match k.trim() {
                "angle" => angle = Some(members(v)?),
                "speed" => speed = Some(members(v)?),
                "weighting" => weighting = v.trim().parse()?,
                "angle_bins" => angle_bins = bins(v)?,
                "speed_bins" => speed_bins = bins(v)?,
                other => {
                    return Err(Error::config(format!("ensemble spec line {}: unknown key `{other}`", i + 1)));
                }
            }
        }
        let s = Self {
            angle_members: angle.unwrap_or_default(),
            speed_members: speed.unwrap_or_default(),
            weighting,
            angle_bins,
            speed_bins,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_text(&self) -> String {
        let join = |m: &[Member]| m.iter().map(Member::to_string).collect::<Vec<_>>().join(", ");
        let w = match self.weighting {
            Weighting::PerSample => "per_sample",
            Weighting::PerModel => "per_model",
        };
        format!(
            "angle = {}\nspeed = {}\nweighting = {w}\nangle_bins = {}\nspeed_bins = {}\n",
            join(&self.angle_members),
            join(&self.speed_members),
            self.angle_bins,
            self.speed_bins
        )
    }
}

/// Directory of member prediction files, `<root>/<model>/epoch<k>.csv`.
#[derive(Debug, Clone)]
pub struct PredictionStore {
    pub root: PathBuf,
}

impl PredictionStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, m: &Member) -> PathBuf {
        self.root.join(&m.model).join(format!("epoch{}.csv", m.epoch))
    }

    pub fn load(&self, m: &Member) -> Result<Vec<(SampleKey, TargetPair)>> {
        let p = self.path(m);
        if !p.is_file() {
            return Err(Error::validation(format!(
                "ensemble member {m} has no predictions at {}",
                p.display()
            )));
        }
        read_prediction_csv(&p)
    }
}

/// The two fitted distributions used to weight members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDistributions {
    pub angle: BinnedDistribution,
    pub speed: BinnedDistribution,
}

impl TargetDistributions {
    /// Fit from training targets only.
    pub fn fit(training: &[TargetPair], spec: &EnsembleSpec) -> Result<Self> {
        let a: Vec<f64> = training.iter().map(|t| t.steering_angle).collect();
        let s: Vec<f64> = training.iter().map(|t| t.speed).collect();
        Ok(Self {
            angle: fit_distribution(&a, spec.angle_bins)?,
            speed: fit_distribution(&s, spec.speed_bins)?,
        })
    }

    /// Fit from the training stream of a dataset.
    pub fn from_dataset(data: &Dataset, spec: &EnsembleSpec) -> Result<Self> {
        Self::fit(&data.targets(Split::Train), spec)
    }
}

/// Combine angle and speed members into final predictions, in key order.
pub fn assemble(spec: &EnsembleSpec, store: &PredictionStore, dists: &TargetDistributions) -> Result<Vec<(SampleKey, TargetPair)>> {
    spec.validate()?;
    let load = |members: &[Member], pick: fn(&TargetPair) -> f64| -> Result<Vec<Vec<(SampleKey, f64)>>> {
        members
            .iter()
            .map(|m| Ok(store.load(m)?.into_iter().map(|(k, t)| (k, pick(&t))).collect()))
            .collect()
    };
    let angle = combine(&load(&spec.angle_members, |t| t.steering_angle)?, &dists.angle, spec.weighting)?;
    let speed = combine(&load(&spec.speed_members, |t| t.speed)?, &dists.speed, spec.weighting)?;
    if angle.len() != speed.len() || angle.iter().zip(&speed).any(|(a, s)| a.0 != s.0) {
        return Err(Error::validation("angle and speed members cover different samples"));
    }
    Ok(angle
        .into_iter()
        .zip(speed)
        .map(|((k, a), (_, s))| {
            (
                k,
                TargetPair {
                    steering_angle: a,
                    speed: s,
                },
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::write_prediction_csv;

    #[test]
    fn spec_text_round_trip() {
        let s = EnsembleSpec::published();
        assert_eq!(s.angle_members.len(), 3);
        assert_eq!(s.speed_members[4], Member::new("model1", 2));
        assert_eq!(EnsembleSpec::parse(&s.to_text()).unwrap(), s);
        let p = EnsembleSpec::parse("# members\nangle = a@1\nspeed = b@2, c@3 # tail\nweighting = per_model\n").unwrap();
        assert_eq!(p.weighting, Weighting::PerModel);
        assert_eq!(p.speed_members, vec![Member::new("b", 2), Member::new("c", 3)]);
        assert!(EnsembleSpec::parse("angle = a@1\n").is_err());
        assert!(EnsembleSpec::parse("angle = a\nspeed = b@1").is_err());
    }

    fn rows(vals: &[(f64, f64)]) -> Vec<(SampleKey, TargetPair)> {
        vals.iter()
            .enumerate()
            .map(|(i, &(a, s))| {
                (
                    SampleKey::new("r", "c", i as u32 + 4),
                    TargetPair {
                        steering_angle: a,
                        speed: s,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn one_member_per_target_passes_through() {
        let dir = tempfile::tempdir().unwrap();
        let store = PredictionStore::new(dir.path());
        let preds = rows(&[(1.5, 20.0), (-3.25, 31.5)]);
        write_prediction_csv(&store.path(&Member::new("m", 1)), &preds).unwrap();
        let spec = EnsembleSpec::new(vec![Member::new("m", 1)], vec![Member::new("m", 1)]).unwrap();
        let train = rows(&[(-10.0, 0.0), (10.0, 50.0)]);
        let t: Vec<TargetPair> = train.iter().map(|r| r.1).collect();
        let out = assemble(&spec, &store, &TargetDistributions::fit(&t, &spec).unwrap()).unwrap();
        assert_eq!(out, preds);
    }

    #[test]
    fn missing_member_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let store = PredictionStore::new(dir.path());
        write_prediction_csv(&store.path(&Member::new("m", 1)), &rows(&[(0.0, 1.0)])).unwrap();
        let spec = EnsembleSpec::new(vec![Member::new("m", 1)], vec![Member::new("ghost", 3)]).unwrap();
        let t = [
            TargetPair {
                steering_angle: 0.0,
                speed: 0.0,
            },
            TargetPair {
                steering_angle: 1.0,
                speed: 1.0,
            },
        ];
        let e = assemble(&spec, &store, &TargetDistributions::fit(&t, &spec).unwrap()).unwrap_err();
        assert!(e.to_string().contains("ghost@3"), "{e}");
    }
}
