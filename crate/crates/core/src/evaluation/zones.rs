//! Road-context zone labels derived from the semantic stream.
//!
//! Headings are compass degrees, clockwise from north, so a positive
//! heading change over the lookahead is a right turn.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_model::SemanticFeatureVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ZoneLabel {
    Zone30,
    Zone50,
    Zone80,
    Right,
    Straight,
    Left,
    Pedestrian,
    TrafficLight,
    Yield,
}

impl ZoneLabel {
    pub const ALL: [ZoneLabel; 9] = [
        ZoneLabel::Zone30,
        ZoneLabel::Zone50,
        ZoneLabel::Zone80,
        ZoneLabel::Right,
        ZoneLabel::Straight,
        ZoneLabel::Left,
        ZoneLabel::Pedestrian,
        ZoneLabel::TrafficLight,
        ZoneLabel::Yield,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ZoneLabel::Zone30 => "Zone30",
            ZoneLabel::Zone50 => "Zone50",
            ZoneLabel::Zone80 => "Zone80",
            ZoneLabel::Right => "Right",
            ZoneLabel::Straight => "Straight",
            ZoneLabel::Left => "Left",
            ZoneLabel::Pedestrian => "Pedestrian",
            ZoneLabel::TrafficLight => "TrafficLight",
            ZoneLabel::Yield => "Yield",
        }
    }
}

impl fmt::Display for ZoneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ZoneLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ZoneLabel::ALL
            .into_iter()
            .find(|z| z.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown zone `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneConfig {
    /// Heading change over the 10 m lookahead that counts as a turn.
    pub turn_threshold_deg: f64,
    /// Flag features count as present when nonzero and, if set, no larger
    /// than this (for distance-coded sources).
    pub flag_max_distance: Option<f64>,
}

impl Default for ZoneConfig {
    fn default() -> Self {
        Self {
            turn_threshold_deg: 15.0,
            flag_max_distance: None,
        }
    }
}

/// Difference `to - from` wrapped into (-180, 180].
pub fn heading_delta(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

pub fn label_zones(v: &SemanticFeatureVector, cfg: &ZoneConfig) -> BTreeSet<ZoneLabel> {
    let mut out = BTreeSet::new();
    if v.all_missing() {
        return out;
    }
    if let Some(limit) = v.get("hereSpeedLimit") {
        match limit.round() as i64 {
            30 => {
                out.insert(ZoneLabel::Zone30);
            }
            50 => {
                out.insert(ZoneLabel::Zone50);
            }
            80 => {
                out.insert(ZoneLabel::Zone80);
            }
            _ => {}
        }
    }
    let present = |col: &str| {
        v.get(col)
            .is_some_and(|x| x.is_finite() && x != 0.0 && cfg.flag_max_distance.is_none_or(|d| x.abs() <= d))
    };
    for (col, z) in [
        ("herePedestrian", ZoneLabel::Pedestrian),
        ("hereSignal", ZoneLabel::TrafficLight),
        ("hereYield", ZoneLabel::Yield),
    ] {
        if present(col) {
            out.insert(z);
        }
    }
    if let (Some(now), Some(ahead)) = (v.get("hereCurrentHeading"), v.get("here10mHeading")) {
        let d = heading_delta(now, ahead);
        out.insert(if d > cfg.turn_threshold_deg {
            ZoneLabel::Right
        } else if d < -cfg.turn_threshold_deg {
            ZoneLabel::Left
        } else {
            ZoneLabel::Straight
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{semantic_index, SEMANTIC_FEATURES};

    fn row(cells: &[(&str, f64)]) -> SemanticFeatureVector {
        let mut c = [None; SEMANTIC_FEATURES];
        for (name, v) in cells {
            c[semantic_index(name).unwrap()] = Some(*v);
        }
        SemanticFeatureVector::from_cells(c)
    }

    #[test]
    fn speed_limit_50() {
        let z = label_zones(&row(&[("hereSpeedLimit", 50.0)]), &ZoneConfig::default());
        assert_eq!(z, BTreeSet::from([ZoneLabel::Zone50]));
    }

    #[test]
    fn positive_delta_is_right() {
        let v = row(&[("hereCurrentHeading", 10.0), ("here10mHeading", 50.0)]);
        assert!(label_zones(&v, &ZoneConfig::default()).contains(&ZoneLabel::Right));
        assert_eq!(heading_delta(350.0, 20.0), 30.0);
        assert_eq!(heading_delta(20.0, 350.0), -30.0);
        assert_eq!(heading_delta(0.0, 180.0), 180.0);
    }

    #[test]
    fn all_missing_row_has_no_labels() {
        assert!(label_zones(&SemanticFeatureVector::zeros(), &ZoneConfig::default()).is_empty());
    }

    type Case = (Vec<(&'static str, f64)>, Vec<ZoneLabel>);

    #[test]
    fn hand_labeled_fixture() {
        use ZoneLabel::*;
        let cfg = ZoneConfig::default();
        let cases: Vec<Case> = vec![
            (vec![("hereSpeedLimit", 30.0)], vec![Zone30]),
            (vec![("hereSpeedLimit", 80.0)], vec![Zone80]),
            (vec![("hereSpeedLimit", 120.0)], vec![]),
            (vec![("hereSpeedLimit", 49.6)], vec![Zone50]),
            (vec![("herePedestrian", 1.0)], vec![Pedestrian]),
            (vec![("herePedestrian", 0.0)], vec![]),
            (vec![("hereSignal", 1.0), ("hereSpeedLimit", 50.0)], vec![Zone50, TrafficLight]),
            (vec![("hereYield", 25.0)], vec![Yield]),
            (vec![("hereYield", 0.0), ("hereSignal", 0.0)], vec![]),
            (vec![("hereCurrentHeading", 90.0), ("here10mHeading", 90.0)], vec![Straight]),
            (vec![("hereCurrentHeading", 90.0), ("here10mHeading", 105.0)], vec![Straight]),
            (vec![("hereCurrentHeading", 90.0), ("here10mHeading", 105.5)], vec![Right]),
            (vec![("hereCurrentHeading", 90.0), ("here10mHeading", 74.0)], vec![Left]),
            (vec![("hereCurrentHeading", 355.0), ("here10mHeading", 25.0)], vec![Right]),
            (vec![("hereCurrentHeading", 5.0), ("here10mHeading", 340.0)], vec![Left]),
            (vec![("hereCurrentHeading", 5.0)], vec![]),
            (vec![("here10mHeading", 5.0)], vec![]),
            (
                vec![("hereSpeedLimit", 30.0), ("herePedestrian", 1.0), ("hereCurrentHeading", 0.0), ("here10mHeading", 300.0)],
                vec![Zone30, Left, Pedestrian],
            ),
            (
                vec![("hereSpeedLimit", 80.0), ("hereYield", 1.0), ("hereSignal", 1.0), ("hereCurrentHeading", 180.0), ("here10mHeading", 200.0)],
                vec![Zone80, Right, TrafficLight, Yield],
            ),
            (vec![("hereCurvature", 0.01)], vec![]),
        ];
        assert_eq!(cases.len(), 20);
        for (cells, want) in cases {
            let got = label_zones(&row(&cells), &cfg);
            assert_eq!(got, want.into_iter().collect::<BTreeSet<_>>(), "{cells:?}");
        }
    }

    #[test]
    fn distance_coded_flags() {
        let cfg = ZoneConfig {
            flag_max_distance: Some(50.0),
            ..ZoneConfig::default()
        };
        assert!(label_zones(&row(&[("hereSignal", 30.0)]), &cfg).contains(&ZoneLabel::TrafficLight));
        assert!(label_zones(&row(&[("hereSignal", 300.0)]), &cfg).is_empty());
    }
}
