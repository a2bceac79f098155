//! Raw-unit MSE metrics, zone breakdowns, prediction files and charts.

pub mod csvio;
pub mod metrics;
pub mod plots;
pub mod zones;

use std::collections::{BTreeMap, BTreeSet};

pub use csvio::{metric_csv_string, metric_table, parse_prediction_csv, prediction_csv_string, read_prediction_csv, write_prediction_csv};
pub use metrics::{align, mse, per_zone_report, MetricReport, Mse};
pub use plots::{loss_curve_svg, zone_bars_svg};
pub use zones::{heading_delta, label_zones, ZoneConfig, ZoneLabel};

use crate::data_model::{SampleKey, TargetPair};
use crate::ingest::{Dataset, Split};

/// Ground truth for every sample of a split, in stream order.
pub fn ground_truth(data: &Dataset, split: Split) -> Vec<(SampleKey, TargetPair)> {
    data.streams
        .get(split)
        .iter()
        .map(|r| (data.key(r), data.target(r)))
        .collect()
}

/// Zone labels for every sample of a split, from the current frame's
/// semantic row.
pub fn zone_labels(data: &Dataset, split: Split, cfg: &ZoneConfig) -> BTreeMap<SampleKey, BTreeSet<ZoneLabel>> {
    data.streams
        .get(split)
        .iter()
        .map(|r| (data.key(r), label_zones(&data.chapters[r.chapter].semantics[r.current], cfg)))
        .collect()
}
