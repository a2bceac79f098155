//! Prediction files and metric reports on disk.
//!
//! Prediction CSV: `chapter,frameIndex,canSteering,canSpeed`, chapter as
//! `route/chapter`, values at 6 decimals, rows ordered by chapter then
//! frame index.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::metrics::MetricReport;
use crate::data_model::{SampleKey, TargetPair};
use crate::error::{Error, Result};

pub const PREDICTION_HEADER: [&str; 4] = ["chapter", "frameIndex", "canSteering", "canSpeed"];

fn sort_key(k: &SampleKey) -> (String, u32) {
    (k.chapter_path(), k.frame_index)
}

/// Serialize a prediction list to CSV text, sorted.
pub fn prediction_csv_string(rows: &[(SampleKey, TargetPair)]) -> String {
    let mut sorted: Vec<&(SampleKey, TargetPair)> = rows.iter().collect();
    sorted.sort_by_key(|(k, _)| sort_key(k));
    let mut out = PREDICTION_HEADER.join(",");
    out.push('\n');
    for (k, t) in sorted {
        writeln!(out, "{},{},{:.6},{:.6}", k.chapter_path(), k.frame_index, t.steering_angle, t.speed).unwrap();
    }
    out
}

pub fn write_prediction_csv(path: &Path, rows: &[(SampleKey, TargetPair)]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, prediction_csv_string(rows)).map_err(|e| Error::io(path, e))
}

pub fn read_prediction_csv(path: &Path) -> Result<Vec<(SampleKey, TargetPair)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_prediction_csv(path, &text)
}

pub fn parse_prediction_csv(path: &Path, text: &str) -> Result<Vec<(SampleKey, TargetPair)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    for col in PREDICTION_HEADER {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                column: col.to_string(),
            });
        }
    }
    let idx = |c: &str| headers.iter().position(|h| h == c).unwrap();
    let (ci, fi, ai, si) = (idx("chapter"), idx("frameIndex"), idx("canSteering"), idx("canSpeed"));
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let chapter = &rec[ci];
        let (route, chap) = chapter
            .split_once('/')
            .ok_or_else(|| perr(line, format!("chapter `{chapter}` is not route/chapter")))?;
        let frame: u32 = rec[fi]
            .trim()
            .parse()
            .map_err(|_| perr(line, format!("bad frameIndex `{}`", &rec[fi])))?;
        let num = |i: usize, name: &str| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(line, format!("bad {name} `{}`", &rec[i])))
        };
        out.push((
            SampleKey::new(route, chap, frame),
            TargetPair {
                steering_angle: num(ai, "canSteering")?,
                speed: num(si, "canSpeed")?,
            },
        ));
    }
    Ok(out)
}

/// Machine-readable report: one row for the overall score, one per zone.
pub fn metric_csv_string(r: &MetricReport) -> String {
    let mut out = String::from("scope,count,mse_angle,mse_speed,combined\n");
    let mut row = |scope: &str, m: &super::metrics::Mse| {
        writeln!(out, "{scope},{},{:.6},{:.6},{:.6}", m.count, m.mse_angle, m.mse_speed, m.combined).unwrap();
    };
    row("overall", &r.overall);
    for (z, m) in &r.zones {
        row(z.as_str(), m);
    }
    out
}

/// Human-readable aligned table.
pub fn metric_table(r: &MetricReport) -> String {
    let mut out = format!(
        "{:<14} {:>8} {:>14} {:>12} {:>14}\n",
        "scope", "samples", "MSE angle", "MSE speed", "combined"
    );
    let mut row = |scope: &str, m: &super::metrics::Mse| {
        writeln!(
            out,
            "{:<14} {:>8} {:>14.3} {:>12.3} {:>14.3}",
            scope, m.count, m.mse_angle, m.mse_speed, m.combined
        )
        .unwrap();
    };
    row("overall", &r.overall);
    for (z, m) in &r.zones {
        row(z.as_str(), m);
    }
    out
}
