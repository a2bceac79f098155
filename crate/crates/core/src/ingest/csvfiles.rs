//! Parsers for the per-chapter `semantic.csv` and `targets.csv` files.

use std::path::Path;

use crate::data_model::{
    SampleKey, SemanticFeatureVector, TargetPair, SEMANTIC_COLUMNS, SEMANTIC_FEATURES,
};
use crate::error::{Error, Result};
use crate::ingest::layout::ChapterKey;

pub const FRAME_INDEX_COLUMN: &str = "frameIndex";

/// Semantic rows of one chapter, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SemanticTable {
    pub rows: Vec<(SampleKey, SemanticFeatureVector)>,
}

impl SemanticTable {
    pub fn get(&self, frame_index: u32) -> Option<&SemanticFeatureVector> {
        self.rows
            .iter()
            .find(|(k, _)| k.frame_index == frame_index)
            .map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn column(headers: &csv::StringRecord, path: &Path, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

fn line_of(record: &csv::StringRecord, fallback: usize) -> usize {
    record.position().map_or(fallback, |p| p.line() as usize)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// Empty, `NaN` and `NA` cells are missing; anything else must be numeric.
fn parse_cell(raw: &str) -> std::result::Result<Option<f64>, String> {
    if raw.is_empty() || raw.eq_ignore_ascii_case("nan") || raw.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(_) => Err(format!("non-numeric cell `{raw}`")),
    }
}

fn parse_frame_index(raw: &str) -> std::result::Result<u32, String> {
    raw.parse::<u32>()
        .map_err(|_| format!("invalid frameIndex `{raw}`"))
}

/// Parse a semantic-map CSV. Missing cells are imputed with 0 and flagged
/// in the mask. With `folder_index`, a 27-wide one-hot is attached.
pub fn parse_semantic_csv(
    path: &Path,
    chapter: &ChapterKey,
    folder_index: Option<usize>,
) -> Result<SemanticTable> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let frame_col = column(&headers, path, FRAME_INDEX_COLUMN)?;
    let mut cols = [0usize; SEMANTIC_FEATURES];
    for (i, name) in SEMANTIC_COLUMNS.iter().enumerate() {
        cols[i] = column(&headers, path, name)?;
    }

    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record, n + 2);
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let frame = parse_frame_index(record.get(frame_col).unwrap_or("")).map_err(bad)?;
        let mut cells = [None; SEMANTIC_FEATURES];
        for (i, &c) in cols.iter().enumerate() {
            cells[i] = parse_cell(record.get(c).unwrap_or(""))
                .map_err(|m| bad(format!("{}: {m}", SEMANTIC_COLUMNS[i])))?;
        }
        let mut v = SemanticFeatureVector::from_cells(cells);
        if let Some(idx) = folder_index {
            v = v.with_folder(idx)?;
        }
        rows.push((SampleKey::new(&chapter.route_id, &chapter.chapter_id, frame), v));
    }
    Ok(SemanticTable { rows })
}

/// Parse `targets.csv` (frameIndex, canSteering, canSpeed), in file order.
pub fn parse_targets_csv(path: &Path) -> Result<Vec<(u32, TargetPair)>> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let frame_col = column(&headers, path, FRAME_INDEX_COLUMN)?;
    let steer_col = column(&headers, path, "canSteering")?;
    let speed_col = column(&headers, path, "canSpeed")?;

    let mut out: Vec<(u32, TargetPair)> = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record, n + 2);
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let frame = parse_frame_index(record.get(frame_col).unwrap_or("")).map_err(bad)?;
        let num = |c: usize, name: &str| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            match parse_cell(raw) {
                Ok(Some(v)) => Ok(v),
                Ok(None) => Err(bad(format!("{name} is missing"))),
                Err(m) => Err(bad(format!("{name}: {m}"))),
            }
        };
        let steering = num(steer_col, "canSteering")?;
        let speed = num(speed_col, "canSpeed")?;
        if speed < 0.0 {
            return Err(bad(format!("negative ground-truth speed {speed}")));
        }
        if out.last().is_some_and(|(prev, _)| *prev >= frame) {
            return Err(bad(format!("frameIndex {frame} is not strictly increasing")));
        }
        out.push((frame, TargetPair::new(steering, speed)));
    }
    Ok(out)
}
