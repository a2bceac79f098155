//! Preprocessed chapter records.
//!
//! One file per chapter: an 8-byte magic, a little-endian `u32` format
//! version, a `u64` header length, a JSON header (keys, targets, parsed
//! semantic rows, resolution) and finally the resized RGB8 frames back to
//! back in frame order.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{SemanticFeatureVector, TargetPair};
use crate::error::{Error, Result};
use crate::ingest::csvfiles::{parse_semantic_csv, parse_targets_csv};
use crate::ingest::frames::{load_resized, ResizeKernel};
use crate::ingest::layout::{scan_chapters, ChapterInfo, ChapterKey, DatasetLayout, Split};
use crate::ingest::sampling::SamplingPlan;

pub const RECORD_MAGIC: &[u8; 8] = b"L2DCHAP\0";
pub const RECORD_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RecordHeader {
    key: ChapterKey,
    split: Split,
    width: usize,
    height: usize,
    frame_indices: Vec<u32>,
    targets: Vec<TargetPair>,
    semantics: Vec<SemanticFeatureVector>,
}

/// Everything the trainer needs from one chapter, frames already resized.
#[derive(Debug, Clone, PartialEq)]
pub struct ChapterRecord {
    pub key: ChapterKey,
    pub split: Split,
    pub width: usize,
    pub height: usize,
    pub frame_indices: Vec<u32>,
    pub targets: Vec<TargetPair>,
    /// Aligned with `frame_indices`; frames without a semantic row get an
    /// all-missing vector.
    pub semantics: Vec<SemanticFeatureVector>,
    pub pixels: Vec<u8>,
}

impl ChapterRecord {
    pub fn frame_bytes(&self) -> usize {
        self.width * self.height * 3
    }

    pub fn frame(&self, pos: usize) -> &[u8] {
        let n = self.frame_bytes();
        &self.pixels[pos * n..(pos + 1) * n]
    }

    pub fn len(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }

    pub fn position_of(&self, frame_index: u32) -> Option<usize> {
        self.frame_indices.binary_search(&frame_index).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub version: u32,
    pub plan: SamplingPlan,
    pub use_folder_dummies: bool,
    pub chapters: Vec<(ChapterKey, Split, String)>,
}

/// Build a chapter record from the raw dataset.
pub fn preprocess_chapter(
    layout: &DatasetLayout,
    info: &ChapterInfo,
    plan: &SamplingPlan,
    folder_index: Option<usize>,
    kernel: ResizeKernel,
) -> Result<ChapterRecord> {
    let targets = parse_targets_csv(&layout.targets_path(&info.key))?;
    let semantic = parse_semantic_csv(&layout.semantic_path(&info.key), &info.key, folder_index)?;
    let by_frame: std::collections::HashMap<u32, &SemanticFeatureVector> = semantic
        .rows
        .iter()
        .map(|(k, v)| (k.frame_index, v))
        .collect();

    let mut pixels = Vec::with_capacity(targets.len() * plan.width() * plan.height() * 3);
    let mut frame_indices = Vec::with_capacity(targets.len());
    let mut semantics = Vec::with_capacity(targets.len());
    let mut target_values = Vec::with_capacity(targets.len());
    for (frame, target) in targets {
        let path = layout.frame_path(&info.key, frame);
        if !path.is_file() {
            return Err(Error::validation(format!(
                "{} has a target row but no frame file",
                path.display()
            )));
        }
        let img = load_resized(&path, plan, kernel)?;
        pixels.extend_from_slice(&img.pixels);
        frame_indices.push(frame);
        target_values.push(target);
        let sem = match by_frame.get(&frame) {
            Some(v) => (*v).clone(),
            None => {
                let v = SemanticFeatureVector::zeros();
                match folder_index {
                    Some(i) => v.with_folder(i)?,
                    None => v,
                }
            }
        };
        semantics.push(sem);
    }
    Ok(ChapterRecord {
        key: info.key.clone(),
        split: info.split,
        width: plan.width(),
        height: plan.height(),
        frame_indices,
        targets: target_values,
        semantics,
        pixels,
    })
}

/// Preprocess every chapter of a dataset, in parallel across chapters.
/// Output order is the scan order regardless of worker count.
pub fn preprocess_dataset(
    layout: &DatasetLayout,
    plan: &SamplingPlan,
    use_folder_dummies: bool,
    kernel: ResizeKernel,
) -> Result<Vec<ChapterRecord>> {
    let chapters = scan_chapters(layout)?;
    let routes = layout.routes()?;
    chapters
        .par_iter()
        .map(|info| {
            let folder = if use_folder_dummies {
                Some(
                    routes
                        .iter()
                        .position(|r| *r == info.key.route_id)
                        .expect("scanned route exists"),
                )
            } else {
                None
            };
            preprocess_chapter(layout, info, plan, folder, kernel)
        })
        .collect()
}

fn record_file_name(key: &ChapterKey) -> String {
    format!("{}__{}.rec", key.route_id, key.chapter_id)
}

pub fn write_record(path: &Path, rec: &ChapterRecord) -> Result<()> {
    let header = RecordHeader {
        key: rec.key.clone(),
        split: rec.split,
        width: rec.width,
        height: rec.height,
        frame_indices: rec.frame_indices.clone(),
        targets: rec.targets.clone(),
        semantics: rec.semantics.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::validation(e.to_string()))?;
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    f.write_all(RECORD_MAGIC).map_err(io)?;
    f.write_all(&RECORD_VERSION.to_le_bytes()).map_err(io)?;
    f.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    f.write_all(&json).map_err(io)?;
    f.write_all(&rec.pixels).map_err(io)?;
    f.flush().map_err(io)
}

pub fn read_record(path: &Path) -> Result<ChapterRecord> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let corrupt = |m: &str| Error::validation(format!("{}: {m}", path.display()));
    if bytes.len() < 20 || &bytes[..8] != RECORD_MAGIC {
        return Err(corrupt("not a chapter record"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != RECORD_VERSION {
        return Err(corrupt(&format!(
            "record version {version}, expected {RECORD_VERSION}"
        )));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..20 + len).ok_or_else(|| corrupt("truncated header"))?;
    let h: RecordHeader = serde_json::from_slice(body).map_err(|e| corrupt(&e.to_string()))?;
    let pixels = bytes[20 + len..].to_vec();
    let n = h.frame_indices.len();
    if pixels.len() != n * h.width * h.height * 3 || h.targets.len() != n || h.semantics.len() != n
    {
        return Err(corrupt("payload size does not match header"));
    }
    Ok(ChapterRecord {
        key: h.key,
        split: h.split,
        width: h.width,
        height: h.height,
        frame_indices: h.frame_indices,
        targets: h.targets,
        semantics: h.semantics,
        pixels,
    })
}

/// Write all records plus a manifest into `dir`.
pub fn write_cache(
    dir: &Path,
    plan: &SamplingPlan,
    use_folder_dummies: bool,
    records: &[ChapterRecord],
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut chapters = Vec::new();
    for rec in records {
        let name = record_file_name(&rec.key);
        write_record(&dir.join(&name), rec)?;
        chapters.push((rec.key.clone(), rec.split, name));
    }
    let manifest = CacheManifest {
        version: RECORD_VERSION,
        plan: *plan,
        use_folder_dummies,
        chapters,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::validation(e.to_string()))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_cache(dir: &Path) -> Result<(CacheManifest, Vec<ChapterRecord>)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CacheManifest =
        serde_json::from_str(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
    if manifest.version != RECORD_VERSION {
        return Err(Error::validation(format!(
            "cache version {} is not supported",
            manifest.version
        )));
    }
    let records = manifest
        .chapters
        .par_iter()
        .map(|(_, _, name)| read_record(&dir.join(name)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> ChapterRecord {
        let mut sem = SemanticFeatureVector::zeros();
        sem.values[2] = 50.0;
        sem.missing_mask[2] = false;
        ChapterRecord {
            key: ChapterKey::new("r0", "c0"),
            split: Split::Val,
            width: 2,
            height: 1,
            frame_indices: vec![0, 1],
            targets: vec![TargetPair::new(0.1, 30.0), TargetPair::new(-0.2, 31.0)],
            semantics: vec![sem.clone(), sem],
            pixels: (0..12).collect(),
        }
    }

    #[test]
    fn record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.rec");
        let rec = record();
        write_record(&p, &rec).unwrap();
        assert_eq!(read_record(&p).unwrap(), rec);
        assert_eq!(rec.frame(1), &[6, 7, 8, 9, 10, 11]);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.rec");
        write_record(&p, &record()).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes[8] = 99;
        fs::write(&p, bytes).unwrap();
        assert!(read_record(&p).unwrap_err().to_string().contains("version"));
    }
}
