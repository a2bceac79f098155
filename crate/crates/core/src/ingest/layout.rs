//! On-disk dataset layout:
//!
//! ```text
//! <root>/splits.csv                         route,chapter,split
//! <root>/<route>/<chapter>/frames/<index>.jpg
//! <root>/<route>/<chapter>/semantic.csv
//! <root>/<route>/<chapter>/targets.csv      frameIndex,canSteering,canSpeed
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPLITS_FILE: &str = "splits.csv";
pub const FRAMES_DIR: &str = "frames";
pub const SEMANTIC_FILE: &str = "semantic.csv";
pub const TARGETS_FILE: &str = "targets.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::validation(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChapterKey {
    pub route_id: String,
    pub chapter_id: String,
}

impl ChapterKey {
    pub fn new(route_id: impl Into<String>, chapter_id: impl Into<String>) -> Self {
        Self {
            route_id: route_id.into(),
            chapter_id: chapter_id.into(),
        }
    }
}

impl fmt::Display for ChapterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.route_id, self.chapter_id)
    }
}

#[derive(Debug, Clone)]
pub struct DatasetLayout {
    pub root: PathBuf,
    splits: BTreeMap<ChapterKey, Split>,
}

impl DatasetLayout {
    /// Open a dataset root and read its chapter split assignment.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::io(
                &root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root is not a directory"),
            ));
        }
        let splits_path = root.join(SPLITS_FILE);
        let splits = if splits_path.exists() {
            read_splits(&splits_path)?
        } else {
            BTreeMap::new()
        };
        Ok(Self { root, splits })
    }

    pub fn with_splits(root: impl Into<PathBuf>, splits: BTreeMap<ChapterKey, Split>) -> Self {
        Self {
            root: root.into(),
            splits,
        }
    }

    pub fn splits(&self) -> &BTreeMap<ChapterKey, Split> {
        &self.splits
    }

    pub fn split_of(&self, chapter: &ChapterKey) -> Option<Split> {
        self.splits.get(chapter).copied()
    }

    pub fn chapter_dir(&self, chapter: &ChapterKey) -> PathBuf {
        self.root.join(&chapter.route_id).join(&chapter.chapter_id)
    }

    pub fn frame_path(&self, chapter: &ChapterKey, frame_index: u32) -> PathBuf {
        self.chapter_dir(chapter)
            .join(FRAMES_DIR)
            .join(format!("{frame_index}.jpg"))
    }

    pub fn semantic_path(&self, chapter: &ChapterKey) -> PathBuf {
        self.chapter_dir(chapter).join(SEMANTIC_FILE)
    }

    pub fn targets_path(&self, chapter: &ChapterKey) -> PathBuf {
        self.chapter_dir(chapter).join(TARGETS_FILE)
    }

    /// Route folder names, sorted; the position is the folder-dummy index.
    pub fn routes(&self) -> Result<Vec<String>> {
        let mut routes = Vec::new();
        for entry in read_dir_sorted(&self.root)? {
            if entry.is_dir() {
                routes.push(file_name(&entry));
            }
        }
        Ok(routes)
    }

    pub fn route_index(&self, route: &str) -> Result<usize> {
        self.routes()?
            .iter()
            .position(|r| r == route)
            .ok_or_else(|| Error::validation(format!("unknown route `{route}`")))
    }

    pub fn write_splits(&self) -> Result<()> {
        let path = self.root.join(SPLITS_FILE);
        let mut out = String::from("route,chapter,split\n");
        for (k, s) in &self.splits {
            out.push_str(&format!("{},{},{}\n", k.route_id, k.chapter_id, s));
        }
        fs::write(&path, out).map_err(|e| Error::io(&path, e))
    }
}

fn read_splits(path: &Path) -> Result<BTreeMap<ChapterKey, Split>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if parts.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", parts.len())));
        }
        let split: Split = parts[2].parse().map_err(|e: Error| bad(e.to_string()))?;
        let key = ChapterKey::new(parts[0], parts[1]);
        if out.insert(key.clone(), split).is_some() {
            return Err(bad(format!("chapter {key} assigned twice")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChapterInfo {
    pub key: ChapterKey,
    pub frame_count: usize,
    pub split: Split,
}

/// List every chapter under the root in lexicographic (route, chapter) order.
///
/// Chapters lacking a CSV, a frames directory or a split assignment are
/// collected and reported together in one validation error.
pub fn scan_chapters(layout: &DatasetLayout) -> Result<Vec<ChapterInfo>> {
    let mut found = Vec::new();
    let mut problems = Vec::new();
    for route_dir in read_dir_sorted(&layout.root)? {
        if !route_dir.is_dir() {
            continue;
        }
        let route = file_name(&route_dir);
        for chapter_dir in read_dir_sorted(&route_dir)? {
            if !chapter_dir.is_dir() {
                return Err(Error::validation(format!(
                    "malformed chapter entry {}: not a directory",
                    chapter_dir.display()
                )));
            }
            let key = ChapterKey::new(route.clone(), file_name(&chapter_dir));
            let mut missing = Vec::new();
            for f in [SEMANTIC_FILE, TARGETS_FILE] {
                if !chapter_dir.join(f).is_file() {
                    missing.push(f.to_string());
                }
            }
            let frames_dir = chapter_dir.join(FRAMES_DIR);
            let frame_count = if frames_dir.is_dir() {
                count_frames(&frames_dir)?
            } else {
                missing.push(format!("{FRAMES_DIR}/"));
                0
            };
            let split = layout.split_of(&key);
            if split.is_none() {
                missing.push("split assignment".into());
            }
            if !missing.is_empty() {
                problems.push(format!("{} (missing {})", chapter_dir.display(), missing.join(", ")));
                continue;
            }
            found.push(ChapterInfo {
                key,
                frame_count,
                split: split.expect("checked above"),
            });
        }
    }
    if !problems.is_empty() {
        return Err(Error::validation(format!(
            "incomplete chapters: {}",
            problems.join("; ")
        )));
    }
    Ok(found)
}

fn count_frames(dir: &Path) -> Result<usize> {
    let mut n = 0;
    for p in read_dir_sorted(dir)? {
        let name = file_name(&p);
        match name.strip_suffix(".jpg") {
            Some(stem) if stem.parse::<u32>().is_ok() => n += 1,
            _ => {
                return Err(Error::validation(format!(
                    "malformed frame file {}: expected <index>.jpg",
                    p.display()
                )))
            }
        }
    }
    Ok(n)
}

pub(crate) fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let e = e.map_err(|e| Error::io(dir, e))?;
        let name = e.file_name();
        if name.to_string_lossy().starts_with('.') {
            continue;
        }
        entries.push(e.path());
    }
    entries.sort();
    Ok(entries)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
