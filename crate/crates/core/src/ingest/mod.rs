//! Dataset discovery, down-sampling, CSV parsing, preprocessing cache and
//! train/val/test sample streams.

pub mod cache;
pub mod csvfiles;
pub mod frames;
pub mod layout;
pub mod sampling;
pub mod streams;

pub use cache::{preprocess_dataset, read_cache, write_cache, CacheManifest, ChapterRecord};
pub use csvfiles::{parse_semantic_csv, parse_targets_csv, SemanticTable};
pub use frames::{load_frame_pair, FrameLoad, ResizeKernel, RgbImage};
pub use layout::{scan_chapters, ChapterInfo, ChapterKey, DatasetLayout, Split};
pub use sampling::{build_sampling_plan, SamplingPlan, SamplingPreset, PAIR_OFFSET};
pub use streams::{make_split_streams, Dataset, SampleRef, SplitStreams};
