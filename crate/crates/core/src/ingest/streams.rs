use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data_model::{SampleKey, TargetPair};
use crate::error::{Error, Result};
use crate::ingest::cache::ChapterRecord;
use crate::ingest::layout::Split;
use crate::ingest::sampling::SamplingPlan;

/// One emitted sample: positions of the current and previous frames
/// inside a chapter record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleRef {
    pub chapter: usize,
    pub current: usize,
    pub previous: usize,
}

/// Positions `(current, previous)` of every frame with a predecessor
/// exactly `pair_offset` native frames earlier.
pub fn eligible_frames(frame_indices: &[u32], plan: &SamplingPlan) -> Vec<(usize, usize)> {
    frame_indices
        .iter()
        .enumerate()
        .filter_map(|(pos, &f)| {
            let prev = f.checked_sub(plan.pair_offset)?;
            frame_indices.binary_search(&prev).ok().map(|p| (pos, p))
        })
        .collect()
}

/// Keep every `temporal_stride`-th eligible frame, starting with the first.
pub fn chapter_samples(chapter: usize, frame_indices: &[u32], plan: &SamplingPlan) -> Vec<SampleRef> {
    eligible_frames(frame_indices, plan)
        .into_iter()
        .step_by(plan.temporal_stride as usize)
        .map(|(current, previous)| SampleRef {
            chapter,
            current,
            previous,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitStreams {
    pub train: Vec<SampleRef>,
    pub val: Vec<SampleRef>,
    pub test: Vec<SampleRef>,
}

impl SplitStreams {
    pub fn get(&self, split: Split) -> &[SampleRef] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Build the three sample streams. Val/test are in (chapter, frame) order;
/// the train stream is shuffled when a seed is given.
pub fn make_split_streams(
    chapters: &[ChapterRecord],
    plan: &SamplingPlan,
    shuffle_seed: Option<u64>,
) -> Result<SplitStreams> {
    let mut streams = SplitStreams::default();
    for (ci, ch) in chapters.iter().enumerate() {
        let samples = chapter_samples(ci, &ch.frame_indices, plan);
        match ch.split {
            Split::Train => streams.train.extend(samples),
            Split::Val => streams.val.extend(samples),
            Split::Test => streams.test.extend(samples),
        }
    }
    for split in Split::ALL {
        if streams.get(split).is_empty() {
            return Err(Error::validation(format!("the {split} split has no samples")));
        }
    }
    if let Some(seed) = shuffle_seed {
        streams.train.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(streams)
}

/// In-memory dataset: preprocessed chapters plus the plan that produced them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub plan: SamplingPlan,
    pub chapters: Vec<ChapterRecord>,
    pub streams: SplitStreams,
}

impl Dataset {
    pub fn new(plan: SamplingPlan, mut chapters: Vec<ChapterRecord>, shuffle_seed: Option<u64>) -> Result<Self> {
        chapters.sort_by(|a, b| a.key.cmp(&b.key));
        for ch in &chapters {
            if (ch.width, ch.height) != (plan.width(), plan.height()) {
                return Err(Error::validation(format!(
                    "chapter {} is {}x{}, plan expects {}x{}",
                    ch.key,
                    ch.width,
                    ch.height,
                    plan.width(),
                    plan.height()
                )));
            }
        }
        let streams = make_split_streams(&chapters, &plan, shuffle_seed)?;
        Ok(Self {
            plan,
            chapters,
            streams,
        })
    }

    pub fn key(&self, s: &SampleRef) -> SampleKey {
        let ch = &self.chapters[s.chapter];
        SampleKey::new(&ch.key.route_id, &ch.key.chapter_id, ch.frame_indices[s.current])
    }

    pub fn target(&self, s: &SampleRef) -> TargetPair {
        self.chapters[s.chapter].targets[s.current]
    }

    pub fn semantic_dim(&self) -> usize {
        self.chapters
            .first()
            .and_then(|c| c.semantics.first())
            .map_or(0, |v| v.dim())
    }

    /// Ground-truth targets of every emitted sample in a split.
    pub fn targets(&self, split: Split) -> Vec<TargetPair> {
        self.streams.get(split).iter().map(|s| self.target(s)).collect()
    }
}
