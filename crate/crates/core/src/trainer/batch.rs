//! Turning sample references into model batches.

use ndarray::{s, Array2, Array4};

use crate::data_model::{normalize_rgb, normalize_target, NormalizationStats};
use crate::error::{Error, Result};
use crate::fusion::model::write_semantic;
use crate::fusion::{FusionBatch, FusionConfig};
use crate::ingest::{Dataset, SampleRef};

/// Check that a dataset can feed a model built from `config`.
pub fn check_compatible(config: &FusionConfig, data: &Dataset) -> Result<()> {
    let res = (data.plan.width(), data.plan.height());
    let want = config.input_resolution;
    if res != want {
        return Err(Error::validation(format!(
            "dataset frames are {}x{}, model expects {}x{}",
            res.0, res.1, want.0, want.1
        )));
    }
    if config.use_semantic && data.semantic_dim() != config.semantic_dim {
        return Err(Error::validation(format!(
            "dataset has {} semantic features, model expects {}",
            data.semantic_dim(),
            config.semantic_dim
        )));
    }
    Ok(())
}

/// Model inputs for `refs`. Semantic arrays are empty for an image-only
/// model.
pub fn assemble_batch(data: &Dataset, refs: &[SampleRef], stats: &NormalizationStats, semantic_dim: usize) -> Result<FusionBatch> {
    let (w, h) = (data.plan.width(), data.plan.height());
    let n = refs.len();
    if n == 0 {
        return Err(Error::validation("empty batch"));
    }
    let image = stats.image();
    let mut previous = Array4::zeros((n, 3, h, w));
    let mut current = Array4::zeros((n, 3, h, w));
    let mut sp = Array2::zeros((n, semantic_dim));
    let mut sc = Array2::zeros((n, semantic_dim));
    let mut mp = Array2::zeros((n, semantic_dim));
    let mut mc = Array2::zeros((n, semantic_dim));
    for (b, r) in refs.iter().enumerate() {
        let ch = &data.chapters[r.chapter];
        previous
            .slice_mut(s![b, .., .., ..])
            .assign(&normalize_rgb(ch.frame(r.previous), w, h, &image));
        current
            .slice_mut(s![b, .., .., ..])
            .assign(&normalize_rgb(ch.frame(r.current), w, h, &image));
        if semantic_dim > 0 {
            write_semantic(&ch.semantics[r.previous], semantic_dim, sp.row_mut(b), mp.row_mut(b))?;
            write_semantic(&ch.semantics[r.current], semantic_dim, sc.row_mut(b), mc.row_mut(b))?;
        }
    }
    Ok(FusionBatch {
        previous,
        current,
        sem_previous: sp,
        sem_current: sc,
        missing_previous: mp,
        missing_current: mc,
    })
}

/// Normalized (batch, 2) targets: angle then speed.
pub fn normalized_targets(data: &Dataset, refs: &[SampleRef], stats: &NormalizationStats) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((refs.len(), 2));
    for (b, r) in refs.iter().enumerate() {
        let [a, v] = normalize_target(data.target(r), stats)?;
        out[[b, 0]] = a;
        out[[b, 1]] = v;
    }
    Ok(out)
}

/// Split `n` samples into batches of `size`. A trailing batch holding a
/// single sample is dropped; any other short batch is kept.
pub fn batch_bounds(n: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).step_by(size.max(1)).map(|s| (s, (s + size).min(n))).collect();
    if out.len() > 1 && out.last().is_some_and(|&(a, b)| b - a == 1) {
        out.pop();
    }
    out
}
