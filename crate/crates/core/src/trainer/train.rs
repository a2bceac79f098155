//! The optimization loop and checkpoint-driven prediction.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::batch::{assemble_batch, batch_bounds, check_compatible, normalized_targets};
use super::checkpoint::{checkpoint_path, Checkpoint};
use super::loss::{joint_loss, joint_loss_grad};
use crate::data_model::{compute_target_stats, denormalize_target, ImageStats, NormalizationStats, SampleKey, TargetPair};
use crate::error::{Error, Result};
use crate::fusion::{FeatureScaler, FusionModel, RunMode};
use crate::ingest::{Dataset, SampleRef, Split};
use crate::nn::Mode;

pub const PAPER_LEARNING_RATE: f64 = 1e-4;
pub const PAPER_BATCH_SIZES: [usize; 3] = [8, 32, 64];
pub const LOSS_LOG_FILE: &str = "loss_log.csv";
const PREDICT_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub mode: RunMode,
    /// Image normalization applied to every frame.
    pub image: ImageStats,
    /// Record wall time per epoch. Off makes the loss log byte-identical
    /// across runs with the same seed.
    pub log_wall_time: bool,
}

impl TrainConfig {
    pub fn desk(image: ImageStats) -> Self {
        Self {
            optimizer: AdamConfig::default(),
            batch_size: 32,
            epochs: 5,
            seed: 0,
            mode: RunMode::Desk,
            image,
            log_wall_time: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch_size and epochs must be at least 1"));
        }
        let o = &self.optimizer;
        if !(o.learning_rate >= 0.0 && o.epsilon > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return Err(Error::config("optimizer settings out of range"));
        }
        if self.mode == RunMode::PaperFaithful {
            let pinned = AdamConfig {
                epsilon: o.epsilon,
                ..AdamConfig::default()
            };
            if *o != pinned || o.learning_rate != PAPER_LEARNING_RATE {
                return Err(Error::config(
                    "paper_faithful mode pins learning_rate=0.0001, beta1=0.9, beta2=0.999, weight_decay=0",
                ));
            }
            if !PAPER_BATCH_SIZES.contains(&self.batch_size) {
                return Err(Error::config("paper_faithful mode requires batch_size 8, 32 or 64"));
            }
        }
        Ok(())
    }
}

/// Per-epoch means over training samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub total_loss: f64,
    pub angle_mse: f64,
    pub speed_mse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub checkpoints: Vec<PathBuf>,
    pub stats: NormalizationStats,
}

pub fn write_loss_log(path: &Path, logs: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let mut run = || -> std::result::Result<(), csv::Error> {
        w.write_record(["epoch", "total_loss", "angle_mse", "speed_mse", "seconds"])?;
        for l in logs {
            w.write_record([
                l.epoch.to_string(),
                format!("{:.9}", l.total_loss),
                format!("{:.9}", l.angle_mse),
                format!("{:.9}", l.speed_mse),
                format!("{:.3}", l.seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    run().map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn read_loss_log(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        out.push(rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Target statistics over every frame of the training chapters, and the
/// semantic scaler over the training stream.
pub fn fit_normalization(data: &Dataset, image: ImageStats) -> Result<(NormalizationStats, FeatureScaler)> {
    let targets: Vec<TargetPair> = data
        .chapters
        .iter()
        .filter(|c| c.split == Split::Train)
        .flat_map(|c| c.targets.iter().copied())
        .collect();
    let target = compute_target_stats(&targets)?;
    let stats = NormalizationStats::new(image, target)?;
    let dim = data.semantic_dim();
    let scaler = FeatureScaler::fit(
        data.streams
            .train
            .iter()
            .map(|r| &data.chapters[r.chapter].semantics[r.current]),
        dim,
    );
    Ok((stats, scaler))
}

/// Train `model` in place on the training stream, writing one checkpoint
/// per epoch plus the loss log into `run_dir`.
pub fn train(model: &mut FusionModel, data: &Dataset, cfg: &TrainConfig, run_dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_compatible(&model.config, data)?;
    if data.streams.train.is_empty() {
        return Err(Error::validation("training stream is empty"));
    }
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let (stats, scaler) = fit_normalization(data, cfg.image)?;
    if model.config.use_semantic {
        model.scaler = Some(scaler);
    }
    let sem_dim = if model.config.use_semantic { model.config.semantic_dim } else { 0 };

    let mut adam = Adam::new(cfg.optimizer, &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<SampleRef> = data.streams.train.clone();
    let mut grads = model.params.zeros_like();
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut checkpoints = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    let log_path = run_dir.join(LOSS_LOG_FILE);

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut sum_a, mut sum_s, mut seen) = (0.0, 0.0, 0usize);
        for (lo, hi) in batch_bounds(order.len(), cfg.batch_size) {
            let refs = &order[lo..hi];
            let batch = assemble_batch(data, refs, &stats, sem_dim)?;
            let target = normalized_targets(data, refs, &stats)?;
            let diverged = || -> Error {
                let last_good = checkpoints
                    .last()
                    .map(|p: &PathBuf| p.display().to_string())
                    .unwrap_or_else(|| "none".into());
                Error::Divergence {
                    epoch,
                    step,
                    last_good,
                }
            };
            let (pred, cache) = match model.forward_batch(&batch, Mode::Train(&mut rng)) {
                Ok(v) => v,
                Err(Error::Numeric { .. }) => return Err(diverged()),
                Err(e) => return Err(e),
            };
            let loss = match joint_loss(&pred, &target) {
                Ok(l) => l,
                Err(_) => return Err(diverged()),
            };
            grads.zero();
            model.backward(&cache, &joint_loss_grad(&pred, &target), &mut grads);
            if !grads.all_finite() {
                return Err(diverged());
            }
            adam.step(&mut model.params, &grads);
            step += 1;
            let n = refs.len();
            sum_a += loss.angle_mse * n as f64;
            sum_s += loss.speed_mse * n as f64;
            seen += n;
        }
        let angle_mse = sum_a / seen as f64;
        let speed_mse = sum_s / seen as f64;
        logs.push(EpochLog {
            epoch,
            total_loss: angle_mse + speed_mse,
            angle_mse,
            speed_mse,
            seconds: if cfg.log_wall_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
        let path = checkpoint_path(run_dir, epoch);
        Checkpoint::from_model(model, stats, epoch, Some(&adam)).save(&path)?;
        checkpoints.push(path);
        write_loss_log(&log_path, &logs)?;
    }
    Ok(TrainOutcome {
        logs,
        checkpoints,
        stats,
    })
}

/// Eval-mode, denormalized predictions for every sample of `split`, in
/// stream order.
pub fn predict(ck: &Checkpoint, data: &Dataset, split: Split) -> Result<Vec<(SampleKey, TargetPair)>> {
    let model = ck.to_model()?;
    predict_with(&model, &ck.stats, data, data.streams.get(split))
}

pub fn predict_with(
    model: &FusionModel,
    stats: &NormalizationStats,
    data: &Dataset,
    refs: &[SampleRef],
) -> Result<Vec<(SampleKey, TargetPair)>> {
    check_compatible(&model.config, data)?;
    stats.validate()?;
    if model.config.use_semantic && model.scaler.as_ref().is_some_and(|s| s.mean.len() != model.config.semantic_dim) {
        return Err(Error::validation("checkpoint scaler width does not match semantic_dim"));
    }
    let sem_dim = if model.config.use_semantic { model.config.semantic_dim } else { 0 };
    let chunks: Vec<Vec<(SampleKey, TargetPair)>> = refs
        .par_chunks(PREDICT_BATCH)
        .map(|refs| -> Result<Vec<(SampleKey, TargetPair)>> {
            let batch = assemble_batch(data, refs, stats, sem_dim)?;
            let (out, _) = model.forward_batch(&batch, Mode::Eval)?;
            refs.iter()
                .enumerate()
                .map(|(i, r)| Ok((data.key(r), denormalize_target([out[[i, 0]], out[[i, 1]]], stats)?)))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Write a text copy of the training configuration next to its outputs.
pub fn archive_config(run_dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = run_dir.join(name);
    fs::File::create(&path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{SemanticFeatureVector, SEMANTIC_FEATURES};
    use crate::fusion::{BackboneKind, FusionConfig};
    use crate::ingest::{ChapterKey, ChapterRecord, SamplingPlan};
    use rand::Rng;

    const W: usize = 8;
    const H: usize = 4;

    fn image() -> ImageStats {
        ImageStats {
            mean: [0.5; 3],
            std: [0.25; 3],
        }
    }

    /// Chapters whose angle follows one semantic column and whose speed
    /// follows another.
    fn toy_chapter(name: &str, split: Split, frames: usize, rng: &mut ChaCha8Rng) -> ChapterRecord {
        let mut targets = Vec::new();
        let mut semantics = Vec::new();
        for _ in 0..frames {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            let mut cells = [Some(0.0); SEMANTIC_FEATURES];
            cells[12] = Some(x);
            cells[2] = Some(50.0 + 20.0 * y);
            semantics.push(SemanticFeatureVector::from_cells(cells));
            targets.push(TargetPair {
                steering_angle: 30.0 * x,
                speed: 40.0 + 15.0 * y,
            });
        }
        ChapterRecord {
            key: ChapterKey::new("r0", name),
            split,
            width: W,
            height: H,
            frame_indices: (0..frames as u32).collect(),
            targets,
            semantics,
            pixels: (0..frames * W * H * 3).map(|_| rng.random()).collect(),
        }
    }

    fn toy_dataset(train_frames: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chapters = vec![
            toy_chapter("a", Split::Train, train_frames, &mut rng),
            toy_chapter("b", Split::Val, 12, &mut rng),
            toy_chapter("c", Split::Test, 12, &mut rng),
        ];
        Dataset::new(SamplingPlan::new(W as u32, H as u32, 1).unwrap(), chapters, Some(seed)).unwrap()
    }

    fn toy_config() -> FusionConfig {
        let mut c = FusionConfig::desk((W, H), SEMANTIC_FEATURES);
        c.backbone.kind = BackboneKind::DeskCnn { channels: vec![4] };
        c.fc_hidden = [32, 16];
        c.lstm_hidden = 16;
        c.head_hidden = [64, 32, 16];
        c.seed = 3;
        c
    }

    fn cfg(lr: f64, batch: usize, epochs: usize) -> TrainConfig {
        TrainConfig {
            optimizer: AdamConfig {
                learning_rate: lr,
                ..AdamConfig::default()
            },
            batch_size: batch,
            epochs,
            seed: 11,
            log_wall_time: false,
            ..TrainConfig::desk(image())
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let data = toy_dataset(5, 1);
        assert_eq!(data.streams.train.len(), 1);
        let mut model = FusionModel::new(toy_config()).unwrap();
        let before = model.params.clone();
        let dir = tempfile::tempdir().unwrap();
        let out = train(&mut model, &data, &cfg(0.0, 8, 1), dir.path()).unwrap();
        assert_eq!(model.params, before);
        assert_eq!(out.checkpoints.len(), 1);
    }

    #[test]
    fn log_components_sum_and_loss_descends() {
        let data = toy_dataset(300, 2);
        let mut model = FusionModel::new(toy_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = train(&mut model, &data, &cfg(1e-3, 16, 5), dir.path()).unwrap();
        for l in &out.logs {
            assert!((l.total_loss - l.angle_mse - l.speed_mse).abs() < 1e-9);
        }
        assert!(out.logs[4].total_loss < out.logs[0].total_loss, "{:?}", out.logs);
        for k in 1..=5 {
            assert!(dir.path().join(format!("model_epoch{k}.ckpt")).is_file());
        }
        let read = read_loss_log(&dir.path().join(LOSS_LOG_FILE)).unwrap();
        assert_eq!(read.len(), 5);
        assert!((read[4].total_loss - out.logs[4].total_loss).abs() < 1e-8);
    }

    #[test]
    fn same_seed_gives_identical_logs_and_checkpoints() {
        let data = toy_dataset(40, 3);
        let run = |dir: &Path| {
            let mut model = FusionModel::new(toy_config()).unwrap();
            train(&mut model, &data, &cfg(1e-3, 8, 2), dir).unwrap();
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run(a.path());
        run(b.path());
        for f in [LOSS_LOG_FILE, "model_epoch2.ckpt"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn predictions_survive_a_checkpoint_round_trip() {
        let data = toy_dataset(30, 4);
        let mut model = FusionModel::new(toy_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = train(&mut model, &data, &cfg(1e-3, 8, 1), dir.path()).unwrap();
        let before = predict_with(&model, &out.stats, &data, data.streams.get(Split::Test)).unwrap();
        let ck = Checkpoint::load(&out.checkpoints[0]).unwrap();
        let after = predict(&ck, &data, Split::Test).unwrap();
        assert_eq!(before, after);
        assert_eq!(after, predict(&ck, &data, Split::Test).unwrap());
        let keys: Vec<SampleKey> = data.streams.test.iter().map(|r| data.key(r)).collect();
        assert_eq!(after.iter().map(|(k, _)| k.clone()).collect::<Vec<_>>(), keys);
    }

    #[test]
    fn zero_weights_predict_the_target_means() {
        let data = toy_dataset(30, 5);
        let mut model = FusionModel::new(toy_config()).unwrap();
        for p in model.params.iter_mut() {
            p.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let (stats, _) = fit_normalization(&data, image()).unwrap();
        let ck = Checkpoint::from_model(&model, stats, 0, None);
        for (_, t) in predict(&ck, &data, Split::Val).unwrap() {
            assert!((t.steering_angle - stats.angle_mean).abs() < 1e-12);
            assert!((t.speed - stats.speed_mean).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_dataset_is_rejected() {
        let data = toy_dataset(30, 6);
        let mut c = toy_config();
        c.input_resolution = (16, 8);
        let model = FusionModel::new(c).unwrap();
        let (stats, _) = fit_normalization(&data, image()).unwrap();
        let ck = Checkpoint::from_model(&model, stats, 0, None);
        assert_eq!(predict(&ck, &data, Split::Val).unwrap_err().class(), "validation");
    }

    #[test]
    fn overfits_sixteen_samples() {
        let data = toy_dataset(20, 7);
        assert_eq!(data.streams.train.len(), 16);
        let mut c = toy_config();
        c.head_hidden = [256, 128, 64];
        let mut model = FusionModel::new(c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = train(&mut model, &data, &cfg(1e-3, 16, 200), dir.path()).unwrap();
        let preds = predict_with(&model, &out.stats, &data, &data.streams.train).unwrap();
        let mut loss = 0.0;
        for ((_, p), r) in preds.iter().zip(&data.streams.train) {
            let t = data.target(r);
            let pn = crate::data_model::normalize_target(*p, &out.stats).unwrap();
            let tn = crate::data_model::normalize_target(t, &out.stats).unwrap();
            loss += (pn[0] - tn[0]).powi(2) + (pn[1] - tn[1]).powi(2);
        }
        loss /= preds.len() as f64;
        assert!(loss < 1e-2, "eval loss {loss}, last epoch {:?}", out.logs.last());
    }

    #[test]
    fn divergence_keeps_the_last_good_checkpoint() {
        let data = toy_dataset(12, 8);
        let mut model = FusionModel::new(toy_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = train(&mut model, &data, &cfg(1e150, 8, 4), dir.path()).unwrap_err();
        match err {
            Error::Divergence { epoch, last_good, .. } => {
                assert!(epoch >= 2, "diverged in epoch {epoch}");
                assert!(last_good.ends_with(&format!("model_epoch{}.ckpt", epoch - 1)));
                assert!(Path::new(&last_good).is_file());
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn paper_mode_pins_hyperparameters() {
        let mut c = cfg(1e-4, 32, 1);
        c.mode = RunMode::PaperFaithful;
        c.validate().unwrap();
        c.batch_size = 16;
        assert!(c.validate().is_err());
        c.batch_size = 64;
        c.optimizer.learning_rate = 1e-3;
        assert!(c.validate().is_err());
    }
}
