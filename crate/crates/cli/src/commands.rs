//! One function per subcommand. Every product lands under the output
//! directory next to a copy of the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use l2d_core::ensemble::{assemble, EnsembleSpec, PredictionStore, TargetDistributions};
use l2d_core::evaluation::{
    ground_truth, loss_curve_svg, metric_csv_string, metric_table, mse, per_zone_report, read_prediction_csv,
    write_prediction_csv, zone_bars_svg, zone_labels, MetricReport, ZoneConfig,
};
use l2d_core::fusion::{BackboneKind, FusionConfig, RunMode, SkipSource};
use l2d_core::ingest::{
    build_sampling_plan, preprocess_dataset, read_cache, write_cache, Dataset, DatasetLayout, ResizeKernel,
    SamplingPreset, Split,
};
use l2d_core::synth::{self, RouteSpec};
use l2d_core::trainer::{
    build_model, checkpoint_path, predict, read_loss_log, train, AdamConfig, Checkpoint, TrainConfig, LOSS_LOG_FILE,
};
use l2d_core::{Error, ImageStats, Result};

use crate::config::RunConfig;

pub const CONFIG_ARCHIVE: &str = "run.conf";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn archive(cfg: &RunConfig, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join(CONFIG_ARCHIVE), &cfg.to_text())
}

fn mode(cfg: &RunConfig) -> Result<RunMode> {
    match cfg.get("mode") {
        "desk" => Ok(RunMode::Desk),
        "paper_faithful" => Ok(RunMode::PaperFaithful),
        other => Err(Error::config(format!("mode must be desk or paper_faithful, not `{other}`"))),
    }
}

fn preset(cfg: &RunConfig) -> Result<SamplingPreset> {
    cfg.parse("sampling.preset")
}

fn cache_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let name = preset(cfg)?.name().replace(':', "_");
    let folders = if cfg.parse::<bool>("sampling.folder_dummies")? { "_folders" } else { "" };
    Ok(cfg.out_dir().join("cache").join(format!("{name}{folders}")))
}

fn run_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("runs").join(cfg.get("model.name"))
}

fn predictions_root(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("predictions")
}

fn image_stats(cfg: &RunConfig) -> Result<ImageStats> {
    Ok(ImageStats {
        mean: cfg.triple("image.mean")?,
        std: cfg.triple("image.std")?,
    })
}

fn split(cfg: &RunConfig, key: &str) -> Result<Split> {
    cfg.parse(key)
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let dir = cache_dir(cfg)?;
    if !dir.is_dir() {
        return Err(Error::validation(format!(
            "no preprocessed cache at {}; run `l2d preprocess` first",
            dir.display()
        )));
    }
    let (manifest, records) = read_cache(&dir)?;
    Dataset::new(manifest.plan, records, Some(cfg.parse("seed")?))
}

fn epoch(cfg: &RunConfig) -> Result<usize> {
    match cfg.parse::<usize>("predict.epoch")? {
        0 => cfg.parse("train.epochs"),
        k => Ok(k),
    }
}

pub fn synth_spec(cfg: &RunConfig) -> Result<RouteSpec> {
    let seed = cfg.parse("seed")?;
    let mut spec = match cfg.get("synth.preset") {
        "desk" => RouteSpec::desk(seed),
        "full" => RouteSpec::full(seed),
        other => return Err(Error::config(format!("synth.preset must be desk or full, not `{other}`"))),
    };
    if let Some(v) = cfg.optional("synth.n_routes")? {
        spec.n_routes = v;
    }
    if let Some(v) = cfg.optional("synth.n_chapters")? {
        spec.n_chapters = v;
    }
    if let Some(v) = cfg.optional("synth.chapter_length")? {
        spec.chapter_length = v;
    }
    if let Some(v) = cfg.optional("synth.blank_fraction")? {
        spec.blank_fraction = v;
    }
    if let Some(v) = cfg.optional("synth.pixel_noise")? {
        spec.pixel_noise = v;
    }
    if let Some(v) = cfg.optional("synth.frame_width")? {
        spec.frame_width = v;
    }
    if let Some(v) = cfg.optional("synth.frame_height")? {
        spec.frame_height = v;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn gen_synth(cfg: &RunConfig) -> Result<String> {
    let spec = synth_spec(cfg)?;
    let root = cfg.dataset_root();
    if root.exists() {
        // Only replace a directory this command wrote before.
        let empty = fs::read_dir(&root).map_err(|e| Error::io(&root, e))?.next().is_none();
        if !empty && !root.join(CONFIG_ARCHIVE).is_file() {
            return Err(Error::validation(format!(
                "{} exists and was not written by gen-synth; refusing to overwrite it",
                root.display()
            )));
        }
        fs::remove_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    }
    synth::generate(&spec, &root)?;
    archive(cfg, &root)?;
    Ok(format!(
        "wrote {} chapters of {} frames to {}",
        spec.n_chapters,
        spec.chapter_length,
        root.display()
    ))
}

pub fn preprocess(cfg: &RunConfig) -> Result<String> {
    let root = cfg.dataset_root();
    let layout = DatasetLayout::open(&root)?;
    let plan = build_sampling_plan(preset(cfg)?)?;
    let kernel = match cfg.get("sampling.resize") {
        "area" => ResizeKernel::Area,
        "nearest" => ResizeKernel::Nearest,
        other => return Err(Error::config(format!("sampling.resize must be area or nearest, not `{other}`"))),
    };
    let folders = cfg.parse("sampling.folder_dummies")?;
    let records = preprocess_dataset(&layout, &plan, folders, kernel)?;
    let dir = cache_dir(cfg)?;
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    write_cache(&dir, &plan, folders, &records)?;
    archive(cfg, &dir)?;
    let data = Dataset::new(plan, records, Some(cfg.parse("seed")?))?;
    Ok(format!(
        "cached {} chapters at {}x{} in {}: {} train / {} val / {} test samples",
        data.chapters.len(),
        plan.width(),
        plan.height(),
        dir.display(),
        data.streams.train.len(),
        data.streams.val.len(),
        data.streams.test.len()
    ))
}

pub fn model_config(cfg: &RunConfig, data: &Dataset) -> Result<FusionConfig> {
    let mut c = FusionConfig::desk((data.plan.width(), data.plan.height()), data.semantic_dim());
    if !cfg.parse::<bool>("model.use_semantic")? {
        c = c.image_only();
    }
    c.mode = mode(cfg)?;
    c.backbone.kind = BackboneKind::from_name(cfg.get("model.backbone"))?;
    c.backbone.pretrained = cfg.parse("model.pretrained")?;
    c.backbone.weights = cfg.optional::<String>("model.backbone_weights")?.map(PathBuf::from);
    c.lstm_hidden = cfg.parse("model.lstm_hidden")?;
    c.skip = match cfg.get("model.skip") {
        "semantic_encoding" => SkipSource::SemanticEncoding,
        "backbone_features" => SkipSource::BackboneFeatures,
        other => return Err(Error::config(format!("unknown model.skip `{other}`"))),
    };
    c.seed = cfg.parse("seed")?;
    c.validate()?;
    Ok(c)
}

pub fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    let t = TrainConfig {
        optimizer: AdamConfig {
            learning_rate: cfg.parse("train.learning_rate")?,
            beta1: cfg.parse("train.beta1")?,
            beta2: cfg.parse("train.beta2")?,
            epsilon: cfg.parse("train.epsilon")?,
            weight_decay: cfg.parse("train.weight_decay")?,
        },
        batch_size: cfg.parse("train.batch_size")?,
        epochs: cfg.parse("train.epochs")?,
        seed: cfg.parse("seed")?,
        mode: mode(cfg)?,
        image: image_stats(cfg)?,
        log_wall_time: cfg.parse("train.log_wall_time")?,
    };
    t.validate()?;
    Ok(t)
}

pub fn train_cmd(cfg: &RunConfig) -> Result<String> {
    let data = load_dataset(cfg)?;
    let mut model = build_model(model_config(cfg, &data)?)?;
    let tc = train_config(cfg)?;
    let dir = run_dir(cfg);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    archive(cfg, &dir)?;
    let out = train(&mut model, &data, &tc, &dir)?;
    let last = out.logs.last().expect("at least one epoch");
    Ok(format!(
        "trained {} for {} epochs on {} samples; final loss {:.6}; checkpoints in {}",
        cfg.get("model.name"),
        out.logs.len(),
        data.streams.train.len(),
        last.total_loss,
        dir.display()
    ))
}

pub fn predict_cmd(cfg: &RunConfig) -> Result<String> {
    let data = load_dataset(cfg)?;
    let k = epoch(cfg)?;
    let ck = Checkpoint::load(&checkpoint_path(&run_dir(cfg), k))?;
    let sp = split(cfg, "predict.split")?;
    let rows = predict(&ck, &data, sp)?;
    let dir = predictions_root(cfg).join(cfg.get("model.name"));
    let path = dir.join(format!("epoch{k}.csv"));
    write_prediction_csv(&path, &rows)?;
    archive(cfg, &dir)?;
    Ok(format!("wrote {} {sp} predictions to {}", rows.len(), path.display()))
}

fn ensemble_spec(cfg: &RunConfig) -> Result<EnsembleSpec> {
    match cfg.get("ensemble.spec") {
        "" => Ok(EnsembleSpec::published()),
        p => EnsembleSpec::load(Path::new(p)),
    }
}

pub fn ensemble_cmd(cfg: &RunConfig) -> Result<String> {
    let data = load_dataset(cfg)?;
    let spec = ensemble_spec(cfg)?;
    let dists = TargetDistributions::from_dataset(&data, &spec)?;
    let rows = assemble(&spec, &PredictionStore::new(predictions_root(cfg)), &dists)?;
    let dir = cfg.out_dir().join("ensemble");
    let path = dir.join("predictions.csv");
    write_prediction_csv(&path, &rows)?;
    write_file(&dir.join("ensemble.spec"), &spec.to_text())?;
    archive(cfg, &dir)?;
    Ok(format!(
        "combined {} angle and {} speed members over {} samples into {}",
        spec.angle_members.len(),
        spec.speed_members.len(),
        rows.len(),
        path.display()
    ))
}

/// Score `pred` against `truth`, or against the cached ground truth of
/// `eval.split` with zone breakdowns when no truth file is given.
pub fn evaluate(cfg: &RunConfig, pred: Option<&Path>, truth: Option<&Path>) -> Result<String> {
    let pred_path = match pred {
        Some(p) => p.to_path_buf(),
        None => predictions_root(cfg)
            .join(cfg.get("model.name"))
            .join(format!("epoch{}.csv", epoch(cfg)?)),
    };
    let predictions = read_prediction_csv(&pred_path)?;
    let report = match truth {
        Some(t) => {
            let truth = read_prediction_csv(t)?;
            MetricReport {
                overall: mse(&predictions, &truth)?,
                zones: Vec::new(),
            }
        }
        None => {
            let data = load_dataset(cfg)?;
            let sp = split(cfg, "eval.split")?;
            let zc = ZoneConfig {
                turn_threshold_deg: cfg.parse("eval.turn_threshold_deg")?,
                ..ZoneConfig::default()
            };
            per_zone_report(&predictions, &ground_truth(&data, sp), &zone_labels(&data, sp, &zc))?
        }
    };
    let name = pred_path
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "predictions".into());
    let stem = pred_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = cfg.out_dir().join("eval").join(format!("{name}_{stem}"));
    archive(cfg, &dir)?;
    write_file(&dir.join("metrics.csv"), &metric_csv_string(&report))?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::validation(e.to_string()))?;
    write_file(&dir.join("metrics.json"), &json)?;
    let table = metric_table(&report);
    write_file(&dir.join("metrics.txt"), &table)?;
    Ok(format!("{}\ncombined MSE {:.6}\nwrote {}", table.trim_end(), report.overall.combined, dir.display()))
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

fn dir_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loss curves of every run and a metric table plus zone chart per
/// evaluation.
pub fn report(cfg: &RunConfig) -> Result<String> {
    let out = cfg.out_dir();
    let dir = out.join("report");
    archive(cfg, &dir)?;
    let mut runs = Vec::new();
    for r in sorted_subdirs(&out.join("runs"))? {
        let log = r.join(LOSS_LOG_FILE);
        if log.is_file() {
            runs.push((dir_name(&r), read_loss_log(&log)?));
        }
    }
    let mut written = Vec::new();
    if !runs.is_empty() {
        write_file(&dir.join("loss_curves.svg"), &loss_curve_svg(&runs))?;
        written.push("loss_curves.svg".to_string());
    }
    let mut tables = String::new();
    for e in sorted_subdirs(&out.join("eval"))? {
        let path = e.join("metrics.json");
        if !path.is_file() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|err| Error::io(&path, err))?;
        let rep: MetricReport = serde_json::from_str(&text)
            .map_err(|err| Error::validation(format!("{}: {err}", path.display())))?;
        let name = dir_name(&e);
        tables.push_str(&format!("## {name}\n\n```\n{}```\n\n", metric_table(&rep)));
        if !rep.zones.is_empty() {
            let svg = format!("zones_{name}.svg");
            write_file(&dir.join(&svg), &zone_bars_svg(&rep))?;
            written.push(svg);
        }
    }
    if runs.is_empty() && tables.is_empty() {
        return Err(Error::validation(format!(
            "nothing to report under {}: no loss logs or evaluations",
            out.display()
        )));
    }
    if !tables.is_empty() {
        write_file(&dir.join("metrics.md"), &format!("# Metrics\n\n{tables}"))?;
        written.push("metrics.md".to_string());
    }
    Ok(format!("wrote {} to {}", written.join(", "), dir.display()))
}
