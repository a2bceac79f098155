//! Flat `key = value` run configuration.
//!
//! Layers, later wins: built-in defaults, the `--config` file, `L2D_*`
//! environment variables, then command-line flags. An environment
//! variable names a key in upper case with `.` written as `__`, so
//! `train.epochs` is `L2D_TRAIN__EPOCHS`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use l2d_core::{Error, Result};

pub const ENV_PREFIX: &str = "L2D_";

/// Every key with its default and a one-line description. An empty default
/// means "derived" as described.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("mode", "desk", "desk | paper_faithful; paper_faithful pins architecture and optimizer constants"),
    ("seed", "0", "seed for synthesis, stream shuffling, initialization, dropout and batching"),
    ("output.dir", "out", "root of every product of the pipeline"),
    ("dataset.root", "", "raw dataset; empty means <output.dir>/data"),
    ("sampling.preset", "tiny", "full | sample1 | sample2 | sample3 | tiny | custom:<w>x<h>:<stride>"),
    ("sampling.folder_dummies", "false", "append the 27-wide route-folder one-hot to the semantic vector"),
    ("sampling.resize", "area", "area | nearest"),
    ("image.mean", "0.485,0.456,0.406", "per-channel image mean, RGB in [0, 1]"),
    ("image.std", "0.229,0.224,0.225", "per-channel image standard deviation"),
    ("model.name", "model", "run name under <output.dir>/runs and /predictions"),
    ("model.backbone", "desk", "desk | resnet34 | resnet152"),
    ("model.pretrained", "false", "load backbone.* parameters from model.backbone_weights"),
    ("model.backbone_weights", "", "parameter archive with the pretrained backbone"),
    ("model.use_semantic", "true", "feed the semantic-map features"),
    ("model.lstm_hidden", "128", "LSTM hidden size"),
    ("model.skip", "semantic_encoding", "semantic_encoding | backbone_features: what joins the LSTM output"),
    ("train.learning_rate", "0.0001", "Adam learning rate"),
    ("train.beta1", "0.9", "Adam beta1"),
    ("train.beta2", "0.999", "Adam beta2"),
    ("train.epsilon", "1e-8", "Adam epsilon"),
    ("train.weight_decay", "0", "L2 penalty added to the gradient"),
    ("train.batch_size", "32", "mini-batch size"),
    ("train.epochs", "5", "epochs; one checkpoint per epoch"),
    ("train.log_wall_time", "false", "record seconds per epoch (makes loss logs differ between runs)"),
    ("predict.epoch", "0", "checkpoint epoch to predict with; 0 means train.epochs"),
    ("predict.split", "val", "train | val | test"),
    ("ensemble.spec", "", "ensemble spec file; empty means the published member list"),
    ("eval.split", "val", "split whose ground truth predictions are scored against"),
    ("eval.turn_threshold_deg", "15", "heading change that labels a left or right turn"),
    ("synth.preset", "desk", "desk | full"),
    ("synth.n_routes", "", "routes; empty keeps the preset value"),
    ("synth.n_chapters", "", "chapters; empty keeps the preset value"),
    ("synth.chapter_length", "", "frames per chapter at 10 fps; empty keeps the preset value"),
    ("synth.blank_fraction", "", "fraction of semantic cells left blank"),
    ("synth.pixel_noise", "", "uniform per-channel pixel noise amplitude"),
    ("synth.frame_width", "", "rendered frame width"),
    ("synth.frame_height", "", "rendered frame height"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn detail(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

fn known(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _, _)| *k == key) {
        Ok(())
    } else {
        Err(Error::config(format!("unknown configuration key `{key}`")))
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Parse `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::config(format!("{origin}:{}: {}", n + 1, detail(e))))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = rest.to_ascii_lowercase().replace("__", ".");
            self.set(&key, &value)
                .map_err(|e| Error::config(format!("environment {name}: {}", detail(e))))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        known(key)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key);
        raw.parse()
            .map_err(|e| Error::config(format!("{key} = `{raw}`: {e}")))
    }

    /// `None` when the value is empty.
    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.get(key).is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn triple(&self, key: &str) -> Result<[f64; 3]> {
        let parts: Vec<&str> = self.get(key).split(',').map(str::trim).collect();
        let bad = || Error::config(format!("{key} needs three comma-separated numbers"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut out = [0.0; 3];
        for (o, p) in out.iter_mut().zip(parts) {
            *o = p.parse().map_err(|_| bad())?;
        }
        Ok(out)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("output.dir"))
    }

    pub fn dataset_root(&self) -> PathBuf {
        match self.get("dataset.root") {
            "" => self.out_dir().join("data"),
            p => PathBuf::from(p),
        }
    }

    /// Resolved configuration as a loadable config file.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# resolved run configuration\n");
        for (k, _, _) in KEYS {
            writeln!(out, "{k} = {}", self.get(k)).unwrap();
        }
        out
    }
}

/// Commented listing of every key and its default.
pub fn documented_defaults() -> String {
    let mut out = String::new();
    for (k, v, doc) in KEYS {
        writeln!(out, "# {doc}\n{k} = {v}\n").unwrap();
    }
    out
}
