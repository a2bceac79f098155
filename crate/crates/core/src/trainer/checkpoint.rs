//! Checkpoint container.
//!
//! Layout: 8-byte magic, `u32` version, `u64` JSON header length, JSON
//! header, then raw little-endian `f64` arrays: all parameters in header
//! order, followed by the Adam first and second moments when present.
//! A parameter archive (e.g. pretrained backbone weights) is the same
//! container without model config, stats or optimizer state.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use crate::data_model::NormalizationStats;
use crate::error::{Error, Result};
use crate::fusion::{FeatureScaler, FusionConfig, FusionModel};
use crate::nn::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"L2DCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OptimizerMeta {
    config: AdamConfig,
    step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: Option<FusionConfig>,
    stats: Option<NormalizationStats>,
    scaler: Option<FeatureScaler>,
    epoch: usize,
    optimizer: Option<OptimizerMeta>,
    params: Vec<ParamMeta>,
}

/// Model snapshot: config echo, parameters, optimizer state, epoch and the
/// normalization statistics used in training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: FusionConfig,
    pub stats: NormalizationStats,
    pub scaler: Option<FeatureScaler>,
    pub epoch: usize,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
}

pub fn checkpoint_path(run_dir: &Path, epoch: usize) -> PathBuf {
    run_dir.join(format!("model_epoch{epoch}.ckpt"))
}

impl Checkpoint {
    pub fn from_model(model: &FusionModel, stats: NormalizationStats, epoch: usize, optimizer: Option<&Adam>) -> Self {
        Self {
            config: model.config.clone(),
            stats,
            scaler: model.scaler.clone(),
            epoch,
            params: model.params.clone(),
            optimizer: optimizer.cloned(),
        }
    }

    /// Rebuild the model these parameters belong to.
    pub fn to_model(&self) -> Result<FusionModel> {
        let mut model = FusionModel::new(self.config.clone())?;
        if model.params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameter arrays, config builds {}",
                self.params.len(),
                model.params.len()
            )));
        }
        model.load_named(&self.params, "")?;
        model.scaler = self.scaler.clone();
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            config: Some(self.config.clone()),
            stats: Some(self.stats),
            scaler: self.scaler.clone(),
            epoch: self.epoch,
            optimizer: self.optimizer.as_ref().map(|a| OptimizerMeta {
                config: a.config,
                step: a.step,
            }),
            params: metas(&self.params),
        };
        let mut arrays: Vec<&[f64]> = self.params.iter().map(|p| &p.data[..]).collect();
        if let Some(a) = &self.optimizer {
            arrays.extend(a.m.iter().map(|v| &v[..]));
            arrays.extend(a.v.iter().map(|v| &v[..]));
        }
        write_container(path, &header, &arrays)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, payload) = read_container(path)?;
        let mut data = &payload[..];
        let config = header
            .config
            .ok_or_else(|| Error::Checkpoint(format!("{} is a parameter archive, not a checkpoint", path.display())))?;
        let stats = header
            .stats
            .ok_or_else(|| Error::Checkpoint("checkpoint lacks normalization stats".into()))?;
        let params = take_params(&header.params, &mut data)?;
        let optimizer = match header.optimizer {
            Some(meta) => {
                let m = take_arrays(&header.params, &mut data)?;
                let v = take_arrays(&header.params, &mut data)?;
                Some(Adam {
                    config: meta.config,
                    step: meta.step,
                    m,
                    v,
                })
            }
            None => None,
        };
        if !data.is_empty() {
            return Err(Error::Checkpoint("trailing data after checkpoint payload".into()));
        }
        Ok(Self {
            config,
            stats,
            scaler: header.scaler,
            epoch: header.epoch,
            params,
            optimizer,
        })
    }
}

fn metas(ps: &ParamStore) -> Vec<ParamMeta> {
    ps.iter()
        .map(|p| ParamMeta {
            name: p.name.clone(),
            shape: p.shape.clone(),
        })
        .collect()
}

fn take_arrays(metas: &[ParamMeta], data: &mut &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(metas.len());
    for m in metas {
        let n: usize = m.shape.iter().product();
        if data.len() < n {
            return Err(Error::Checkpoint(format!("payload truncated at `{}`", m.name)));
        }
        out.push(data[..n].to_vec());
        *data = &data[n..];
    }
    Ok(out)
}

fn take_params(metas: &[ParamMeta], data: &mut &[f64]) -> Result<ParamStore> {
    let arrays = take_arrays(metas, data)?;
    let mut ps = ParamStore::new();
    for (m, a) in metas.iter().zip(arrays) {
        ps.add(m.name.clone(), &m.shape, a);
    }
    Ok(ps)
}

fn write_container(path: &Path, header: &Header, arrays: &[&[f64]]) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    f.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    f.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    f.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    f.write_all(&json).map_err(io)?;
    for a in arrays {
        for v in a.iter() {
            f.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    f.flush().map_err(io)
}

fn read_container(path: &Path) -> Result<(Header, Vec<f64>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let json = bytes
        .get(20..20 + len)
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let payload = &bytes[20 + len..];
    if payload.len() % 8 != 0 {
        return Err(Error::Checkpoint("payload is not a whole number of f64 values".into()));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, data))
}

/// Write a bare parameter archive.
pub fn save_param_archive(path: &Path, params: &ParamStore) -> Result<()> {
    let header = Header {
        config: None,
        stats: None,
        scaler: None,
        epoch: 0,
        optimizer: None,
        params: metas(params),
    };
    let arrays: Vec<&[f64]> = params.iter().map(|p| &p.data[..]).collect();
    write_container(path, &header, &arrays)
}

/// Read the parameters of a checkpoint or parameter archive.
pub fn load_param_archive(path: &Path) -> Result<ParamStore> {
    let (header, data) = read_container(path)?;
    let mut slice = &data[..];
    take_params(&header.params, &mut slice)
}

/// Build a model and, for a pretrained backbone, load its weights.
pub fn build_model(config: FusionConfig) -> Result<FusionModel> {
    let mut model = FusionModel::new(config)?;
    if model.config.backbone.pretrained {
        let path = model.config.backbone.weights.clone().expect("validated");
        let archive = load_param_archive(&path)?;
        let n = model.load_named(&archive, "backbone.")?;
        if n == 0 {
            return Err(Error::Checkpoint(format!(
                "{} holds no backbone.* parameters",
                path.display()
            )));
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{ImageStats, TargetStats};
    use crate::fusion::BackboneKind;

    fn stats() -> NormalizationStats {
        NormalizationStats::new(
            ImageStats {
                mean: [0.4; 3],
                std: [0.2; 3],
            },
            TargetStats {
                angle_mean: 1.0,
                angle_std: 2.0,
                speed_mean: 40.0,
                speed_std: 10.0,
            },
        )
        .unwrap()
    }

    fn small_config() -> FusionConfig {
        let mut c = FusionConfig::desk((8, 4), 20);
        c.backbone.kind = BackboneKind::DeskCnn { channels: vec![2] };
        c.fc_hidden = [4, 3];
        c.lstm_hidden = 3;
        c.head_hidden = [5, 4, 3];
        c
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let model = FusionModel::new(small_config()).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &model.params);
        adam.step = 7;
        adam.m[0][0] = 0.123456789;
        adam.v[1][0] = 1e-300;
        let ck = Checkpoint::from_model(&model, stats(), 3, Some(&adam));
        let dir = tempfile::tempdir().unwrap();
        let p = checkpoint_path(dir.path(), 3);
        ck.save(&p).unwrap();
        assert!(p.ends_with("model_epoch3.ckpt"));
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_model().unwrap().params, model.params);
    }

    #[test]
    fn pretrained_backbone_weights_are_loaded_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let mut donor_cfg = small_config();
        donor_cfg.seed = 99;
        let donor = FusionModel::new(donor_cfg).unwrap();
        let path = dir.path().join("backbone.bin");
        save_param_archive(&path, &donor.params).unwrap();

        let mut cfg = small_config();
        cfg.backbone.pretrained = true;
        cfg.backbone.weights = Some(path);
        let model = build_model(cfg).unwrap();
        let id = model.params.by_name("backbone.conv1.weight").unwrap();
        let did = donor.params.by_name("backbone.conv1.weight").unwrap();
        assert_eq!(model.params.get(id), donor.params.get(did));
        let hid = model.params.by_name("angle_head.fc1.weight").unwrap();
        assert_ne!(model.params.get(hid), donor.params.get(hid));
    }

    #[test]
    fn archive_is_not_a_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        save_param_archive(&path, &FusionModel::new(small_config()).unwrap().params).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap_err().class(), "checkpoint");
    }
}
