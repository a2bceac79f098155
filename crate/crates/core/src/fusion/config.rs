use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data_model::{FOLDER_DUMMIES, SEMANTIC_FEATURES};
use crate::error::{Error, Result};

pub const PAPER_FC_HIDDEN: [usize; 2] = [256, 128];
pub const PAPER_HEAD_HIDDEN: [usize; 3] = [1024, 512, 256];
pub const PAPER_HEAD_DROPOUT: f64 = 0.10;
pub const DEFAULT_LSTM_HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Pins every architectural constant and requires a pretrained residual backbone.
    PaperFaithful,
    /// Small CPU-friendly configuration for synthetic data.
    Desk,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BackboneKind {
    /// Stride-2 3x3 conv + ReLU blocks, flattened.
    DeskCnn { channels: Vec<usize> },
    /// Residual network: 7x7 stem, max-pool, four stages, global average pool.
    Residual {
        blocks: Vec<usize>,
        base_width: usize,
        bottleneck: bool,
    },
}

impl BackboneKind {
    pub fn desk() -> Self {
        BackboneKind::DeskCnn {
            channels: vec![8, 16, 32, 32],
        }
    }

    pub fn resnet34() -> Self {
        BackboneKind::Residual {
            blocks: vec![3, 4, 6, 3],
            base_width: 64,
            bottleneck: false,
        }
    }

    pub fn resnet152() -> Self {
        BackboneKind::Residual {
            blocks: vec![3, 8, 36, 3],
            base_width: 64,
            bottleneck: true,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "resnet34" => Ok(Self::resnet34()),
            "resnet152" => Ok(Self::resnet152()),
            other => Err(Error::config(format!("unknown backbone `{other}`"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            BackboneKind::DeskCnn { .. } => "desk".into(),
            k if *k == Self::resnet34() => "resnet34".into(),
            k if *k == Self::resnet152() => "resnet152".into(),
            BackboneKind::Residual { blocks, .. } => format!("residual{blocks:?}"),
        }
    }

    fn is_paper_residual(&self) -> bool {
        *self == Self::resnet34() || *self == Self::resnet152()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    pub pretrained: bool,
    /// Parameter archive with `backbone.*` entries, required when pretrained.
    pub weights: Option<PathBuf>,
}

impl BackboneSpec {
    pub fn desk() -> Self {
        Self {
            kind: BackboneKind::desk(),
            pretrained: false,
            weights: None,
        }
    }
}

/// What is concatenated with the LSTM output before the heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipSource {
    /// Current semantic encoding (nothing when the semantic path is off).
    SemanticEncoding,
    /// Current-frame backbone features.
    BackboneFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: RunMode,
    pub backbone: BackboneSpec,
    /// (width, height) of the input frames.
    pub input_resolution: (usize, usize),
    pub use_semantic: bool,
    pub semantic_dim: usize,
    pub fc_hidden: [usize; 2],
    pub lstm_hidden: usize,
    pub head_hidden: [usize; 3],
    pub head_dropout: f64,
    pub skip: SkipSource,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl FusionConfig {
    pub fn desk(input_resolution: (usize, usize), semantic_dim: usize) -> Self {
        Self {
            mode: RunMode::Desk,
            backbone: BackboneSpec::desk(),
            input_resolution,
            use_semantic: semantic_dim > 0,
            semantic_dim,
            fc_hidden: PAPER_FC_HIDDEN,
            lstm_hidden: DEFAULT_LSTM_HIDDEN,
            head_hidden: PAPER_HEAD_HIDDEN,
            head_dropout: PAPER_HEAD_DROPOUT,
            skip: SkipSource::SemanticEncoding,
            seed: 0,
        }
    }

    pub fn image_only(mut self) -> Self {
        self.use_semantic = false;
        self.semantic_dim = 0;
        self
    }

    /// Width of the semantic encoding (0 when the semantic path is off).
    pub fn encoding_dim(&self) -> usize {
        if self.use_semantic {
            self.fc_hidden[1]
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.input_resolution;
        if w == 0 || h == 0 {
            return Err(Error::config("input resolution must be non-zero"));
        }
        if self.use_semantic != (self.semantic_dim > 0) {
            return Err(Error::config(format!(
                "use_semantic={} is inconsistent with semantic_dim={}",
                self.use_semantic, self.semantic_dim
            )));
        }
        if self.fc_hidden.contains(&0) || self.head_hidden.contains(&0) || self.lstm_hidden == 0 {
            return Err(Error::config("layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.head_dropout) {
            return Err(Error::config("head dropout must lie in [0, 1)"));
        }
        match &self.backbone.kind {
            BackboneKind::DeskCnn { channels } if channels.is_empty() || channels.contains(&0) => {
                return Err(Error::config("desk backbone needs positive channel widths"))
            }
            BackboneKind::Residual {
                blocks, base_width, ..
            } if blocks.is_empty() || blocks.contains(&0) || *base_width == 0 => {
                return Err(Error::config("residual backbone needs positive blocks and width"))
            }
            _ => {}
        }
        if self.backbone.pretrained && self.backbone.weights.is_none() {
            return Err(Error::config("pretrained backbone requires a weights archive path"));
        }
        if self.mode == RunMode::PaperFaithful {
            if self.fc_hidden != PAPER_FC_HIDDEN {
                return Err(Error::config(format!(
                    "paper_faithful requires semantic hidden layers {PAPER_FC_HIDDEN:?}"
                )));
            }
            if self.head_hidden != PAPER_HEAD_HIDDEN {
                return Err(Error::config(format!(
                    "paper_faithful requires head hidden layers {PAPER_HEAD_HIDDEN:?}"
                )));
            }
            if self.head_dropout != PAPER_HEAD_DROPOUT {
                return Err(Error::config("paper_faithful requires head dropout 0.10"));
            }
            if !self.backbone.kind.is_paper_residual() || !self.backbone.pretrained {
                return Err(Error::config(
                    "paper_faithful requires a pretrained resnet34 or resnet152 backbone",
                ));
            }
            if self.use_semantic
                && self.semantic_dim != SEMANTIC_FEATURES
                && self.semantic_dim != SEMANTIC_FEATURES + FOLDER_DUMMIES
            {
                return Err(Error::config(format!(
                    "paper_faithful semantic_dim must be 20 or 47, got {}",
                    self.semantic_dim
                )));
            }
        }
        Ok(())
    }
}
