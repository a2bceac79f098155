//! The fused network: backbone over both frames, semantic encoder, a
//! two-step LSTM over (previous, current), and separate angle and speed
//! regressor heads.

use ndarray::{concatenate, s, Array2, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backbone::{Backbone, BackboneCache};
use super::config::{FusionConfig, SkipSource};
use crate::data_model::{FramePair, SemanticFeatureVector, SEMANTIC_FEATURES};
use crate::error::{Error, Result};
use crate::nn::layers::MlpCache;
use crate::nn::lstm::LstmCache;
use crate::nn::{Grads, Lstm, LstmState, Mlp, Mode, ParamStore};

/// Normalized-space predictions for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOutput {
    pub angle: f64,
    pub speed: f64,
}

/// Per-feature standardization of the semantic inputs, fitted on the
/// training split. Missing entries stay at exactly 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Statistics over the non-missing numeric values; one-hot columns are
    /// passed through unchanged.
    pub fn fit<'a>(vectors: impl IntoIterator<Item = &'a SemanticFeatureVector>, dim: usize) -> Self {
        let mut sum = [0.0; SEMANTIC_FEATURES];
        let mut sq = [0.0; SEMANTIC_FEATURES];
        let mut n = [0usize; SEMANTIC_FEATURES];
        let vs: Vec<&SemanticFeatureVector> = vectors.into_iter().collect();
        for v in &vs {
            for i in 0..SEMANTIC_FEATURES {
                if !v.missing_mask[i] {
                    sum[i] += v.values[i];
                    n[i] += 1;
                }
            }
        }
        let mean: Vec<f64> = (0..SEMANTIC_FEATURES)
            .map(|i| if n[i] > 0 { sum[i] / n[i] as f64 } else { 0.0 })
            .collect();
        for v in &vs {
            for i in 0..SEMANTIC_FEATURES {
                if !v.missing_mask[i] {
                    sq[i] += (v.values[i] - mean[i]).powi(2);
                }
            }
        }
        let mut out = Self::identity(dim);
        for i in 0..SEMANTIC_FEATURES.min(dim) {
            out.mean[i] = mean[i];
            let sd = if n[i] > 0 { (sq[i] / n[i] as f64).sqrt() } else { 0.0 };
            out.std[i] = if sd > 1e-12 { sd } else { 1.0 };
        }
        out
    }
}

/// A batch of model inputs. Semantic arrays are raw values with a
/// parallel 0/1 missing indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionBatch {
    pub previous: Array4<f64>,
    pub current: Array4<f64>,
    pub sem_previous: Array2<f64>,
    pub sem_current: Array2<f64>,
    pub missing_previous: Array2<f64>,
    pub missing_current: Array2<f64>,
}

impl FusionBatch {
    pub fn len(&self) -> usize {
        self.current.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_pairs(items: &[(&FramePair, &SemanticFeatureVector, &SemanticFeatureVector)], semantic_dim: usize) -> Result<Self> {
        let n = items.len();
        let (c, h, w) = items
            .first()
            .map(|(p, _, _)| p.current.dim())
            .ok_or_else(|| Error::validation("empty batch"))?;
        let mut previous = Array4::zeros((n, c, h, w));
        let mut current = Array4::zeros((n, c, h, w));
        let mut sp = Array2::zeros((n, semantic_dim));
        let mut sc = Array2::zeros((n, semantic_dim));
        let mut mp = Array2::zeros((n, semantic_dim));
        let mut mc = Array2::zeros((n, semantic_dim));
        for (b, (pair, prev, cur)) in items.iter().enumerate() {
            if pair.current.dim() != (c, h, w) || pair.previous.dim() != (c, h, w) {
                return Err(Error::config("frame shapes differ within a batch"));
            }
            previous.slice_mut(s![b, .., .., ..]).assign(&pair.previous);
            current.slice_mut(s![b, .., .., ..]).assign(&pair.current);
            if semantic_dim > 0 {
                write_semantic(prev, semantic_dim, sp.row_mut(b), mp.row_mut(b))?;
                write_semantic(cur, semantic_dim, sc.row_mut(b), mc.row_mut(b))?;
            }
        }
        Ok(Self {
            previous,
            current,
            sem_previous: sp,
            sem_current: sc,
            missing_previous: mp,
            missing_current: mc,
        })
    }
}

/// Copy one semantic vector into a batch row.
pub fn write_semantic(
    v: &SemanticFeatureVector,
    dim: usize,
    mut values: ndarray::ArrayViewMut1<'_, f64>,
    mut missing: ndarray::ArrayViewMut1<'_, f64>,
) -> Result<()> {
    if v.dim() != dim {
        return Err(Error::config(format!(
            "semantic vector has {} features, model expects {dim}",
            v.dim()
        )));
    }
    for i in 0..SEMANTIC_FEATURES {
        values[i] = v.values[i];
        missing[i] = if v.missing_mask[i] { 1.0 } else { 0.0 };
    }
    if let Some(oh) = &v.folder_onehot {
        for (j, &x) in oh.iter().enumerate() {
            values[SEMANTIC_FEATURES + j] = x;
        }
    }
    Ok(())
}

pub struct ForwardCache {
    batch: usize,
    backbone: BackboneCache,
    encoder: Option<MlpCache>,
    lstm: LstmCache,
    angle: MlpCache,
    speed: MlpCache,
}

#[derive(Debug, Clone)]
pub struct FusionModel {
    pub config: FusionConfig,
    pub params: ParamStore,
    pub scaler: Option<FeatureScaler>,
    backbone: Backbone,
    encoder: Option<Mlp>,
    lstm: Lstm,
    angle_head: Mlp,
    speed_head: Mlp,
}

fn check_finite(layer: &str, x: &Array2<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(layer, "non-finite activation"))
    }
}

impl FusionModel {
    pub fn new(config: FusionConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut ps = ParamStore::new();
        let backbone = Backbone::build(&mut ps, &config.backbone.kind, config.input_resolution, &mut rng);
        let feat = backbone.output_dim();
        let encoder = config.use_semantic.then(|| {
            Mlp::new(
                &mut ps,
                "semantic_encoder",
                &[config.semantic_dim, config.fc_hidden[0], config.fc_hidden[1]],
                true,
                0.0,
                &mut rng,
            )
        });
        let enc = config.encoding_dim();
        let lstm = Lstm::new(&mut ps, "lstm", feat + enc, config.lstm_hidden, &mut rng);
        let skip = match config.skip {
            SkipSource::SemanticEncoding => enc,
            SkipSource::BackboneFeatures => feat,
        };
        let head_in = config.lstm_hidden + skip;
        let widths = [head_in, config.head_hidden[0], config.head_hidden[1], config.head_hidden[2], 1];
        let angle_head = Mlp::new(&mut ps, "angle_head", &widths, false, config.head_dropout, &mut rng);
        let speed_head = Mlp::new(&mut ps, "speed_head", &widths, false, config.head_dropout, &mut rng);
        Ok(Self {
            config,
            params: ps,
            scaler: None,
            backbone,
            encoder,
            lstm,
            angle_head,
            speed_head,
        })
    }

    pub fn backbone_dim(&self) -> usize {
        self.backbone.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn angle_head(&self) -> &Mlp {
        &self.angle_head
    }

    pub fn speed_head(&self) -> &Mlp {
        &self.speed_head
    }

    pub fn encoder(&self) -> Option<&Mlp> {
        self.encoder.as_ref()
    }

    fn scale_semantic(&self, values: &Array2<f64>, missing: &Array2<f64>) -> Array2<f64> {
        let mut out = values.clone();
        let scaler = self.scaler.as_ref();
        for (mut row, mrow) in out.outer_iter_mut().zip(missing.outer_iter()) {
            for (j, v) in row.iter_mut().enumerate() {
                if mrow[j] != 0.0 {
                    *v = 0.0;
                } else if let Some(s) = scaler {
                    *v = (*v - s.mean[j]) / s.std[j];
                }
            }
        }
        out
    }

    /// Encode one semantic vector into the fused feature width.
    pub fn encode_semantic(&self, v: &SemanticFeatureVector) -> Result<Vec<f64>> {
        let enc = self
            .encoder
            .as_ref()
            .ok_or_else(|| Error::config("model was built without the semantic path"))?;
        let dim = self.config.semantic_dim;
        let mut values = Array2::zeros((1, dim));
        let mut missing = Array2::zeros((1, dim));
        write_semantic(v, dim, values.row_mut(0), missing.row_mut(0))?;
        let x = self.scale_semantic(&values, &missing);
        let (y, _) = enc.forward(&self.params, &x, &mut Mode::Eval);
        Ok(y.row(0).to_vec())
    }

    fn check_batch(&self, b: &FusionBatch) -> Result<()> {
        let (w, h) = self.config.input_resolution;
        let (_, c, bh, bw) = b.current.dim();
        if c != 3 || bh != h || bw != w || b.previous.dim() != b.current.dim() {
            return Err(Error::config(format!(
                "frames are {c}x{bh}x{bw}, model expects 3x{h}x{w}"
            )));
        }
        if self.config.use_semantic && b.sem_current.ncols() != self.config.semantic_dim {
            return Err(Error::config(format!(
                "semantic width {} does not match model semantic_dim {}",
                b.sem_current.ncols(),
                self.config.semantic_dim
            )));
        }
        Ok(())
    }

    /// Batched forward pass from a zero recurrent state. Returns
    /// (batch, 2) normalized predictions: column 0 angle, column 1 speed.
    pub fn forward_batch(&self, b: &FusionBatch, mut mode: Mode<'_>) -> Result<(Array2<f64>, ForwardCache)> {
        let state = LstmState::zeros(b.len(), self.config.lstm_hidden);
        let (out, cache, _) = self.forward_with_state(b, &state, &mut mode)?;
        Ok((out, cache))
    }

    fn forward_with_state(
        &self,
        b: &FusionBatch,
        state: &LstmState,
        mode: &mut Mode<'_>,
    ) -> Result<(Array2<f64>, ForwardCache, LstmState)> {
        self.check_batch(b)?;
        let n = b.len();
        let p = &self.params;
        let frames = concatenate![Axis(0), b.previous, b.current];
        let (feats, bb_cache) = self.backbone.forward(p, &frames);
        check_finite("backbone", &feats)?;
        let f_prev = feats.slice(s![0..n, ..]).to_owned();
        let f_cur = feats.slice(s![n..2 * n, ..]).to_owned();

        let (enc_cache, x_prev, x_cur, e_cur) = match &self.encoder {
            Some(enc) => {
                let sp = self.scale_semantic(&b.sem_previous, &b.missing_previous);
                let sc = self.scale_semantic(&b.sem_current, &b.missing_current);
                let both = concatenate![Axis(0), sp, sc];
                let (e, c) = enc.forward(p, &both, mode);
                check_finite("semantic_encoder", &e)?;
                let e_prev = e.slice(s![0..n, ..]);
                let e_cur = e.slice(s![n..2 * n, ..]).to_owned();
                (
                    Some(c),
                    concatenate![Axis(1), f_prev, e_prev],
                    concatenate![Axis(1), f_cur, e_cur],
                    Some(e_cur),
                )
            }
            None => (None, f_prev, f_cur.clone(), None),
        };

        let (last, lstm_cache) = self.lstm.forward(p, &[x_prev, x_cur], state);
        check_finite("lstm", &last.h)?;
        let fused = match (self.config.skip, &e_cur) {
            (SkipSource::SemanticEncoding, Some(e)) => concatenate![Axis(1), last.h, *e],
            (SkipSource::SemanticEncoding, None) => last.h.clone(),
            (SkipSource::BackboneFeatures, _) => concatenate![Axis(1), last.h, f_cur],
        };
        let (a, a_cache) = self.angle_head.forward(p, &fused, mode);
        check_finite("angle_head", &a)?;
        let (sp, s_cache) = self.speed_head.forward(p, &fused, mode);
        check_finite("speed_head", &sp)?;
        let out = concatenate![Axis(1), a, sp];
        Ok((
            out,
            ForwardCache {
                batch: n,
                backbone: bb_cache,
                encoder: enc_cache,
                lstm: lstm_cache,
                angle: a_cache,
                speed: s_cache,
            },
            last,
        ))
    }

    /// Accumulate parameter gradients for an upstream gradient on the
    /// (batch, 2) output.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>, g: &mut Grads) {
        let p = &self.params;
        let n = cache.batch;
        let da = d_out.slice(s![.., 0..1]).to_owned();
        let ds = d_out.slice(s![.., 1..2]).to_owned();
        let mut d_fused = self.angle_head.backward(p, &cache.angle, &da, g, true).expect("dx");
        d_fused += &self.speed_head.backward(p, &cache.speed, &ds, g, true).expect("dx");

        let hdim = self.config.lstm_hidden;
        let d_h = d_fused.slice(s![.., 0..hdim]).to_owned();
        let d_skip = d_fused.slice(s![.., hdim..]).to_owned();
        let dxs = self.lstm.backward(p, &cache.lstm, &d_h, g);
        let feat = self.backbone.output_dim();

        let mut d_feats = Array2::<f64>::zeros((2 * n, feat));
        d_feats.slice_mut(s![0..n, ..]).assign(&dxs[0].slice(s![.., 0..feat]));
        d_feats.slice_mut(s![n..2 * n, ..]).assign(&dxs[1].slice(s![.., 0..feat]));
        if self.config.skip == SkipSource::BackboneFeatures {
            let mut cur = d_feats.slice_mut(s![n..2 * n, ..]);
            cur += &d_skip;
        }

        if let (Some(enc), Some(ec)) = (&self.encoder, &cache.encoder) {
            let mut d_enc = Array2::<f64>::zeros((2 * n, enc.out_dim()));
            d_enc.slice_mut(s![0..n, ..]).assign(&dxs[0].slice(s![.., feat..]));
            d_enc.slice_mut(s![n..2 * n, ..]).assign(&dxs[1].slice(s![.., feat..]));
            if self.config.skip == SkipSource::SemanticEncoding {
                let mut cur = d_enc.slice_mut(s![n..2 * n, ..]);
                cur += &d_skip;
            }
            enc.backward(p, ec, &d_enc, g, false);
        }
        self.backbone.backward(p, &cache.backbone, &d_feats, g);
    }

    /// Single-sample forward from an explicit recurrent state.
    pub fn forward(
        &self,
        pair: &FramePair,
        sem_prev: &SemanticFeatureVector,
        sem_curr: &SemanticFeatureVector,
        state: Option<&LstmState>,
    ) -> Result<(ModelOutput, LstmState)> {
        let batch = FusionBatch::from_pairs(&[(pair, sem_prev, sem_curr)], self.config.semantic_dim)?;
        let zero = LstmState::zeros(1, self.config.lstm_hidden);
        let state = state.unwrap_or(&zero);
        if state.h.dim() != (1, self.config.lstm_hidden) || state.c.dim() != (1, self.config.lstm_hidden) {
            return Err(Error::config("recurrent state has the wrong shape"));
        }
        let (out, _, next) = self.forward_with_state(&batch, state, &mut Mode::Eval)?;
        Ok((
            ModelOutput {
                angle: out[[0, 0]],
                speed: out[[0, 1]],
            },
            next,
        ))
    }

    /// Evaluate one regressor head on a fused vector.
    pub fn regressor_head(&self, head: &Mlp, x: &[f64]) -> Result<f64> {
        if x.len() != head.in_dim() {
            return Err(Error::config(format!(
                "head input has {} values, expected {}",
                x.len(),
                head.in_dim()
            )));
        }
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        let (y, _) = head.forward(&self.params, &x, &mut Mode::Eval);
        Ok(y[[0, 0]])
    }

    /// Parameters that exist only because of the semantic path: encoder,
    /// the extra LSTM input columns and, with the semantic skip, the extra
    /// first-layer head columns.
    pub fn semantic_param_count(config: &FusionConfig) -> usize {
        if !config.use_semantic {
            return 0;
        }
        let [h1, h2] = config.fc_hidden;
        let encoder = config.semantic_dim * h1 + h1 + h1 * h2 + h2;
        let lstm = 4 * config.lstm_hidden * h2;
        let heads = match config.skip {
            SkipSource::SemanticEncoding => 2 * config.head_hidden[0] * h2,
            SkipSource::BackboneFeatures => 0,
        };
        encoder + lstm + heads
    }

    /// Replace parameter values from another store, matching by name.
    pub fn load_named(&mut self, source: &ParamStore, prefix: &str) -> Result<usize> {
        let mut loaded = 0;
        for src in source.iter().filter(|p| p.name.starts_with(prefix)) {
            let id = self
                .params
                .by_name(&src.name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter `{}`", src.name)))?;
            let dst = self.params.get_mut(id);
            if dst.shape != src.shape {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    src.name, src.shape, dst.shape
                )));
            }
            dst.data.clone_from(&src.data);
            loaded += 1;
        }
        Ok(loaded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::config::BackboneKind;
    use ndarray::Array3;
    use rand::Rng;

    fn tiny_config(sem: usize) -> FusionConfig {
        let mut c = FusionConfig::desk((8, 4), sem);
        c.backbone.kind = BackboneKind::DeskCnn { channels: vec![2, 3] };
        c.fc_hidden = [6, 5];
        c.lstm_hidden = 4;
        c.head_hidden = [8, 6, 4];
        c.seed = 42;
        c
    }

    fn random_pair(rng: &mut ChaCha8Rng, h: usize, w: usize) -> FramePair {
        FramePair {
            previous: Array3::from_shape_simple_fn((3, h, w), || rng.random_range(-1.0..1.0)),
            current: Array3::from_shape_simple_fn((3, h, w), || rng.random_range(-1.0..1.0)),
        }
    }

    fn random_sem(rng: &mut ChaCha8Rng) -> SemanticFeatureVector {
        let mut cells = [None; SEMANTIC_FEATURES];
        for c in cells.iter_mut() {
            *c = Some(rng.random_range(-2.0..2.0));
        }
        SemanticFeatureVector::from_cells(cells)
    }

    #[test]
    fn encoding_width_is_128_for_20_and_47_features() {
        for dim in [20, 47] {
            let model = FusionModel::new(FusionConfig::desk((16, 8), dim)).unwrap();
            let mut v = SemanticFeatureVector::zeros();
            if dim == 47 {
                v = v.with_folder(3).unwrap();
            }
            assert_eq!(model.encode_semantic(&v).unwrap().len(), 128);
        }
    }

    #[test]
    fn zero_input_zero_bias_encodes_to_zero() {
        let mut model = FusionModel::new(FusionConfig::desk((16, 8), 20)).unwrap();
        for l in &model.encoder.clone().unwrap().layers {
            model.params.get_mut(l.bias).data.iter_mut().for_each(|b| *b = 0.0);
        }
        let out = model.encode_semantic(&SemanticFeatureVector::zeros()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encoder_dimension_mismatch_is_config_error() {
        let model = FusionModel::new(FusionConfig::desk((16, 8), 20)).unwrap();
        let v = SemanticFeatureVector::zeros().with_folder(0).unwrap();
        assert!(matches!(model.encode_semantic(&v), Err(Error::Config(_))));
    }

    #[test]
    fn encoder_respects_weight_norm_lipschitz_bound() {
        let model = FusionModel::new(FusionConfig::desk((16, 8), 20)).unwrap();
        let enc = model.encoder.as_ref().unwrap();
        let fro = |id| model.params.get(id).data.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        let bound = fro(enc.layers[0].weight) * fro(enc.layers[1].weight);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let a = random_sem(&mut rng);
            let b = random_sem(&mut rng);
            let ea = model.encode_semantic(&a).unwrap();
            let eb = model.encode_semantic(&b).unwrap();
            assert!(ea.iter().all(|v| v.is_finite()));
            let dout: f64 = ea.iter().zip(&eb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let din: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!(dout <= bound * din + 1e-12, "{dout} > {bound} * {din}");
        }
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let model = FusionModel::new(tiny_config(20)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pair = random_pair(&mut rng, 4, 8);
        let (s0, s1) = (random_sem(&mut rng), random_sem(&mut rng));
        let (a, _) = model.forward(&pair, &s0, &s1, None).unwrap();
        let (b, _) = model.forward(&pair, &s0, &s1, None).unwrap();
        assert_eq!(a.angle.to_bits(), b.angle.to_bits());
        assert_eq!(a.speed.to_bits(), b.speed.to_bits());
    }

    #[test]
    fn image_only_model_ignores_semantics() {
        let model = FusionModel::new(tiny_config(20).image_only()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pair = random_pair(&mut rng, 4, 8);
        let (a, _) = model
            .forward(&pair, &random_sem(&mut rng), &random_sem(&mut rng), None)
            .unwrap();
        let (b, _) = model
            .forward(&pair, &random_sem(&mut rng), &random_sem(&mut rng), None)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recurrent_state_changes_output() {
        let model = FusionModel::new(tiny_config(20)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pair = random_pair(&mut rng, 4, 8);
        let s = random_sem(&mut rng);
        let (a, st) = model.forward(&pair, &s, &s, None).unwrap();
        let (b, _) = model.forward(&pair, &s, &s, Some(&st)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn head_with_zero_weights_outputs_final_bias() {
        let mut model = FusionModel::new(tiny_config(20)).unwrap();
        let head = model.angle_head.clone();
        for l in &head.layers {
            model.params.get_mut(l.weight).data.iter_mut().for_each(|v| *v = 0.0);
        }
        let last = head.layers.last().unwrap().bias;
        model.params.get_mut(last).data[0] = 0.75;
        let x = vec![3.0; head.in_dim()];
        assert_eq!(model.regressor_head(&head, &x).unwrap(), 0.75);
        assert!(model.regressor_head(&head, &[1.0]).is_err());
    }

    #[test]
    fn heads_do_not_share_parameters() {
        let mut model = FusionModel::new(tiny_config(20)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pair = random_pair(&mut rng, 4, 8);
        let s = random_sem(&mut rng);
        let (before, _) = model.forward(&pair, &s, &s, None).unwrap();
        for l in &model.angle_head.layers.clone() {
            model.params.get_mut(l.weight).data.iter_mut().for_each(|v| *v *= -3.0);
        }
        let (after, _) = model.forward(&pair, &s, &s, None).unwrap();
        assert_eq!(before.speed, after.speed);
        assert_ne!(before.angle, after.angle);
    }

    #[test]
    fn severing_semantics_removes_exactly_the_predicted_parameters() {
        for skip in [SkipSource::SemanticEncoding, SkipSource::BackboneFeatures] {
            for dim in [20, 47] {
                let mut cfg = FusionConfig::desk((64, 36), dim);
                cfg.skip = skip;
                let with = FusionModel::new(cfg.clone()).unwrap().num_params();
                let without = FusionModel::new(cfg.clone().image_only()).unwrap().num_params();
                assert_eq!(with - without, FusionModel::semantic_param_count(&cfg));
            }
        }
    }

    #[test]
    fn wrong_frame_size_is_rejected() {
        let model = FusionModel::new(tiny_config(20)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pair = random_pair(&mut rng, 5, 8);
        let s = random_sem(&mut rng);
        assert!(matches!(model.forward(&pair, &s, &s, None), Err(Error::Config(_))));
    }

    #[test]
    fn scaler_keeps_missing_entries_at_zero() {
        let mut a = SemanticFeatureVector::from_cells([Some(10.0); SEMANTIC_FEATURES]);
        let b = SemanticFeatureVector::from_cells([Some(20.0); SEMANTIC_FEATURES]);
        let s = FeatureScaler::fit([&a, &b], 20);
        assert_eq!(s.mean[0], 15.0);
        assert_eq!(s.std[0], 5.0);
        let mut model = FusionModel::new(tiny_config(20)).unwrap();
        model.scaler = Some(s);
        a.missing_mask[0] = true;
        a.values[0] = 0.0;
        let mut values = Array2::zeros((1, 20));
        let mut missing = Array2::zeros((1, 20));
        write_semantic(&a, 20, values.row_mut(0), missing.row_mut(0)).unwrap();
        let x = model.scale_semantic(&values, &missing);
        assert_eq!(x[[0, 0]], 0.0);
        assert_eq!(x[[0, 1]], -1.0);
    }
}
