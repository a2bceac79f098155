//! Image feature extractors: the small desk CNN and residual networks.

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

use super::config::BackboneKind;
use crate::nn::conv::{
    flatten, global_avg_pool, global_avg_pool_backward, relu4, relu4_backward, unflatten, ChannelAffine,
    Conv2d, MaxPool2d,
};
use crate::nn::{Grads, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct DeskCnn {
    convs: Vec<Conv2d>,
    out_shape: (usize, usize, usize),
}

#[derive(Debug, Clone)]
pub struct DeskCache {
    inputs: Vec<Array4<f64>>,
    outputs: Vec<Array4<f64>>,
}

impl DeskCnn {
    fn new(ps: &mut ParamStore, channels: &[usize], res: (usize, usize), rng: &mut ChaCha8Rng) -> Self {
        let (mut w, mut h) = res;
        let mut in_ch = 3;
        let mut convs = Vec::new();
        for (i, &c) in channels.iter().enumerate() {
            let conv = Conv2d::new(ps, &format!("backbone.conv{}", i + 1), in_ch, c, 3, 2, 1, true, rng);
            (h, w) = conv.output_hw(h, w);
            convs.push(conv);
            in_ch = c;
        }
        Self {
            convs,
            out_shape: (in_ch, h, w),
        }
    }

    fn forward(&self, p: &ParamStore, x: &Array4<f64>) -> (Array2<f64>, DeskCache) {
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut outputs = Vec::with_capacity(self.convs.len());
        let mut h = x.clone();
        for conv in &self.convs {
            let mut y = conv.forward(p, &h);
            relu4(&mut y);
            inputs.push(std::mem::replace(&mut h, y.clone()));
            outputs.push(y);
        }
        (flatten(&h), DeskCache { inputs, outputs })
    }

    fn backward(&self, p: &ParamStore, cache: &DeskCache, dfeat: &Array2<f64>, g: &mut Grads) {
        let last = cache.outputs.last().expect("at least one conv");
        let mut d = unflatten(dfeat, last.dim());
        for (i, conv) in self.convs.iter().enumerate().rev() {
            relu4_backward(&cache.outputs[i], &mut d);
            match conv.backward(p, &cache.inputs[i], &d, g, i > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvBn {
    conv: Conv2d,
    bn: ChannelAffine,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    fn new(
        ps: &mut ParamStore,
        name: &str,
        bn_name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            conv: Conv2d::new(ps, name, in_ch, out_ch, k, stride, k / 2, false, rng),
            bn: ChannelAffine::new(ps, bn_name, out_ch),
        }
    }
}

struct ConvBnCache {
    input: Array4<f64>,
    conv_out: Array4<f64>,
}

impl ConvBn {
    fn forward(&self, p: &ParamStore, x: &Array4<f64>) -> (Array4<f64>, ConvBnCache) {
        let z = self.conv.forward(p, x);
        let a = self.bn.forward(p, &z);
        (
            a,
            ConvBnCache {
                input: x.clone(),
                conv_out: z,
            },
        )
    }

    fn backward(&self, p: &ParamStore, c: &ConvBnCache, dy: &Array4<f64>, g: &mut Grads, need_dx: bool) -> Option<Array4<f64>> {
        let dz = self.bn.backward(p, &c.conv_out, dy, g);
        self.conv.backward(p, &c.input, &dz, g, need_dx)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ResBlock {
    path: Vec<ConvBn>,
    shortcut: Option<ConvBn>,
}

struct ResBlockCache {
    path: Vec<ConvBnCache>,
    /// ReLU outputs between path layers.
    hidden: Vec<Array4<f64>>,
    shortcut: Option<ConvBnCache>,
    out: Array4<f64>,
}

impl ResBlock {
    fn forward(&self, p: &ParamStore, x: &Array4<f64>) -> (Array4<f64>, ResBlockCache) {
        let n = self.path.len();
        let mut caches = Vec::with_capacity(n);
        let mut hidden = Vec::with_capacity(n.saturating_sub(1));
        let mut h = x.clone();
        for (j, cb) in self.path.iter().enumerate() {
            let (mut a, c) = cb.forward(p, &h);
            caches.push(c);
            if j + 1 < n {
                relu4(&mut a);
                hidden.push(a.clone());
            }
            h = a;
        }
        let (sc, sc_cache) = match &self.shortcut {
            Some(cb) => {
                let (a, c) = cb.forward(p, x);
                (a, Some(c))
            }
            None => (x.clone(), None),
        };
        let mut out = h + &sc;
        relu4(&mut out);
        (
            out.clone(),
            ResBlockCache {
                path: caches,
                hidden,
                shortcut: sc_cache,
                out,
            },
        )
    }

    fn backward(&self, p: &ParamStore, c: &ResBlockCache, dy: &Array4<f64>, g: &mut Grads, need_dx: bool) -> Option<Array4<f64>> {
        let mut d = dy.clone();
        relu4_backward(&c.out, &mut d);
        let d_sc = d.clone();
        let n = self.path.len();
        let mut dpath = Some(d);
        for j in (0..n).rev() {
            let mut dj = dpath.take().expect("gradient flows through path");
            if j + 1 < n {
                relu4_backward(&c.hidden[j], &mut dj);
            }
            dpath = self.path[j].backward(p, &c.path[j], &dj, g, need_dx || j > 0);
        }
        let dx_sc = match (&self.shortcut, &c.shortcut) {
            (Some(cb), Some(cc)) => cb.backward(p, cc, &d_sc, g, need_dx),
            _ => need_dx.then_some(d_sc),
        };
        match (dpath, dx_sc) {
            (Some(a), Some(b)) => Some(a + &b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualNet {
    stem: ConvBn,
    pool: MaxPool2d,
    blocks: Vec<ResBlock>,
    out_dim: usize,
}

pub struct ResidualCache {
    stem: ConvBnCache,
    stem_out: Array4<f64>,
    pool_arg: Vec<usize>,
    blocks: Vec<ResBlockCache>,
    last_shape: (usize, usize, usize, usize),
}

impl ResidualNet {
    /// Parameter names follow torchvision's ResNet layout under `backbone.`.
    fn new(ps: &mut ParamStore, blocks: &[usize], base: usize, bottleneck: bool, rng: &mut ChaCha8Rng) -> Self {
        let stem = ConvBn::new(ps, "backbone.conv1", "backbone.bn1", 3, base, 7, 2, rng);
        let expansion = if bottleneck { 4 } else { 1 };
        let mut in_ch = base;
        let mut all = Vec::new();
        for (stage, &count) in blocks.iter().enumerate() {
            let width = base << stage;
            for b in 0..count {
                let stride = if b == 0 && stage > 0 { 2 } else { 1 };
                let prefix = format!("backbone.layer{}.{b}", stage + 1);
                let out_ch = width * expansion;
                let path = if bottleneck {
                    vec![
                        ConvBn::new(ps, &format!("{prefix}.conv1"), &format!("{prefix}.bn1"), in_ch, width, 1, 1, rng),
                        ConvBn::new(ps, &format!("{prefix}.conv2"), &format!("{prefix}.bn2"), width, width, 3, stride, rng),
                        ConvBn::new(ps, &format!("{prefix}.conv3"), &format!("{prefix}.bn3"), width, out_ch, 1, 1, rng),
                    ]
                } else {
                    vec![
                        ConvBn::new(ps, &format!("{prefix}.conv1"), &format!("{prefix}.bn1"), in_ch, width, 3, stride, rng),
                        ConvBn::new(ps, &format!("{prefix}.conv2"), &format!("{prefix}.bn2"), width, out_ch, 3, 1, rng),
                    ]
                };
                let shortcut = (stride != 1 || in_ch != out_ch).then(|| {
                    ConvBn::new(
                        ps,
                        &format!("{prefix}.downsample.0"),
                        &format!("{prefix}.downsample.1"),
                        in_ch,
                        out_ch,
                        1,
                        stride,
                        rng,
                    )
                });
                all.push(ResBlock { path, shortcut });
                in_ch = out_ch;
            }
        }
        Self {
            stem,
            pool: MaxPool2d {
                kernel: 3,
                stride: 2,
                pad: 1,
            },
            blocks: all,
            out_dim: in_ch,
        }
    }

    fn forward(&self, p: &ParamStore, x: &Array4<f64>) -> (Array2<f64>, ResidualCache) {
        let (mut a, stem) = self.stem.forward(p, x);
        relu4(&mut a);
        let (mut h, pool_arg) = self.pool.forward(&a);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (out, c) = b.forward(p, &h);
            blocks.push(c);
            h = out;
        }
        let last_shape = h.dim();
        (
            global_avg_pool(&h),
            ResidualCache {
                stem,
                stem_out: a,
                pool_arg,
                blocks,
                last_shape,
            },
        )
    }

    fn backward(&self, p: &ParamStore, c: &ResidualCache, dfeat: &Array2<f64>, g: &mut Grads) {
        let mut d = global_avg_pool_backward(c.last_shape, dfeat);
        for (b, bc) in self.blocks.iter().zip(&c.blocks).rev() {
            d = b.backward(p, bc, &d, g, true).expect("dx requested");
        }
        let mut da = self.pool.backward(c.stem_out.dim(), &c.pool_arg, &d);
        relu4_backward(&c.stem_out, &mut da);
        self.stem.backward(p, &c.stem, &da, g, false);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backbone {
    Desk(DeskCnn),
    Residual(ResidualNet),
}

pub enum BackboneCache {
    Desk(DeskCache),
    Residual(Box<ResidualCache>),
}

impl Backbone {
    pub fn build(ps: &mut ParamStore, kind: &BackboneKind, res: (usize, usize), rng: &mut ChaCha8Rng) -> Self {
        match kind {
            BackboneKind::DeskCnn { channels } => Backbone::Desk(DeskCnn::new(ps, channels, res, rng)),
            BackboneKind::Residual {
                blocks,
                base_width,
                bottleneck,
            } => Backbone::Residual(ResidualNet::new(ps, blocks, *base_width, *bottleneck, rng)),
        }
    }

    /// Flattened feature size produced per image.
    pub fn output_dim(&self) -> usize {
        match self {
            Backbone::Desk(d) => d.out_shape.0 * d.out_shape.1 * d.out_shape.2,
            Backbone::Residual(r) => r.out_dim,
        }
    }

    /// `x` is (images, 3, height, width); returns (images, output_dim).
    pub fn forward(&self, p: &ParamStore, x: &Array4<f64>) -> (Array2<f64>, BackboneCache) {
        match self {
            Backbone::Desk(d) => {
                let (f, c) = d.forward(p, x);
                (f, BackboneCache::Desk(c))
            }
            Backbone::Residual(r) => {
                let (f, c) = r.forward(p, x);
                (f, BackboneCache::Residual(Box::new(c)))
            }
        }
    }

    pub fn backward(&self, p: &ParamStore, cache: &BackboneCache, dfeat: &Array2<f64>, g: &mut Grads) {
        match (self, cache) {
            (Backbone::Desk(d), BackboneCache::Desk(c)) => d.backward(p, c, dfeat, g),
            (Backbone::Residual(r), BackboneCache::Residual(c)) => r.backward(p, c, dfeat, g),
            _ => unreachable!("cache produced by a different backbone"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn desk_output_dim_matches_flattened_features() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bb = Backbone::build(&mut ps, &BackboneKind::desk(), (64, 36), &mut rng);
        // 64x36 -> 32x18 -> 16x9 -> 8x5 -> 4x3
        assert_eq!(bb.output_dim(), 32 * 3 * 4);
        let x = Array4::zeros((2, 3, 36, 64));
        let (f, _) = bb.forward(&ps, &x);
        assert_eq!(f.dim(), (2, bb.output_dim()));
    }

    #[test]
    fn resnet34_shape_and_names() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bb = Backbone::build(&mut ps, &BackboneKind::resnet34(), (32, 32), &mut rng);
        assert_eq!(bb.output_dim(), 512);
        assert!(ps.by_name("backbone.layer4.0.downsample.0.weight").is_some());
        assert!(ps.by_name("backbone.layer1.2.bn2.bias").is_some());
        // torchvision resnet34 without the fc layer, with BN folded to scale/shift.
        assert_eq!(ps.num_scalars(), 21_284_672);
    }

    #[test]
    fn resnet152_output_dim() {
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bb = Backbone::build(&mut ps, &BackboneKind::resnet152(), (32, 32), &mut rng);
        assert_eq!(bb.output_dim(), 2048);
    }
}
