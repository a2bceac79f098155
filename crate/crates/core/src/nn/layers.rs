//! Dense layers: affine maps, ReLU, dropout and small MLP stacks.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Grads, ParamId, ParamStore};

/// Forward-pass mode. Dropout only draws masks in training mode.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    pub fn rng(&mut self) -> Option<&mut ChaCha8Rng> {
        match self {
            Mode::Eval => None,
            Mode::Train(r) => Some(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn new(ps: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let weight = ps.add_uniform(format!("{name}.weight"), &[out_dim, in_dim], bound, rng);
        let bias = ps.add_uniform(format!("{name}.bias"), &[out_dim], bound, rng);
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn num_params(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    /// `x` is (batch, in_dim).
    pub fn forward(&self, p: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&p.mat(self.weight).t());
        y += &p.vec(self.bias);
        y
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        x: &Array2<f64>,
        dy: &Array2<f64>,
        g: &mut Grads,
        need_dx: bool,
    ) -> Option<Array2<f64>> {
        general_mat_mul(1.0, &dy.t(), x, 1.0, &mut g.mat_mut(self.weight, self.out_dim));
        let mut gb = g.vec_mut(self.bias);
        gb += &dy.sum_axis(Axis(0));
        need_dx.then(|| dy.dot(&p.mat(self.weight)))
    }
}

pub fn relu(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Inverted dropout mask: each entry is 0 with probability `p`, otherwise
/// `1 / (1 - p)`.
pub fn dropout_mask(shape: (usize, usize), p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 - p;
    let scale = 1.0 / keep;
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < keep { scale } else { 0.0 })
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    mask: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    blocks: Vec<BlockCache>,
}

/// A stack of affine layers. Every layer but the last is followed by ReLU
/// and (in training) dropout; the last gets ReLU only when `relu_last`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub relu_last: bool,
    pub dropout: f64,
}

impl Mlp {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        widths: &[usize],
        relu_last: bool,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(ps, &format!("{name}.fc{}", i + 1), w[0], w[1], rng))
            .collect();
        Self {
            layers,
            relu_last,
            dropout,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Linear::num_params).sum()
    }

    pub fn forward(&self, p: &ParamStore, x: &Array2<f64>, mode: &mut Mode<'_>) -> (Array2<f64>, MlpCache) {
        let n = self.layers.len();
        let mut blocks = Vec::with_capacity(n);
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = layer.forward(p, &h);
            let last = i + 1 == n;
            let mut out = pre.clone();
            let mut mask = None;
            if !last || self.relu_last {
                relu(&mut out);
            }
            if !last && self.dropout > 0.0 {
                if let Some(rng) = mode.rng() {
                    let m = dropout_mask(out.dim(), self.dropout, rng);
                    out *= &m;
                    mask = Some(m);
                }
            }
            blocks.push(BlockCache {
                input: std::mem::replace(&mut h, out),
                pre,
                mask,
            });
        }
        (h, MlpCache { blocks })
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        cache: &MlpCache,
        dy: &Array2<f64>,
        g: &mut Grads,
        need_dx: bool,
    ) -> Option<Array2<f64>> {
        let n = self.layers.len();
        let mut d = dy.clone();
        for i in (0..n).rev() {
            let b = &cache.blocks[i];
            let last = i + 1 == n;
            if let Some(m) = &b.mask {
                d *= m;
            }
            if !last || self.relu_last {
                ndarray::Zip::from(&mut d).and(&b.pre).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let want = need_dx || i > 0;
            {
                let dx = self.layers[i].backward(p, &b.input, &d, g, want)?;
                d = dx
            }
        }
        Some(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn linear_matches_hand_matvec() {
        let mut ps = ParamStore::new();
        let w = ps.add("w", &[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let b = ps.add("b", &[2], vec![0.1, -0.2]);
        let lin = Linear {
            weight: w,
            bias: b,
            in_dim: 3,
            out_dim: 2,
        };
        let x = Array2::from_shape_vec((1, 3), vec![1.0, 1.0, 2.0]).unwrap();
        let y = lin.forward(&ps, &x);
        assert_eq!(y, Array2::from_shape_vec((1, 2), vec![9.1, -0.7]).unwrap());
    }

    #[test]
    fn dropout_keeps_ninety_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = dropout_mask((100, 100), 0.1, &mut rng);
        let kept = m.iter().filter(|&&v| v > 0.0).count() as f64 / 1e4;
        assert!((kept - 0.9).abs() < 0.02, "{kept}");
        assert!(m.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.9).abs() < 1e-15));
    }

    #[test]
    fn eval_mode_ignores_dropout() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamStore::new();
        let mlp = Mlp::new(&mut ps, "m", &[4, 8, 8, 1], false, 0.5, &mut rng);
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f64 * 0.1);
        let (a, _) = mlp.forward(&ps, &x, &mut Mode::Eval);
        let (b, _) = mlp.forward(&ps, &x, &mut Mode::Eval);
        assert_eq!(a, b);
        assert_eq!(mlp.num_params(), ps.num_scalars());
    }
}
