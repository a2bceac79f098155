//! Convolutional building blocks over (batch, channel, height, width) tensors.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array4, Axis};
use rand_chacha::ChaCha8Rng;

use super::params::{Grads, ParamId, ParamStore};

fn out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = ps.add_uniform(format!("{name}.weight"), &[out_ch, in_ch, kernel, kernel], bound, rng);
        let bias = bias.then(|| ps.add_uniform(format!("{name}.bias"), &[out_ch], bound, rng));
        Self {
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            out_size(h, self.kernel, self.stride, self.pad),
            out_size(w, self.kernel, self.stride, self.pad),
        )
    }

    pub fn num_params(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel + if self.bias.is_some() { self.out_ch } else { 0 }
    }

    /// Unfold patches into a (in_ch*k*k, batch*oh*ow) matrix.
    fn im2col(&self, x: &Array4<f64>) -> Array2<f64> {
        let (n, c, h, w) = x.dim();
        let (oh, ow) = self.output_hw(h, w);
        let k = self.kernel;
        let cols_n = n * oh * ow;
        let mut cols = Array2::<f64>::zeros((c * k * k, cols_n));
        let xs = x.as_slice().expect("standard layout input");
        let dst = cols.as_slice_mut().unwrap();
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let base = row * cols_n;
                    for b in 0..n {
                        let img = ((b * c) + ci) * h * w;
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let line = img + iy as usize * w;
                            let out_line = base + (b * oh + oy) * ow;
                            for ox in 0..ow {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    dst[out_line + ox] = xs[line + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<f64>, shape: (usize, usize, usize, usize)) -> Array4<f64> {
        let (n, c, h, w) = shape;
        let (oh, ow) = self.output_hw(h, w);
        let k = self.kernel;
        let cols_n = n * oh * ow;
        let mut dx = Array4::<f64>::zeros(shape);
        let src = cols.as_slice().expect("standard layout");
        let out = dx.as_slice_mut().unwrap();
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let base = ((ci * k + ky) * k + kx) * cols_n;
                    for b in 0..n {
                        let img = ((b * c) + ci) * h * w;
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let line = img + iy as usize * w;
                            let in_line = base + (b * oh + oy) * ow;
                            for ox in 0..ow {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    out[line + ix as usize] += src[in_line + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn weight_mat<'a>(&self, p: &'a ParamStore) -> ndarray::ArrayView2<'a, f64> {
        p.mat(self.weight)
    }

    pub fn forward(&self, p: &ParamStore, x: &Array4<f64>) -> Array4<f64> {
        let (n, _, h, w) = x.dim();
        let (oh, ow) = self.output_hw(h, w);
        let cols = self.im2col(x);
        let y2 = self.weight_mat(p).dot(&cols);
        let mut y = Array4::<f64>::zeros((n, self.out_ch, oh, ow));
        let plane = oh * ow;
        let ys = y.as_slice_mut().unwrap();
        let y2s = y2.as_slice().unwrap();
        let bias = self.bias.map(|b| p.get(b).data.clone());
        for oc in 0..self.out_ch {
            let b0 = bias.as_ref().map_or(0.0, |b| b[oc]);
            for b in 0..n {
                let src = &y2s[oc * n * plane + b * plane..oc * n * plane + (b + 1) * plane];
                let dst = &mut ys[(b * self.out_ch + oc) * plane..(b * self.out_ch + oc + 1) * plane];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + b0;
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        x: &Array4<f64>,
        dy: &Array4<f64>,
        g: &mut Grads,
        need_dx: bool,
    ) -> Option<Array4<f64>> {
        let (n, oc, oh, ow) = dy.dim();
        let plane = oh * ow;
        let mut dy2 = Array2::<f64>::zeros((oc, n * plane));
        {
            let d2 = dy2.as_slice_mut().unwrap();
            let ds = dy.as_slice().expect("standard layout");
            for o in 0..oc {
                for b in 0..n {
                    d2[o * n * plane + b * plane..o * n * plane + (b + 1) * plane]
                        .copy_from_slice(&ds[(b * oc + o) * plane..(b * oc + o + 1) * plane]);
                }
            }
        }
        let cols = self.im2col(x);
        general_mat_mul(1.0, &dy2, &cols.t(), 1.0, &mut g.mat_mut(self.weight, self.out_ch));
        if let Some(bias) = self.bias {
            let mut gb = g.vec_mut(bias);
            gb += &dy2.sum_axis(Axis(1));
        }
        if !need_dx {
            return None;
        }
        let dcols = self.weight_mat(p).t().dot(&dy2);
        Some(self.col2im(&dcols, x.dim()))
    }
}

/// Per-channel scale and shift; a batch-norm layer with its running
/// statistics folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAffine {
    pub scale: ParamId,
    pub shift: ParamId,
    pub channels: usize,
}

impl ChannelAffine {
    pub fn new(ps: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            scale: ps.add_const(format!("{name}.weight"), &[channels], 1.0),
            shift: ps.add_const(format!("{name}.bias"), &[channels], 0.0),
            channels,
        }
    }

    pub fn forward(&self, p: &ParamStore, x: &Array4<f64>) -> Array4<f64> {
        let s = &p.get(self.scale).data;
        let t = &p.get(self.shift).data;
        let mut y = x.clone();
        for mut img in y.outer_iter_mut() {
            for (c, mut plane) in img.outer_iter_mut().enumerate() {
                plane.mapv_inplace(|v| v * s[c] + t[c]);
            }
        }
        y
    }

    pub fn backward(&self, p: &ParamStore, x: &Array4<f64>, dy: &Array4<f64>, g: &mut Grads) -> Array4<f64> {
        let s = &p.get(self.scale).data;
        let c = self.channels;
        let mut gs = vec![0.0; c];
        let mut gt = vec![0.0; c];
        let mut dx = dy.clone();
        for (b, mut img) in dx.outer_iter_mut().enumerate() {
            for (ci, mut plane) in img.outer_iter_mut().enumerate() {
                let xin = x.index_axis(Axis(0), b);
                let xin = xin.index_axis(Axis(0), ci);
                for (d, &xv) in plane.iter_mut().zip(xin.iter()) {
                    gs[ci] += *d * xv;
                    gt[ci] += *d;
                    *d *= s[ci];
                }
            }
        }
        for (dst, v) in g.data[self.scale.0].iter_mut().zip(gs) {
            *dst += v;
        }
        for (dst, v) in g.data[self.shift.0].iter_mut().zip(gt) {
            *dst += v;
        }
        dx
    }
}

/// Max pooling; the cache stores the flat argmax of every output cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl MaxPool2d {
    pub fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, Vec<usize>) {
        let (n, c, h, w) = x.dim();
        let oh = out_size(h, self.kernel, self.stride, self.pad);
        let ow = out_size(w, self.kernel, self.stride, self.pad);
        let mut y = Array4::<f64>::zeros((n, c, oh, ow));
        let mut arg = Vec::with_capacity(n * c * oh * ow);
        let xs = x.as_slice().expect("standard layout");
        let ys = y.as_slice_mut().unwrap();
        let mut o = 0;
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = base;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let i = base + iy as usize * w + ix as usize;
                            if xs[i] > best {
                                best = xs[i];
                                best_i = i;
                            }
                        }
                    }
                    ys[o] = best;
                    arg.push(best_i);
                    o += 1;
                }
            }
        }
        (y, arg)
    }

    pub fn backward(&self, input_shape: (usize, usize, usize, usize), arg: &[usize], dy: &Array4<f64>) -> Array4<f64> {
        let mut dx = Array4::<f64>::zeros(input_shape);
        let d = dx.as_slice_mut().unwrap();
        for (&i, &g) in arg.iter().zip(dy.iter()) {
            d[i] += g;
        }
        dx
    }
}

pub fn relu4(x: &mut Array4<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Zero the gradient wherever the forward output was clamped by ReLU.
pub fn relu4_backward(out: &Array4<f64>, dy: &mut Array4<f64>) {
    ndarray::Zip::from(dy).and(out).for_each(|d, &o| {
        if o <= 0.0 {
            *d = 0.0;
        }
    });
}

pub fn global_avg_pool(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let area = (h * w) as f64;
    Array2::from_shape_fn((n, c), |(b, ci)| {
        x.index_axis(Axis(0), b).index_axis(Axis(0), ci).sum() / area
    })
}

pub fn global_avg_pool_backward(shape: (usize, usize, usize, usize), dy: &Array2<f64>) -> Array4<f64> {
    let (n, c, h, w) = shape;
    let area = (h * w) as f64;
    Array4::from_shape_fn((n, c, h, w), |(b, ci, _, _)| dy[[b, ci]] / area)
}

pub fn flatten(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    x.as_standard_layout()
        .to_owned()
        .into_shape_with_order((n, c * h * w))
        .expect("flatten")
}

pub fn unflatten(dy: &Array2<f64>, shape: (usize, usize, usize, usize)) -> Array4<f64> {
    dy.as_standard_layout()
        .to_owned()
        .into_shape_with_order(shape)
        .expect("unflatten")
}
