//! Single-layer LSTM with input, forget, cell and output gates stacked in
//! that order (4 * hidden rows).

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis};
use rand_chacha::ChaCha8Rng;

use super::params::{Grads, ParamId, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Array2::zeros((batch, hidden)),
            c: Array2::zeros((batch, hidden)),
        }
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    tanh_c: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<StepCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Lstm {
    pub fn new(ps: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: ps.add_uniform(format!("{name}.weight_ih"), &[4 * hidden, input], bound, rng),
            w_hh: ps.add_uniform(format!("{name}.weight_hh"), &[4 * hidden, hidden], bound, rng),
            b_ih: ps.add_uniform(format!("{name}.bias_ih"), &[4 * hidden], bound, rng),
            b_hh: ps.add_uniform(format!("{name}.bias_hh"), &[4 * hidden], bound, rng),
            input,
            hidden,
        }
    }

    pub fn num_params(&self) -> usize {
        4 * self.hidden * (self.input + self.hidden) + 8 * self.hidden
    }

    /// Run the sequence `xs` (each (batch, input)); returns the final state.
    pub fn forward(&self, p: &ParamStore, xs: &[Array2<f64>], state: &LstmState) -> (LstmState, LstmCache) {
        let hdim = self.hidden;
        let mut h = state.h.clone();
        let mut c = state.c.clone();
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let mut gates = x.dot(&p.mat(self.w_ih).t());
            general_mat_mul(1.0, &h, &p.mat(self.w_hh).t(), 1.0, &mut gates);
            gates += &p.vec(self.b_ih);
            gates += &p.vec(self.b_hh);
            let i = gates.slice(s![.., 0..hdim]).mapv(sigmoid);
            let f = gates.slice(s![.., hdim..2 * hdim]).mapv(sigmoid);
            let g = gates.slice(s![.., 2 * hdim..3 * hdim]).mapv(f64::tanh);
            let o = gates.slice(s![.., 3 * hdim..4 * hdim]).mapv(sigmoid);
            let c_new = &f * &c + &i * &g;
            let tanh_c = c_new.mapv(f64::tanh);
            let h_new = &o * &tanh_c;
            steps.push(StepCache {
                x: x.clone(),
                h_prev: std::mem::replace(&mut h, h_new),
                c_prev: std::mem::replace(&mut c, c_new),
                i,
                f,
                g,
                o,
                tanh_c,
            });
        }
        (LstmState { h, c }, LstmCache { steps })
    }

    /// Backpropagate a gradient on the final hidden state. Returns the
    /// gradient w.r.t. each input step.
    pub fn backward(&self, p: &ParamStore, cache: &LstmCache, dh_final: &Array2<f64>, g: &mut Grads) -> Vec<Array2<f64>> {
        let hdim = self.hidden;
        let batch = dh_final.nrows();
        let mut dh = dh_final.clone();
        let mut dc = Array2::<f64>::zeros((batch, hdim));
        let mut dxs = vec![Array2::zeros((0, 0)); cache.steps.len()];
        for (t, st) in cache.steps.iter().enumerate().rev() {
            let d_o = &dh * &st.tanh_c;
            dc += &(&dh * &st.o * &st.tanh_c.mapv(|v| 1.0 - v * v));
            let d_i = &dc * &st.g;
            let d_g = &dc * &st.i;
            let d_f = &dc * &st.c_prev;
            let dc_prev = &dc * &st.f;

            let mut dgates = Array2::<f64>::zeros((batch, 4 * hdim));
            dgates
                .slice_mut(s![.., 0..hdim])
                .assign(&(&d_i * &st.i.mapv(|v| v * (1.0 - v))));
            dgates
                .slice_mut(s![.., hdim..2 * hdim])
                .assign(&(&d_f * &st.f.mapv(|v| v * (1.0 - v))));
            dgates
                .slice_mut(s![.., 2 * hdim..3 * hdim])
                .assign(&(&d_g * &st.g.mapv(|v| 1.0 - v * v)));
            dgates
                .slice_mut(s![.., 3 * hdim..4 * hdim])
                .assign(&(&d_o * &st.o.mapv(|v| v * (1.0 - v))));

            general_mat_mul(1.0, &dgates.t(), &st.x, 1.0, &mut g.mat_mut(self.w_ih, 4 * hdim));
            general_mat_mul(1.0, &dgates.t(), &st.h_prev, 1.0, &mut g.mat_mut(self.w_hh, 4 * hdim));
            let db = dgates.sum_axis(Axis(0));
            {
                let mut b = g.vec_mut(self.b_ih);
                b += &db;
            }
            {
                let mut b = g.vec_mut(self.b_hh);
                b += &db;
            }
            dxs[t] = dgates.dot(&p.mat(self.w_ih));
            dh = dgates.dot(&p.mat(self.w_hh));
            dc = dc_prev;
        }
        dxs
    }
}
