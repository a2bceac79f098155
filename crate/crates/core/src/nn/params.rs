use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Flat, ordered collection of named parameter arrays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> ParamId {
        let n: usize = shape.iter().product();
        assert_eq!(n, data.len(), "parameter data does not match shape");
        self.params.push(Param {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        });
        ParamId(self.params.len() - 1)
    }

    /// Uniform(-bound, bound) initialization.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        bound: f64,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.add(name, shape, data)
    }

    pub fn add_const(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> ParamId {
        let n: usize = shape.iter().product();
        self.add(name, shape, vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn vec(&self, id: ParamId) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[id.0].data[..])
    }

    pub fn mat(&self, id: ParamId) -> ArrayView2<'_, f64> {
        let p = &self.params[id.0];
        let rows = p.shape[0];
        let cols = p.data.len() / rows.max(1);
        ArrayView2::from_shape((rows, cols), &p.data[..]).expect("contiguous parameter")
    }

    pub fn zeros_like(&self) -> Grads {
        Grads {
            data: self.params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }
}

/// Gradient buffers laid out like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id.0]
    }

    pub fn vec_mut(&mut self, id: ParamId) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(&mut self.data[id.0][..])
    }

    /// Mutable matrix view with the same row count as the parameter.
    pub fn mat_mut(&mut self, id: ParamId, rows: usize) -> ArrayViewMut2<'_, f64> {
        let buf = &mut self.data[id.0];
        let cols = buf.len() / rows.max(1);
        ArrayViewMut2::from_shape((rows, cols), &mut buf[..]).expect("contiguous gradient")
    }

    pub fn zero(&mut self) {
        for g in &mut self.data {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().flatten().all(|x| x.is_finite())
    }

    pub fn scale(&mut self, k: f64) {
        for g in &mut self.data {
            g.iter_mut().for_each(|x| *x *= k);
        }
    }
}
