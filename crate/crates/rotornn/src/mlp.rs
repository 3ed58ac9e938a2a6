//! Dense layers and multi-layer perceptrons.
//!
//! Batches are matrices with one sample per column, which matches
//! nalgebra's column-major storage.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::Parameterized;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    pub(crate) fn apply(&self, m: &mut DMatrix<f64>) {
        match self {
            Activation::Tanh => m.apply(|v| *v = v.tanh()),
            Activation::Relu => m.apply(|v| *v = v.max(0.0)),
            Activation::Linear => {}
        }
    }

    /// Multiply `dy` in place by the activation derivative, expressed
    /// through the post-activation output.
    pub(crate) fn backprop(&self, dy: &mut DMatrix<f64>, y: &DMatrix<f64>) {
        match self {
            Activation::Tanh => dy.zip_apply(y, |d, yv| *d *= 1.0 - yv * yv),
            Activation::Relu => dy.zip_apply(y, |d, yv| {
                if yv <= 0.0 {
                    *d = 0.0;
                }
            }),
            Activation::Linear => {}
        }
    }
}

/// Fully connected layer with gradient accumulators.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub gw: DMatrix<f64>,
    pub gb: DVector<f64>,
}

impl Linear {
    /// Uniform fan-in initialization: U[-1/sqrt(n_in), 1/sqrt(n_in)].
    pub fn new(n_in: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        Self {
            w: DMatrix::from_fn(n_out, n_in, |_, _| rng.gen_range(-bound..bound)),
            b: DVector::from_fn(n_out, |_, _| rng.gen_range(-bound..bound)),
            gw: DMatrix::zeros(n_out, n_in),
            gb: DVector::zeros(n_out),
        }
    }

    pub fn n_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.w.nrows()
    }

    /// Shrink this layer's initial weights, used on action heads so the
    /// untrained policy starts near the middle of its squashed range.
    pub fn scale_init(&mut self, factor: f64) {
        self.w *= factor;
        self.b *= factor;
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = &self.w * x;
        for mut col in y.column_iter_mut() {
            col += &self.b;
        }
        y
    }

    /// Accumulate parameter gradients for this layer and return the
    /// gradient with respect to the input. `dy` must be the gradient at
    /// the pre-activation output.
    pub fn backward(&mut self, x: &DMatrix<f64>, dy: &DMatrix<f64>) -> DMatrix<f64> {
        self.gw += dy * x.transpose();
        for col in dy.column_iter() {
            self.gb += col;
        }
        self.w.transpose() * dy
    }
}

impl Parameterized for Linear {
    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    fn export_params(&self, out: &mut Vec<f64>) {
        out.extend(self.w.iter());
        out.extend(self.b.iter());
    }

    fn export_grads(&self, out: &mut Vec<f64>) {
        out.extend(self.gw.iter());
        out.extend(self.gb.iter());
    }

    fn import_params(&mut self, src: &[f64], offset: &mut usize) {
        for v in self.w.iter_mut() {
            *v = src[*offset];
            *offset += 1;
        }
        for v in self.b.iter_mut() {
            *v = src[*offset];
            *offset += 1;
        }
    }

    fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }
}

/// Intermediate values of one MLP forward pass: layer inputs and
/// post-activation outputs, needed by the backward pass.
pub struct MlpCache {
    ys: Vec<DMatrix<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.ys.last().expect("cache of a forward pass is never empty")
    }
}

/// Plain feed-forward network.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub acts: Vec<Activation>,
}

impl Mlp {
    /// `dims = [in, h1, ..., out]` with tanh hidden layers and the given
    /// output activation.
    pub fn new(dims: &[usize], out_act: Activation, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::new();
        let mut acts = Vec::new();
        for i in 0..dims.len() - 1 {
            layers.push(Linear::new(dims[i], dims[i + 1], rng));
            acts.push(if i + 2 == dims.len() {
                out_act
            } else {
                Activation::Tanh
            });
        }
        Self { layers, acts }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().expect("no layers").n_out()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> MlpCache {
        let mut ys = Vec::with_capacity(self.layers.len() + 1);
        ys.push(x.clone());
        for (layer, act) in self.layers.iter().zip(&self.acts) {
            let mut y = layer.forward(ys.last().expect("nonempty"));
            act.apply(&mut y);
            ys.push(y);
        }
        MlpCache { ys }
    }

    /// Convenience single-sample forward without keeping the cache.
    pub fn infer(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let cache = self.forward(&m);
        DVector::from_column_slice(cache.output().as_slice())
    }

    /// Accumulate gradients from `dy` (gradient at the network output) and
    /// return the gradient at the input.
    pub fn backward(&mut self, cache: &MlpCache, dy: &DMatrix<f64>) -> DMatrix<f64> {
        let mut grad = dy.clone();
        for i in (0..self.layers.len()).rev() {
            self.acts[i].backprop(&mut grad, &cache.ys[i + 1]);
            grad = self.layers[i].backward(&cache.ys[i], &grad);
        }
        grad
    }
}

impl Parameterized for Mlp {
    fn param_count(&self) -> usize {
        self.layers.iter().map(Linear::param_count).sum()
    }

    fn export_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            l.export_params(out);
        }
    }

    fn export_grads(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            l.export_grads(out);
        }
    }

    fn import_params(&mut self, src: &[f64], offset: &mut usize) {
        for l in &mut self.layers {
            l.import_params(src, offset);
        }
    }

    fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.zero_grad();
        }
    }
}
