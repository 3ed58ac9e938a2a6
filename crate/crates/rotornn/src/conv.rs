//! One-dimensional convolutions over a channels-by-time matrix and the
//! history encoder used by the adaptation module.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::mlp::{Activation, Linear};
use crate::Parameterized;

/// Strided valid convolution. Weights are stored as a matrix with one row
/// per output channel; within a row the layout is window-position-major,
/// i.e. index `kk * in_ch + c`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub gw: DMatrix<f64>,
    pub gb: DVector<f64>,
    pub in_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, rng: &mut impl Rng) -> Self {
        assert!(kernel >= 1 && stride >= 1);
        let fan_in = in_ch * kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            w: DMatrix::from_fn(out_ch, fan_in, |_, _| rng.gen_range(-bound..bound)),
            b: DVector::from_fn(out_ch, |_, _| rng.gen_range(-bound..bound)),
            gw: DMatrix::zeros(out_ch, fan_in),
            gb: DVector::zeros(out_ch),
            in_ch,
            kernel,
            stride,
        }
    }

    pub fn out_len(&self, t_in: usize) -> usize {
        assert!(t_in >= self.kernel, "input shorter than kernel");
        (t_in - self.kernel) / self.stride + 1
    }

    /// Unfold the input into the im2col matrix whose columns are flattened
    /// windows; the convolution is then a single matrix product.
    fn unfold(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let t_out = self.out_len(x.ncols());
        let mut cols = DMatrix::zeros(self.in_ch * self.kernel, t_out);
        for t in 0..t_out {
            for kk in 0..self.kernel {
                let src = x.column(t * self.stride + kk);
                for c in 0..self.in_ch {
                    cols[(kk * self.in_ch + c, t)] = src[c];
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.in_ch);
        let cols = self.unfold(x);
        let mut y = &self.w * cols;
        for mut col in y.column_iter_mut() {
            col += &self.b;
        }
        y
    }

    /// Accumulate gradients and return the input gradient. `dy` is the
    /// gradient at the pre-activation output.
    pub fn backward(&mut self, x: &DMatrix<f64>, dy: &DMatrix<f64>) -> DMatrix<f64> {
        let cols = self.unfold(x);
        self.gw += dy * cols.transpose();
        for col in dy.column_iter() {
            self.gb += col;
        }
        let dcols = self.w.transpose() * dy;
        // Fold the column gradients back onto the (possibly overlapping)
        // input windows.
        let mut dx = DMatrix::zeros(x.nrows(), x.ncols());
        for t in 0..dy.ncols() {
            for kk in 0..self.kernel {
                for c in 0..self.in_ch {
                    dx[(c, t * self.stride + kk)] += dcols[(kk * self.in_ch + c, t)];
                }
            }
        }
        dx
    }
}

impl Parameterized for Conv1d {
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

/// Cache of one [`Conv1d`] + ReLU evaluation.
pub struct ConvCache {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

/// Temporal-convolution encoder mapping a feature-by-time history to a
/// small latent vector: a shared per-step projection, a stack of strided
/// convolutions, and a linear head on the flattened output. All hidden
/// activations are ReLU, the latent output is linear.
#[derive(Debug, Clone)]
pub struct ConvEncoder {
    pub proj: Linear,
    pub convs: Vec<Conv1d>,
    pub head: Linear,
    t_in: usize,
}

/// Intermediate values of a [`ConvEncoder`] forward pass.
pub struct EncoderCache {
    pub input: DMatrix<f64>,
    pub projected: DMatrix<f64>,
    pub conv: Vec<ConvCache>,
    pub flat: DVector<f64>,
    pub z: DVector<f64>,
}

impl EncoderCache {
    pub fn output(&self) -> &DVector<f64> {
        &self.z
    }
}

impl ConvEncoder {
    /// `convs` entries are (out_channels, kernel, stride) applied in order
    /// after projecting each time step from `in_features` to `width`.
    pub fn new(
        in_features: usize,
        t_in: usize,
        width: usize,
        convs: &[(usize, usize, usize)],
        latent: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let proj = Linear::new(in_features, width, rng);
        let mut layers = Vec::new();
        let mut ch = width;
        let mut t = t_in;
        for &(out_ch, kernel, stride) in convs {
            let conv = Conv1d::new(ch, out_ch, kernel, stride, rng);
            t = conv.out_len(t);
            ch = out_ch;
            layers.push(conv);
        }
        let head = Linear::new(ch * t, latent, rng);
        Self {
            proj,
            convs: layers,
            head,
            t_in,
        }
    }

    /// Encoder with the benchmark's dimensions: 12 features over 100 steps
    /// into an 8-dimensional latent.
    pub fn standard(rng: &mut impl Rng) -> Self {
        Self::new(12, 100, 32, &[(32, 8, 4), (32, 5, 1), (32, 5, 1)], 8, rng)
    }

    pub fn t_in(&self) -> usize {
        self.t_in
    }

    pub fn latent_dim(&self) -> usize {
        self.head.n_out()
    }

    pub fn forward(&self, history: &DMatrix<f64>) -> EncoderCache {
        assert_eq!(history.ncols(), self.t_in, "history length mismatch");
        let mut projected = self.proj.forward(history);
        Activation::Relu.apply(&mut projected);

        let mut conv = Vec::with_capacity(self.convs.len());
        let mut cur = projected.clone();
        for layer in &self.convs {
            let mut y = layer.forward(&cur);
            Activation::Relu.apply(&mut y);
            conv.push(ConvCache {
                x: cur,
                y: y.clone(),
            });
            cur = y;
        }

        let flat = DVector::from_column_slice(cur.as_slice());
        let flat_m = DMatrix::from_column_slice(flat.len(), 1, flat.as_slice());
        let z = DVector::from_column_slice(self.head.forward(&flat_m).as_slice());
        EncoderCache {
            input: history.clone(),
            projected,
            conv,
            flat,
            z,
        }
    }

    /// Backpropagate a gradient at the latent output; accumulates into all
    /// layers and returns the gradient at the input history.
    pub fn backward(&mut self, cache: &EncoderCache, dz: &DVector<f64>) -> DMatrix<f64> {
        let dz_m = DMatrix::from_column_slice(dz.len(), 1, dz.as_slice());
        let flat_m = DMatrix::from_column_slice(cache.flat.len(), 1, cache.flat.as_slice());
        let dflat = self.head.backward(&flat_m, &dz_m);

        let last = cache.conv.last().expect("encoder has conv layers");
        let mut dcur = DMatrix::from_column_slice(last.y.nrows(), last.y.ncols(), dflat.as_slice());
        for (layer, cc) in self.convs.iter_mut().zip(&cache.conv).rev() {
            Activation::Relu.backprop(&mut dcur, &cc.y);
            dcur = layer.backward(&cc.x, &dcur);
        }

        let mut dproj = dcur;
        Activation::Relu.backprop(&mut dproj, &cache.projected);
        self.proj.backward(&cache.input, &dproj)
    }
}

impl Parameterized for ConvEncoder {
    fn param_count(&self) -> usize {
        self.proj.param_count()
            + self.convs.iter().map(Conv1d::param_count).sum::<usize>()
            + self.head.param_count()
    }

    fn export_params(&self, out: &mut Vec<f64>) {
        self.proj.export_params(out);
        for c in &self.convs {
            c.export_params(out);
        }
        self.head.export_params(out);
    }

    fn export_grads(&self, out: &mut Vec<f64>) {
        self.proj.export_grads(out);
        for c in &self.convs {
            c.export_grads(out);
        }
        self.head.export_grads(out);
    }

    fn import_params(&mut self, src: &[f64], offset: &mut usize) {
        self.proj.import_params(src, offset);
        for c in &mut self.convs {
            c.import_params(src, offset);
        }
        self.head.import_params(src, offset);
    }

    fn zero_grad(&mut self) {
        self.proj.zero_grad();
        for c in &mut self.convs {
            c.zero_grad();
        }
        self.head.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Naive direct convolution used as the reference implementation.
    fn conv_reference(layer: &Conv1d, x: &DMatrix<f64>) -> DMatrix<f64> {
        let t_out = layer.out_len(x.ncols());
        let out_ch = layer.w.nrows();
        let mut y = DMatrix::zeros(out_ch, t_out);
        for o in 0..out_ch {
            for t in 0..t_out {
                let mut acc = layer.b[o];
                for kk in 0..layer.kernel {
                    for c in 0..layer.in_ch {
                        acc += layer.w[(o, kk * layer.in_ch + c)]
                            * x[(c, t * layer.stride + kk)];
                    }
                }
                y[(o, t)] = acc;
            }
        }
        y
    }

    #[test]
    fn im2col_convolution_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (in_ch, out_ch, kernel, stride, t) in
            [(1, 1, 1, 1, 4), (3, 2, 3, 2, 11), (4, 5, 8, 4, 100), (2, 2, 5, 1, 20)]
        {
            let layer = Conv1d::new(in_ch, out_ch, kernel, stride, &mut rng);
            let x = DMatrix::from_fn(in_ch, t, |_, _| rng.gen_range(-1.0..1.0));
            let fast = layer.forward(&x);
            let slow = conv_reference(&layer, &x);
            assert_relative_eq!((fast - slow).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn standard_encoder_has_expected_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let enc = ConvEncoder::standard(&mut rng);
        // 100 -> 24 -> 20 -> 16 time steps at 32 channels, then 512 -> 8.
        assert_eq!(enc.head.n_in(), 512);
        assert_eq!(enc.latent_dim(), 8);
        let h = DMatrix::from_fn(12, 100, |r, c| ((r + c) as f64 * 0.11).sin());
        let cache = enc.forward(&h);
        assert_eq!(cache.z.len(), 8);
        assert!(cache.z.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn stride_one_kernel_one_is_a_pointwise_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layer = Conv1d::new(3, 2, 1, 1, &mut rng);
        let x = DMatrix::from_fn(3, 6, |_, _| rng.gen_range(-2.0..2.0));
        let y = layer.forward(&x);
        for t in 0..6 {
            for o in 0..2 {
                let mut acc = layer.b[o];
                for c in 0..3 {
                    acc += layer.w[(o, c)] * x[(c, t)];
                }
                assert_relative_eq!(y[(o, t)], acc, epsilon = 1e-14);
            }
        }
    }
}
