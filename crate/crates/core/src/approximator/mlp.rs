use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, Mat, SeededRng};

/// Fully-connected network: ReLU on hidden layers, identity on the output.
///
/// `weights[l]` is `fan_out x fan_in`, so a forward pass is one dot product
/// per output unit. The same type doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Mat>,
    biases: Vec<Vec<f64>>,
}

/// Layer inputs recorded by [`Mlp::forward_batch`], consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the (post-activation) input of layer `l`; `inputs[0]` is the batch.
    inputs: Vec<Mat>,
    output: Mat,
}

impl ForwardCache {
    pub fn output(&self) -> &Mat {
        &self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.rows()
    }

    pub fn input(&self) -> &Mat {
        &self.inputs[0]
    }
}

impl Mlp {
    /// All-zero network. `sizes` lists input, hidden, and output widths.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid(format!("bad layer sizes {sizes:?}")));
        }
        let weights = sizes.windows(2).map(|w| Mat::zeros(w[1], w[0])).collect();
        let biases = sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self { sizes: sizes.to_vec(), weights, biases })
    }

    /// He-style uniform init: weights in `±sqrt(6 / fan_in)`, biases in `±1/sqrt(fan_in)`.
    pub fn he_uniform(sizes: &[usize], rng: &mut SeededRng) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for (w, b) in net.weights.iter_mut().zip(&mut net.biases) {
            let fan_in = w.cols() as f64;
            let wb = (6.0 / fan_in).sqrt();
            let bb = 1.0 / fan_in.sqrt();
            w.data_mut().iter_mut().for_each(|v| *v = rng.uniform_range(-wb, wb));
            b.iter_mut().for_each(|v| *v = rng.uniform_range(-bb, bb));
        }
        Ok(net)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.sizes).expect("sizes already validated")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, layer: usize) -> &Mat {
        &self.weights[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Mat {
        &mut self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    /// `Σ (fan_in + 1) * fan_out`
    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// Parameter blocks in declaration order: `W0, b0, W1, b1, ...`.
    pub fn param_slices(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w.data(), b.as_slice()])
    }

    pub fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.data_mut(), b.as_mut_slice()])
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.param_slices().for_each(|s| out.extend_from_slice(s));
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension { what: "flat params", expected: self.param_count(), got: flat.len() });
        }
        let mut off = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.param_slices_mut().for_each(|s| s.iter_mut().for_each(|v| *v = value));
    }

    /// `self += alpha * other` over all parameters.
    pub fn add_scaled(&mut self, alpha: f64, other: &Mlp) {
        debug_assert_eq!(self.sizes, other.sizes);
        for (d, s) in self.param_slices_mut().zip(other.param_slices()) {
            axpy(alpha, s, d);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Single-input forward pass returning every output unit. Shares the batch
    /// kernel so single and batched outputs agree bit for bit.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension { what: "mlp input", expected: self.input_dim(), got: x.len() });
        }
        let xs = Mat::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.predict_batch(&xs)?.into_data())
    }

    /// Scalar-output forward pass.
    pub fn forward_scalar(&self, x: &[f64]) -> Result<f64> {
        if self.output_dim() != 1 {
            return Err(Error::Dimension { what: "scalar mlp output", expected: 1, got: self.output_dim() });
        }
        Ok(self.forward(x)?[0])
    }

    /// Forward pass over a batch (one row per example), keeping activations.
    pub fn forward_batch(&self, xs: &Mat) -> Result<ForwardCache> {
        if xs.cols() != self.input_dim() {
            return Err(Error::Dimension { what: "mlp batch input", expected: self.input_dim(), got: xs.cols() });
        }
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut h = xs.clone();
        let last = self.num_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut out = Mat::zeros(h.rows(), w.rows());
            for r in 0..h.rows() {
                out.row_mut(r).copy_from_slice(b);
            }
            // out += h · Wᵀ
            gemm(&h, false, w, true, 1.0, &mut out);
            if l < last {
                out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut h, out));
        }
        Ok(ForwardCache { inputs, output: h })
    }

    /// Output-only batch forward.
    pub fn predict_batch(&self, xs: &Mat) -> Result<Mat> {
        Ok(self.forward_batch(xs)?.output)
    }

    /// Reverse-mode pass. `upstream` is `B x out` (dLoss/dOutput); parameter
    /// gradients are accumulated into `grads`. Returns dLoss/dInput when
    /// `want_input` is set.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        upstream: &Mat,
        grads: &mut Mlp,
        want_input: bool,
    ) -> Option<Mat> {
        self.backprop(cache, upstream, Some(grads), want_input)
    }

    /// Gradient of `Σ upstream ⊙ output` with respect to the batch input only.
    pub fn input_gradient_batch(&self, cache: &ForwardCache, upstream: &Mat) -> Mat {
        self.backprop(cache, upstream, None, true).expect("input gradient requested")
    }

    fn backprop(&self, cache: &ForwardCache, upstream: &Mat, mut grads: Option<&mut Mlp>, want_input: bool) -> Option<Mat> {
        debug_assert_eq!(upstream.rows(), cache.batch_size());
        debug_assert_eq!(upstream.cols(), self.output_dim());
        let mut delta = upstream.clone();
        for l in (0..self.num_layers()).rev() {
            let x = &cache.inputs[l];
            let w = &self.weights[l];
            if let Some(g) = grads.as_deref_mut() {
                // gW += δᵀ · x
                gemm(&delta, true, x, false, 1.0, &mut g.weights[l]);
                let gb = &mut g.biases[l];
                for r in 0..delta.rows() {
                    axpy(1.0, delta.row(r), gb);
                }
            }
            if l == 0 && !want_input {
                return None;
            }
            let mut prev = Mat::zeros(delta.rows(), w.cols());
            gemm(&delta, false, w, false, 1.0, &mut prev);
            if l > 0 {
                // ReLU gate: the layer input is the previous activation.
                for (p, &a) in prev.data_mut().iter_mut().zip(x.data()) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Some(delta)
    }

    /// Gradient of the (scalar) output at `x`, scaled by `upstream`.
    pub fn backward(&self, x: &[f64], upstream: f64) -> Result<Mlp> {
        let xs = Mat::from_vec(1, x.len(), x.to_vec())?;
        let cache = self.forward_batch(&xs)?;
        let up = Mat::from_vec(1, self.output_dim(), vec![upstream; self.output_dim()])?;
        let mut g = self.zeros_like();
        self.backward_batch(&cache, &up, &mut g, false);
        Ok(g)
    }

    /// Sum of squared weights (biases excluded), for L2 regularization.
    pub fn weight_sq_norm(&self) -> f64 {
        self.weights.iter().map(|w| dot(w.data(), w.data())).sum()
    }

    /// `grads.W += 2 * scale * W`
    pub fn add_l2_grad(&self, scale: f64, grads: &mut Mlp) {
        for (g, w) in grads.weights.iter_mut().zip(&self.weights) {
            axpy(2.0 * scale, w.data(), g.data_mut());
        }
    }
}

/// `c += alpha · op(a) · op(b)` where `op` optionally transposes.
fn gemm(a: &Mat, ta: bool, b: &Mat, tb: bool, alpha: f64, c: &mut Mat) {
    let (m, k) = if ta { (a.cols(), a.rows()) } else { (a.rows(), a.cols()) };
    let n = if tb { b.rows() } else { b.cols() };
    assert_eq!(if tb { b.cols() } else { b.rows() }, k);
    assert_eq!((c.rows(), c.cols()), (m, n));
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, a.cols() as isize) } else { (a.cols() as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols() as isize) } else { (b.cols() as isize, 1) };
    let ldc = c.cols() as isize;
    // SAFETY: strides and extents describe the row-major buffers checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data().as_ptr(),
            rsa,
            csa,
            b.data().as_ptr(),
            rsb,
            csb,
            1.0,
            c.data_mut().as_mut_ptr(),
            ldc,
            1,
        );
    }
}
