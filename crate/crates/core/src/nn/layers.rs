//! Convolution and fully-connected layers with batched forward and backward kernels.
//!
//! Batches are row-major matrices: one row per sample, each row holding the sample's
//! `[channels, spatial...]` block flattened row-major.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::linalg::gemm;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const KERNEL_WIDTH: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, values: &mut [f64]) {
        if self == Activation::Relu {
            values.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }

    /// Turns a gradient w.r.t. the activated output into one w.r.t. the pre-activation.
    fn mask(self, grad: &mut [f64], output: &[f64]) {
        if self == Activation::Relu {
            for (g, &y) in grad.iter_mut().zip(output) {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }
}

/// 1D or 2D convolution with a 3-wide kernel, zero padding of width 1 and ReLU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub rank: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out, in, 3]` for rank 1, `[out, in, 3, 3]` for rank 2.
    pub kernel: Tensor,
    pub bias: Tensor,
    pub frozen: bool,
}

impl ConvLayer {
    pub fn zeros(rank: usize, in_channels: usize, out_channels: usize) -> Result<Self> {
        if !(1..=2).contains(&rank) {
            return Err(Error::InvalidInput(format!("convolution rank must be 1 or 2, got {rank}")));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidInput("channel counts must be positive".into()));
        }
        let mut shape = vec![out_channels, in_channels];
        shape.extend(std::iter::repeat_n(KERNEL_WIDTH, rank));
        Ok(Self {
            rank,
            in_channels,
            out_channels,
            kernel: Tensor::zeros(shape),
            bias: Tensor::zeros(vec![out_channels]),
            frozen: false,
        })
    }

    /// He-scaled normal kernel, zero bias.
    pub fn he_init(&mut self, rng: &mut impl Rng) {
        let fan_in = self.in_channels * self.taps();
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
        for w in self.kernel.data_mut() {
            *w = normal.sample(rng);
        }
        self.bias.data_mut().fill(0.0);
    }

    fn taps(&self) -> usize {
        KERNEL_WIDTH.pow(self.rank as u32)
    }

    pub fn param_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }

    /// (dy, dx) offset of every kernel tap, in kernel storage order.
    fn offsets(&self) -> Vec<(isize, isize)> {
        if self.rank == 1 {
            vec![(0, -1), (0, 0), (0, 1)]
        } else {
            (-1..=1).flat_map(|dy| (-1..=1).map(move |dx| (dy, dx))).collect()
        }
    }

    /// Spatial extents as (rows, cols); rank 1 is a single row.
    pub(crate) fn plane(&self, spatial: &[usize]) -> (usize, usize) {
        if self.rank == 1 {
            (1, spatial[0])
        } else {
            (spatial[0], spatial[1])
        }
    }

    /// Pre-activation for one sample, written into `out` (`out_channels * h * w`).
    fn correlate(&self, input: &[f64], h: usize, w: usize, out: &mut [f64]) {
        let plane = h * w;
        let offsets = self.offsets();
        let kernel = self.kernel.data();
        let taps = offsets.len();
        for o in 0..self.out_channels {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.fill(self.bias.data()[o]);
            for c in 0..self.in_channels {
                let src = &input[c * plane..(c + 1) * plane];
                for (t, &(dy, dx)) in offsets.iter().enumerate() {
                    let wt = kernel[(o * self.in_channels + c) * taps + t];
                    if wt == 0.0 {
                        continue;
                    }
                    for_each_overlap(h, w, dy, dx, |dst_start, src_start, len| {
                        let d = &mut dst[dst_start..dst_start + len];
                        let s = &src[src_start..src_start + len];
                        for (a, &b) in d.iter_mut().zip(s) {
                            *a += wt * b;
                        }
                    });
                }
            }
        }
    }

    /// Batched forward: `input` is `batch x (in_channels * plane)`.
    pub(crate) fn forward_batch(&self, input: &[f64], batch: usize, spatial: &[usize]) -> Vec<f64> {
        let (h, w) = self.plane(spatial);
        let in_len = self.in_channels * h * w;
        let out_len = self.out_channels * h * w;
        let mut out = vec![0.0; batch * out_len];
        for b in 0..batch {
            let dst = &mut out[b * out_len..(b + 1) * out_len];
            self.correlate(&input[b * in_len..(b + 1) * in_len], h, w, dst);
            Activation::Relu.apply(dst);
        }
        out
    }

    /// Batched backward. `grad_out` is the gradient w.r.t. this layer's activated output and
    /// is masked in place. Accumulates into `grad_kernel`/`grad_bias` when given, and returns
    /// the gradient w.r.t. the input when `want_input` is set.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_batch(
        &self,
        input: &[f64],
        output: &[f64],
        grad_out: &mut [f64],
        batch: usize,
        spatial: &[usize],
        mut grads: Option<(&mut [f64], &mut [f64])>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let (h, w) = self.plane(spatial);
        let plane = h * w;
        let in_len = self.in_channels * plane;
        let out_len = self.out_channels * plane;
        Activation::Relu.mask(grad_out, output);
        let offsets = self.offsets();
        let taps = offsets.len();
        let kernel = self.kernel.data();
        let mut grad_in = want_input.then(|| vec![0.0; batch * in_len]);
        for b in 0..batch {
            let x = &input[b * in_len..(b + 1) * in_len];
            let g = &grad_out[b * out_len..(b + 1) * out_len];
            for o in 0..self.out_channels {
                let go = &g[o * plane..(o + 1) * plane];
                if let Some((_, gb)) = grads.as_mut() {
                    gb[o] += go.iter().sum::<f64>();
                }
                for c in 0..self.in_channels {
                    let xc = &x[c * plane..(c + 1) * plane];
                    for (t, &(dy, dx)) in offsets.iter().enumerate() {
                        let widx = (o * self.in_channels + c) * taps + t;
                        if let Some((gk, _)) = grads.as_mut() {
                            let mut acc = 0.0;
                            for_each_overlap(h, w, dy, dx, |ds, ss, len| {
                                acc += go[ds..ds + len]
                                    .iter()
                                    .zip(&xc[ss..ss + len])
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>();
                            });
                            gk[widx] += acc;
                        }
                        if let Some(gi) = grad_in.as_mut() {
                            let wt = kernel[widx];
                            let gic = &mut gi[b * in_len + c * plane..b * in_len + (c + 1) * plane];
                            for_each_overlap(h, w, dy, dx, |ds, ss, len| {
                                for (a, &gv) in gic[ss..ss + len].iter_mut().zip(&go[ds..ds + len]) {
                                    *a += wt * gv;
                                }
                            });
                        }
                    }
                }
            }
        }
        grad_in
    }
}

/// Calls `f(dst_start, src_start, len)` for every row segment where output pixel
/// `(y, x)` reads input pixel `(y + dy, x + dx)` inside the `h x w` plane.
fn for_each_overlap(h: usize, w: usize, dy: isize, dx: isize, mut f: impl FnMut(usize, usize, usize)) {
    let x_lo = (-dx).max(0) as usize;
    let x_hi = (w as isize - dx.max(0)).max(0) as usize;
    if x_hi <= x_lo {
        return;
    }
    let y_lo = (-dy).max(0) as usize;
    let y_hi = (h as isize - dy.max(0)).max(0) as usize;
    for y in y_lo..y_hi {
        let sy = (y as isize + dy) as usize;
        let sx = (x_lo as isize + dx) as usize;
        f(y * w + x_lo, sy * w + sx, x_hi - x_lo);
    }
}

/// Forward pass of a single convolution layer on one `[in_channels, spatial...]` input.
pub fn conv_forward(layer: &ConvLayer, input: &Tensor) -> Result<Tensor> {
    let shape = input.shape();
    if shape.len() != layer.rank + 1 {
        return Err(Error::Shape(format!(
            "rank-{} convolution expects {} input axes, got {:?}",
            layer.rank,
            layer.rank + 1,
            shape
        )));
    }
    if shape[0] != layer.in_channels {
        return Err(Error::Shape(format!(
            "convolution expects {} input channels, got {}",
            layer.in_channels, shape[0]
        )));
    }
    let out = layer.forward_batch(input.data(), 1, &shape[1..]);
    let mut out_shape = shape.to_vec();
    out_shape[0] = layer.out_channels;
    Tensor::new(out_shape, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `[n_out, n_in]`.
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
    pub frozen: bool,
}

impl DenseLayer {
    pub fn zeros(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self {
            weights: Tensor::zeros(vec![n_out, n_in]),
            bias: Tensor::zeros(vec![n_out]),
            activation,
            frozen: false,
        }
    }

    pub fn n_in(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn n_out(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// He-normal for ReLU layers, Xavier-normal for linear ones; zero bias.
    pub fn init(&mut self, rng: &mut impl Rng) {
        let (n_in, n_out) = (self.n_in() as f64, self.n_out() as f64);
        let std = match self.activation {
            Activation::Relu => (2.0 / n_in).sqrt(),
            Activation::Linear => (2.0 / (n_in + n_out)).sqrt(),
        };
        let normal = Normal::new(0.0, std).expect("valid std");
        for w in self.weights.data_mut() {
            *w = normal.sample(rng);
        }
        self.bias.data_mut().fill(0.0);
    }

    pub(crate) fn forward_batch(&self, input: &[f64], batch: usize) -> Vec<f64> {
        let (n_in, n_out) = (self.n_in(), self.n_out());
        let mut out = vec![0.0; batch * n_out];
        gemm(batch, n_in, n_out, input, false, self.weights.data(), true, &mut out, false);
        for row in out.chunks_exact_mut(n_out) {
            for (y, &b) in row.iter_mut().zip(self.bias.data()) {
                *y += b;
            }
            self.activation.apply(row);
        }
        out
    }

    pub(crate) fn backward_batch(
        &self,
        input: &[f64],
        output: &[f64],
        grad_out: &mut [f64],
        batch: usize,
        grads: Option<(&mut [f64], &mut [f64])>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let (n_in, n_out) = (self.n_in(), self.n_out());
        self.activation.mask(grad_out, output);
        if let Some((gw, gb)) = grads {
            gemm(n_out, batch, n_in, grad_out, true, input, false, gw, true);
            for row in grad_out.chunks_exact(n_out) {
                for (a, &g) in gb.iter_mut().zip(row) {
                    *a += g;
                }
            }
        }
        want_input.then(|| {
            let mut gi = vec![0.0; batch * n_in];
            gemm(batch, n_out, n_in, grad_out, false, self.weights.data(), false, &mut gi, false);
            gi
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv1(kernel: [f64; 3], bias: f64) -> ConvLayer {
        let mut layer = ConvLayer::zeros(1, 1, 1).unwrap();
        layer.kernel.data_mut().copy_from_slice(&kernel);
        layer.bias.data_mut()[0] = bias;
        layer
    }

    fn input(values: &[f64]) -> Tensor {
        Tensor::new(vec![1, values.len()], values.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let out = conv_forward(&conv1([0.0, 1.0, 0.0], 0.0), &input(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn box_kernel_zero_padding() {
        // [0+1+2, 1+2+3, 2+3+0]
        let out = conv_forward(&conv1([1.0, 1.0, 1.0], 0.0), &input(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out.data(), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn negative_bias_clamps() {
        let out = conv_forward(&conv1([0.0, 1.0, 0.0], -10.0), &input(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn is_cross_correlation() {
        // kernel [1, 0, 0] reads the left neighbour
        let out = conv_forward(&conv1([1.0, 0.0, 0.0], 0.0), &input(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn rejects_wrong_channels_and_rank() {
        let layer = conv1([0.0, 1.0, 0.0], 0.0);
        let two_channels = Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap();
        assert!(matches!(conv_forward(&layer, &two_channels), Err(Error::Shape(_))));
        let rank2 = Tensor::new(vec![1, 2, 2], vec![0.0; 4]).unwrap();
        assert!(matches!(conv_forward(&layer, &rank2), Err(Error::Shape(_))));
        assert!(ConvLayer::zeros(3, 1, 1).is_err());
    }

    #[test]
    fn rank2_matches_hand_correlation() {
        let mut layer = ConvLayer::zeros(2, 1, 1).unwrap();
        // 5-point Laplacian stencil
        layer.kernel.data_mut().copy_from_slice(&[0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0]);
        layer.bias.data_mut()[0] = 100.0;
        let x: Vec<f64> = (0..12).map(|i| (i * i) as f64).collect();
        let t = Tensor::new(vec![1, 3, 4], x.clone()).unwrap();
        let out = conv_forward(&layer, &t).unwrap();
        let at = |r: isize, c: isize| {
            if (0..3).contains(&r) && (0..4).contains(&c) {
                x[(r * 4 + c) as usize]
            } else {
                0.0
            }
        };
        for r in 0..3isize {
            for c in 0..4isize {
                let want = at(r - 1, c) + at(r + 1, c) + at(r, c - 1) + at(r, c + 1) - 4.0 * at(r, c) + 100.0;
                assert_eq!(out.data()[(r * 4 + c) as usize], want.max(0.0));
            }
        }
    }

    #[test]
    fn zero_padding_preserves_shape() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::SeedableRng;
        for rank in 1..=2 {
            for cin in 1..=4 {
                for cout in 1..=4 {
                    let mut layer = ConvLayer::zeros(rank, cin, cout).unwrap();
                    layer.he_init(&mut rng);
                    let mut shape = vec![cin, 5];
                    if rank == 2 {
                        shape.push(3);
                    }
                    let n = shape.iter().product();
                    let t = Tensor::new(shape.clone(), vec![0.5; n]).unwrap();
                    let out = conv_forward(&layer, &t).unwrap();
                    assert_eq!(&out.shape()[1..], &shape[1..]);
                    assert_eq!(out.shape()[0], cout);
                    assert!(out.is_finite());
                }
            }
        }
    }
}
