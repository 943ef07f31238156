//! The error-map network: convolution stack, flatten, parameter concatenation,
//! fully-connected stack and a linear head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, ConvLayer, DenseLayer};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Architecture description used to build a fresh network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// `[channels, spatial...]` with one or two spatial axes.
    pub input_shape: Vec<usize>,
    pub z_dim: usize,
    pub n_cnn: usize,
    pub filters_first_layer: usize,
    pub n_fc: usize,
    pub fc_width: usize,
}

impl Architecture {
    pub fn new(input_shape: Vec<usize>, z_dim: usize) -> Self {
        Self { input_shape, z_dim, n_cnn: 2, filters_first_layer: 4, n_fc: 1, fc_width: 16 }
    }
}

/// Identifies a layer inside an [`ErrorMapNetwork`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerId {
    Conv(usize),
    Dense(usize),
    Head,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMapNetwork {
    pub input_shape: Vec<usize>,
    pub z_dim: usize,
    /// Fixed affine normalization applied to z before concatenation: `(z - shift) / scale`.
    pub z_shift: Vec<f64>,
    pub z_scale: Vec<f64>,
    pub filters_first_layer: usize,
    pub conv_layers: Vec<ConvLayer>,
    pub fc_layers: Vec<DenseLayer>,
    pub output_layer: DenseLayer,
}

/// Per-stage activations of a batched forward pass.
pub(crate) struct Trace {
    pub batch: usize,
    /// `acts[s]` is the input of stage `s`; the last entry is the network output.
    pub acts: Vec<Vec<f64>>,
}

impl ErrorMapNetwork {
    /// Builds a network with He-normal hidden layers drawn from `seed` and a zero head.
    pub fn new(arch: &Architecture, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        net.init(seed);
        Ok(net)
    }

    /// Same architecture as [`ErrorMapNetwork::new`] with every parameter zero.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        let shape = &arch.input_shape;
        if !(2..=3).contains(&shape.len()) || shape.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "input shape must be [channels, n] or [channels, h, w], got {shape:?}"
            )));
        }
        if arch.n_cnn > 0 && arch.filters_first_layer == 0 {
            return Err(Error::InvalidInput("filters_first_layer must be positive".into()));
        }
        if arch.n_fc > 0 && arch.fc_width == 0 {
            return Err(Error::InvalidInput("fc_width must be positive".into()));
        }
        let rank = shape.len() - 1;
        let plane: usize = shape[1..].iter().product();
        let mut conv_layers = Vec::with_capacity(arch.n_cnn);
        let mut channels = shape[0];
        for j in 0..arch.n_cnn {
            let out = arch.filters_first_layer << j;
            conv_layers.push(ConvLayer::zeros(rank, channels, out)?);
            channels = out;
        }
        let mut width = channels * plane + arch.z_dim;
        let mut fc_layers = Vec::with_capacity(arch.n_fc);
        for _ in 0..arch.n_fc {
            fc_layers.push(DenseLayer::zeros(width, arch.fc_width, Activation::Relu));
            width = arch.fc_width;
        }
        let out_len: usize = shape.iter().product();
        Ok(Self {
            input_shape: shape.clone(),
            z_dim: arch.z_dim,
            z_shift: vec![0.0; arch.z_dim],
            z_scale: vec![1.0; arch.z_dim],
            filters_first_layer: arch.filters_first_layer,
            conv_layers,
            fc_layers,
            output_layer: DenseLayer::zeros(width, out_len, Activation::Linear),
        })
    }

    fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.conv_layers {
            layer.he_init(&mut rng);
        }
        for layer in &mut self.fc_layers {
            layer.init(&mut rng);
        }
        // the head stays zero: an untrained map predicts no correction, and small training
        // sets are not left fitting around a random initial function
    }

    /// Sets the z normalization so that the box `[lower, upper]` maps onto `[-1, 1]`.
    pub fn set_z_domain(&mut self, lower: &[f64], upper: &[f64]) {
        self.z_shift = lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect();
        self.z_scale = lower.iter().zip(upper).map(|(a, b)| 0.5 * (b - a)).collect();
    }

    pub fn field_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    fn spatial(&self) -> &[usize] {
        &self.input_shape[1..]
    }

    fn conv_out_len(&self) -> usize {
        let channels = self.conv_layers.last().map_or(self.input_shape[0], |l| l.out_channels);
        channels * self.spatial().iter().product::<usize>()
    }

    pub fn layer_ids(&self) -> Vec<LayerId> {
        (0..self.conv_layers.len())
            .map(LayerId::Conv)
            .chain((0..self.fc_layers.len()).map(LayerId::Dense))
            .chain(std::iter::once(LayerId::Head))
            .collect()
    }

    pub fn is_frozen(&self, id: LayerId) -> bool {
        match id {
            LayerId::Conv(j) => self.conv_layers[j].frozen,
            LayerId::Dense(j) => self.fc_layers[j].frozen,
            LayerId::Head => self.output_layer.frozen,
        }
    }

    /// Weight and bias blocks of a layer.
    pub fn blocks(&self, id: LayerId) -> (&Tensor, &Tensor) {
        match id {
            LayerId::Conv(j) => (&self.conv_layers[j].kernel, &self.conv_layers[j].bias),
            LayerId::Dense(j) => (&self.fc_layers[j].weights, &self.fc_layers[j].bias),
            LayerId::Head => (&self.output_layer.weights, &self.output_layer.bias),
        }
    }

    pub fn blocks_mut(&mut self, id: LayerId) -> (&mut Tensor, &mut Tensor) {
        match id {
            LayerId::Conv(j) => {
                let l = &mut self.conv_layers[j];
                (&mut l.kernel, &mut l.bias)
            }
            LayerId::Dense(j) => {
                let l = &mut self.fc_layers[j];
                (&mut l.weights, &mut l.bias)
            }
            LayerId::Head => (&mut self.output_layer.weights, &mut self.output_layer.bias),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layer_ids()
            .into_iter()
            .map(|id| {
                let (w, b) = self.blocks(id);
                w.len() + b.len()
            })
            .sum()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.layer_ids()
            .into_iter()
            .filter(|&id| !self.is_frozen(id))
            .map(|id| {
                let (w, b) = self.blocks(id);
                w.len() + b.len()
            })
            .sum()
    }

    /// Sum of squared weights (biases excluded) over trainable layers.
    pub fn trainable_weight_norm_sq(&self) -> f64 {
        self.layer_ids()
            .into_iter()
            .filter(|&id| !self.is_frozen(id))
            .map(|id| self.blocks(id).0.sum_squares())
            .sum()
    }

    /// Marks every layer frozen.
    pub fn freeze_all(&mut self) {
        self.conv_layers.iter_mut().for_each(|l| l.frozen = true);
        self.fc_layers.iter_mut().for_each(|l| l.frozen = true);
        self.output_layer.frozen = true;
    }

    /// Turns the current head into a frozen hidden layer and appends one trainable ReLU layer
    /// of width `n_new` followed by a zero-initialized linear head.
    pub fn append_fc_layer(&mut self, n_new: usize, seed: u64) -> Result<()> {
        if n_new == 0 {
            return Err(Error::InvalidInput("appended layer width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_prev = self.output_layer.n_out();
        let mut hidden = DenseLayer::zeros(n_prev, n_new, Activation::Relu);
        hidden.init(&mut rng);
        let head = DenseLayer::zeros(n_new, self.field_len(), Activation::Linear);
        let old_head = std::mem::replace(&mut self.output_layer, head);
        self.fc_layers.push(old_head);
        self.fc_layers.push(hidden);
        Ok(())
    }

    /// Number of pipeline stages: conv layers, the flatten/concat step, dense layers and head.
    pub(crate) fn stage_count(&self) -> usize {
        self.conv_layers.len() + 1 + self.fc_layers.len() + 1
    }

    /// Index of the first stage holding a trainable layer, or `None` if everything is frozen.
    pub(crate) fn first_trainable_stage(&self) -> Option<usize> {
        let nc = self.conv_layers.len();
        if let Some(j) = self.conv_layers.iter().position(|l| !l.frozen) {
            return Some(j);
        }
        if let Some(j) = self.fc_layers.iter().position(|l| !l.frozen) {
            return Some(nc + 1 + j);
        }
        (!self.output_layer.frozen).then_some(nc + 1 + self.fc_layers.len())
    }

    fn normalized_z(&self, zs: &[f64], batch: usize) -> Vec<f64> {
        let k = self.z_dim;
        let mut out = Vec::with_capacity(batch * k);
        for b in 0..batch {
            for d in 0..k {
                out.push((zs[b * k + d] - self.z_shift[d]) / self.z_scale[d]);
            }
        }
        out
    }

    /// Runs stages `from..` on `input` (the activation entering stage `from`).
    /// `zs` holds `batch * z_dim` raw parameter values.
    pub(crate) fn forward_from(&self, from: usize, input: Vec<f64>, zs: &[f64], batch: usize) -> Trace {
        let nc = self.conv_layers.len();
        let mut acts = Vec::with_capacity(self.stage_count() + 1 - from);
        acts.push(input);
        for stage in from..self.stage_count() {
            let x = acts.last().expect("nonempty");
            let y = if stage < nc {
                self.conv_layers[stage].forward_batch(x, batch, self.spatial())
            } else if stage == nc {
                let flat = self.conv_out_len();
                let z = self.normalized_z(zs, batch);
                let mut y = Vec::with_capacity(batch * (flat + self.z_dim));
                for b in 0..batch {
                    y.extend_from_slice(&x[b * flat..(b + 1) * flat]);
                    y.extend_from_slice(&z[b * self.z_dim..(b + 1) * self.z_dim]);
                }
                y
            } else {
                self.dense(stage).forward_batch(x, batch)
            };
            acts.push(y);
        }
        Trace { batch, acts }
    }

    fn dense(&self, stage: usize) -> &DenseLayer {
        let j = stage - self.conv_layers.len() - 1;
        self.fc_layers.get(j).unwrap_or(&self.output_layer)
    }

    pub(crate) fn stage_layer(&self, stage: usize) -> Option<LayerId> {
        let nc = self.conv_layers.len();
        if stage < nc {
            Some(LayerId::Conv(stage))
        } else if stage == nc {
            None
        } else if stage - nc - 1 < self.fc_layers.len() {
            Some(LayerId::Dense(stage - nc - 1))
        } else {
            Some(LayerId::Head)
        }
    }

    /// Backpropagates `grad_output` (w.r.t. the network output) through a trace that began at
    /// stage `from`, calling `sink(layer, grad_weights, grad_bias)` for each trainable layer.
    pub(crate) fn backward(
        &self,
        trace: &Trace,
        from: usize,
        grad_output: Vec<f64>,
        mut sink: impl FnMut(LayerId, Vec<f64>, Vec<f64>),
    ) {
        let Some(first) = self.first_trainable_stage() else { return };
        let batch = trace.batch;
        let nc = self.conv_layers.len();
        let mut grad = grad_output;
        for stage in (from.max(first)..self.stage_count()).rev() {
            let local = stage - from;
            let input = &trace.acts[local];
            let output = &trace.acts[local + 1];
            let want_input = stage > first;
            let next = match self.stage_layer(stage) {
                None => {
                    let flat = self.conv_out_len();
                    let width = flat + self.z_dim;
                    want_input.then(|| {
                        let mut g = Vec::with_capacity(batch * flat);
                        for b in 0..batch {
                            g.extend_from_slice(&grad[b * width..b * width + flat]);
                        }
                        g
                    })
                }
                Some(id) => {
                    let frozen = self.is_frozen(id);
                    let (wlen, blen) = {
                        let (w, b) = self.blocks(id);
                        (w.len(), b.len())
                    };
                    let mut gw = vec![0.0; if frozen { 0 } else { wlen }];
                    let mut gb = vec![0.0; if frozen { 0 } else { blen }];
                    let grads = (!frozen).then_some((gw.as_mut_slice(), gb.as_mut_slice()));
                    let gi = if stage < nc {
                        self.conv_layers[stage].backward_batch(
                            input,
                            output,
                            &mut grad,
                            batch,
                            self.spatial(),
                            grads,
                            want_input,
                        )
                    } else {
                        self.dense(stage).backward_batch(input, output, &mut grad, batch, grads, want_input)
                    };
                    if !frozen {
                        sink(id, gw, gb);
                    }
                    gi
                }
            };
            match next {
                Some(g) => grad = g,
                None => break,
            }
        }
    }

    fn check_input(&self, field: &Tensor, z: &[f64]) -> Result<()> {
        if field.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "network expects field shape {:?}, got {:?}",
                self.input_shape,
                field.shape()
            )));
        }
        if z.len() != self.z_dim {
            return Err(Error::Shape(format!("network expects z of length {}, got {}", self.z_dim, z.len())));
        }
        Ok(())
    }

    /// Evaluates the network on one field and parameter vector; the output has the field's shape.
    pub fn forward(&self, field: &Tensor, z: &[f64]) -> Result<Tensor> {
        self.check_input(field, z)?;
        let trace = self.forward_from(0, field.data().to_vec(), z, 1);
        let out = trace.acts.into_iter().last().expect("output");
        Tensor::new(self.input_shape.clone(), out)
    }

    /// Batched evaluation; returns one output row per input.
    pub fn forward_many(&self, inputs: &[(&Tensor, &[f64])]) -> Result<Vec<Vec<f64>>> {
        let batch = inputs.len();
        let mut x = Vec::with_capacity(batch * self.field_len());
        let mut zs = Vec::with_capacity(batch * self.z_dim);
        for (field, z) in inputs {
            self.check_input(field, z)?;
            x.extend_from_slice(field.data());
            zs.extend_from_slice(z);
        }
        let out = self.forward_from(0, x, &zs, batch).acts.pop().expect("output");
        let n = self.field_len();
        Ok(out.chunks_exact(n).map(<[f64]>::to_vec).collect())
    }

    /// Output of the layer stack up to and including `stage`, for inspecting frozen sub-networks.
    pub fn activations_through(&self, stage: usize, field: &Tensor, z: &[f64]) -> Result<Vec<f64>> {
        self.check_input(field, z)?;
        let trace = self.forward_from(0, field.data().to_vec(), z, 1);
        trace
            .acts
            .get(stage + 1)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("stage {stage} out of range")))
    }
}
