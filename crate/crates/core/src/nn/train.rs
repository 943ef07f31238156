//! Cost function, reverse-mode gradients and full-batch adaptive-moment training.

use log::debug;
use serde::{Deserialize, Serialize};

use super::network::{ErrorMapNetwork, LayerId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One supervised example: the network should map `(input, z)` to `target`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Tensor,
    pub z: Vec<f64>,
    pub target: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// L2 coefficient on trainable weights.
    pub lambda: f64,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub plateau_patience: usize,
    /// Minimum decrease of the best training loss over `plateau_patience` epochs.
    pub min_improvement: f64,
    /// On a plateau, multiply the learning rate by this factor and continue from the best
    /// parameters instead of stopping. `1.0` disables decay.
    #[serde(default = "no_decay")]
    pub plateau_decay: f64,
    /// Training stops once a decay would take the learning rate below this value.
    #[serde(default)]
    pub min_learning_rate: f64,
}

fn no_decay() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            max_epochs: 20_000,
            learning_rate: 1e-3,
            seed: 0,
            plateau_patience: 500,
            min_improvement: 1e-12,
            plateau_decay: 1.0,
            min_learning_rate: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradBlock {
    pub layer: LayerId,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Gradient of the cost w.r.t. every trainable layer, in network order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<GradBlock>,
}

impl Gradients {
    pub fn get(&self, layer: LayerId) -> Option<&GradBlock> {
        self.blocks.iter().find(|b| b.layer == layer)
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.weights.data().iter().chain(b.bias.data()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A batch packed into contiguous row-major matrices.
pub(crate) struct Packed {
    pub batch: usize,
    pub inputs: Vec<f64>,
    pub zs: Vec<f64>,
    pub targets: Vec<f64>,
}

pub(crate) fn pack(net: &ErrorMapNetwork, samples: &[Sample]) -> Result<Packed> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let n = net.field_len();
    let mut packed = Packed {
        batch: samples.len(),
        inputs: Vec::with_capacity(samples.len() * n),
        zs: Vec::with_capacity(samples.len() * net.z_dim),
        targets: Vec::with_capacity(samples.len() * n),
    };
    for s in samples {
        if s.input.shape() != net.input_shape.as_slice() || s.target.shape() != net.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "sample shapes {:?} -> {:?} do not match network field shape {:?}",
                s.input.shape(),
                s.target.shape(),
                net.input_shape
            )));
        }
        if s.z.len() != net.z_dim {
            return Err(Error::Shape(format!("sample z has length {}, network expects {}", s.z.len(), net.z_dim)));
        }
        packed.inputs.extend_from_slice(s.input.data());
        packed.zs.extend_from_slice(&s.z);
        packed.targets.extend_from_slice(s.target.data());
    }
    Ok(packed)
}

fn data_term(output: &[f64], targets: &[f64]) -> f64 {
    output.iter().zip(targets).map(|(y, t)| (y - t) * (y - t)).sum()
}

/// Sum over the batch of squared L2 residuals plus `lambda` times the squared norm of the
/// trainable weights (biases are not penalised).
pub fn loss(net: &ErrorMapNetwork, batch: &[Sample], lambda: f64) -> Result<f64> {
    let p = pack(net, batch)?;
    let out = net.forward_from(0, p.inputs, &p.zs, p.batch).acts.pop().expect("output");
    Ok(data_term(&out, &p.targets) + lambda * net.trainable_weight_norm_sq())
}

/// Loss and gradients for a batch whose activations enter at stage `from`.
fn loss_and_grads(
    net: &ErrorMapNetwork,
    from: usize,
    input: &[f64],
    p: &Packed,
    lambda: f64,
) -> (f64, Vec<GradBlock>) {
    let trace = net.forward_from(from, input.to_vec(), &p.zs, p.batch);
    let out = trace.acts.last().expect("output");
    let data = data_term(out, &p.targets);
    let grad_out: Vec<f64> = out.iter().zip(&p.targets).map(|(y, t)| 2.0 * (y - t)).collect();
    let mut blocks = Vec::new();
    net.backward(&trace, from, grad_out, |layer, gw, gb| {
        let (w, b) = net.blocks(layer);
        let mut gw = Tensor::new(w.shape().to_vec(), gw).expect("weight grad shape");
        for (g, &wv) in gw.data_mut().iter_mut().zip(w.data()) {
            *g += 2.0 * lambda * wv;
        }
        let gb = Tensor::new(b.shape().to_vec(), gb).expect("bias grad shape");
        blocks.push(GradBlock { layer, weights: gw, bias: gb });
    });
    blocks.reverse();
    (data + lambda * net.trainable_weight_norm_sq(), blocks)
}

/// Exact gradient of [`loss`] w.r.t. every non-frozen parameter block.
pub fn gradients(net: &ErrorMapNetwork, batch: &[Sample], lambda: f64) -> Result<Gradients> {
    let p = pack(net, batch)?;
    let (_, blocks) = loss_and_grads(net, 0, &p.inputs, &p, lambda);
    Ok(Gradients { blocks })
}

/// Mean over samples of the per-point squared error, together with the raw sum of squared
/// errors over the set.
pub fn validation_error(net: &ErrorMapNetwork, samples: &[Sample]) -> Result<(f64, f64)> {
    let p = pack(net, samples)?;
    let out = net.forward_from(0, p.inputs, &p.zs, p.batch).acts.pop().expect("output");
    let raw = data_term(&out, &p.targets);
    Ok((raw / (p.batch * net.field_len()) as f64, raw))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Normalized validation error (mean per-point squared error).
    pub validation: f64,
    /// Raw sum of squared validation residuals.
    pub validation_raw: f64,
    pub epochs: usize,
    pub first_loss: f64,
    pub best_loss: f64,
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(lr: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn update(&mut self, net: &mut ErrorMapNetwork, grads: &[GradBlock]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let mut slot = 0;
        for g in grads {
            let (w, b) = net.blocks_mut(g.layer);
            for (param, grad) in [(w, &g.weights), (b, &g.bias)] {
                let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
                for (((p, &gr), mi), vi) in param.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = self.beta1 * *mi + (1.0 - self.beta1) * gr;
                    *vi = self.beta2 * *vi + (1.0 - self.beta2) * gr * gr;
                    *p -= self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
                }
                slot += 1;
            }
        }
    }
}

/// Full-batch adaptive-moment training on `train_set`, stopping at `max_epochs` or when the best
/// training loss stalls. The parameters with the lowest training loss are kept. Frozen layers are
/// never touched; their activations are computed once.
pub fn train(net: &mut ErrorMapNetwork, train_set: &[Sample], validation_set: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if validation_set.is_empty() {
        return Err(Error::InvalidInput("empty validation set".into()));
    }
    let p = pack(net, train_set)?;
    let Some(from) = net.first_trainable_stage() else {
        let (validation, validation_raw) = validation_error(net, validation_set)?;
        let l = loss(net, train_set, cfg.lambda)?;
        return Ok(TrainOutcome { validation, validation_raw, epochs: 0, first_loss: l, best_loss: l });
    };
    // Activations entering the first trainable stage do not change during training.
    let prefix = if from == 0 {
        p.inputs.clone()
    } else {
        let mut trace = net.forward_from(0, p.inputs.clone(), &p.zs, p.batch);
        trace.acts.swap_remove(from)
    };

    let sizes: Vec<usize> = net
        .layer_ids()
        .into_iter()
        .filter(|&id| !net.is_frozen(id))
        .flat_map(|id| {
            let (w, b) = net.blocks(id);
            [w.len(), b.len()]
        })
        .collect();
    let mut adam = Adam::new(cfg.learning_rate, &sizes);
    let mut best = net.clone();
    let mut best_loss = f64::INFINITY;
    let mut first_loss = f64::NAN;
    // best loss at each epoch, for the plateau test
    let mut best_history: Vec<f64> = Vec::with_capacity(cfg.max_epochs.min(1 << 16));
    let mut epochs = 0;
    let mut window_start = 0;
    for epoch in 0..cfg.max_epochs {
        let (l, grads) = loss_and_grads(net, from, &prefix, &p, cfg.lambda);
        if !l.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        if epoch == 0 {
            first_loss = l;
        }
        if l < best_loss {
            best_loss = l;
            best.clone_from(net);
        }
        best_history.push(best_loss);
        epochs = epoch + 1;
        if epoch >= window_start + cfg.plateau_patience {
            let earlier = best_history[epoch - cfg.plateau_patience];
            if earlier - best_loss < cfg.min_improvement {
                let next_lr = adam.lr * cfg.plateau_decay;
                if cfg.plateau_decay >= 1.0 || next_lr < cfg.min_learning_rate {
                    debug!("plateau after {epochs} epochs, best loss {best_loss:e}");
                    break;
                }
                debug!("plateau after {epochs} epochs, learning rate {next_lr:e}");
                adam.lr = next_lr;
                net.clone_from(&best);
                window_start = epoch;
            }
        }
        adam.update(net, &grads);
    }
    *net = best;
    let (validation, validation_raw) = validation_error(net, validation_set)?;
    debug!("trained {epochs} epochs: loss {best_loss:e}, v {validation:e} (raw {validation_raw:e})");
    Ok(TrainOutcome { validation, validation_raw, epochs, first_loss, best_loss })
}
