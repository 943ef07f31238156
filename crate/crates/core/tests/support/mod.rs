//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use mlnn::nn::{Activation, Architecture, ErrorMapNetwork, LayerId, Sample};
use mlnn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twofloat::TwoFloat;

/// Independent forward pass: plain loops over the public parameter tensors, evaluated in
/// double-double arithmetic. Returns the network output and the pre-activation of every
/// hidden ReLU unit.
pub fn naive_forward(net: &ErrorMapNetwork, input: &Tensor, z: &[f64]) -> (Vec<TwoFloat>, Vec<f64>) {
    let tf = TwoFloat::from;
    let zero = tf(0.0);
    let shape = &net.input_shape;
    let (rows, cols) = if shape.len() == 2 { (1, shape[1]) } else { (shape[1], shape[2]) };
    let mut pattern = Vec::new();
    let mut x: Vec<TwoFloat> = input.data().iter().map(|&v| tf(v)).collect();
    for layer in &net.conv_layers {
        let taps: Vec<(isize, isize)> = if layer.rank == 1 {
            vec![(0, -1), (0, 0), (0, 1)]
        } else {
            (-1..=1).flat_map(|dy| (-1..=1).map(move |dx| (dy, dx))).collect()
        };
        let plane = rows * cols;
        let mut y = vec![zero; layer.out_channels * plane];
        for o in 0..layer.out_channels {
            for r in 0..rows as isize {
                for c in 0..cols as isize {
                    let mut acc = tf(layer.bias.data()[o]);
                    for ch in 0..layer.in_channels {
                        for (t, &(dy, dx)) in taps.iter().enumerate() {
                            let (rr, cc) = (r + dy, c + dx);
                            if rr < 0 || cc < 0 || rr >= rows as isize || cc >= cols as isize {
                                continue;
                            }
                            let w = layer.kernel.data()[(o * layer.in_channels + ch) * taps.len() + t];
                            acc += x[ch * plane + rr as usize * cols + cc as usize] * w;
                        }
                    }
                    pattern.push(f64::from(acc));
                    y[o * plane + r as usize * cols + c as usize] = if acc > 0.0 { acc } else { zero };
                }
            }
        }
        x = y;
    }
    for (d, &zv) in z.iter().enumerate() {
        x.push((tf(zv) - net.z_shift[d]) / net.z_scale[d]);
    }
    for layer in net.fc_layers.iter().chain(std::iter::once(&net.output_layer)) {
        let (n_out, n_in) = (layer.weights.shape()[0], layer.weights.shape()[1]);
        let relu = layer.activation == Activation::Relu;
        x = (0..n_out)
            .map(|i| {
                let mut acc = tf(layer.bias.data()[i]);
                for j in 0..n_in {
                    acc += x[j] * layer.weights.data()[i * n_in + j];
                }
                if relu {
                    pattern.push(f64::from(acc));
                    if acc > 0.0 { acc } else { zero }
                } else {
                    acc
                }
            })
            .collect();
    }
    (x, pattern)
}

/// Cost recomputed with [`naive_forward`]: squared residuals plus `lambda` times the squared
/// trainable weights.
pub fn brute_loss_tf(net: &ErrorMapNetwork, batch: &[Sample], lambda: f64) -> (TwoFloat, Vec<bool>) {
    let mut total = TwoFloat::from(0.0);
    let mut pattern = Vec::new();
    for s in batch {
        let (y, p) = naive_forward(net, &s.input, &s.z);
        pattern.extend(p.iter().map(|&v| v > 0.0));
        for (a, &b) in y.iter().zip(s.target.data()) {
            let r = *a - b;
            total += r * r;
        }
    }
    let mut w2 = TwoFloat::from(0.0);
    for id in net.layer_ids() {
        if !net.is_frozen(id) {
            for &w in net.blocks(id).0.data() {
                w2 += TwoFloat::from(w) * w;
            }
        }
    }
    (total + w2 * lambda, pattern)
}

pub fn brute_loss(net: &ErrorMapNetwork, batch: &[Sample], lambda: f64) -> f64 {
    f64::from(brute_loss_tf(net, batch, lambda).0)
}

pub struct FdReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel: f64,
    pub worst: Option<(LayerId, bool, usize, f64, f64)>,
}

/// Compares `analytic` against central differences of the double-double cost with step `h`
/// for every trainable parameter, using relative error with denominator `max(|g|, 1e-8)`.
/// Components whose perturbation flips a ReLU unit are skipped: the cost has a kink there.
pub fn finite_difference_check(
    net: &ErrorMapNetwork,
    batch: &[Sample],
    lambda: f64,
    analytic: &mlnn::nn::Gradients,
    h: f64,
) -> FdReport {
    let (_, base_pattern) = brute_loss_tf(net, batch, lambda);
    let mut report = FdReport { checked: 0, skipped_kinks: 0, max_rel: 0.0, worst: None };
    for id in net.layer_ids() {
        if net.is_frozen(id) {
            assert!(analytic.get(id).is_none(), "frozen layer {id:?} has a gradient");
            continue;
        }
        let block = analytic.get(id).expect("trainable layer has gradient");
        for is_bias in [false, true] {
            let len = if is_bias { net.blocks(id).1.len() } else { net.blocks(id).0.len() };
            for k in 0..len {
                let eval = |delta: f64| {
                    let mut n = net.clone();
                    let (w, b) = n.blocks_mut(id);
                    let t = if is_bias { b } else { w };
                    t.data_mut()[k] += delta;
                    let moved = t.data()[k];
                    let (l, p) = brute_loss_tf(&n, batch, lambda);
                    (l, p, moved)
                };
                let (lp, pp, wp) = eval(h);
                let (lm, pm, wm) = eval(-h);
                if pp != base_pattern || pm != base_pattern {
                    report.skipped_kinks += 1;
                    continue;
                }
                // divide by the step actually taken after rounding the perturbed parameter
                let fd = f64::from((lp - lm) / (TwoFloat::from(wp) - wm));
                let g = if is_bias { block.bias.data()[k] } else { block.weights.data()[k] };
                let rel = (g - fd).abs() / g.abs().max(1e-8);
                report.checked += 1;
                if rel > report.max_rel {
                    report.max_rel = rel;
                    report.worst = Some((id, is_bias, k, g, fd));
                }
            }
        }
    }
    report
}

/// A random small network (at most ~500 parameters) with a random batch, optionally with a
/// frozen prefix as produced by transfer learning.
pub fn random_case(seed: u64) -> (ErrorMapNetwork, Vec<Sample>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let rank2 = rng.random_bool(0.4);
        let channels = rng.random_range(1..=2);
        let input_shape = if rank2 {
            vec![channels, rng.random_range(2..=3), rng.random_range(2..=4)]
        } else {
            vec![channels, rng.random_range(3..=6)]
        };
        let arch = Architecture {
            input_shape: input_shape.clone(),
            z_dim: rng.random_range(0..=2),
            n_cnn: rng.random_range(0..=2),
            filters_first_layer: rng.random_range(1..=2),
            n_fc: rng.random_range(0..=2),
            fc_width: rng.random_range(2..=5),
        };
        let mut net = ErrorMapNetwork::new(&arch, rng.random()).unwrap();
        if rng.random_bool(0.3) {
            net.freeze_all();
            net.append_fc_layer(rng.random_range(2..=4), rng.random()).unwrap();
        }
        // heads start at zero, which would zero every upstream gradient
        let head = *net.layer_ids().last().unwrap();
        for w in net.blocks_mut(head).0.data_mut() {
            *w = rng.random_range(-0.5..0.5);
        }
        // small nonzero biases so that hidden units are not sitting exactly on kinks
        for id in net.layer_ids() {
            for b in net.blocks_mut(id).1.data_mut() {
                *b = rng.random_range(-0.1..0.1);
            }
        }
        if net.param_count() > 500 {
            continue;
        }
        let n: usize = input_shape.iter().product();
        let batch: Vec<Sample> = (0..rng.random_range(1..=3))
            .map(|_| Sample {
                input: Tensor::new(input_shape.clone(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
                z: (0..arch.z_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                target: Tensor::new(input_shape.clone(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
            })
            .collect();
        // keep away from ReLU kinks, where the cost is not differentiable
        let near_kink = batch.iter().any(|s| {
            naive_forward(&net, &s.input, &s.z).1.iter().any(|&a| a.abs() < 1e-3)
        });
        if near_kink {
            continue;
        }
        let lambda = if rng.random_bool(0.5) { 0.0 } else { 1e-3 };
        return (net, batch, lambda);
    }
}
