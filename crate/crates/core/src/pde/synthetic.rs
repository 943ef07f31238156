//! Synthetic multi-channel 2D data for exercising rank-2 convolution paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

pub const SYNTHETIC_CHANNELS: usize = 2;
/// Factor applied to the discrete Laplacian to form the target channel.
pub const LAPLACIAN_SCALE: f64 = 0.25;

/// Five-point Laplacian of each channel with zero values outside the plane.
pub fn five_point_laplacian(field: &Tensor) -> Tensor {
    let shape = field.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let x = field.data();
    let at = |ch: usize, r: isize, col: isize| {
        if r < 0 || col < 0 || r >= h as isize || col >= w as isize {
            0.0
        } else {
            x[ch * h * w + r as usize * w + col as usize]
        }
    };
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for r in 0..h as isize {
            for col in 0..w as isize {
                out.push(at(ch, r - 1, col) + at(ch, r + 1, col) + at(ch, r, col - 1) + at(ch, r, col + 1) - 4.0 * at(ch, r, col));
            }
        }
    }
    Tensor::new(shape.to_vec(), out).expect("same shape")
}

/// A smooth two-channel field parameterized by `z` and the scaled Laplacian of it as "error".
///
/// Channel `c` is `amp_c sin(pi (a x + phi_c)) cos(pi (b y + psi_c))` with `a = 1 + z[0]`,
/// `b = 1 + z[1]` (missing entries read as 0) and phases drawn from `seed`.
pub fn synthetic_2d_sample(z: &[f64], shape: (usize, usize), seed: u64) -> (Tensor, Tensor) {
    let (h, w) = shape;
    assert!(h >= 1 && w >= 1 && h <= 32 && w <= 32, "synthetic samples are limited to 32x32");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = 1.0 + z.first().copied().unwrap_or(0.0);
    let b = 1.0 + z.get(1).copied().unwrap_or(0.0);
    let mut data = Vec::with_capacity(SYNTHETIC_CHANNELS * h * w);
    for _ in 0..SYNTHETIC_CHANNELS {
        let phi: f64 = rng.random();
        let psi: f64 = rng.random();
        let amp: f64 = rng.random_range(0.5..1.0);
        for r in 0..h {
            let y = r as f64 / h as f64;
            for c in 0..w {
                let x = c as f64 / w as f64;
                data.push(amp * (std::f64::consts::PI * (a * x + phi)).sin() * (std::f64::consts::PI * (b * y + psi)).cos());
            }
        }
    }
    let field = Tensor::new(vec![SYNTHETIC_CHANNELS, h, w], data).expect("shape");
    let target = five_point_laplacian(&field).map(|v| LAPLACIAN_SCALE * v);
    (field, target)
}
