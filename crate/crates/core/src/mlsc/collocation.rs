//! Nested Clenshaw-Curtis nodes and tensor-product barycentric interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::ParameterDomain;

/// Clenshaw-Curtis nodes of level `m` on `[lo, hi]`, ascending: the midpoint for `m = 0`,
/// otherwise the `2^m + 1` extrema of the Chebyshev polynomial of degree `2^m`.
pub fn cc_nodes(m: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    if m == 0 {
        return vec![mid];
    }
    let n = 1usize << m;
    // sin((n - 2j) pi / 2n) == cos(j pi / n), written so the centre and the symmetry are exact
    // and node j of level m coincides bitwise with node 2j of level m + 1.
    let mut nodes: Vec<f64> = (0..=n)
        .map(|j| {
            let k = n as f64 - 2.0 * j as f64;
            mid + half * (k * std::f64::consts::PI / (2 * n) as f64).sin()
        })
        .collect();
    nodes[0] = hi;
    nodes[n] = lo;
    nodes.reverse();
    nodes
}

/// Barycentric weights for Chebyshev extreme points (sign-alternating, halved at the ends).
fn cc_weights(count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![1.0];
    }
    (0..count)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == count - 1 {
                0.5 * sign
            } else {
                sign
            }
        })
        .collect()
}

/// Lagrange basis values of all nodes at `x`, from the barycentric formula.
fn basis(nodes: &[f64], weights: &[f64], x: f64) -> Vec<f64> {
    if let Some(k) = nodes.iter().position(|&xn| xn == x) {
        let mut out = vec![0.0; nodes.len()];
        out[k] = 1.0;
        return out;
    }
    let terms: Vec<f64> = nodes.iter().zip(weights).map(|(&xn, &w)| w / (x - xn)).collect();
    let denom: f64 = terms.iter().sum();
    terms.into_iter().map(|t| t / denom).collect()
}

/// Isotropic tensor grid of Clenshaw-Curtis nodes of one level over a parameter box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollocationGrid {
    pub cc_level: usize,
    pub domain: ParameterDomain,
    pub nodes: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

impl CollocationGrid {
    pub fn new(cc_level: usize, domain: &ParameterDomain) -> Result<Self> {
        if domain.dim() > 2 {
            return Err(Error::InvalidInput(format!("tensor collocation supports at most 2 parameters, got {}", domain.dim())));
        }
        if cc_level > 20 {
            return Err(Error::InvalidInput(format!("collocation level {cc_level} too large")));
        }
        let nodes: Vec<Vec<f64>> = domain.lower.iter().zip(&domain.upper).map(|(&a, &b)| cc_nodes(cc_level, a, b)).collect();
        let weights = nodes.iter().map(|n| cc_weights(n.len())).collect();
        Ok(Self { cc_level, domain: domain.clone(), nodes, weights })
    }

    /// All tensor points, the last dimension varying fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut points = vec![vec![]];
        for axis in &self.nodes {
            points = points
                .into_iter()
                .flat_map(|p: Vec<f64>| {
                    axis.iter().map(move |&x| {
                        let mut q = p.clone();
                        q.push(x);
                        q
                    })
                })
                .collect();
        }
        points
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Interpolates vector-valued nodal data (ordered as [`CollocationGrid::points`]) at `z`.
    pub fn interpolate(&self, values: &[Vec<f64>], z: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.len() {
            return Err(Error::Shape(format!("{} nodal values for {} nodes", values.len(), self.len())));
        }
        if z.len() != self.nodes.len() {
            return Err(Error::Shape(format!("z has {} entries, grid {} dimensions", z.len(), self.nodes.len())));
        }
        let bases: Vec<Vec<f64>> = self.nodes.iter().zip(&self.weights).zip(z).map(|((n, w), &x)| basis(n, w, x)).collect();
        let width = values[0].len();
        let mut out = vec![0.0; width];
        for (idx, v) in values.iter().enumerate() {
            if v.len() != width {
                return Err(Error::Shape("nodal values differ in length".into()));
            }
            // decode idx into per-dimension node indices, last dimension fastest
            let mut rem = idx;
            let mut coeff = 1.0;
            for (d, b) in bases.iter().enumerate().rev() {
                let n = self.nodes[d].len();
                coeff *= b[rem % n];
                rem /= n;
            }
            if coeff != 0.0 {
                out.iter_mut().zip(v).for_each(|(o, x)| *o += coeff * x);
            }
        }
        Ok(out)
    }
}
