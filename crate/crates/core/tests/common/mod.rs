//! Reference implementations used as oracles by the integration tests.
//!
//! Nothing here calls the engine's forward/backward code: the MLP loss is
//! evaluated with plain nested loops over `Vec<f64>` so finite differences
//! computed from it are independent of the code under test.

#![allow(dead_code)]

use gsfl::nn::{Layer, LayerParams, ModelSpec, Params};

/// Mean softmax cross-entropy of an MLP, computed with scalar loops.
pub fn scalar_loss(spec: &ModelSpec, params: &Params, x: &[Vec<f64>], y: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let mut a = row.clone();
        for (layer, p) in spec.layers().iter().zip(params.layers()) {
            a = match (layer, p) {
                (Layer::Dense { in_dim, out_dim }, LayerParams::Dense { weight, bias }) => {
                    let w = weight.data();
                    (0..*out_dim)
                        .map(|j| {
                            let mut s = bias.data()[j];
                            for k in 0..*in_dim {
                                s += w[j * in_dim + k] * a[k];
                            }
                            s
                        })
                        .collect()
                }
                (Layer::Relu, _) => a.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
                _ => panic!("params do not match spec"),
            };
        }
        let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - a[label];
    }
    total / x.len() as f64
}

/// Central-difference gradient of `scalar_loss` for every parameter, in `Params::values` order.
pub fn fd_gradient(spec: &ModelSpec, params: &Params, x: &[Vec<f64>], y: &[usize], h: f64) -> Vec<f64> {
    let mut flat = params.to_flat();
    (0..flat.len())
        .map(|i| {
            let orig = flat[i];
            flat[i] = orig + h;
            let up = scalar_loss(spec, &params.with_flat(&flat).unwrap(), x, y);
            flat[i] = orig - h;
            let down = scalar_loss(spec, &params.with_flat(&flat).unwrap(), x, y);
            flat[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Deterministic pseudo-random values in `[-1, 1)` without touching the crate's RNG plumbing.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 33) % n as u64) as usize
    }

    pub fn rows(&mut self, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| scale * self.next_f64()).collect()).collect()
    }
}

pub fn random_mlp(rng: &mut Lcg, dense_layers: usize, max_dim: usize) -> ModelSpec {
    let input = 1 + rng.below(max_dim);
    let hidden: Vec<usize> = (1..dense_layers).map(|_| 1 + rng.below(max_dim)).collect();
    let classes = 2 + rng.below(max_dim - 1);
    ModelSpec::mlp(input, &hidden, classes).unwrap()
}
