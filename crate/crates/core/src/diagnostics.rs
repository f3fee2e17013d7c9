//! Self-checks exposed through the CLI: backprop against central finite
//! differences, and split training against unsplit SGD.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{backward, forward, init_params, loss_softmax_ce, train_step, Layer, ModelSpec, Params, Tensor};
use crate::split::{split_model, split_train_step, stitch_model};

pub const FD_STEP: f64 = 1e-6;
/// Batches with a ReLU input closer than this to zero are redrawn before checking.
pub const KINK_MARGIN: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely rather than relatively.
pub const REL_ERR_FLOOR: f64 = 1e-4;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// MLP with `dense_layers` Dense layers (ReLU between), widths in `1..=max_dim`.
pub fn random_spec(rng: &mut impl Rng, dense_layers: usize, max_dim: usize) -> Result<ModelSpec> {
    let input = rng.random_range(1..=max_dim);
    let hidden: Vec<usize> = (1..dense_layers).map(|_| rng.random_range(1..=max_dim)).collect();
    let classes = rng.random_range(2..=max_dim.max(2));
    ModelSpec::mlp(input, &hidden, classes)
}

pub fn random_batch(rng: &mut impl Rng, spec: &ModelSpec, batch: usize) -> Result<(Tensor, Vec<usize>)> {
    let x = (0..batch * spec.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = (0..batch).map(|_| rng.random_range(0..spec.output_dim())).collect();
    Ok((Tensor::new(vec![batch, spec.input_dim()], x)?, y))
}

fn loss_at(spec: &ModelSpec, params: &Params, x: &Tensor, y: &[usize]) -> Result<f64> {
    let (logits, _) = forward(spec, params, x)?;
    Ok(loss_softmax_ce(&logits, y)?.0)
}

/// True when some ReLU input of `x` lies within [`KINK_MARGIN`] of zero.
pub fn near_kink(spec: &ModelSpec, params: &Params, x: &Tensor) -> Result<bool> {
    let (_, cache) = forward(spec, params, x)?;
    Ok(spec
        .layers()
        .iter()
        .zip(cache.inputs())
        .any(|(l, t)| matches!(l, Layer::Relu) && t.data().iter().any(|v| v.abs() < KINK_MARGIN)))
}

/// Largest relative error between backprop and central differences over
/// every parameter of one model.
pub fn gradcheck_model(spec: &ModelSpec, params: &Params, x: &Tensor, y: &[usize]) -> Result<f64> {
    let (logits, cache) = forward(spec, params, x)?;
    let (_, grad_logits) = loss_softmax_ce(&logits, y)?;
    let (grads, _) = backward(spec, params, &cache, &grad_logits)?;
    let mut flat = params.to_flat();
    let mut worst = 0.0f64;
    for (i, g) in grads.values().enumerate() {
        let orig = flat[i];
        flat[i] = orig + FD_STEP;
        let up = loss_at(spec, &params.with_flat(&flat)?, x, y)?;
        flat[i] = orig - FD_STEP;
        let down = loss_at(spec, &params.with_flat(&flat)?, x, y)?;
        flat[i] = orig;
        worst = worst.max(relative_error(*g, (up - down) / (2.0 * FD_STEP)));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckSummary {
    pub models: usize,
    pub parameters: usize,
    pub max_rel_error: f64,
}

/// Gradient check over `models` random MLPs (2–3 Dense layers, widths ≤ 8, batch ≤ 4).
pub fn gradcheck(seed: u64, models: usize) -> Result<GradcheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = GradcheckSummary {
        models,
        parameters: 0,
        max_rel_error: 0.0,
    };
    for _ in 0..models {
        let dense = rng.random_range(2..=3);
        let spec = random_spec(&mut rng, dense, 8)?;
        let params = init_params(&spec, rng.random())?;
        let batch = rng.random_range(1..=4);
        let (x, y) = loop {
            let (x, y) = random_batch(&mut rng, &spec, batch)?;
            if !near_kink(&spec, &params, &x)? {
                break (x, y);
            }
        };
        summary.parameters += spec.param_count();
        summary.max_rel_error = summary.max_rel_error.max(gradcheck_model(&spec, &params, &x, &y)?);
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitEquivalenceSummary {
    pub configs: usize,
    pub max_param_distance: f64,
}

/// Trains random models for `steps` batches both unsplit and split at a
/// random cut, and reports the largest parameter distance after stitching.
pub fn split_equivalence(seed: u64, configs: usize, steps: usize) -> Result<SplitEquivalenceSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..configs {
        let dense = rng.random_range(2..=4);
        let spec = random_spec(&mut rng, dense, 8)?;
        let cut = rng.random_range(1..spec.num_layers());
        let split = split_model(&spec, cut)?;
        let lr = rng.random_range(0.01..0.5);
        let mut unsplit = init_params(&spec, rng.random())?;
        let (mut client, mut server) = split.split_params(&unsplit)?;
        for step in 0..steps {
            let batch = rng.random_range(1..=6);
            let (x, y) = random_batch(&mut rng, &spec, batch)?;
            unsplit = train_step(&spec, &unsplit, &x, &y, lr)?.0;
            let (c, s, _) = split_train_step(&split, &client, &server, &x, &y, step as u64, lr)?;
            client = c;
            server = s;
        }
        let (_, stitched) = stitch_model(&split, &client, &server)?;
        worst = worst.max(stitched.max_abs_diff(&unsplit));
    }
    Ok(SplitEquivalenceSummary {
        configs,
        max_param_distance: worst,
    })
}
