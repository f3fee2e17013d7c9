use super::{Layer, LayerParams, ModelSpec, Params, Tensor};
use crate::error::{Error, Result};

/// Layer inputs recorded by [`forward`], consumed by [`backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    inputs: Vec<Tensor>,
    batch: usize,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }
}

fn dense_weights(params: &Params, i: usize) -> (&Tensor, &Tensor) {
    match params.layer(i) {
        LayerParams::Dense { weight, bias } => (weight, bias),
        LayerParams::Empty => unreachable!("params checked against spec"),
    }
}

fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let (batch, in_dim) = (x.rows(), x.cols());
    let out_dim = weight.rows();
    let w = weight.data();
    let mut out = Vec::with_capacity(batch * out_dim);
    for i in 0..batch {
        let xi = x.row(i);
        for j in 0..out_dim {
            let wj = &w[j * in_dim..(j + 1) * in_dim];
            let mut acc = bias.data()[j];
            for k in 0..in_dim {
                acc += xi[k] * wj[k];
            }
            out.push(acc);
        }
    }
    Tensor::new(vec![batch, out_dim], out).expect("dense output shape")
}

/// Runs `input` (`[batch, spec.input_dim()]`) through every layer of `spec`.
///
/// Dense computes `x Wᵀ + b` row by row; ReLU is `max(0, x)`.
pub fn forward(spec: &ModelSpec, params: &Params, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
    params.check_matches(spec)?;
    if input.shape().len() != 2 || input.cols() != spec.input_dim() {
        return Err(Error::Shape {
            layer: 0,
            expected: format!("[batch, {}]", spec.input_dim()),
            found: format!("{:?}", input.shape()),
        });
    }
    let batch = input.rows();
    let mut inputs = Vec::with_capacity(spec.num_layers());
    let mut x = input.clone();
    for (i, layer) in spec.layers().iter().enumerate() {
        let y = match layer {
            Layer::Dense { .. } => {
                let (w, b) = dense_weights(params, i);
                dense_forward(&x, w, b)
            }
            Layer::Relu => x.map(|v| v.max(0.0)),
        };
        inputs.push(std::mem::replace(&mut x, y));
    }
    Ok((x, ForwardCache { inputs, batch }))
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
///
/// The gradient is `(softmax - onehot) / batch`.
pub fn loss_softmax_ce(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 {
        return Err(Error::Contract(format!("logits must be 2-D, got {:?}", logits.shape())));
    }
    let (batch, classes) = (logits.rows(), logits.cols());
    if labels.len() != batch {
        return Err(Error::Data(format!("{} labels for a batch of {batch}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Data(format!("label {bad} outside [0, {classes})")));
    }
    let scale = 1.0 / batch as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(batch * classes);
    for (i, &label) in labels.iter().enumerate() {
        let z = logits.row(i);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        total += max + sum.ln() - z[label];
        for (c, e) in exps.iter().enumerate() {
            let onehot = if c == label { 1.0 } else { 0.0 };
            grad.push((e / sum - onehot) * scale);
        }
    }
    Ok((total * scale, Tensor::new(vec![batch, classes], grad)?))
}

/// Backpropagates `grad_output` through `spec`, returning parameter gradients
/// and the gradient w.r.t. the model input.
pub fn backward(
    spec: &ModelSpec,
    params: &Params,
    cache: &ForwardCache,
    grad_output: &Tensor,
) -> Result<(Params, Tensor)> {
    params.check_matches(spec)?;
    if cache.inputs.len() != spec.num_layers() {
        return Err(Error::Contract(format!(
            "cache holds {} layer inputs but model has {} layers",
            cache.inputs.len(),
            spec.num_layers()
        )));
    }
    for (i, x) in cache.inputs.iter().enumerate() {
        if x.shape() != [cache.batch, spec.width_at(i)] {
            return Err(Error::Contract(format!(
                "cache entry {i} has shape {:?}, expected [{}, {}]",
                x.shape(),
                cache.batch,
                spec.width_at(i)
            )));
        }
    }
    if grad_output.shape() != [cache.batch, spec.output_dim()] {
        return Err(Error::Shape {
            layer: spec.num_layers() - 1,
            expected: format!("[{}, {}]", cache.batch, spec.output_dim()),
            found: format!("{:?}", grad_output.shape()),
        });
    }

    let batch = cache.batch;
    let mut grads = Params::zeros(spec);
    let mut g = grad_output.clone();
    for i in (0..spec.num_layers()).rev() {
        let x = &cache.inputs[i];
        g = match spec.layers()[i] {
            Layer::Dense { in_dim, out_dim } => {
                let (weight, _) = dense_weights(params, i);
                let w = weight.data();
                let LayerParams::Dense { weight: gw, bias: gb } = grads.layer_mut(i) else {
                    unreachable!()
                };
                let (gw, gb) = (gw.data_mut(), gb.data_mut());
                let mut gx = vec![0.0; batch * in_dim];
                for n in 0..batch {
                    let gn = g.row(n);
                    let xn = x.row(n);
                    for j in 0..out_dim {
                        let gnj = gn[j];
                        gb[j] += gnj;
                        let row = &mut gw[j * in_dim..(j + 1) * in_dim];
                        let wj = &w[j * in_dim..(j + 1) * in_dim];
                        let gxn = &mut gx[n * in_dim..(n + 1) * in_dim];
                        for k in 0..in_dim {
                            row[k] += gnj * xn[k];
                            gxn[k] += gnj * wj[k];
                        }
                    }
                }
                Tensor::new(vec![batch, in_dim], gx)?
            }
            Layer::Relu => {
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                    .collect();
                Tensor::new(g.shape().to_vec(), data)?
            }
        };
    }
    Ok((grads, g))
}

/// Returns `params - lr * grads`.
pub fn sgd_step(params: &Params, grads: &Params, lr: f64) -> Result<Params> {
    if !params.same_shape(grads) {
        return Err(Error::Contract("gradient shape does not match parameters".into()));
    }
    let mut out = params.clone();
    for (p, g) in out.values_mut().zip(grads.values()) {
        *p -= lr * g;
    }
    Ok(out)
}

/// One plain SGD step on an unsplit model. Returns the updated parameters and the batch loss.
pub fn train_step(
    spec: &ModelSpec,
    params: &Params,
    x: &Tensor,
    labels: &[usize],
    lr: f64,
) -> Result<(Params, f64)> {
    let (logits, cache) = forward(spec, params, x)?;
    let (loss, grad) = loss_softmax_ce(&logits, labels)?;
    let (grads, _) = backward(spec, params, &cache, &grad)?;
    Ok((sgd_step(params, &grads, lr)?, loss))
}
