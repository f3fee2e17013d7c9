//! Cutting a model into client-side and server-side halves, and the per-batch
//! exchange between them.
//!
//! One split step on a mini-batch is:
//!
//! 1. [`client_forward`] runs the client layers and produces a [`SmashedBatch`]
//!    (cut-layer activations plus labels) for the uplink.
//! 2. [`server_train_step`] finishes the forward pass, computes the loss, backpropagates,
//!    updates the server half and answers with a [`GradMessage`].
//! 3. [`client_backward_step`] continues backpropagation from the returned gradient
//!    and updates the client half.
//!
//! The gradient in the reply is taken against the server parameters *before*
//! their update, so a full split step is numerically the same as one SGD step
//! on the unsplit model.

use crate::error::{Error, Result};
use crate::nn::{backward, forward, loss_softmax_ce, sgd_step, ForwardCache, ModelSpec, Params, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitModel {
    full: ModelSpec,
    cut: usize,
    client: ModelSpec,
    server: ModelSpec,
}

impl SplitModel {
    pub fn full_spec(&self) -> &ModelSpec {
        &self.full
    }

    pub fn cut(&self) -> usize {
        self.cut
    }

    pub fn client_spec(&self) -> &ModelSpec {
        &self.client
    }

    pub fn server_spec(&self) -> &ModelSpec {
        &self.server
    }

    /// Width of the smashed activations crossing the cut.
    pub fn cut_width(&self) -> usize {
        self.client.output_dim()
    }

    pub fn split_params(&self, params: &Params) -> Result<(Params, Params)> {
        params.check_matches(&self.full)?;
        Ok(params.split_at(self.cut))
    }
}

/// Client side gets layers `[0, cut)`, server side `[cut, L)`.
pub fn split_model(spec: &ModelSpec, cut: usize) -> Result<SplitModel> {
    let layers = spec.num_layers();
    if cut == 0 || cut >= layers {
        return Err(Error::config(
            "cut",
            format!("cut {cut} outside valid range [1, {}]", layers.saturating_sub(1)),
        ));
    }
    Ok(SplitModel {
        full: spec.clone(),
        cut,
        client: spec.slice(0..cut)?,
        server: spec.slice(cut..layers)?,
    })
}

/// Rebuilds the full model from its two halves.
pub fn stitch_model(
    split: &SplitModel,
    client_params: &Params,
    server_params: &Params,
) -> Result<(ModelSpec, Params)> {
    client_params.check_matches(&split.client)?;
    server_params.check_matches(&split.server)?;
    let spec = split.client.concat(&split.server)?;
    Ok((spec, client_params.concat(server_params)))
}

/// Cut-layer activations for one mini-batch, sent client → AP.
#[derive(Debug, Clone, PartialEq)]
pub struct SmashedBatch {
    pub activations: Tensor,
    pub labels: Vec<usize>,
    pub batch_id: u64,
}

/// Forward state a client keeps between sending smashed data and receiving its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientCache {
    pub forward: ForwardCache,
    pub batch_id: u64,
}

/// Loss gradient w.r.t. the smashed activations, sent AP → client.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMessage {
    pub grad_smashed: Tensor,
    pub batch_id: u64,
    pub loss_value: f64,
}

pub fn client_forward(
    client_spec: &ModelSpec,
    client_params: &Params,
    batch_x: &Tensor,
    batch_y: &[usize],
    batch_id: u64,
) -> Result<(SmashedBatch, ClientCache)> {
    if batch_y.len() != batch_x.rows() {
        return Err(Error::Data(format!(
            "{} labels for a batch of {}",
            batch_y.len(),
            batch_x.rows()
        )));
    }
    let (activations, cache) = forward(client_spec, client_params, batch_x)?;
    Ok((
        SmashedBatch {
            activations,
            labels: batch_y.to_vec(),
            batch_id,
        },
        ClientCache {
            forward: cache,
            batch_id,
        },
    ))
}

pub fn server_train_step(
    server_spec: &ModelSpec,
    server_params: &Params,
    smashed: &SmashedBatch,
    lr: f64,
) -> Result<(Params, GradMessage)> {
    let act = &smashed.activations;
    if act.shape().len() != 2 || act.cols() != server_spec.input_dim() {
        return Err(Error::Protocol(format!(
            "smashed data of shape {:?} does not fit server input width {}",
            act.shape(),
            server_spec.input_dim()
        )));
    }
    let (logits, cache) = forward(server_spec, server_params, act)?;
    let (loss, grad_logits) = loss_softmax_ce(&logits, &smashed.labels)?;
    let (grads, grad_smashed) = backward(server_spec, server_params, &cache, &grad_logits)?;
    let updated = sgd_step(server_params, &grads, lr)?;
    Ok((
        updated,
        GradMessage {
            grad_smashed,
            batch_id: smashed.batch_id,
            loss_value: loss,
        },
    ))
}

pub fn client_backward_step(
    client_spec: &ModelSpec,
    client_params: &Params,
    cache: &ClientCache,
    grad: &GradMessage,
    lr: f64,
) -> Result<Params> {
    if grad.batch_id != cache.batch_id {
        return Err(Error::Protocol(format!(
            "stale gradient: got batch {}, waiting on batch {}",
            grad.batch_id, cache.batch_id
        )));
    }
    let (grads, _) = backward(client_spec, client_params, &cache.forward, &grad.grad_smashed)?;
    sgd_step(client_params, &grads, lr)
}

/// Runs a full client→server→client exchange for one mini-batch.
pub fn split_train_step(
    split: &SplitModel,
    client_params: &Params,
    server_params: &Params,
    x: &Tensor,
    y: &[usize],
    batch_id: u64,
    lr: f64,
) -> Result<(Params, Params, f64)> {
    let (smashed, cache) = client_forward(&split.client, client_params, x, y, batch_id)?;
    let (server_next, reply) = server_train_step(&split.server, server_params, &smashed, lr)?;
    let client_next = client_backward_step(&split.client, client_params, &cache, &reply, lr)?;
    Ok((client_next, server_next, reply.loss_value))
}
