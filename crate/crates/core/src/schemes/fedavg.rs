use crate::error::{Error, Result};
use crate::nn::Params;

/// Elementwise weighted mean of `models`, with `weights` normalized to sum to one.
///
/// Terms are accumulated in the order given, so callers that need
/// reproducible results must pass models in a fixed order.
pub fn fedavg(models: &[Params], weights: &[f64]) -> Result<Params> {
    let first = models
        .first()
        .ok_or_else(|| Error::Aggregation("no models to aggregate".into()))?;
    if weights.len() != models.len() {
        return Err(Error::Aggregation(format!(
            "{} weights for {} models",
            weights.len(),
            models.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Aggregation(format!("weight {w} is not a non-negative number")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Aggregation("weights sum to zero".into()));
    }
    if let Some(i) = models.iter().position(|m| !m.same_shape(first)) {
        return Err(Error::Aggregation(format!("model {i} has a different shape from model 0")));
    }

    let mut out = first.clone();
    let w0 = weights[0] / total;
    for v in out.values_mut() {
        *v *= w0;
    }
    for (model, &w) in models.iter().zip(weights).skip(1) {
        let w = w / total;
        for (acc, v) in out.values_mut().zip(model.values()) {
            *acc += w * v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, LayerParams, ModelSpec, Tensor};

    fn vector(values: &[f64]) -> Params {
        Params::from_layers(vec![LayerParams::Dense {
            weight: Tensor::new(vec![1, values.len() - 1], values[..values.len() - 1].to_vec()).unwrap(),
            bias: Tensor::new(vec![1], vec![values[values.len() - 1]]).unwrap(),
        }])
    }

    #[test]
    fn arithmetic_example() {
        let out = fedavg(&[vector(&[1.0, 2.0]), vector(&[3.0, 4.0])], &[0.5, 0.5]).unwrap();
        assert_eq!(out.values().copied().collect::<Vec<_>>(), vec![2.0, 3.0]);
    }

    #[test]
    fn degenerate_weight_returns_first_exactly() {
        let spec = ModelSpec::mlp(3, &[4], 2).unwrap();
        let a = init_params(&spec, 1).unwrap();
        let b = init_params(&spec, 2).unwrap();
        assert_eq!(fedavg(&[a.clone(), b], &[2.0, 0.0]).unwrap(), a);
        assert_eq!(fedavg(std::slice::from_ref(&a), &[7.0]).unwrap(), a);
    }

    #[test]
    fn identical_inputs_are_a_fixed_point() {
        let spec = ModelSpec::mlp(3, &[4], 2).unwrap();
        let a = init_params(&spec, 5).unwrap();
        let out = fedavg(&[a.clone(), a.clone(), a.clone()], &[1.0, 2.0, 3.0]).unwrap();
        assert!(out.max_abs_diff(&a) <= 1e-12);
    }

    #[test]
    fn errors() {
        let spec = ModelSpec::mlp(3, &[4], 2).unwrap();
        let a = init_params(&spec, 1).unwrap();
        assert!(matches!(fedavg(&[], &[]), Err(Error::Aggregation(_))));
        assert!(matches!(fedavg(&[a.clone(), a.clone()], &[0.0, 0.0]), Err(Error::Aggregation(_))));
        assert!(matches!(fedavg(std::slice::from_ref(&a), &[1.0, 1.0]), Err(Error::Aggregation(_))));
        assert!(matches!(fedavg(&[a.clone(), a.clone()], &[1.0, -1.0]), Err(Error::Aggregation(_))));
        assert!(matches!(fedavg(&[a, vector(&[1.0, 2.0])], &[1.0, 1.0]), Err(Error::Aggregation(_))));
    }
}
