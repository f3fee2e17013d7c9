use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Hidden widths of the default experiment model: `Dense(d,64) ReLU Dense(64,32) ReLU Dense(32,C)`.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Dense { in_dim: usize, out_dim: usize },
    Relu,
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match *self {
            Layer::Dense { in_dim, out_dim } => in_dim * out_dim + out_dim,
            Layer::Relu => 0,
        }
    }
}

/// An ordered, dimension-checked stack of layers.
///
/// Both full classifiers and the client/server halves produced by a split are
/// represented by this type; only [`ModelSpec::classifier`] enforces the
/// classifier-level constraints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    input_dim: usize,
    layers: Vec<Layer>,
    /// Input width of every layer followed by the model's output width.
    widths: Vec<usize>,
}

impl ModelSpec {
    /// Validates a layer chain of any length ≥ 1.
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Spec("input_dim must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::Spec("model has no layers".into()));
        }
        let mut widths = Vec::with_capacity(layers.len() + 1);
        let mut width = input_dim;
        widths.push(width);
        for (i, layer) in layers.iter().enumerate() {
            if let Layer::Dense { in_dim, out_dim } = *layer {
                if in_dim == 0 || out_dim == 0 {
                    return Err(Error::Spec(format!("layer {i}: Dense dims must be positive")));
                }
                if in_dim != width {
                    return Err(Error::Spec(format!(
                        "layer {i}: Dense expects input width {in_dim} but receives {width}"
                    )));
                }
                width = out_dim;
            }
            widths.push(width);
        }
        Ok(Self {
            input_dim,
            layers,
            widths,
        })
    }

    /// A full classification model: at least two layers and an output width
    /// equal to `num_classes`.
    pub fn classifier(input_dim: usize, layers: Vec<Layer>, num_classes: usize) -> Result<Self> {
        let spec = Self::new(input_dim, layers)?;
        if spec.layers.len() < 2 {
            return Err(Error::Spec("a classifier needs at least 2 layers".into()));
        }
        if !matches!(spec.layers.last(), Some(Layer::Dense { .. })) {
            return Err(Error::Spec("the last layer of a classifier must be Dense".into()));
        }
        if spec.output_dim() != num_classes {
            return Err(Error::Spec(format!(
                "last Dense outputs {} values but num_classes is {num_classes}",
                spec.output_dim()
            )));
        }
        Ok(spec)
    }

    /// `Dense–ReLU` blocks for each hidden width, then a final `Dense` to the classes.
    pub fn mlp(input_dim: usize, hidden: &[usize], num_classes: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(2 * hidden.len() + 1);
        let mut prev = input_dim;
        for &h in hidden {
            layers.push(Layer::Dense {
                in_dim: prev,
                out_dim: h,
            });
            layers.push(Layer::Relu);
            prev = h;
        }
        layers.push(Layer::Dense {
            in_dim: prev,
            out_dim: num_classes,
        });
        Self::classifier(input_dim, layers, num_classes)
    }

    pub fn default_experiment(input_dim: usize, num_classes: usize) -> Result<Self> {
        Self::mlp(input_dim, &DEFAULT_HIDDEN, num_classes)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("widths never empty")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Width of the activation entering layer `i` (`i == num_layers()` gives the output width).
    pub fn width_at(&self, i: usize) -> usize {
        self.widths[i]
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Sub-model made of the layers in `range`.
    pub(crate) fn slice(&self, range: Range<usize>) -> Result<Self> {
        let input = self.widths[range.start];
        Self::new(input, self.layers[range].to_vec())
    }

    /// Concatenates two chains; the widths at the seam must agree.
    pub(crate) fn concat(&self, tail: &ModelSpec) -> Result<Self> {
        if self.output_dim() != tail.input_dim {
            return Err(Error::Contract(format!(
                "cannot join models: head outputs {} but tail expects {}",
                self.output_dim(),
                tail.input_dim
            )));
        }
        let mut layers = self.layers.clone();
        layers.extend_from_slice(&tail.layers);
        Self::new(self.input_dim, layers)
    }
}

/// Trainable state of one layer. ReLU layers own nothing.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Dense { weight: Tensor, bias: Tensor },
    Empty,
}

/// Parameters for every layer of a [`ModelSpec`], in layer order.
///
/// Also used for gradients, which share the exact same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    layers: Vec<LayerParams>,
}

impl Params {
    pub fn from_layers(layers: Vec<LayerParams>) -> Self {
        Self { layers }
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        let layers = spec
            .layers()
            .iter()
            .map(|l| match *l {
                Layer::Dense { in_dim, out_dim } => LayerParams::Dense {
                    weight: Tensor::zeros(&[out_dim, in_dim]),
                    bias: Tensor::zeros(&[out_dim]),
                },
                Layer::Relu => LayerParams::Empty,
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &LayerParams {
        &self.layers[i]
    }

    pub(crate) fn layer_mut(&mut self, i: usize) -> &mut LayerParams {
        &mut self.layers[i]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Checks that every tensor has exactly the shape `spec` prescribes.
    pub fn check_matches(&self, spec: &ModelSpec) -> Result<()> {
        if self.layers.len() != spec.num_layers() {
            return Err(Error::Contract(format!(
                "params have {} layers, spec has {}",
                self.layers.len(),
                spec.num_layers()
            )));
        }
        for (i, (p, l)) in self.layers.iter().zip(spec.layers()).enumerate() {
            match (p, *l) {
                (LayerParams::Dense { weight, bias }, Layer::Dense { in_dim, out_dim }) => {
                    if weight.shape() != [out_dim, in_dim] || bias.shape() != [out_dim] {
                        return Err(Error::Shape {
                            layer: i,
                            expected: format!("weight [{out_dim}, {in_dim}], bias [{out_dim}]"),
                            found: format!("weight {:?}, bias {:?}", weight.shape(), bias.shape()),
                        });
                    }
                }
                (LayerParams::Empty, Layer::Relu) => {}
                _ => {
                    return Err(Error::Contract(format!(
                        "layer {i}: parameter kind does not match layer kind"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| match (a, b) {
                (
                    LayerParams::Dense { weight: wa, bias: ba },
                    LayerParams::Dense { weight: wb, bias: bb },
                ) => wa.shape() == wb.shape() && ba.shape() == bb.shape(),
                (LayerParams::Empty, LayerParams::Empty) => true,
                _ => false,
            })
    }

    /// All scalar values in a fixed order: per layer, weights then bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers.iter().flat_map(|l| match l {
            LayerParams::Dense { weight, bias } => {
                Box::new(weight.data().iter().chain(bias.data())) as Box<dyn Iterator<Item = &f64>>
            }
            LayerParams::Empty => Box::new(std::iter::empty()),
        })
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers.iter_mut().flat_map(|l| match l {
            LayerParams::Dense { weight, bias } => Box::new(
                weight.data_mut().iter_mut().chain(bias.data_mut().iter_mut()),
            )
                as Box<dyn Iterator<Item = &mut f64>>,
            LayerParams::Empty => Box::new(std::iter::empty()),
        })
    }

    pub fn param_count(&self) -> usize {
        self.values().count()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    /// Same layout as `self`, filled with `values` in [`Params::values`] order.
    pub fn with_flat(&self, values: &[f64]) -> Result<Params> {
        if values.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut out = self.clone();
        for (p, &v) in out.values_mut().zip(values) {
            *p = v;
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Largest elementwise distance; `f64::INFINITY` when shapes differ.
    pub fn max_abs_diff(&self, other: &Params) -> f64 {
        if !self.same_shape(other) {
            return f64::INFINITY;
        }
        self.values()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn split_at(&self, cut: usize) -> (Params, Params) {
        (
            Params::from_layers(self.layers[..cut].to_vec()),
            Params::from_layers(self.layers[cut..].to_vec()),
        )
    }

    pub(crate) fn concat(&self, tail: &Params) -> Params {
        let mut layers = self.layers.clone();
        layers.extend_from_slice(&tail.layers);
        Params::from_layers(layers)
    }
}

/// Glorot-uniform weights in `(-a, a)` with `a = sqrt(6 / (in + out))`, zero biases.
///
/// Layers are filled in order, each weight matrix row-major, from a single
/// ChaCha8 stream seeded with `seed`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<Params> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(spec.num_layers());
    for layer in spec.layers() {
        match *layer {
            Layer::Dense { in_dim, out_dim } => {
                let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
                let dist = Uniform::new(-a, a).map_err(|e| Error::Spec(e.to_string()))?;
                let w: Vec<f64> = (0..in_dim * out_dim).map(|_| dist.sample(&mut rng)).collect();
                layers.push(LayerParams::Dense {
                    weight: Tensor::new(vec![out_dim, in_dim], w)?,
                    bias: Tensor::zeros(&[out_dim]),
                });
            }
            Layer::Relu => layers.push(LayerParams::Empty),
        }
    }
    Ok(Params::from_layers(layers))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_incompatible_chain() {
        let layers = vec![
            Layer::Dense { in_dim: 4, out_dim: 3 },
            Layer::Relu,
            Layer::Dense { in_dim: 2, out_dim: 2 },
        ];
        assert!(matches!(ModelSpec::new(4, layers), Err(Error::Spec(_))));
    }

    #[test]
    fn classifier_constraints() {
        let one = vec![Layer::Dense { in_dim: 4, out_dim: 3 }];
        assert!(ModelSpec::classifier(4, one, 3).is_err());
        let two = vec![Layer::Dense { in_dim: 4, out_dim: 3 }, Layer::Relu];
        assert!(ModelSpec::classifier(4, two, 3).is_err());
        assert!(ModelSpec::mlp(4, &[5], 2).is_ok());
        assert!(ModelSpec::classifier(
            4,
            vec![Layer::Relu, Layer::Dense { in_dim: 4, out_dim: 2 }],
            3
        )
        .is_err());
    }

    #[test]
    fn default_model_layout() {
        let spec = ModelSpec::default_experiment(16, 4).unwrap();
        assert_eq!(spec.num_layers(), 5);
        assert_eq!(spec.param_count(), 16 * 64 + 64 + 64 * 32 + 32 + 32 * 4 + 4);
        assert_eq!(spec.width_at(2), 64);
    }

    #[test]
    fn init_is_deterministic_with_zero_bias_and_bounded_weights() {
        let spec = ModelSpec::mlp(100, &[100], 3).unwrap();
        let a = init_params(&spec, 7).unwrap();
        let b = init_params(&spec, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(&spec, 8).unwrap());
        let bound = (6.0f64 / 200.0).sqrt();
        match a.layer(0) {
            LayerParams::Dense { weight, bias } => {
                assert!(weight.data().iter().all(|w| w.abs() < bound));
                assert!(bias.data().iter().all(|&b| b == 0.0));
            }
            LayerParams::Empty => unreachable!(),
        }
        if let LayerParams::Dense { bias, .. } = a.layer(2) {
            assert!(bias.data().iter().all(|&b| b == 0.0));
        }
        assert_eq!(a.param_count(), spec.param_count());
    }
}
