//! Layered networks: construction, parameter storage, forward and backward
//! passes.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::ops::{self, Activation, ConvGeometry, PoolGeometry};
use super::softmax::softmax;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// One layer of a network description. Shapes are inferred from the input
/// shape when the network is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    /// Fully connected; multi-dimensional inputs are flattened.
    Dense {
        outputs: usize,
        #[serde(default)]
        bias: bool,
    },
    /// Square-kernel convolution over `(channels, height, width)` inputs.
    Conv {
        out_channels: usize,
        kernel: usize,
        #[serde(default)]
        padding: usize,
        #[serde(default)]
        bias: bool,
    },
    MaxPool {
        window: usize,
    },
    Activation {
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn dense(outputs: usize) -> Self {
        LayerSpec::Dense { outputs, bias: false }
    }

    pub fn conv(out_channels: usize, kernel: usize) -> Self {
        LayerSpec::Conv {
            out_channels,
            kernel,
            padding: 0,
            bias: false,
        }
    }

    pub fn relu() -> Self {
        LayerSpec::Activation {
            activation: Activation::Relu,
        }
    }

    pub fn abs() -> Self {
        LayerSpec::Activation {
            activation: Activation::Abs,
        }
    }

    pub fn max_pool(window: usize) -> Self {
        LayerSpec::MaxPool { window }
    }
}

/// Input shape plus layer list; enough to build a [`Network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// `inputs -> hidden -> classes`, ReLU between, bias-free.
    pub fn two_layer_dense(inputs: usize, hidden: usize, classes: usize) -> Self {
        Self {
            input_shape: vec![inputs],
            layers: vec![LayerSpec::dense(hidden), LayerSpec::relu(), LayerSpec::dense(classes)],
        }
    }

    /// Two conv/pool stages followed by two dense layers.
    pub fn lenet(input_shape: [usize; 3], classes: usize, hidden: usize) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            layers: vec![
                LayerSpec::conv(6, 5),
                LayerSpec::relu(),
                LayerSpec::max_pool(2),
                LayerSpec::conv(16, 5),
                LayerSpec::relu(),
                LayerSpec::max_pool(2),
                LayerSpec::dense(hidden),
                LayerSpec::relu(),
                LayerSpec::dense(classes),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
        bias: bool,
        slot: usize,
    },
    Conv {
        geom: ConvGeometry,
        bias: bool,
        slot: usize,
    },
    MaxPool(PoolGeometry),
    Activation(Activation),
}

impl Layer {
    fn slot(&self) -> Option<usize> {
        match *self {
            Layer::Dense { slot, .. } | Layer::Conv { slot, .. } => Some(slot),
            _ => None,
        }
    }
}

/// A feed-forward classifier producing the pre-soft-max vector.
///
/// Parameters are stored as one flat vector per parameterized layer (dense or
/// convolution), weights first and bias (if any) last. Every parameter change
/// gets a fresh version number, which [`Cache`] records so that a backward
/// pass against stale activations is rejected.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    params: Vec<Vec<f64>>,
    classes: usize,
    version: u64,
}

/// Activations recorded by [`Network::forward`].
#[derive(Debug, Clone)]
pub struct Cache {
    version: u64,
    inputs: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Pre-soft-max vector.
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub cache: Cache,
}

impl Network {
    /// Builds a network with all parameters zero.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        if spec.input_shape.is_empty() || spec.input_shape.contains(&0) {
            return Err(Error::config(format!("invalid input shape {:?}", spec.input_shape)));
        }
        let mut shape = spec.input_shape.clone();
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut params = Vec::new();
        let mut last_param_outputs = None;
        for (i, ls) in spec.layers.iter().enumerate() {
            let layer = match *ls {
                LayerSpec::Dense { outputs, bias } => {
                    if outputs == 0 {
                        return Err(Error::config(format!("layer {i}: dense layer needs outputs > 0")));
                    }
                    let inputs = shape.iter().product();
                    params.push(vec![0.0; inputs * outputs + if bias { outputs } else { 0 }]);
                    shape = vec![outputs];
                    Layer::Dense {
                        inputs,
                        outputs,
                        bias,
                        slot: params.len() - 1,
                    }
                }
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    padding,
                    bias,
                } => {
                    let [c, h, w] = shape[..] else {
                        return Err(Error::config(format!(
                            "layer {i}: convolution needs a (channels, height, width) input, got {shape:?}"
                        )));
                    };
                    let geom = ConvGeometry::new(c, h, w, out_channels, kernel, padding)
                        .map_err(|e| Error::config(format!("layer {i}: {e}")))?;
                    params.push(vec![0.0; geom.kernel_len() + if bias { out_channels } else { 0 }]);
                    shape = vec![out_channels, geom.out_height(), geom.out_width()];
                    Layer::Conv {
                        geom,
                        bias,
                        slot: params.len() - 1,
                    }
                }
                LayerSpec::MaxPool { window } => {
                    let geom = match shape[..] {
                        [n] => PoolGeometry::new(1, 1, n, 1, window),
                        [h, w] => PoolGeometry::new(1, h, w, window, window),
                        [c, h, w] => PoolGeometry::new(c, h, w, window, window),
                        _ => Err(Error::config(format!("unsupported pooling input shape {shape:?}"))),
                    }
                    .map_err(|e| Error::config(format!("layer {i}: {e}")))?;
                    shape = match shape.len() {
                        1 => vec![geom.out_width()],
                        2 => vec![geom.out_height(), geom.out_width()],
                        _ => vec![geom.channels, geom.out_height(), geom.out_width()],
                    };
                    Layer::MaxPool(geom)
                }
                LayerSpec::Activation { activation } => Layer::Activation(activation),
            };
            if layer.slot().is_some() {
                last_param_outputs = Some(shape.iter().product::<usize>());
            }
            layers.push(layer);
        }
        let classes: usize = shape.iter().product();
        match last_param_outputs {
            None => return Err(Error::config("network has no parameterized layer")),
            Some(n) if n != classes => {
                return Err(Error::config(format!(
                    "last parameterized layer has {n} outputs but the network emits {classes}"
                )))
            }
            _ => {}
        }
        if classes < 2 {
            return Err(Error::config("network must emit at least 2 classes"));
        }
        Ok(Self {
            spec,
            layers,
            params,
            classes,
            version: fresh_version(),
        })
    }

    /// Builds a network and installs the given parameters.
    pub fn with_params(spec: NetworkSpec, params: Vec<Vec<f64>>) -> Result<Self> {
        let mut net = Self::new(spec)?;
        net.set_params(params)?;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.spec.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.spec.input_shape.iter().product()
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    /// Homogeneity degree: number of parameterized layers.
    pub fn degree(&self) -> usize {
        self.params.len()
    }

    pub fn has_bias(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, Layer::Dense { bias: true, .. } | Layer::Conv { bias: true, .. }))
    }

    /// Inputs feeding each output unit, per parameterized layer.
    pub fn fan_ins(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match *l {
                Layer::Dense { inputs, .. } => Some(inputs),
                Layer::Conv { geom, .. } => Some(geom.in_channels * geom.kernel * geom.kernel),
                _ => None,
            })
            .collect()
    }

    /// Number of weights (excluding any bias) per parameterized layer.
    pub fn weight_counts(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match *l {
                Layer::Dense { inputs, outputs, .. } => Some(inputs * outputs),
                Layer::Conv { geom, .. } => Some(geom.kernel_len()),
                _ => None,
            })
            .collect()
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn set_params(&mut self, params: Vec<Vec<f64>>) -> Result<()> {
        if params.len() != self.params.len() || params.iter().zip(&self.params).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::input("parameter layout does not match the network"));
        }
        self.params = params;
        self.version = fresh_version();
        Ok(())
    }

    /// Mutates parameters in place, one parameterized layer at a time.
    pub fn update_params(&mut self, mut f: impl FnMut(usize, &mut [f64])) {
        for (i, p) in self.params.iter_mut().enumerate() {
            f(i, p);
        }
        self.version = fresh_version();
    }

    /// Copy of this network with every parameter multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.update_params(|_, p| p.iter_mut().for_each(|v| *v *= c));
        out
    }

    /// Zero-valued gradient buffer with the parameter layout.
    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| vec![0.0; p.len()]).collect()
    }

    /// Pre-soft-max vector only, without recording a cache.
    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = self.apply(layer, &x).0;
        }
        Ok(x)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Forward> {
        if input.shape() != self.input_shape() {
            return Err(Error::input(format!(
                "input shape {:?} does not match network input {:?}",
                input.shape(),
                self.input_shape()
            )));
        }
        self.forward_values(input.values())
    }

    /// Forward pass on a flat input of the right length.
    pub fn forward_values(&self, input: &[f64]) -> Result<Forward> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut argmax = Vec::new();
        let mut x = input.to_vec();
        for layer in &self.layers {
            let (y, am) = self.apply(layer, &x);
            if let Some(am) = am {
                argmax.push(am);
            }
            inputs.push(std::mem::replace(&mut x, y));
        }
        let probs = softmax(&x)?;
        Ok(Forward {
            logits: x,
            probs,
            cache: Cache {
                version: self.version,
                inputs,
                argmax,
            },
        })
    }

    /// Gradient of `dx · logits` with respect to every parameter, accumulated
    /// into `grads` (parameter layout).
    pub fn backward_into(&self, cache: &Cache, dx: &[f64], grads: &mut [Vec<f64>]) -> Result<()> {
        if cache.version != self.version {
            return Err(Error::InvalidState(format!(
                "cache recorded for parameter version {} but network is at {}",
                cache.version, self.version
            )));
        }
        if dx.len() != self.classes {
            return Err(Error::input(format!(
                "gradient has {} entries, expected {}",
                dx.len(),
                self.classes
            )));
        }
        let first_param = self.layers.iter().position(|l| l.slot().is_some()).unwrap_or(0);
        let mut g = dx.to_vec();
        let mut pool_idx = cache.argmax.len();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            let want_input = i > first_param;
            let next = match *layer {
                Layer::Dense {
                    outputs, bias, slot, ..
                } => {
                    let w = &self.params[slot][..x.len() * outputs];
                    ops::dense_backward(x, w, &g, &mut grads[slot], bias, want_input)
                }
                Layer::Conv { geom, bias, slot } => {
                    let w = &self.params[slot][..geom.kernel_len()];
                    ops::conv_backward(x, w, &g, &mut grads[slot], bias, &geom, want_input)
                }
                Layer::MaxPool(geom) => {
                    pool_idx -= 1;
                    Some(ops::maxpool_backward(&g, &cache.argmax[pool_idx], geom.input_len()))
                }
                Layer::Activation(act) => Some(act.backward(x, &g)),
            };
            match next {
                Some(n) => g = n,
                None => break,
            }
        }
        Ok(())
    }

    /// Gradient of `dx · logits` with respect to the parameters.
    pub fn backward(&self, cache: &Cache, dx: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut grads = self.zero_grads();
        self.backward_into(cache, dx, &mut grads)?;
        Ok(grads)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::input(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_len()
            )));
        }
        Ok(())
    }

    fn apply(&self, layer: &Layer, x: &[f64]) -> (Vec<f64>, Option<Vec<usize>>) {
        match *layer {
            Layer::Dense {
                inputs,
                outputs,
                bias,
                slot,
            } => {
                let p = &self.params[slot];
                let b = bias.then(|| &p[inputs * outputs..]);
                (ops::dense(x, &p[..inputs * outputs], b, outputs), None)
            }
            Layer::Conv { geom, bias, slot } => {
                let p = &self.params[slot];
                let b = bias.then(|| &p[geom.kernel_len()..]);
                (ops::conv(x, &p[..geom.kernel_len()], b, &geom), None)
            }
            Layer::MaxPool(geom) => {
                let (y, am) = ops::maxpool(x, &geom);
                (y, Some(am))
            }
            Layer::Activation(act) => (act.forward(x), None),
        }
    }
}
