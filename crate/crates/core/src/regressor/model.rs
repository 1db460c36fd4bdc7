use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::autodiff::{Graph, GraphError, NodeId, Tensor};
use crate::rng;
use crate::synth::ImageTensor;

/// Resolutions the fixed architecture is built for.
pub const SUPPORTED_RESOLUTIONS: [usize; 3] = [32, 64, 128];

/// Normalization used before training sets it from data: the range of the
/// ground-truth stress law over the unit attribute box.
pub const DEFAULT_LABEL_RANGE: (f64, f64) = (100.0, 190.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    Silu,
    GlobalAvgPool,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerSpec {
    /// Shapes of the layer's weight and bias tensors, if it has any.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![vec![out_channels, in_channels, kernel, kernel], vec![out_channels]],
            LayerSpec::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            LayerSpec::Relu | LayerSpec::Silu | LayerSpec::GlobalAvgPool => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }
}

/// conv(1->8) silu conv(8->16) silu conv(16->32) silu, all 3x3 stride 2 pad 1,
/// then global average pool, dense 32->16 silu, dense 16->1.
///
/// SiLU rather than ReLU: with ReLU the counterfactual objective has kinks
/// wherever a unit switches, and a trained network has enough units that a
/// finite-difference probe of the objective regularly straddles one.
pub fn default_architecture() -> Vec<LayerSpec> {
    let conv = |i, o| LayerSpec::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: 3,
        stride: 2,
        pad: 1,
    };
    vec![
        conv(1, 8),
        LayerSpec::Silu,
        conv(8, 16),
        LayerSpec::Silu,
        conv(16, 32),
        LayerSpec::Silu,
        LayerSpec::GlobalAvgPool,
        LayerSpec::Dense { inputs: 32, outputs: 16 },
        LayerSpec::Silu,
        LayerSpec::Dense { inputs: 16, outputs: 1 },
    ]
}

/// The stress regressor: a layer list, its parameters and the label
/// normalization mapping network outputs in `[0, 1]` to stress units.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorModel {
    layers: Vec<LayerSpec>,
    params: Vec<Tensor>,
    resolution: usize,
    label_min: f64,
    label_max: f64,
}

/// Parameter leaves of one graph, in model order.
#[derive(Debug, Clone)]
pub struct ParamNodes(pub Vec<NodeId>);

impl RegressorModel {
    /// He-scaled Gaussian weights drawn from `seed`, zero biases except the
    /// output bias which starts at mid-range.
    pub fn init(resolution: usize, seed: u64) -> Result<Self, ModelError> {
        if !SUPPORTED_RESOLUTIONS.contains(&resolution) {
            return Err(ModelError::UnsupportedResolution(resolution));
        }
        let layers = default_architecture();
        let mut params = Vec::new();
        let n_layers = layers.len();
        for (li, layer) in layers.iter().enumerate() {
            let shapes = layer.param_shapes();
            if shapes.is_empty() {
                continue;
            }
            let std = (2.0 / layer.fan_in() as f64).sqrt();
            let key = rng::derive_key(seed, &[li as u64]);
            let n: usize = shapes[0].iter().product();
            let w: Vec<f64> = (0..n as u64).map(|i| std * rng::draw_normal(key, 2 * i)).collect();
            params.push(Tensor::new(shapes[0].clone(), w).expect("shape"));
            let bias = if li + 1 == n_layers { 0.5 } else { 0.0 };
            params.push(Tensor::full(&shapes[1], bias));
        }
        Self::from_parts(layers, params, resolution, DEFAULT_LABEL_RANGE)
    }

    pub fn from_parts(
        layers: Vec<LayerSpec>,
        params: Vec<Tensor>,
        resolution: usize,
        label_range: (f64, f64),
    ) -> Result<Self, ModelError> {
        let expected: Vec<Vec<usize>> = layers.iter().flat_map(|l| l.param_shapes()).collect();
        if expected.len() != params.len() || expected.iter().zip(&params).any(|(s, p)| s.as_slice() != p.shape()) {
            return Err(ModelError::Inconsistent(format!(
                "descriptor expects {} tensors {:?}",
                expected.len(),
                expected
            )));
        }
        if !(label_range.1 > label_range.0) || !label_range.0.is_finite() || !label_range.1.is_finite() {
            return Err(ModelError::Normalization(label_range.0, label_range.1));
        }
        Ok(Self {
            layers,
            params,
            resolution,
            label_min: label_range.0,
            label_max: label_range.1,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn label_range(&self) -> (f64, f64) {
        (self.label_min, self.label_max)
    }

    pub(crate) fn set_label_range(&mut self, range: (f64, f64)) -> Result<(), ModelError> {
        if !(range.1 > range.0) {
            return Err(ModelError::Normalization(range.0, range.1));
        }
        self.label_min = range.0;
        self.label_max = range.1;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Names like `layer0.weight`, in parameter order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            if !layer.param_shapes().is_empty() {
                names.push(format!("layer{li}.weight"));
                names.push(format!("layer{li}.bias"));
            }
        }
        names
    }

    pub fn normalize(&self, stress: f64) -> f64 {
        (stress - self.label_min) / (self.label_max - self.label_min)
    }

    pub fn denormalize(&self, value: f64) -> f64 {
        self.label_min + value * (self.label_max - self.label_min)
    }

    /// Adds the parameters to `graph`, as trainable leaves when `trainable`.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> ParamNodes {
        ParamNodes(
            self.params
                .iter()
                .map(|p| if trainable { graph.param(p.clone()) } else { graph.constant(p.clone()) })
                .collect(),
        )
    }

    /// Appends the network to `graph`. `input` must be `[1, h, w]`; any
    /// spatial size the convolutions accept works. Returns the normalized
    /// scalar output.
    pub fn forward(&self, graph: &mut Graph, input: NodeId, params: &ParamNodes) -> Result<NodeId, GraphError> {
        let mut x = input;
        let mut p = params.0.iter();
        for layer in &self.layers {
            x = match *layer {
                LayerSpec::Conv2d { stride, pad, .. } => {
                    let (w, b) = (*p.next().expect("weight"), *p.next().expect("bias"));
                    graph.conv2d(x, w, b, stride, pad)?
                }
                LayerSpec::Dense { .. } => {
                    let (w, b) = (*p.next().expect("weight"), *p.next().expect("bias"));
                    graph.dense(x, w, b)?
                }
                LayerSpec::Relu => graph.relu(x)?,
                LayerSpec::Silu => graph.silu(x)?,
                LayerSpec::GlobalAvgPool => graph.global_avg_pool(x)?,
            };
        }
        Ok(x)
    }

    fn check_image(&self, image: &ImageTensor) -> Result<(), ModelError> {
        if image.shape() != (self.resolution, self.resolution) {
            return Err(ModelError::ResolutionMismatch {
                expected: self.resolution,
                got: image.shape(),
            });
        }
        Ok(())
    }

    /// Normalized network output for `image`.
    pub fn predict_normalized(&self, image: &ImageTensor) -> Result<f64, ModelError> {
        self.check_image(image)?;
        let mut g = Graph::new();
        let params = self.bind(&mut g, false);
        let x = g.constant(image.to_tensor());
        let y = self.forward(&mut g, x, &params)?;
        Ok(g.value(y).item())
    }

    /// Predicted peak stress in stress units.
    pub fn predict(&self, image: &ImageTensor) -> Result<f64, ModelError> {
        Ok(self.denormalize(self.predict_normalized(image)?))
    }
}
