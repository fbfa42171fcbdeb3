use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a sequential network.
///
/// Convolutions are 3×3 with stride 1 and padding 1; pooling is 2×2 max
/// with stride 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv3x3 { out_channels: usize },
    Maxpool2x2,
    Relu,
    Dropout { rate: f64 },
    Flatten,
    Dense { units: usize },
}

/// Activation shape `(channels, height, width)`; flat vectors are `(n, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_flat(&self) -> bool {
        self.height == 1 && self.width == 1
    }
}

/// A trainable parameter tensor declared by a layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub is_bias: bool,
    pub layer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Convolutional feature extractor shared by the audio-pretrained network
    /// and the SSVEP network.
    fn vgg_prefix(channels: [usize; 6]) -> Vec<LayerSpec> {
        use LayerSpec::*;
        let [c1, c2, c3, c4, c5, c6] = channels;
        vec![
            Conv3x3 { out_channels: c1 },
            Relu,
            Maxpool2x2,
            Conv3x3 { out_channels: c2 },
            Relu,
            Maxpool2x2,
            Conv3x3 { out_channels: c3 },
            Relu,
            Conv3x3 { out_channels: c4 },
            Relu,
            Maxpool2x2,
            Conv3x3 { out_channels: c5 },
            Relu,
            Conv3x3 { out_channels: c6 },
            Relu,
            Maxpool2x2,
            Flatten,
        ]
    }

    fn classifier_head(hidden: usize, n_classes: usize) -> Vec<LayerSpec> {
        use LayerSpec::*;
        vec![
            Dropout { rate: 0.5 },
            Dense { units: hidden },
            Relu,
            Dropout { rate: 0.5 },
            Dense { units: n_classes },
        ]
    }

    /// The 2-class SSVEP network on 1×96×64 inputs.
    pub fn ssvep_default() -> Self {
        let mut layers = Self::vgg_prefix([64, 128, 256, 256, 512, 512]);
        layers.extend(Self::classifier_head(512, 2));
        Self {
            input: Shape::new(1, 96, 64),
            layers,
        }
    }

    /// The audio-pretrained source network (ReLU on every dense layer,
    /// 128-d embedding output).
    pub fn vggish() -> Self {
        use LayerSpec::*;
        let mut layers = Self::vgg_prefix([64, 128, 256, 256, 512, 512]);
        for units in [4096, 4096, 128] {
            layers.push(Dense { units });
            layers.push(Relu);
        }
        Self {
            input: Shape::new(1, 96, 64),
            layers,
        }
    }

    /// Same topology as [`NetworkSpec::ssvep_default`] with 8/16/32/32/32/32
    /// channels on 24×16 inputs and a 32-unit hidden layer.
    pub fn scaled_down() -> Self {
        let mut layers = Self::vgg_prefix([8, 16, 32, 32, 32, 32]);
        layers.extend(Self::classifier_head(32, 2));
        Self {
            input: Shape::new(1, 24, 16),
            layers,
        }
    }

    /// conv8 → ReLU → pool → dense 2, on 24×16 inputs.
    pub fn tiny() -> Self {
        use LayerSpec::*;
        Self {
            input: Shape::new(1, 24, 16),
            layers: vec![
                Conv3x3 { out_channels: 8 },
                Relu,
                Maxpool2x2,
                Flatten,
                Dense { units: 2 },
            ],
        }
    }

    /// Output shape of every layer, in order. Validates the whole chain.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shape = self.input;
        if shape.is_empty() {
            return Err(Error::Shape("network input shape is empty".into()));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match *layer {
                LayerSpec::Conv3x3 { out_channels } => {
                    if out_channels == 0 {
                        return Err(Error::Shape(format!("layer {i}: conv with zero channels")));
                    }
                    if shape.is_flat() && i > 0 && self.flattened_before(i) {
                        return Err(Error::Shape(format!("layer {i}: conv after flatten")));
                    }
                    Shape::new(out_channels, shape.height, shape.width)
                }
                LayerSpec::Maxpool2x2 => {
                    if shape.height < 2 || shape.width < 2 {
                        return Err(Error::Shape(format!(
                            "layer {i}: cannot pool a {}×{} map",
                            shape.height, shape.width
                        )));
                    }
                    Shape::new(shape.channels, shape.height / 2, shape.width / 2)
                }
                LayerSpec::Relu => shape,
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::Shape(format!(
                            "layer {i}: dropout rate {rate} outside [0, 1)"
                        )));
                    }
                    shape
                }
                LayerSpec::Flatten => Shape::new(shape.len(), 1, 1),
                LayerSpec::Dense { units } => {
                    if !shape.is_flat() {
                        return Err(Error::Shape(format!(
                            "layer {i}: dense layer needs a flattened input, got {shape:?}"
                        )));
                    }
                    if units == 0 {
                        return Err(Error::Shape(format!("layer {i}: dense with zero units")));
                    }
                    Shape::new(units, 1, 1)
                }
            };
            out.push(shape);
        }
        Ok(out)
    }

    fn flattened_before(&self, i: usize) -> bool {
        self.layers[..i]
            .iter()
            .any(|l| matches!(l, LayerSpec::Flatten | LayerSpec::Dense { .. }))
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(self.shapes()?.last().copied().unwrap_or(self.input))
    }

    /// Final layer width (number of classes for a classifier).
    pub fn n_outputs(&self) -> Result<usize> {
        Ok(self.output_shape()?.len())
    }

    /// Input shape of every layer.
    pub fn input_shapes(&self) -> Result<Vec<Shape>> {
        let shapes = self.shapes()?;
        Ok(std::iter::once(self.input)
            .chain(shapes.iter().copied())
            .take(self.layers.len())
            .collect())
    }

    /// Parameter tensors in layer order. Convolutions are named `convK`,
    /// dense layers `fcK` (1-based ordinals per kind).
    pub fn param_specs(&self) -> Result<Vec<ParamSpec>> {
        let inputs = self.input_shapes()?;
        let (mut n_conv, mut n_fc) = (0, 0);
        let mut out = Vec::new();
        for (i, (layer, input)) in self.layers.iter().zip(&inputs).enumerate() {
            let (prefix, w_shape, fan_in, n_out) = match *layer {
                LayerSpec::Conv3x3 { out_channels } => {
                    n_conv += 1;
                    (
                        format!("conv{n_conv}"),
                        vec![out_channels, input.channels, 3, 3],
                        input.channels * 9,
                        out_channels,
                    )
                }
                LayerSpec::Dense { units } => {
                    n_fc += 1;
                    (
                        format!("fc{n_fc}"),
                        vec![units, input.len()],
                        input.len(),
                        units,
                    )
                }
                _ => continue,
            };
            out.push(ParamSpec {
                name: format!("{prefix}.weight"),
                shape: w_shape,
                fan_in,
                is_bias: false,
                layer: i,
            });
            out.push(ParamSpec {
                name: format!("{prefix}.bias"),
                shape: vec![n_out],
                fan_in,
                is_bias: true,
                layer: i,
            });
        }
        Ok(out)
    }

    pub fn n_params(&self) -> Result<usize> {
        Ok(self
            .param_specs()?
            .iter()
            .map(|p| p.shape.iter().product::<usize>())
            .sum())
    }
}
