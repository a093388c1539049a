use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride-1 "same"-padded convolution; `kernel` is 1 or 3.
    Conv {
        kernel: usize,
        filters: usize,
        activation: Activation,
    },
    /// Non-overlapping max pooling; `size` is always 2.
    MaxPool { size: usize },
    /// Global average pooling over all spatial positions.
    AvgPool,
    /// Fully connected over the flattened input.
    Dense {
        units: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn conv(kernel: usize, filters: usize) -> Self {
        LayerSpec::Conv {
            kernel,
            filters,
            activation: Activation::Relu,
        }
    }

    pub fn maxpool() -> Self {
        LayerSpec::MaxPool { size: 2 }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv {
                kernel, filters, ..
            } => {
                write!(f, "Convolutional {kernel}x{kernel}, {filters}")
            }
            LayerSpec::MaxPool { size } => write!(f, "Max pooling {size}x{size}"),
            LayerSpec::AvgPool => write!(f, "Average pooling"),
            LayerSpec::Dense { units, .. } => write!(f, "Fully connected, {units}"),
        }
    }
}

/// Spatial activation shape; vectors are `1 x 1 x n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Dims {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_vec(&self) -> Vec<usize> {
        vec![self.height, self.width, self.channels]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Dims,
    pub layers: Vec<LayerSpec>,
    pub classes: usize,
}

impl NetworkSpec {
    /// Output shape of every layer, in order; fails on the first layer that
    /// cannot accept its input.
    pub fn layer_shapes(&self) -> Result<Vec<Dims>> {
        if self.input.is_empty() {
            return Err(Error::InvalidNetwork(format!(
                "input shape {:?} has a zero dimension",
                self.input.as_vec()
            )));
        }
        let mut cur = self.input;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = output_dims(layer, cur)
                .map_err(|why| Error::InvalidNetwork(format!("layer {i} ({layer}): {why}")))?;
            shapes.push(cur);
        }
        Ok(shapes)
    }

    /// Checks shape composition and that the head is a dense layer with `classes` units.
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidNetwork(
                "at least two classes are required".into(),
            ));
        }
        self.layer_shapes()?;
        match self.layers.last() {
            Some(LayerSpec::Dense {
                units,
                activation: Activation::None,
            }) if *units == self.classes => Ok(()),
            _ => Err(Error::InvalidNetwork(format!(
                "final layer must be a dense layer with {} units and no activation",
                self.classes
            ))),
        }
    }

    /// `(weight shape, bias shape)` for every parameterized layer, in layer order.
    pub fn param_shapes(&self) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        let mut prev = self.input;
        let mut out = Vec::new();
        for (layer, dims) in self.layers.iter().zip(self.layer_shapes()?) {
            match *layer {
                LayerSpec::Conv {
                    kernel, filters, ..
                } => {
                    out.push((vec![kernel, kernel, prev.channels, filters], vec![filters]));
                }
                LayerSpec::Dense { units, .. } => out.push((vec![prev.len(), units], vec![units])),
                _ => {}
            }
            prev = dims;
        }
        Ok(out)
    }

    pub fn num_params(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .map(|(w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .sum())
    }
}

fn output_dims(layer: &LayerSpec, input: Dims) -> std::result::Result<Dims, String> {
    match *layer {
        LayerSpec::Conv {
            kernel, filters, ..
        } => {
            if kernel != 1 && kernel != 3 {
                return Err(format!("conv kernel must be 1 or 3, got {kernel}"));
            }
            if filters == 0 {
                return Err("conv needs at least one filter".into());
            }
            Ok(Dims::new(input.height, input.width, filters))
        }
        LayerSpec::MaxPool { size } => {
            if size != 2 {
                return Err(format!("max pooling must be 2x2, got {size}x{size}"));
            }
            if !input.height.is_multiple_of(2) || !input.width.is_multiple_of(2) {
                return Err(format!(
                    "input {}x{} is not divisible by the 2x2 pool",
                    input.height, input.width
                ));
            }
            Ok(Dims::new(input.height / 2, input.width / 2, input.channels))
        }
        LayerSpec::AvgPool => Ok(Dims::new(1, 1, input.channels)),
        LayerSpec::Dense { units, .. } => {
            if units == 0 {
                return Err("dense layer needs at least one unit".into());
            }
            Ok(Dims::new(1, 1, units))
        }
    }
}

/// Widths of the three stages of the feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPlan(pub usize, pub usize, pub usize);

impl ChannelPlan {
    /// Full-size widths (128, 256, 128).
    pub const FULL: ChannelPlan = ChannelPlan(128, 256, 128);
    /// Desk-scale widths (8, 16, 8).
    pub const DESK: ChannelPlan = ChannelPlan(8, 16, 8);
}

/// The eleven-layer extraction block: three 3x3 / 1x1 / 3x3 stages, the first
/// two followed by 2x2 max pooling.
pub fn extraction_block(plan: ChannelPlan) -> Vec<LayerSpec> {
    let ChannelPlan(a, b, c) = plan;
    vec![
        LayerSpec::conv(3, a),
        LayerSpec::conv(1, a),
        LayerSpec::conv(3, a),
        LayerSpec::maxpool(),
        LayerSpec::conv(3, b),
        LayerSpec::conv(1, b),
        LayerSpec::conv(3, b),
        LayerSpec::maxpool(),
        LayerSpec::conv(3, c),
        LayerSpec::conv(1, c),
        LayerSpec::conv(3, c),
    ]
}

/// Index range of the extraction block inside a [`build_classifier`] network.
pub const EXTRACTION_BLOCK: std::ops::Range<usize> = 2..13;

/// Stem (3x3 conv + pool), extraction block, global average pool, dense head.
///
/// The stem and block contain three 2x2 pools, so `input_size` must be a
/// multiple of 8.
pub fn build_classifier(
    input_size: usize,
    in_channels: usize,
    plan: ChannelPlan,
    classes: usize,
) -> Result<NetworkSpec> {
    if input_size == 0 || !input_size.is_multiple_of(8) {
        return Err(Error::InvalidNetwork(format!(
            "input size {input_size} must be a positive multiple of 8 (three 2x2 pools)"
        )));
    }
    let mut layers = vec![LayerSpec::conv(3, plan.0), LayerSpec::maxpool()];
    layers.extend(extraction_block(plan));
    layers.push(LayerSpec::AvgPool);
    layers.push(LayerSpec::Dense {
        units: classes,
        activation: Activation::None,
    });
    let spec = NetworkSpec {
        input: Dims::new(input_size, input_size, in_channels),
        layers,
        classes,
    };
    spec.validate()?;
    Ok(spec)
}
