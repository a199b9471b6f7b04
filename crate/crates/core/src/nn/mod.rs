//! Small CNN runtime whose convolution layers run through the simulated
//! optical engine and camera.
//!
//! Pooling, flatten and dense layers execute digitally at full precision.

mod dataset;
mod eval;
mod format;
pub mod reference;
mod runtime;

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, FilterBank, MultiChannelImage};
use crate::tiling::Scheme;

pub use dataset::{load_dataset, save_dataset, Dataset};
pub use eval::{evaluate, EvalConfig, EvalReport, LayerMse};
pub use format::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use runtime::{Calibration, Exposure, Forward, Pipeline, Runtime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Abs,
    Relu,
    None,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Abs => v.abs(),
            Activation::Relu => v.max(0.0),
            Activation::None => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub weights: FilterBank,
    pub scheme: Scheme,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[outputs, inputs]`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    Pool { kind: PoolKind, size: usize },
    Flatten,
    Dense(DenseLayer),
    Activation(Activation),
}

/// Value flowing between layers.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Image(MultiChannelImage),
    Vector(Array1<f64>),
}

impl Tensor {
    pub fn into_image(self) -> Result<MultiChannelImage> {
        match self {
            Tensor::Image(x) => Ok(x),
            Tensor::Vector(v) => Err(Error::Shape(format!(
                "expected an image, got a vector of {}",
                v.len()
            ))),
        }
    }

    pub fn into_vector(self) -> Result<Array1<f64>> {
        match self {
            Tensor::Vector(v) => Ok(v),
            Tensor::Image(_) => Err(Error::Shape("expected a vector, got an image".into())),
        }
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Tensor {
        match self {
            Tensor::Image(x) => {
                Tensor::Image(MultiChannelImage::new(x.into_inner().mapv(f)).expect("same shape"))
            }
            Tensor::Vector(v) => Tensor::Vector(v.mapv(f)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub name: String,
    pub seed: u64,
    pub input_side: usize,
    pub input_channels: usize,
    /// SLM side the model was laid out for.
    pub slm_side: usize,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Image { channels: usize, side: usize },
    Vector(usize),
}

impl Model {
    /// Checks that layer shapes chain and returns the number of classes.
    pub fn validate(&self) -> Result<usize> {
        let mut shape = Shape::Image {
            channels: self.input_channels,
            side: self.input_side,
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: String| Error::Shape(format!("layer {i}: {msg}"));
            shape = match (layer, shape) {
                (Layer::Conv(c), Shape::Image { channels, side }) => {
                    c.spec.validate()?;
                    if c.spec.channels != channels || c.spec.input != side {
                        return Err(bad(format!(
                            "conv expects {}x{}x{}, got {channels}x{side}x{side}",
                            c.spec.channels, c.spec.input, c.spec.input
                        )));
                    }
                    let w = c.weights.data().dim();
                    if w != (
                        c.spec.filters,
                        c.spec.channels,
                        c.spec.kernel,
                        c.spec.kernel,
                    ) {
                        return Err(bad(format!("conv weights {w:?} do not match the layer")));
                    }
                    if c.scheme.sums_channels_optically() && c.activation != Activation::Abs {
                        return Err(bad(format!(
                            "{} tiling requires the abs activation",
                            c.scheme
                        )));
                    }
                    Shape::Image {
                        channels: c.spec.filters,
                        side: c.spec.output_side(),
                    }
                }
                (Layer::Pool { size, .. }, Shape::Image { channels, side }) => {
                    if *size == 0 || *size > side {
                        return Err(bad(format!("pool size {size} invalid for side {side}")));
                    }
                    Shape::Image {
                        channels,
                        side: side / size,
                    }
                }
                (Layer::Flatten, Shape::Image { channels, side }) => {
                    Shape::Vector(channels * side * side)
                }
                (Layer::Dense(d), Shape::Vector(n)) => {
                    let (out, inp) = d.weights.dim();
                    if inp != n || d.bias.len() != out {
                        return Err(bad(format!(
                            "dense {out}x{inp} (+{}) after a vector of {n}",
                            d.bias.len()
                        )));
                    }
                    Shape::Vector(out)
                }
                (Layer::Activation(_), s) => s,
                (_, s) => return Err(bad(format!("layer cannot follow shape {s:?}"))),
            };
        }
        match shape {
            Shape::Vector(n) if n > 0 => Ok(n),
            s => Err(Error::Shape(format!(
                "model must end in a vector, ends in {s:?}"
            ))),
        }
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = (usize, &ConvLayer)> {
        self.layers.iter().enumerate().filter_map(|(i, l)| match l {
            Layer::Conv(c) => Some((i, c)),
            _ => None,
        })
    }
}

pub(crate) fn pool(x: &MultiChannelImage, kind: PoolKind, size: usize) -> MultiChannelImage {
    let side = x.side() / size;
    let data = Array3::from_shape_fn((x.channels(), side, side), |(c, i, j)| {
        let window = x.data().slice(ndarray::s![
            c,
            i * size..(i + 1) * size,
            j * size..(j + 1) * size
        ]);
        match kind {
            PoolKind::Max => window.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            PoolKind::Avg => window.sum() / (size * size) as f64,
        }
    });
    MultiChannelImage::new(data).expect("pooled shape")
}

/// Runs a digital layer. Conv layers are handled by the caller.
pub(crate) fn digital_layer(layer: &Layer, x: Tensor) -> Result<Tensor> {
    Ok(match layer {
        Layer::Pool { kind, size } => Tensor::Image(pool(&x.into_image()?, *kind, *size)),
        Layer::Flatten => {
            let x = x.into_image()?;
            Tensor::Vector(Array1::from_iter(x.data().iter().copied()))
        }
        Layer::Dense(d) => Tensor::Vector(d.weights.dot(&x.into_vector()?) + &d.bias),
        Layer::Activation(a) => x.map(|v| a.apply(v)),
        Layer::Conv(_) => unreachable!("conv layers run through a pipeline"),
    })
}
