//! Analytical frame counts, inference times and resolution requirements.
//!
//! One frame is one SLM update plus one camera exposure; the camera is taken
//! to run at the SLM frame rate. Only convolution layers are counted and
//! layers with `1 x 1` kernels are skipped, since they gain nothing from
//! Fourier optics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::SystemConfig;
use crate::tiling::{
    blocks_per_frame, cells_per_row, utilization_mixed, utilization_single, Scheme,
};

/// Convolution layer dimensions. `Nw` gives the kernel width for
/// rectangular kernels and defaults to `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(rename = "M")]
    pub input: usize,
    #[serde(rename = "N")]
    pub kernel: usize,
    #[serde(rename = "Nw", default, skip_serializing_if = "Option::is_none")]
    pub kernel_width: Option<usize>,
    #[serde(rename = "Nc")]
    pub channels: usize,
    #[serde(rename = "Nk")]
    pub filters: usize,
}

impl LayerSpec {
    pub fn new(input: usize, kernel: usize, channels: usize, filters: usize) -> Self {
        Self {
            input,
            kernel,
            kernel_width: None,
            channels,
            filters,
        }
    }

    pub fn kernel_cols(&self) -> usize {
        self.kernel_width.unwrap_or(self.kernel)
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.kernel_cols() == 1
    }

    fn validate(&self) -> Result<()> {
        if self.input == 0
            || self.kernel == 0
            || self.kernel_cols() == 0
            || self.channels == 0
            || self.filters == 0
        {
            return Err(Error::Shape(format!(
                "layer dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `T`, padded cells per plane (rows times columns for rectangular kernels).
    pub fn cells_per_plane(&self, slm_side: usize) -> usize {
        cells_per_row(self.input, self.kernel, slm_side)
            * cells_per_row(self.input, self.kernel_cols(), slm_side)
    }

    fn check_fit(&self, sys: &SystemConfig) -> Result<usize> {
        self.validate()?;
        let t = self.cells_per_plane(sys.slm_side);
        if t == 0 {
            return Err(Error::DoesNotFit(format!(
                "layer {}x{} with {}x{} kernel does not fit a {} SLM",
                self.input,
                self.input,
                self.kernel,
                self.kernel_cols(),
                sys.slm_side
            )));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let net: NetworkSpec = serde_json::from_slice(&std::fs::read(path)?)?;
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config(format!(
                "network '{}' has no layers",
                self.name
            )));
        }
        self.layers.iter().try_for_each(LayerSpec::validate)
    }

    /// Built-in conv stacks by name: `alexnet`, `vgg16-cifar10`,
    /// `vgg16-imagenet`, `srcnn`, `deconvnet`.
    pub fn preset(name: &str) -> Option<Self> {
        let layers = match name {
            "alexnet" => vec![
                LayerSpec::new(227, 11, 3, 96),
                LayerSpec::new(27, 5, 96, 256),
                LayerSpec::new(13, 3, 256, 384),
                LayerSpec::new(13, 3, 384, 384),
                LayerSpec::new(13, 3, 384, 256),
            ],
            "vgg16-cifar10" => vgg16(32),
            "vgg16-imagenet" => vgg16(224),
            "srcnn" => vec![
                LayerSpec::new(512, 9, 1, 64),
                LayerSpec::new(512, 1, 64, 32),
                LayerSpec::new(512, 5, 32, 1),
            ],
            "deconvnet" => vec![
                LayerSpec {
                    kernel_width: Some(1),
                    ..LayerSpec::new(184, 121, 1, 38)
                },
                LayerSpec {
                    kernel_width: Some(121),
                    ..LayerSpec::new(184, 1, 38, 38)
                },
                LayerSpec::new(184, 16, 38, 512),
                LayerSpec::new(184, 1, 512, 512),
                LayerSpec::new(184, 8, 512, 1),
            ],
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            layers,
        })
    }

    pub const PRESETS: [&'static str; 5] = [
        "alexnet",
        "vgg16-cifar10",
        "vgg16-imagenet",
        "srcnn",
        "deconvnet",
    ];
}

fn vgg16(side: usize) -> Vec<LayerSpec> {
    let stages = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];
    let mut layers = Vec::new();
    let (mut m, mut c) = (side, 3);
    for (count, width) in stages {
        for _ in 0..count {
            layers.push(LayerSpec::new(m, 3, c, width));
            c = width;
        }
        m /= 2;
    }
    layers
}

/// Frames needed per input for one layer. Input tiling is amortized over a
/// full batch of `T` inputs and can be fractional; the other schemes are
/// whole frame counts. Mixed tiling falls back to channel tiling when
/// `N_c >= T/2`.
pub fn frames_per_layer(layer: &LayerSpec, scheme: Scheme, sys: &SystemConfig) -> Result<f64> {
    let t = layer.check_fit(sys)?;
    let (nc, nk) = (layer.channels, layer.filters);
    let channel = (nk * nc.div_ceil(t)) as f64;
    Ok(match scheme {
        Scheme::None => (nc * nk) as f64,
        Scheme::Input => (nc * nk) as f64 / t as f64,
        Scheme::Filter => (nc * nk.div_ceil(t)) as f64,
        Scheme::Channel => channel,
        Scheme::Mixed => match mixed_blocks(layer, sys, t) {
            Some(tb) => nk.div_ceil(tb) as f64,
            None => channel,
        },
    })
}

fn mixed_blocks(layer: &LayerSpec, sys: &SystemConfig, t: usize) -> Option<usize> {
    if 2 * layer.channels >= t {
        return None;
    }
    let per_row = cells_per_row(layer.input, layer.kernel, sys.slm_side);
    Some(blocks_per_frame(layer.channels, per_row)).filter(|&tb| tb > 0)
}

/// Scheme the planner picks: mixed tiling when `N_c < T/2` and it needs
/// fewer frames (ties: higher utilization), channel tiling otherwise.
pub fn auto_scheme(layer: &LayerSpec, sys: &SystemConfig) -> Result<Scheme> {
    let t = layer.check_fit(sys)?;
    if mixed_blocks(layer, sys, t).is_none() {
        return Ok(Scheme::Channel);
    }
    let (fm, fc) = (
        frames_per_layer(layer, Scheme::Mixed, sys)?,
        frames_per_layer(layer, Scheme::Channel, sys)?,
    );
    let better = fm < fc
        || (fm == fc
            && layer_utilization(layer, Scheme::Mixed, sys)?
                > layer_utilization(layer, Scheme::Channel, sys)?);
    Ok(if better {
        Scheme::Mixed
    } else {
        Scheme::Channel
    })
}

/// Average time of one 2D convolution under input tiling: `(1/f) / T`.
pub fn single_conv_time(input: usize, kernel: usize, sys: &SystemConfig) -> Result<f64> {
    let t = LayerSpec::new(input, kernel, 1, 1).check_fit(sys)?;
    Ok(sys.frame_time() / t as f64)
}

/// Per-input inference time of the conv stack.
pub fn network_inference_time(
    net: &NetworkSpec,
    scheme: Scheme,
    sys: &SystemConfig,
) -> Result<f64> {
    let mut frames = 0.0;
    for layer in net.layers.iter().filter(|l| !l.is_pointwise()) {
        frames += frames_per_layer(layer, scheme, sys)?;
    }
    Ok(frames * sys.frame_time())
}

/// Input, filter and output plane resolutions (pixels) for a fully tiled layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub input: f64,
    pub filter: f64,
    pub output: f64,
}

pub fn resolution_requirements(
    scheme: Scheme,
    input: usize,
    channels: usize,
    sys: &SystemConfig,
) -> Resolution {
    let m2 = (input * input) as f64;
    let d2 = (sys.slm_side * sys.slm_side) as f64;
    let (input, filter, output) = match scheme {
        Scheme::None => (m2, m2, m2),
        Scheme::Input => (d2, d2, d2),
        Scheme::Filter => (m2, d2, d2),
        Scheme::Channel => (d2, d2, m2),
        Scheme::Mixed => (d2, d2, d2 / channels.max(1) as f64),
    };
    Resolution {
        input,
        filter,
        output,
    }
}

/// SLM utilization of one layer under `scheme`.
pub fn layer_utilization(layer: &LayerSpec, scheme: Scheme, sys: &SystemConfig) -> Result<f64> {
    let t = layer.check_fit(sys)?;
    let (m, d) = (layer.input, sys.slm_side);
    let m2d2 = (m * m) as f64 / (d * d) as f64;
    Ok(match scheme {
        Scheme::None => m2d2,
        Scheme::Input => m2d2 * t as f64,
        Scheme::Filter => utilization_single(m, layer.filters, d, t),
        Scheme::Channel => utilization_single(m, layer.channels, d, t),
        Scheme::Mixed => match mixed_blocks(layer, sys, t) {
            Some(_) => utilization_mixed(m, layer.channels, layer.filters, d, t)?,
            None => utilization_single(m, layer.channels, d, t),
        },
    })
}

/// One row of a per-layer performance report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    #[serde(flatten)]
    pub layer: LayerSpec,
    pub scheme: Scheme,
    pub skipped: bool,
    pub frames: f64,
    pub time_s: f64,
    pub utilization: f64,
    pub resolution: Resolution,
}

pub fn layer_reports(
    net: &NetworkSpec,
    scheme: Scheme,
    sys: &SystemConfig,
) -> Result<Vec<LayerReport>> {
    net.layers
        .iter()
        .enumerate()
        .map(|(index, layer)| {
            let skipped = layer.is_pointwise();
            let frames = if skipped {
                0.0
            } else {
                frames_per_layer(layer, scheme, sys)?
            };
            Ok(LayerReport {
                index,
                layer: *layer,
                scheme,
                skipped,
                frames,
                time_s: frames * sys.frame_time(),
                utilization: layer_utilization(layer, scheme, sys)?,
                resolution: resolution_requirements(scheme, layer.input, layer.channels, sys),
            })
        })
        .collect()
}
