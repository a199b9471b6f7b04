//! Forward pass through the ideal oracle or one of the two optical pipelines.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{digital_layer, ConvLayer, Layer, Model, Tensor};
use crate::error::{Error, Result};
use crate::optics::{OpticsEngine, SystemConfig};
use crate::oracle::{direct_conv_same, direct_conv_valid};
use crate::sensor::{
    detect_frame, frame_id, pseudo_negative_combine, pseudo_negative_split, readout_sqrt,
    FullScale, SensorConfig,
};
use crate::tensor::{ConvMode, MultiChannelImage};
use crate::tiling::{
    channel_tiled_conv, filter_tiled_frames, mixed_tiled_frames, Rect, Scheme, TiledResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pipeline {
    /// Brute-force convolution and exact activation, no sensor.
    #[serde(rename = "ideal-oracle")]
    Ideal,
    /// Channel (or mixed) tiling; the camera's square law followed by a
    /// square root is the abs activation.
    #[serde(rename = "channel-4f")]
    Channel,
    /// Per-channel filter tiling with split nonnegative banks, digital channel
    /// sum and sign recombination, then the layer's activation.
    #[serde(rename = "filter-4f-pseudoneg")]
    PseudoNegative,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::Ideal, Pipeline::Channel, Pipeline::PseudoNegative];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Ideal => "ideal-oracle",
            Pipeline::Channel => "channel-4f",
            Pipeline::PseudoNegative => "filter-4f-pseudoneg",
        }
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

impl std::fmt::Display for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pipeline '{s}'")))
    }
}

/// Fixed full-scale intensity per model layer for each optical pipeline.
/// Entries for non-conv layers are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub channel: Vec<f64>,
    pub pseudo_negative: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Exposure {
    /// Use the sensor configuration's full scale as given.
    AsConfigured,
    Calibrated(Calibration),
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub scores: Array1<f64>,
    /// Post-activation output of every conv layer, in order.
    pub conv_outputs: Vec<MultiChannelImage>,
}

impl Forward {
    pub fn predicted(&self) -> usize {
        self.scores
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
            .0
    }
}

pub struct Runtime<'m> {
    model: &'m Model,
    engine: OpticsEngine,
    sensor: SensorConfig,
    exposure: Exposure,
}

impl<'m> Runtime<'m> {
    pub fn new(model: &'m Model, sys: &SystemConfig, sensor: SensorConfig) -> Result<Self> {
        model.validate()?;
        sys.validate()?;
        Ok(Self {
            model,
            engine: OpticsEngine::for_system(sys)?,
            sensor,
            exposure: Exposure::AsConfigured,
        })
    }

    pub fn with_exposure(mut self, exposure: Exposure) -> Self {
        self.exposure = exposure;
        self
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn sensor(&self) -> &SensorConfig {
        &self.sensor
    }

    /// Per-layer full scale: the brightest valid-region intensity any frame
    /// of each pipeline produces over `batch`, noiseless, with ideal inputs.
    pub fn calibrate(&self, batch: &[MultiChannelImage]) -> Result<Calibration> {
        let n = self.model.layers.len();
        let per_image = batch
            .par_iter()
            .map(|image| {
                let mut cal = Calibration {
                    channel: vec![0.0; n],
                    pseudo_negative: vec![0.0; n],
                };
                for (idx, conv, x) in self.ideal_conv_inputs(image)? {
                    cal.channel[idx] = peak(&self.channel_frames(conv, &x)?);
                    cal.pseudo_negative[idx] = self
                        .pseudo_frames(conv, &x)?
                        .iter()
                        .map(|frames| peak(frames))
                        .fold(0.0, f64::max);
                }
                Ok(cal)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(per_image.into_iter().fold(
            Calibration {
                channel: vec![0.0; n],
                pseudo_negative: vec![0.0; n],
            },
            |mut acc, c| {
                for i in 0..n {
                    acc.channel[i] = acc.channel[i].max(c.channel[i]);
                    acc.pseudo_negative[i] = acc.pseudo_negative[i].max(c.pseudo_negative[i]);
                }
                acc
            },
        ))
    }

    pub fn forward(
        &self,
        image: &MultiChannelImage,
        image_id: u64,
        pipeline: Pipeline,
    ) -> Result<Forward> {
        let mut x = Tensor::Image(image.clone());
        let mut conv_outputs = Vec::new();
        for (idx, layer) in self.model.layers.iter().enumerate() {
            x = match layer {
                Layer::Conv(conv) => {
                    let y = self.conv(idx, conv, &x.into_image()?, image_id, pipeline)?;
                    conv_outputs.push(y.clone());
                    Tensor::Image(y)
                }
                other => digital_layer(other, x)?,
            };
        }
        Ok(Forward {
            scores: x.into_vector()?,
            conv_outputs,
        })
    }

    /// Mean squared error of each conv layer's output against the ideal one,
    /// each layer fed its ideal input.
    pub fn layer_mse(
        &self,
        image: &MultiChannelImage,
        image_id: u64,
        pipeline: Pipeline,
    ) -> Result<Vec<f64>> {
        self.ideal_conv_inputs(image)?
            .into_iter()
            .map(|(idx, conv, x)| {
                let ideal = self.conv(idx, conv, &x, image_id, Pipeline::Ideal)?;
                let got = self.conv(idx, conv, &x, image_id, pipeline)?;
                let diff = got.data() - ideal.data();
                Ok(diff.mapv(|v| v * v).mean().unwrap_or(0.0))
            })
            .collect()
    }

    /// Runs conv layer `idx` on `x` and applies its activation.
    pub fn conv(
        &self,
        idx: usize,
        conv: &ConvLayer,
        x: &MultiChannelImage,
        image_id: u64,
        pipeline: Pipeline,
    ) -> Result<MultiChannelImage> {
        let planes = match pipeline {
            Pipeline::Ideal => (0..conv.spec.filters)
                .map(|k| {
                    let y = match conv.spec.mode {
                        ConvMode::Same => direct_conv_same(x, conv.weights.filter(k))?,
                        ConvMode::Valid => direct_conv_valid(x, conv.weights.filter(k))?,
                    };
                    Ok(y.mapv(|v| conv.activation.apply(v)))
                })
                .collect::<Result<Vec<_>>>()?,
            Pipeline::Channel => {
                let cfg = self.sensor_for(Pipeline::Channel, idx);
                self.channel_frames(conv, x)?
                    .iter()
                    .enumerate()
                    .flat_map(|(f, frame)| {
                        self.read(
                            frame,
                            &cfg,
                            frame_id(&[image_id, idx as u64, pipeline.tag(), f as u64]),
                        )
                    })
                    .collect()
            }
            Pipeline::PseudoNegative => {
                let cfg = self.sensor_for(Pipeline::PseudoNegative, idx);
                let banks = self.pseudo_frames(conv, x)?;
                let out = conv.spec.output_side();
                let mut sums = vec![vec![Array2::<f64>::zeros((out, out)); conv.spec.filters]; 2];
                for (bc, frames) in banks.iter().enumerate() {
                    let (bank, c) = (bc / conv.spec.channels, bc % conv.spec.channels);
                    let planes = frames.iter().enumerate().flat_map(|(f, frame)| {
                        let id = frame_id(&[
                            image_id,
                            idx as u64,
                            pipeline.tag(),
                            bank as u64,
                            c as u64,
                            f as u64,
                        ]);
                        self.read(frame, &cfg, id)
                    });
                    for (acc, p) in sums[bank].iter_mut().zip(planes) {
                        *acc += &p;
                    }
                }
                sums[0]
                    .iter()
                    .zip(&sums[1])
                    .map(|(p, n)| {
                        Ok(pseudo_negative_combine(p.view(), n.view())?
                            .mapv(|v| conv.activation.apply(v)))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        MultiChannelImage::from_planes(&planes)
    }

    fn sensor_for(&self, pipeline: Pipeline, idx: usize) -> SensorConfig {
        match &self.exposure {
            Exposure::AsConfigured => self.sensor,
            Exposure::Calibrated(cal) => {
                let fs = match pipeline {
                    Pipeline::PseudoNegative => cal.pseudo_negative[idx],
                    _ => cal.channel[idx],
                };
                SensorConfig {
                    full_scale: FullScale::Fixed(fs),
                    ..self.sensor
                }
            }
        }
    }

    /// Detects one frame and returns the square-root readout of its valid regions.
    fn read(&self, frame: &TiledResult, cfg: &SensorConfig, id: u64) -> Vec<Array2<f64>> {
        let rects: Vec<Rect> = frame.layout.valid_regions.iter().map(|r| r.rect).collect();
        let readout = detect_frame(frame.raw_plane.view(), cfg, id, Some(&rects));
        frame.extract_from(readout_sqrt(&readout).view())
    }

    /// Frames of the channel pipeline, extracted planes in filter order.
    fn channel_frames(&self, conv: &ConvLayer, x: &MultiChannelImage) -> Result<Vec<TiledResult>> {
        if conv.scheme == Scheme::Mixed {
            return mixed_tiled_frames(x, &conv.weights, &conv.spec, &self.engine);
        }
        (0..conv.spec.filters)
            .into_par_iter()
            .map(|k| channel_tiled_conv(x, conv.weights.filter(k), &conv.spec, &self.engine))
            .collect()
    }

    /// Frames of the pseudo-negative pipeline, indexed `[bank * N_c + channel]`
    /// with bank 0 positive and 1 negative.
    fn pseudo_frames(
        &self,
        conv: &ConvLayer,
        x: &MultiChannelImage,
    ) -> Result<Vec<Vec<TiledResult>>> {
        let (pos, neg) = pseudo_negative_split(&conv.weights);
        let banks = [pos, neg];
        let nc = conv.spec.channels;
        (0..2 * nc)
            .into_par_iter()
            .map(|bc| {
                let bank = &banks[bc / nc];
                let c = bc % nc;
                let kernels: Vec<_> = (0..conv.spec.filters)
                    .map(|k| bank.filter(k).index_axis_move(Axis(0), c))
                    .collect();
                filter_tiled_frames(x.channel(c), &kernels, &conv.spec, &self.engine)
            })
            .collect()
    }

    /// Ideal input of every conv layer.
    fn ideal_conv_inputs(
        &self,
        image: &MultiChannelImage,
    ) -> Result<Vec<(usize, &'m ConvLayer, MultiChannelImage)>> {
        let mut out = Vec::new();
        let mut x = Tensor::Image(image.clone());
        for (idx, layer) in self.model.layers.iter().enumerate() {
            if let Layer::Conv(conv) = layer {
                let input = x.into_image()?;
                let y = self.conv(idx, conv, &input, 0, Pipeline::Ideal)?;
                out.push((idx, conv, input));
                x = Tensor::Image(y);
            } else {
                x = digital_layer(layer, x)?;
            }
        }
        Ok(out)
    }
}

fn peak(frames: &[TiledResult]) -> f64 {
    frames
        .iter()
        .flat_map(|f| f.extracted.iter().flatten())
        .map(|v| v * v)
        .fold(0.0, f64::max)
}
