//! Accuracy and per-layer error of a pipeline over a dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::runtime::{Exposure, Pipeline, Runtime};
use super::{Dataset, Model};
use crate::error::{Error, Result};
use crate::optics::SystemConfig;
use crate::sensor::{BitDepth, SensorConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub pipeline: Pipeline,
    pub sensor: SensorConfig,
    /// Also measure per-layer MSE against the ideal pipeline.
    pub layer_errors: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMse {
    pub layer: usize,
    pub channels: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pipeline: Pipeline,
    pub bit_depth: BitDepth,
    pub snr_db: Option<f64>,
    pub correct: usize,
    pub count: usize,
    pub accuracy: f64,
    /// Dataset-mean MSE per conv layer.
    pub layer_mse: Vec<LayerMse>,
    /// `[image][conv layer]` MSE, each layer fed its ideal input.
    #[serde(skip)]
    pub per_image_mse: Vec<Vec<f64>>,
}

/// Evaluates one pipeline and sensor setting. Image `i` uses noise frame ids
/// derived from `i`, so results do not depend on scheduling.
pub fn evaluate(
    model: &Model,
    data: &Dataset,
    sys: &SystemConfig,
    exposure: &Exposure,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.side != model.input_side || data.channels != model.input_channels {
        return Err(Error::Shape(format!(
            "dataset {}x{}x{} does not match model input {}x{}x{}",
            data.channels,
            data.side,
            data.side,
            model.input_channels,
            model.input_side,
            model.input_side
        )));
    }
    let rt = Runtime::new(model, sys, cfg.sensor)?.with_exposure(exposure.clone());
    let convs: Vec<_> = model
        .conv_layers()
        .map(|(i, c)| (i, c.spec.channels))
        .collect();
    let measure = cfg.layer_errors && cfg.pipeline != Pipeline::Ideal;
    let results = data
        .images
        .par_iter()
        .zip(data.labels.par_iter())
        .enumerate()
        .map(|(i, (x, &label))| {
            let hit = rt.forward(x, i as u64, cfg.pipeline)?.predicted() == label;
            let mse = if measure {
                rt.layer_mse(x, i as u64, cfg.pipeline)?
            } else {
                vec![0.0; convs.len()]
            };
            Ok((hit, mse))
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = results.iter().filter(|r| r.0).count();
    let per_image_mse: Vec<Vec<f64>> = results.into_iter().map(|r| r.1).collect();
    let layer_mse = convs
        .iter()
        .enumerate()
        .map(|(j, &(layer, channels))| LayerMse {
            layer,
            channels,
            mse: per_image_mse.iter().map(|m| m[j]).sum::<f64>() / data.len() as f64,
        })
        .collect();
    Ok(EvalReport {
        pipeline: cfg.pipeline,
        bit_depth: cfg.sensor.bit_depth,
        snr_db: cfg.sensor.snr_db,
        correct,
        count: data.len(),
        accuracy: correct as f64 / data.len() as f64,
        layer_mse,
        per_image_mse,
    })
}
