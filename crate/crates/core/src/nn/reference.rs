//! Deterministic reference model and synthetic dataset.
//!
//! Images are noisy, shifted, rescaled copies of one smooth blob prototype
//! per class. The two conv layers have random Gaussian weights; the dense
//! layer is a nearest-centroid classifier fitted on ideal features of the
//! training split.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::runtime::{Pipeline, Runtime};
use super::{Activation, ConvLayer, Dataset, DenseLayer, Layer, Model, PoolKind};
use crate::error::Result;
use crate::optics::SystemConfig;
use crate::sensor::{frame_id, SensorConfig};
use crate::tensor::{ConvSpec, FilterBank, MultiChannelImage};
use crate::tiling::Scheme;

pub const SEED: u64 = 20;
pub const SIDE: usize = 16;
pub const CLASSES: usize = 4;
pub const SLM_SIDE: usize = 64;
pub const TRAIN: usize = 400;
pub const CALIBRATION: usize = 32;
pub const TEST: usize = 1000;
const BLOBS: usize = 3;
const PIXEL_NOISE: f64 = 0.25;
const MAX_SHIFT: i64 = 2;

pub struct ReferenceSet {
    pub model: Model,
    pub train: Dataset,
    pub calibration: Dataset,
    pub test: Dataset,
}

pub fn generate(seed: u64) -> Result<ReferenceSet> {
    let protos = prototypes(seed);
    let train = sample_split(seed, "train", 1, TRAIN, &protos);
    let calibration = sample_split(seed, "calibration", 2, CALIBRATION, &protos);
    let test = sample_split(seed, "test", 3, TEST, &protos);
    let model = build_model(seed, &train)?;
    Ok(ReferenceSet {
        model,
        train,
        calibration,
        test,
    })
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(frame_id(&[seed, stream]))
}

fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

fn prototypes(seed: u64) -> Vec<Array2<f64>> {
    let mut r = rng(seed, 0);
    (0..CLASSES)
        .map(|_| {
            let blobs: Vec<(f64, f64, f64, f64)> = (0..BLOBS)
                .map(|_| {
                    (
                        r.gen_range(3.0..12.0),
                        r.gen_range(3.0..12.0),
                        r.gen_range(1.2..2.5),
                        r.gen_range(0.5..1.0),
                    )
                })
                .collect();
            let p = Array2::from_shape_fn((SIDE, SIDE), |(i, j)| {
                blobs
                    .iter()
                    .map(|&(ci, cj, s, a)| {
                        let d2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                        a * (-d2 / (2.0 * s * s)).exp()
                    })
                    .sum::<f64>()
            });
            let top = p.iter().copied().fold(0.0, f64::max);
            p / top
        })
        .collect()
}

fn sample_split(
    seed: u64,
    name: &str,
    stream: u64,
    count: usize,
    protos: &[Array2<f64>],
) -> Dataset {
    let mut r = rng(seed, stream);
    let noise = Normal::new(0.0, PIXEL_NOISE).expect("valid sigma");
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for n in 0..count {
        let label = n % CLASSES;
        let (dy, dx) = (
            r.gen_range(-MAX_SHIFT..=MAX_SHIFT),
            r.gen_range(-MAX_SHIFT..=MAX_SHIFT),
        );
        let gain = r.gen_range(0.5..1.0);
        let p = &protos[label];
        let data = Array3::from_shape_fn((1, SIDE, SIDE), |(_, i, j)| {
            let (si, sj) = (i as i64 - dy, j as i64 - dx);
            let inside = (0..SIDE as i64).contains(&si) && (0..SIDE as i64).contains(&sj);
            let base = if inside {
                gain * p[[si as usize, sj as usize]]
            } else {
                0.0
            };
            base + noise.sample(&mut r)
        });
        images.push(
            MultiChannelImage::new(data.mapv(|v| f32_round(v.clamp(0.0, 1.0))))
                .expect("image shape"),
        );
        labels.push(label);
    }
    Dataset {
        name: format!("reference-{name}"),
        side: SIDE,
        channels: 1,
        classes: CLASSES,
        images,
        labels,
    }
}

fn gaussian_bank(r: &mut ChaCha8Rng, filters: usize, channels: usize, kernel: usize) -> FilterBank {
    let sd = 1.0 / ((channels * kernel * kernel) as f64).sqrt();
    let normal = Normal::new(0.0, sd).expect("valid sigma");
    FilterBank::new(Array4::from_shape_fn(
        (filters, channels, kernel, kernel),
        |_| f32_round(normal.sample(r)),
    ))
    .expect("bank shape")
}

fn build_model(seed: u64, train: &Dataset) -> Result<Model> {
    let mut r = rng(seed, 4);
    let conv = |spec: ConvSpec, scheme, r: &mut ChaCha8Rng| {
        Layer::Conv(ConvLayer {
            spec,
            weights: gaussian_bank(r, spec.filters, spec.channels, spec.kernel),
            scheme,
            activation: Activation::Abs,
        })
    };
    let features = 16 * (SIDE / 4) * (SIDE / 4);
    let mut model = Model {
        name: "reference".into(),
        seed,
        input_side: SIDE,
        input_channels: 1,
        slm_side: SLM_SIDE,
        layers: vec![
            conv(ConvSpec::same(SIDE, 3, 1, 8), Scheme::Channel, &mut r),
            Layer::Pool {
                kind: PoolKind::Max,
                size: 2,
            },
            conv(ConvSpec::same(SIDE / 2, 3, 8, 16), Scheme::Mixed, &mut r),
            Layer::Pool {
                kind: PoolKind::Max,
                size: 2,
            },
            Layer::Flatten,
            Layer::Dense(DenseLayer {
                weights: Array2::zeros((CLASSES, features)),
                bias: Array1::zeros(CLASSES),
            }),
        ],
    };
    let centroids = feature_centroids(&model, train)?;
    let bias = centroids
        .rows()
        .into_iter()
        .map(|c| f32_round(-0.5 * c.dot(&c)))
        .collect();
    let last = model.layers.len() - 1;
    model.layers[last] = Layer::Dense(DenseLayer {
        weights: centroids.mapv(f32_round),
        bias: Array1::from_vec(bias),
    });
    Ok(model)
}

/// Class means of the ideal flattened features feeding the dense layer.
fn feature_centroids(model: &Model, train: &Dataset) -> Result<Array2<f64>> {
    let mut body = model.clone();
    body.layers.pop();
    let features = match body.layers.last() {
        Some(Layer::Flatten) => 16 * (SIDE / 4) * (SIDE / 4),
        _ => unreachable!(),
    };
    // Identity head so the runtime returns the feature vector as scores.
    body.layers.push(Layer::Dense(DenseLayer {
        weights: Array2::eye(features),
        bias: Array1::zeros(features),
    }));
    let rt = Runtime::new(
        &body,
        &SystemConfig::new(SLM_SIDE, 1.0)?,
        SensorConfig::ideal(),
    )?;
    let mut sums = Array2::<f64>::zeros((CLASSES, features));
    let mut counts = [0usize; CLASSES];
    for (x, &y) in train.images.iter().zip(&train.labels) {
        let f = rt.forward(x, 0, Pipeline::Ideal)?.scores;
        sums.row_mut(y).scaled_add(1.0, &f);
        counts[y] += 1;
    }
    for (mut row, &n) in sums.rows_mut().into_iter().zip(&counts) {
        row /= n.max(1) as f64;
    }
    Ok(sums)
}

pub const MODEL_FILE: &str = "model.t4fm";

/// Writes `model.t4fm` and the `train`, `calibration` and `test` dataset
/// directories under `dir`.
pub fn write(set: &ReferenceSet, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    super::save_model(&set.model, &dir.join(MODEL_FILE))?;
    super::save_dataset(&set.train, &dir.join("train"))?;
    super::save_dataset(&set.calibration, &dir.join("calibration"))?;
    super::save_dataset(&set.test, &dir.join("test"))?;
    Ok(())
}
