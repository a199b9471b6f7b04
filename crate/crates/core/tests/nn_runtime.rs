use std::path::PathBuf;

use ndarray::Array1;
use tile4f_core::nn::{
    evaluate, load_dataset, load_model, reference, Dataset, EvalConfig, Exposure, Layer, Model,
    Pipeline, PoolKind, Runtime,
};
use tile4f_core::{BitDepth, FullScale, MultiChannelImage, SensorConfig, SystemConfig};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/reference")
}

fn shipped() -> (Model, Dataset) {
    (
        load_model(&data_dir().join("model.t4fm")).unwrap(),
        load_dataset(&data_dir().join("test")).unwrap(),
    )
}

fn sys(model: &Model) -> SystemConfig {
    SystemConfig::new(model.slm_side, 2e6).unwrap()
}

#[test]
fn shipped_reference_matches_generator() {
    let set = reference::generate(reference::SEED).unwrap();
    let dir = tempfile::tempdir().unwrap();
    reference::write(&set, dir.path()).unwrap();
    for file in [
        "model.t4fm",
        "train/images.f32",
        "train/index.json",
        "calibration/images.f32",
        "test/images.f32",
        "test/index.json",
    ] {
        let a = std::fs::read(dir.path().join(file)).unwrap();
        let b = std::fs::read(data_dir().join(file)).unwrap();
        assert!(a == b, "{file} differs from the generator output");
    }
    let (model, test) = shipped();
    assert_eq!(model, set.model);
    assert_eq!(test.len(), reference::TEST);
    assert_eq!(model.validate().unwrap(), reference::CLASSES);
}

/// Plain loops, no library convolution or tiling.
fn naive_forward(model: &Model, image: &MultiChannelImage) -> Vec<f64> {
    let mut x: Vec<Vec<Vec<f64>>> = (0..image.channels())
        .map(|c| {
            image
                .channel(c)
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect()
        })
        .collect();
    let mut flat: Vec<f64> = Vec::new();
    for layer in &model.layers {
        match layer {
            Layer::Conv(conv) => {
                let (m, n) = (conv.spec.input as i64, conv.spec.kernel as i64);
                let h = (n - 1) / 2;
                let w = conv.weights.data();
                x = (0..conv.spec.filters)
                    .map(|k| {
                        (0..m)
                            .map(|i| {
                                (0..m)
                                    .map(|j| {
                                        let mut s = 0.0;
                                        for c in 0..conv.spec.channels {
                                            let mut part = 0.0;
                                            for a in 0..n {
                                                for b in 0..n {
                                                    let (p, q) = (i + a - h, j + b - h);
                                                    if (0..m).contains(&p) && (0..m).contains(&q) {
                                                        part += x[c][p as usize][q as usize]
                                                            * w[[k, c, a as usize, b as usize]];
                                                    }
                                                }
                                            }
                                            s += part;
                                        }
                                        conv.activation.apply(s)
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect();
            }
            Layer::Pool { kind, size } => {
                let side = x[0].len() / size;
                x = x
                    .iter()
                    .map(|ch| {
                        (0..side)
                            .map(|i| {
                                (0..side)
                                    .map(|j| {
                                        let vals = (0..*size)
                                            .flat_map(|a| (0..*size).map(move |b| (a, b)))
                                            .map(|(a, b)| ch[i * size + a][j * size + b]);
                                        match kind {
                                            PoolKind::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                                            PoolKind::Avg => {
                                                vals.sum::<f64>() / (size * size) as f64
                                            }
                                        }
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect();
            }
            Layer::Flatten => flat = x.iter().flatten().flatten().copied().collect(),
            Layer::Dense(d) => {
                flat = (0..d.weights.nrows())
                    .map(|o| {
                        d.bias[o]
                            + (0..flat.len())
                                .map(|i| d.weights[[o, i]] * flat[i])
                                .sum::<f64>()
                    })
                    .collect()
            }
            Layer::Activation(a) => flat = flat.iter().map(|&v| a.apply(v)).collect(),
        }
    }
    flat
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[test]
fn ideal_accuracy_equals_naive_forward() {
    let (model, test) = shipped();
    let naive = test
        .images
        .iter()
        .zip(&test.labels)
        .filter(|(x, &y)| argmax(&naive_forward(&model, x)) == y)
        .count();
    let cfg = EvalConfig {
        pipeline: Pipeline::Ideal,
        sensor: SensorConfig::ideal(),
        layer_errors: false,
    };
    let rep = evaluate(&model, &test, &sys(&model), &Exposure::AsConfigured, &cfg).unwrap();
    assert_eq!(rep.correct, naive);
    assert!(
        rep.accuracy > 0.5,
        "reference model accuracy {}",
        rep.accuracy
    );
}

#[test]
fn optical_pipelines_match_ideal_without_sensor_loss() {
    let (model, test) = shipped();
    let rt = Runtime::new(&model, &sys(&model), SensorConfig::ideal()).unwrap();
    for (i, x) in test.images.iter().take(12).enumerate() {
        let ideal = rt.forward(x, i as u64, Pipeline::Ideal).unwrap().scores;
        let scale = ideal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for p in [Pipeline::Channel, Pipeline::PseudoNegative] {
            let got = rt.forward(x, i as u64, p).unwrap().scores;
            let err = (&got - &ideal).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err <= 1e-4 * scale, "{p} image {i}: {err}");
        }
    }
}

#[test]
fn zero_image_gives_bias() {
    let (model, _) = shipped();
    let Some(Layer::Dense(dense)) = model.layers.last() else {
        panic!("reference ends in dense")
    };
    let zero = MultiChannelImage::zeros(1, model.input_side);
    let noisy = SensorConfig {
        bit_depth: BitDepth::EIGHT,
        snr_db: Some(20.0),
        seed: 3,
        full_scale: FullScale::PerFrameMax,
    };
    for (p, sensor) in [
        (Pipeline::Ideal, SensorConfig::ideal()),
        (Pipeline::Channel, noisy),
        (Pipeline::PseudoNegative, noisy),
    ] {
        let rt = Runtime::new(&model, &sys(&model), sensor).unwrap();
        assert_eq!(rt.forward(&zero, 0, p).unwrap().scores, dense.bias, "{p}");
    }
}

#[test]
fn noisy_forward_is_reproducible_across_thread_counts() {
    let (model, test) = shipped();
    let sensor = SensorConfig {
        bit_depth: BitDepth::EIGHT,
        snr_db: Some(20.0),
        seed: 7,
        full_scale: FullScale::PerFrameMax,
    };
    let run = |threads: usize| -> Vec<Array1<f64>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let rt = Runtime::new(&model, &sys(&model), sensor).unwrap();
            test.images
                .iter()
                .take(4)
                .enumerate()
                .flat_map(|(i, x)| {
                    [Pipeline::Channel, Pipeline::PseudoNegative]
                        .map(|p| rt.forward(x, i as u64, p).unwrap().scores)
                })
                .collect()
        })
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(3));
    let other = SensorConfig { seed: 8, ..sensor };
    let rt = Runtime::new(&model, &sys(&model), other).unwrap();
    assert_ne!(
        rt.forward(&test.images[0], 0, Pipeline::Channel)
            .unwrap()
            .scores,
        a[0]
    );
}

#[test]
fn calibrated_exposure_covers_calibration_batch() {
    let (model, _) = shipped();
    let calib = load_dataset(&data_dir().join("calibration")).unwrap();
    let rt = Runtime::new(
        &model,
        &sys(&model),
        SensorConfig::with_bits(BitDepth::EIGHT),
    )
    .unwrap();
    let cal = rt.calibrate(&calib.images).unwrap();
    for (idx, _) in model.conv_layers() {
        assert!(cal.channel[idx] > 0.0 && cal.pseudo_negative[idx] > 0.0);
    }
    assert_eq!(cal.channel[1], 0.0);
}

#[test]
fn empty_dataset_rejected() {
    let (model, mut test) = shipped();
    test.images.clear();
    test.labels.clear();
    let cfg = EvalConfig {
        pipeline: Pipeline::Ideal,
        sensor: SensorConfig::ideal(),
        layer_errors: false,
    };
    assert!(evaluate(&model, &test, &sys(&model), &Exposure::AsConfigured, &cfg).is_err());
}
