//! Random single-layer runs of a tiling scheme against the oracle, before
//! and after the camera.

use ndarray::{Array2, Array3, Array4, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tile4f_core::optics::OpticsEngine;
use tile4f_core::oracle::{direct_conv_same, direct_conv_valid};
use tile4f_core::sensor::{detect_frame, frame_id, pseudo_negative_split, readout_sqrt};
use tile4f_core::tiling::{
    channel_tiled_conv, channel_tiled_passes, filter_tiled_conv, filter_tiled_frames,
    input_tiled_conv, input_tiled_frames, layout_none, mixed_tiled_conv, mixed_tiled_frames,
    run_frame, Rect, TiledResult,
};
use tile4f_core::{
    ConvMode, ConvSpec, FilterBank, MultiChannelImage, Result, Scheme, SensorConfig, SystemConfig,
};

#[derive(Debug, Clone, Serialize)]
pub struct SimRow {
    pub scheme: Scheme,
    /// `field`: pre-detection result; `readout`: after the camera.
    pub stage: &'static str,
    /// What the stage is compared with: `signed` or `magnitude` oracle.
    pub reference: &'static str,
    pub bit_depth: String,
    pub snr_db: String,
    pub outputs: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    pub max_rel_error: f64,
}

/// Nonnegative inputs in `[0, 1)` and signed weights in `[-1, 1)`.
pub fn random_operands(spec: &ConvSpec, seed: u64) -> (Vec<MultiChannelImage>, FilterBank) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n, c) = (spec.input, spec.kernel, spec.channels);
    let batch = (0..spec.batch.max(1))
        .map(|_| {
            MultiChannelImage::new(Array3::from_shape_fn((c, m, m), |_| rng.gen::<f64>()))
                .expect("shape")
        })
        .collect();
    let bank = FilterBank::new(Array4::from_shape_fn((spec.filters, c, n, n), |_| {
        rng.gen_range(-1.0..1.0)
    }))
    .expect("shape");
    (batch, bank)
}

pub fn simulate(
    spec: &ConvSpec,
    scheme: Scheme,
    sys: &SystemConfig,
    sensor: &SensorConfig,
    seed: u64,
) -> Result<Vec<SimRow>> {
    spec.validate()?;
    let engine = OpticsEngine::for_system(sys)?;
    let (batch, bank) = random_operands(spec, seed);
    let oracle: Vec<Vec<Array2<f64>>> = batch
        .iter()
        .map(|x| {
            (0..spec.filters)
                .map(|k| match spec.mode {
                    ConvMode::Same => direct_conv_same(x, bank.filter(k)),
                    ConvMode::Valid => direct_conv_valid(x, bank.filter(k)),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let field = field_stage(spec, scheme, &engine, &batch, &bank)?;
    let magnitude = scheme.sums_channels_optically();
    let readout = if magnitude {
        magnitude_readout(spec, scheme, &engine, &batch, &bank, sensor)?
    } else {
        pseudo_negative_readout(spec, scheme, &engine, &batch, &bank, sensor)?
    };
    let abs_oracle: Vec<Vec<Array2<f64>>> = oracle
        .iter()
        .map(|ks| ks.iter().map(|y| y.mapv(f64::abs)).collect())
        .collect();
    let row = |stage, reference, got: &[Vec<Array2<f64>>], want: &[Vec<Array2<f64>>]| {
        let (max_abs, mean_abs, max_rel, outputs) = errors(got, want);
        SimRow {
            scheme,
            stage,
            reference,
            bit_depth: sensor.bit_depth.label(),
            snr_db: sensor.snr_db.map_or("inf".into(), |s| s.to_string()),
            outputs,
            max_abs_error: max_abs,
            mean_abs_error: mean_abs,
            max_rel_error: max_rel,
        }
    };
    Ok(vec![
        row("field", "signed", &field, &oracle),
        if magnitude {
            row("readout", "magnitude", &readout, &abs_oracle)
        } else {
            row("readout", "signed", &readout, &oracle)
        },
    ])
}

/// Max and mean absolute error, and max error relative to the largest
/// reference magnitude.
fn errors(got: &[Vec<Array2<f64>>], want: &[Vec<Array2<f64>>]) -> (f64, f64, f64, usize) {
    let (mut max_abs, mut sum, mut n, mut scale) = (0.0f64, 0.0, 0usize, 0.0f64);
    for (g, w) in got.iter().flatten().zip(want.iter().flatten()) {
        for (a, b) in g.iter().zip(w.iter()) {
            let e = (a - b).abs();
            max_abs = max_abs.max(e);
            sum += e;
            n += 1;
            scale = scale.max(b.abs());
        }
    }
    let rel = if scale > 0.0 {
        max_abs / scale
    } else {
        max_abs
    };
    (max_abs, if n > 0 { sum / n as f64 } else { 0.0 }, rel, n)
}

/// Pre-detection outputs indexed `[image][filter]`, channel sums taken in
/// the field where the scheme sums digitally.
fn field_stage(
    spec: &ConvSpec,
    scheme: Scheme,
    engine: &OpticsEngine,
    batch: &[MultiChannelImage],
    bank: &FilterBank,
) -> Result<Vec<Vec<Array2<f64>>>> {
    let out = spec.output_side();
    let sum = |planes: Vec<Array2<f64>>| {
        planes
            .into_iter()
            .fold(Array2::zeros((out, out)), |a, p| a + p)
    };
    match scheme {
        Scheme::Channel => batch
            .iter()
            .map(|x| {
                (0..spec.filters)
                    .map(|k| {
                        let passes = channel_tiled_passes(x, bank.filter(k), spec, engine)?;
                        Ok(sum(passes.into_iter().flat_map(|p| p.extracted).collect()))
                    })
                    .collect()
            })
            .collect(),
        Scheme::Mixed => batch
            .iter()
            .map(|x| mixed_tiled_conv(x, bank, spec, engine))
            .collect(),
        Scheme::Filter => batch
            .iter()
            .map(|x| {
                let per_channel = filter_tiled_conv(x, bank, spec, engine)?;
                Ok((0..spec.filters)
                    .map(|k| sum(per_channel.iter().map(|c| c[k].clone()).collect()))
                    .collect())
            })
            .collect(),
        Scheme::Input => {
            let per_filter = (0..spec.filters)
                .map(|k| input_tiled_conv(batch, bank.filter(k), spec, engine))
                .collect::<Result<Vec<_>>>()?;
            Ok((0..batch.len())
                .map(|b| per_filter.iter().map(|f| f[b].clone()).collect())
                .collect())
        }
        Scheme::None => {
            let layout = layout_none(spec, &sys_of(engine))?;
            batch
                .iter()
                .map(|x| {
                    (0..spec.filters)
                        .map(|k| {
                            let planes = (0..spec.channels)
                                .map(|c| {
                                    let kc = bank.filter(k).index_axis_move(Axis(0), c);
                                    Ok(run_frame(engine, &layout, |_, _| x.channel(c), |_, _| kc)?
                                        .extracted
                                        .remove(0))
                                })
                                .collect::<Result<Vec<_>>>()?;
                            Ok(sum(planes))
                        })
                        .collect()
                })
                .collect()
        }
    }
}

fn sys_of(engine: &OpticsEngine) -> SystemConfig {
    SystemConfig {
        slm_side: engine.side(),
        frequency_hz: 1.0,
    }
}

fn read(frame: &TiledResult, sensor: &SensorConfig, id: u64) -> Vec<Array2<f64>> {
    let rects: Vec<Rect> = frame.layout.valid_regions.iter().map(|r| r.rect).collect();
    let readout = detect_frame(frame.raw_plane.view(), sensor, id, Some(&rects));
    frame.extract_from(readout_sqrt(&readout).view())
}

fn read_all(frames: &[TiledResult], sensor: &SensorConfig, key: &[u64]) -> Vec<Array2<f64>> {
    frames
        .iter()
        .enumerate()
        .flat_map(|(f, frame)| {
            let mut parts = key.to_vec();
            parts.push(f as u64);
            read(frame, sensor, frame_id(&parts))
        })
        .collect()
}

/// Channel and mixed tiling: one detection of the optically summed field.
fn magnitude_readout(
    spec: &ConvSpec,
    scheme: Scheme,
    engine: &OpticsEngine,
    batch: &[MultiChannelImage],
    bank: &FilterBank,
    sensor: &SensorConfig,
) -> Result<Vec<Vec<Array2<f64>>>> {
    batch
        .iter()
        .enumerate()
        .map(|(b, x)| {
            if scheme == Scheme::Mixed {
                return Ok(read_all(
                    &mixed_tiled_frames(x, bank, spec, engine)?,
                    sensor,
                    &[1, b as u64],
                ));
            }
            (0..spec.filters)
                .map(|k| {
                    let frame = channel_tiled_conv(x, bank.filter(k), spec, engine)?;
                    Ok(read(&frame, sensor, frame_id(&[1, b as u64, k as u64])).remove(0))
                })
                .collect()
        })
        .collect()
}

/// Filter, input and untiled schemes: split banks, detect every channel,
/// sum channels and subtract digitally.
fn pseudo_negative_readout(
    spec: &ConvSpec,
    scheme: Scheme,
    engine: &OpticsEngine,
    batch: &[MultiChannelImage],
    bank: &FilterBank,
    sensor: &SensorConfig,
) -> Result<Vec<Vec<Array2<f64>>>> {
    let out = spec.output_side();
    let (pos, neg) = pseudo_negative_split(bank);
    let mut acc = vec![vec![Array2::<f64>::zeros((out, out)); spec.filters]; batch.len()];
    for (sign, part) in [(1.0, &pos), (-1.0, &neg)] {
        let tag = if sign > 0.0 { 2 } else { 3 };
        for c in 0..spec.channels {
            let kernel = |k: usize| part.filter(k).index_axis_move(Axis(0), c);
            let mut add =
                |b: usize, k: usize, plane: &Array2<f64>| acc[b][k].scaled_add(sign, plane);
            match scheme {
                Scheme::Filter => {
                    for (b, x) in batch.iter().enumerate() {
                        let kernels: Vec<ArrayView2<'_, f64>> =
                            (0..spec.filters).map(kernel).collect();
                        let frames = filter_tiled_frames(x.channel(c), &kernels, spec, engine)?;
                        for (k, p) in read_all(&frames, sensor, &[tag, c as u64, b as u64])
                            .iter()
                            .enumerate()
                        {
                            add(b, k, p);
                        }
                    }
                }
                Scheme::Input => {
                    let inputs: Vec<ArrayView2<'_, f64>> =
                        batch.iter().map(|x| x.channel(c)).collect();
                    for k in 0..spec.filters {
                        let frames = input_tiled_frames(&inputs, kernel(k), spec, engine)?;
                        for (b, p) in read_all(&frames, sensor, &[tag, c as u64, k as u64])
                            .iter()
                            .enumerate()
                        {
                            add(b, k, p);
                        }
                    }
                }
                _ => {
                    let layout = layout_none(spec, &sys_of(engine))?;
                    for (b, x) in batch.iter().enumerate() {
                        for k in 0..spec.filters {
                            let frame =
                                run_frame(engine, &layout, |_, _| x.channel(c), |_, _| kernel(k))?;
                            let id = frame_id(&[tag, c as u64, b as u64, k as u64]);
                            add(b, k, &read(&frame, sensor, id)[0]);
                        }
                    }
                }
            }
        }
    }
    Ok(acc)
}
