//! Plane assembly, optical pass and result extraction.

use ndarray::{s, Array2, ArrayView2, ArrayView3};
use rayon::prelude::*;

use super::layout::{
    layout_channel_group, layout_filter_frame, layout_input_frame, layout_mixed_frame,
};
use super::util::{blocks_per_frame, cells_per_plane, cells_per_row};
use super::TilingLayout;
use crate::error::{Error, Result};
use crate::optics::{OpticsEngine, SystemConfig};
use crate::tensor::{ConvSpec, FilterBank, MultiChannelImage};

/// Output of one frame: the real part of the pre-detection field over the
/// whole plane, and the per-block valid regions cut out of it.
#[derive(Debug, Clone)]
pub struct TiledResult {
    pub layout: TilingLayout,
    pub raw_plane: Array2<f64>,
    /// Largest imaginary component left by the transforms.
    pub max_imag: f64,
    pub extracted: Vec<Array2<f64>>,
}

impl TiledResult {
    /// Cuts the valid regions out of an arbitrary plane of the same geometry,
    /// e.g. a detected readout of `raw_plane`.
    pub fn extract_from(&self, plane: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        extract(&self.layout, plane)
    }
}

fn sys_for(engine: &OpticsEngine) -> SystemConfig {
    SystemConfig {
        slm_side: engine.side(),
        frequency_hz: 1.0,
    }
}

fn wrap(v: i64, side: usize) -> usize {
    v.rem_euclid(side as i64) as usize
}

/// Builds the input plane and the correlation pattern of `layout` on a
/// `side x side` grid. Positions are reduced modulo `side`.
pub fn assemble<'a, I, K>(
    layout: &TilingLayout,
    side: usize,
    input: I,
    kernel: K,
) -> (Array2<f64>, Array2<f64>)
where
    I: Fn(usize, usize) -> ArrayView2<'a, f64>,
    K: Fn(usize, usize) -> ArrayView2<'a, f64>,
{
    let mut plane = Array2::zeros((side, side));
    for p in &layout.inputs {
        let content = input(p.slot, p.channel);
        for ((i, j), &v) in content.indexed_iter() {
            plane[[wrap(p.row + i as i64, side), wrap(p.col + j as i64, side)]] += v;
        }
    }
    let mut pattern = Array2::zeros((side, side));
    for p in &layout.filters {
        let k = kernel(p.slot, p.channel);
        for ((i, j), &v) in k.indexed_iter() {
            pattern[[wrap(p.row + i as i64, side), wrap(p.col + j as i64, side)]] += v;
        }
    }
    (plane, pattern)
}

fn extract(layout: &TilingLayout, plane: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
    layout
        .valid_regions
        .iter()
        .map(|r| {
            let Rect { row, col, side } = r.rect;
            plane.slice(s![row..row + side, col..col + side]).to_owned()
        })
        .collect()
}

use super::Rect;

/// Runs one frame through the engine and extracts its valid regions.
pub fn run_frame<'a, I, K>(
    engine: &OpticsEngine,
    layout: &TilingLayout,
    input: I,
    kernel: K,
) -> Result<TiledResult>
where
    I: Fn(usize, usize) -> ArrayView2<'a, f64>,
    K: Fn(usize, usize) -> ArrayView2<'a, f64>,
{
    let side = engine.side();
    if let Some(r) = layout
        .valid_regions
        .iter()
        .find(|r| r.rect.row.max(r.rect.col) + r.rect.side > side)
    {
        return Err(Error::DoesNotFit(format!(
            "valid region of block {} leaves the {side} plane",
            r.block
        )));
    }
    let (plane, pattern) = assemble(layout, side, input, kernel);
    let field = engine.correlate(plane.view(), pattern.view())?;
    let max_imag = field.data().iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    let raw_plane = field.re();
    let extracted = extract(layout, raw_plane.view());
    Ok(TiledResult {
        layout: layout.clone(),
        raw_plane,
        max_imag,
        extracted,
    })
}

/// Channel tiling of one multi-channel filter against `x`, one frame.
/// Fails with [`Error::DoesNotFit`] when `M_t > D`; see [`channel_tiled_passes`].
pub fn channel_tiled_conv(
    x: &MultiChannelImage,
    filter: ArrayView3<'_, f64>,
    spec: &ConvSpec,
    engine: &OpticsEngine,
) -> Result<TiledResult> {
    check_single(x, filter, spec)?;
    let layout = layout_channel_group(spec, &sys_for(engine), spec.channels)?;
    run_frame(
        engine,
        &layout,
        |_, c| x.channel(c),
        |_, c| filter.index_axis(ndarray::Axis(0), c),
    )
}

/// Channel tiling split into `ceil(N_c / T)` passes of at most `T` channels.
/// The extracted planes of all passes sum to the full result.
pub fn channel_tiled_passes(
    x: &MultiChannelImage,
    filter: ArrayView3<'_, f64>,
    spec: &ConvSpec,
    engine: &OpticsEngine,
) -> Result<Vec<TiledResult>> {
    check_single(x, filter, spec)?;
    let sys = sys_for(engine);
    let t = cells_per_plane(spec.input, spec.kernel, sys.slm_side);
    if t == 0 {
        return Err(Error::DoesNotFit(format!(
            "cell side {} exceeds SLM side {}",
            spec.cell_side(),
            sys.slm_side
        )));
    }
    let groups: Vec<(usize, usize)> = (0..spec.channels)
        .step_by(t)
        .map(|start| (start, (start + t).min(spec.channels)))
        .collect();
    groups
        .par_iter()
        .map(|&(start, end)| {
            let layout = layout_channel_group(spec, &sys, end - start)?;
            run_frame(
                engine,
                &layout,
                |_, c| x.channel(start + c),
                |_, c| filter.index_axis(ndarray::Axis(0), start + c),
            )
        })
        .collect()
}

/// Filter tiling of single-channel kernels against one input channel, in
/// frames of at most `T` filters. Extracted planes follow kernel order.
pub fn filter_tiled_frames<'a>(
    input: ArrayView2<'a, f64>,
    kernels: &[ArrayView2<'a, f64>],
    spec: &ConvSpec,
    engine: &OpticsEngine,
) -> Result<Vec<TiledResult>> {
    let sys = sys_for(engine);
    let t = cells_per_plane(spec.input, spec.kernel, sys.slm_side).max(1);
    kernels
        .par_chunks(t)
        .map(|chunk| {
            let layout = layout_filter_frame(spec, &sys, chunk.len())?;
            run_frame(engine, &layout, |_, _| input, |slot, _| chunk[slot])
        })
        .collect()
}

/// Filter tiling of a whole bank, channel by channel. Returns pre-detection
/// planes indexed `[channel][filter]`; channel sums are left to the caller.
pub fn filter_tiled_conv(
    x: &MultiChannelImage,
    bank: &FilterBank,
    spec: &ConvSpec,
    engine: &OpticsEngine,
) -> Result<Vec<Vec<Array2<f64>>>> {
    spec.check_operands(x, bank)?;
    (0..spec.channels)
        .map(|c| {
            let kernels: Vec<_> = (0..bank.filters())
                .map(|k| bank.filter(k).index_axis_move(ndarray::Axis(0), c))
                .collect();
            let frames = filter_tiled_frames(x.channel(c), &kernels, spec, engine)?;
            Ok(frames.into_iter().flat_map(|f| f.extracted).collect())
        })
        .collect()
}

/// Input tiling of single-channel inputs against one kernel, in frames of at
/// most `T` inputs.
pub fn input_tiled_frames<'a>(
    inputs: &[ArrayView2<'a, f64>],
    kernel: ArrayView2<'a, f64>,
    spec: &ConvSpec,
    engine: &OpticsEngine,
) -> Result<Vec<TiledResult>> {
    let sys = sys_for(engine);
    let t = cells_per_plane(spec.input, spec.kernel, sys.slm_side).max(1);
    inputs
        .par_chunks(t)
        .map(|chunk| {
            let layout = layout_input_frame(spec, &sys, chunk.len())?;
            run_frame(engine, &layout, |slot, _| chunk[slot], |_, _| kernel)
        })
        .collect()
}

/// Input tiling of a batch against one multi-channel filter, channel by
/// channel, with the per-channel planes summed before detection.
pub fn input_tiled_conv(
    batch: &[MultiChannelImage],
    filter: ArrayView3<'_, f64>,
    spec: &ConvSpec,
    engine: &OpticsEngine,
) -> Result<Vec<Array2<f64>>> {
    for x in batch {
        check_single(x, filter, spec)?;
    }
    let out = spec.output_side();
    let mut acc = vec![Array2::zeros((out, out)); batch.len()];
    for c in 0..spec.channels {
        let inputs: Vec<_> = batch.iter().map(|x| x.channel(c)).collect();
        let frames = input_tiled_frames(
            &inputs,
            filter.index_axis(ndarray::Axis(0), c),
            spec,
            engine,
        )?;
        for (a, plane) in acc
            .iter_mut()
            .zip(frames.iter().flat_map(|f| f.extracted.iter()))
        {
            *a += plane;
        }
    }
    Ok(acc)
}

/// Mixed tiling of a whole bank: frames of `T_B` channel-tiled filter blocks.
pub fn mixed_tiled_frames(
    x: &MultiChannelImage,
    bank: &FilterBank,
    spec: &ConvSpec,
    engine: &OpticsEngine,
) -> Result<Vec<TiledResult>> {
    spec.check_operands(x, bank)?;
    let sys = sys_for(engine);
    let per_row = cells_per_row(spec.input, spec.kernel, sys.slm_side);
    if 2 * spec.channels >= per_row * per_row {
        return Err(Error::MixedCondition {
            channels: spec.channels,
            cells: per_row * per_row,
        });
    }
    let tb = blocks_per_frame(spec.channels, per_row);
    let starts: Vec<usize> = (0..bank.filters()).step_by(tb).collect();
    starts
        .par_iter()
        .map(|&start| {
            let count = tb.min(bank.filters() - start);
            let layout = layout_mixed_frame(spec, &sys, count)?;
            run_frame(
                engine,
                &layout,
                |_, c| x.channel(c),
                |slot, c| {
                    bank.filter(start + slot)
                        .index_axis_move(ndarray::Axis(0), c)
                },
            )
        })
        .collect()
}

/// Mixed tiling, returning the `N_k` extracted planes in filter order.
pub fn mixed_tiled_conv(
    x: &MultiChannelImage,
    bank: &FilterBank,
    spec: &ConvSpec,
    engine: &OpticsEngine,
) -> Result<Vec<Array2<f64>>> {
    Ok(mixed_tiled_frames(x, bank, spec, engine)?
        .into_iter()
        .flat_map(|f| f.extracted)
        .collect())
}

fn check_single(x: &MultiChannelImage, filter: ArrayView3<'_, f64>, spec: &ConvSpec) -> Result<()> {
    spec.validate()?;
    let (nc, n, _) = filter.dim();
    if x.channels() != spec.channels
        || nc != spec.channels
        || x.side() != spec.input
        || n != spec.kernel
    {
        return Err(Error::Shape(format!(
            "operands {}x{} / {}x{} do not match layer {}x{} / {}",
            x.channels(),
            x.side(),
            nc,
            n,
            spec.channels,
            spec.input,
            spec.kernel
        )));
    }
    Ok(())
}
