//! Frame layout builders for each scheme.

use super::util::{blocks_per_frame, cells_per_plane, cells_per_row, isqrt, mixed_rows_per_block};
use super::{Placement, Rect, Scheme, TilingLayout, ValidRegion};
use crate::error::{Error, Result};
use crate::optics::SystemConfig;
use crate::tensor::ConvSpec;

fn ceil_sqrt(n: usize) -> usize {
    let r = isqrt(n);
    if r * r == n {
        r
    } else {
        r + 1
    }
}

fn fits(spec: &ConvSpec, sys: &SystemConfig) -> Result<()> {
    spec.validate()?;
    sys.validate()?;
    if spec.cell_side() > sys.slm_side {
        return Err(Error::DoesNotFit(format!(
            "cell side {} exceeds SLM side {}",
            spec.cell_side(),
            sys.slm_side
        )));
    }
    Ok(())
}

fn base(scheme: Scheme, spec: &ConvSpec, sys: &SystemConfig, cell_side: usize) -> TilingLayout {
    TilingLayout {
        scheme,
        mode: spec.mode,
        input_side: spec.input,
        kernel_side: spec.kernel,
        slm_side: sys.slm_side,
        cell_side,
        grid_rows: 0,
        grid_cols: 0,
        tiled_side: sys.slm_side,
        cells: Vec::new(),
        inputs: Vec::new(),
        filters: Vec::new(),
        valid_regions: Vec::new(),
        cells_per_plane: cells_per_plane(spec.input, spec.kernel, sys.slm_side),
        rows_per_block: 0,
        blocks_per_frame: 0,
    }
}

/// Channel tiling of all `N_c` channels for one filter.
pub fn layout_channel(spec: &ConvSpec, sys: &SystemConfig) -> Result<TilingLayout> {
    layout_channel_group(spec, sys, spec.channels)
}

/// Channel tiling of `channels` consecutive channels (one pass when `N_c > T`).
///
/// Channels sit row-major on a `ceil(sqrt(n))` square grid of `(M+N-1)` cells,
/// input content centered in each cell by the zero halo. The valid `M x M`
/// region is the center of the `M_t x M_t` block, at `floor((M_t - M) / 2)`.
pub fn layout_channel_group(
    spec: &ConvSpec,
    sys: &SystemConfig,
    channels: usize,
) -> Result<TilingLayout> {
    fits(spec, sys)?;
    if channels == 0 {
        return Err(Error::Shape("channel group must be non-empty".into()));
    }
    let c = spec.cell_side();
    let g = ceil_sqrt(channels);
    let tiled = g * c;
    if tiled > sys.slm_side {
        return Err(Error::DoesNotFit(format!(
            "channel-tiled block of {channels} channels is {tiled} pixels, SLM side is {}",
            sys.slm_side
        )));
    }
    let halo = spec.halo() as i64;
    let out = spec.output_side();
    let offset = ((tiled - out) / 2) as i64;
    let mut layout = base(Scheme::Channel, spec, sys, c);
    layout.grid_rows = g;
    layout.grid_cols = g;
    layout.tiled_side = tiled;
    for k in 0..channels {
        let row = ((k / g) * c) as i64;
        let col = ((k % g) * c) as i64;
        layout.cells.push(Placement {
            slot: 0,
            channel: k,
            row,
            col,
        });
        let (br, bc) = (row + halo, col + halo);
        layout.inputs.push(Placement {
            slot: 0,
            channel: k,
            row: br,
            col: bc,
        });
        layout.filters.push(Placement {
            slot: 0,
            channel: k,
            row: br - halo - offset,
            col: bc - halo - offset,
        });
    }
    layout.valid_regions.push(ValidRegion {
        block: 0,
        rect: Rect {
            row: offset as usize,
            col: offset as usize,
            side: out,
        },
    });
    Ok(layout)
}

/// Filter tiling: first frame, holding `min(N_k, T)` filters.
pub fn layout_filter(spec: &ConvSpec, sys: &SystemConfig) -> Result<TilingLayout> {
    let t = cells_per_plane(spec.input, spec.kernel, sys.slm_side);
    layout_filter_frame(spec, sys, spec.filters.min(t).max(1))
}

pub fn layout_filter_frame(
    spec: &ConvSpec,
    sys: &SystemConfig,
    count: usize,
) -> Result<TilingLayout> {
    fits(spec, sys)?;
    broadcast(Scheme::Filter, spec, sys, count, spec.cell_side())
}

/// Filter tiling with a caller-chosen cell pitch. A pitch below `M + N - 1`
/// drops the zero padding between filters and corrupts the extracted results.
pub fn layout_filter_with_cell(
    spec: &ConvSpec,
    sys: &SystemConfig,
    count: usize,
    cell_side: usize,
) -> Result<TilingLayout> {
    spec.validate()?;
    if cell_side < spec.output_side() || cell_side > sys.slm_side {
        return Err(Error::Config(format!(
            "cell side {cell_side} cannot hold a result"
        )));
    }
    broadcast(Scheme::Filter, spec, sys, count, cell_side)
}

/// Input tiling: first frame, holding `min(N_i, T)` inputs.
pub fn layout_input(spec: &ConvSpec, sys: &SystemConfig) -> Result<TilingLayout> {
    let t = cells_per_plane(spec.input, spec.kernel, sys.slm_side);
    layout_input_frame(spec, sys, spec.batch.max(1).min(t).max(1))
}

pub fn layout_input_frame(
    spec: &ConvSpec,
    sys: &SystemConfig,
    count: usize,
) -> Result<TilingLayout> {
    fits(spec, sys)?;
    broadcast(Scheme::Input, spec, sys, count, spec.cell_side())
}

/// One input channel against one kernel, no tiling.
pub fn layout_none(spec: &ConvSpec, sys: &SystemConfig) -> Result<TilingLayout> {
    fits(spec, sys)?;
    broadcast(Scheme::None, spec, sys, 1, spec.cell_side())
}

// Filter tiling broadcasts one input against many kernels; input tiling the
// reverse. Results land centered in their item's cell.
fn broadcast(
    scheme: Scheme,
    spec: &ConvSpec,
    sys: &SystemConfig,
    count: usize,
    cell: usize,
) -> Result<TilingLayout> {
    let per_row = sys.slm_side / cell;
    let capacity = per_row * per_row;
    if count == 0 || count > capacity {
        return Err(Error::DoesNotFit(format!(
            "{count} blocks requested, {capacity} fit per frame"
        )));
    }
    let halo = spec.halo() as i64;
    let out = spec.output_side();
    let centre = ((cell - out) / 2) as i64;
    let mut layout = base(scheme, spec, sys, cell);
    layout.grid_rows = count.div_ceil(per_row);
    layout.grid_cols = per_row.min(count);
    let tiles_filters = scheme == Scheme::Filter;
    if tiles_filters {
        layout.inputs.push(Placement {
            slot: 0,
            channel: 0,
            row: 0,
            col: 0,
        });
    }
    for j in 0..count {
        let row = ((j / per_row) * cell) as i64;
        let col = ((j % per_row) * cell) as i64;
        layout.cells.push(Placement {
            slot: j,
            channel: 0,
            row,
            col,
        });
        let (tr, tc) = (row + centre, col + centre);
        if tiles_filters {
            layout.filters.push(Placement {
                slot: j,
                channel: 0,
                row: -halo - tr,
                col: -halo - tc,
            });
        } else {
            let (br, bc) = (row + halo, col + halo);
            layout.inputs.push(Placement {
                slot: j,
                channel: 0,
                row: br,
                col: bc,
            });
            if j == 0 {
                layout.filters.push(Placement {
                    slot: 0,
                    channel: 0,
                    row: br - halo - tr,
                    col: bc - halo - tc,
                });
            }
        }
        layout.valid_regions.push(ValidRegion {
            block: j,
            rect: Rect {
                row: tr as usize,
                col: tc as usize,
                side: out,
            },
        });
    }
    Ok(layout)
}

/// Mixed tiling: first frame, holding `min(N_k, T_B)` filter blocks.
pub fn layout_mixed(spec: &ConvSpec, sys: &SystemConfig) -> Result<TilingLayout> {
    fits(spec, sys)?;
    let per_row = cells_per_row(spec.input, spec.kernel, sys.slm_side);
    mixed_condition(spec, per_row)?;
    let tb = blocks_per_frame(spec.channels, per_row);
    layout_mixed_frame(spec, sys, spec.filters.min(tb))
}

fn mixed_condition(spec: &ConvSpec, per_row: usize) -> Result<()> {
    let t = per_row * per_row;
    if 2 * spec.channels >= t {
        return Err(Error::MixedCondition {
            channels: spec.channels,
            cells: t,
        });
    }
    Ok(())
}

/// Mixed tiling frame with `count` filter blocks.
///
/// Each filter's channels fill a block `B` of `ceil(N_c / sqrt(T))` cell rows
/// and `sqrt(T)` cell columns, row-major. Blocks stack top to bottom without
/// padding between them; the input plane carries one channel-tiled copy at the
/// top. Each filter's valid region is the center of its own block.
pub fn layout_mixed_frame(
    spec: &ConvSpec,
    sys: &SystemConfig,
    count: usize,
) -> Result<TilingLayout> {
    fits(spec, sys)?;
    let c = spec.cell_side();
    let per_row = cells_per_row(spec.input, spec.kernel, sys.slm_side);
    mixed_condition(spec, per_row)?;
    let rows = mixed_rows_per_block(spec.channels, per_row);
    let tb = blocks_per_frame(spec.channels, per_row);
    if count == 0 || count > tb {
        return Err(Error::DoesNotFit(format!(
            "{count} filter blocks requested, {tb} fit per frame"
        )));
    }
    let halo = spec.halo() as i64;
    let out = spec.output_side();
    let block_h = rows * c;
    let (cr, cc) = (
        ((block_h - out) / 2) as i64,
        ((per_row * c - out) / 2) as i64,
    );
    let mut layout = base(Scheme::Mixed, spec, sys, c);
    layout.grid_rows = rows * count;
    layout.grid_cols = per_row;
    layout.rows_per_block = rows;
    layout.blocks_per_frame = tb;
    let origin = |k: usize| (((k / per_row) * c) as i64, ((k % per_row) * c) as i64);
    for k in 0..spec.channels {
        let (r, col) = origin(k);
        layout.inputs.push(Placement {
            slot: 0,
            channel: k,
            row: r + halo,
            col: col + halo,
        });
    }
    for f in 0..count {
        let top = (f * block_h) as i64;
        let (tr, tc) = (top + cr, cc);
        for k in 0..spec.channels {
            let (r, col) = origin(k);
            layout.cells.push(Placement {
                slot: f,
                channel: k,
                row: top + r,
                col,
            });
            layout.filters.push(Placement {
                slot: f,
                channel: k,
                row: r - tr,
                col: col - tc,
            });
        }
        layout.valid_regions.push(ValidRegion {
            block: f,
            rect: Rect {
                row: tr as usize,
                col: tc as usize,
                side: out,
            },
        });
    }
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(d: usize) -> SystemConfig {
        SystemConfig::new(d, 1.0).unwrap()
    }

    #[test]
    fn channel_two_channels() {
        let l = layout_channel(&ConvSpec::same(4, 3, 2, 1), &sys(16)).unwrap();
        assert_eq!(l.cell_side, 6);
        assert_eq!((l.grid_rows, l.grid_cols), (2, 2));
        assert_eq!(l.tiled_side, 12);
        assert_eq!(l.cells.len(), 2);
        assert_eq!(
            l.valid_regions[0].rect,
            Rect {
                row: 4,
                col: 4,
                side: 4
            }
        );
        l.check_cells().unwrap();
    }

    #[test]
    fn channel_nine_channels() {
        let l = layout_channel(&ConvSpec::same(32, 3, 9, 1), &sys(128)).unwrap();
        assert_eq!(l.tiled_side, 102);
        assert_eq!(
            l.valid_regions[0].rect,
            Rect {
                row: 35,
                col: 35,
                side: 32
            }
        );
    }

    #[test]
    fn channel_single_is_padded_conv() {
        let l = layout_channel(&ConvSpec::same(5, 3, 1, 1), &sys(7)).unwrap();
        assert_eq!(l.tiled_side, 7);
        assert_eq!(l.valid_regions[0].rect.row, 1);
    }

    #[test]
    fn channel_errors() {
        assert!(matches!(
            layout_channel(&ConvSpec::same(4, 2, 1, 1), &sys(16)),
            Err(Error::EvenKernel(2))
        ));
        assert!(matches!(
            layout_channel(&ConvSpec::same(4, 3, 5, 1), &sys(16)),
            Err(Error::DoesNotFit(_))
        ));
    }

    #[test]
    fn mixed_counts_small() {
        let spec = ConvSpec::same(4, 3, 2, 7);
        let l = layout_mixed(&spec, &sys(32)).unwrap();
        assert_eq!(l.cells_per_plane, 25);
        assert_eq!(l.rows_per_block, 1);
        assert_eq!(l.blocks_per_frame, 5);
        assert_eq!(l.blocks(), 5);
        l.check_cells().unwrap();
        let too_many = ConvSpec::same(4, 3, 13, 1);
        assert!(matches!(
            layout_mixed(&too_many, &sys(32)),
            Err(Error::MixedCondition { .. })
        ));
    }

    #[test]
    fn filter_cells_cover_frame() {
        let spec = ConvSpec::same(8, 3, 1, 4);
        let l = layout_filter(&spec, &sys(32)).unwrap();
        assert_eq!(l.cells_per_plane, 9);
        assert_eq!(l.blocks(), 4);
        l.check_cells().unwrap();
        for r in &l.valid_regions {
            let cell = l.cells[r.block];
            assert_eq!(r.rect.row as i64, cell.row + 1);
            assert_eq!(r.rect.col as i64, cell.col + 1);
        }
        assert!(layout_filter_frame(&spec, &sys(32), 10).is_err());
    }
}
