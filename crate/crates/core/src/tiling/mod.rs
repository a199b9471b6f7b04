//! Input, filter, channel and mixed tiling on the SLM planes.
//!
//! A [`TilingLayout`] describes one frame: where input content sits on the
//! input plane, where each kernel sits in the correlation pattern handed to
//! [`OpticsEngine::correlate`](crate::optics::OpticsEngine::correlate), and
//! which rectangles of the output plane hold valid results. The physical
//! filter SLM carries the index reflection of that pattern.
//!
//! Output placement follows one rule: a kernel anchored at `a` against input
//! content whose top-left pixel is at `b` produces output pixel `(0, 0)` at
//! `b - a - halo`. Builders pick anchors from the target output position.

mod exec;
mod layout;
mod plan;
mod util;

use serde::{Deserialize, Serialize};

use crate::tensor::ConvMode;

pub use exec::{
    assemble, channel_tiled_conv, channel_tiled_passes, filter_tiled_conv, filter_tiled_frames,
    input_tiled_conv, input_tiled_frames, mixed_tiled_conv, mixed_tiled_frames, run_frame,
    TiledResult,
};
pub use layout::{
    layout_channel, layout_channel_group, layout_filter, layout_filter_frame,
    layout_filter_with_cell, layout_input, layout_input_frame, layout_mixed, layout_mixed_frame,
    layout_none,
};
pub use plan::{plan_tiling, Plan};
pub use util::{
    blocks_per_frame, cells_per_plane, cells_per_row, mixed_rows_per_block, utilization_mixed,
    utilization_single,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    None,
    Input,
    Filter,
    Channel,
    Mixed,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::None,
        Scheme::Input,
        Scheme::Filter,
        Scheme::Channel,
        Scheme::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::Input => "input",
            Scheme::Filter => "filter",
            Scheme::Channel => "channel",
            Scheme::Mixed => "mixed",
        }
    }

    /// Channel and mixed tiling sum channels optically, before detection.
    pub fn sums_channels_optically(self) -> bool {
        matches!(self, Scheme::Channel | Scheme::Mixed)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| crate::Error::Config(format!("unknown tiling scheme '{s}'")))
    }
}

/// One tiled item: `slot` is the frame-local block (input or filter) index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub slot: usize,
    pub channel: usize,
    pub row: i64,
    pub col: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub side: usize,
}

/// Output rectangle holding the result for one frame-local block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidRegion {
    pub block: usize,
    pub rect: Rect,
}

/// Geometry of a single frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingLayout {
    pub scheme: Scheme,
    pub mode: ConvMode,
    pub input_side: usize,
    pub kernel_side: usize,
    pub slm_side: usize,
    /// `M + N - 1`.
    pub cell_side: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// `M_t` for channel tiling, `D` otherwise.
    pub tiled_side: usize,
    /// Cell origins on the tiled plane, one per tiled item.
    pub cells: Vec<Placement>,
    /// Top-left of each input channel's content on the input plane.
    pub inputs: Vec<Placement>,
    /// Top-left tap of each kernel in the correlation pattern, before reduction mod `D`.
    pub filters: Vec<Placement>,
    pub valid_regions: Vec<ValidRegion>,
    /// `T`, cells that fit on a `D x D` plane.
    pub cells_per_plane: usize,
    /// Cell rows per mixed block `B`.
    pub rows_per_block: usize,
    /// `T_B`, mixed blocks per frame.
    pub blocks_per_frame: usize,
}

impl TilingLayout {
    pub fn output_side(&self) -> usize {
        match self.mode {
            ConvMode::Same => self.input_side,
            ConvMode::Valid => self.input_side + 1 - self.kernel_side,
        }
    }

    pub fn halo(&self) -> usize {
        match self.mode {
            ConvMode::Same => (self.kernel_side - 1) / 2,
            ConvMode::Valid => 0,
        }
    }

    /// Number of frame-local blocks with a valid region.
    pub fn blocks(&self) -> usize {
        self.valid_regions.len()
    }

    /// Checks that cells do not overlap and lie inside the plane.
    pub fn check_cells(&self) -> crate::Result<()> {
        let c = self.cell_side as i64;
        let d = self.slm_side as i64;
        for (i, a) in self.cells.iter().enumerate() {
            if a.row < 0 || a.col < 0 || a.row + c > d || a.col + c > d {
                return Err(crate::Error::DoesNotFit(format!(
                    "cell {i} at ({}, {}) leaves the plane",
                    a.row, a.col
                )));
            }
            for b in &self.cells[i + 1..] {
                if (a.row - b.row).abs() < c && (a.col - b.col).abs() < c {
                    return Err(crate::Error::Shape(format!(
                        "cells at ({}, {}) and ({}, {}) overlap",
                        a.row, a.col, b.row, b.col
                    )));
                }
            }
        }
        Ok(())
    }
}
