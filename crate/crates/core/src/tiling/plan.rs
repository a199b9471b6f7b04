use serde::{Deserialize, Serialize};

use super::layout::{layout_channel_group, layout_mixed};
use super::util::{
    blocks_per_frame, cells_per_plane, cells_per_row, utilization_mixed, utilization_single,
};
use super::{Scheme, TilingLayout};
use crate::error::{Error, Result};
use crate::optics::SystemConfig;
use crate::tensor::ConvSpec;

/// Chosen scheme for one layer with its frame count and first-frame layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub scheme: Scheme,
    pub frames: usize,
    pub utilization: f64,
    pub cells_per_plane: usize,
    pub blocks_per_frame: usize,
    pub layout: TilingLayout,
}

/// Picks mixed tiling when `N_c < T/2`, channel tiling otherwise. Ties go to
/// fewer frames, then higher utilization, then channel tiling.
pub fn plan_tiling(spec: &ConvSpec, sys: &SystemConfig) -> Result<Plan> {
    spec.validate()?;
    sys.validate()?;
    let t = cells_per_plane(spec.input, spec.kernel, sys.slm_side);
    if t == 0 {
        return Err(Error::DoesNotFit(format!(
            "cell side {} exceeds SLM side {}",
            spec.cell_side(),
            sys.slm_side
        )));
    }
    let group = spec.channels.min(t);
    let channel = Plan {
        scheme: Scheme::Channel,
        frames: spec.filters * spec.channels.div_ceil(t),
        utilization: utilization_single(spec.input, spec.channels, sys.slm_side, t),
        cells_per_plane: t,
        blocks_per_frame: 1,
        layout: layout_channel_group(spec, sys, group)?,
    };
    if 2 * spec.channels >= t {
        return Ok(channel);
    }
    let tb = blocks_per_frame(
        spec.channels,
        cells_per_row(spec.input, spec.kernel, sys.slm_side),
    );
    let mixed = Plan {
        scheme: Scheme::Mixed,
        frames: spec.filters.div_ceil(tb),
        utilization: utilization_mixed(spec.input, spec.channels, spec.filters, sys.slm_side, t)?,
        cells_per_plane: t,
        blocks_per_frame: tb,
        layout: layout_mixed(spec, sys)?,
    };
    let better = mixed.frames < channel.frames
        || (mixed.frames == channel.frames && mixed.utilization > channel.utilization);
    Ok(if better { mixed } else { channel })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_channel_count_goes_mixed() {
        let p = plan_tiling(&ConvSpec::same(32, 3, 512, 512), &SystemConfig::reference()).unwrap();
        assert_eq!(p.scheme, Scheme::Mixed);
        assert_eq!(p.cells_per_plane, 14400);
        // sqrt(T) = 120, rows = 5, T_B = 24
        assert_eq!(p.blocks_per_frame, 24);
        assert_eq!(p.frames, 22);
    }

    #[test]
    fn huge_input_single_cell() {
        let p = plan_tiling(&ConvSpec::same(2048, 3, 64, 2), &SystemConfig::reference()).unwrap();
        assert_eq!(p.scheme, Scheme::Channel);
        assert_eq!(p.cells_per_plane, 1);
        assert_eq!(p.layout.inputs.len(), 1);
        assert_eq!(p.frames, 128);
    }

    #[test]
    fn does_not_fit() {
        let e =
            plan_tiling(&ConvSpec::same(4095, 3, 1, 1), &SystemConfig::reference()).unwrap_err();
        assert!(matches!(e, Error::DoesNotFit(_)));
    }

    #[test]
    fn single_filter_tie_keeps_channel() {
        let p = plan_tiling(
            &ConvSpec::same(4, 3, 2, 1),
            &SystemConfig::new(32, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(p.scheme, Scheme::Channel);
        assert_eq!(p.frames, 1);
    }
}
