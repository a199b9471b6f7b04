//! Packing arithmetic: cells per plane, mixed block counts, utilization.

use crate::error::{Error, Result};

/// `floor(D / (M + N - 1))`, cells along one side of the plane.
pub fn cells_per_row(input: usize, kernel: usize, slm_side: usize) -> usize {
    slm_side / (input + kernel - 1)
}

/// `T = floor(D / (M + N - 1))^2`.
pub fn cells_per_plane(input: usize, kernel: usize, slm_side: usize) -> usize {
    let w = cells_per_row(input, kernel, slm_side);
    w * w
}

/// Cell rows taken by one mixed block: `ceil(N1 / sqrt(T))`.
pub fn mixed_rows_per_block(first: usize, cells_per_row: usize) -> usize {
    first.div_ceil(cells_per_row)
}

/// `T_B = floor(sqrt(T) / ceil(N1 / sqrt(T)))`.
pub fn blocks_per_frame(first: usize, cells_per_row: usize) -> usize {
    cells_per_row / mixed_rows_per_block(first, cells_per_row)
}

/// Utilization of a single tiling scheme, `M^2 n / (D^2 ceil(n / T))`.
pub fn utilization_single(
    input: usize,
    count: usize,
    slm_side: usize,
    cells_per_plane: usize,
) -> f64 {
    let used = (input * input) as f64 * count as f64;
    let frames = count.div_ceil(cells_per_plane.max(1));
    used / ((slm_side * slm_side) as f64 * frames as f64)
}

/// Utilization of mixed tiling, `M^2 N1 N2 / (D^2 ceil(N2 / T_B))`.
pub fn utilization_mixed(
    input: usize,
    first: usize,
    second: usize,
    slm_side: usize,
    cells_per_plane: usize,
) -> Result<f64> {
    if 2 * first >= cells_per_plane {
        return Err(Error::MixedCondition {
            channels: first,
            cells: cells_per_plane,
        });
    }
    let per_row = isqrt(cells_per_plane);
    let tb = blocks_per_frame(first, per_row);
    let used = (input * input) as f64 * first as f64 * second as f64;
    Ok(used / ((slm_side * slm_side) as f64 * second.div_ceil(tb) as f64))
}

pub(crate) fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}
