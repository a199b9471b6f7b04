//! Brute-force multi-channel cross-correlation, the ground truth for every
//! optical path in this crate.
//!
//! Accumulation is double precision in a fixed order: for each output pixel,
//! each channel's window sum (rows, then columns) is formed first and the
//! channel partials are added in channel order. A multi-channel result is
//! therefore bitwise equal to summing single-channel results in channel order.

use ndarray::{Array2, ArrayView2, ArrayView3};

use crate::error::{Error, Result};
use crate::tensor::MultiChannelImage;

/// Same-mode cross-correlation of `x` with one multi-channel filter, input
/// zero-padded by `(N-1)/2` on every side. No filter flip.
pub fn direct_conv_same(x: &MultiChannelImage, filter: ArrayView3<'_, f64>) -> Result<Array2<f64>> {
    let (nc, n, n2) = filter.dim();
    check_channels(x, nc, n, n2)?;
    if n % 2 == 0 {
        return Err(Error::EvenKernel(n));
    }
    let m = x.side();
    let halo = (n - 1) / 2;
    let mut out = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for c in 0..nc {
                let xc = x.channel(c);
                let mut partial = 0.0;
                for a in 0..n {
                    let r = i + a;
                    if r < halo || r - halo >= m {
                        continue;
                    }
                    for b in 0..n {
                        let col = j + b;
                        if col < halo || col - halo >= m {
                            continue;
                        }
                        partial += xc[[r - halo, col - halo]] * filter[[c, a, b]];
                    }
                }
                acc += partial;
            }
            out[[i, j]] = acc;
        }
    }
    Ok(out)
}

/// Valid-mode cross-correlation: no padding, output `(M-N+1)^2`.
pub fn direct_conv_valid(
    x: &MultiChannelImage,
    filter: ArrayView3<'_, f64>,
) -> Result<Array2<f64>> {
    let (nc, n, n2) = filter.dim();
    check_channels(x, nc, n, n2)?;
    let m = x.side();
    if n > m {
        return Err(Error::KernelTooLarge {
            kernel: n,
            input: m,
        });
    }
    let side = m - n + 1;
    let mut out = Array2::zeros((side, side));
    for i in 0..side {
        for j in 0..side {
            let mut acc = 0.0;
            for c in 0..nc {
                let xc = x.channel(c);
                let mut partial = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        partial += xc[[i + a, j + b]] * filter[[c, a, b]];
                    }
                }
                acc += partial;
            }
            out[[i, j]] = acc;
        }
    }
    Ok(out)
}

/// 180 degree rotation of a kernel plane.
pub fn flip_filter(kernel: ArrayView2<'_, f64>) -> Array2<f64> {
    let (h, w) = kernel.dim();
    Array2::from_shape_fn((h, w), |(i, j)| kernel[[h - 1 - i, w - 1 - j]])
}

fn check_channels(x: &MultiChannelImage, nc: usize, n: usize, n2: usize) -> Result<()> {
    if n != n2 || n == 0 {
        return Err(Error::Shape(format!(
            "kernel must be square and non-empty, got {n}x{n2}"
        )));
    }
    if nc != x.channels() {
        return Err(Error::Shape(format!(
            "filter has {nc} channels, input has {}",
            x.channels()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};

    fn single(plane: Array2<f64>) -> MultiChannelImage {
        MultiChannelImage::new(plane.insert_axis(ndarray::Axis(0))).unwrap()
    }

    #[test]
    fn center_delta_is_identity() {
        let x = single(Array2::from_shape_fn((5, 5), |(i, j)| {
            (i * 5 + j) as f64 - 7.0
        }));
        let mut f = Array3::zeros((1, 3, 3));
        f[[0, 1, 1]] = 1.0;
        let y = direct_conv_same(&x, f.view()).unwrap();
        assert_eq!(y, x.channel(0));
    }

    #[test]
    fn all_ones_counts_overlap() {
        let x = single(Array2::ones((3, 3)));
        let f = Array3::ones((1, 3, 3));
        let y = direct_conv_same(&x, f.view()).unwrap();
        assert_eq!(y[[1, 1]], 9.0);
        for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(y[[i, j]], 4.0);
        }
        assert_eq!(y[[0, 1]], 6.0);
    }

    #[test]
    fn valid_ramp_window_sums() {
        let x = single(Array2::from_shape_fn((4, 4), |(i, j)| (i * 4 + j) as f64));
        let f = Array3::ones((1, 3, 3));
        let y = direct_conv_valid(&x, f.view()).unwrap();
        assert_eq!(y, array![[45.0, 54.0], [81.0, 90.0]]);
    }

    #[test]
    fn valid_full_overlap_is_dot_product() {
        let x = single(array![[1.0, 2.0], [3.0, 4.0]]);
        let f = array![[[0.5, -1.0], [2.0, 0.25]]];
        let y = direct_conv_valid(&x, f.view()).unwrap();
        assert_eq!(y.dim(), (1, 1));
        assert_eq!(y[[0, 0]], 0.5 - 2.0 + 6.0 + 1.0);
    }

    #[test]
    fn valid_zero_input() {
        let x = MultiChannelImage::zeros(1, 5);
        let f = Array3::from_elem((1, 3, 3), 2.5);
        assert!(direct_conv_valid(&x, f.view())
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn errors() {
        let x = MultiChannelImage::zeros(2, 4);
        assert!(matches!(
            direct_conv_same(&x, Array3::zeros((1, 3, 3)).view()),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            direct_conv_same(&x, Array3::zeros((2, 2, 2)).view()),
            Err(Error::EvenKernel(2))
        ));
        assert!(matches!(
            direct_conv_valid(&x, Array3::zeros((2, 5, 5)).view()),
            Err(Error::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn flip_cases() {
        let ones = Array2::<f64>::ones((3, 3));
        assert_eq!(flip_filter(ones.view()), ones);
        let mut delta = Array2::zeros((4, 4));
        delta[[0, 0]] = 1.0;
        let flipped = flip_filter(delta.view());
        assert_eq!(flipped[[3, 3]], 1.0);
        assert_eq!(flipped.sum(), 1.0);
        let k = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]];
        assert_eq!(flip_filter(flip_filter(k.view()).view()), k);
    }
}
