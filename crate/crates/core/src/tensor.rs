//! Activation and weight tensors.

use ndarray::{Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMode {
    Same,
    Valid,
}

/// Multi-channel activation tensor, indexed `[channel, row, col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelImage {
    data: Array3<f64>,
}

impl MultiChannelImage {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (c, h, w) = data.dim();
        if c == 0 || h == 0 {
            return Err(Error::Shape(
                "image needs at least one channel and pixel".into(),
            ));
        }
        if h != w {
            return Err(Error::Shape(format!(
                "image channels must be square, got {h}x{w}"
            )));
        }
        Ok(Self { data })
    }

    pub fn zeros(channels: usize, side: usize) -> Self {
        Self {
            data: Array3::zeros((channels.max(1), side.max(1), side.max(1))),
        }
    }

    pub fn from_planes(planes: &[Array2<f64>]) -> Result<Self> {
        let views: Vec<_> = planes.iter().map(|p| p.view()).collect();
        let data = ndarray::stack(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(data)
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn side(&self) -> usize {
        self.data.dim().1
    }

    pub fn channel(&self, c: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), c)
    }

    pub fn view(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array3<f64> {
        self.data
    }
}

/// Filter bank, indexed `[filter, channel, row, col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    data: Array4<f64>,
}

impl FilterBank {
    pub fn new(data: Array4<f64>) -> Result<Self> {
        let (k, c, h, w) = data.dim();
        if k == 0 || c == 0 || h == 0 {
            return Err(Error::Shape("filter bank must be non-empty".into()));
        }
        if h != w {
            return Err(Error::Shape(format!("kernels must be square, got {h}x{w}")));
        }
        Ok(Self { data })
    }

    /// Single filter wrapped as a one-element bank.
    pub fn single(filter: Array3<f64>) -> Result<Self> {
        Self::new(filter.insert_axis(Axis(0)))
    }

    pub fn filters(&self) -> usize {
        self.data.dim().0
    }

    pub fn channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn side(&self) -> usize {
        self.data.dim().2
    }

    pub fn filter(&self, k: usize) -> ArrayView3<'_, f64> {
        self.data.index_axis(Axis(0), k)
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.mapv(f),
        }
    }
}

/// Dimensions of one convolution layer instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    /// Input side `M`.
    pub input: usize,
    /// Kernel side `N`.
    pub kernel: usize,
    pub channels: usize,
    pub filters: usize,
    /// Batch size `N_i`.
    pub batch: usize,
    pub mode: ConvMode,
}

impl ConvSpec {
    pub fn same(input: usize, kernel: usize, channels: usize, filters: usize) -> Self {
        Self {
            input,
            kernel,
            channels,
            filters,
            batch: 1,
            mode: ConvMode::Same,
        }
    }

    pub fn valid(input: usize, kernel: usize, channels: usize, filters: usize) -> Self {
        Self {
            mode: ConvMode::Valid,
            ..Self::same(input, kernel, channels, filters)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.kernel == 0 || self.channels == 0 || self.filters == 0 {
            return Err(Error::Shape(
                "all convolution dimensions must be positive".into(),
            ));
        }
        match self.mode {
            ConvMode::Same if self.kernel.is_multiple_of(2) => Err(Error::EvenKernel(self.kernel)),
            ConvMode::Valid if self.kernel > self.input => Err(Error::KernelTooLarge {
                kernel: self.kernel,
                input: self.input,
            }),
            _ => Ok(()),
        }
    }

    /// Padded cell side `M + N - 1`.
    pub fn cell_side(&self) -> usize {
        self.input + self.kernel - 1
    }

    pub fn output_side(&self) -> usize {
        match self.mode {
            ConvMode::Same => self.input,
            ConvMode::Valid => self.input + 1 - self.kernel,
        }
    }

    /// Zero halo applied to the input in same mode.
    pub fn halo(&self) -> usize {
        match self.mode {
            ConvMode::Same => (self.kernel - 1) / 2,
            ConvMode::Valid => 0,
        }
    }

    pub fn check_operands(&self, x: &MultiChannelImage, f: &FilterBank) -> Result<()> {
        self.validate()?;
        if x.side() != self.input || x.channels() != self.channels {
            return Err(Error::Shape(format!(
                "input is {}x{}x{}, layer expects {}x{}x{}",
                x.channels(),
                x.side(),
                x.side(),
                self.channels,
                self.input,
                self.input
            )));
        }
        if f.channels() != self.channels || f.side() != self.kernel {
            return Err(Error::Shape(format!(
                "filters are {}x{}x{}, layer expects {}x{}x{}",
                f.channels(),
                f.side(),
                f.side(),
                self.channels,
                self.kernel,
                self.kernel
            )));
        }
        Ok(())
    }
}
