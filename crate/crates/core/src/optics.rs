//! The ideal 4F correlator: Fourier transform of the input plane, point-wise
//! product with the filter plane, inverse transform.
//!
//! Transforms are unitary (`1/sqrt(D)` per axis). [`OpticsEngine::four_f_pass`]
//! multiplies the inverse transform by `D`, so a pass reproduces the plain
//! circular convolution sum without any residual scale factor.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SLM resolution and frame rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// SLM side `D` in pixels.
    pub slm_side: usize,
    /// Frame frequency in Hz.
    pub frequency_hz: f64,
}

impl SystemConfig {
    pub fn new(slm_side: usize, frequency_hz: f64) -> Result<Self> {
        let cfg = Self {
            slm_side,
            frequency_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 4K SLM at 2 MHz.
    pub fn reference() -> Self {
        Self {
            slm_side: 4096,
            frequency_hz: 2e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slm_side == 0 {
            return Err(Error::Config("SLM side must be at least 1".into()));
        }
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return Err(Error::Config(format!(
                "frame frequency must be positive, got {}",
                self.frequency_hz
            )));
        }
        Ok(())
    }

    pub fn frame_time(&self) -> f64 {
        1.0 / self.frequency_hz
    }
}

/// Square complex field on an SLM plane.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPlane {
    data: Array2<Complex64>,
}

impl FieldPlane {
    pub fn new(data: Array2<Complex64>) -> Result<Self> {
        let (h, w) = data.dim();
        if h != w || h == 0 {
            return Err(Error::Shape(format!(
                "field plane must be square and non-empty, got {h}x{w}"
            )));
        }
        Ok(Self { data })
    }

    pub fn from_real(plane: ArrayView2<'_, f64>) -> Result<Self> {
        Self::new(plane.mapv(|v| Complex64::new(v, 0.0)))
    }

    pub fn side(&self) -> usize {
        self.data.dim().0
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<Complex64> {
        self.data
    }

    pub fn re(&self) -> Array2<f64> {
        self.data.mapv(|c| c.re)
    }

    pub fn im(&self) -> Array2<f64> {
        self.data.mapv(|c| c.im)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Ideal 4F system at a fixed SLM resolution. Plans are shared and immutable;
/// scratch buffers are allocated per call, so one engine can serve many threads.
#[derive(Clone)]
pub struct OpticsEngine {
    side: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for OpticsEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpticsEngine")
            .field("side", &self.side)
            .finish()
    }
}

impl OpticsEngine {
    pub fn new(slm_side: usize) -> Result<Self> {
        if slm_side == 0 {
            return Err(Error::Config("SLM side must be at least 1".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            side: slm_side,
            forward: planner.plan_fft_forward(slm_side),
            inverse: planner.plan_fft_inverse(slm_side),
        })
    }

    pub fn for_system(sys: &SystemConfig) -> Result<Self> {
        sys.validate()?;
        Self::new(sys.slm_side)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Unitary 2D DFT.
    pub fn fourier(&self, plane: &FieldPlane) -> Result<FieldPlane> {
        self.check(plane.side())?;
        Ok(FieldPlane {
            data: self.transform(plane.data.clone(), &self.forward),
        })
    }

    /// Unitary inverse 2D DFT.
    pub fn inverse_fourier(&self, plane: &FieldPlane) -> Result<FieldPlane> {
        self.check(plane.side())?;
        Ok(FieldPlane {
            data: self.transform(plane.data.clone(), &self.inverse),
        })
    }

    /// Pre-detection output field for a real input plane and a Fourier-plane
    /// filter. Equals the circular convolution of `input` with the space-domain
    /// pattern whose transform is `filter_fourier`.
    pub fn four_f_pass(
        &self,
        input: ArrayView2<'_, f64>,
        filter_fourier: &FieldPlane,
    ) -> Result<FieldPlane> {
        let (h, w) = input.dim();
        if h != w {
            return Err(Error::Shape(format!(
                "input plane must be square, got {h}x{w}"
            )));
        }
        self.check(h)?;
        self.check(filter_fourier.side())?;
        let spectrum = self.transform(input.mapv(|v| Complex64::new(v, 0.0)), &self.forward);
        let product = spectrum * &filter_fourier.data;
        let scale = self.side as f64;
        let out = self.transform(product, &self.inverse).mapv(|c| c * scale);
        Ok(FieldPlane { data: out })
    }

    /// Fourier-plane filter that makes [`Self::four_f_pass`] a circular
    /// cross-correlation with `pattern`: the pattern is index-reflected,
    /// `out(i, j) = in(-i mod D, -j mod D)`, before the transform.
    pub fn make_filter_plane(&self, pattern: ArrayView2<'_, f64>) -> Result<FieldPlane> {
        let (h, w) = pattern.dim();
        if h != w {
            return Err(Error::Shape(format!(
                "filter pattern must be square, got {h}x{w}"
            )));
        }
        self.check(h)?;
        let d = self.side;
        let reflected = Array2::from_shape_fn((d, d), |(i, j)| {
            Complex64::new(pattern[[(d - i) % d, (d - j) % d]], 0.0)
        });
        Ok(FieldPlane {
            data: self.transform(reflected, &self.forward),
        })
    }

    /// Circular cross-correlation `out(s) = sum_p input(p + s) pattern(p)`,
    /// run through the optical pass.
    pub fn correlate(
        &self,
        input: ArrayView2<'_, f64>,
        pattern: ArrayView2<'_, f64>,
    ) -> Result<FieldPlane> {
        let filter = self.make_filter_plane(pattern)?;
        self.four_f_pass(input, &filter)
    }

    fn check(&self, side: usize) -> Result<()> {
        if side != self.side {
            return Err(Error::Shape(format!(
                "plane side {side} does not match SLM side {}",
                self.side
            )));
        }
        Ok(())
    }

    fn transform(&self, mut data: Array2<Complex64>, fft: &Arc<dyn Fft<f64>>) -> Array2<Complex64> {
        let d = self.side;
        let norm = 1.0 / (d as f64).sqrt();
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let mut rows = data.as_standard_layout().into_owned();
        fft.process_with_scratch(rows.as_slice_mut().expect("standard layout"), &mut scratch);
        let mut cols = rows.reversed_axes().as_standard_layout().into_owned();
        fft.process_with_scratch(cols.as_slice_mut().expect("standard layout"), &mut scratch);
        data = cols.reversed_axes().as_standard_layout().into_owned();
        data.mapv_inplace(|c| c * (norm * norm));
        data
    }
}

/// One-shot unitary transform; builds a plan for the plane's side.
pub fn fourier(plane: &FieldPlane) -> FieldPlane {
    OpticsEngine::new(plane.side())
        .and_then(|e| e.fourier(plane))
        .expect("side checked by FieldPlane")
}

/// One-shot unitary inverse transform.
pub fn inverse_fourier(plane: &FieldPlane) -> FieldPlane {
    OpticsEngine::new(plane.side())
        .and_then(|e| e.inverse_fourier(plane))
        .expect("side checked by FieldPlane")
}
