//! Camera model: square-law detection, additive Gaussian noise on the
//! intensity, uniform quantization, square-root readout, and the
//! pseudo-negative filter split.
//!
//! Noise is keyed by frame: each frame draws from its own stream seeded by the
//! sensor seed and the frame id, so frames can be detected in any order or in
//! parallel with identical results.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::FilterBank;
use crate::tiling::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BitDepth {
    Bits(u32),
    Unlimited,
}

impl BitDepth {
    pub const EIGHT: BitDepth = BitDepth::Bits(8);
    pub const TWELVE: BitDepth = BitDepth::Bits(12);

    /// Highest code, `2^b - 1`.
    pub fn max_code(self) -> Option<u32> {
        match self {
            BitDepth::Bits(b) => Some((1u32 << b) - 1),
            BitDepth::Unlimited => None,
        }
    }

    pub fn label(self) -> String {
        match self {
            BitDepth::Bits(b) => b.to_string(),
            BitDepth::Unlimited => "inf".into(),
        }
    }
}

impl std::str::FromStr for BitDepth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "unlimited" => Ok(BitDepth::Unlimited),
            _ => match s.parse::<u32>() {
                Ok(b) if (1..=24).contains(&b) => Ok(BitDepth::Bits(b)),
                _ => Err(Error::Config(format!(
                    "bit depth must be 1..=24 or 'inf', got '{s}'"
                ))),
            },
        }
    }
}

/// Intensity mapped to the top code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FullScale {
    /// Auto-exposure: brightest pixel of the read-out region of each frame.
    PerFrameMax,
    /// Fixed exposure, independent of the frame content.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub bit_depth: BitDepth,
    /// `None` is noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub full_scale: FullScale,
}

impl SensorConfig {
    /// Unlimited precision, no noise.
    pub fn ideal() -> Self {
        Self {
            bit_depth: BitDepth::Unlimited,
            snr_db: None,
            seed: 0,
            full_scale: FullScale::PerFrameMax,
        }
    }

    pub fn with_bits(bit_depth: BitDepth) -> Self {
        Self {
            bit_depth,
            ..Self::ideal()
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.bit_depth == BitDepth::Unlimited && self.snr_db.is_none()
    }
}

/// Quantized intensity plane: `codes * step` is the measured intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub codes: Array2<f64>,
    pub step: f64,
    /// Pixels clipped at the top code.
    pub saturated: usize,
}

impl Readout {
    pub fn intensity(&self) -> Array2<f64> {
        self.codes.mapv(|c| c * self.step)
    }
}

/// Detects a whole plane as frame 0, measuring signal power over the plane.
pub fn detect(field: ArrayView2<'_, f64>, cfg: &SensorConfig) -> Readout {
    detect_frame(field, cfg, 0, None)
}

/// Detects one frame. `signal` restricts the SNR reference power and the
/// auto-exposure to the read-out rectangles; the whole plane otherwise.
pub fn detect_frame(
    field: ArrayView2<'_, f64>,
    cfg: &SensorConfig,
    frame: u64,
    signal: Option<&[Rect]>,
) -> Readout {
    let mut intensity = field.mapv(|v| v * v);
    if let Some(snr) = cfg.snr_db {
        let power = mean_over(&intensity, signal, |v| v * v);
        let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
        if sigma > 0.0 {
            add_noise(&mut intensity, sigma, cfg.seed, frame);
        }
    }
    intensity.mapv_inplace(|v| v.max(0.0));
    let Some(top) = cfg.bit_depth.max_code() else {
        return Readout {
            codes: intensity,
            step: 1.0,
            saturated: 0,
        };
    };
    let top = top as f64;
    let full_scale = match cfg.full_scale {
        FullScale::Fixed(fs) => fs,
        FullScale::PerFrameMax => max_over(&intensity, signal),
    };
    if full_scale.is_nan() || full_scale <= 0.0 {
        return Readout {
            codes: Array2::zeros(intensity.dim()),
            step: 0.0,
            saturated: 0,
        };
    }
    let mut saturated = 0;
    let codes = intensity.mapv(|v| {
        let q = (v / full_scale * top).round();
        if q > top {
            saturated += 1;
        }
        q.min(top)
    });
    Readout {
        codes,
        step: full_scale / top,
        saturated,
    }
}

/// Square root of the dequantized intensity: the magnitude of the field.
pub fn readout_sqrt(r: &Readout) -> Array2<f64> {
    r.codes.mapv(|c| (c * r.step).sqrt())
}

/// Splits a signed bank into nonnegative positive and negative parts,
/// `F = F+ - F-`.
pub fn pseudo_negative_split(bank: &FilterBank) -> (FilterBank, FilterBank) {
    (bank.map(|v| v.max(0.0)), bank.map(|v| (-v).max(0.0)))
}

/// Subtracts the negative-bank readout from the positive-bank readout.
pub fn pseudo_negative_combine(
    positive: ArrayView2<'_, f64>,
    negative: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if positive.dim() != negative.dim() {
        return Err(Error::Shape(format!(
            "readouts differ: {:?} vs {:?}",
            positive.dim(),
            negative.dim()
        )));
    }
    Ok(&positive - &negative)
}

/// Mixes identifiers into one frame id for noise keying.
pub fn frame_id(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x9e37_79b9_7f4a_7c15u64, |h, &p| splitmix(h ^ p))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard normal samples for one frame, in row-major pixel order.
pub fn frame_noise(seed: u64, frame: u64) -> impl Iterator<Item = f64> {
    let rng = ChaCha8Rng::seed_from_u64(splitmix(seed) ^ frame);
    StandardNormal.sample_iter(rng)
}

fn add_noise(intensity: &mut Array2<f64>, sigma: f64, seed: u64, frame: u64) {
    for (v, n) in intensity.iter_mut().zip(frame_noise(seed, frame)) {
        *v += sigma * n;
    }
}

fn region_values<'a>(
    plane: &'a Array2<f64>,
    signal: Option<&'a [Rect]>,
) -> Box<dyn Iterator<Item = f64> + 'a> {
    match signal {
        None => Box::new(plane.iter().copied()),
        Some(rects) => Box::new(rects.iter().flat_map(move |r| {
            plane
                .slice(ndarray::s![r.row..r.row + r.side, r.col..r.col + r.side])
                .into_iter()
                .copied()
                .collect::<Vec<_>>()
        })),
    }
}

fn mean_over(plane: &Array2<f64>, signal: Option<&[Rect]>, f: impl Fn(f64) -> f64) -> f64 {
    let (sum, n) = region_values(plane, signal).fold((0.0, 0usize), |(s, n), v| (s + f(v), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn max_over(plane: &Array2<f64>, signal: Option<&[Rect]>) -> f64 {
    region_values(plane, signal).fold(0.0, f64::max)
}
