//! Model file: 8-byte magic, little-endian `u32` version, little-endian
//! `u32` header length, JSON header, then the weights as little-endian `f32`
//! in layer order (conv `[k, c, h, w]`; dense weights `[out, in]` then bias).
//! The header carries the SHA-256 of the payload.

use std::path::Path;

use ndarray::{Array1, Array2, Array4};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Activation, ConvLayer, DenseLayer, Layer, Model, PoolKind};
use crate::error::{Error, Result};
use crate::tensor::{ConvMode, ConvSpec, FilterBank};
use crate::tiling::Scheme;

pub const MODEL_MAGIC: &[u8; 8] = b"TILE4FM\n";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    name: String,
    seed: u64,
    dtype: String,
    checksum: String,
    input: InputHeader,
    slm_side: usize,
    layers: Vec<LayerHeader>,
}

#[derive(Serialize, Deserialize)]
struct InputHeader {
    side: usize,
    channels: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum LayerHeader {
    Conv {
        #[serde(rename = "M")]
        input: usize,
        #[serde(rename = "N")]
        kernel: usize,
        #[serde(rename = "Nc")]
        channels: usize,
        #[serde(rename = "Nk")]
        filters: usize,
        mode: ConvMode,
        scheme: Scheme,
        activation: Activation,
    },
    Pool {
        op: PoolKind,
        size: usize,
    },
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Activation {
        function: Activation,
    },
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    decode_model(&std::fs::read(path)?)
}

pub(crate) fn encode_model(model: &Model) -> Result<Vec<u8>> {
    model.validate()?;
    let mut payload = Vec::new();
    let mut layers = Vec::new();
    let mut put = |values: &mut dyn Iterator<Item = f64>| {
        for v in values {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    };
    for layer in &model.layers {
        layers.push(match layer {
            Layer::Conv(c) => {
                put(&mut c.weights.data().iter().copied());
                LayerHeader::Conv {
                    input: c.spec.input,
                    kernel: c.spec.kernel,
                    channels: c.spec.channels,
                    filters: c.spec.filters,
                    mode: c.spec.mode,
                    scheme: c.scheme,
                    activation: c.activation,
                }
            }
            Layer::Pool { kind, size } => LayerHeader::Pool {
                op: *kind,
                size: *size,
            },
            Layer::Flatten => LayerHeader::Flatten,
            Layer::Dense(d) => {
                put(&mut d.weights.iter().copied());
                put(&mut d.bias.iter().copied());
                LayerHeader::Dense {
                    inputs: d.weights.ncols(),
                    outputs: d.weights.nrows(),
                }
            }
            Layer::Activation(a) => LayerHeader::Activation { function: *a },
        });
    }
    let header = Header {
        name: model.name.clone(),
        seed: model.seed,
        dtype: "f32le".into(),
        checksum: hex::encode(Sha256::digest(&payload)),
        input: InputHeader {
            side: model.input_side,
            channels: model.input_channels,
        },
        slm_side: model.slm_side,
        layers,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub(crate) fn decode_model(bytes: &[u8]) -> Result<Model> {
    let fmt = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MODEL_MAGIC {
        return Err(fmt("not a model file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported model version {version}"
        )));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < hlen {
        return Err(fmt("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Format(format!("header: {e}")))?;
    if header.dtype != "f32le" {
        return Err(Error::Format(format!("unsupported dtype {}", header.dtype)));
    }
    let payload = &body[hlen..];
    if hex::encode(Sha256::digest(payload)) != header.checksum {
        return Err(fmt("payload checksum mismatch"));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64);
    if !payload.len().is_multiple_of(4) {
        return Err(fmt("payload is not a whole number of f32 values"));
    }
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = values.by_ref().take(n).collect();
        if v.len() == n {
            Ok(v)
        } else {
            Err(fmt("payload shorter than the declared layers"))
        }
    };
    let mut layers = Vec::new();
    for l in header.layers {
        layers.push(match l {
            LayerHeader::Conv {
                input,
                kernel,
                channels,
                filters,
                mode,
                scheme,
                activation,
            } => {
                let spec = ConvSpec {
                    input,
                    kernel,
                    channels,
                    filters,
                    batch: 1,
                    mode,
                };
                spec.validate()?;
                let w = take(filters * channels * kernel * kernel)?;
                let weights = FilterBank::new(
                    Array4::from_shape_vec((filters, channels, kernel, kernel), w)
                        .map_err(|e| Error::Shape(e.to_string()))?,
                )?;
                Layer::Conv(ConvLayer {
                    spec,
                    weights,
                    scheme,
                    activation,
                })
            }
            LayerHeader::Pool { op, size } => Layer::Pool { kind: op, size },
            LayerHeader::Flatten => Layer::Flatten,
            LayerHeader::Dense { inputs, outputs } => {
                let w = take(inputs * outputs)?;
                let b = take(outputs)?;
                Layer::Dense(DenseLayer {
                    weights: Array2::from_shape_vec((outputs, inputs), w)
                        .map_err(|e| Error::Shape(e.to_string()))?,
                    bias: Array1::from(b),
                })
            }
            LayerHeader::Activation { function } => Layer::Activation(function),
        });
    }
    if values.next().is_some() {
        return Err(fmt("payload longer than the declared layers"));
    }
    let model = Model {
        name: header.name,
        seed: header.seed,
        input_side: header.input.side,
        input_channels: header.input.channels,
        slm_side: header.slm_side,
        layers,
    };
    model.validate()?;
    Ok(model)
}
