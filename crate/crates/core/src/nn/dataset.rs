//! Dataset directory: `index.json` plus one raw little-endian `f32` file
//! holding all images back to back, each planar `[channel, row, col]`.

use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::MultiChannelImage;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub side: usize,
    pub channels: usize,
    pub classes: usize,
    pub images: Vec<MultiChannelImage>,
    pub labels: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Index {
    name: String,
    side: usize,
    channels: usize,
    classes: usize,
    count: usize,
    dtype: String,
    file: String,
    checksum: String,
    labels: Vec<usize>,
}

const DATA_FILE: &str = "images.f32";

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Checks shapes, labels and that every pixel lies in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                self.images.len(),
                self.labels.len()
            )));
        }
        for (i, (x, &y)) in self.images.iter().zip(&self.labels).enumerate() {
            if x.side() != self.side || x.channels() != self.channels {
                return Err(Error::Shape(format!(
                    "image {i} is {}x{}",
                    x.channels(),
                    x.side()
                )));
            }
            if y >= self.classes {
                return Err(Error::Config(format!(
                    "image {i} has label {y} of {} classes",
                    self.classes
                )));
            }
            if x.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config(format!(
                    "image {i} has pixels outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

pub fn save_dataset(data: &Dataset, dir: &Path) -> Result<()> {
    data.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut raw = Vec::with_capacity(data.len() * data.channels * data.side * data.side * 4);
    for x in &data.images {
        for &v in x.data() {
            raw.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let index = Index {
        name: data.name.clone(),
        side: data.side,
        channels: data.channels,
        classes: data.classes,
        count: data.len(),
        dtype: "f32le".into(),
        file: DATA_FILE.into(),
        checksum: hex::encode(Sha256::digest(&raw)),
        labels: data.labels.clone(),
    };
    std::fs::write(dir.join(DATA_FILE), raw)?;
    let mut json = serde_json::to_vec_pretty(&index)?;
    json.push(b'\n');
    std::fs::write(dir.join("index.json"), json)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let index: Index = serde_json::from_slice(&std::fs::read(dir.join("index.json"))?)?;
    if index.dtype != "f32le" {
        return Err(Error::Format(format!("unsupported dtype {}", index.dtype)));
    }
    let raw = std::fs::read(dir.join(&index.file))?;
    if hex::encode(Sha256::digest(&raw)) != index.checksum {
        return Err(Error::Format("dataset checksum mismatch".into()));
    }
    let per = index.channels * index.side * index.side;
    if raw.len() != per * index.count * 4 || index.labels.len() != index.count {
        return Err(Error::Format(
            "dataset size does not match its index".into(),
        ));
    }
    if index.count == 0 {
        return Err(Error::EmptyDataset);
    }
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let images = values
        .chunks_exact(per)
        .map(|c| {
            MultiChannelImage::new(
                Array3::from_shape_vec((index.channels, index.side, index.side), c.to_vec())
                    .unwrap(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let data = Dataset {
        name: index.name,
        side: index.side,
        channels: index.channels,
        classes: index.classes,
        images,
        labels: index.labels,
    };
    data.validate()?;
    Ok(data)
}
