//! Report writing with an embedded run manifest.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use tile4f_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Echo of everything that determines a report. The timestamp is only set
/// from `SOURCE_DATE_EPOCH` so reports stay byte-identical by default.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool: "tile4f",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            config,
            timestamp: std::env::var("SOURCE_DATE_EPOCH").ok(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[derive(Serialize)]
struct JsonReport<'a, R: Serialize> {
    manifest: &'a RunManifest,
    manifest_sha256: String,
    rows: &'a [R],
}

pub fn render<R: Serialize>(manifest: &RunManifest, rows: &[R], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let report = JsonReport {
                manifest,
                manifest_sha256: manifest.hash(),
                rows,
            };
            let mut out = serde_json::to_vec_pretty(&report)?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut out = format!(
                "# manifest sha256={} {}\n",
                manifest.hash(),
                manifest.to_json()
            )
            .into_bytes();
            {
                let mut w = csv::Writer::from_writer(&mut out);
                for r in rows {
                    w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
                }
                w.flush()?;
            }
            Ok(out)
        }
    }
}

pub fn emit(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}
