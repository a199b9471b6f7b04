use std::path::Path;

use serde::Serialize;
use serde_json::json;
use tile4f_core::nn::{
    evaluate, load_dataset, load_model, reference, Dataset, EvalConfig, Exposure, Pipeline, Runtime,
};
use tile4f_core::perf::{
    auto_scheme, frames_per_layer, layer_utilization, resolution_requirements, LayerSpec,
    NetworkSpec,
};
use tile4f_core::tiling::cells_per_row;
use tile4f_core::{ConvSpec, Error, FullScale, Result, Scheme, SensorConfig, SystemConfig};

use crate::report::{emit, render, RunManifest};
use crate::simulate::simulate;
use crate::{
    Command, Common, GenerateArgs, NetworkArgs, PerfArgs, PlanArgs, SchemeChoice, SimulateArgs,
    SweepArgs,
};

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Plan(a) => plan(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Perf(a) => perf(a),
        Command::Sweep(a) => sweep(a),
        Command::GenerateReference(a) => generate(a),
    }
}

fn system(common: &Common, default_side: usize) -> Result<SystemConfig> {
    SystemConfig::new(common.slm_d.unwrap_or(default_side), common.freq_hz)
}

fn write<R: Serialize>(common: &Common, manifest: &RunManifest, rows: &[R]) -> Result<()> {
    emit(
        &render(manifest, rows, common.format)?,
        common.out.as_deref(),
    )
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad layer dimension '{v}' in '{s}'")))
        })
        .collect()
}

fn parse_layer(s: &str) -> Result<LayerSpec> {
    match parse_dims(s)?.as_slice() {
        &[m, n, nc, nk] => Ok(LayerSpec::new(m, n, nc, nk)),
        _ => Err(Error::Config(format!("layer must be M,N,Nc,Nk, got '{s}'"))),
    }
}

fn load_network(args: &NetworkArgs) -> Result<NetworkSpec> {
    let net = match (&args.layer, &args.network) {
        (Some(l), _) => NetworkSpec {
            name: "layer".into(),
            layers: vec![parse_layer(l)?],
        },
        (None, Some(n)) => match NetworkSpec::preset(n) {
            Some(net) => net,
            None => NetworkSpec::load(Path::new(n))?,
        },
        (None, None) => {
            return Err(Error::Config(
                "one of --network or --layer is required".into(),
            ))
        }
    };
    net.validate()?;
    Ok(net)
}

fn common_json(c: &Common, sys: &SystemConfig) -> serde_json::Value {
    json!({ "slm_d": sys.slm_side, "freq_hz": sys.frequency_hz, "format": format!("{:?}", c.format).to_lowercase() })
}

#[derive(Serialize)]
struct PlanRow {
    network: String,
    layer: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "Nc")]
    nc: usize,
    #[serde(rename = "Nk")]
    nk: usize,
    skipped: bool,
    scheme: Scheme,
    cell_side: usize,
    cells_per_row: usize,
    cells_per_plane: usize,
    blocks_per_frame: usize,
    frames: f64,
    utilization: f64,
    input_res: f64,
    filter_res: f64,
    output_res: f64,
}

fn plan(a: PlanArgs) -> Result<()> {
    let sys = system(&a.common, 4096)?;
    let net = load_network(&a.net)?;
    if a.scheme == SchemeChoice::All {
        return Err(Error::Config("plan takes one scheme or 'auto'".into()));
    }
    let mut rows = Vec::new();
    for (i, l) in net.layers.iter().enumerate() {
        let scheme = match a.scheme {
            SchemeChoice::Fixed(s) => s,
            _ => auto_scheme(l, &sys)?,
        };
        let per_row = cells_per_row(l.input, l.kernel, sys.slm_side);
        let t = l.cells_per_plane(sys.slm_side);
        let blocks = match scheme {
            Scheme::Mixed if 2 * l.channels < t => {
                tile4f_core::tiling::blocks_per_frame(l.channels, per_row)
            }
            Scheme::None | Scheme::Channel | Scheme::Mixed => 1,
            Scheme::Input | Scheme::Filter => t,
        };
        let res = resolution_requirements(scheme, l.input, l.channels, &sys);
        rows.push(PlanRow {
            network: net.name.clone(),
            layer: i,
            m: l.input,
            n: l.kernel,
            nc: l.channels,
            nk: l.filters,
            skipped: l.is_pointwise(),
            scheme,
            cell_side: l.input + l.kernel - 1,
            cells_per_row: per_row,
            cells_per_plane: t,
            blocks_per_frame: blocks,
            frames: frames_per_layer(l, scheme, &sys)?,
            utilization: layer_utilization(l, scheme, &sys)?,
            input_res: res.input,
            filter_res: res.filter,
            output_res: res.output,
        });
    }
    let mut config = common_json(&a.common, &sys);
    config["network"] = json!(net);
    config["scheme"] = json!(a.scheme.to_string());
    write(
        &a.common,
        &RunManifest::new("plan", a.common.seed, config),
        &rows,
    )
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let sys = system(&a.common, 64)?;
    let l = parse_layer(&a.layer)?;
    let spec = ConvSpec {
        input: l.input,
        kernel: l.kernel,
        channels: l.channels,
        filters: l.filters,
        batch: a.batch,
        mode: if a.mode == "valid" {
            tile4f_core::ConvMode::Valid
        } else {
            tile4f_core::ConvMode::Same
        },
    };
    let scheme = match a.scheme {
        SchemeChoice::Fixed(s) => s,
        SchemeChoice::Auto => auto_scheme(&l, &sys)?,
        SchemeChoice::All => {
            return Err(Error::Config("simulate takes one scheme or 'auto'".into()))
        }
    };
    let sensor = SensorConfig {
        bit_depth: a.bits,
        snr_db: a.snr_db.0,
        seed: a.common.seed,
        full_scale: FullScale::PerFrameMax,
    };
    let rows = simulate(&spec, scheme, &sys, &sensor, a.common.seed)?;
    let mut config = common_json(&a.common, &sys);
    config["layer"] = json!(spec);
    config["scheme"] = json!(scheme);
    config["sensor"] =
        json!({ "bits": a.bits.label(), "snr_db": a.snr_db.label(), "full_scale": "per-frame" });
    write(
        &a.common,
        &RunManifest::new("simulate", a.common.seed, config),
        &rows,
    )
}

#[derive(Serialize)]
struct PerfRow {
    network: String,
    scheme: String,
    layer: String,
    #[serde(rename = "M")]
    m: Option<usize>,
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "Nc")]
    nc: Option<usize>,
    #[serde(rename = "Nk")]
    nk: Option<usize>,
    skipped: bool,
    frames: f64,
    time_s: f64,
    utilization: Option<f64>,
    input_res: Option<f64>,
    filter_res: Option<f64>,
    output_res: Option<f64>,
}

fn perf(a: PerfArgs) -> Result<()> {
    let sys = system(&a.common, 4096)?;
    let net = load_network(&a.net)?;
    let choices: Vec<SchemeChoice> = match a.scheme {
        SchemeChoice::All => Scheme::ALL.into_iter().map(SchemeChoice::Fixed).collect(),
        c => vec![c],
    };
    let mut rows = Vec::new();
    for choice in choices {
        let mut total = 0.0;
        for (i, l) in net.layers.iter().enumerate() {
            let scheme = match choice {
                SchemeChoice::Fixed(s) => s,
                _ => auto_scheme(l, &sys)?,
            };
            let skipped = l.is_pointwise();
            let frames = if skipped {
                0.0
            } else {
                frames_per_layer(l, scheme, &sys)?
            };
            total += frames;
            let res = resolution_requirements(scheme, l.input, l.channels, &sys);
            rows.push(PerfRow {
                network: net.name.clone(),
                scheme: scheme.to_string(),
                layer: i.to_string(),
                m: Some(l.input),
                n: Some(l.kernel),
                nc: Some(l.channels),
                nk: Some(l.filters),
                skipped,
                frames,
                time_s: frames * sys.frame_time(),
                utilization: Some(layer_utilization(l, scheme, &sys)?),
                input_res: Some(res.input),
                filter_res: Some(res.filter),
                output_res: Some(res.output),
            });
        }
        rows.push(PerfRow {
            network: net.name.clone(),
            scheme: choice.to_string(),
            layer: "total".into(),
            m: None,
            n: None,
            nc: None,
            nk: None,
            skipped: false,
            frames: total,
            time_s: total * sys.frame_time(),
            utilization: None,
            input_res: None,
            filter_res: None,
            output_res: None,
        });
    }
    let mut config = common_json(&a.common, &sys);
    config["network"] = json!(net);
    config["scheme"] = json!(a.scheme.to_string());
    write(
        &a.common,
        &RunManifest::new("perf", a.common.seed, config),
        &rows,
    )
}

#[derive(Serialize)]
struct SweepRow {
    pipeline: Pipeline,
    bit_depth: String,
    snr_db: String,
    exposure: String,
    images: usize,
    correct: usize,
    accuracy: f64,
    /// Mean of the per-layer MSEs.
    mse: f64,
    /// `layer=mse` pairs separated by `;`.
    layer_mse: String,
}

fn truncate(mut d: Dataset, limit: Option<usize>) -> Dataset {
    if let Some(n) = limit {
        d.images.truncate(n);
        d.labels.truncate(n);
    }
    d
}

fn sweep(a: SweepArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let sys = system(&a.common, model.slm_side)?;
    let data = truncate(load_dataset(&a.data)?, a.limit);
    let exposure = if a.exposure == "calibrated" {
        let calib = load_dataset(&a.calibration)?;
        Exposure::Calibrated(
            Runtime::new(&model, &sys, SensorConfig::ideal())?.calibrate(&calib.images)?,
        )
    } else {
        Exposure::AsConfigured
    };
    let mut rows = Vec::new();
    for &pipeline in &a.pipelines {
        let grid: Vec<(tile4f_core::BitDepth, crate::Snr)> = if pipeline == Pipeline::Ideal {
            vec![(tile4f_core::BitDepth::Unlimited, crate::Snr(None))]
        } else {
            a.bits
                .iter()
                .flat_map(|&b| a.snr_db.iter().map(move |&s| (b, s)))
                .collect()
        };
        for (bits, snr) in grid {
            let sensor = SensorConfig {
                bit_depth: bits,
                snr_db: snr.0,
                seed: a.common.seed,
                full_scale: FullScale::PerFrameMax,
            };
            let cfg = EvalConfig {
                pipeline,
                sensor,
                layer_errors: !a.no_layer_errors,
            };
            let rep = evaluate(&model, &data, &sys, &exposure, &cfg)?;
            let mse = rep.layer_mse.iter().map(|l| l.mse).sum::<f64>()
                / rep.layer_mse.len().max(1) as f64;
            rows.push(SweepRow {
                pipeline,
                bit_depth: bits.label(),
                snr_db: snr.label(),
                exposure: a.exposure.clone(),
                images: rep.count,
                correct: rep.correct,
                accuracy: rep.accuracy,
                mse,
                layer_mse: rep
                    .layer_mse
                    .iter()
                    .map(|l| format!("{}={}", l.layer, l.mse))
                    .collect::<Vec<_>>()
                    .join(";"),
            });
        }
    }
    let mut config = common_json(&a.common, &sys);
    config["model"] = json!({ "path": a.model, "name": model.name, "seed": model.seed });
    config["data"] = json!({ "path": a.data, "images": data.len() });
    config["calibration"] = json!(a.calibration);
    config["exposure"] = json!(a.exposure);
    config["bits"] = json!(a.bits.iter().map(|b| b.label()).collect::<Vec<_>>());
    config["snr_db"] = json!(a.snr_db.iter().map(|s| s.label()).collect::<Vec<_>>());
    config["pipelines"] = json!(a.pipelines);
    config["layer_errors"] = json!(!a.no_layer_errors);
    write(
        &a.common,
        &RunManifest::new("sweep", a.common.seed, config),
        &rows,
    )
}

fn generate(a: GenerateArgs) -> Result<()> {
    let set = reference::generate(a.seed)?;
    reference::write(&set, &a.out)?;
    let manifest = RunManifest::new(
        "generate-reference",
        a.seed,
        json!({
            "side": reference::SIDE,
            "classes": reference::CLASSES,
            "slm_side": reference::SLM_SIDE,
            "train": reference::TRAIN,
            "calibration": reference::CALIBRATION,
            "test": reference::TEST,
        }),
    );
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(a.out.join("manifest.json"), text)?;
    Ok(())
}
