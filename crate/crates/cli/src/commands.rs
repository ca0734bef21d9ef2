use std::path::{Path, PathBuf};

use semstyle::color::{lab_to_srgb, srgb_to_lab, ColorTransform, RgbImage};
use semstyle::network::StylizeNet;
use semstyle::styles::{make_dataset, planted_global_style, planted_local_style, Region, StyleKind};
use semstyle::training::{evaluate, load_split, train_with};
use serde_json::json;

use crate::config::TrainSettings;
use crate::{CliError, StyleArg};

fn echo(command: &str, fields: &[(&str, String)]) {
    println!("command = {command}");
    for (k, v) in fields {
        println!("{k} = {v}");
    }
}

fn matrix(t: &ColorTransform) -> serde_json::Value {
    json!(t.m.iter().map(|row| row.to_vec()).collect::<Vec<_>>())
}

#[allow(clippy::too_many_arguments)]
pub fn gen(style: StyleArg, seed: u64, n_train: usize, n_test: usize, width: usize, height: usize, out: &Path) -> Result<(), CliError> {
    echo(
        "gen",
        &[
            ("style", format!("{style:?}").to_lowercase()),
            ("seed", seed.to_string()),
            ("train", n_train.to_string()),
            ("test", n_test.to_string()),
            ("width", width.to_string()),
            ("height", height.to_string()),
            ("out", out.display().to_string()),
        ],
    );
    let style = match style {
        StyleArg::Global => planted_global_style(seed),
        StyleArg::Local => planted_local_style(seed),
    };
    let ds = make_dataset(&style, n_train, n_test, width, height)?;
    ds.save(out)?;

    let transforms: Vec<serde_json::Value> = match &style.kind {
        StyleKind::Global(t) => vec![json!({ "region": "all", "matrix": matrix(t) })],
        StyleKind::Local(list) => list
            .iter()
            .map(|(r, t)| {
                let region = match r {
                    Region::Background => "background",
                    Region::Foreground => "foreground",
                };
                json!({ "region": region, "matrix": matrix(t) })
            })
            .collect(),
    };
    let manifest = json!({
        "style": style.kind_name(),
        "seed": seed,
        "width": width,
        "height": height,
        "train": n_train,
        "test": n_test,
        "transforms": transforms,
    });
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Other(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    println!("wrote {} image pairs to {}", n_train + n_test, out.display());
    Ok(())
}

pub fn train(data: &Path, config: Option<&Path>, checkpoint: &Path, log: Option<PathBuf>, seed: u64) -> Result<(), CliError> {
    let settings = TrainSettings::load(config, seed)?;
    let log = log.unwrap_or_else(|| {
        let mut s = checkpoint.as_os_str().to_owned();
        s.push(".log");
        PathBuf::from(s)
    });
    echo(
        "train",
        &[
            ("data", data.display().to_string()),
            ("checkpoint", checkpoint.display().to_string()),
            ("log", log.display().to_string()),
        ],
    );
    print!("{}", settings.echo());

    let pairs = load_split(data, "train")?;
    let outcome = train_with(&pairs, settings.backbone, &settings.train, |epoch, loss| {
        println!("epoch {epoch}\tloss {loss:.6}");
    })?;
    outcome.write(checkpoint, &log)?;
    println!("wrote {}", checkpoint.display());
    Ok(())
}

pub fn apply(checkpoint: &Path, input: &Path, output: &Path) -> Result<(), CliError> {
    echo(
        "apply",
        &[
            ("checkpoint", checkpoint.display().to_string()),
            ("input", input.display().to_string()),
            ("output", output.display().to_string()),
        ],
    );
    let net = StylizeNet::load(checkpoint)?;
    let img = srgb_to_lab(&RgbImage::read_png(input)?);
    let out = net.stylize(&img)?;
    lab_to_srgb(&out).write_png(output)?;
    println!("wrote {}", output.display());
    Ok(())
}

pub fn eval(checkpoint: &Path, data: &Path, split: &str, report: &Path) -> Result<(), CliError> {
    echo(
        "eval",
        &[
            ("checkpoint", checkpoint.display().to_string()),
            ("data", data.display().to_string()),
            ("split", split.to_string()),
            ("report", report.display().to_string()),
        ],
    );
    let net = StylizeNet::load(checkpoint)?;
    let pairs = load_split(data, split)?;
    let r = evaluate(&net, &pairs)?;
    println!("name\tbaseline\tmethod");
    for s in &r.per_image {
        println!("{}\t{:.4}\t{:.4}", s.name, s.baseline, s.method);
    }
    println!("mean\t{:.4}\t{:.4}", r.baseline_mean_l2, r.mean_l2);
    std::fs::write(report, r.to_tsv()).map_err(|e| CliError::Io(format!("{}: {e}", report.display())))?;
    Ok(())
}
