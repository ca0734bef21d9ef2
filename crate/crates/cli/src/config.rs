//! Flat `key = value` training configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use semstyle::network::BackboneConfig;
use semstyle::training::{Optimizer, TrainConfig};

use crate::CliError;

/// Every key a training config may set, with its default.
pub const KEYS: [&str; 10] = [
    "epochs",
    "learning_rate",
    "pixels_per_step",
    "optimizer",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "stage_channels",
    "context_channels",
    "head_hidden",
];

/// Parses `key = value` lines. Blank lines and text after `#` are ignored.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`, got `{line}`", n + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(format!("line {}: duplicate key `{k}`", n + 1));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub train: TrainConfig,
    pub backbone: BackboneConfig,
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("`{key}`: cannot parse `{v}`"))
}

fn list<const N: usize>(key: &str, v: &str) -> Result<[usize; N], String> {
    let items = v.split(',').map(|s| number::<usize>(key, s.trim())).collect::<Result<Vec<_>, _>>()?;
    items
        .try_into()
        .map_err(|got: Vec<usize>| format!("`{key}`: expected {N} comma-separated values, got {}", got.len()))
}

impl TrainSettings {
    /// Applies `map` over the defaults; `seed` seeds both initialization and
    /// pixel sampling.
    pub fn from_map(map: &BTreeMap<String, String>, seed: u64) -> Result<Self, String> {
        let mut train = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let mut backbone = BackboneConfig {
            seed,
            ..BackboneConfig::default()
        };
        let (mut beta1, mut beta2, mut eps) = match Optimizer::adam() {
            Optimizer::Adam { beta1, beta2, eps } => (beta1, beta2, eps),
            Optimizer::Sgd => unreachable!(),
        };
        let mut use_sgd = false;
        for (k, v) in map {
            match k.as_str() {
                "epochs" => train.epochs = number(k, v)?,
                "learning_rate" => train.learning_rate = number(k, v)?,
                "pixels_per_step" => train.pixels_per_step = number(k, v)?,
                "optimizer" => {
                    use_sgd = match v.to_ascii_lowercase().as_str() {
                        "adam" => false,
                        "sgd" => true,
                        other => return Err(format!("`optimizer`: expected `adam` or `sgd`, got `{other}`")),
                    }
                }
                "adam_beta1" => beta1 = number(k, v)?,
                "adam_beta2" => beta2 = number(k, v)?,
                "adam_eps" => eps = number(k, v)?,
                "stage_channels" => backbone.stage_channels = list(k, v)?,
                "context_channels" => backbone.context_channels = number(k, v)?,
                "head_hidden" => backbone.head_hidden = list(k, v)?,
                "seed" => return Err("`seed` is set with the --seed flag, not in the config file".into()),
                other => return Err(format!("unknown key `{other}` (known: {})", KEYS.join(", "))),
            }
        }
        train.optimizer = if use_sgd {
            Optimizer::Sgd
        } else {
            Optimizer::Adam { beta1, beta2, eps }
        };
        train.validate().map_err(|e| e.to_string())?;
        backbone.validate().map_err(|e| e.to_string())?;
        Ok(Self { train, backbone })
    }

    pub fn load(path: Option<&Path>, seed: u64) -> Result<Self, CliError> {
        let map = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                parse_flat(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => BTreeMap::new(),
        };
        Self::from_map(&map, seed).map_err(CliError::Config)
    }

    /// The fully resolved settings in config-file syntax.
    pub fn echo(&self) -> String {
        let t = &self.train;
        let b = &self.backbone;
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "learning_rate = {}", t.learning_rate);
        let _ = writeln!(s, "pixels_per_step = {}", t.pixels_per_step);
        match t.optimizer {
            Optimizer::Sgd => {
                let _ = writeln!(s, "optimizer = sgd");
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let _ = writeln!(s, "optimizer = adam");
                let _ = writeln!(s, "adam_beta1 = {beta1}");
                let _ = writeln!(s, "adam_beta2 = {beta2}");
                let _ = writeln!(s, "adam_eps = {eps}");
            }
        }
        let _ = writeln!(s, "stage_channels = {}", join(&b.stage_channels));
        let _ = writeln!(s, "context_channels = {}", b.context_channels);
        let _ = writeln!(s, "head_hidden = {}", join(&b.head_hidden));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blanks_are_skipped() {
        let m = parse_flat("# header\n\nepochs = 3  # short run\nlearning_rate=0.01\n").unwrap();
        assert_eq!(m["epochs"], "3");
        assert_eq!(m["learning_rate"], "0.01");
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(parse_flat("epochs 3").is_err());
        assert!(parse_flat("epochs = 1\nepochs = 2").is_err());
        assert!(parse_flat(" = 2").is_err());
    }

    #[test]
    fn echo_parses_back_to_the_same_settings() {
        let m = parse_flat("optimizer = sgd\nstage_channels = 1,2,3,4,5\nhead_hidden = 7, 8").unwrap();
        let s = TrainSettings::from_map(&m, 42).unwrap();
        assert_eq!(s.backbone.stage_channels, [1, 2, 3, 4, 5]);
        let mut again = parse_flat(&s.echo()).unwrap();
        again.remove("seed");
        assert_eq!(TrainSettings::from_map(&again, 42).unwrap(), s);
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            "epochs = many",
            "stage_channels = 1,2",
            "optimizer = rmsprop",
            "pixels_per_step = 0",
            "seed = 3",
            "colour = red",
            "context_channels = 0",
        ] {
            let m = parse_flat(text).unwrap();
            assert!(TrainSettings::from_map(&m, 0).is_err(), "{text}");
        }
    }
}
