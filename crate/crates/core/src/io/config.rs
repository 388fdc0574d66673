//! Flat `key = value` run configuration files.
//!
//! Blank lines and lines starting with `#` or `;` are ignored, as is a
//! single optional `[morph]` header. Every key is optional and falls back to
//! its default; unknown or repeated keys are rejected.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use crate::adain::AdainSource;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::pipeline::MorphConfig;

pub const KEYS: [&str; 13] = [
    "steps",
    "train_steps",
    "t_qend",
    "t_adain",
    "lambda_alpha",
    "asdm",
    "injection_layers",
    "seed",
    "perceptual_seed",
    "adain_eps",
    "frames",
    "adain_source",
    "presample_steps",
];

fn number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

pub fn parse_config(text: &str) -> Result<MorphConfig> {
    let mut config = MorphConfig::default();
    let mut seen = BTreeSet::new();
    let mut header_seen = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if line.starts_with('[') {
            if line != "[morph]" || header_seen || !seen.is_empty() {
                return Err(Error::Config(format!("line {}: unexpected section {line}", lineno + 1)));
            }
            header_seen = true;
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key {key:?}", lineno + 1)));
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
        }
        match key {
            "steps" => config.steps = number(key, value)?,
            "train_steps" => config.train_steps = number(key, value)?,
            "t_qend" => config.t_qend = number(key, value)?,
            "t_adain" => config.t_adain = number(key, value)?,
            "lambda_alpha" => config.lambda_alpha = number(key, value)?,
            "asdm" => config.asdm = number(key, value)?,
            "injection_layers" => {
                config.injection_layers = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| number(key, s))
                    .collect::<Result<_>>()?
            }
            "seed" => config.seed = number(key, value)?,
            "perceptual_seed" => config.perceptual_seed = number(key, value)?,
            "adain_eps" => config.adain_eps = number(key, value)?,
            "frames" => config.frames = if value == "all" { None } else { Some(number(key, value)?) },
            "adain_source" => {
                config.adain_source = match value {
                    "statistics" => AdainSource::Statistics,
                    "latent_blend" => AdainSource::LatentBlend,
                    _ => return Err(Error::Config(format!("adain_source: unknown value {value:?}"))),
                }
            }
            "presample_steps" => config.presample_steps = number(key, value)?,
            _ => unreachable!("key list checked above"),
        }
    }
    config.validate()?;
    Ok(config)
}

/// Every key, in `KEYS` order; `parse_config(to_ini(c)) == c`.
pub fn to_ini(config: &MorphConfig) -> String {
    let layers: Vec<String> = config.injection_layers.iter().map(|l| l.to_string()).collect();
    let source = match config.adain_source {
        AdainSource::Statistics => "statistics",
        AdainSource::LatentBlend => "latent_blend",
    };
    let frames = config.frames.map_or_else(|| "all".to_string(), |n| n.to_string());
    let values = [
        config.steps.to_string(),
        config.train_steps.to_string(),
        config.t_qend.to_string(),
        config.t_adain.to_string(),
        config.lambda_alpha.to_string(),
        config.asdm.to_string(),
        layers.join(","),
        config.seed.to_string(),
        config.perceptual_seed.to_string(),
        config.adain_eps.to_string(),
        frames,
        source.to_string(),
        config.presample_steps.to_string(),
    ];
    let mut out = String::from("[morph]\n");
    for (k, v) in KEYS.iter().zip(values) {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

pub fn read_config(path: &Path) -> Result<MorphConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| e.context(format!("reading {}", path.display())))
}

pub fn write_config(path: &Path, config: &MorphConfig) -> Result<()> {
    write_atomic(path, to_ini(config).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), MorphConfig::default());
        assert_eq!(parse_config("# nothing\n[morph]\n\n").unwrap(), MorphConfig::default());
    }

    #[test]
    fn round_trips_every_key() {
        let config = MorphConfig {
            steps: 20,
            t_qend: 300,
            t_adain: 1001,
            lambda_alpha: 0.1 + 0.2,
            asdm: false,
            injection_layers: vec![1],
            seed: 99,
            perceptual_seed: 3,
            adain_eps: 1e-7,
            frames: Some(4),
            adain_source: AdainSource::LatentBlend,
            presample_steps: 5,
            ..MorphConfig::default()
        };
        assert_eq!(parse_config(&to_ini(&config)).unwrap(), config);
        assert_eq!(parse_config(&to_ini(&MorphConfig::default())).unwrap(), MorphConfig::default());
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "colour = red",
            "steps = 5\nsteps = 6",
            "steps = five",
            "steps",
            "t_qend = 2000",
            "t_adain = -1",
            "lambda_alpha = -2",
            "adain_eps = 0",
            "injection_layers = 0,7",
            "injection_layers = ",
            "steps = 0",
            "frames = 0",
            "adain_source = vibes",
            "[other]",
        ] {
            assert!(matches!(parse_config(text), Err(Error::Config(_))), "{text}");
        }
    }
}
