//! JSON-lines run manifests. The first line echoes the full configuration,
//! so a manifest can be fed back in as a config.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::asdm::AlphaSchedule;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::pipeline::{MorphConfig, Morphed};

#[derive(Serialize, Deserialize)]
struct ConfigLine {
    kind: String,
    config: MorphConfig,
}

/// Manifest text for a finished run.
pub fn render_manifest(config: &MorphConfig, run: &Morphed) -> Result<String> {
    let lines = [
        serde_json::to_value(ConfigLine { kind: "config".into(), config: config.clone() }),
        Ok(json!({
            "kind": "schedule",
            "alpha": run.alpha,
            "alpha_mid": run.alpha_mid,
            "s_max": run.s_max,
            "curves": run.curves,
        })),
        Ok(json!({ "kind": "timings", "timings": run.timings })),
    ];
    let mut out = String::new();
    for line in lines {
        let value = line.map_err(|e| Error::invalid(format!("manifest: {e}")))?;
        out.push_str(&value.to_string());
        out.push('\n');
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, config: &MorphConfig, run: &Morphed) -> Result<()> {
    write_atomic(path, render_manifest(config, run)?.as_bytes())
}

/// The configuration echoed on a manifest's first line.
pub fn parse_manifest_config(text: &str, origin: &Path) -> Result<MorphConfig> {
    let first = text.lines().next().ok_or_else(|| Error::malformed(origin, "empty manifest"))?;
    let line: ConfigLine = serde_json::from_str(first).map_err(|e| Error::malformed(origin, e.to_string()))?;
    if line.kind != "config" {
        return Err(Error::malformed(origin, format!("first line has kind {:?}", line.kind)));
    }
    line.config.validate()?;
    Ok(line.config)
}

/// The resolved α schedule recorded in a manifest.
pub fn parse_manifest_schedule(text: &str, origin: &Path) -> Result<AlphaSchedule> {
    for line in text.lines() {
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::malformed(origin, e.to_string()))?;
        if value["kind"] == "schedule" {
            let alpha: Vec<f64> =
                serde_json::from_value(value["alpha"].clone()).map_err(|e| Error::malformed(origin, e.to_string()))?;
            return AlphaSchedule::new(alpha).map_err(|e| Error::malformed(origin, e.to_string()));
        }
    }
    Err(Error::malformed(origin, "no schedule line"))
}

pub fn read_manifest_schedule(path: &Path) -> Result<AlphaSchedule> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest_schedule(&text, path)
}

pub fn read_manifest_config(path: &Path) -> Result<MorphConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest_config(&text, path)
}
