//! CSV tables with a header row and `\n` line endings.

use std::path::Path;

use crate::asdm::{AlphaSchedule, DistanceCurves};
use crate::error::{Error, Result};
use crate::perceptual::Metrics;

fn render(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `frame,alpha` rows.
pub fn schedule_csv(schedule: &AlphaSchedule) -> Result<String> {
    render(
        &["frame", "alpha"],
        schedule.values().iter().enumerate().map(|(i, a)| vec![i.to_string(), a.to_string()]),
    )
}

/// `frame,alpha,d0,d1` rows.
pub fn curves_csv(schedule: &AlphaSchedule, curves: &DistanceCurves) -> Result<String> {
    if schedule.len() != curves.len() {
        return Err(Error::invalid("schedule and curves differ in length"));
    }
    render(
        &["frame", "alpha", "d0", "d1"],
        (0..curves.len()).map(|i| {
            vec![
                i.to_string(),
                schedule.values()[i].to_string(),
                curves.d0()[i].to_string(),
                curves.d1()[i].to_string(),
            ]
        }),
    )
}

pub fn metrics_csv(m: &Metrics) -> Result<String> {
    render(
        &["ppl", "pdv", "style_loss", "structure_distance", "frame_similarity"],
        [vec![
            m.ppl.to_string(),
            m.pdv.to_string(),
            m.style_loss.to_string(),
            m.structure_distance.to_string(),
            m.frame_similarity.to_string(),
        ]],
    )
}

/// Reads `d0`/`d1` columns (by header name) from a curves CSV.
pub fn read_curves(path: &Path) -> Result<DistanceCurves> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::malformed(path, reason);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| bad(format!("no {name} column")))
    };
    let (i0, i1) = (column("d0")?, column("d1")?);
    let (mut d0, mut d1) = (Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let get = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| bad(format!("row {}: bad number in column {}", row + 1, i + 1)))
        };
        d0.push(get(i0)?);
        d1.push(get(i1)?);
    }
    DistanceCurves::new(d0, d1).map_err(|e| bad(e.to_string()))
}
