//! Feature CSV (`epoch_id,label,f1,f2,...`) and epoch JSON-lines formats.

use std::io::{BufRead, Read, Write};

use serde::Deserialize;

use super::{Epoch, FeatureRecord, Label};
use crate::error::{Error, Result};

/// Reads a feature CSV. Errors carry the 1-based file line number.
pub fn read_feature_csv(reader: impl Read) -> Result<Vec<FeatureRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Ok(Vec::new());
    }
    if header.len() < 3 || &header[0] != "epoch_id" || &header[1] != "label" {
        return Err(Error::Parse {
            line: 1,
            message: "header must be epoch_id,label,f1[,f2,...]".into(),
        });
    }
    let width = header.len() - 2;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse { line, message };
        let label_code: i64 = rec[1]
            .parse()
            .map_err(|_| bad(format!("invalid label '{}'", &rec[1])))?;
        let label = Label::decode(label_code).map_err(|e| bad(e.to_string()))?;
        let values = (2..rec.len())
            .map(|i| {
                rec[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("invalid feature value '{}'", &rec[i])))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != width {
            return Err(bad(format!("expected {width} features, got {}", values.len())));
        }
        out.push(FeatureRecord {
            epoch_id: rec[0].to_string(),
            values,
            label,
        });
    }
    Ok(out)
}

pub fn write_feature_csv(writer: impl Write, records: &[FeatureRecord]) -> Result<()> {
    let width = records.first().map_or(1, |r| r.values.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["epoch_id".to_string(), "label".to_string()];
    header.extend((1..=width).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.epoch_id.clone(), Label::encode(r.label).to_string()];
        row.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EpochLine {
    epoch_id: String,
    sample_rate: f64,
    #[serde(default)]
    label: Option<i64>,
    samples: Vec<Vec<f64>>,
}

/// Reads epochs from JSON lines: `{"epoch_id", "sample_rate", "label", "samples"}`
/// with `samples` channel-major. Blank lines are skipped.
pub fn read_epochs(reader: impl BufRead) -> Result<Vec<Epoch>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let raw: EpochLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let label = match raw.label {
            Some(code) => Label::decode(code).map_err(|e| bad(e.to_string()))?,
            None => None,
        };
        out.push(
            Epoch::new(raw.epoch_id, raw.samples, raw.sample_rate, label)
                .map_err(|e| bad(e.to_string()))?,
        );
    }
    Ok(out)
}
