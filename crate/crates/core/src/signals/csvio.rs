//! Recording files: `<name>.csv` holds a `t` column (seconds) followed by one
//! column per channel; `<name>.json` is the sidecar with subject, trial,
//! condition and sample rate.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MultichannelRecording, TimeSeries};
use crate::{Condition, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub subject_id: String,
    pub trial_id: String,
    pub condition: Condition,
    pub rate_hz: f64,
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, message: impl ToString) -> Error {
    Error::Parse { path: path.display().to_string(), message: message.to_string() }
}

/// Read `<csv_path>` and its `.json` sidecar.
pub fn read_recording(csv_path: &Path) -> Result<MultichannelRecording> {
    let meta_path = sidecar_path(csv_path);
    let meta_file = File::open(&meta_path).map_err(io_err(&meta_path))?;
    let meta: RecordingMeta = serde_json::from_reader(meta_file).map_err(|e| parse_err(&meta_path, e))?;

    let mut rdr = csv::Reader::from_path(csv_path).map_err(|e| parse_err(csv_path, e))?;
    let headers = rdr.headers().map_err(|e| parse_err(csv_path, e))?.clone();
    if headers.get(0) != Some("t") {
        return Err(parse_err(csv_path, "first column must be `t`"));
    }
    let labels: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| parse_err(csv_path, e))?;
        if record.len() != labels.len() + 1 {
            return Err(parse_err(csv_path, format!("row {row}: expected {} fields", labels.len() + 1)));
        }
        let t: f64 = record[0].trim().parse().map_err(|e| parse_err(csv_path, format!("row {row}: {e}")))?;
        if (t * meta.rate_hz - row as f64).abs() > 0.5 {
            return Err(parse_err(
                csv_path,
                format!("row {row}: time {t} s is off the {} Hz sample grid", meta.rate_hz),
            ));
        }
        for (col, field) in columns.iter_mut().zip(record.iter().skip(1)) {
            col.push(field.trim().parse().map_err(|e| parse_err(csv_path, format!("row {row}: {e}")))?);
        }
    }
    let channels = labels
        .into_iter()
        .zip(columns)
        .map(|(label, samples)| TimeSeries::new(label, meta.rate_hz, samples))
        .collect::<Result<Vec<_>>>()?;
    MultichannelRecording::new(channels, meta.subject_id, meta.trial_id, meta.condition)
}

/// Write `<csv_path>` and its `.json` sidecar. Values use shortest round-trip formatting.
pub fn write_recording(r: &MultichannelRecording, csv_path: &Path) -> Result<()> {
    let rate_hz = r.rate_hz().ok_or_else(|| Error::InvalidInput("cannot write a recording without channels".into()))?;
    let mut w = csv::Writer::from_path(csv_path).map_err(|e| parse_err(csv_path, e))?;
    let mut header = vec!["t".to_string()];
    header.extend(r.labels());
    w.write_record(&header).map_err(|e| parse_err(csv_path, e))?;
    let mut fields = Vec::with_capacity(header.len());
    for i in 0..r.len() {
        fields.clear();
        fields.push((i as f64 / rate_hz).to_string());
        fields.extend(r.channels().iter().map(|c| c.samples()[i].to_string()));
        w.write_record(&fields).map_err(|e| parse_err(csv_path, e))?;
    }
    w.flush().map_err(io_err(csv_path))?;

    let meta = RecordingMeta {
        subject_id: r.subject_id.clone(),
        trial_id: r.trial_id.clone(),
        condition: r.condition,
        rate_hz,
    };
    let meta_path = sidecar_path(csv_path);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| parse_err(&meta_path, e))?;
    std::fs::write(&meta_path, json + "\n").map_err(io_err(&meta_path))
}
