//! File-backed stages.
//!
//! Dataset layout (`--data`):
//!
//! ```text
//! dataset.json                      {"trials": [{subject_id, trial_id, eeg, attended, distractor}, ...]}
//! S01/T001_eeg.csv  (+ .json)       response channels
//! S01/T001_attended.csv  (+ .json)  attended envelope, one channel
//! S01/T001_distractor.csv (+ .json) distractor envelope, one channel
//! ```
//!
//! Paths in `dataset.json` are relative to the dataset directory. Results
//! (`--out`) are `decoders/*.json`, `rate_bundles.ndjson`, `rd_points.ndjson`,
//! `pdf.csv`, `rd_curve.csv` and `fits.json`.

use std::path::{Path, PathBuf};

use neurotrack::analysis::{RateDistortionPoint, RateKind};
use neurotrack::decoder::{CrossValidation, Decoder};
use neurotrack::signals::{read_recording, write_recording};
use neurotrack::signals::{MultichannelRecording, TimeSeries};
use neurotrack::Condition;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{read_json, read_ndjson, write_csv, write_json, write_ndjson, RunMeta};
use crate::pipeline::{self, CellReport, Dataset, SubjectDecoder, TrialData, TrialRates};

pub const DATASET_INDEX: &str = "dataset.json";
pub const DECODER_DIR: &str = "decoders";
pub const RATE_BUNDLES: &str = "rate_bundles.ndjson";
pub const RD_POINTS: &str = "rd_points.ndjson";
pub const PDF_CSV: &str = "pdf.csv";
pub const RD_CURVE_CSV: &str = "rd_curve.csv";
pub const FITS_JSON: &str = "fits.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub subject_id: String,
    pub trial_id: String,
    pub eeg: PathBuf,
    pub attended: PathBuf,
    pub distractor: PathBuf,
}

fn single_channel(s: &TimeSeries, t: &TrialData, c: Condition) -> Result<MultichannelRecording, CliError> {
    Ok(MultichannelRecording::new(vec![s.clone()], t.subject_id.clone(), t.trial_id.clone(), c)?)
}

pub fn write_dataset(cfg: &RunConfig, ds: &Dataset, dir: &Path) -> Result<(), CliError> {
    let mut entries = Vec::with_capacity(ds.trials.len());
    for t in &ds.trials {
        let rel = |kind: &str| PathBuf::from(&t.subject_id).join(format!("{}_{kind}.csv", t.trial_id));
        let entry = TrialEntry {
            subject_id: t.subject_id.clone(),
            trial_id: t.trial_id.clone(),
            eeg: rel("eeg"),
            attended: rel("attended"),
            distractor: rel("distractor"),
        };
        let sub = dir.join(&t.subject_id);
        std::fs::create_dir_all(&sub).map_err(|e| CliError::io(&sub, e))?;
        write_recording(&t.eeg, &dir.join(&entry.eeg))?;
        write_recording(&single_channel(&t.attended, t, Condition::Attended)?, &dir.join(&entry.attended))?;
        write_recording(&single_channel(&t.distractor, t, Condition::Distractor)?, &dir.join(&entry.distractor))?;
        entries.push(entry);
    }
    write_json(&dir.join(DATASET_INDEX), &RunMeta::new(cfg), "trials", &entries)
}

fn read_stimulus(path: &Path) -> Result<TimeSeries, CliError> {
    let r = read_recording(path)?;
    match r.channels() {
        [only] => Ok(only.clone()),
        chs => Err(CliError::Data(format!("{}: expected one channel, found {}", path.display(), chs.len()))),
    }
}

pub fn load_dataset(cfg: &RunConfig, dir: &Path) -> Result<Dataset, CliError> {
    let index = dir.join(DATASET_INDEX);
    let (meta, entries): (Option<RunMeta>, Vec<TrialEntry>) = read_json(&index, "trials")?;
    if let Some(m) = meta {
        m.check_matches(cfg, &index)?;
    }
    let trials = entries
        .into_iter()
        .map(|e| {
            Ok(TrialData {
                eeg: read_recording(&dir.join(&e.eeg))?,
                attended: read_stimulus(&dir.join(&e.attended))?,
                distractor: read_stimulus(&dir.join(&e.distractor))?,
                subject_id: e.subject_id,
                trial_id: e.trial_id,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Dataset::new(trials))
}

/// Simulate the configured scenario into `data`.
pub fn cmd_simulate(cfg: &RunConfig, data: &Path) -> Result<usize, CliError> {
    let ds = pipeline::simulate_dataset(cfg)?;
    write_dataset(cfg, &ds, data)?;
    Ok(ds.trials.len())
}

#[derive(Serialize, Deserialize)]
struct DecoderRecord {
    subject_id: String,
    condition: Condition,
    n_trials: usize,
    cross_validation: CrossValidation,
    decoder: serde_json::Value,
}

fn decoder_path(out: &Path, subject: &str, c: Condition) -> PathBuf {
    out.join(DECODER_DIR).join(format!("{subject}_{c}.json"))
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path, conditions: &[Condition]) -> Result<usize, CliError> {
    let ds = load_dataset(cfg, data)?;
    let decoders = pipeline::train_decoders(cfg, &ds, conditions)?;
    let meta = RunMeta::new(cfg);
    for d in &decoders {
        let dec = d.decoder.as_ref().expect("freshly trained");
        let record = DecoderRecord {
            subject_id: d.subject_id.clone(),
            condition: d.condition,
            n_trials: d.n_trials,
            cross_validation: d.cross_validation.clone(),
            decoder: serde_json::from_str(&dec.to_json()?).expect("decoder JSON"),
        };
        write_json(&decoder_path(out, &d.subject_id, d.condition), &meta, "decoder_record", &record)?;
    }
    Ok(decoders.len())
}

fn load_decoders(
    cfg: &RunConfig,
    out: &Path,
    subjects: &[String],
    conditions: &[Condition],
) -> Result<Vec<SubjectDecoder>, CliError> {
    let mut v = Vec::new();
    for s in subjects {
        for &c in conditions {
            let p = decoder_path(out, s, c);
            let (meta, rec): (_, DecoderRecord) = read_json(&p, "decoder_record")?;
            meta.ok_or_else(|| CliError::Data(format!("{}: missing metadata", p.display())))?.check_matches(cfg, &p)?;
            let json = serde_json::to_string(&rec.decoder).expect("value");
            let decoder = Decoder::from_json(&json).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            v.push(SubjectDecoder {
                subject_id: rec.subject_id,
                condition: rec.condition,
                n_trials: rec.n_trials,
                cross_validation: rec.cross_validation,
                decoder: Some(decoder),
            });
        }
    }
    Ok(v)
}

pub fn cmd_rates(cfg: &RunConfig, data: &Path, out: &Path, conditions: &[Condition]) -> Result<usize, CliError> {
    let ds = load_dataset(cfg, data)?;
    let decoders = load_decoders(cfg, out, &ds.subjects(), conditions)?;
    let rates = pipeline::compute_rates(cfg, &ds, &decoders, conditions)?;
    let points = pipeline::rd_points(&rates)?;
    let meta = RunMeta::new(cfg);
    write_ndjson(&out.join(RATE_BUNDLES), &meta, &rates)?;
    write_ndjson(&out.join(RD_POINTS), &meta, &points)?;
    Ok(rates.len())
}

#[derive(Serialize)]
struct FitRow<'a> {
    condition: Condition,
    rate_kind: RateKind,
    #[serde(flatten)]
    outcome: FitOutcome<'a>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum FitOutcome<'a> {
    Ok {
        slope_db_per_bit: f64,
        intercept_db: f64,
        p_value: f64,
        r_squared: f64,
        n_fit_points: usize,
        n_points: usize,
        n_in_support: usize,
        n_zero_distortion: usize,
        support_threshold_bits: f64,
        bandwidth_bits: f64,
    },
    Err {
        error: &'a str,
    },
}

#[derive(Serialize)]
struct FitsBody<'a> {
    support_level: f64,
    bin_width_bits: f64,
    bin_stride_bits: f64,
    fit_mode: neurotrack::analysis::FitMode,
    cells: Vec<FitRow<'a>>,
}

/// Write the report files. Returns the cells so callers can print failures.
pub fn cmd_report(
    cfg: &RunConfig,
    out: &Path,
    conditions: &[Condition],
    kinds: &[RateKind],
) -> Result<Vec<CellReport>, CliError> {
    let points_path = out.join(RD_POINTS);
    let (meta, points): (RunMeta, Vec<RateDistortionPoint>) = read_ndjson(&points_path)?;
    meta.check_matches(cfg, &points_path)?;
    let bundles_path = out.join(RATE_BUNDLES);
    if bundles_path.exists() {
        let (bmeta, _): (RunMeta, Vec<TrialRates>) = read_ndjson(&bundles_path)?;
        bmeta.check_matches(cfg, &bundles_path)?;
    }
    let cells = pipeline::report(cfg, &points, conditions, kinds)?;

    let mut pdf_rows = Vec::new();
    let mut curve_rows = Vec::new();
    let mut fit_rows = Vec::new();
    for cell in &cells {
        let (c, k) = (cell.condition.to_string(), cell.rate_kind.to_string());
        let outcome = match &cell.analysis {
            Ok(a) => {
                for (x, y) in a.grid.iter().zip(&a.density) {
                    pdf_rows.push(vec![c.clone(), k.clone(), x.to_string(), y.to_string()]);
                }
                for b in &a.bins {
                    curve_rows.push(vec![
                        c.clone(),
                        k.clone(),
                        b.center.to_string(),
                        b.mean_db.to_string(),
                        b.count.to_string(),
                    ]);
                }
                FitOutcome::Ok {
                    slope_db_per_bit: a.fit.slope,
                    intercept_db: a.fit.intercept,
                    p_value: a.fit.p_value,
                    r_squared: a.fit.r_squared,
                    n_fit_points: a.fit.n_points,
                    n_points: a.n_points,
                    n_in_support: a.n_in_support,
                    n_zero_distortion: a.n_zero_distortion,
                    support_threshold_bits: a.support_threshold,
                    bandwidth_bits: a.bandwidth,
                }
            }
            Err(e) => FitOutcome::Err { error: e },
        };
        fit_rows.push(FitRow { condition: cell.condition, rate_kind: cell.rate_kind, outcome });
    }
    let meta = RunMeta::new(cfg);
    write_csv(&out.join(PDF_CSV), &meta, &["condition", "rate_kind", "rate_bits", "density"], &pdf_rows)?;
    write_csv(
        &out.join(RD_CURVE_CSV),
        &meta,
        &["condition", "rate_kind", "center_bits", "mean_distortion_db", "count"],
        &curve_rows,
    )?;
    let body = FitsBody {
        support_level: cfg.kde_level,
        bin_width_bits: cfg.bin_width_bits,
        bin_stride_bits: cfg.bin_stride_bits,
        fit_mode: cfg.fit_mode,
        cells: fit_rows,
    };
    write_json(&out.join(FITS_JSON), &meta, "fits", &body)?;
    Ok(cells)
}

/// simulate, train, rates and report in sequence.
pub fn cmd_all(
    cfg: &RunConfig,
    data: &Path,
    out: &Path,
    conditions: &[Condition],
    kinds: &[RateKind],
) -> Result<Vec<CellReport>, CliError> {
    cmd_simulate(cfg, data)?;
    cmd_train(cfg, data, out, conditions)?;
    cmd_rates(cfg, data, out, conditions)?;
    cmd_report(cfg, out, conditions, kinds)
}
