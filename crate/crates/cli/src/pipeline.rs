//! In-memory stages. The command layer wraps these with file IO.

use neurotrack::analysis::{analyze_curve, CurveAnalysis, RateDistortionPoint, RateKind};
use neurotrack::decoder::{cross_validate_and_train, pearson, reconstruct, CrossValidation, Decoder};
use neurotrack::redundancy::{directed_redundancy_bound, rate_s_to_shat, RateBundle};
use neurotrack::signals::{normalize, select_channels, MultichannelRecording, TimeSeries};
use neurotrack::synth::make_aad_scenario;
use neurotrack::{Condition, Error};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

/// One trial: the response channels and both candidate stimuli.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub subject_id: String,
    pub trial_id: String,
    pub eeg: MultichannelRecording,
    pub attended: TimeSeries,
    pub distractor: TimeSeries,
}

impl TrialData {
    pub fn stimulus(&self, c: Condition) -> Result<&TimeSeries, CliError> {
        match c {
            Condition::Attended => Ok(&self.attended),
            Condition::Distractor => Ok(&self.distractor),
            Condition::Unlabeled => Err(CliError::Config("condition must be attended or distractor".into())),
        }
    }

    fn context(&self) -> String {
        format!("subject {} trial {}", self.subject_id, self.trial_id)
    }
}

/// Trials sorted by subject then trial id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub trials: Vec<TrialData>,
}

impl Dataset {
    pub fn new(mut trials: Vec<TrialData>) -> Self {
        trials.sort_by(|a, b| (&a.subject_id, &a.trial_id).cmp(&(&b.subject_id, &b.trial_id)));
        Self { trials }
    }

    pub fn subjects(&self) -> Vec<String> {
        let mut s: Vec<String> = self.trials.iter().map(|t| t.subject_id.clone()).collect();
        s.dedup();
        s
    }
}

pub fn simulate_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let trials = make_aad_scenario(&cfg.aad_scenario())?;
    Ok(Dataset::new(
        trials
            .into_iter()
            .map(|t| TrialData {
                subject_id: t.eeg.subject_id.clone(),
                trial_id: t.eeg.trial_id.clone(),
                eeg: t.eeg,
                attended: t.attended,
                distractor: t.distractor,
            })
            .collect(),
    ))
}

/// Configured channels of one trial, each standardised.
fn prepare_eeg(cfg: &RunConfig, t: &TrialData) -> Result<MultichannelRecording, CliError> {
    let sel = select_channels(&t.eeg, &cfg.channel_subset).map_err(|e| CliError::from_core(&t.context(), e))?;
    sel.normalized().map_err(|e| CliError::from_core(&t.context(), e))
}

fn prepare_stimulus(t: &TrialData, c: Condition) -> Result<TimeSeries, CliError> {
    normalize(t.stimulus(c)?).map_err(|e| CliError::from_core(&t.context(), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectDecoder {
    pub subject_id: String,
    pub condition: Condition,
    pub n_trials: usize,
    pub cross_validation: CrossValidation,
    #[serde(skip)]
    pub decoder: Option<Decoder>,
}

/// One decoder per (subject, condition), with lambda chosen by leave-one-trial-out CV.
pub fn train_decoders(
    cfg: &RunConfig,
    ds: &Dataset,
    conditions: &[Condition],
) -> Result<Vec<SubjectDecoder>, CliError> {
    let w = cfg.lag_window();
    let per_subject = ds
        .subjects()
        .into_par_iter()
        .map(|subject| {
            let trials: Vec<&TrialData> = ds.trials.iter().filter(|t| t.subject_id == subject).collect();
            let eeg = trials.iter().map(|t| prepare_eeg(cfg, t)).collect::<Result<Vec<_>, _>>()?;
            conditions
                .iter()
                .map(|&c| {
                    let stim = trials.iter().map(|t| prepare_stimulus(t, c)).collect::<Result<Vec<_>, _>>()?;
                    let pairs: Vec<(&MultichannelRecording, &TimeSeries)> = eeg.iter().zip(&stim).collect();
                    let ctx = format!("subject {subject} ({c})");
                    let (decoder, cv) = cross_validate_and_train(&pairs, w, &cfg.lambda_grid)
                        .map_err(|e| CliError::from_core(&ctx, e))?;
                    Ok(SubjectDecoder {
                        subject_id: subject.clone(),
                        condition: c,
                        n_trials: pairs.len(),
                        cross_validation: cv,
                        decoder: Some(decoder),
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(per_subject.into_iter().flatten().collect())
}

/// Per-trial output of the rates stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRates {
    #[serde(flatten)]
    pub bundle: RateBundle,
    pub rho: f64,
    pub lambda: f64,
    /// `TE(S -> S_hat)` with the stimulus circularly shifted; present only when the surrogate is enabled.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub surrogate_r_s_to_shat: Option<f64>,
}

fn find_decoder<'a>(decoders: &'a [SubjectDecoder], subject: &str, c: Condition) -> Result<&'a Decoder, CliError> {
    decoders
        .iter()
        .find(|d| d.subject_id == subject && d.condition == c)
        .and_then(|d| d.decoder.as_ref())
        .ok_or_else(|| CliError::Data(format!("no decoder for subject {subject} ({c})")))
}

/// Reconstruct every trial and compute its rate bundle.
pub fn compute_rates(
    cfg: &RunConfig,
    ds: &Dataset,
    decoders: &[SubjectDecoder],
    conditions: &[Condition],
) -> Result<Vec<TrialRates>, CliError> {
    if ds.trials.is_empty() {
        return Err(CliError::from_core("rates", Error::NoPoints));
    }
    let w = cfg.lag_window();
    let per_trial = ds
        .trials
        .par_iter()
        .map(|t| {
            let ctx = t.context();
            let core = |e: Error| CliError::from_core(&ctx, e);
            let eeg = prepare_eeg(cfg, t)?;
            let rows = w.valid_rows(eeg.len()).map_err(core)?;
            conditions
                .iter()
                .map(|&c| {
                    let dec = find_decoder(decoders, &t.subject_id, c)?;
                    let s = prepare_stimulus(t, c)?.slice(rows.clone()).map_err(core)?;
                    let mut e_al = eeg.slice(rows.clone()).map_err(core)?;
                    e_al.condition = c;
                    let shat = normalize(&reconstruct(dec, &eeg).map_err(core)?).map_err(core)?;
                    let rho = pearson(&shat, &s).map_err(core)?;
                    let bundle = directed_redundancy_bound(&s, &e_al, &shat, &cfg.embed).map_err(core)?;
                    let surrogate_r_s_to_shat = match cfg.surrogate_shift_samples {
                        0 => None,
                        k => {
                            let mut v = s.samples().to_vec();
                            let len = v.len();
                            v.rotate_right(k % len);
                            let shifted = TimeSeries::new(s.label(), s.rate_hz(), v).map_err(core)?;
                            Some(rate_s_to_shat(&shifted, &shat, &cfg.embed).map_err(core)?)
                        }
                    };
                    Ok(TrialRates { bundle, rho, lambda: dec.lambda, surrogate_r_s_to_shat })
                })
                .collect::<Result<Vec<_>, CliError>>()
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

pub fn rd_points(rates: &[TrialRates]) -> Result<Vec<RateDistortionPoint>, CliError> {
    let mut out = Vec::with_capacity(rates.len() * RateKind::ALL.len());
    for r in rates {
        let ctx = format!("subject {} trial {}", r.bundle.subject_id, r.bundle.trial_id);
        out.extend(RateDistortionPoint::from_bundle(&r.bundle, r.rho).map_err(|e| CliError::from_core(&ctx, e))?);
    }
    Ok(out)
}

/// Result for one (condition, rate kind) cell. A failed cell carries its error message.
#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub condition: Condition,
    pub rate_kind: RateKind,
    pub analysis: Result<CurveAnalysis, String>,
}

/// Analyse every requested cell. Fails only when there are no points at all.
pub fn report(
    cfg: &RunConfig,
    points: &[RateDistortionPoint],
    conditions: &[Condition],
    kinds: &[RateKind],
) -> Result<Vec<CellReport>, CliError> {
    if points.is_empty() {
        return Err(CliError::from_core("report", Error::NoPoints));
    }
    let curve = cfg.curve_config();
    let mut cells = Vec::new();
    for &condition in conditions {
        for &rate_kind in kinds {
            let cell: Vec<RateDistortionPoint> =
                points.iter().filter(|p| p.condition == condition && p.rate_kind == rate_kind).cloned().collect();
            let analysis = if cell.is_empty() {
                Err(Error::NoPoints.to_string())
            } else {
                analyze_curve(&cell, &curve).map_err(|e| e.to_string())
            };
            cells.push(CellReport { condition, rate_kind, analysis });
        }
    }
    Ok(cells)
}

/// The whole pipeline without touching the filesystem.
pub fn run_in_memory(
    cfg: &RunConfig,
    conditions: &[Condition],
    kinds: &[RateKind],
) -> Result<Vec<CellReport>, CliError> {
    let ds = simulate_dataset(cfg)?;
    let decoders = train_decoders(cfg, &ds, conditions)?;
    let rates = compute_rates(cfg, &ds, &decoders, conditions)?;
    report(cfg, &rd_points(&rates)?, conditions, kinds)
}
