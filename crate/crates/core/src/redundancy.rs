//! Per-channel minimum rates and the directed-redundancy upper bound.
//!
//! For a stimulus `S`, electrodes `E(j)` and reconstruction `S_hat`:
//!
//! ```text
//! R_E->S_hat = min_j TE(E(j) -> S_hat)
//! R_S->E     = min_j TE(S -> E(j))
//! R_S->S_hat = TE(S -> S_hat)
//! R          = min(R_S->S_hat, R_E->S_hat, R_S->E)
//! ```
//!
//! Only single-channel transfer entropies are evaluated. `S_hat` is a
//! deterministic function of all electrodes jointly, so conditioning on the
//! full electrode set would be degenerate.

use serde::{Deserialize, Serialize};

use crate::infotheory::{transfer_entropy, EmbedSpec};
use crate::signals::{MultichannelRecording, TimeSeries};
use crate::{Condition, Error, Result};

/// The three rates of one trial and their minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBundle {
    pub r_s_to_shat: f64,
    pub r_e_to_shat: f64,
    pub r_s_to_e: f64,
    pub r_min: f64,
    pub argmin_channel_e_to_shat: String,
    pub argmin_channel_s_to_e: String,
    pub condition: Condition,
    pub subject_id: String,
    pub trial_id: String,
    pub embed: EmbedSpec,
}

/// Minimum of `rate(channel)` over channels; the first channel wins ties.
fn min_over_channels(
    electrodes: &MultichannelRecording,
    mut rate: impl FnMut(&TimeSeries) -> Result<f64>,
) -> Result<(f64, String)> {
    let mut best: Option<(f64, &str)> = None;
    for ch in electrodes.channels() {
        let v = rate(ch)?;
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, ch.label()));
        }
    }
    best.map(|(v, l)| (v, l.to_string())).ok_or_else(|| Error::ShapeMismatch("electrode set is empty".into()))
}

fn check_aligned(a: &TimeSeries, electrodes: &MultichannelRecording) -> Result<()> {
    if electrodes.len() != a.len() {
        return Err(Error::ShapeMismatch(format!(
            "`{}` has {} samples but electrodes have {}",
            a.label(),
            a.len(),
            electrodes.len()
        )));
    }
    Ok(())
}

/// `min_j TE(E(j) -> S_hat)` and the minimising channel.
pub fn rate_e_to_shat(electrodes: &MultichannelRecording, shat: &TimeSeries, e: &EmbedSpec) -> Result<(f64, String)> {
    check_aligned(shat, electrodes)?;
    min_over_channels(electrodes, |ch| transfer_entropy(ch, shat, e))
}

/// `min_j TE(S -> E(j))` and the minimising channel.
pub fn rate_s_to_e(s: &TimeSeries, electrodes: &MultichannelRecording, e: &EmbedSpec) -> Result<(f64, String)> {
    check_aligned(s, electrodes)?;
    min_over_channels(electrodes, |ch| transfer_entropy(s, ch, e))
}

/// `TE(S -> S_hat)`.
pub fn rate_s_to_shat(s: &TimeSeries, shat: &TimeSeries, e: &EmbedSpec) -> Result<f64> {
    transfer_entropy(s, shat, e)
}

/// All three rates for one trial. Inputs must already be aligned on the same samples.
pub fn directed_redundancy_bound(
    s: &TimeSeries,
    electrodes: &MultichannelRecording,
    shat: &TimeSeries,
    e: &EmbedSpec,
) -> Result<RateBundle> {
    let r_s_to_shat = rate_s_to_shat(s, shat, e)?;
    let (r_e_to_shat, argmin_e) = rate_e_to_shat(electrodes, shat, e)?;
    let (r_s_to_e, argmin_s) = rate_s_to_e(s, electrodes, e)?;
    Ok(RateBundle {
        r_s_to_shat,
        r_e_to_shat,
        r_s_to_e,
        r_min: r_s_to_shat.min(r_e_to_shat).min(r_s_to_e),
        argmin_channel_e_to_shat: argmin_e,
        argmin_channel_s_to_e: argmin_s,
        condition: electrodes.condition,
        subject_id: electrodes.subject_id.clone(),
        trial_id: electrodes.trial_id.clone(),
        embed: *e,
    })
}

/// The general bound for a driver `phi`, intermediate processes `X(1..K)` and target `Z`:
/// `min(TE(phi -> Z), TE(phi -> X(i)), TE(X(i) -> Z))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyBound {
    pub te_driver_to_target: f64,
    pub te_driver_to_sources: Vec<f64>,
    pub te_sources_to_target: Vec<f64>,
    pub bound: f64,
}

pub fn redundancy_upper_bound(
    driver: &TimeSeries,
    sources: &[&TimeSeries],
    target: &TimeSeries,
    e: &EmbedSpec,
) -> Result<RedundancyBound> {
    if sources.is_empty() {
        return Err(Error::InvalidInput("need at least one intermediate process".into()));
    }
    let te_driver_to_target = transfer_entropy(driver, target, e)?;
    let te_driver_to_sources = sources.iter().map(|x| transfer_entropy(driver, x, e)).collect::<Result<Vec<_>>>()?;
    let te_sources_to_target = sources.iter().map(|x| transfer_entropy(x, target, e)).collect::<Result<Vec<_>>>()?;
    let bound = te_driver_to_sources.iter().chain(&te_sources_to_target).fold(te_driver_to_target, |m, v| m.min(*v));
    Ok(RedundancyBound { te_driver_to_target, te_driver_to_sources, te_sources_to_target, bound })
}
