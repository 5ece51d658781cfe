//! Backward (stimulus-reconstruction) decoders.
//!
//! A decoder maps lagged multichannel responses to the stimulus,
//! `s_hat[t] = sum_c sum_tau r_c[t + tau] g(tau, c)`, with weights from the
//! ridge normal equations `(R'R + lambda I) g = R's`. Columns of `R` are
//! ordered channel-major, lag-minor: column `c * n_lags + k` holds channel
//! `c` at lag `tau_min + k`.
//!
//! Callers normalise responses and stimulus beforehand; no intercept is fitted.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::lagcov::{lagged_sums, LaggedVar};
use crate::signals::{is_constant, mean, LagWindow, MultichannelRecording, TimeSeries};
use crate::{Error, Result};

pub const DECODER_FORMAT_VERSION: u32 = 1;

/// Escalating diagonal jitter (fraction of `trace / dim`) for a ridge system that fails to factorise.
const RIDGE_JITTER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// `10^k` for `k = -6..=6`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-6..=6).map(|k| 10f64.powi(k)).collect()
}

/// A trained backward decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    /// `weights[(k, c)]` is `g(tau_min + k, channel c)`.
    weights: DMatrix<f64>,
    pub lag_window: LagWindow,
    pub lambda: f64,
    pub channel_labels: Vec<String>,
    pub train_rate_hz: f64,
    /// Diagonal jitter added to factorise the system; 0 unless escalation was needed.
    pub jitter_applied: f64,
}

impl Decoder {
    pub fn new(
        weights: DMatrix<f64>,
        lag_window: LagWindow,
        lambda: f64,
        channel_labels: Vec<String>,
        train_rate_hz: f64,
    ) -> Result<Self> {
        if weights.nrows() != lag_window.n_lags() || weights.ncols() != channel_labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "weights are {}x{}, expected {}x{}",
                weights.nrows(),
                weights.ncols(),
                lag_window.n_lags(),
                channel_labels.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("decoder weights must be finite".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda {lambda} must be finite and nonnegative")));
        }
        Ok(Self { weights, lag_window, lambda, channel_labels, train_rate_hz, jitter_applied: 0.0 })
    }

    /// Lag-by-channel weight matrix.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Weights stacked channel-major, lag-minor (the design-matrix column order).
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(self.weights.len(), self.weights.iter().copied())
    }

    pub fn weight(&self, tau: i64, channel: usize) -> f64 {
        self.weights[((tau - self.lag_window.tau_min) as usize, channel)]
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DecoderFile {
            format_version: DECODER_FORMAT_VERSION,
            ordering: "weights[lag_index][channel_index], lag_index = tau - tau_min".into(),
            weights: self.weights.row_iter().map(|r| r.iter().copied().collect()).collect(),
            lag_window: self.lag_window,
            lambda: self.lambda,
            channel_labels: self.channel_labels.clone(),
            rate_hz: self.train_rate_hz,
            jitter_applied: self.jitter_applied,
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: DecoderFile =
            serde_json::from_str(s).map_err(|e| Error::Parse { path: "<decoder>".into(), message: e.to_string() })?;
        if file.format_version != DECODER_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!("unsupported decoder format version {}", file.format_version)));
        }
        let n_lags = file.lag_window.n_lags();
        let n_ch = file.channel_labels.len();
        if file.weights.len() != n_lags || file.weights.iter().any(|r| r.len() != n_ch) {
            return Err(Error::ShapeMismatch(format!("decoder weights must be {n_lags}x{n_ch}")));
        }
        let weights = DMatrix::from_fn(n_lags, n_ch, |k, c| file.weights[k][c]);
        let mut d = Decoder::new(weights, file.lag_window, file.lambda, file.channel_labels, file.rate_hz)?;
        d.jitter_applied = file.jitter_applied;
        Ok(d)
    }
}

#[derive(Serialize, Deserialize)]
struct DecoderFile {
    format_version: u32,
    ordering: String,
    weights: Vec<Vec<f64>>,
    lag_window: LagWindow,
    lambda: f64,
    channel_labels: Vec<String>,
    rate_hz: f64,
    jitter_applied: f64,
}

/// Sufficient statistics of one trial's lagged design against its stimulus.
#[derive(Debug, Clone)]
pub struct TrialStats {
    /// `R'R`
    pub gram: DMatrix<f64>,
    /// `R's`
    pub cross: DVector<f64>,
    /// column sums of `R`
    pub col_sums: DVector<f64>,
    pub stim_sum: f64,
    pub stim_sq_sum: f64,
    pub n_rows: usize,
}

impl TrialStats {
    pub fn compute(r: &MultichannelRecording, s: &TimeSeries, w: LagWindow) -> Result<Self> {
        if r.n_channels() == 0 {
            return Err(Error::ShapeMismatch("recording has no channels".into()));
        }
        if r.len() != s.len() || r.rate_hz() != Some(s.rate_hz()) {
            return Err(Error::ShapeMismatch(format!(
                "recording {}/{} ({} samples) and stimulus `{}` ({} samples) are not aligned",
                r.subject_id,
                r.trial_id,
                r.len(),
                s.label(),
                s.len()
            )));
        }
        let rows = w.valid_rows(r.len())?;
        let n_ch = r.n_channels();
        let mut series: Vec<&[f64]> = r.channels().iter().map(TimeSeries::samples).collect();
        series.push(s.samples());
        let mut vars: Vec<LaggedVar> =
            (0..n_ch).flat_map(|c| w.lags().map(move |tau| LaggedVar::new(c, -tau))).collect();
        vars.push(LaggedVar::new(n_ch, 0));
        let sums = lagged_sums(&series, &vars, rows);
        let p = vars.len() - 1;
        Ok(Self {
            gram: sums.cross.view((0, 0), (p, p)).into_owned(),
            cross: sums.cross.view((0, p), (p, 1)).column(0).into_owned(),
            col_sums: sums.totals.rows(0, p).into_owned(),
            stim_sum: sums.totals[p],
            stim_sq_sum: sums.cross[(p, p)],
            n_rows: sums.count,
        })
    }

    fn add(&mut self, other: &Self, sign: f64) {
        self.gram += &other.gram * sign;
        self.cross += &other.cross * sign;
        self.col_sums += &other.col_sums * sign;
        self.stim_sum += sign * other.stim_sum;
        self.stim_sq_sum += sign * other.stim_sq_sum;
        self.n_rows = if sign > 0.0 { self.n_rows + other.n_rows } else { self.n_rows - other.n_rows };
    }

    /// Pearson correlation between `R g` and `s` on these rows.
    pub fn correlation(&self, g: &DVector<f64>) -> f64 {
        let n = self.n_rows as f64;
        let m_hat = g.dot(&self.col_sums) / n;
        let m_s = self.stim_sum / n;
        let var_hat = g.dot(&(&self.gram * g)) / n - m_hat * m_hat;
        let var_s = self.stim_sq_sum / n - m_s * m_s;
        let cov = g.dot(&self.cross) / n - m_hat * m_s;
        if !(var_hat > 0.0 && var_s > 0.0) {
            return 0.0;
        }
        (cov / (var_hat * var_s).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Ridge solution `(G + lambda I)^-1 b` and the jitter it needed.
fn solve_ridge(gram: &DMatrix<f64>, rhs: &DVector<f64>, lambda: f64) -> Result<(DVector<f64>, f64)> {
    let p = gram.nrows();
    let mut a = gram.clone();
    for i in 0..p {
        a[(i, i)] += lambda;
    }
    if lambda == 0.0 {
        let chol = Cholesky::new(a)
            .ok_or_else(|| Error::SingularSystem("R'R is not positive definite and lambda = 0".into()))?;
        let l = chol.l_dirty();
        for i in 0..p {
            if l[(i, i)] * l[(i, i)] <= 1e-12 * gram[(i, i)] {
                return Err(Error::SingularSystem(format!("design column {i} is collinear with earlier columns")));
            }
        }
        return Ok((chol.solve(rhs), 0.0));
    }
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok((chol.solve(rhs), 0.0));
    }
    let scale = a.trace() / p as f64;
    for eps in RIDGE_JITTER {
        let mut aj = a.clone();
        for i in 0..p {
            aj[(i, i)] += eps * scale;
        }
        if let Some(chol) = Cholesky::new(aj) {
            return Ok((chol.solve(rhs), eps * scale));
        }
    }
    Err(Error::SingularSystem(format!("ridge system not positive definite at lambda = {lambda}")))
}

fn check_channels(expected: &[String], r: &MultichannelRecording) -> Result<()> {
    let found = r.labels();
    if found.len() != expected.len() {
        return Err(Error::ShapeMismatch(format!("expected {} channels, found {}", expected.len(), found.len())));
    }
    if found != expected {
        return Err(Error::ChannelOrderMismatch { expected: expected.to_vec(), found });
    }
    Ok(())
}

fn pooled_stats(trials: &[(&MultichannelRecording, &TimeSeries)], w: LagWindow) -> Result<Vec<TrialStats>> {
    let labels = trials[0].0.labels();
    trials
        .iter()
        .map(|(r, s)| {
            check_channels(&labels, r)?;
            TrialStats::compute(r, s, w)
        })
        .collect()
}

fn sum_stats(stats: &[TrialStats]) -> TrialStats {
    let mut total = stats[0].clone();
    for s in &stats[1..] {
        total.add(s, 1.0);
    }
    total
}

fn decoder_from_solution(
    g: DVector<f64>,
    jitter: f64,
    w: LagWindow,
    lambda: f64,
    r: &MultichannelRecording,
) -> Result<Decoder> {
    let labels = r.labels();
    let weights = DMatrix::from_column_slice(w.n_lags(), labels.len(), g.as_slice());
    let mut d = Decoder::new(weights, w, lambda, labels, r.rate_hz().unwrap_or(1.0))?;
    d.jitter_applied = jitter;
    Ok(d)
}

/// Fit a decoder on one recording.
pub fn train(r: &MultichannelRecording, s: &TimeSeries, w: LagWindow, lambda: f64) -> Result<Decoder> {
    train_pooled(&[(r, s)], w, lambda)
}

/// Fit one decoder on the concatenated rows of several trials.
pub fn train_pooled(trials: &[(&MultichannelRecording, &TimeSeries)], w: LagWindow, lambda: f64) -> Result<Decoder> {
    if trials.is_empty() {
        return Err(Error::InsufficientTrials { needed: 1, got: 0 });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda {lambda} must be finite and nonnegative")));
    }
    let total = sum_stats(&pooled_stats(trials, w)?);
    let (g, jitter) = solve_ridge(&total.gram, &total.cross, lambda)?;
    decoder_from_solution(g, jitter, w, lambda, trials[0].0)
}

/// Apply a decoder. The output covers the window's valid rows: index `i` is time `w.valid_rows(n).start + i`.
pub fn reconstruct(d: &Decoder, r: &MultichannelRecording) -> Result<TimeSeries> {
    check_channels(&d.channel_labels, r)?;
    let rate = r.rate_hz().unwrap_or(d.train_rate_hz);
    if rate != d.train_rate_hz {
        return Err(Error::ShapeMismatch(format!(
            "decoder trained at {} Hz applied to {} Hz data",
            d.train_rate_hz, rate
        )));
    }
    let w = d.lag_window;
    let rows = w.valid_rows(r.len())?;
    let mut out = vec![0.0; rows.len()];
    for (c, ch) in r.channels().iter().enumerate() {
        let x = ch.samples();
        for (k, tau) in w.lags().enumerate() {
            let g = d.weights[(k, c)];
            if g == 0.0 {
                continue;
            }
            let offset = rows.start as i64 + tau;
            for (i, o) in out.iter_mut().enumerate() {
                *o += g * x[(offset + i as i64) as usize];
            }
        }
    }
    TimeSeries::new("reconstruction", rate, out)
}

/// Result of leave-one-trial-out lambda selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub best_lambda: f64,
    /// `(lambda, mean held-out rho)` in ascending lambda order.
    pub mean_rho: Vec<(f64, f64)>,
}

impl CrossValidation {
    pub fn best_rho(&self) -> f64 {
        self.mean_rho.iter().find(|(l, _)| *l == self.best_lambda).map_or(f64::NAN, |(_, r)| *r)
    }
}

/// Leave-one-trial-out selection of lambda by mean held-out Pearson correlation.
/// Ties go to the larger lambda.
pub fn cross_validate(
    trials: &[(&MultichannelRecording, &TimeSeries)],
    w: LagWindow,
    lambdas: &[f64],
) -> Result<CrossValidation> {
    if trials.len() < 2 {
        return Err(Error::InsufficientTrials { needed: 2, got: trials.len() });
    }
    let stats = pooled_stats(trials, w)?;
    cv_from_stats(&stats, lambdas)
}

/// Cross-validate, then refit on all trials at the selected lambda.
pub fn cross_validate_and_train(
    trials: &[(&MultichannelRecording, &TimeSeries)],
    w: LagWindow,
    lambdas: &[f64],
) -> Result<(Decoder, CrossValidation)> {
    if trials.len() < 2 {
        return Err(Error::InsufficientTrials { needed: 2, got: trials.len() });
    }
    let stats = pooled_stats(trials, w)?;
    let cv = cv_from_stats(&stats, lambdas)?;
    let total = sum_stats(&stats);
    let (g, jitter) = solve_ridge(&total.gram, &total.cross, cv.best_lambda)?;
    Ok((decoder_from_solution(g, jitter, w, cv.best_lambda, trials[0].0)?, cv))
}

fn cv_from_stats(stats: &[TrialStats], lambdas: &[f64]) -> Result<CrossValidation> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::InvalidInput("lambda grid must be non-empty, finite and nonnegative".into()));
    }
    let mut grid = lambdas.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let total = sum_stats(stats);
    let mut rho_sums = vec![0.0; grid.len()];
    for held_out in stats {
        let mut train = total.clone();
        train.add(held_out, -1.0);
        for (lambda, acc) in grid.iter().zip(rho_sums.iter_mut()) {
            let (g, _) = solve_ridge(&train.gram, &train.cross, *lambda)?;
            *acc += held_out.correlation(&g);
        }
    }
    let mean_rho: Vec<(f64, f64)> = grid.iter().zip(&rho_sums).map(|(l, s)| (*l, s / stats.len() as f64)).collect();
    let best_lambda = mean_rho
        .iter()
        .fold(None::<(f64, f64)>, |best, &(l, r)| match best {
            Some((_, br)) if r < br => best,
            _ => Some((l, r)),
        })
        .map(|(l, _)| l)
        .expect("grid is non-empty");
    Ok(CrossValidation { best_lambda, mean_rho })
}

/// Empirical Pearson correlation.
pub fn pearson(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    pearson_slices(a.samples(), b.samples()).map_err(|e| match e {
        Error::ZeroVarianceSignal(which) if which == "a" => Error::ZeroVarianceSignal(a.label().to_string()),
        Error::ZeroVarianceSignal(_) => Error::ZeroVarianceSignal(b.label().to_string()),
        other => other,
    })
}

pub(crate) fn pearson_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("lengths {} and {} differ", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::SeriesTooShort { needed: 1, got: a.len() });
    }
    if is_constant(a) {
        return Err(Error::ZeroVarianceSignal("a".into()));
    }
    if is_constant(b) {
        return Err(Error::ZeroVarianceSignal("b".into()));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}
