//! Stationary VAR(1) generators with exact transfer-entropy oracles, and a
//! synthetic two-talker attention scenario built on them.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`), seeded with
//! `seed_from_u64` and split into independent per-trial streams with
//! `set_stream`, so a seed reproduces the same data on every platform.

use std::f64::consts::{LN_2, PI};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::infotheory::EmbedSpec;
use crate::signals::{normalize, MultichannelRecording, TimeSeries, LEFT_TEMPORAL, TEN_TWENTY_64};
use crate::{Condition, Error, Result};

/// Identifier recorded in run metadata for the generator behind every seed.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.9/seed_from_u64+set_stream";

/// One standard normal draw.
pub fn gauss<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Sample rate assigned to plain VAR simulations.
pub const SIM_RATE_HZ: f64 = 64.0;

/// Generator for stream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `x[t] = A x[t-1] + eps[t]`, `eps ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    transition: DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    noise_chol: DMatrix<f64>,
    labels: Vec<String>,
    spectral_radius: f64,
}

impl VarModel {
    pub fn new(transition: DMatrix<f64>, noise_cov: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let d = transition.nrows();
        if d == 0 || transition.ncols() != d || noise_cov.shape() != (d, d) || labels.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "transition {:?}, noise {:?} and {} labels do not describe one square system",
                transition.shape(),
                noise_cov.shape(),
                labels.len()
            )));
        }
        if transition.iter().chain(noise_cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("model entries must be finite".into()));
        }
        let asym = (&noise_cov - noise_cov.transpose()).amax();
        if asym > 1e-12 * noise_cov.amax().max(1.0) {
            return Err(Error::InvalidInput("noise covariance is not symmetric".into()));
        }
        let noise_chol = Cholesky::new(noise_cov.clone())
            .ok_or_else(|| Error::InvalidInput("noise covariance is not positive definite".into()))?
            .unpack();
        let spectral_radius = spectral_radius(&transition);
        if !(spectral_radius < 1.0) {
            return Err(Error::UnstableModel(spectral_radius));
        }
        Ok(Self { transition, noise_cov, noise_chol, labels, spectral_radius })
    }

    /// Model with default labels `x0, x1, ...`.
    pub fn unlabeled(transition: DMatrix<f64>, noise_cov: DMatrix<f64>) -> Result<Self> {
        let labels = (0..transition.nrows()).map(|i| format!("x{i}")).collect();
        Self::new(transition, noise_cov, labels)
    }

    pub fn dimension(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    /// Steps discarded before recording: ten time constants of the slowest mode.
    pub fn burn_in(&self) -> usize {
        if self.spectral_radius <= 0.0 {
            return 1;
        }
        let tau = -1.0 / self.spectral_radius.ln();
        (10.0 * tau).ceil().max(1.0) as usize
    }

    /// Stationary covariance `S = A S A' + Q`.
    pub fn stationary_covariance(&self) -> DMatrix<f64> {
        let a = &self.transition;
        // doubling: S_{k+1} = S_k + A_k S_k A_k', A_{k+1} = A_k^2
        let mut sigma = self.noise_cov.clone();
        let mut ak = a.clone();
        for _ in 0..64 {
            let inc = &ak * &sigma * ak.transpose();
            sigma += &inc;
            ak = &ak * &ak;
            if inc.amax() <= 1e-16 * sigma.amax() {
                break;
            }
        }
        // plain fixed-point polish to 1e-14
        for _ in 0..200 {
            let next = a * &sigma * a.transpose() + &self.noise_cov;
            let change = (&next - &sigma).amax();
            sigma = next;
            if change <= 1e-14 * sigma.amax().max(1.0) {
                break;
            }
        }
        (&sigma + sigma.transpose()) * 0.5
    }

    /// `max |S - A S A' - Q|`.
    pub fn lyapunov_residual(&self, sigma: &DMatrix<f64>) -> f64 {
        (sigma - &self.transition * sigma * self.transition.transpose() - &self.noise_cov).amax()
    }

    /// `Cov(x[t + h], x[t]) = A^h S` for every `h` in `0..=max_lag`.
    pub fn autocovariances(&self, max_lag: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(max_lag + 1);
        out.push(self.stationary_covariance());
        for h in 1..=max_lag {
            let next = &self.transition * &out[h - 1];
            out.push(next);
        }
        out
    }
}

fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn simulate_with(model: &VarModel, n: usize, rng: &mut ChaCha20Rng) -> Vec<DVector<f64>> {
    let d = model.dimension();
    let mut x = DVector::zeros(d);
    let mut z = DVector::zeros(d);
    let mut step = |x: &DVector<f64>, rng: &mut ChaCha20Rng| {
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
        &model.transition * x + &model.noise_chol * &z
    };
    for _ in 0..model.burn_in() {
        x = step(&x, rng);
    }
    (0..n)
        .map(|_| {
            x = step(&x, rng);
            x.clone()
        })
        .collect()
}

/// Trajectory of `n` samples after burn-in, one channel per coordinate. Deterministic in `seed`.
pub fn simulate(model: &VarModel, n: usize, seed: u64) -> Result<MultichannelRecording> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let states = simulate_with(model, n, &mut rng);
    let channels = model
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| TimeSeries::new(l.clone(), SIM_RATE_HZ, states.iter().map(|s| s[i]).collect()))
        .collect::<Result<Vec<_>>>()?;
    MultichannelRecording::new(channels, "sim", seed.to_string(), Condition::Unlabeled)
}

/// `Var(y | s)` from a joint covariance, by solving the normal equations of the regression of y on s.
fn residual_variance(cov: &DMatrix<f64>, y: usize, given: &[usize]) -> Result<f64> {
    let syy = cov[(y, y)];
    if given.is_empty() {
        return Ok(syy);
    }
    let sss = cov.select_rows(given).select_columns(given);
    let ssy = DVector::from_iterator(given.len(), given.iter().map(|&i| cov[(i, y)]));
    let beta = sss
        .lu()
        .solve(&ssy)
        .ok_or_else(|| Error::DegenerateCovariance("conditioning covariance is singular".into()))?;
    Ok(syy - ssy.dot(&beta))
}

/// Exact transfer entropy `source -> target` under the stationary law of `model`, in bits.
pub fn analytic_te(model: &VarModel, source_idx: usize, target_idx: usize, e: &EmbedSpec) -> Result<f64> {
    e.validate()?;
    let d = model.dimension();
    if source_idx >= d || target_idx >= d {
        return Err(Error::InvalidInput(format!("coordinate index out of range for a {d}-dimensional model")));
    }
    if source_idx == target_idx {
        return Err(Error::InvalidInput("source and target must differ".into()));
    }
    let (k, l, delay) = (e.source_history_len, e.target_history_len, e.source_target_delay);
    // (coordinate, lag) pairs: target past, source past, target now
    let mut vars: Vec<(usize, usize)> = (1..=l).map(|lag| (target_idx, lag)).collect();
    vars.extend((0..k).map(|i| (source_idx, delay + i)));
    vars.push((target_idx, 0));
    let max_lag = vars.iter().map(|v| v.1).max().unwrap_or(0);
    let gamma = model.autocovariances(max_lag);
    let p = vars.len();
    let cov = DMatrix::from_fn(p, p, |i, j| {
        let ((a, la), (b, lb)) = (vars[i], vars[j]);
        // Cov(x_a[t - la], x_b[t - lb])
        if la <= lb {
            gamma[lb - la][(a, b)]
        } else {
            gamma[la - lb][(b, a)]
        }
    });
    let y = p - 1;
    let past_target: Vec<usize> = (0..l).collect();
    let all_past: Vec<usize> = (0..l + k).collect();
    let v_reduced = residual_variance(&cov, y, &past_target)?;
    let v_full = residual_variance(&cov, y, &all_past)?;
    if !(v_full > 0.0 && v_reduced > 0.0) {
        return Err(Error::DegenerateCovariance("target is deterministic given its past".into()));
    }
    let bits = 0.5 * (v_reduced / v_full).ln() / LN_2;
    // rounding in the two regressions leaves ~1e-16 where the law gives exactly zero
    Ok(if bits.abs() < 1e-12 { 0.0 } else { bits.max(0.0) })
}

/// Driver `phi`, `K` intermediate processes and a target `Z`:
///
/// ```text
/// phi[t]  = a_phi phi[t-1] + e
/// X_i[t]  = a_x X_i[t-1] + c_i phi[t-1] + e
/// Z[t]    = a_z Z[t-1] + sum_i w_i X_i[t-1] + e
/// ```
///
/// with unit innovation variances. Coordinates are ordered `phi, X_1..X_K, Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivenSystem {
    pub driver_ar: f64,
    pub source_ar: f64,
    pub target_ar: f64,
    pub driver_to_source: Vec<f64>,
    pub source_to_target: Vec<f64>,
}

impl DrivenSystem {
    pub fn model(&self) -> Result<VarModel> {
        let k = self.driver_to_source.len();
        if self.source_to_target.len() != k || k == 0 {
            return Err(Error::ShapeMismatch("need matching, non-empty coupling vectors".into()));
        }
        let d = k + 2;
        let mut a = DMatrix::zeros(d, d);
        a[(0, 0)] = self.driver_ar;
        for i in 0..k {
            a[(i + 1, i + 1)] = self.source_ar;
            a[(i + 1, 0)] = self.driver_to_source[i];
            a[(d - 1, i + 1)] = self.source_to_target[i];
        }
        a[(d - 1, d - 1)] = self.target_ar;
        let mut labels = vec!["phi".to_string()];
        labels.extend((1..=k).map(|i| format!("X{i}")));
        labels.push("Z".into());
        VarModel::new(a, DMatrix::identity(d, d), labels)
    }
}

/// Synthetic competing-talker experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AadScenario {
    pub n_subjects: usize,
    pub n_trials: usize,
    pub n_samples: usize,
    pub n_channels: usize,
    pub attended_coupling: f64,
    pub distractor_coupling: f64,
    /// Standard deviation of each channel's private AR(1) noise.
    pub observation_noise: f64,
    /// Standard deviation of the shared (volume-conduction) source mixed into every channel.
    pub volume_conduction: f64,
    /// Log-normal spread of per-subject and per-trial coupling gains.
    pub gain_spread: f64,
    pub rate_hz: f64,
    pub seed: u64,
}

impl Default for AadScenario {
    fn default() -> Self {
        Self {
            n_subjects: 15,
            n_trials: 60,
            n_samples: 3200,
            n_channels: 6,
            attended_coupling: 1.0,
            distractor_coupling: 0.3,
            observation_noise: 2.0,
            volume_conduction: 1.0,
            gain_spread: 0.5,
            rate_hz: 64.0,
            seed: 1,
        }
    }
}

impl AadScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n_samples <= 100 {
            return bad(format!("n_samples must exceed 100, got {}", self.n_samples));
        }
        if self.n_subjects == 0 || self.n_trials == 0 {
            return bad("need at least one subject and one trial".into());
        }
        if self.n_channels == 0 || self.n_channels > TEN_TWENTY_64.len() {
            return bad(format!("n_channels must be in 1..=64, got {}", self.n_channels));
        }
        if !(self.attended_coupling >= 0.0 && self.distractor_coupling >= 0.0) {
            return bad("couplings must be nonnegative".into());
        }
        if !(self.observation_noise > 0.0) {
            return bad("observation_noise must be positive".into());
        }
        if !(self.volume_conduction >= 0.0 && self.gain_spread >= 0.0) {
            return bad("volume_conduction and gain_spread must be nonnegative".into());
        }
        if !(self.rate_hz > 0.0) {
            return Err(Error::InvalidRate(format!("{} Hz", self.rate_hz)));
        }
        Ok(())
    }

    /// Left-temporal labels first, then the rest of the 64-channel layout.
    pub fn channel_labels(&self) -> Vec<String> {
        LEFT_TEMPORAL
            .iter()
            .chain(TEN_TWENTY_64.iter().filter(|l| !LEFT_TEMPORAL.contains(l)))
            .take(self.n_channels)
            .map(|l| l.to_string())
            .collect()
    }
}

/// One synthetic trial: both normalised envelopes and the response channels.
#[derive(Debug, Clone, PartialEq)]
pub struct AadTrial {
    pub attended: TimeSeries,
    pub distractor: TimeSeries,
    pub eeg: MultichannelRecording,
}

pub fn subject_id(i: usize) -> String {
    format!("S{:02}", i + 1)
}

pub fn trial_id(i: usize) -> String {
    format!("T{:03}", i + 1)
}

/// Slow envelope: AR(2) with poles at radius 0.9 around 3 cycles per second.
fn envelope_model(rate_hz: f64) -> Result<VarModel> {
    let r = 0.9;
    let theta = 2.0 * PI * 3.0 / rate_hz;
    let a = DMatrix::from_row_slice(2, 2, &[2.0 * r * theta.cos(), -r * r, 1.0, 0.0]);
    let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-12]);
    VarModel::unlabeled(a, q)
}

/// Stationary AR(1) with coefficient `phi` and marginal standard deviation `sd`.
fn ar1(n: usize, phi: f64, sd: f64, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let innov = sd * (1.0 - phi * phi).sqrt();
    let mut x = sd * gauss(rng);
    (0..n)
        .map(|_| {
            x = phi * x + innov * gauss(rng);
            x
        })
        .collect()
}

const MAX_LATENCY: usize = 8;
const MIN_LATENCY: usize = 3;

/// All trials, ordered by subject then trial. Deterministic in `sc.seed`.
pub fn make_aad_scenario(sc: &AadScenario) -> Result<Vec<AadTrial>> {
    sc.validate()?;
    let env_model = envelope_model(sc.rate_hz)?;
    let labels = sc.channel_labels();
    let mut out = Vec::with_capacity(sc.n_subjects * sc.n_trials);
    for subj in 0..sc.n_subjects {
        // subject layout: stream (subject + 1) << 32
        let mut srng = substream(sc.seed, ((subj as u64) + 1) << 32);
        let latency: Vec<usize> = (0..sc.n_channels)
            .map(|_| {
                MIN_LATENCY + (rand::Rng::random::<f64>(&mut srng) * (MAX_LATENCY - MIN_LATENCY + 1) as f64) as usize
            })
            .map(|d| d.min(MAX_LATENCY))
            .collect();
        let gain: Vec<f64> = (0..sc.n_channels).map(|_| 0.5 + 0.5 * rand::Rng::random::<f64>(&mut srng)).collect();
        let mixing: Vec<f64> = (0..sc.n_channels).map(|_| 0.5 + 0.5 * rand::Rng::random::<f64>(&mut srng)).collect();
        let subject_gain = (sc.gain_spread * gauss(&mut srng)).exp();

        for trial in 0..sc.n_trials {
            let mut rng = substream(sc.seed, (((subj as u64) + 1) << 32) | (trial as u64 + 1));
            let total = sc.n_samples + MAX_LATENCY;
            let envelope = |rng: &mut ChaCha20Rng| -> Vec<f64> {
                let states = simulate_with(&env_model, total, rng);
                let raw: Vec<f64> = states.iter().map(|s| s[0]).collect();
                let sd = crate::signals::population_variance(&raw).sqrt();
                let m = crate::signals::mean(&raw);
                raw.into_iter().map(|v| (v - m) / sd).collect()
            };
            let att = envelope(&mut rng);
            let dst = envelope(&mut rng);
            let g_att = sc.attended_coupling * subject_gain * (sc.gain_spread * gauss(&mut rng)).exp();
            let g_dst = sc.distractor_coupling * subject_gain * (sc.gain_spread * gauss(&mut rng)).exp();
            let shared = ar1(sc.n_samples, 0.8, sc.volume_conduction, &mut rng);

            let channels = (0..sc.n_channels)
                .map(|c| {
                    let private = ar1(sc.n_samples, 0.7, sc.observation_noise, &mut rng);
                    let samples = (0..sc.n_samples)
                        .map(|t| {
                            let src = t + MAX_LATENCY - latency[c];
                            gain[c] * (g_att * att[src] + g_dst * dst[src]) + private[t] + mixing[c] * shared[t]
                        })
                        .collect();
                    TimeSeries::new(labels[c].clone(), sc.rate_hz, samples)
                })
                .collect::<Result<Vec<_>>>()?;
            let eeg = MultichannelRecording::new(channels, subject_id(subj), trial_id(trial), Condition::Unlabeled)?;
            let attended = normalize(&TimeSeries::new("attended", sc.rate_hz, att[MAX_LATENCY..].to_vec())?)?;
            let distractor = normalize(&TimeSeries::new("distractor", sc.rate_hz, dst[MAX_LATENCY..].to_vec())?)?;
            out.push(AadTrial { attended, distractor, eeg });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ar_example() -> VarModel {
        // x white; z[t] = 0.9 z[t-1] + 0.5 x[t-1] + e
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.9]);
        VarModel::new(a, DMatrix::identity(2, 2), vec!["x".into(), "z".into()]).unwrap()
    }

    #[test]
    fn rejects_unstable_and_malformed() {
        let a = DMatrix::from_row_slice(1, 1, &[1.01]);
        assert!(matches!(VarModel::unlabeled(a, DMatrix::identity(1, 1)), Err(Error::UnstableModel(_))));
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(VarModel::unlabeled(DMatrix::zeros(2, 2), q).is_err());
        assert!(VarModel::unlabeled(DMatrix::zeros(2, 2), DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn lyapunov_scalar_and_residual() {
        let m = VarModel::unlabeled(DMatrix::from_element(1, 1, 0.9), DMatrix::identity(1, 1)).unwrap();
        let s = m.stationary_covariance();
        assert!((s[(0, 0)] - 1.0 / (1.0 - 0.81)).abs() < 1e-12);
        let m = ar_example();
        assert!(m.lyapunov_residual(&m.stationary_covariance()) < 1e-12);
    }

    #[test]
    fn decoupled_coordinates_have_zero_te() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.3]);
        let m = VarModel::unlabeled(a, DMatrix::identity(2, 2)).unwrap();
        let e = EmbedSpec::new(3, 2, 1).unwrap();
        assert_eq!(analytic_te(&m, 0, 1, &e).unwrap(), 0.0);
        assert_eq!(analytic_te(&m, 1, 0, &e).unwrap(), 0.0);
    }

    #[test]
    fn reverse_direction_is_zero() {
        let e = EmbedSpec::new(1, 1, 1).unwrap();
        assert_eq!(analytic_te(&ar_example(), 1, 0, &e).unwrap(), 0.0);
    }

    #[test]
    fn ar_example_closed_form() {
        // With x white and k = l = 1: Var(z|z_{t-1}) = 1 + 0.25 Var(x) and Var(z|z_{t-1}, x_{t-1}) = 1,
        // because x_{t-1} is independent of z_{t-1}.
        let e = EmbedSpec::new(1, 1, 1).unwrap();
        let te = analytic_te(&ar_example(), 0, 1, &e).unwrap();
        let expected = 0.5 * (1.0f64 + 0.25).log2();
        assert!((te - expected).abs() < 1e-12, "{te} vs {expected}");
    }

    #[test]
    fn markov_source_gains_nothing_from_longer_history() {
        let e1 = EmbedSpec::new(1, 1, 1).unwrap();
        let e4 = EmbedSpec::new(4, 1, 1).unwrap();
        let m = ar_example();
        assert!((analytic_te(&m, 0, 1, &e1).unwrap() - analytic_te(&m, 0, 1, &e4).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn simulate_is_deterministic() {
        let m = ar_example();
        assert_eq!(simulate(&m, 500, 9).unwrap(), simulate(&m, 500, 9).unwrap());
        assert_ne!(simulate(&m, 500, 9).unwrap(), simulate(&m, 500, 10).unwrap());
    }

    #[test]
    fn driven_system_layout() {
        let sys = DrivenSystem {
            driver_ar: 0.5,
            source_ar: 0.3,
            target_ar: 0.2,
            driver_to_source: vec![0.6, 0.4],
            source_to_target: vec![0.5, 0.5],
        };
        let m = sys.model().unwrap();
        assert_eq!(m.labels(), &["phi", "X1", "X2", "Z"]);
        assert_eq!(m.transition()[(3, 1)], 0.5);
        assert_eq!(m.transition()[(1, 0)], 0.6);
    }

    #[test]
    fn scenario_shapes_and_determinism() {
        let sc = AadScenario { n_subjects: 2, n_trials: 3, n_samples: 400, seed: 5, ..Default::default() };
        let a = make_aad_scenario(&sc).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a[4].eeg.subject_id, "S02");
        assert_eq!(a[4].eeg.trial_id, "T002");
        assert_eq!(a[0].eeg.labels(), LEFT_TEMPORAL.to_vec());
        assert_eq!(a[0].attended.len(), 400);
        assert_eq!(a, make_aad_scenario(&sc).unwrap());
        let b = make_aad_scenario(&AadScenario { seed: 6, ..sc.clone() }).unwrap();
        assert_ne!(a[0].eeg, b[0].eeg);
        assert!(make_aad_scenario(&AadScenario { n_samples: 50, ..sc }).is_err());
    }
}
