//! Linear-Gaussian plug-in estimators of mutual information, conditional
//! mutual information and transfer entropy, in bits.
//!
//! For jointly Gaussian blocks
//!
//! ```text
//! I(X; Y | C) = 1/2 log2( det S_XC det S_YC / (det S_C det S_XYC) )
//! ```
//!
//! evaluated from empirical (population) covariances. Transfer entropy is the
//! special case `I(source past; target now | target past)`.

use std::f64::consts::LN_2;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::lagcov::{lagged_sums, LaggedVar};
use crate::signals::{self, TimeSeries};
use crate::{Error, Result};

/// Diagonal jitter, as a fraction of `trace / dim`, tried in order when the
/// covariance does not factorise.
const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-9, 1e-6];

/// Conditional variances below this fraction of the marginal variance are
/// treated as exact collinearity.
const RELATIVE_PIVOT_FLOOR: f64 = 1e-12;

/// Finite history embedding for transfer entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedSpec {
    /// Number of source lags `k`.
    pub source_history_len: usize,
    /// Number of target lags `l`.
    pub target_history_len: usize,
    /// Lag of the most recent source sample; at least 1 (strictly past).
    pub source_target_delay: usize,
}

impl EmbedSpec {
    pub fn new(source_history_len: usize, target_history_len: usize, source_target_delay: usize) -> Result<Self> {
        let e = Self { source_history_len, target_history_len, source_target_delay };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_history_len == 0 || self.target_history_len == 0 || self.source_target_delay == 0 {
            return Err(Error::InvalidInput(format!(
                "embedding needs k, l, delay >= 1, got k={}, l={}, delay={}",
                self.source_history_len, self.target_history_len, self.source_target_delay
            )));
        }
        Ok(())
    }

    /// Total number of jointly modelled variables (source lags, target lags, target now).
    pub fn dim(&self) -> usize {
        self.source_history_len + self.target_history_len + 1
    }

    /// Earliest time index with a complete history.
    pub fn first_row(&self) -> usize {
        (self.source_target_delay + self.source_history_len - 1).max(self.target_history_len)
    }

    pub(crate) fn min_len(&self) -> usize {
        self.source_history_len + self.target_history_len + self.source_target_delay + self.dim() + 2
    }
}

impl Default for EmbedSpec {
    /// 16 source and target lags (250 ms at 64 Hz), unit delay.
    fn default() -> Self {
        Self { source_history_len: 16, target_history_len: 16, source_target_delay: 1 }
    }
}

/// Empirical covariance plus the jitter needed to factorise it.
#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    pub matrix: DMatrix<f64>,
    pub n_samples: usize,
    /// Absolute amount added to the diagonal (0 when none was needed).
    pub jitter_applied: f64,
}

impl CovEstimate {
    /// Population covariance of the columns of `data`.
    pub fn from_columns(data: &DMatrix<f64>) -> Self {
        let n = data.nrows();
        let mut centred = data.clone();
        for mut col in centred.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
        }
        let mut matrix = centred.transpose() * &centred / n as f64;
        matrix.fill_lower_triangle_with_upper_triangle();
        Self { matrix, n_samples: n, jitter_applied: 0.0 }
    }
}

/// Conditional mutual information together with estimator metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmiEstimate {
    pub bits: f64,
    /// First-order plug-in bias `dim_x dim_y / (2 n ln 2)`; reported, never subtracted.
    pub bias_bits: f64,
    pub n_samples: usize,
    pub jitter_applied: f64,
}

pub fn bias_estimate(dim_x: usize, dim_y: usize, n: usize) -> f64 {
    (dim_x * dim_y) as f64 / (2.0 * n as f64 * LN_2)
}

/// Conditional variances of `order`'s variables, each given those before it.
fn conditional_variances(cov: &DMatrix<f64>, order: &[usize], jitter: f64) -> Option<Vec<f64>> {
    let mut sub = cov.select_rows(order).select_columns(order);
    for i in 0..order.len() {
        sub[(i, i)] += jitter;
    }
    let chol = Cholesky::new(sub)?;
    let l = chol.l_dirty();
    Some((0..order.len()).map(|i| l[(i, i)] * l[(i, i)]).collect())
}

/// `I(X; Y | C)` from a joint covariance whose variables are indexed by the three index sets.
pub fn cmi_from_covariance(cov: &CovEstimate, x: &[usize], y: &[usize], c: &[usize]) -> Result<CmiEstimate> {
    let m = &cov.matrix;
    let dim = m.nrows();
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidInput("mutual information needs non-empty X and Y blocks".into()));
    }
    if let Some(bad) = x.iter().chain(y).chain(c).find(|&&i| i >= dim) {
        return Err(Error::ShapeMismatch(format!("variable index {bad} outside a {dim}x{dim} covariance")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateCovariance("covariance has non-finite entries".into()));
    }

    let cxy: Vec<usize> = c.iter().chain(x).chain(y).copied().collect();
    let cy: Vec<usize> = c.iter().chain(y).copied().collect();
    let scale = (0..dim).map(|i| m[(i, i)]).sum::<f64>() / dim as f64;

    for eps in JITTER_LADDER {
        let added = eps * scale;
        let (Some(full), Some(partial)) = (conditional_variances(m, &cxy, added), conditional_variances(m, &cy, added))
        else {
            continue;
        };
        for (pivots, order) in [(&full, &cxy), (&partial, &cy)] {
            for (&d, &var) in pivots.iter().zip(order.iter()) {
                // a conditional variance at the jitter scale is an artefact of the jitter
                let floor = (10.0 * added).max(RELATIVE_PIVOT_FLOOR * m[(var, var)]);
                if !(d > floor) {
                    return Err(Error::DegenerateCovariance(format!(
                        "variable {var} is (numerically) a linear function of the variables before it"
                    )));
                }
            }
        }
        // log det S_YC - log det S_C  minus  log det S_XYC - log det S_XC
        let y_given_c: f64 = partial[c.len()..].iter().map(|d| d.ln()).sum();
        let y_given_cx: f64 = full[c.len() + x.len()..].iter().map(|d| d.ln()).sum();
        let nats = 0.5 * (y_given_c - y_given_cx);
        if !nats.is_finite() {
            return Err(Error::DegenerateCovariance("determinant ratio is not finite".into()));
        }
        return Ok(CmiEstimate {
            bits: (nats / LN_2).max(0.0),
            bias_bits: bias_estimate(x.len(), y.len(), cov.n_samples),
            n_samples: cov.n_samples,
            jitter_applied: cov.jitter_applied + added,
        });
    }
    Err(Error::DegenerateCovariance(format!(
        "covariance not positive definite after jitter of {:e} x trace/dim",
        JITTER_LADDER[JITTER_LADDER.len() - 1]
    )))
}

fn check_blocks(blocks: &[&DMatrix<f64>]) -> Result<usize> {
    let n = blocks[0].nrows();
    if blocks.iter().any(|b| b.nrows() != n && b.ncols() > 0) {
        return Err(Error::ShapeMismatch("blocks must share the same row count".into()));
    }
    if blocks.iter().any(|b| b.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput("blocks contain non-finite values".into()));
    }
    let dim: usize = blocks.iter().map(|b| b.ncols()).sum();
    if n < dim + 2 {
        return Err(Error::SeriesTooShort { needed: dim + 1, got: n });
    }
    Ok(n)
}

/// `I(X; Y | C)` in bits for sample blocks (rows are observations). `cond` may have zero columns.
pub fn gaussian_cmi_estimate(x: &DMatrix<f64>, y: &DMatrix<f64>, cond: &DMatrix<f64>) -> Result<CmiEstimate> {
    let n = check_blocks(&[x, y, cond])?;
    let (dc, dx, dy) = (cond.ncols(), x.ncols(), y.ncols());
    let mut joint = DMatrix::zeros(n, dc + dx + dy);
    if dc > 0 {
        joint.columns_mut(0, dc).copy_from(cond);
    }
    joint.columns_mut(dc, dx).copy_from(x);
    joint.columns_mut(dc + dx, dy).copy_from(y);
    let cov = CovEstimate::from_columns(&joint);
    let c_idx: Vec<usize> = (0..dc).collect();
    let x_idx: Vec<usize> = (dc..dc + dx).collect();
    let y_idx: Vec<usize> = (dc + dx..dc + dx + dy).collect();
    cmi_from_covariance(&cov, &x_idx, &y_idx, &c_idx)
}

pub fn gaussian_cmi(x: &DMatrix<f64>, y: &DMatrix<f64>, cond: &DMatrix<f64>) -> Result<f64> {
    gaussian_cmi_estimate(x, y, cond).map(|e| e.bits)
}

pub fn mutual_information(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    gaussian_cmi(x, y, &DMatrix::zeros(x.nrows(), 0))
}

/// Transfer entropy `source -> target` with its bias estimate and sample count.
pub fn transfer_entropy_estimate(source: &TimeSeries, target: &TimeSeries, e: &EmbedSpec) -> Result<CmiEstimate> {
    e.validate()?;
    if source.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "source `{}` has {} samples, target `{}` has {}",
            source.label(),
            source.len(),
            target.label(),
            target.len()
        )));
    }
    let n = source.len();
    if n <= e.min_len() {
        return Err(Error::SeriesTooShort { needed: e.min_len(), got: n });
    }
    let standardise = |s: &TimeSeries| {
        signals::normalize(s)
            .map(TimeSeries::into_samples)
            .map_err(|_| Error::DegenerateCovariance(format!("series `{}` is constant", s.label())))
    };
    let src = standardise(source)?;
    let tgt = standardise(target)?;

    let (k, l, delay) = (e.source_history_len, e.target_history_len, e.source_target_delay as i64);
    let mut vars = Vec::with_capacity(e.dim());
    vars.extend((1..=l as i64).map(|lag| LaggedVar::new(1, lag)));
    vars.extend((0..k as i64).map(|i| LaggedVar::new(0, delay + i)));
    vars.push(LaggedVar::new(1, 0));
    let sums = lagged_sums(&[&src, &tgt], &vars, e.first_row()..n);
    let cov = CovEstimate { matrix: sums.covariance(), n_samples: sums.count, jitter_applied: 0.0 };

    let c: Vec<usize> = (0..l).collect();
    let x: Vec<usize> = (l..l + k).collect();
    cmi_from_covariance(&cov, &x, &[l + k], &c)
}

/// Transfer entropy `source -> target` in bits.
pub fn transfer_entropy(source: &TimeSeries, target: &TimeSeries, e: &EmbedSpec) -> Result<f64> {
    transfer_entropy_estimate(source, target, e).map(|est| est.bits)
}
