//! Cross-product sums of lagged copies of a few series, computed from prefix
//! sums in O(series length x distinct lag differences).

use std::collections::HashMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

/// `series[t - shift]` as a function of the row time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LaggedVar {
    pub series: usize,
    pub shift: i64,
}

impl LaggedVar {
    pub fn new(series: usize, shift: i64) -> Self {
        Self { series, shift }
    }
}

/// Raw first and second moments of a set of lagged variables over a row range.
#[derive(Debug, Clone)]
pub(crate) struct LaggedSums {
    /// `sums[(i, j)] = sum_t v_i(t) v_j(t)`
    pub cross: DMatrix<f64>,
    /// `totals[i] = sum_t v_i(t)`
    pub totals: DVector<f64>,
    pub count: usize,
}

impl LaggedSums {
    /// Population covariance (divide by `count`).
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.count as f64;
        let mean = &self.totals / n;
        let mut cov = &self.cross / n - &mean * mean.transpose();
        cov.fill_lower_triangle_with_upper_triangle();
        cov
    }
}

/// Prefix sums of `a[u] * b[u + d]`, indexed from `u = lo`.
struct ProductPrefix {
    lo: i64,
    prefix: Vec<f64>,
}

impl ProductPrefix {
    fn build(a: &[f64], b: &[f64], d: i64) -> Self {
        let lo = (-d).max(0);
        let hi = (a.len() as i64).min(b.len() as i64 - d).max(lo);
        let mut prefix = Vec::with_capacity((hi - lo + 1) as usize);
        let mut acc = 0.0;
        prefix.push(0.0);
        for u in lo..hi {
            acc += a[u as usize] * b[(u + d) as usize];
            prefix.push(acc);
        }
        Self { lo, prefix }
    }

    /// `sum_{u in [u0, u1)} a[u] b[u + d]`
    fn range(&self, u0: i64, u1: i64) -> f64 {
        let i0 = (u0 - self.lo) as usize;
        let i1 = (u1 - self.lo) as usize;
        self.prefix[i1] - self.prefix[i0]
    }
}

/// Moments of `vars` over row times `rows`. Every `t - shift` must index its series.
pub(crate) fn lagged_sums(series: &[&[f64]], vars: &[LaggedVar], rows: Range<usize>) -> LaggedSums {
    let p = vars.len();
    let (t0, t1) = (rows.start as i64, rows.end as i64);
    for v in vars {
        debug_assert!(t0 - v.shift >= 0 && t1 - v.shift <= series[v.series].len() as i64);
    }

    let mut linear: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut totals = DVector::zeros(p);
    for (i, v) in vars.iter().enumerate() {
        let prefix = linear.entry(v.series).or_insert_with(|| {
            let mut acc = 0.0;
            std::iter::once(0.0)
                .chain(series[v.series].iter().map(|x| {
                    acc += x;
                    acc
                }))
                .collect()
        });
        totals[i] = prefix[(t1 - v.shift) as usize] - prefix[(t0 - v.shift) as usize];
    }

    let mut products: HashMap<(usize, usize, i64), ProductPrefix> = HashMap::new();
    let mut cross = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let (vi, vj) = (vars[i], vars[j]);
            // sum_t a[t - si] b[t - sj] = sum_u a[u] b[u + si - sj], u = t - si
            let (a, b, d, u_shift) = if vi.series < vj.series || (vi.series == vj.series && vi.shift >= vj.shift) {
                (vi.series, vj.series, vi.shift - vj.shift, vi.shift)
            } else {
                (vj.series, vi.series, vj.shift - vi.shift, vj.shift)
            };
            let pp = products.entry((a, b, d)).or_insert_with(|| ProductPrefix::build(series[a], series[b], d));
            let s = pp.range(t0 - u_shift, t1 - u_shift);
            cross[(i, j)] = s;
            cross[(j, i)] = s;
        }
    }
    LaggedSums { cross, totals, count: rows.len() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sums() {
        let a: Vec<f64> = (0..40).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.3).collect();
        let b: Vec<f64> = (0..40).map(|i| ((i * 3 % 13) as f64).sin()).collect();
        let vars = [
            LaggedVar::new(0, 0),
            LaggedVar::new(0, 3),
            LaggedVar::new(1, 1),
            LaggedVar::new(1, -2),
            LaggedVar::new(0, 3),
            LaggedVar::new(1, 5),
        ];
        let rows = 5..37;
        let series: [&[f64]; 2] = [&a, &b];
        let got = lagged_sums(&series, &vars, rows.clone());
        let value = |v: &LaggedVar, t: usize| series[v.series][(t as i64 - v.shift) as usize];
        for (i, vi) in vars.iter().enumerate() {
            let total: f64 = rows.clone().map(|t| value(vi, t)).sum();
            assert!((got.totals[i] - total).abs() < 1e-12);
            for (j, vj) in vars.iter().enumerate() {
                let direct: f64 = rows.clone().map(|t| value(vi, t) * value(vj, t)).sum();
                assert!((got.cross[(i, j)] - direct).abs() < 1e-12, "({i},{j})");
            }
        }
        assert_eq!(got.count, rows.len());
    }
}
