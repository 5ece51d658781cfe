//! Distortion, rate densities, distortion-rate curves and linear fits.
//!
//! Distortion is `D = 1 - |rho|` and is reported in dB as `10 log10(D)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::redundancy::RateBundle;
use crate::special::student_t_two_sided;
use crate::{Condition, Error, Result};

/// Default density level defining the support of a rate distribution.
pub const DEFAULT_SUPPORT_LEVEL: f64 = 0.01;
/// Default distortion-rate bin width, bits.
pub const DEFAULT_BIN_WIDTH: f64 = 0.005;
/// Default spacing of bin centres, bits (50% overlap).
pub const DEFAULT_BIN_STRIDE: f64 = 0.0025;
/// Number of points in the default density grid.
pub const KDE_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RateKind {
    #[serde(rename = "S_to_Shat")]
    SToShat,
    #[serde(rename = "E_to_Shat")]
    EToShat,
    #[serde(rename = "S_to_E")]
    SToE,
    #[serde(rename = "Rmin")]
    Rmin,
}

impl RateKind {
    pub const ALL: [RateKind; 4] = [RateKind::SToShat, RateKind::SToE, RateKind::EToShat, RateKind::Rmin];

    pub fn as_str(&self) -> &'static str {
        match self {
            RateKind::SToShat => "S_to_Shat",
            RateKind::EToShat => "E_to_Shat",
            RateKind::SToE => "S_to_E",
            RateKind::Rmin => "Rmin",
        }
    }

    pub fn of(&self, b: &RateBundle) -> f64 {
        match self {
            RateKind::SToShat => b.r_s_to_shat,
            RateKind::EToShat => b.r_e_to_shat,
            RateKind::SToE => b.r_s_to_e,
            RateKind::Rmin => b.r_min,
        }
    }
}

impl std::str::FromStr for RateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RateKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown rate kind `{s}`")))
    }
}

impl std::fmt::Display for RateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateDistortionPoint {
    pub rate: f64,
    pub distortion: f64,
    /// `10 log10(distortion)`; absent when the distortion is exactly 0.
    pub distortion_db: Option<f64>,
    pub condition: Condition,
    pub subject_id: String,
    pub trial_id: String,
    pub rate_kind: RateKind,
}

impl RateDistortionPoint {
    /// One point per rate kind for a trial with reconstruction correlation `rho`.
    pub fn from_bundle(b: &RateBundle, rho: f64) -> Result<Vec<Self>> {
        let d = distortion(rho)?;
        let db = if d > 0.0 { Some(to_db(d)?) } else { None };
        Ok(RateKind::ALL
            .iter()
            .map(|k| RateDistortionPoint {
                rate: k.of(b),
                distortion: d,
                distortion_db: db,
                condition: b.condition,
                subject_id: b.subject_id.clone(),
                trial_id: b.trial_id.clone(),
                rate_kind: *k,
            })
            .collect())
    }
}

/// `1 - |rho|`.
pub fn distortion(rho: f64) -> Result<f64> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::OutOfRange(format!("correlation {rho} outside [-1, 1]")));
    }
    Ok(1.0 - rho.abs())
}

/// `10 log10(d)` for `d > 0`.
pub fn to_db(d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::NonpositiveDistortion(d));
    }
    Ok(10.0 * d.log10())
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn check_kde_samples(samples: &[f64]) -> Result<f64> {
    if samples.len() < 5 {
        return Err(Error::TooFewSamples { needed: 5, got: samples.len() });
    }
    let sd = sample_sd(samples);
    if !(sd > 0.0) {
        return Err(Error::ZeroVarianceSignal("rate samples".into()));
    }
    Ok(sd)
}

/// Silverman's rule `1.06 sd n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let sd = check_kde_samples(samples)?;
    Ok(1.06 * sd * (samples.len() as f64).powf(-0.2))
}

/// `KDE_GRID_POINTS` evenly spaced points from `min - 3h` to `max + 3h`.
pub fn kde_grid(samples: &[f64]) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(samples)?;
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (KDE_GRID_POINTS - 1) as f64;
    Ok((0..KDE_GRID_POINTS).map(|i| lo + i as f64 * step).collect())
}

/// Gaussian-kernel density estimate with Silverman bandwidth, evaluated on `grid`.
pub fn kde_pdf(samples: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(samples)?;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * PI).sqrt());
    Ok(grid
        .iter()
        .map(|&g| {
            samples
                .iter()
                .map(|&x| {
                    let z = (g - x) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect())
}

/// Largest grid point whose density exceeds `level`.
pub fn support_threshold(grid: &[f64], density: &[f64], level: f64) -> Result<f64> {
    if grid.len() != density.len() {
        return Err(Error::ShapeMismatch(format!("grid has {} points, density {}", grid.len(), density.len())));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("density grid must be strictly increasing".into()));
    }
    grid.iter().zip(density).rev().find(|(_, &d)| d > level).map(|(&g, _)| g).ok_or(Error::EmptySupport { level })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdBin {
    pub center: f64,
    pub mean_db: f64,
    pub count: usize,
}

/// Average `distortion_db` over overlapping rate windows `[c - width/2, c + width/2]`.
///
/// Centres start at the smallest rate and advance by `stride` until the largest
/// rate is reached. Empty windows and points without a dB value are skipped.
pub fn bin_rd(points: &[RateDistortionPoint], width: f64, stride: f64) -> Result<Vec<RdBin>> {
    if !(width > 0.0 && stride > 0.0 && width.is_finite() && stride.is_finite()) {
        return Err(Error::InvalidInput(format!("bin width {width} and stride {stride} must be positive")));
    }
    let pts: Vec<(f64, f64)> = points.iter().filter_map(|p| p.distortion_db.map(|db| (p.rate, db))).collect();
    if pts.is_empty() {
        return Err(Error::NoPoints);
    }
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let n_centres = ((hi - lo) / stride).ceil() as usize + 1;
    let half = width / 2.0;
    Ok((0..n_centres)
        .filter_map(|i| {
            let center = lo + i as f64 * stride;
            let (sum, count) = pts
                .iter()
                .filter(|(r, _)| (r - center).abs() <= half)
                .fold((0.0, 0usize), |(s, c), (_, db)| (s + db, c + 1));
            (count > 0).then(|| RdBin { center, mean_db: sum / count as f64, count })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Two-sided p-value of the slope t-test with `n - 2` degrees of freedom.
    pub p_value: f64,
    pub n_points: usize,
    pub r_squared: f64,
}

/// Ordinary least squares `y = intercept + slope x` with a t-test on the slope.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch(format!("{} x values, {} y values", xs.len(), ys.len())));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let spread = xs.iter().fold(0.0f64, |m, x| m.max((x - mx).abs()));
    if !(sxx > 0.0) || spread <= 1e-14 * mx.abs() {
        return Err(Error::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>().max(0.0);
    let df = nf - 2.0;
    let p_value = if sse == 0.0 {
        if slope == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let se = (sse / df / sxx).sqrt();
        student_t_two_sided(slope / se, df)
    };
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 0.0 };
    Ok(LinearFit { slope, intercept, p_value, n_points: n, r_squared })
}

/// Which points the linear model is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Bin centres against mean distortion (dB) inside the support.
    #[default]
    BinnedMeans,
    /// Every point inside the support.
    RawPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub support_level: f64,
    pub bin_width: f64,
    pub bin_stride: f64,
    pub fit_mode: FitMode,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            support_level: DEFAULT_SUPPORT_LEVEL,
            bin_width: DEFAULT_BIN_WIDTH,
            bin_stride: DEFAULT_BIN_STRIDE,
            fit_mode: FitMode::BinnedMeans,
        }
    }
}

/// Everything derived from the points of one (condition, rate kind) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveAnalysis {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub support_threshold: f64,
    pub n_points: usize,
    pub n_in_support: usize,
    /// Points with zero distortion; they have no dB value and are left out of curves and fits.
    pub n_zero_distortion: usize,
    pub bins: Vec<RdBin>,
    pub fit: LinearFit,
}

/// Density, support filter, binned curve and linear fit for one cell.
pub fn analyze_curve(points: &[RateDistortionPoint], cfg: &CurveConfig) -> Result<CurveAnalysis> {
    let rates: Vec<f64> = points.iter().map(|p| p.rate).collect();
    let grid = kde_grid(&rates)?;
    let density = kde_pdf(&rates, &grid)?;
    let threshold = support_threshold(&grid, &density, cfg.support_level)?;
    let inside: Vec<RateDistortionPoint> = points.iter().filter(|p| p.rate <= threshold).cloned().collect();
    let bins = bin_rd(&inside, cfg.bin_width, cfg.bin_stride)?;
    let fit = match cfg.fit_mode {
        FitMode::BinnedMeans => {
            let xs: Vec<f64> = bins.iter().map(|b| b.center).collect();
            let ys: Vec<f64> = bins.iter().map(|b| b.mean_db).collect();
            fit_linear(&xs, &ys)?
        }
        FitMode::RawPoints => {
            let (xs, ys): (Vec<f64>, Vec<f64>) =
                inside.iter().filter_map(|p| p.distortion_db.map(|db| (p.rate, db))).unzip();
            fit_linear(&xs, &ys)?
        }
    };
    Ok(CurveAnalysis {
        bandwidth: silverman_bandwidth(&rates)?,
        grid,
        density,
        support_threshold: threshold,
        n_points: points.len(),
        n_in_support: inside.len(),
        n_zero_distortion: points.iter().filter(|p| p.distortion_db.is_none()).count(),
        bins,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gauss;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    fn point(rate: f64, db: f64) -> RateDistortionPoint {
        RateDistortionPoint {
            rate,
            distortion: 10f64.powf(db / 10.0),
            distortion_db: Some(db),
            condition: Condition::Attended,
            subject_id: "S01".into(),
            trial_id: "T001".into(),
            rate_kind: RateKind::SToShat,
        }
    }

    #[test]
    fn distortion_examples() {
        assert_eq!(distortion(1.0).unwrap(), 0.0);
        assert_eq!(distortion(-0.5).unwrap(), 0.5);
        assert_eq!(distortion(0.0).unwrap(), 1.0);
        assert!(matches!(distortion(1.5), Err(Error::OutOfRange(_))));
        assert!(distortion(f64::NAN).is_err());
        for r in [-0.9, -0.3, 0.1, 0.77] {
            assert_eq!(distortion(r).unwrap(), distortion(-r).unwrap());
        }
    }

    #[test]
    fn db_examples() {
        assert_eq!(to_db(1.0).unwrap(), 0.0);
        assert!((to_db(0.75).unwrap() + 1.2494).abs() < 1e-4);
        assert!(matches!(to_db(0.0), Err(Error::NonpositiveDistortion(_))));
    }

    #[test]
    fn kde_standard_normal() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let at_zero = kde_pdf(&xs, &[0.0]).unwrap()[0];
        assert!((at_zero - 0.3989).abs() < 0.01, "{at_zero}");
    }

    #[test]
    fn kde_integrates_to_one_and_is_nonnegative() {
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        let xs: Vec<f64> = (0..500).map(|_| gauss(&mut rng) * 0.02 + 0.1).collect();
        let sd = sample_sd(&xs);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let m = 4001;
        let grid: Vec<f64> = (0..m).map(|i| mean - 6.0 * sd + 12.0 * sd * i as f64 / (m - 1) as f64).collect();
        let dens = kde_pdf(&xs, &grid).unwrap();
        assert!(dens.iter().all(|d| *d >= 0.0));
        let integral: f64 =
            grid.windows(2).zip(dens.windows(2)).map(|(g, d)| (g[1] - g[0]) * (d[0] + d[1]) / 2.0).sum();
        assert!((integral - 1.0).abs() < 0.01, "{integral}");
    }

    #[test]
    fn kde_rejects_degenerate_samples() {
        assert!(matches!(kde_pdf(&[1.0; 10], &[1.0]), Err(Error::ZeroVarianceSignal(_))));
        assert!(matches!(kde_pdf(&[1.0, 2.0], &[1.0]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn default_grid_layout() {
        let xs = [0.01, 0.02, 0.03, 0.05, 0.08];
        let g = kde_grid(&xs).unwrap();
        let h = silverman_bandwidth(&xs).unwrap();
        assert_eq!(g.len(), KDE_GRID_POINTS);
        assert!((g[0] - (0.01 - 3.0 * h)).abs() < 1e-15);
        assert!((g[KDE_GRID_POINTS - 1] - (0.08 + 3.0 * h)).abs() < 1e-12);
    }

    #[test]
    fn support_of_analytic_density() {
        // Gaussian bump at 3.0, sd 0.4: density drops below 0.01 near 4.21
        let (peak, sigma) = (3.0, 0.4);
        let pdf = |x: f64| (-(x - peak).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt());
        let grid: Vec<f64> = (0..=800).map(|i| i as f64 * 0.01).collect();
        let dens: Vec<f64> = grid.iter().map(|&x| pdf(x)).collect();
        let crossing = peak + sigma * (2.0 * (1.0 / (0.01 * sigma * (2.0 * PI).sqrt())).ln()).sqrt();
        assert!((crossing - 4.2).abs() < 0.02);
        let t = support_threshold(&grid, &dens, 0.01).unwrap();
        assert!(t <= crossing && crossing - t <= 0.01 + 1e-12, "{t} vs {crossing}");
    }

    #[test]
    fn support_edge_cases() {
        let grid = [0.0, 1.0, 2.0];
        assert_eq!(support_threshold(&grid, &[0.1, 0.2, 0.05], 0.0).unwrap(), 2.0);
        assert!(matches!(support_threshold(&grid, &[0.1, 0.2, 0.05], 0.5), Err(Error::EmptySupport { .. })));
        assert!(support_threshold(&[0.0, 0.0, 1.0], &[1.0; 3], 0.0).is_err());
    }

    #[test]
    fn bin_examples() {
        let bins = bin_rd(&[point(0.001, -1.0), point(0.002, -3.0)], 0.005, 0.0025).unwrap();
        assert_eq!(bins[0].count, 2);
        assert!((bins[0].mean_db + 2.0).abs() < 1e-12);

        let single = bin_rd(&[point(0.04, -2.5)], 0.005, 0.0025).unwrap();
        assert_eq!(single, vec![RdBin { center: 0.04, mean_db: -2.5, count: 1 }]);

        assert!(matches!(bin_rd(&[], 0.005, 0.0025), Err(Error::NoPoints)));
        assert!(bin_rd(&[point(0.0, 0.0)], 0.0, 0.1).is_err());
    }

    #[test]
    fn binned_trend_matches_generating_line() {
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let u = Uniform::new(0.0, 0.1).unwrap();
        let pts: Vec<_> = (0..5000)
            .map(|_| {
                let r: f64 = u.sample(&mut rng);
                point(r, -3.0 - 40.0 * r + 0.5 * gauss(&mut rng))
            })
            .collect();
        let bins = bin_rd(&pts, 0.005, 0.0025).unwrap();
        let xs: Vec<f64> = bins.iter().map(|b| b.center).collect();
        let ys: Vec<f64> = bins.iter().map(|b| b.mean_db).collect();
        let fit = fit_linear(&xs, &ys).unwrap();
        assert!((fit.slope + 40.0).abs() < 4.0, "{}", fit.slope);
    }

    #[test]
    fn bin_count_and_coverage() {
        let mut rng = ChaCha20Rng::seed_from_u64(34);
        let u = Uniform::new(0.0, 0.05).unwrap();
        let pts: Vec<_> = (0..300).map(|_| point(u.sample(&mut rng), -1.0)).collect();
        let (width, stride) = (0.005, 0.0025);
        let bins = bin_rd(&pts, width, stride).unwrap();
        let lo = pts.iter().map(|p| p.rate).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.rate).fold(f64::NEG_INFINITY, f64::max);
        assert!(bins.len() <= ((hi - lo) / stride).ceil() as usize + 1);
        for p in &pts {
            assert!(bins.iter().any(|b| (p.rate - b.center).abs() <= width / 2.0));
        }
    }

    #[test]
    fn exact_line_fit() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let f = fit_linear(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!(f.p_value < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(f.n_points, 10);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_linear(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::DegenerateX)));
        assert!(matches!(fit_linear(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn fit_p_value_is_affine_invariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(35);
        let xs: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.3 * x + gauss(&mut rng)).collect();
        let base = fit_linear(&xs, &ys).unwrap().p_value;
        for (a, b) in [(3.0, -2.0), (-0.01, 5.0), (1e3, 1e2)] {
            let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            assert!((fit_linear(&scaled, &ys).unwrap().p_value - base).abs() < 1e-10);
        }
    }

    #[test]
    fn points_from_bundle() {
        let b = RateBundle {
            r_s_to_shat: 0.02,
            r_e_to_shat: 0.05,
            r_s_to_e: 0.03,
            r_min: 0.02,
            argmin_channel_e_to_shat: "T7".into(),
            argmin_channel_s_to_e: "C5".into(),
            condition: Condition::Distractor,
            subject_id: "S02".into(),
            trial_id: "T003".into(),
            embed: Default::default(),
        };
        let pts = RateDistortionPoint::from_bundle(&b, -0.5).unwrap();
        assert_eq!(pts.len(), 4);
        assert!(pts.iter().all(|p| p.distortion == 0.5 && p.condition == Condition::Distractor));
        let rmin = pts.iter().find(|p| p.rate_kind == RateKind::Rmin).unwrap();
        assert_eq!(rmin.rate, 0.02);
        let perfect = RateDistortionPoint::from_bundle(&b, 1.0).unwrap();
        assert!(perfect.iter().all(|p| p.distortion_db.is_none()));
    }

    #[test]
    fn rate_kind_names() {
        for k in RateKind::ALL {
            assert_eq!(k.as_str().parse::<RateKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
        }
    }
}
