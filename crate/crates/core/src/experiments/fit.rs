use super::survival::SurvivalCurve;
use super::ExperimentError;
use serde::Serialize;

/// Minimum exceedances per grid point used in a fit.
pub const MIN_EXCEEDANCES: u64 = 100;
/// Minimum grid points in a fit.
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    LoglogOls,
    Hill,
}

/// Fitted survival exponent: `P(X > n) ≈ c · n^slope`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    pub slope: f64,
    pub stderr: f64,
    pub method: FitMethod,
    /// Smallest and largest `n` used.
    pub fit_range: (u64, u64),
    /// Grid points (OLS) or raw exceedances (Hill) used.
    pub points: usize,
}

impl TailFit {
    /// `|Δslope| ≤ k · √(se₁² + se₂²)`.
    pub fn agrees_with(&self, other: &TailFit, k: f64) -> bool {
        (self.slope - other.slope).abs() <= k * self.stderr.hypot(other.stderr)
    }
}

/// OLS slope of `ln P̂(X > n)` against `ln n` over grid indices `lo..=hi`.
pub fn fit_tail_exponent(curve: &SurvivalCurve, range: (usize, usize)) -> Result<TailFit, ExperimentError> {
    let (lo, hi) = range;
    if lo > hi || hi >= curve.grid.len() {
        return Err(ExperimentError::BadGrid(format!(
            "fit range {lo}..={hi} outside grid of {} points",
            curve.grid.len()
        )));
    }
    let m = hi - lo + 1;
    if m < MIN_POINTS {
        return Err(ExperimentError::InsufficientTail(format!("{m} grid points, need {MIN_POINTS}")));
    }
    if let Some(j) = (lo..=hi).find(|&j| curve.exceedances[j] < MIN_EXCEEDANCES) {
        return Err(ExperimentError::InsufficientTail(format!(
            "{} exceedances at n = {}, need {MIN_EXCEEDANCES}",
            curve.exceedances[j], curve.grid[j]
        )));
    }
    let xs: Vec<f64> = (lo..=hi).map(|j| (curve.grid[j] as f64).ln()).collect();
    let ys: Vec<f64> = (lo..=hi).map(|j| curve.prob(j).ln()).collect();
    let mf = m as f64;
    let mx = xs.iter().sum::<f64>() / mf;
    let my = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(ExperimentError::NoDecay);
    }
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (ssr / (mf - 2.0) / sxx).sqrt();
    Ok(TailFit {
        slope,
        stderr,
        method: FitMethod::LoglogOls,
        fit_range: (curve.grid[lo], curve.grid[hi]),
        points: m,
    })
}

/// Censored Pareto MLE on exceedances of `x_min`, treating values above
/// `x_max` (and censored samples) as censored at `x_max`:
/// `α̂ = k / (Σ ln(x_i/x_min) + n_c ln(x_max/x_min))`, reported as slope `−α̂`.
pub fn hill_estimate(samples: &[(u64, bool)], x_min: u64, x_max: u64) -> Result<TailFit, ExperimentError> {
    if x_min == 0 || x_max <= x_min {
        return Err(ExperimentError::BadInput(format!("need 0 < x_min < x_max (got {x_min}, {x_max})")));
    }
    let lmax = (x_max as f64 / x_min as f64).ln();
    let mut k = 0usize;
    let mut sum = 0.0;
    for &(v, censored) in samples {
        if v <= x_min && !censored {
            continue;
        }
        if censored || v > x_max {
            sum += lmax;
        } else {
            k += 1;
            sum += (v as f64 / x_min as f64).ln();
        }
    }
    if (k as u64) < MIN_EXCEEDANCES {
        return Err(ExperimentError::InsufficientTail(format!(
            "{k} uncensored exceedances of {x_min}, need {MIN_EXCEEDANCES}"
        )));
    }
    let alpha = k as f64 / sum;
    Ok(TailFit {
        slope: -alpha,
        stderr: alpha / (k as f64).sqrt(),
        method: FitMethod::Hill,
        fit_range: (x_min, x_max),
        points: k,
    })
}
