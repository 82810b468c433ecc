use super::ExperimentError;
use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959_963_984_540_054;

/// Geometric grid `round(base · ratio^j)`, `j = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub base: f64,
    pub ratio: f64,
    pub count: usize,
}

impl GridSpec {
    /// `base, base·10^{1/4}, …` over `decades` decades.
    pub fn quarter_decades(base: f64, decades: usize) -> Self {
        Self { base, ratio: 10f64.powf(0.25), count: 4 * decades + 1 }
    }

    pub fn points(&self) -> Result<Vec<u64>, ExperimentError> {
        if !(self.base >= 1.0) || !(self.ratio > 1.0) || self.count == 0 {
            return Err(ExperimentError::BadGrid(format!(
                "need base >= 1, ratio > 1, count >= 1 (got {}, {}, {})",
                self.base, self.ratio, self.count
            )));
        }
        let pts: Vec<u64> = (0..self.count)
            .map(|j| (self.base * self.ratio.powi(j as i32)).round() as u64)
            .collect();
        if pts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ExperimentError::BadGrid("rounded grid points are not strictly increasing".into()));
        }
        Ok(pts)
    }

    pub fn max_point(&self) -> Result<u64, ExperimentError> {
        Ok(*self.points()?.last().unwrap())
    }
}

/// Empirical `P(X > n_j)` with Wilson intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub grid: Vec<u64>,
    pub exceedances: Vec<u64>,
    pub total: u64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SurvivalCurve {
    pub fn from_counts(grid: Vec<u64>, exceedances: Vec<u64>, total: u64) -> Self {
        let (lower, upper) = exceedances.iter().map(|&k| wilson_interval(k, total)).unzip();
        Self { grid, exceedances, total, lower, upper }
    }

    pub fn prob(&self, j: usize) -> f64 {
        self.exceedances[j] as f64 / self.total as f64
    }

    pub fn probs(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|j| self.prob(j)).collect()
    }

    /// Merges counts from a disjoint set of replicates on the same grid.
    pub fn merge(&self, other: &SurvivalCurve) -> Result<SurvivalCurve, ExperimentError> {
        if self.grid != other.grid {
            return Err(ExperimentError::BadGrid("cannot merge curves on different grids".into()));
        }
        let ex = self.exceedances.iter().zip(&other.exceedances).map(|(a, b)| a + b).collect();
        Ok(SurvivalCurve::from_counts(self.grid.clone(), ex, self.total + other.total))
    }
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// Survival counts on `grid` from `(value, censored)` samples.
///
/// A censored sample's value is a lower bound: the true value is at least
/// `value`. Every grid point must lie strictly below the smallest censored
/// bound, so each censored sample is a sure exceedance.
pub fn estimate_survival(samples: &[(u64, bool)], grid: &[u64]) -> Result<SurvivalCurve, ExperimentError> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExperimentError::BadGrid("grid must be strictly increasing".into()));
    }
    if let Some(bound) = samples.iter().filter(|s| s.1).map(|s| s.0).min() {
        if let Some(&point) = grid.iter().find(|&&n| n >= bound) {
            return Err(ExperimentError::GridAboveCap { point, bound });
        }
    }
    let mut sorted: Vec<u64> = samples.iter().map(|s| s.0).collect();
    sorted.sort_unstable();
    let total = sorted.len() as u64;
    let exceedances = grid
        .iter()
        .map(|&n| (sorted.len() - sorted.partition_point(|&v| v <= n)) as u64)
        .collect();
    Ok(SurvivalCurve::from_counts(grid.to_vec(), exceedances, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_decade_grid() {
        let g = GridSpec::quarter_decades(100.0, 2).points().unwrap();
        assert_eq!(g, vec![100, 178, 316, 562, 1000, 1778, 3162, 5623, 10000]);
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(GridSpec { base: 1.0, ratio: 1.1, count: 5 }.points().is_err());
        assert!(GridSpec { base: 0.5, ratio: 2.0, count: 5 }.points().is_err());
    }

    #[test]
    fn all_zero_samples() {
        let s = vec![(0, false); 50];
        let c = estimate_survival(&s, &[1, 2, 4]).unwrap();
        assert_eq!(c.exceedances, vec![0, 0, 0]);
        assert_eq!(c.probs(), vec![0.0; 3]);
    }

    #[test]
    fn censored_samples_count_and_bound_the_grid() {
        let s = vec![(3, false), (10, true), (7, false), (1, false)];
        let c = estimate_survival(&s, &[2, 5, 9]).unwrap();
        assert_eq!(c.exceedances, vec![3, 2, 1]);
        assert_eq!(
            estimate_survival(&s, &[2, 10]),
            Err(ExperimentError::GridAboveCap { point: 10, bound: 10 })
        );
    }

    #[test]
    fn wilson_contains_estimate() {
        for &(k, n) in &[(0, 10), (10, 10), (3, 1000), (500, 1000)] {
            let (lo, hi) = wilson_interval(k, n);
            let p = k as f64 / n as f64;
            assert!(lo <= p && p <= hi && lo >= 0.0 && hi <= 1.0);
        }
    }
}
