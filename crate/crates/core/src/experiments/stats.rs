use super::ExperimentError;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom for chi-square tests.
    pub dof: Option<usize>,
}

impl TestResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Per-test level when `m` tests share a family-wise level `alpha`.
pub fn bonferroni(alpha: f64, m: usize) -> f64 {
    alpha / m.max(1) as f64
}

/// Kolmogorov survival function `Q(λ) = P(K > λ)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form, fast for small λ.
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=8).map(|j: i32| (-((2 * j - 1).pow(2) as f64) * c).exp()).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|j: i32| {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value
/// `Q((√nₑ + 0.12 + 0.11/√nₑ) D)`, `nₑ = nm/(n+m)`. Ties are handled by
/// stepping both empirical CDFs past each distinct value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult, ExperimentError> {
    if a.is_empty() || b.is_empty() {
        return Err(ExperimentError::BadInput("KS samples must be nonempty".into()));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(ExperimentError::BadInput("KS samples contain NaN".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    let sq = ne.sqrt();
    let p = kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
    Ok(TestResult { statistic: d, p_value: p, dof: None })
}

/// Chi-square survival function.
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).expect("positive degrees of freedom").sf(x)
}

/// Pearson goodness of fit of `observed` counts against cell probabilities.
/// Adjacent cells are pooled left to right until each expected count is at
/// least 5; a short remainder joins the last pooled cell. The probabilities
/// must sum to 1, so callers include a tail cell.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<TestResult, ExperimentError> {
    if observed.len() != probs.len() || observed.is_empty() {
        return Err(ExperimentError::BadInput("observed and probabilities differ in length".into()));
    }
    let total_p: f64 = probs.iter().sum();
    if probs.iter().any(|&p| !(p >= 0.0)) || (total_p - 1.0).abs() > 1e-9 {
        return Err(ExperimentError::BadInput(format!("cell probabilities sum to {total_p}, not 1")));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(ExperimentError::BadInput("no observations".into()));
    }
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &p) in observed.iter().zip(probs) {
        o += ob as f64;
        e += p * nf;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return Err(ExperimentError::BadInput("fewer than two cells after pooling".into()));
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len() - 1;
    Ok(TestResult { statistic: stat, p_value: chi_square_sf(stat, dof), dof: Some(dof) })
}

/// Pearson chi-square test of independence on a two-way table of counts.
/// Every expected count must already be at least 5.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<TestResult, ExperimentError> {
    let r = table.len();
    let c = table.first().map_or(0, Vec::len);
    if r < 2 || c < 2 || table.iter().any(|row| row.len() != c) {
        return Err(ExperimentError::BadInput("need a rectangular table with at least 2x2 cells".into()));
    }
    let rows: Vec<f64> = table.iter().map(|row| row.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum::<u64>() as f64).collect();
    let n: f64 = rows.iter().sum();
    let mut stat = 0.0;
    for i in 0..r {
        for j in 0..c {
            let e = rows[i] * cols[j] / n.max(1.0);
            if !(e >= 5.0) {
                return Err(ExperimentError::UnderPooled { row: i, col: j, expected: e });
            }
            stat += (table[i][j] as f64 - e).powi(2) / e;
        }
    }
    let dof = (r - 1) * (c - 1);
    Ok(TestResult { statistic: stat, p_value: chi_square_sf(stat, dof), dof: Some(dof) })
}
