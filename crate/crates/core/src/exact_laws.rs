//! Exact laws of the boundary walk: the step law `p_k`, the harmonic function `h`,
//! the conditioned kernel `p_{n,m}`, Boltzmann volumes and the ladder laws.
//!
//! Gamma ratios go through [`crate::special::gamma_ratio`], which keeps
//! near-ulp relative precision for arguments far beyond the sampler ranges.

use crate::special::{gamma_ratio, inv_gamma_ratio, stirling_remainder};
use std::f64::consts::PI;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("boundary size {0} is below 2")]
    BoundaryTooSmall(i64),
}

pub const P_UP: f64 = 2.0 / 3.0;

fn inv_2_sqrt_pi() -> f64 {
    0.5 / PI.sqrt()
}

/// `p_k`: 2/3 at k = 1, zero for k = 0 and k ≥ 2, and
/// `Γ(−k − 1/2) / (2√π Γ(−k + 2))` for k ≤ −1.
pub fn step_pmf(k: i64) -> f64 {
    match k {
        1 => P_UP,
        k if k >= 0 => 0.0,
        k if -k <= SMALL_ARG => {
            // p_{−(i+1)} / p_{−i} = (2i − 1) / (2(i + 2)), from p_{−1} = 1/4.
            (1..-k).fold(0.25, |p, i| p * (2 * i - 1) as f64 / (2 * (i + 2)) as f64)
        }
        k => {
            let j = (-k) as f64;
            inv_2_sqrt_pi() * inv_gamma_ratio(j - 0.5, 2.5)
        }
    }
}

/// Below this argument the step law and h use exact recurrences, which are
/// more accurate than exponentiated log-gamma ratios.
const SMALL_ARG: i64 = 32;

/// `P(ξ ≤ −k) = Γ(k − 1/2) / (3√π Γ(k + 1))`.
///
/// Telescoping `Γ(j+1/2)/Γ(j+2) − Γ(j−1/2)/Γ(j+1) = −(3/2) Γ(j−1/2)/Γ(j+2)`
/// gives the tail sum in closed form; it equals `1/3 − Σ_{j<k} p_{−j}` without
/// the cancellation of the finite complement.
pub fn step_tail(k: u64) -> f64 {
    assert!(k >= 1, "step_tail needs k >= 1");
    if k as i64 <= SMALL_ARG {
        // T(i+1) / T(i) = (i − 1/2) / (i + 1), from T(1) = 1/3.
        return (1..k).fold(1.0 / 3.0, |t, i| t * (2 * i - 1) as f64 / (2 * (i + 1)) as f64);
    }
    let x = k as f64;
    inv_gamma_ratio(x - 0.5, 1.5) / (3.0 * PI.sqrt())
}

/// `Σ_{j≥k} j p_{−j} = (Γ(k−1/2)/Γ(k) − Γ(k−1/2)/(3Γ(k+1))) / √π`, by the same
/// telescoping as [`step_tail`]. At k = 1 this is `p_1`, so the step law has mean 0.
pub fn step_neg_moment_tail(k: u64) -> f64 {
    assert!(k >= 1, "step_neg_moment_tail needs k >= 1");
    let x = k as f64 - 0.5;
    (inv_gamma_ratio(x, 0.5) - inv_gamma_ratio(x, 1.5) / 3.0) / PI.sqrt()
}

/// `h(k) = Γ(k + 1/2) / Γ(k)` for k ≥ 1, zero otherwise.
pub fn harmonic_h(k: i64) -> f64 {
    if k <= 0 {
        0.0
    } else if k <= SMALL_ARG {
        // h(1) = √π/2 and h(i+1) = h(i)·(i + 1/2)/i.
        (1..k).fold(PI.sqrt() / 2.0, |h, i| h * (i as f64 + 0.5) / i as f64)
    } else {
        gamma_ratio(k as f64, 0.5)
    }
}

/// Transition law of the boundary size under the peeling law:
/// `p_{n,m} = h(m−1)/h(n−1) · p_{m−n}`.
pub fn kernel_pmf(n: i64, m: i64) -> Result<f64, LawError> {
    if n < 2 {
        return Err(LawError::BoundaryTooSmall(n));
    }
    if m < 2 || m > n + 1 {
        return Ok(0.0);
    }
    if m == n + 1 {
        // h(n)/h(n−1) · 2/3 = (2n − 1)/(3(n − 1)).
        return Ok((2 * n - 1) as f64 / (3 * (n - 1)) as f64);
    }
    let h = HarmonicH::shared();
    Ok(h.eval(m - 1) / h.eval(n - 1) * step_pmf(m - n))
}

/// Probability that a free Boltzmann triangulation of the d-gon has n inner vertices.
///
/// For d < 2 this is the point mass at 1 (volume credited to an upward step).
pub fn boltzmann_volume_pmf(d: u64, n: u64) -> f64 {
    if d < 2 {
        return if n == 1 { 1.0 } else { 0.0 };
    }
    boltzmann_volume_ln_pmf(d, n).exp()
}

/// Natural log of [`boltzmann_volume_pmf`] for d ≥ 2.
pub fn boltzmann_volume_ln_pmf(d: u64, n: u64) -> f64 {
    assert!(d >= 2);
    let df = d as f64;
    if n == 0 {
        // 2(2d−3)d(d−1)(2d−4)!/(2d−2)! = d
        return df.ln() + (df - 1.0) * (4.0f64 / 9.0).ln();
    }
    let nf = n as f64;
    let alpha = 2.0 * df - 3.0;
    let gamma = 2.0 * df - 1.0;
    let a = 3.0 * nf + alpha; // 2d + 3n − 3
    let c = 2.0 * nf + gamma; // 2d + 2n − 1
    // Stirling form of ln Γ(a) − ln Γ(n+1) − ln Γ(c) + n ln(4/27) + (d−1) ln(4/9);
    // every term proportional to n or d cancels analytically.
    let l1 = (alpha / (3.0 * nf)).ln_1p();
    let l2 = (1.0 / nf).ln_1p();
    let l3 = (gamma / (2.0 * nf)).ln_1p();
    let prefactor = (2.0 * alpha * df * (df - 1.0)).ln();
    prefactor + 3.0 - 0.5 * (2.0 * PI).ln() - 2.5 * nf.ln() - 1.5 * 3.0f64.ln() - 0.5 * 2.0f64.ln()
        + (a - 0.5) * l1
        - (nf + 0.5) * l2
        - (c - 0.5) * l3
        + stirling_remainder(a)
        - stirling_remainder(nf + 1.0)
        - stirling_remainder(c)
}

/// `P(Y = n+1) / P(Y = n)` for the d-gon volume law.
#[inline]
pub fn boltzmann_volume_ratio(d: u64, n: u64) -> f64 {
    let d = d as f64;
    let n = n as f64;
    let a = 2.0 * d + 3.0 * n;
    let c = 2.0 * d + 2.0 * n;
    (4.0 / 27.0) * (a - 1.0) * (a - 2.0) * (a - 3.0) / ((n + 1.0) * c * (c - 1.0))
}

/// `E[Y] = (d−1)(2d−3)/3`.
pub fn boltzmann_volume_mean(d: u64) -> f64 {
    assert!(d >= 2);
    let d = d as f64;
    (d - 1.0) * (2.0 * d - 3.0) / 3.0
}

/// Law of the strict descending ladder height `H = −S_T`: `P(ξ ≤ −k) / p_1`.
pub fn ladder_height_pmf(k: u64) -> f64 {
    assert!(k >= 1);
    step_tail(k) / P_UP
}

/// Law of the jump `L` that crosses below zero: `k p_{−k} / p_1`.
pub fn ladder_jump_pmf(k: u64) -> f64 {
    assert!(k >= 1);
    k as f64 * step_pmf(-(k as i64)) / P_UP
}

/// `P(Λ = n) = Catalan(n−1) / 2^{2n−1} = Γ(n − 1/2) / (2√π Γ(n + 1))`.
pub fn lambda_pmf(n: u64) -> f64 {
    assert!(n >= 1);
    if n as i64 <= SMALL_ARG {
        // P(Λ = i+1) / P(Λ = i) = (2i − 1) / (2(i + 1)), from P(Λ = 1) = 1/2.
        return (1..n).fold(0.5, |p, i| p * (2 * i - 1) as f64 / (2 * (i + 1)) as f64);
    }
    inv_2_sqrt_pi() * inv_gamma_ratio(n as f64 - 0.5, 1.5)
}

/// `P(Λ = n)` as an exact fraction `(numerator, denominator)`, for 1 ≤ n ≤ 60.
pub fn lambda_pmf_exact(n: u32) -> (u128, u128) {
    assert!((1..=60).contains(&n));
    // Catalan(m) via C(m+1) = C(m)·2(2m+1)/(m+2); stays integral at each step.
    let mut c: u128 = 1;
    for m in 0..(n - 1) as u128 {
        c = c * 2 * (2 * m + 1) / (m + 2);
    }
    let mut num = c;
    let mut den: u128 = 1u128 << (2 * n - 1);
    while num % 2 == 0 && den > 1 {
        num /= 2;
        den /= 2;
    }
    (num, den)
}

/// Tail constant `C` in `P(Y^{(X)} > x) ~ C x^{−3/4}` for the annealed volume step.
pub fn annealed_tail_constant() -> f64 {
    2f64.powf(1.5) / (3f64.powf(1.75) * crate::special::ln_gamma(0.25).exp())
}

/// Cached `h` on small arguments; the closed form beyond the table.
#[derive(Debug)]
pub struct HarmonicH {
    table: Vec<f64>,
}

impl HarmonicH {
    pub const TABLE_LEN: usize = 1 << 16;

    pub fn new() -> Self {
        let table = (0..Self::TABLE_LEN as i64).map(harmonic_h).collect();
        Self { table }
    }

    /// Process-wide instance, built on first use.
    pub fn shared() -> &'static HarmonicH {
        static CELL: OnceLock<HarmonicH> = OnceLock::new();
        CELL.get_or_init(HarmonicH::new)
    }

    #[inline]
    pub fn eval(&self, k: i64) -> f64 {
        if k <= 0 {
            0.0
        } else if (k as usize) < self.table.len() {
            self.table[k as usize]
        } else {
            harmonic_h(k)
        }
    }
}

impl Default for HarmonicH {
    fn default() -> Self {
        Self::new()
    }
}

/// The increment law `p` with precomputed tails `P(ξ ≤ −k)` for k ≤ `table_size + 1`.
#[derive(Debug)]
pub struct StepLaw {
    table_size: usize,
    /// `tail[k] = P(ξ ≤ −k)`; index 0 holds 1 (everything is ≤ +1).
    tail: Vec<f64>,
}

impl StepLaw {
    pub const DEFAULT_TABLE_SIZE: usize = 1 << 20;

    pub fn new(table_size: usize) -> Self {
        assert!(table_size >= 1);
        let mut tail = Vec::with_capacity(table_size + 2);
        tail.push(1.0);
        for k in 1..=(table_size as u64 + 1) {
            tail.push(step_tail(k));
        }
        Self { table_size, tail }
    }

    pub fn shared() -> &'static StepLaw {
        static CELL: OnceLock<StepLaw> = OnceLock::new();
        CELL.get_or_init(|| StepLaw::new(Self::DEFAULT_TABLE_SIZE))
    }

    pub fn table_size(&self) -> usize {
        self.table_size
    }

    pub fn p_up(&self) -> f64 {
        P_UP
    }

    /// `P(ξ ≤ −k)`, from the table when available.
    #[inline]
    pub fn tail(&self, k: u64) -> f64 {
        if (k as usize) < self.tail.len() {
            self.tail[k as usize]
        } else {
            step_tail(k)
        }
    }

    /// `Σ_{j=1}^{k} p_{−j} = 1/3 − P(ξ ≤ −(k+1))`.
    pub fn cum_neg(&self, k: u64) -> f64 {
        1.0 / 3.0 - self.tail(k + 1)
    }

    /// Inversion cumulative over the ordered support `+1, −1, −2, …`:
    /// `2/3 + Σ_{j ≤ k} p_{−j}`.
    pub fn cumulative(&self, k: u64) -> f64 {
        1.0 - self.tail(k + 1)
    }

    pub(crate) fn tail_table(&self) -> &[f64] {
        &self.tail
    }
}

/// The volume law of a d-gon, as a value type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoltzmannVolumeLaw {
    pub d: u64,
}

impl BoltzmannVolumeLaw {
    pub fn new(d: u64) -> Result<Self, LawError> {
        if d < 2 {
            Err(LawError::BoundaryTooSmall(d as i64))
        } else {
            Ok(Self { d })
        }
    }

    pub fn pmf(&self, n: u64) -> f64 {
        boltzmann_volume_pmf(self.d, n)
    }

    pub fn ratio(&self, n: u64) -> f64 {
        boltzmann_volume_ratio(self.d, n)
    }

    pub fn mean(&self) -> f64 {
        boltzmann_volume_mean(self.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn step_pmf_small_values() {
        assert_eq!(step_pmf(1), 2.0 / 3.0);
        assert_eq!(step_pmf(0), 0.0);
        assert_eq!(step_pmf(2), 0.0);
        assert!(close(step_pmf(-1), 0.25, 1e-15));
        assert!(close(step_pmf(-2), 1.0 / 24.0, 1e-15));
        assert!(close(step_pmf(-3), 1.0 / 64.0, 1e-15));
    }

    #[test]
    fn step_ratio_recurrence() {
        for k in 1..5000i64 {
            let r = step_pmf(-(k + 1)) / step_pmf(-k);
            let kf = k as f64;
            assert!(close(r, (2.0 * kf - 1.0) / (2.0 * (kf + 2.0)), 1e-14), "k={k}");
        }
    }

    #[test]
    fn tail_small_values() {
        assert!(close(step_tail(1), 1.0 / 3.0, 1e-15));
        assert!(close(step_tail(2), 1.0 / 12.0, 1e-15));
        let k = 1e4;
        let scaled = step_tail(10_000) * 3.0 * PI.sqrt() * k * k.sqrt();
        assert!((scaled - 1.0).abs() < 0.01);
    }

    #[test]
    fn harmonic_values() {
        assert_eq!(harmonic_h(0), 0.0);
        assert_eq!(harmonic_h(-4), 0.0);
        assert!(close(harmonic_h(1), PI.sqrt() / 2.0, 1e-15));
        assert!(close(harmonic_h(3), 15.0 * PI.sqrt() / 16.0, 1e-15));
        assert!(close(harmonic_h(3) / harmonic_h(2), 1.25, 1e-15));
    }

    #[test]
    fn kernel_values() {
        assert!(close(kernel_pmf(2, 3).unwrap(), 1.0, 1e-12));
        assert_eq!(kernel_pmf(2, 2).unwrap(), 0.0);
        assert!(close(kernel_pmf(3, 2).unwrap(), 1.0 / 6.0, 1e-14));
        assert!(close(kernel_pmf(3, 4).unwrap(), 5.0 / 6.0, 1e-14));
        assert_eq!(kernel_pmf(5, 7).unwrap(), 0.0);
        assert_eq!(kernel_pmf(1, 2), Err(LawError::BoundaryTooSmall(1)));
        let want = harmonic_h(5) / harmonic_h(4) * 2.0 / 3.0;
        assert!(close(kernel_pmf(5, 6).unwrap(), want, 1e-14));
    }

    #[test]
    fn boltzmann_small_values() {
        assert!(close(boltzmann_volume_pmf(2, 0), 8.0 / 9.0, 1e-14));
        assert!(close(boltzmann_volume_pmf(2, 1), 16.0 / 243.0, 1e-13));
        assert!(close(boltzmann_volume_ratio(2, 0), 2.0 / 27.0, 1e-15));
        assert_eq!(boltzmann_volume_pmf(1, 1), 1.0);
        assert_eq!(boltzmann_volume_pmf(0, 3), 0.0);
        assert!(close(boltzmann_volume_mean(2), 1.0 / 3.0, 1e-15));
        assert!(close(boltzmann_volume_mean(3), 2.0, 1e-15));
    }

    #[test]
    fn boltzmann_ratio_matches_direct() {
        for d in 2..=10u64 {
            for n in 0..100u64 {
                let direct = boltzmann_volume_pmf(d, n + 1) / boltzmann_volume_pmf(d, n);
                assert!(close(boltzmann_volume_ratio(d, n), direct, 1e-12), "d={d} n={n}");
            }
        }
    }

    #[test]
    fn ladder_laws_small_values() {
        assert!(close(ladder_height_pmf(1), 0.5, 1e-15));
        assert!(close(ladder_height_pmf(2), 0.125, 1e-15));
        assert!(close(ladder_jump_pmf(1), 0.375, 1e-15));
        assert!(close(ladder_jump_pmf(2), 0.125, 1e-15));
    }

    #[test]
    fn lambda_values() {
        assert_eq!(lambda_pmf_exact(1), (1, 2));
        assert_eq!(lambda_pmf_exact(2), (1, 8));
        assert_eq!(lambda_pmf_exact(3), (1, 16));
        assert_eq!(lambda_pmf_exact(4), (5, 128));
        for n in 1..=60u32 {
            let (a, b) = lambda_pmf_exact(n);
            assert!(close(lambda_pmf(n as u64), a as f64 / b as f64, 1e-13), "n={n}");
        }
        let n = 1e6f64;
        let scaled = lambda_pmf(1_000_000) * 2.0 * PI.sqrt() * n * n.sqrt();
        assert!((scaled - 1.0).abs() < 1e-5);
    }

    #[test]
    fn annealed_constant_value() {
        let c = annealed_tail_constant();
        assert!((c - 0.114).abs() < 5e-4, "{c}");
        let via_statrs =
            2f64.powf(1.5) / (3f64.powf(1.75) * statrs::function::gamma::gamma(0.25));
        assert!(close(c, via_statrs, 1e-13));
    }

    #[test]
    fn step_law_table() {
        let law = StepLaw::new(1000);
        assert_eq!(law.table_size(), 1000);
        assert!(close(law.tail(1), 1.0 / 3.0, 1e-15));
        assert!(close(law.cumulative(0), 2.0 / 3.0, 1e-15));
        assert!(close(law.cum_neg(1), 0.25, 1e-14));
        assert_eq!(law.tail(5000), step_tail(5000));
    }
}
