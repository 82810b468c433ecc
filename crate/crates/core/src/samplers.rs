//! Reproducible random streams and samplers for every law in [`crate::exact_laws`].

use crate::exact_laws::{boltzmann_volume_ln_pmf, boltzmann_volume_ratio, step_tail, HarmonicH, StepLaw};
use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rand_distr::Exp1;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("jump {0} is not a possible increment of the boundary walk")]
    BadJump(i64),
    #[error("boundary size {0} is below 2")]
    BoundaryTooSmall(i64),
    #[error("exponential rate must be positive, got {0}")]
    BadRate(f64),
}

/// Step magnitudes beyond this abort the sampler.
pub const STEP_HARD_CAP: u64 = 1 << 48;

/// Default saturation level for a single volume draw.
pub const VOLUME_DRAW_CAP: u64 = 1 << 40;

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Master seed for a named sub-experiment, so that sub-experiments sharing a
/// master seed draw from unrelated stream families.
pub fn derive_seed(master_seed: u64, tag: &str) -> u64 {
    tag.bytes().fold(splitmix64(master_seed), |z, b| splitmix64(z ^ b as u64))
}

/// A Xoshiro256++ stream whose state is derived from `(master_seed, stream_id)`
/// alone, so replicate `i` (stream `i`) can be replayed in isolation.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    inner: Xoshiro256PlusPlus,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut seed = [0u8; 32];
        // Distinct (seed, id) pairs give unrelated SplitMix64 chains.
        let mut z = splitmix64(master_seed) ^ splitmix64(stream_id ^ 0xD1B5_4A32_D192_ED03).rotate_left(17);
        for chunk in seed.chunks_exact_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        let inner = Xoshiro256PlusPlus::from_seed(seed);
        Self { master_seed, stream_id, inner }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Uniform on (0, 1] with 53 random bits.
    #[inline]
    pub fn uniform_pos(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) + 1) as f64 * TWO_POW_M53
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Inversion sampler for `p` over the ordered support `+1, −1, −2, …`.
///
/// The table stores tails `P(ξ ≤ −k)` rather than cumulatives so that deep-tail
/// comparisons keep full relative precision; `1 − tail(k+1)` is the cumulative.
#[derive(Debug, Clone, Copy)]
pub struct StepSampler {
    law: &'static StepLaw,
}

impl Default for StepSampler {
    fn default() -> Self {
        Self::shared()
    }
}

impl StepSampler {
    pub fn new(law: &'static StepLaw) -> Self {
        Self { law }
    }

    /// Sampler over the process-wide table of size 2^20.
    pub fn shared() -> Self {
        Self::new(StepLaw::shared())
    }

    pub fn law(&self) -> &'static StepLaw {
        self.law
    }

    /// Draws `k` with probability `p_k`.
    #[inline]
    pub fn sample_step(&self, rng: &mut RngStream) -> i64 {
        let w = rng.uniform_pos();
        self.invert(w)
    }

    /// Returns `+1` when `w > P(ξ ≤ −1)`, otherwise the `−k` with
    /// `P(ξ ≤ −(k+1)) < w ≤ P(ξ ≤ −k)`.
    pub fn invert(&self, w: f64) -> i64 {
        let tail = self.law.tail_table();
        if w > tail[1] {
            return 1;
        }
        let linear = 16.min(tail.len() - 2);
        for k in 1..linear {
            if w > tail[k + 1] {
                return -(k as i64);
            }
        }
        let last = tail.len() - 1;
        if w > tail[last] {
            let (mut lo, mut hi) = (linear, last);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if tail[mid] >= w {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return -(lo as i64);
        }
        // Beyond the table: gallop on the closed-form tail, then bisect.
        let mut lo = last as u64;
        let mut hi = lo * 2;
        while step_tail(hi) >= w {
            lo = hi;
            hi *= 2;
            assert!(hi <= STEP_HARD_CAP, "step sampler exceeded 2^48 (uniform {w:e})");
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if step_tail(mid) >= w {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        -(lo as i64)
    }

    /// Draws the next boundary size from `n` under the peeling kernel `p_{n,·}`.
    ///
    /// Rejection: propose `k ~ p`, accept with `h(n−1+k)/h(n)`.
    #[inline]
    pub fn sample_conditioned_step(&self, rng: &mut RngStream, n: i64) -> Result<i64, SampleError> {
        if n < 2 {
            return Err(SampleError::BoundaryTooSmall(n));
        }
        Ok(self.conditioned_unchecked(rng, n))
    }

    #[inline]
    pub(crate) fn conditioned_unchecked(&self, rng: &mut RngStream, n: i64) -> i64 {
        let h = HarmonicH::shared();
        let hn = h.eval(n);
        loop {
            let k = self.sample_step(rng);
            if k == 1 {
                return n + 1;
            }
            let m = n + k;
            if m < 2 {
                continue;
            }
            if rng.uniform() * hn < h.eval(m - 1) {
                return m;
            }
        }
    }

    /// One jump of the walk conditioned to stay positive, from `x ≥ 1`:
    /// kernel `h(x+k)/h(x) · p_k`.
    #[inline]
    pub fn sample_positive_step(&self, rng: &mut RngStream, x: i64) -> i64 {
        debug_assert!(x >= 1);
        self.conditioned_unchecked(rng, x + 1) - 1 - x
    }
}

/// Volume credited to a boundary jump: 1 for `+1`, else a Boltzmann draw with
/// `d = 1 − jump`.
pub fn sample_boltzmann_volume(rng: &mut RngStream, jump: i64) -> Result<u64, SampleError> {
    if jump == 0 || jump > 1 {
        return Err(SampleError::BadJump(jump));
    }
    Ok(sample_boltzmann_volume_capped(rng, jump, VOLUME_DRAW_CAP))
}

/// As [`sample_boltzmann_volume`] but returns `min(Y, limit)`; the streaming
/// search stops at `limit`, which bounds the work of a single draw.
#[inline]
pub fn sample_boltzmann_volume_capped(rng: &mut RngStream, jump: i64, limit: u64) -> u64 {
    debug_assert!(jump == 1 || jump < 0);
    if jump == 1 {
        return 1.min(limit);
    }
    let d = (1 - jump) as u64;
    let u = rng.uniform();
    invert_boltzmann(d, u, limit)
}

/// Smallest `n` with `P(Y ≤ n) > u`, truncated at `limit`.
///
/// Masses are carried relative to a running log scale so that `P(Y = 0)`,
/// which underflows for large `d`, never has to be represented.
pub fn invert_boltzmann(d: u64, u: f64, limit: u64) -> u64 {
    const RESCALE: f64 = 1e250;
    let ln_rescale = RESCALE.ln();
    let ln_u = u.ln();
    let mut ln_scale = boltzmann_volume_ln_pmf(d, 0);
    let mut thr = (ln_u - ln_scale).exp();
    let mut term = 1.0f64;
    let mut cum = 1.0f64;
    let mut n = 0u64;
    loop {
        if cum > thr {
            return n;
        }
        if n >= limit {
            return limit;
        }
        term *= boltzmann_volume_ratio(d, n);
        n += 1;
        cum += term;
        if term > RESCALE {
            term /= RESCALE;
            cum /= RESCALE;
            ln_scale += ln_rescale;
            thr = (ln_u - ln_scale).exp();
        }
    }
}

/// Fair coloring bit: `true` is a red step.
#[inline]
pub fn sample_coloring(rng: &mut RngStream) -> bool {
    rng.next_u64() >> 63 == 1
}

/// Exponential holding time with the given rate.
pub fn sample_exponential(rng: &mut RngStream, rate: f64) -> Result<f64, SampleError> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(SampleError::BadRate(rate));
    }
    Ok(sample_exp_unchecked(rng, rate))
}

#[inline]
pub(crate) fn sample_exp_unchecked(rng: &mut RngStream, rate: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}
