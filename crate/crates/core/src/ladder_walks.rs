//! Continuous-time two-walk picture: the blue walk and its descending ladder
//! epochs, the red walk conditioned to stay positive and its last passages,
//! and the index Λ at which the two cumulative durations cross.
//!
//! Both walks jump at rate 1/2. Ladder legs have infinite mean duration, so
//! every leg carries an event cap; see [`LadderConfig`].

use crate::exact_laws::{step_neg_moment_tail, step_tail, HarmonicH, P_UP};
use crate::peeling::StepRecord;
use crate::samplers::{
    sample_boltzmann_volume_capped, sample_coloring, sample_exp_unchecked, RngStream, StepSampler, STEP_HARD_CAP,
};
use serde::Serialize;

pub const WALK_RATE: f64 = 0.5;

/// Default last-passage truncation level.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Limits shared by all leg samplers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderConfig {
    /// A leg with more jumps than this is reported incomplete.
    pub max_events: u64,
    /// Per-leg volume saturation level; `None` skips volume sampling.
    pub volume_cap: Option<u64>,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self { max_events: 1 << 17, volume_cap: Some(1 << 30) }
    }
}

/// First passage of the unconditioned walk below 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TLeg {
    pub t: f64,
    /// Ladder height `−ℬ_T`.
    pub h: u64,
    /// Size of the crossing jump.
    pub l: u64,
    pub vb: u64,
    pub events: u64,
    pub complete: bool,
    /// Position when the leg stopped: `−h` if complete, else the level at the cap.
    pub end: i64,
}

/// Climb of a fresh unconditioned walk from 0 to a level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ULeg {
    pub u: f64,
    pub vr: u64,
    pub events: u64,
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderQuadruple {
    pub t: f64,
    pub u: f64,
    pub vb: u64,
    pub vr: u64,
    pub h: u64,
    pub l: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadrupleDraw {
    Kept(LadderQuadruple),
    /// Some leg hit the event cap. `u_leg` is absent when the T-leg did.
    Discarded { t_leg: TLeg, u_leg: Option<ULeg> },
}

#[inline]
fn leg_volume(rng: &mut RngStream, jump: i64, acc: u64, cap: Option<u64>) -> u64 {
    match cap {
        None => 0,
        Some(c) => {
            let room = (c + 1).saturating_sub(acc);
            if room == 0 {
                0
            } else {
                sample_boltzmann_volume_capped(rng, jump, room)
            }
        }
    }
}

/// Runs the blue walk from 0 until it first drops below 0.
pub fn sample_unconditioned_leg_t(rng: &mut RngStream, sampler: &StepSampler, cfg: &LadderConfig) -> TLeg {
    let mut pos = 0i64;
    let mut t = 0.0;
    let mut vb = 0u64;
    let mut events = 0u64;
    while events < cfg.max_events {
        t += sample_exp_unchecked(rng, WALK_RATE);
        let k = sampler.sample_step(rng);
        vb += leg_volume(rng, k, vb, cfg.volume_cap);
        events += 1;
        pos += k;
        if pos < 0 {
            return TLeg { t, h: (-pos) as u64, l: (-k) as u64, vb, events, complete: true, end: pos };
        }
    }
    TLeg { t, h: 0, l: 0, vb, events, complete: false, end: pos }
}

/// Expected visits to `y` of the unconditioned walk from `x`, killed below 0:
/// `G(x, y) = (h(x+1) − h(x−y)) / (p_1 h(1))` with `h(k) = 0` for `k ≤ 0`.
pub fn killed_green(x: i64, y: i64) -> f64 {
    assert!(x >= 0 && y >= 0, "levels must be nonnegative");
    let hh = HarmonicH::shared();
    let near = if x > y { hh.eval(x - y) } else { 0.0 };
    (hh.eval(x + 1) - near) / (P_UP * hh.eval(1))
}

/// Exact law of `(H, L)` at the first passage below 0 of the unconditioned
/// walk started at `level ≥ 0`, without simulating the path.
///
/// The crossing jump leaves from `y` with mass `G(level, y)·P(ξ ≤ −(y+1))`
/// (see [`killed_green`]), and given `y` it is `ξ` conditioned on
/// `ξ ≤ −(y+1)`. Used to finish legs stopped at the event cap.
pub fn sample_crossing_from(rng: &mut RngStream, sampler: &StepSampler, level: i64) -> (u64, u64) {
    assert!(level >= 0, "crossing level must be nonnegative");
    let law = sampler.law();
    let mut u = rng.uniform();
    let mut y = 0u64;
    let mut found = false;
    while (y as i64) < level {
        let w = killed_green(level, y as i64) * law.tail(y + 1);
        if u < w {
            found = true;
            break;
        }
        u -= w;
        y += 1;
    }
    if !found {
        // For y ≥ level, G is the constant K and Σ_{y≥Y} tail(y+1) = M(Y+1) − Y·tail(Y+1)
        // with M(k) = Σ_{j≥k} j p_{−j}; invert the remaining mass in closed form.
        let k = killed_green(level, level);
        let rest = |yy: u64| k * (step_neg_moment_tail(yy + 1) - yy as f64 * step_tail(yy + 1));
        // Mass beyond 2^46 is below 1e-7 · K and is folded into the last cell.
        let far = STEP_HARD_CAP / 4;
        let target = (rest(y) - u).max(rest(far));
        let (mut lo, mut hi) = (y, y.max(1) * 2);
        while rest(hi) > target {
            lo = hi;
            hi *= 2;
        }
        // Smallest Y ≥ y with rest(Y+1) ≤ target.
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if rest(mid + 1) <= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        y = lo;
    }
    let w = rng.uniform_pos() * law.tail(y + 1);
    let j = (-sampler.invert(w)) as u64;
    debug_assert!(j > y);
    (j - y, j)
}

/// Runs a fresh walk from 0 until it first reaches `h` (exactly, as upward
/// jumps are +1). The climb volume includes the final `+1` step.
pub fn sample_leg_u_given_h(rng: &mut RngStream, sampler: &StepSampler, h: u64, cfg: &LadderConfig) -> ULeg {
    assert!(h >= 1, "ladder height must be positive");
    let target = h as i64;
    let mut pos = 0i64;
    let mut u = 0.0;
    let mut vr = 0u64;
    let mut events = 0u64;
    while events < cfg.max_events {
        u += sample_exp_unchecked(rng, WALK_RATE);
        let k = sampler.sample_step(rng);
        vr += leg_volume(rng, k, vr, cfg.volume_cap);
        events += 1;
        pos += k;
        if pos == target {
            return ULeg { u, vr, events, complete: true };
        }
    }
    ULeg { u, vr, events, complete: false }
}

/// Draws `(T, H, V^b)` then `(U, V^r)` given `H`.
///
/// A quadruple is kept only when both legs finish within the event cap. The
/// rule is symmetric under exchanging the legs (their jump counts swap under
/// time reversal), so kept quadruples are i.i.d. and keep every symmetry of
/// the uncapped law.
pub fn sample_quadruple(rng: &mut RngStream, sampler: &StepSampler, cfg: &LadderConfig) -> QuadrupleDraw {
    let t_leg = sample_unconditioned_leg_t(rng, sampler, cfg);
    if !t_leg.complete {
        return QuadrupleDraw::Discarded { t_leg, u_leg: None };
    }
    let u_leg = sample_leg_u_given_h(rng, sampler, t_leg.h, cfg);
    if !u_leg.complete {
        return QuadrupleDraw::Discarded { t_leg, u_leg: Some(u_leg) };
    }
    QuadrupleDraw::Kept(LadderQuadruple {
        t: t_leg.t,
        u: u_leg.u,
        vb: t_leg.vb,
        vr: u_leg.vr,
        h: t_leg.h,
        l: t_leg.l,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaRecord {
    /// `None` when no crossing occurred within `k_cap` quadruples.
    pub lambda: Option<u64>,
    pub t_sum: f64,
    pub u_sum: f64,
    pub v_sum: u64,
    /// Cumulative `(T_n, U_n)` for the first `record` indices.
    pub prefix: Vec<(f64, f64)>,
    pub discarded: u64,
}

impl LambdaRecord {
    pub fn is_censored(&self) -> bool {
        self.lambda.is_none()
    }
}

/// Accumulates kept quadruples until `T_k < U_k`, drawing at least `record`
/// of them so that the prefix sums are available on every run.
pub fn run_lambda(
    rng: &mut RngStream,
    sampler: &StepSampler,
    cfg: &LadderConfig,
    k_cap: u64,
    record: usize,
) -> LambdaRecord {
    assert!(k_cap >= 1);
    let mut t_sum = 0.0;
    let mut u_sum = 0.0;
    let mut v_sum = 0u64;
    let mut lambda = None;
    let mut at_lambda = (0.0, 0.0, 0u64);
    let mut prefix = Vec::with_capacity(record);
    let mut discarded = 0u64;
    let mut k = 0u64;
    while (lambda.is_none() && k < k_cap) || prefix.len() < record {
        let q = match sample_quadruple(rng, sampler, cfg) {
            QuadrupleDraw::Kept(q) => q,
            QuadrupleDraw::Discarded { .. } => {
                discarded += 1;
                continue;
            }
        };
        k += 1;
        t_sum += q.t;
        u_sum += q.u;
        v_sum = v_sum.saturating_add(q.vb).saturating_add(q.vr);
        if prefix.len() < record {
            prefix.push((t_sum, u_sum));
        }
        if lambda.is_none() && k <= k_cap && t_sum < u_sum {
            lambda = Some(k);
            at_lambda = (t_sum, u_sum, v_sum);
        }
    }
    if lambda.is_none() {
        at_lambda = (t_sum, u_sum, v_sum);
    }
    LambdaRecord { lambda, t_sum: at_lambda.0, u_sum: at_lambda.1, v_sum: at_lambda.2, prefix, discarded }
}

/// Smallest level `L` with `h(level)/h(L) ≤ eps`.
pub fn stop_level(level: i64, eps: f64) -> i64 {
    let h = HarmonicH::shared();
    let target = h.eval(level) / eps;
    // h(L) ~ √L, so start near (target)^2 and adjust.
    let mut l = ((target * target) as i64).max(level + 1);
    while l > level + 1 && h.eval(l - 1) >= target {
        l -= 1;
    }
    while h.eval(l) < target {
        l += 1;
    }
    l
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RPathSummary {
    /// The path went strictly below `stop_below`.
    pub hit_below: bool,
    /// The path reached `stop_above`.
    pub hit_above: bool,
    pub final_level: i64,
    pub min_level: i64,
    pub events: u64,
    pub time: f64,
    pub volume: u64,
}

/// Rate-1/2 walk conditioned to stay positive, from `r0`, until it drops below
/// `stop_below`, reaches `stop_above`, or makes `event_cap` jumps.
pub fn simulate_conditioned_r(
    rng: &mut RngStream,
    sampler: &StepSampler,
    r0: i64,
    stop_below: i64,
    stop_above: i64,
    event_cap: u64,
    volume_cap: Option<u64>,
) -> RPathSummary {
    assert!(r0 >= 1, "conditioned walk needs a positive start");
    let mut x = r0;
    let mut min_level = r0;
    let mut time = 0.0;
    let mut volume = 0u64;
    let mut events = 0u64;
    let out = |x, min_level, events, time, volume, below, above| RPathSummary {
        hit_below: below,
        hit_above: above,
        final_level: x,
        min_level,
        events,
        time,
        volume,
    };
    loop {
        if x < stop_below {
            return out(x, min_level, events, time, volume, true, false);
        }
        if x >= stop_above {
            return out(x, min_level, events, time, volume, false, true);
        }
        if events >= event_cap {
            return out(x, min_level, events, time, volume, false, false);
        }
        time += sample_exp_unchecked(rng, WALK_RATE);
        let k = sampler.sample_positive_step(rng, x);
        volume += leg_volume(rng, k, volume, volume_cap);
        events += 1;
        x += k;
        min_level = min_level.min(x);
    }
}

/// Last passage of the conditioned walk from 1 at level `h`, detected by
/// running until `stop_level(h+1, eps)`. Returns `(U, V^r_U)` where the volume
/// includes the final jump from `h` to `h+1`; `None` if the event cap is hit.
pub fn direct_last_passage(
    rng: &mut RngStream,
    sampler: &StepSampler,
    h: u64,
    eps: f64,
    cfg: &LadderConfig,
) -> Option<(f64, u64)> {
    let level = h as i64;
    let top = stop_level(level + 1, eps);
    let mut x = 1i64;
    let mut time = 0.0;
    let mut volume = 0u64;
    let mut last = None;
    for _ in 0..cfg.max_events {
        time += sample_exp_unchecked(rng, WALK_RATE);
        let k = sampler.sample_positive_step(rng, x);
        volume += leg_volume(rng, k, volume, cfg.volume_cap);
        if x == level && k == 1 {
            last = Some((time, volume));
        }
        x += k;
        if x >= top {
            return last;
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointOutcome {
    /// First time with `ℛ + min(inf ℬ, 0) ≤ 0`, if it occurred before the end.
    pub theta_hat: Option<f64>,
    /// Time at which simulation stopped.
    pub horizon: f64,
    /// `(T_i, U_i, H_i)` for the recorded ladder epochs.
    pub ladders: Vec<(f64, f64, u64)>,
    pub inclusions_ok: bool,
    /// Caps were hit before every recorded quantity was determined.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointCaps {
    pub ladders: usize,
    pub event_cap: u64,
    pub eps: f64,
}

/// Simulates the red walk conditioned positive from 1 and the blue walk from
/// 0 in a common clock, records the first `caps.ladders` descending ladder
/// epochs of the blue walk and the last passages of the red walk at the
/// ladder heights, and checks
/// `{∀i ≤ n: T_i > U_i} ⟹ θ̂ > T_n` and `{T_n < U_n} ⟹ θ̂ < U_n`.
pub fn joint_two_walk_theta(rng: &mut RngStream, sampler: &StepSampler, caps: JointCaps) -> JointOutcome {
    let n = caps.ladders.max(1);
    let mut r = 1i64;
    let mut b = 0i64;
    let mut b_min = 0i64;
    let mut time = 0.0;
    let mut theta_hat = None;
    let mut ladder_t: Vec<f64> = Vec::with_capacity(n);
    let mut ladder_h: Vec<u64> = Vec::with_capacity(n);
    // Last `level → level+1` jump time of the red walk, per level.
    let mut up_from: Vec<f64> = Vec::new();
    let mut top: Option<i64> = None;
    let mut events = 0u64;
    let mut flagged = true;
    while events < caps.event_cap {
        time += sample_exp_unchecked(rng, 2.0 * WALK_RATE);
        events += 1;
        if sample_coloring(rng) {
            let k = sampler.sample_positive_step(rng, r);
            if k == 1 {
                let idx = r as usize;
                if up_from.len() <= idx {
                    up_from.resize(idx + 1, f64::NAN);
                }
                up_from[idx] = time;
            }
            r += k;
        } else {
            b += sampler.sample_step(rng);
            if b < b_min {
                b_min = b;
                if ladder_t.len() < n {
                    ladder_t.push(time);
                    ladder_h.push((-b) as u64);
                    if ladder_t.len() == n {
                        let hmax = *ladder_h.iter().max().unwrap() as i64;
                        top = Some(stop_level(hmax + 1, caps.eps));
                    }
                }
            }
        }
        if theta_hat.is_none() && r + b_min.min(0) <= 0 {
            theta_hat = Some(time);
        }
        if let Some(l) = top {
            if r >= l {
                flagged = false;
                break;
            }
        }
    }
    let mut ladders = Vec::with_capacity(ladder_t.len());
    let mut inclusions_ok = true;
    if !flagged {
        let mut all_above = true;
        for i in 0..n {
            let (t, h) = (ladder_t[i], ladder_h[i]);
            let u = up_from[h as usize];
            ladders.push((t, u, h));
            all_above &= t > u;
            let th = theta_hat.unwrap_or(f64::INFINITY);
            if all_above && th <= t {
                inclusions_ok = false;
            }
            if t < u && th >= u {
                inclusions_ok = false;
            }
        }
    } else {
        for i in 0..ladder_t.len() {
            let h = ladder_h[i];
            let u = up_from.get(h as usize).copied().unwrap_or(f64::NAN);
            ladders.push((ladder_t[i], u, h));
        }
    }
    JointOutcome { theta_hat, horizon: time, ladders, inclusions_ok, flagged }
}

/// The peeling path rebuilt from its `(jump, η)` sequence without reflection:
/// `R_n = Ř_n + min(inf B̌, 0)` and `B_n = B̌_n − min(inf B̌, 0)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnreflectedPath {
    pub states: Vec<(i64, i64)>,
    /// `Θ̌ = inf{n : Ř_n + min(inf_{k≤n} B̌_k, 0) ≤ 0}`.
    pub theta: Option<usize>,
}

pub fn unreflected_path(r0: i64, b0: i64, steps: &[StepRecord]) -> UnreflectedPath {
    let (mut rr, mut bb) = (r0, b0);
    let mut inf_b = b0;
    let mut states = Vec::with_capacity(steps.len() + 1);
    states.push((r0, b0));
    let mut theta = None;
    for (i, st) in steps.iter().enumerate() {
        if st.eta {
            rr += st.jump;
        } else {
            bb += st.jump;
        }
        inf_b = inf_b.min(bb);
        let c = inf_b.min(0);
        states.push((rr + c, bb - c));
        if theta.is_none() && rr + c <= 0 {
            theta = Some(i + 1);
        }
    }
    UnreflectedPath { states, theta }
}

/// Final value and running minimum of an unconditioned discrete walk of `steps` jumps.
pub fn unconditioned_walk_summary(rng: &mut RngStream, sampler: &StepSampler, steps: u32) -> (i64, i64) {
    let mut s = 0i64;
    let mut m = 0i64;
    for _ in 0..steps {
        s += sampler.sample_step(rng);
        m = m.min(s);
    }
    (s, m)
}
