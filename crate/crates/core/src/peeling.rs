//! The peeling chain `(S, R, B)` under the peeling law, with volumes and the
//! last all-red time.

use crate::samplers::{sample_boltzmann_volume_capped, sample_coloring, RngStream, StepSampler};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PeelingError {
    #[error("invalid start (r0={r0}, b0={b0}): need r0 >= 1 and r0 + b0 >= 2")]
    InvalidStart { r0: i64, b0: i64 },
    #[error("the red boundary already vanished at step {0}")]
    AfterTheta(u64),
    #[error("outcome is censored")]
    Censored,
}

/// Reflection into the quadrant: a negative coordinate is absorbed by the other one.
#[inline]
pub fn reflect(r: i64, b: i64) -> (i64, i64) {
    if b < 0 {
        (r + b, 0)
    } else if r < 0 {
        (0, b + r)
    } else {
        (r, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    /// `true` for a red step.
    pub eta: bool,
    pub jump: i64,
    pub volume_added: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeelingState {
    s: i64,
    r: i64,
    b: i64,
    step: u64,
    v_red: u64,
    v_blue: u64,
    last_all_red: u64,
    /// Per-color volumes saturate at `volume_cap + 1`.
    volume_cap: u64,
    done: bool,
}

impl PeelingState {
    pub fn new(r0: i64, b0: i64) -> Result<Self, PeelingError> {
        Self::with_volume_cap(r0, b0, u64::MAX / 4)
    }

    /// Volumes above `volume_cap` are not tracked exactly: each color stores
    /// at most `volume_cap + 1`, and once red passes the cap no further volume
    /// is drawn. After saturation the stored volumes are lower bounds.
    pub fn with_volume_cap(r0: i64, b0: i64, volume_cap: u64) -> Result<Self, PeelingError> {
        if r0 < 1 || b0 < 0 || r0 + b0 < 2 {
            return Err(PeelingError::InvalidStart { r0, b0 });
        }
        Ok(Self {
            s: r0 + b0,
            r: r0,
            b: b0,
            step: 0,
            v_red: 0,
            v_blue: 0,
            last_all_red: if b0 > 0 { 1 } else { 0 },
            volume_cap,
            done: false,
        })
    }

    pub fn s(&self) -> i64 {
        self.s
    }
    pub fn r(&self) -> i64 {
        self.r
    }
    pub fn b(&self) -> i64 {
        self.b
    }
    pub fn step_index(&self) -> u64 {
        self.step
    }
    pub fn v(&self) -> u64 {
        self.v_red + self.v_blue
    }
    pub fn v_red(&self) -> u64 {
        self.v_red
    }
    pub fn v_blue(&self) -> u64 {
        self.v_blue
    }
    pub fn last_all_red(&self) -> u64 {
        self.last_all_red
    }
    pub fn finished(&self) -> bool {
        self.done
    }
    pub fn red_saturated(&self) -> bool {
        self.v_red > self.volume_cap
    }
    pub fn saturated(&self) -> bool {
        self.v_red > self.volume_cap || self.v_blue > self.volume_cap
    }

    /// One peeling step: boundary jump, coloring, reflection, volume.
    pub fn step(&mut self, sampler: &StepSampler, rng: &mut RngStream) -> Result<StepRecord, PeelingError> {
        if self.done {
            return Err(PeelingError::AfterTheta(self.step));
        }
        let m = sampler.conditioned_unchecked(rng, self.s);
        let jump = m - self.s;
        let eta = sample_coloring(rng);
        let (r, b) = if eta {
            reflect(self.r + jump, self.b)
        } else {
            reflect(self.r, self.b + jump)
        };
        // Once red passes the cap both V^r and V are known to exceed it, so
        // neither color needs further draws; once blue passes, only red does.
        let room = if self.red_saturated() {
            0
        } else if eta {
            self.volume_cap + 1 - self.v_red
        } else {
            (self.volume_cap + 1).saturating_sub(self.v_blue)
        };
        let volume_added = if room == 0 {
            0
        } else {
            sample_boltzmann_volume_capped(rng, jump, room)
        };
        if eta {
            self.v_red += volume_added;
        } else {
            self.v_blue += volume_added;
        }
        self.s = m;
        self.r = r;
        self.b = b;
        self.step += 1;
        debug_assert!(self.s >= 2 && self.r >= 0 && self.b >= 0 && self.s == self.r + self.b);
        if r == 0 {
            self.done = true;
        } else if b == 0 {
            self.last_all_red = self.step;
        }
        Ok(StepRecord { eta, jump, volume_added })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Censoring {
    /// The step cap was reached.
    StepCap,
    /// The volume cap was exceeded.
    VolumeCap,
    /// Both caps were passed (the joint rule of [`CensorRule::Both`]).
    StepAndVolume,
}

/// When a run stops before θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CensorRule {
    /// Stop only at `step_cap` steps; volumes saturate at the volume cap.
    Steps,
    /// Stop at `step_cap` steps or once `V > volume_cap`.
    Either,
    /// Stop only once `step ≥ step_cap` and `V^r > volume_cap`. Every censored
    /// run then has θ above the step cap and both `V^r_{θ−1}` and `V_θ` above
    /// the volume cap, so survival estimates below both caps stay exact.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Caps {
    pub step_cap: u64,
    pub volume_cap: u64,
    pub rule: CensorRule,
}

impl Caps {
    pub fn steps(step_cap: u64, volume_cap: u64) -> Self {
        Self { step_cap, volume_cap, rule: CensorRule::Steps }
    }
    pub fn either(step_cap: u64, volume_cap: u64) -> Self {
        Self { step_cap, volume_cap, rule: CensorRule::Either }
    }
    pub fn both(step_cap: u64, volume_cap: u64) -> Self {
        Self { step_cap, volume_cap, rule: CensorRule::Both }
    }
}

/// Result of a run. For censored runs every field is the value at the stopping
/// step, which bounds the true value from below (θ, volumes) or is meaningless
/// (Δ, perimeter proxy).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PeelingOutcome {
    pub theta: u64,
    pub censored: Option<Censoring>,
    pub delta: u64,
    pub v_theta: u64,
    pub v_red_theta_minus_1: u64,
    pub perimeter_lower_proxy: u64,
    /// Some color exceeded the volume cap; its volume is only known to exceed it.
    pub volume_saturated: bool,
}

impl PeelingOutcome {
    pub fn is_censored(&self) -> bool {
        self.censored.is_some()
    }

    /// `1 + θ − Δ`, a lower bound for the hull perimeter `1 + θ − Δ + E`.
    pub fn perimeter_lower(&self) -> Result<u64, PeelingError> {
        perimeter_bounds(self).map(|b| b.lower)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerimeterBounds {
    pub lower: u64,
    pub upper_proxy: &'static str,
}

pub const PERIMETER_UPPER_DESCRIPTION: &str = "bounded by twice an independent copy of theta plus 2";

pub fn perimeter_bounds(outcome: &PeelingOutcome) -> Result<PerimeterBounds, PeelingError> {
    if outcome.is_censored() {
        return Err(PeelingError::Censored);
    }
    Ok(PerimeterBounds { lower: 1 + outcome.theta - outcome.delta, upper_proxy: PERIMETER_UPPER_DESCRIPTION })
}

/// Runs the chain from `(r0, b0)` until θ or the caps.
pub fn run_to_theta(
    r0: i64,
    b0: i64,
    sampler: &StepSampler,
    rng: &mut RngStream,
    caps: Caps,
) -> Result<PeelingOutcome, PeelingError> {
    let mut st = PeelingState::with_volume_cap(r0, b0, caps.volume_cap)?;
    loop {
        let censored = match caps.rule {
            CensorRule::Steps | CensorRule::Either if st.step >= caps.step_cap => Some(Censoring::StepCap),
            CensorRule::Either if st.v() > caps.volume_cap => Some(Censoring::VolumeCap),
            CensorRule::Both if st.step >= caps.step_cap && st.red_saturated() => Some(Censoring::StepAndVolume),
            _ => None,
        };
        if censored.is_some() {
            return Ok(PeelingOutcome {
                theta: st.step,
                censored,
                delta: st.last_all_red,
                v_theta: st.v(),
                v_red_theta_minus_1: st.v_red,
                perimeter_lower_proxy: 1 + st.step - st.last_all_red,
                volume_saturated: st.saturated(),
            });
        }
        let v_red_before = st.v_red;
        st.step(sampler, rng)?;
        if st.done {
            return Ok(PeelingOutcome {
                theta: st.step,
                censored: None,
                delta: st.last_all_red,
                v_theta: st.v(),
                v_red_theta_minus_1: v_red_before,
                perimeter_lower_proxy: 1 + st.step - st.last_all_red,
                volume_saturated: st.saturated(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_examples() {
        // (2,3), red jump −4
        assert_eq!(reflect(2 - 4, 3), (0, 1));
        // (3,1), blue jump −2
        assert_eq!(reflect(3, 1 - 2), (2, 0));
        assert_eq!(reflect(4, 5), (4, 5));
        assert_eq!(reflect(0, 5), (0, 5));
    }

    #[test]
    fn constructor() {
        let st = PeelingState::new(1, 1).unwrap();
        assert_eq!((st.s(), st.r(), st.b(), st.step_index(), st.v()), (2, 1, 1, 0, 0));
        assert_eq!(st.last_all_red(), 1);
        assert_eq!(PeelingState::new(2, 0).unwrap().last_all_red(), 0);
        assert!(PeelingState::new(0, 5).is_err());
        assert!(PeelingState::new(1, 0).is_err());
    }

    #[test]
    fn first_step_from_two() {
        let sampler = StepSampler::shared();
        for seed in 0..200 {
            let mut rng = RngStream::new(seed, 0);
            let mut st = PeelingState::new(1, 1).unwrap();
            let rec = st.step(&sampler, &mut rng).unwrap();
            assert_eq!(rec.jump, 1);
            assert_eq!(rec.volume_added, 1);
            assert!((st.r(), st.b()) == (2, 1) || (st.r(), st.b()) == (1, 2));
        }
    }

    #[test]
    fn step_after_theta_is_an_error() {
        let sampler = StepSampler::shared();
        let mut rng = RngStream::new(3, 0);
        let mut st = PeelingState::new(1, 1).unwrap();
        while !st.finished() {
            st.step(&sampler, &mut rng).unwrap();
        }
        assert!(matches!(st.step(&sampler, &mut rng), Err(PeelingError::AfterTheta(_))));
    }

    #[test]
    fn perimeter_examples() {
        let mut o = PeelingOutcome {
            theta: 64,
            censored: None,
            delta: 12,
            v_theta: 100,
            v_red_theta_minus_1: 50,
            perimeter_lower_proxy: 53,
            volume_saturated: false,
        };
        assert_eq!(o.perimeter_lower().unwrap(), 53);
        o.delta = 64;
        assert_eq!(o.perimeter_lower().unwrap(), 1);
        o.censored = Some(Censoring::StepCap);
        assert_eq!(o.perimeter_lower(), Err(PeelingError::Censored));
    }
}
