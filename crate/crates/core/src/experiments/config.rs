//! Run configuration and its plain-text form.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! line  := blank | '#' comment | key '=' value
//! key   := one of the names in ExperimentConfig::KEYS
//! value := u64 (digits, '_' allowed) | f64 | "r0,b0" | fixed | random
//! ```
//!
//! Surrounding whitespace is ignored. Unknown and repeated keys are errors.

use super::survival::GridSpec;
use super::suites::SuiteId;
use super::ExperimentError;
use serde::Serialize;
use std::str::FromStr;

pub const WORKERS_ENV: &str = "UIPT_PEEL_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RootColoring {
    /// Always start from `start`.
    Fixed,
    /// Start from `(1,1)` or `(2,0)` with probability 1/2 each.
    Random,
}

impl FromStr for RootColoring {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "random" => Ok(Self::Random),
            _ => Err(format!("expected fixed or random, got {s:?}")),
        }
    }
}

impl RootColoring {
    fn as_str(self) -> &'static str {
        match self {
            Self::Fixed => "fixed",
            Self::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub replicates: u64,
    pub step_cap: u64,
    pub volume_cap: u64,
    pub grid: GridSpec,
    /// Inclusive grid indices.
    pub fit_range: (usize, usize),
    pub significance: f64,
    pub workers: usize,
    pub start: (i64, i64),
    pub root_coloring: RootColoring,
    /// Jump cap per ladder leg.
    pub leg_event_cap: u64,
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 14] = [
        "seed",
        "replicates",
        "step_cap",
        "volume_cap",
        "grid_base",
        "grid_ratio",
        "grid_count",
        "fit_lo",
        "fit_hi",
        "significance",
        "workers",
        "start",
        "root_coloring",
        "leg_event_cap",
    ];

    /// The recorded acceptance configuration of each suite.
    pub fn for_suite(suite: SuiteId) -> Self {
        let base = Self {
            master_seed: 42,
            replicates: 100_000,
            step_cap: 10_000,
            volume_cap: 1_000_000,
            grid: GridSpec::quarter_decades(100.0, 2),
            fit_range: (0, 8),
            significance: 1e-3,
            workers: default_workers(),
            start: (1, 1),
            root_coloring: RootColoring::Fixed,
            leg_event_cap: 1 << 15,
        };
        match suite {
            SuiteId::ThetaTails | SuiteId::PerimeterTails | SuiteId::Identities => base,
            SuiteId::VolumeTails => Self { grid: GridSpec::quarter_decades(100.0, 4), fit_range: (0, 16), ..base },
            SuiteId::LawsSelfcheck => Self {
                replicates: 1_000_000,
                grid: GridSpec::quarter_decades(100.0, 4),
                fit_range: (12, 16),
                ..base
            },
        }
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key {
            "seed" => self.master_seed = parse_u64(value)?,
            "replicates" => self.replicates = parse_u64(value)?,
            "step_cap" => self.step_cap = parse_u64(value)?,
            "volume_cap" => self.volume_cap = parse_u64(value)?,
            "grid_base" => self.grid.base = parse_f64(value)?,
            "grid_ratio" => self.grid.ratio = parse_f64(value)?,
            "grid_count" => self.grid.count = parse_u64(value)? as usize,
            "fit_lo" => self.fit_range.0 = parse_u64(value)? as usize,
            "fit_hi" => self.fit_range.1 = parse_u64(value)? as usize,
            "significance" => self.significance = parse_f64(value)?,
            "workers" => self.workers = parse_u64(value)? as usize,
            "start" => self.start = parse_start(value)?,
            "root_coloring" => self.root_coloring = value.parse()?,
            "leg_event_cap" => self.leg_event_cap = parse_u64(value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Applies every entry of a config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ExperimentError> {
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| ExperimentError::Config { line: i + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            let key = key.trim();
            if seen.iter().any(|k| k == key) {
                return Err(err(format!("repeated key {key:?}")));
            }
            self.set(key, value).map_err(err)?;
            seen.push(key.to_string());
        }
        Ok(())
    }

    /// Every key in canonical order; `apply_text` reproduces `self` exactly.
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        format!(
            "seed = {}\nreplicates = {}\nstep_cap = {}\nvolume_cap = {}\ngrid_base = {:?}\ngrid_ratio = {:?}\n\
             grid_count = {}\nfit_lo = {}\nfit_hi = {}\nsignificance = {:?}\nworkers = {}\nstart = {},{}\n\
             root_coloring = {}\nleg_event_cap = {}\n",
            self.master_seed,
            self.replicates,
            self.step_cap,
            self.volume_cap,
            g.base,
            g.ratio,
            g.count,
            self.fit_range.0,
            self.fit_range.1,
            self.significance,
            self.workers,
            self.start.0,
            self.start.1,
            self.root_coloring.as_str(),
            self.leg_event_cap,
        )
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidConfig(m.to_string()));
        if self.replicates == 0 {
            return bad("replicates must be positive");
        }
        if self.step_cap == 0 || self.volume_cap == 0 || self.leg_event_cap == 0 {
            return bad("caps must be positive");
        }
        let n = self.grid.points()?.len();
        if self.fit_range.0 > self.fit_range.1 || self.fit_range.1 >= n {
            return bad("fit range must lie within the grid");
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return bad("significance must lie in (0, 1)");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        let (r0, b0) = self.start;
        if r0 < 1 || b0 < 0 || r0 + b0 < 2 {
            return bad("start needs r0 >= 1, b0 >= 0 and r0 + b0 >= 2");
        }
        Ok(())
    }

    /// Worker count after the environment override.
    pub fn effective_workers(&self) -> usize {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&w| w > 0)
            .unwrap_or(self.workers)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_u64(s: &str) -> Result<u64, String> {
    if s.is_empty() || !s.chars().all(|c| c.is_ascii_digit() || c == '_') || s.starts_with('_') {
        return Err(format!("expected an unsigned integer, got {s:?}"));
    }
    s.replace('_', "").parse().map_err(|e| format!("{s:?}: {e}"))
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("expected a number, got {s:?}"))?;
    if !v.is_finite() {
        return Err(format!("expected a finite number, got {s:?}"));
    }
    Ok(v)
}

fn parse_start(s: &str) -> Result<(i64, i64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected r0,b0, got {s:?}"))?;
    let a = a.trim().parse().map_err(|_| format!("bad r0 in {s:?}"))?;
    let b = b.trim().parse().map_err(|_| format!("bad b0 in {s:?}"))?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for suite in SuiteId::ALL {
            let cfg = ExperimentConfig::for_suite(suite);
            let mut back = ExperimentConfig::for_suite(SuiteId::ThetaTails);
            back.apply_text(&cfg.to_text()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn comments_and_whitespace() {
        let mut cfg = ExperimentConfig::for_suite(SuiteId::ThetaTails);
        cfg.apply_text("# comment\n\n  seed =  7  \nreplicates=1_000\nstart = 2,0\nroot_coloring = random\n")
            .unwrap();
        assert_eq!((cfg.master_seed, cfg.replicates, cfg.start), (7, 1000, (2, 0)));
        assert_eq!(cfg.root_coloring, RootColoring::Random);
    }

    #[test]
    fn errors_name_the_line() {
        let mut cfg = ExperimentConfig::for_suite(SuiteId::ThetaTails);
        let e = cfg.apply_text("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(matches!(e, ExperimentError::Config { line: 2, .. }));
        let e = cfg.apply_text("seed = 1\nseed = 2\n").unwrap_err();
        assert!(matches!(e, ExperimentError::Config { line: 2, .. }));
        assert!(cfg.apply_text("replicates = -3\n").is_err());
        assert!(cfg.apply_text("no equals sign\n").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::for_suite(SuiteId::ThetaTails);
        assert!(cfg.validate().is_ok());
        cfg.fit_range = (0, 9);
        assert!(cfg.validate().is_err());
        cfg.fit_range = (0, 8);
        cfg.start = (0, 2);
        assert!(cfg.validate().is_err());
    }
}
