//! Suites: parallel replicate runs, deterministic aggregation in replicate
//! order, and pass/fail criteria.

use super::config::{ExperimentConfig, RootColoring};
use super::fit::{fit_tail_exponent, hill_estimate};
use super::report::{fmt_f64, BuildInfo, Criterion, DataTable, Report, Timing, Tolerance};
use super::stats::{bonferroni, chi_square_gof, chi_square_independence, ks_two_sample};
use super::survival::{estimate_survival, SurvivalCurve};
use super::ExperimentError;
use crate::exact_laws::{
    annealed_tail_constant, boltzmann_volume_mean, boltzmann_volume_pmf, boltzmann_volume_ratio, harmonic_h,
    kernel_pmf, ladder_height_pmf, ladder_jump_pmf, lambda_pmf, lambda_pmf_exact, step_neg_moment_tail, step_pmf,
    P_UP,
};
use crate::ladder_walks::{
    run_lambda, sample_crossing_from, sample_leg_u_given_h, sample_quadruple, sample_unconditioned_leg_t, unconditioned_walk_summary,
    LadderConfig, LadderQuadruple, QuadrupleDraw,
};
use crate::peeling::{run_to_theta, Caps, CensorRule, PeelingOutcome};
use crate::samplers::{
    derive_seed, sample_boltzmann_volume, sample_boltzmann_volume_capped, sample_coloring, RngStream, StepSampler,
};
use rayon::prelude::*;
use serde::Serialize;
use std::panic::AssertUnwindSafe;
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteId {
    ThetaTails,
    VolumeTails,
    PerimeterTails,
    Identities,
    LawsSelfcheck,
}

impl SuiteId {
    pub const ALL: [SuiteId; 5] =
        [Self::ThetaTails, Self::VolumeTails, Self::PerimeterTails, Self::Identities, Self::LawsSelfcheck];

    pub fn name(self) -> &'static str {
        match self {
            Self::ThetaTails => "theta_tails",
            Self::VolumeTails => "volume_tails",
            Self::PerimeterTails => "perimeter_tails",
            Self::Identities => "identities",
            Self::LawsSelfcheck => "laws_selfcheck",
        }
    }
}

impl FromStr for SuiteId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown suite {s:?}"))
    }
}

/// A report plus the CSV data behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutput {
    pub report: Report,
    pub table: DataTable,
}

pub const THETA_EXPONENT: f64 = -1.0 / 6.0;
pub const VOLUME_EXPONENT: f64 = -1.0 / 8.0;
pub const THETA_SLOPE_RANGE: (f64, f64) = (-0.21, -0.13);
pub const VOLUME_SLOPE_RANGE: (f64, f64) = (-0.18, -0.08);
pub const PERIMETER_SLOPE_RANGE: (f64, f64) = (-0.22, -0.12);
/// Largest relative spread of `P̂(T > t)·t^a` across the stabilization range.
pub const STABILIZATION_SPREAD: f64 = 0.25;
pub const ANNEALED_RELATIVE_TOL: f64 = 0.15;

pub const LAMBDA_K_CAP: u64 = 20;
pub const VYSOTSKY_INDICES: [usize; 3] = [1, 2, 5];
pub const VYSOTSKY_BINS: usize = 5;
/// Event cap for the legs behind the H and L marginals; high enough that
/// few legs need their crossing drawn exactly.
pub const MARGINAL_LEG_EVENT_CAP: u64 = 1 << 20;
/// Cells `1..=MARGINAL_CELLS` plus a tail cell for the H and L marginals.
pub const MARGINAL_CELLS: u64 = 30;
/// Steps per walk in the Harris check.
pub const HARRIS_STEPS: u32 = 50;
pub const HARRIS_MIN_LEVEL: i64 = -5;

const BLOCK: u64 = 1 << 16;

pub fn run_suite(cfg: &ExperimentConfig, suite: SuiteId) -> Result<SuiteOutput, ExperimentError> {
    cfg.validate()?;
    let start = Instant::now();
    let grid_max = cfg.grid.max_point()?;
    let cap_check = |cap: u64, what: &str| {
        if cap < grid_max {
            Err(ExperimentError::InvalidConfig(format!("{what} {cap} is below the grid maximum {grid_max}")))
        } else {
            Ok(())
        }
    };
    let (criteria, table) = match suite {
        SuiteId::ThetaTails => {
            cap_check(cfg.step_cap, "step_cap")?;
            theta_tails(cfg, &peel_replicates(cfg, CensorRule::Steps)?)?
        }
        SuiteId::VolumeTails => {
            cap_check(cfg.volume_cap, "volume_cap")?;
            volume_tails(cfg, &peel_replicates(cfg, CensorRule::Both)?)?
        }
        SuiteId::PerimeterTails => {
            cap_check(cfg.step_cap, "step_cap")?;
            perimeter_tails(cfg, &peel_replicates(cfg, CensorRule::Both)?)?
        }
        SuiteId::Identities => identities(cfg)?,
        SuiteId::LawsSelfcheck => laws_selfcheck(cfg)?,
    };
    let report = Report {
        config: cfg.clone(),
        suite,
        build: BuildInfo::default(),
        criteria,
        timing: Timing { wall_seconds: start.elapsed().as_secs_f64() },
    };
    Ok(SuiteOutput { report, table })
}

/// Runs `f(i)` for every replicate on `workers` threads, in replicate order.
pub fn par_replicates<T, F>(workers: usize, n: u64, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
    pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                std::panic::catch_unwind(AssertUnwindSafe(|| f(i)))
                    .map_err(|p| ExperimentError::WorkerPanic { replicate: i, msg: panic_message(&*p) })
            })
            .collect()
    })
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".to_string())
}

/// Histogram of `cell(rng)` over `total` draws, in blocks of 2^16 draws with
/// stream id = block index.
fn par_histogram<F>(workers: usize, seed: u64, total: u64, cells: usize, cell: F) -> Result<Vec<u64>, ExperimentError>
where
    F: Fn(&mut RngStream) -> usize + Sync + Send,
{
    let blocks = total.div_ceil(BLOCK);
    let parts = par_replicates(workers, blocks, |b| {
        let mut rng = RngStream::new(seed, b);
        let mut h = vec![0u64; cells];
        let n = BLOCK.min(total - b * BLOCK);
        for _ in 0..n {
            h[cell(&mut rng)] += 1;
        }
        h
    })?;
    let mut out = vec![0u64; cells];
    for p in parts {
        for (o, x) in out.iter_mut().zip(p) {
            *o += x;
        }
    }
    Ok(out)
}

fn start_for(cfg: &ExperimentConfig, rng: &mut RngStream) -> (i64, i64) {
    match cfg.root_coloring {
        RootColoring::Fixed => cfg.start,
        RootColoring::Random => {
            if sample_coloring(rng) {
                (2, 0)
            } else {
                (1, 1)
            }
        }
    }
}

/// One peeling run per replicate, replicate `i` on stream `i` of the master seed.
pub fn peel_replicates(cfg: &ExperimentConfig, rule: CensorRule) -> Result<Vec<PeelingOutcome>, ExperimentError> {
    let sampler = StepSampler::shared();
    let caps = Caps { step_cap: cfg.step_cap, volume_cap: cfg.volume_cap, rule };
    let runs = par_replicates(cfg.effective_workers(), cfg.replicates, |i| {
        let mut rng = RngStream::new(cfg.master_seed, i);
        let (r0, b0) = start_for(cfg, &mut rng);
        run_to_theta(r0, b0, &sampler, &mut rng, caps)
    })?;
    runs.into_iter().map(|r| r.map_err(ExperimentError::from)).collect()
}

pub const TABLE_HEADER: [&str; 8] = ["series", "x", "count", "total", "estimate", "lower", "upper", "reference"];

fn new_table() -> DataTable {
    DataTable::new(&TABLE_HEADER)
}

fn push_curve(table: &mut DataTable, series: &str, curve: &SurvivalCurve, reference: impl Fn(u64) -> Option<f64>) {
    for j in 0..curve.grid.len() {
        table.push(vec![
            series.to_string(),
            curve.grid[j].to_string(),
            curve.exceedances[j].to_string(),
            curve.total.to_string(),
            fmt_f64(curve.prob(j)),
            fmt_f64(curve.lower[j]),
            fmt_f64(curve.upper[j]),
            reference(curve.grid[j]).map(fmt_f64).unwrap_or_default(),
        ]);
    }
}

/// Rows `x, count` for a pmf histogram; `labels` name the cells.
fn push_pmf(table: &mut DataTable, series: &str, labels: &[String], counts: &[u64], probs: Option<&[f64]>) {
    let total: u64 = counts.iter().sum();
    for (i, (label, &k)) in labels.iter().zip(counts).enumerate() {
        let (lo, hi) = super::survival::wilson_interval(k, total);
        table.push(vec![
            series.to_string(),
            label.clone(),
            k.to_string(),
            total.to_string(),
            fmt_f64(k as f64 / total.max(1) as f64),
            fmt_f64(lo),
            fmt_f64(hi),
            probs.map(|p| fmt_f64(p[i])).unwrap_or_default(),
        ]);
    }
}

/// OLS slope criterion, with the Hill estimate and the stabilized constant in the note.
fn slope_criterion(
    name: &str,
    curve: &SurvivalCurve,
    samples: &[(u64, bool)],
    fit_range: (usize, usize),
    exponent: f64,
    (lo, hi): (f64, f64),
) -> Criterion {
    let tol = Tolerance::Interval { lo, hi };
    let fit = match fit_tail_exponent(curve, fit_range) {
        Ok(f) => f,
        Err(e) => return Criterion::failed(name, exponent, tol, e.to_string()),
    };
    let consts: Vec<f64> = (fit_range.0..=fit_range.1)
        .map(|j| curve.prob(j) * (curve.grid[j] as f64).powf(-exponent))
        .collect();
    let (cmin, cmax) = min_max(&consts);
    let hill = match hill_estimate(samples, curve.grid[fit_range.0], curve.grid[fit_range.1]) {
        Ok(h) => format!(
            "hill {:.4} ± {:.4} ({}agrees within 3 se)",
            h.slope,
            h.stderr,
            if h.agrees_with(&fit, 3.0) { "" } else { "dis" }
        ),
        Err(e) => format!("hill unavailable: {e}"),
    };
    Criterion::new(name, fit.slope, exponent, tol).with_note(format!(
        "ols stderr {:.4}; {hill}; P·n^{:.4} in [{cmin:.4}, {cmax:.4}]",
        fit.stderr, -exponent
    ))
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

fn censored_note(outs: &[PeelingOutcome]) -> String {
    let c = outs.iter().filter(|o| o.is_censored()).count();
    format!("{c} of {} runs censored", outs.len())
}

/// `P(θ > n)`: censored runs are known to have `θ > step`.
pub fn theta_tails(
    cfg: &ExperimentConfig,
    outs: &[PeelingOutcome],
) -> Result<(Vec<Criterion>, DataTable), ExperimentError> {
    let grid = cfg.grid.points()?;
    let samples: Vec<(u64, bool)> =
        outs.iter().map(|o| if o.is_censored() { (o.theta + 1, true) } else { (o.theta, false) }).collect();
    let curve = estimate_survival(&samples, &grid)?;
    let c = slope_criterion("theta_slope", &curve, &samples, cfg.fit_range, THETA_EXPONENT, THETA_SLOPE_RANGE);
    let note = format!("{}; {}", c.note.clone().unwrap_or_default(), censored_note(outs));
    let mut table = new_table();
    push_curve(&mut table, "theta", &curve, |_| None);
    Ok((vec![c.with_note(note)], table))
}

/// `P(V^r_{θ−1} > n)`, `P(V_θ > n)` and the pathwise sandwich. A value above
/// the volume cap (saturated) or from a censored run is a lower bound.
pub fn volume_tails(
    cfg: &ExperimentConfig,
    outs: &[PeelingOutcome],
) -> Result<(Vec<Criterion>, DataTable), ExperimentError> {
    let grid = cfg.grid.points()?;
    let cap = cfg.volume_cap;
    let bound = |v: u64, censored: bool| (v, censored || v > cap);
    let red: Vec<(u64, bool)> = outs.iter().map(|o| bound(o.v_red_theta_minus_1, o.is_censored())).collect();
    let all: Vec<(u64, bool)> = outs.iter().map(|o| bound(o.v_theta, o.is_censored())).collect();
    let red_curve = estimate_survival(&red, &grid)?;
    let all_curve = estimate_survival(&all, &grid)?;
    let r = slope_criterion("v_red_slope", &red_curve, &red, cfg.fit_range, VOLUME_EXPONENT, VOLUME_SLOPE_RANGE);
    let v = slope_criterion("v_theta_slope", &all_curve, &all, cfg.fit_range, VOLUME_EXPONENT, VOLUME_SLOPE_RANGE);
    let done: Vec<&PeelingOutcome> = outs.iter().filter(|o| !o.is_censored()).collect();
    let ok = done.iter().filter(|o| o.v_red_theta_minus_1 <= o.v_theta).count();
    let frac = if done.is_empty() { f64::NAN } else { ok as f64 / done.len() as f64 };
    let sandwich = Criterion::new("volume_sandwich", frac, 1.0, Tolerance::Absolute { tol: 0.0 })
        .with_note(format!("{ok} of {} uncensored runs; {}", done.len(), censored_note(outs)));
    let mut table = new_table();
    push_curve(&mut table, "v_red_theta_minus_1", &red_curve, |_| None);
    push_curve(&mut table, "v_theta", &all_curve, |_| None);
    Ok((vec![r, v, sandwich], table))
}

/// `P(1 + θ − Δ > n)`. A censored run's Δ is unknown; such runs are counted
/// as exceedances at every grid point, which slightly overstates the tail.
pub fn perimeter_tails(
    cfg: &ExperimentConfig,
    outs: &[PeelingOutcome],
) -> Result<(Vec<Criterion>, DataTable), ExperimentError> {
    let grid = cfg.grid.points()?;
    let top = *grid.last().unwrap();
    let samples: Vec<(u64, bool)> = outs
        .iter()
        .map(|o| {
            if o.is_censored() {
                (top + 1, true)
            } else {
                (o.perimeter_lower_proxy, false)
            }
        })
        .collect();
    let curve = estimate_survival(&samples, &grid)?;
    let c = slope_criterion(
        "perimeter_lower_slope",
        &curve,
        &samples,
        cfg.fit_range,
        THETA_EXPONENT,
        PERIMETER_SLOPE_RANGE,
    );
    let note = format!(
        "{}; {} counted as exceedances; lower proxy 1+theta-delta only, E not simulated",
        c.note.clone().unwrap_or_default(),
        censored_note(outs)
    );
    let mut table = new_table();
    push_curve(&mut table, "perimeter_lower", &curve, |_| None);
    Ok((vec![c.with_note(note)], table))
}

fn p_value_criterion(name: &str, p: Result<f64, ExperimentError>, alpha: f64) -> Criterion {
    let tol = Tolerance::AtLeast { min: alpha };
    match p {
        Ok(p) => Criterion::new(name, p, alpha, tol),
        Err(e) => Criterion::failed(name, alpha, tol, e.to_string()),
    }
}

/// `max/min − 1` of `P̂(X > n)·n^{power}` over the fit range.
fn stabilization_criterion(name: &str, curve: &SurvivalCurve, range: (usize, usize), power: f64) -> Criterion {
    let tol = Tolerance::AtMost { max: STABILIZATION_SPREAD };
    if range.1 >= curve.grid.len() {
        return Criterion::failed(name, 0.0, tol, "fit range outside grid");
    }
    let consts: Vec<f64> = (range.0..=range.1).map(|j| curve.prob(j) * (curve.grid[j] as f64).powf(power)).collect();
    let (lo, hi) = min_max(&consts);
    Criterion::new(name, hi / lo - 1.0, 0.0, tol).with_note(format!("constant in [{lo:.4}, {hi:.4}]"))
}

/// Cell counts `1..=cells` plus a tail cell, and the matching probabilities.
fn marginal_cells(values: impl Iterator<Item = u64>, cells: u64, pmf: fn(u64) -> f64) -> (Vec<u64>, Vec<f64>) {
    let mut counts = vec![0u64; cells as usize + 1];
    for v in values {
        let i = if v >= 1 && v <= cells { v as usize - 1 } else { cells as usize };
        counts[i] += 1;
    }
    let mut probs: Vec<f64> = (1..=cells).map(pmf).collect();
    probs.push(1.0 - probs.iter().sum::<f64>());
    (counts, probs)
}

fn cell_labels(cells: u64) -> Vec<String> {
    (1..=cells).map(|k| k.to_string()).chain(std::iter::once(format!(">{cells}"))).collect()
}

/// Ladder identities and the H, L, T and T↑ laws.
pub fn identities(cfg: &ExperimentConfig) -> Result<(Vec<Criterion>, DataTable), ExperimentError> {
    let sampler = StepSampler::shared();
    let workers = cfg.effective_workers();
    let alpha = cfg.significance;
    let n = cfg.replicates;
    let leg_cfg = LadderConfig { max_events: cfg.leg_event_cap, volume_cap: None };
    let grid = cfg.grid.points()?;
    let mut criteria = Vec::new();
    let mut table = new_table();

    // Kept quadruples; T and U come from disjoint halves so the two KS samples are independent.
    let seed = derive_seed(cfg.master_seed, "quadruples");
    let quads: Vec<(LadderQuadruple, u64)> = par_replicates(workers, n, |i| {
        let mut rng = RngStream::new(seed, i);
        let mut discarded = 0;
        loop {
            match sample_quadruple(&mut rng, &sampler, &leg_cfg) {
                QuadrupleDraw::Kept(q) => return (q, discarded),
                QuadrupleDraw::Discarded { .. } => discarded += 1,
            }
        }
    })?;
    let half = quads.len() / 2;
    let discarded: u64 = quads.iter().map(|q| q.1).sum();
    let ts: Vec<f64> = quads[..half].iter().map(|q| q.0.t).collect();
    let us: Vec<f64> = quads[half..].iter().map(|q| q.0.u).collect();
    let ks = ks_two_sample(&ts, &us);
    criteria.push(
        p_value_criterion("ks_t_vs_u", ks.map(|r| r.p_value), alpha)
            .with_note(format!("{} kept quadruples, {discarded} discarded at the leg event cap", quads.len())),
    );
    let d1: Vec<f64> = quads[..half].iter().map(|q| q.0.t - q.0.u).collect();
    let d2: Vec<f64> = quads[half..].iter().map(|q| q.0.u - q.0.t).collect();
    criteria.push(p_value_criterion("ks_t_minus_u_symmetry", ks_two_sample(&d1, &d2).map(|r| r.p_value), alpha));

    // Λ runs.
    let record = *VYSOTSKY_INDICES.iter().max().unwrap();
    let seed = derive_seed(cfg.master_seed, "lambda");
    let runs = par_replicates(workers, n, |i| {
        let mut rng = RngStream::new(seed, i);
        run_lambda(&mut rng, &sampler, &leg_cfg, LAMBDA_K_CAP, record)
    })?;
    let (counts, probs) = marginal_cells(runs.iter().map(|r| r.lambda.unwrap_or(0)), LAMBDA_K_CAP, lambda_pmf);
    criteria.push(p_value_criterion("lambda_pmf", chi_square_gof(&counts, &probs).map(|r| r.p_value), alpha));
    push_pmf(&mut table, "lambda", &cell_labels(LAMBDA_K_CAP), &counts, Some(&probs));
    let alpha_v = bonferroni(alpha, VYSOTSKY_INDICES.len());
    for &k in &VYSOTSKY_INDICES {
        let sums: Vec<f64> = runs.iter().map(|r| r.prefix[k - 1].0 + r.prefix[k - 1].1).collect();
        let mut sorted = sums.clone();
        sorted.sort_by(f64::total_cmp);
        let cuts: Vec<f64> = (1..VYSOTSKY_BINS).map(|q| sorted[q * sorted.len() / VYSOTSKY_BINS]).collect();
        let mut tab = vec![vec![0u64; VYSOTSKY_BINS]; 2];
        for (r, s) in runs.iter().zip(&sums) {
            let row = usize::from(r.lambda.is_none_or(|l| l > k as u64));
            tab[row][cuts.partition_point(|c| c <= s)] += 1;
        }
        criteria.push(
            p_value_criterion(
                &format!("vysotsky_n{k}"),
                chi_square_independence(&tab).map(|r| r.p_value),
                alpha_v,
            )
            .with_note(format!("{{Lambda>{k}}} x quintiles of T_{k}+U_{k}; Bonferroni over 3")),
        );
    }

    // T-legs with a high event cap for the H and L marginals and the T tail.
    let seed = derive_seed(cfg.master_seed, "t_legs");
    let marg_cfg = LadderConfig { max_events: MARGINAL_LEG_EVENT_CAP.max(cfg.leg_event_cap), volume_cap: None };
    // A leg still running at the cap gets its crossing (H, L) drawn exactly
    // from the killed-walk Green function at its current level.
    let legs = par_replicates(workers, n, |i| {
        let mut rng = RngStream::new(seed, i);
        let leg = sample_unconditioned_leg_t(&mut rng, &sampler, &marg_cfg);
        let hl = if leg.complete { (leg.h, leg.l) } else { sample_crossing_from(&mut rng, &sampler, leg.end) };
        (leg, hl)
    })?;
    let incomplete = legs.iter().filter(|(l, _)| !l.complete).count();
    let note = format!(
        "{incomplete} of {} legs incomplete at {} events, crossing drawn exactly",
        legs.len(),
        marg_cfg.max_events
    );
    let (hc, hp) = marginal_cells(legs.iter().map(|(_, hl)| hl.0), MARGINAL_CELLS, ladder_height_pmf);
    criteria.push(
        p_value_criterion("ladder_height_pmf", chi_square_gof(&hc, &hp).map(|r| r.p_value), alpha)
            .with_note(note.clone()),
    );
    push_pmf(&mut table, "ladder_height", &cell_labels(MARGINAL_CELLS), &hc, Some(&hp));
    let (lc, lp) = marginal_cells(legs.iter().map(|(_, hl)| hl.1), MARGINAL_CELLS, ladder_jump_pmf);
    criteria.push(p_value_criterion("ladder_jump_pmf", chi_square_gof(&lc, &lp).map(|r| r.p_value), alpha).with_note(note));
    push_pmf(&mut table, "ladder_jump", &cell_labels(MARGINAL_CELLS), &lc, Some(&lp));
    let t_samples: Vec<(u64, bool)> = legs.iter().map(|(l, _)| (l.t.ceil() as u64, !l.complete)).collect();
    match estimate_survival(&t_samples, &grid) {
        Ok(curve) => {
            criteria.push(stabilization_criterion("t_tail_stabilization", &curve, cfg.fit_range, 1.0 / 3.0));
            push_curve(&mut table, "t_tail", &curve, |_| None);
        }
        Err(e) => criteria.push(Criterion::failed(
            "t_tail_stabilization",
            0.0,
            Tolerance::AtMost { max: STABILIZATION_SPREAD },
            e.to_string(),
        )),
    }

    // Ascending ladder durations T↑: climbs from 0 to 1.
    let seed = derive_seed(cfg.master_seed, "t_up");
    let climbs = par_replicates(workers, 10 * n, |i| {
        let mut rng = RngStream::new(seed, i);
        sample_leg_u_given_h(&mut rng, &sampler, 1, &leg_cfg)
    })?;
    let up_samples: Vec<(u64, bool)> = climbs.iter().map(|c| (c.u.ceil() as u64, !c.complete)).collect();
    match estimate_survival(&up_samples, &grid) {
        Ok(curve) => {
            criteria.push(stabilization_criterion("t_up_tail_stabilization", &curve, cfg.fit_range, 2.0 / 3.0));
            push_curve(&mut table, "t_up_tail", &curve, |_| None);
        }
        Err(e) => criteria.push(Criterion::failed(
            "t_up_tail_stabilization",
            0.0,
            Tolerance::AtMost { max: STABILIZATION_SPREAD },
            e.to_string(),
        )),
    }
    Ok((criteria, table))
}

/// Terms summed before the tail correction in the Boltzmann mean check.
pub const BOLTZMANN_MEAN_TERMS: u64 = 1 << 25;

/// `Σ n P(Y = n)` for the d-gon law: direct sum over `n ≤ N` plus the tail
/// `P(N)·N^{5/2}·Σ_{n>N} n^{−3/2} ≈ P(N)·N^{5/2}·2(N+½)^{−1/2}`.
pub fn boltzmann_mean_by_summation(d: u64, terms: u64) -> f64 {
    let mut p = boltzmann_volume_pmf(d, 0);
    let mut s = 0.0;
    for n in 0..terms {
        p *= boltzmann_volume_ratio(d, n);
        s += (n + 1) as f64 * p;
    }
    let nf = terms as f64;
    s + p * nf.powf(2.5) * 2.0 / (nf + 0.5).sqrt()
}

/// Exact-law identities, sampler chi-square checks, the annealed volume tail
/// and the Harris check.
pub fn laws_selfcheck(cfg: &ExperimentConfig) -> Result<(Vec<Criterion>, DataTable), ExperimentError> {
    let workers = cfg.effective_workers();
    let alpha = cfg.significance;
    let n = cfg.replicates;
    let sampler = StepSampler::shared();
    let mut criteria = Vec::new();
    let mut table = new_table();

    let row_err = (2..=200i64)
        .map(|n| ((2..=n + 1).map(|m| kernel_pmf(n, m).unwrap()).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    criteria.push(Criterion::new("kernel_row_sums", row_err, 0.0, Tolerance::AtMost { max: 1e-10 }));
    let harm_err = (1..=100i64)
        .map(|x| {
            let s: f64 = (1 - x..=1).map(|k| harmonic_h(x + k) * step_pmf(k)).sum();
            (s / harmonic_h(x) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    criteria.push(Criterion::new("harmonicity", harm_err, 0.0, Tolerance::AtMost { max: 1e-9 }));
    const MEAN_TERMS: u64 = 1_000_000;
    let neg: f64 = (1..MEAN_TERMS).map(|j| j as f64 * step_pmf(-(j as i64))).sum::<f64>()
        + step_neg_moment_tail(MEAN_TERMS);
    criteria.push(Criterion::new("step_mean_zero", P_UP - neg, 0.0, Tolerance::Absolute { tol: 1e-10 }));
    let k23 = kernel_pmf(2, 3).unwrap();
    criteria.push(Criterion::new("kernel_2_3", k23, 1.0, Tolerance::Absolute { tol: 1e-12 }));
    let mean_err = (2..=10u64)
        .map(|d| (boltzmann_mean_by_summation(d, BOLTZMANN_MEAN_TERMS) - boltzmann_volume_mean(d)).abs())
        .fold(0.0, f64::max);
    criteria.push(Criterion::new("boltzmann_mean", mean_err, 0.0, Tolerance::AtMost { max: 1e-6 }));
    let expected = [(1u128, 2u128), (1, 8), (1, 16), (5, 128)];
    let mismatches = (1..=4u32)
        .filter(|&k| {
            let (num, den) = lambda_pmf_exact(k);
            let q = num as f64 / den as f64;
            (num, den) != expected[k as usize - 1] || (lambda_pmf(k as u64) - q).abs() > 1e-15 * q
        })
        .count();
    criteria.push(Criterion::new("lambda_exact", mismatches as f64, 0.0, Tolerance::AtMost { max: 0.0 }));

    // Step sampler: cells +1, −1, …, −1000 and a tail.
    const STEP_CELLS: i64 = 1000;
    let seed = derive_seed(cfg.master_seed, "step_sampler");
    let counts = par_histogram(workers, seed, 10 * n, STEP_CELLS as usize + 2, |rng| {
        let k = sampler.sample_step(rng);
        if k == 1 {
            0
        } else {
            (-k).min(STEP_CELLS + 1) as usize
        }
    })?;
    let mut probs: Vec<f64> = std::iter::once(P_UP).chain((1..=STEP_CELLS).map(|j| step_pmf(-j))).collect();
    probs.push(sampler.law().tail(STEP_CELLS as u64 + 1));
    criteria.push(p_value_criterion("step_sampler", chi_square_gof(&counts, &probs).map(|r| r.p_value), alpha));

    for &kn in &[2i64, 3, 5, 10, 50, 500] {
        let seed = derive_seed(cfg.master_seed, &format!("kernel_{kn}"));
        let counts = par_histogram(workers, seed, n, kn as usize, |rng| {
            (sampler.sample_conditioned_step(rng, kn).expect("n >= 2") - 2) as usize
        })?;
        let probs: Vec<f64> = (2..=kn + 1).map(|m| kernel_pmf(kn, m).unwrap()).collect();
        let name = format!("kernel_sampler_n{kn}");
        if kn == 2 {
            // p_{2,3} = 1: every draw must be 3.
            let off = counts[..1].iter().sum::<u64>();
            criteria.push(
                Criterion::new(name, off as f64, 0.0, Tolerance::AtMost { max: 0.0 })
                    .with_note("degenerate row; value counts draws other than 3"),
            );
        } else {
            criteria.push(p_value_criterion(&name, chi_square_gof(&counts, &probs).map(|r| r.p_value), alpha));
        }
    }

    const VOLUME_CELLS: u64 = 4000;
    for &d in &[2u64, 3, 5, 10] {
        let seed = derive_seed(cfg.master_seed, &format!("boltzmann_{d}"));
        let counts = par_histogram(workers, seed, n, VOLUME_CELLS as usize + 1, |rng| {
            sample_boltzmann_volume(rng, 1 - d as i64).expect("valid jump").min(VOLUME_CELLS) as usize
        })?;
        let mut probs: Vec<f64> = (0..VOLUME_CELLS).map(|v| boltzmann_volume_pmf(d, v)).collect();
        probs.push(1.0 - probs.iter().sum::<f64>());
        criteria.push(p_value_criterion(
            &format!("boltzmann_sampler_d{d}"),
            chi_square_gof(&counts, &probs).map(|r| r.p_value),
            alpha,
        ));
    }

    // Annealed volume step: pooled P̂(Y > x)·x^{3/4} over the fit range.
    let grid = cfg.grid.points()?;
    let limit = grid.last().unwrap() + 1;
    let seed = derive_seed(cfg.master_seed, "annealed");
    let total = 10 * n;
    let hist = par_histogram(workers, seed, total, grid.len() + 1, |rng| {
        let x = sampler.sample_step(rng);
        let y = sample_boltzmann_volume_capped(rng, x, limit);
        grid.partition_point(|&g| g < y)
    })?;
    let exceed: Vec<u64> = (0..grid.len()).map(|j| hist[j + 1..].iter().sum()).collect();
    let curve = SurvivalCurve::from_counts(grid.clone(), exceed, total);
    let c = annealed_tail_constant();
    let (lo, hi) = cfg.fit_range;
    let num: f64 = (lo..=hi).map(|j| curve.exceedances[j] as f64).sum();
    let den: f64 = (lo..=hi).map(|j| total as f64 * (grid[j] as f64).powf(-0.75)).sum();
    criteria.push(
        Criterion::new("annealed_tail_constant", num / den, c, Tolerance::Relative { tol: ANNEALED_RELATIVE_TOL })
            .with_note(format!(
                "pooled over x in [{}, {}], {} exceedances",
                grid[lo],
                grid[hi],
                num as u64
            )),
    );
    push_curve(&mut table, "annealed_volume_tail", &curve, |x| Some(c * (x as f64).powf(-0.75)));

    // Harris: A = {S_50 ≥ 0}, B = {min S_k ≥ −5}.
    let seed = derive_seed(cfg.master_seed, "harris");
    let h = par_histogram(workers, seed, n, 4, |rng| {
        let (s, m) = unconditioned_walk_summary(rng, &sampler, HARRIS_STEPS);
        usize::from(s >= 0) + 2 * usize::from(m >= HARRIS_MIN_LEVEL)
    })?;
    let nf = n as f64;
    let pa = (h[1] + h[3]) as f64 / nf;
    let pb = (h[2] + h[3]) as f64 / nf;
    let pab = h[3] as f64 / nf;
    let sigma = (pab * (1.0 - pab) / nf).sqrt();
    criteria.push(
        Criterion::new("harris", pab - pa * pb, 0.0, Tolerance::AtLeast { min: -3.0 * sigma })
            .with_note(format!("P(A)={pa:.5} P(B)={pb:.5} P(AB)={pab:.5}")),
    );
    let labels: Vec<String> = ["neither", "A_only", "B_only", "A_and_B"].iter().map(|s| s.to_string()).collect();
    push_pmf(&mut table, "harris", &labels, &h, None);
    Ok((criteria, table))
}
