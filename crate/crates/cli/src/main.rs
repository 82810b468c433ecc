//! `uipt-peel`: exact-law dumps, peeling runs, ladder samples and suites.
//!
//! Exit codes: 0 success, 1 failed criterion or failed run, 2 usage error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use uipt_peel::exact_laws::{
    boltzmann_volume_pmf, harmonic_h, kernel_pmf, ladder_height_pmf, ladder_jump_pmf, lambda_pmf, step_pmf,
    step_tail,
};
use uipt_peel::experiments::config::ExperimentConfig;
use uipt_peel::experiments::report::{fmt_f64, DataTable, Report};
use uipt_peel::experiments::suites::{par_replicates, peel_replicates, run_suite, SuiteId};
use uipt_peel::experiments::ExperimentError;
use uipt_peel::ladder_walks::{
    joint_two_walk_theta, run_lambda, sample_quadruple, JointCaps, LadderConfig, QuadrupleDraw, DEFAULT_EPS,
};
use uipt_peel::peeling::CensorRule;
use uipt_peel::samplers::{derive_seed, RngStream, StepSampler};

const GIT_DESCRIBE: &str = env!("UIPT_PEEL_GIT_DESCRIBE");

const CONFIG_HELP: &str = "\
Config file (--config FILE), one entry per line:
  line  := blank | '#' comment | key '=' value
  keys  := seed replicates step_cap volume_cap grid_base grid_ratio grid_count
           fit_lo fit_hi significance workers start root_coloring leg_event_cap
  value := unsigned integer (digits, '_' allowed) | decimal float | r0,b0 | fixed | random
Whitespace around keys and values is ignored. Unknown or repeated keys are errors.
Every key has a flag of the same name with '-' for '_'; flags override the file.
UIPT_PEEL_WORKERS overrides the worker count.

Exit codes: 0 success, 1 criterion failure or failed run, 2 usage error.";

#[derive(Parser, Debug)]
#[command(name = "uipt-peel", version, about = "Peeling process of critical site percolation on the UIPT")]
#[command(after_help = CONFIG_HELP)]
struct Cli {
    /// Config file applied before flags
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump a pmf, tail or kernel row as CSV `arg,value`
    Laws(LawsArgs),
    /// Peeling runs, one CSV row per replicate:
    /// replicate,theta,censored,delta,v_theta,v_red_theta_minus1,perim_lower
    Peel(PeelArgs),
    /// Tail suite (theta, volume or perimeter); JSON report
    Tails(TailsArgs),
    /// Ladder identity suite; JSON report
    Identities(SuiteArgs),
    /// Ladder samples as CSV. quadruples: replicate,T,U,H,L,Vb,Vr,discarded;
    /// lambda: replicate,lambda,T_sum,U_sum,V_sum,discarded (lambda empty if
    /// censored); joint: replicate,theta_hat,horizon,flagged,inclusions_ok
    Ladders(LaddersArgs),
    /// Several suites in one JSON report
    Report(ReportArgs),
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Master seed
    #[arg(long)]
    seed: Option<String>,
    /// Number of replicates
    #[arg(long)]
    replicates: Option<String>,
    /// Step cap per run
    #[arg(long)]
    step_cap: Option<String>,
    /// Volume cap per run
    #[arg(long)]
    volume_cap: Option<String>,
    /// First survival grid point
    #[arg(long)]
    grid_base: Option<String>,
    /// Ratio between grid points
    #[arg(long)]
    grid_ratio: Option<String>,
    /// Number of grid points
    #[arg(long)]
    grid_count: Option<String>,
    /// First grid index of the fit
    #[arg(long)]
    fit_lo: Option<String>,
    /// Last grid index of the fit
    #[arg(long)]
    fit_hi: Option<String>,
    /// Significance level of the tests
    #[arg(long)]
    significance: Option<String>,
    /// Worker threads
    #[arg(long)]
    workers: Option<String>,
    /// Initial state r0,b0
    #[arg(long, value_name = "R0,B0")]
    start: Option<String>,
    /// fixed, or random: (1,1) or (2,0) with probability 1/2
    #[arg(long)]
    root_coloring: Option<String>,
    /// Jump cap per ladder leg
    #[arg(long)]
    leg_event_cap: Option<String>,
}

impl ConfigArgs {
    fn entries(&self) -> [(&'static str, &Option<String>); 14] {
        [
            ("seed", &self.seed),
            ("replicates", &self.replicates),
            ("step_cap", &self.step_cap),
            ("volume_cap", &self.volume_cap),
            ("grid_base", &self.grid_base),
            ("grid_ratio", &self.grid_ratio),
            ("grid_count", &self.grid_count),
            ("fit_lo", &self.fit_lo),
            ("fit_hi", &self.fit_hi),
            ("significance", &self.significance),
            ("workers", &self.workers),
            ("start", &self.start),
            ("root_coloring", &self.root_coloring),
            ("leg_event_cap", &self.leg_event_cap),
        ]
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PmfKind {
    /// p_k
    Step,
    /// P(xi <= -k), k >= 1
    StepTail,
    /// h(k)
    Harmonic,
    /// p_{n,m} over m; needs --n
    Kernel,
    /// inner-vertex law of the d-gon; needs --d
    Boltzmann,
    /// ladder height H
    Height,
    /// crossing jump L
    Jump,
    /// Lambda
    Lambda,
}

#[derive(Args, Debug)]
struct LawsArgs {
    /// Law to tabulate
    #[arg(long, value_enum)]
    pmf: PmfKind,
    /// Inclusive integer range
    #[arg(long, value_name = "A..B", allow_hyphen_values = true)]
    range: String,
    /// Boundary size for --pmf kernel
    #[arg(long)]
    n: Option<i64>,
    /// Polygon size for --pmf boltzmann
    #[arg(long)]
    d: Option<u64>,
    /// Output file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RuleArg {
    /// stop at the step cap only
    Steps,
    /// stop at the step cap or once V exceeds the volume cap
    Either,
    /// stop once past the step cap and with V^r above the volume cap
    Both,
}

#[derive(Args, Debug)]
struct PeelArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Censoring rule
    #[arg(long, value_enum, default_value = "steps")]
    censor: RuleArg,
    /// Output file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TailSuite {
    Theta,
    Volume,
    Perimeter,
}

#[derive(Args, Debug)]
struct SuiteArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// JSON report file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV data file: series,x,count,total,estimate,lower,upper,reference
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TailsArgs {
    /// Tail to estimate
    #[arg(long, value_enum)]
    suite: TailSuite,
    #[command(flatten)]
    rest: SuiteArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum LadderMode {
    Quadruples,
    Lambda,
    Joint,
}

#[derive(Args, Debug)]
struct LaddersArgs {
    /// What to sample
    #[arg(long, value_enum)]
    mode: LadderMode,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Quadruple cap per lambda run
    #[arg(long, default_value_t = 1000)]
    k_cap: u64,
    /// Ladder epochs per joint path
    #[arg(long, default_value_t = 3)]
    ladders: usize,
    /// Last-passage truncation level for joint paths
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Output file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Comma-separated suites (default: all)
    #[arg(long, value_delimiter = ',')]
    suites: Vec<String>,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(String),
    Criteria,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::WorkerPanic { .. } => Failure::Run(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Criteria) => ExitCode::from(1),
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("--config {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let file = file.as_deref();
    match &cli.command {
        Command::Laws(a) => laws(a),
        Command::Peel(a) => peel(a, file),
        Command::Tails(a) => {
            let suite = match a.suite {
                TailSuite::Theta => SuiteId::ThetaTails,
                TailSuite::Volume => SuiteId::VolumeTails,
                TailSuite::Perimeter => SuiteId::PerimeterTails,
            };
            suite_cmd(suite, &a.rest, file)
        }
        Command::Identities(a) => suite_cmd(SuiteId::Identities, a, file),
        Command::Ladders(a) => ladders(a, file),
        Command::Report(a) => report(a, file),
    }
}

/// Suite defaults, then the config file, then flags.
fn build_config(suite: SuiteId, file: Option<&str>, flags: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::for_suite(suite);
    if let Some(text) = file {
        cfg.apply_text(text).map_err(|e| Failure::Usage(format!("--config: {e}")))?;
    }
    for (key, value) in flags.entries() {
        if let Some(v) = value {
            cfg.set(key, v).map_err(|e| Failure::Usage(format!("--{}: {e}", key.replace('_', "-"))))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Run(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Run(e.to_string()))
        }
    }
}

fn parse_range(s: &str) -> Result<(i64, i64), Failure> {
    let bad = || Failure::Usage(format!("--range: expected A..B, got {s:?}"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: i64 = a.trim().parse().map_err(|_| bad())?;
    let b: i64 = b.trim().parse().map_err(|_| bad())?;
    if a > b || b - a >= 10_000_000 {
        return Err(Failure::Usage(format!("--range: need A <= B and at most 10^7 values, got {s:?}")));
    }
    Ok((a, b))
}

fn laws(a: &LawsArgs) -> Result<(), Failure> {
    let (lo, hi) = parse_range(&a.range)?;
    let need_positive = |what: &str| {
        if lo < 1 {
            Err(Failure::Usage(format!("--range: {what} needs arguments >= 1")))
        } else {
            Ok(())
        }
    };
    let f: Box<dyn Fn(i64) -> f64> = match a.pmf {
        PmfKind::Step => Box::new(step_pmf),
        PmfKind::StepTail => {
            need_positive("step-tail")?;
            Box::new(|k| step_tail(k as u64))
        }
        PmfKind::Harmonic => Box::new(harmonic_h),
        PmfKind::Kernel => {
            let n = a.n.ok_or_else(|| Failure::Usage("--n is required for --pmf kernel".into()))?;
            kernel_pmf(n, n).map_err(|e| Failure::Usage(format!("--n: {e}")))?;
            Box::new(move |m| kernel_pmf(n, m).unwrap_or(0.0))
        }
        PmfKind::Boltzmann => {
            let d = a.d.ok_or_else(|| Failure::Usage("--d is required for --pmf boltzmann".into()))?;
            if lo < 0 {
                return Err(Failure::Usage("--range: boltzmann needs arguments >= 0".into()));
            }
            Box::new(move |n| boltzmann_volume_pmf(d, n as u64))
        }
        PmfKind::Height => {
            need_positive("height")?;
            Box::new(|k| ladder_height_pmf(k as u64))
        }
        PmfKind::Jump => {
            need_positive("jump")?;
            Box::new(|k| ladder_jump_pmf(k as u64))
        }
        PmfKind::Lambda => {
            need_positive("lambda")?;
            Box::new(|k| lambda_pmf(k as u64))
        }
    };
    let mut out = String::from("arg,value\n");
    for k in lo..=hi {
        out.push_str(&format!("{k},{}\n", fmt_f64(f(k))));
    }
    write_out(a.out.as_deref(), &out)
}

fn peel(a: &PeelArgs, file: Option<&str>) -> Result<(), Failure> {
    let cfg = build_config(SuiteId::ThetaTails, file, &a.cfg)?;
    let rule = match a.censor {
        RuleArg::Steps => CensorRule::Steps,
        RuleArg::Either => CensorRule::Either,
        RuleArg::Both => CensorRule::Both,
    };
    let outs = peel_replicates(&cfg, rule)?;
    let mut t = DataTable::new(&[
        "replicate",
        "theta",
        "censored",
        "delta",
        "v_theta",
        "v_red_theta_minus1",
        "perim_lower",
    ]);
    for (i, o) in outs.iter().enumerate() {
        t.push(vec![
            i.to_string(),
            o.theta.to_string(),
            u8::from(o.is_censored()).to_string(),
            o.delta.to_string(),
            o.v_theta.to_string(),
            o.v_red_theta_minus_1.to_string(),
            o.perimeter_lower_proxy.to_string(),
        ]);
    }
    let censored = outs.iter().filter(|o| o.is_censored()).count();
    eprintln!("peel: {} replicates, {censored} censored", outs.len());
    write_out(a.out.as_deref(), &t.to_csv())
}

fn finish_report(report: &mut Report) {
    report.build.git = GIT_DESCRIBE.to_string();
}

fn summarize(report: &Report) {
    eprintln!("suite {}:", report.suite.name());
    for c in &report.criteria {
        eprintln!("  {}", c.summary());
    }
}

fn suite_cmd(suite: SuiteId, a: &SuiteArgs, file: Option<&str>) -> Result<(), Failure> {
    let cfg = build_config(suite, file, &a.cfg)?;
    let mut out = run_suite(&cfg, suite)?;
    finish_report(&mut out.report);
    summarize(&out.report);
    write_out(a.out.as_deref(), &out.report.to_json())?;
    if let Some(p) = &a.csv {
        write_out(Some(p), &out.table.to_csv())?;
    }
    if out.report.passed() {
        Ok(())
    } else {
        Err(Failure::Criteria)
    }
}

fn ladders(a: &LaddersArgs, file: Option<&str>) -> Result<(), Failure> {
    let cfg = build_config(SuiteId::Identities, file, &a.cfg)?;
    if a.k_cap == 0 || a.ladders == 0 || !(a.eps > 0.0 && a.eps < 1.0) {
        return Err(Failure::Usage("--k-cap and --ladders must be positive and --eps in (0, 1)".into()));
    }
    let sampler = StepSampler::shared();
    let leg = LadderConfig { max_events: cfg.leg_event_cap, volume_cap: Some(cfg.volume_cap) };
    let workers = cfg.effective_workers();
    let n = cfg.replicates;
    let seed = cfg.master_seed;
    let t = match a.mode {
        LadderMode::Quadruples => {
            let rows = par_replicates(workers, n, |i| {
                let mut rng = RngStream::new(seed, i);
                let mut discarded = 0u64;
                loop {
                    if let QuadrupleDraw::Kept(q) = sample_quadruple(&mut rng, &sampler, &leg) {
                        return (q, discarded);
                    }
                    discarded += 1;
                }
            })?;
            let mut t = DataTable::new(&["replicate", "T", "U", "H", "L", "Vb", "Vr", "discarded"]);
            for (i, (q, d)) in rows.iter().enumerate() {
                t.push(vec![
                    i.to_string(),
                    fmt_f64(q.t),
                    fmt_f64(q.u),
                    q.h.to_string(),
                    q.l.to_string(),
                    q.vb.to_string(),
                    q.vr.to_string(),
                    d.to_string(),
                ]);
            }
            t
        }
        LadderMode::Lambda => {
            let rows = par_replicates(workers, n, |i| {
                let mut rng = RngStream::new(seed, i);
                run_lambda(&mut rng, &sampler, &leg, a.k_cap, 0)
            })?;
            let mut t = DataTable::new(&["replicate", "lambda", "T_sum", "U_sum", "V_sum", "discarded"]);
            for (i, r) in rows.iter().enumerate() {
                t.push(vec![
                    i.to_string(),
                    r.lambda.map(|l| l.to_string()).unwrap_or_default(),
                    fmt_f64(r.t_sum),
                    fmt_f64(r.u_sum),
                    r.v_sum.to_string(),
                    r.discarded.to_string(),
                ]);
            }
            t
        }
        LadderMode::Joint => {
            let caps = JointCaps { ladders: a.ladders, event_cap: cfg.leg_event_cap, eps: a.eps };
            let jseed = derive_seed(seed, "joint");
            let rows = par_replicates(workers, n, |i| {
                let mut rng = RngStream::new(jseed, i);
                joint_two_walk_theta(&mut rng, &sampler, caps)
            })?;
            let mut t = DataTable::new(&["replicate", "theta_hat", "horizon", "flagged", "inclusions_ok"]);
            for (i, r) in rows.iter().enumerate() {
                t.push(vec![
                    i.to_string(),
                    r.theta_hat.map(fmt_f64).unwrap_or_default(),
                    fmt_f64(r.horizon),
                    u8::from(r.flagged).to_string(),
                    u8::from(r.inclusions_ok).to_string(),
                ]);
            }
            let bad = rows.iter().filter(|r| !r.flagged && !r.inclusions_ok).count();
            if bad > 0 {
                write_out(a.out.as_deref(), &t.to_csv())?;
                eprintln!("ladders: inclusions violated on {bad} unflagged paths");
                return Err(Failure::Criteria);
            }
            t
        }
    };
    eprintln!("ladders: {} rows", t.rows.len());
    write_out(a.out.as_deref(), &t.to_csv())
}

fn report(a: &ReportArgs, file: Option<&str>) -> Result<(), Failure> {
    let suites: Vec<SuiteId> = if a.suites.is_empty() {
        SuiteId::ALL.to_vec()
    } else {
        a.suites
            .iter()
            .map(|s| s.parse().map_err(|e| Failure::Usage(format!("--suites: {e}"))))
            .collect::<Result<_, _>>()?
    };
    let mut reports = Vec::new();
    for s in suites {
        let cfg = build_config(s, file, &a.cfg)?;
        let mut out = run_suite(&cfg, s)?;
        finish_report(&mut out.report);
        summarize(&out.report);
        reports.push(out.report);
    }
    let passed = reports.iter().all(Report::passed);
    let json = serde_json::json!({ "reports": reports, "pass": passed });
    let mut text = serde_json::to_string_pretty(&json).map_err(|e| Failure::Run(e.to_string()))?;
    text.push('\n');
    write_out(a.out.as_deref(), &text)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Criteria)
    }
}
