use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use redq_core::analysis::{
    buddy_rate_curve_ps, buddy_rate_curves_positional, compare_disciplines, write_buddy_csv,
    write_compare_csv, write_dist_csv, BuddyCurve, CompareOptions, SimSettings,
};
use redq_core::exact::{fcfs_n3_stationary, ps_n3_stationary, KCAP_DEFAULT, MCAP_DEFAULT};
use redq_core::meanfield::mf_fixed_point;
use redq_core::pair_ps::{pair_ps_d_fixed_point, pair_ps_fixed_point};
use redq_core::positional::positional_fixed_point;
use redq_core::sim::{run_replications, SimConfig};
use redq_core::triplet::triplet_fixed_point;
use redq_core::{Discipline, IntegratorConfig, ModelParams, QueueDist};
use serde_json::json;

mod config;
mod output;

use config::{
    resolve, CommonFlags, CompareFlags, DisciplineArg, ExactFlags, Format, Settings, SimFlags,
};
use output::{finish_csv, write_dist, write_json, Summary};

/// Queue-length approximations, simulation and exact references for
/// redundancy-d systems with cancel-on-complete.
///
/// Exit status: 0 on success, 2 on invalid input, 3 when a solver stopped
/// before converging (artifacts are still written and marked).
#[derive(Debug, Parser)]
#[command(name = "redq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mean-field fixed point (closed form)
    Mf(CommonFlags),
    /// Pair approximation for PS (any d >= 2)
    PairPs(CommonFlags),
    /// Triplet approximation for PS (d = 2, default xmax 30)
    TripletPs(CommonFlags),
    /// Positional pair approximation for FCFS (default xmax 40)
    PairFcfs(CommonFlags),
    /// Positional pair approximation for LPS(K) (default K 2, xmax 40)
    PairLps(CommonFlags),
    /// Positional pair approximation for LCFS (default xmax 40)
    PairLcfs(CommonFlags),
    /// Discrete-event simulation with replications
    Simulate(SimulateArgs),
    /// Exact three-server PS and FCFS distributions
    Exact3(Exact3Args),
    /// All approximations across arrival rates
    Compare(CompareArgs),
    /// Buddy-disappearance curves for PS, FCFS and LCFS
    Buddy(BuddyArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    sim: SimFlags,
    /// Service discipline
    #[arg(long, value_enum)]
    discipline: Option<DisciplineArg>,
}

#[derive(Debug, Args)]
struct Exact3Args {
    #[command(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    exact: ExactFlags,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    compare: CompareFlags,
    #[command(flatten)]
    sim: SimFlags,
}

#[derive(Debug, Args)]
struct BuddyArgs {
    #[command(flatten)]
    common: CommonFlags,
    /// Only this discipline (ps, fcfs or lcfs); all three by default
    #[arg(long, value_enum)]
    discipline: Option<DisciplineArg>,
}

/// Input rejected before any solver ran.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    match run(cli.command) {
        Ok(mut summary) => {
            summary.wall_time = start.elapsed().as_secs_f64();
            println!(
                "{}",
                serde_json::to_string(&summary).expect("summary serializes")
            );
            if summary.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("warning: solver stopped before reaching the tolerance");
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let bad_param = matches!(
        e.downcast_ref::<redq_core::Error>(),
        Some(redq_core::Error::InvalidParam { .. })
    );
    if bad_param || e.downcast_ref::<Invalid>().is_some() {
        2
    } else {
        1
    }
}

fn run(command: Command) -> Result<Summary> {
    match command {
        Command::Mf(c) => run_mf(&resolve(&c, |_| {})?),
        Command::PairPs(c) => run_pair_ps(&resolve(&c, |_| {})?),
        Command::TripletPs(c) => run_triplet(&resolve(&c, |_| {})?),
        Command::PairFcfs(c) => run_positional(&resolve(&c, |_| {})?, Discipline::Fcfs),
        Command::PairLps(c) => run_positional(&resolve(&c, |_| {})?, Discipline::Lps),
        Command::PairLcfs(c) => run_positional(&resolve(&c, |_| {})?, Discipline::Lcfs),
        Command::Simulate(a) => {
            let s = resolve(&a.common, |s| {
                a.sim.overlay(s);
                if a.discipline.is_some() {
                    s.discipline = a.discipline;
                }
            })?;
            run_simulate(&s)
        }
        Command::Exact3(a) => run_exact3(&resolve(&a.common, |s| a.exact.overlay(s))?),
        Command::Compare(a) => {
            let s = resolve(&a.common, |s| {
                a.compare.overlay(s);
                a.sim.overlay(s);
            })?;
            run_compare(&s)
        }
        Command::Buddy(a) => {
            let s = resolve(&a.common, |s| {
                if a.discipline.is_some() {
                    s.discipline = a.discipline;
                }
            })?;
            run_buddy(&s)
        }
    }
}

fn set_threads(s: &Settings) -> Result<()> {
    if let Some(t) = s.threads {
        if t == 0 {
            return Err(invalid("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn lambda(s: &Settings) -> Result<f64> {
    s.lambda.ok_or_else(|| invalid("--lambda is required"))
}

fn params(
    s: &Settings,
    discipline: Discipline,
    xmax_default: Option<usize>,
) -> Result<ModelParams> {
    let mut p = ModelParams::new(lambda(s)?, s.d.unwrap_or(2), discipline);
    if let Some(x) = s.xmax.or(xmax_default) {
        p.xmax = x;
    }
    let k_default = if discipline == Discipline::Lps { 2 } else { 1 };
    p.k = s.k.unwrap_or(k_default);
    p.validate()?;
    Ok(p)
}

fn integrator(s: &Settings) -> Result<IntegratorConfig> {
    let d = IntegratorConfig::default();
    let cfg = IntegratorConfig {
        dt: s.dt.unwrap_or(d.dt),
        t_max: s.tmax.unwrap_or(d.t_max),
        tol: s.tol.unwrap_or(d.tol),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn format(s: &Settings) -> Format {
    s.format.unwrap_or(Format::Csv)
}

fn emit_dist(
    s: &Settings,
    command: &'static str,
    dist: &QueueDist,
    p: &ModelParams,
    converged: bool,
) -> Result<Summary> {
    if dist.truncation_warning() {
        eprintln!(
            "warning: tail mass {:.3e} near xmax = {}; consider a larger --xmax",
            dist.tail_mass(),
            dist.xmax()
        );
    }
    if let Some(path) = &s.out {
        write_dist(path, format(s), dist, p, converged)?;
    }
    Ok(Summary::new(command, Some(dist.mean()), converged))
}

fn run_mf(s: &Settings) -> Result<Summary> {
    let p = params(s, Discipline::Ps, None)?;
    let dist = mf_fixed_point(&p)?;
    emit_dist(s, "mf", &dist, &p, true)
}

fn run_pair_ps(s: &Settings) -> Result<Summary> {
    let p = params(s, Discipline::Ps, None)?;
    let cfg = integrator(s)?;
    let (dist, converged) = if p.d == 2 {
        let r = pair_ps_fixed_point(&p, &cfg)?;
        (r.dist, r.converged)
    } else {
        let r = pair_ps_d_fixed_point(&p, &cfg)?;
        (r.dist, r.converged)
    };
    emit_dist(s, "pair-ps", &dist, &p, converged)
}

fn run_triplet(s: &Settings) -> Result<Summary> {
    let p = params(s, Discipline::Ps, Some(30))?;
    let r = triplet_fixed_point(&p, &integrator(s)?)?;
    emit_dist(s, "triplet-ps", &r.dist, &p, r.converged)
}

fn run_positional(s: &Settings, discipline: Discipline) -> Result<Summary> {
    let p = params(s, discipline, Some(40))?;
    let r = positional_fixed_point(&p, &integrator(s)?)?;
    let command = match discipline {
        Discipline::Fcfs => "pair-fcfs",
        Discipline::Lps => "pair-lps",
        _ => "pair-lcfs",
    };
    emit_dist(s, command, &r.dist, &p, r.converged)
}

fn run_simulate(s: &Settings) -> Result<Summary> {
    set_threads(s)?;
    let discipline: Discipline = s.discipline.unwrap_or(DisciplineArg::Ps).into();
    let p = params(s, discipline, None)?;
    let cfg = SimConfig {
        params: p,
        n: s.n.unwrap_or(1000),
        horizon: s.horizon.unwrap_or(1e4),
        warmup_fraction: s.warmup.unwrap_or(0.3),
        seed: s.seed.unwrap_or(1),
        replications: s.reps.unwrap_or(4),
    };
    let stats = run_replications(&cfg)?;
    if let Some(path) = &s.out {
        match format(s) {
            Format::Csv => {
                let mut w = output::create(path)?;
                stats.write_csv(&mut w)?;
                finish_csv(w, true)?;
            }
            Format::Json => write_json(path, &stats.to_json(&p))?,
        }
    }
    Ok(Summary::new("simulate", Some(stats.mean), true)
        .with("ci_halfwidth", stats.ci_halfwidth)
        .with("replications", stats.replications))
}

fn run_exact3(s: &Settings) -> Result<Summary> {
    let lambda = lambda(s)?;
    let kcap = s.kcap.unwrap_or(KCAP_DEFAULT);
    let mcap = s.mcap.unwrap_or(MCAP_DEFAULT);
    let ps = ps_n3_stationary(lambda, kcap)?;
    let fcfs = fcfs_n3_stationary(lambda, mcap)?;
    if let Some(path) = &s.out {
        match format(s) {
            Format::Json => write_json(
                path,
                &json!({
                    "lambda": lambda,
                    "kcap": kcap,
                    "mcap": mcap,
                    "ps_mean": ps.mean(),
                    "fcfs_mean": fcfs.mean(),
                    "ps_q": ps.q(),
                    "fcfs_q": fcfs.q(),
                }),
            )?,
            Format::Csv => {
                let mut w = csv::Writer::from_writer(output::create(path)?);
                w.write_record(["x", "ps", "fcfs"])?;
                for x in 0..=ps.xmax().max(fcfs.xmax()) {
                    w.write_record([
                        x.to_string(),
                        ps.prob(x).to_string(),
                        fcfs.prob(x).to_string(),
                    ])?;
                }
                w.flush()?;
            }
        }
    }
    Ok(Summary::new("exact3", None, true)
        .with("ps_mean", ps.mean())
        .with("fcfs_mean", fcfs.mean()))
}

fn run_compare(s: &Settings) -> Result<Summary> {
    set_threads(s)?;
    let lambdas = s.lambdas.clone().unwrap_or_else(|| vec![0.5, 0.7, 0.9]);
    if lambdas.is_empty() {
        bail!(Invalid("--lambdas needs at least one value".into()));
    }
    let mut o = CompareOptions {
        ks: s.ks.clone().unwrap_or_else(|| vec![2]),
        integrator: integrator(s)?,
        with_triplet: !s.no_triplet.unwrap_or(false),
        ..CompareOptions::default()
    };
    if let Some(x) = s.xmax {
        o.xmax_pair = x;
        o.xmax_triplet = x;
        o.xmax_positional = x;
    }
    if s.with_sim.unwrap_or(false) {
        o.sim = Some(SimSettings {
            n: s.n.unwrap_or(1000),
            horizon: s.horizon.unwrap_or(1e4),
            warmup_fraction: s.warmup.unwrap_or(0.3),
            seed: s.seed.unwrap_or(1),
            replications: s.reps.unwrap_or(4),
        });
    }
    let rows = compare_disciplines(&lambdas, &o)?;
    let mut converged = true;
    for row in &rows {
        for (label, k, cell) in row.cells() {
            if let Some(e) = &cell.error {
                eprintln!("warning: lambda={} {label} K={k}: {e}", row.lambda);
            }
            converged &= cell.converged;
        }
    }
    if let Some(dir) = &s.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        match format(s) {
            Format::Csv => {
                let mut w = output::create(&dir.join("compare.csv"))?;
                write_compare_csv(&rows, &mut w)?;
                finish_csv(w, converged)?;
                let mut w = output::create(&dir.join("dist.csv"))?;
                write_dist_csv(&rows, &mut w)?;
                finish_csv(w, converged)?;
            }
            Format::Json => write_json(&dir.join("compare.json"), &compare_json(&rows))?,
        }
    }
    Ok(Summary::new("compare", None, converged).with("rows", rows.len()))
}

fn compare_json(rows: &[redq_core::analysis::ComparisonRow]) -> serde_json::Value {
    let rows: Vec<_> = rows
        .iter()
        .map(|r| {
            let cells: Vec<_> = r
                .cells()
                .into_iter()
                .map(|(label, k, c)| {
                    json!({
                        "discipline": label,
                        "K": k,
                        "mean": c.mean,
                        "ratio_to_fcfs": c.mean.and_then(|m| r.ratio_to_fcfs(m)),
                        "converged": c.converged,
                        "error": c.error,
                        "q": c.dist.as_ref().map(|d| d.q().to_vec()),
                    })
                })
                .collect();
            json!({"lambda": r.lambda, "fcfs_asymptotic": r.fcfs_asymptotic, "cells": cells})
        })
        .collect();
    json!(rows)
}

fn run_buddy(s: &Settings) -> Result<Summary> {
    let cfg = integrator(s)?;
    let wanted: Vec<Discipline> = match s.discipline {
        None => vec![Discipline::Ps, Discipline::Fcfs, Discipline::Lcfs],
        Some(DisciplineArg::Lps) => {
            return Err(invalid("buddy curves are defined for ps, fcfs and lcfs"));
        }
        Some(d) => vec![d.into()],
    };
    let mut curves = Vec::new();
    let mut converged = true;
    for d in wanted {
        if d == Discipline::Ps {
            let p = params(s, d, None)?;
            let r = pair_ps_fixed_point(&p, &cfg)?;
            converged &= r.converged;
            curves.push(BuddyCurve {
                discipline: "ps".into(),
                index_kind: "length".into(),
                rates: buddy_rate_curve_ps(&r.state),
            });
        } else {
            let p = params(s, d, Some(40))?;
            let r = positional_fixed_point(&p, &cfg)?;
            converged &= r.converged;
            let c = buddy_rate_curves_positional(&r.state);
            for (kind, rates) in [("position", c.by_position), ("length", c.by_length)] {
                curves.push(BuddyCurve {
                    discipline: d.to_string(),
                    index_kind: kind.into(),
                    rates,
                });
            }
        }
    }
    if let Some(path) = &s.out {
        write_buddy(path, format(s), &curves, converged)?;
    }
    Ok(Summary::new("buddy", None, converged).with("curves", curves.len()))
}

fn write_buddy(path: &Path, format: Format, curves: &[BuddyCurve], converged: bool) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = output::create(path)?;
            write_buddy_csv(curves, &mut w)?;
            finish_csv(w, converged)
        }
        Format::Json => {
            let v: Vec<_> = curves
                .iter()
                .map(|c| json!({"discipline": c.discipline, "index_kind": c.index_kind, "rates": c.rates}))
                .collect();
            write_json(path, &json!({"converged": converged, "curves": v}))
        }
    }
}
