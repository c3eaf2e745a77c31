//! Settings merged from an optional TOML file and command-line flags.
//!
//! The file uses the flag names as keys (`lambda = 0.9`, `K = 2`,
//! `lambdas = [0.5, 0.9]`, ...). Flags given on the command line win.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use redq_core::Discipline;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisciplineArg {
    Ps,
    Fcfs,
    Lcfs,
    Lps,
}

impl From<DisciplineArg> for Discipline {
    fn from(d: DisciplineArg) -> Self {
        match d {
            DisciplineArg::Ps => Discipline::Ps,
            DisciplineArg::Fcfs => Discipline::Fcfs,
            DisciplineArg::Lcfs => Discipline::Lcfs,
            DisciplineArg::Lps => Discipline::Lps,
        }
    }
}

/// Every setting any command reads. Missing values fall back to defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub lambda: Option<f64>,
    pub d: Option<usize>,
    #[serde(rename = "K", alias = "k")]
    pub k: Option<usize>,
    pub xmax: Option<usize>,
    pub dt: Option<f64>,
    pub tol: Option<f64>,
    pub tmax: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
    pub discipline: Option<DisciplineArg>,
    pub n: Option<usize>,
    pub horizon: Option<f64>,
    pub warmup: Option<f64>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub lambdas: Option<Vec<f64>>,
    pub ks: Option<Vec<usize>>,
    pub with_sim: Option<bool>,
    pub no_triplet: Option<bool>,
    pub kcap: Option<usize>,
    pub mcap: Option<usize>,
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),+) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )+
    };
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct CommonFlags {
    /// Arrival rate per server, 0 < lambda < 1
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of replicas per job
    #[arg(long)]
    pub d: Option<usize>,
    /// LPS service slots
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Queue-length truncation
    #[arg(long)]
    pub xmax: Option<usize>,
    /// Euler step
    #[arg(long)]
    pub dt: Option<f64>,
    /// Fixed-point tolerance on the sup-norm of the derivative
    #[arg(long)]
    pub tol: Option<f64>,
    /// Integration horizon
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Artifact path (a directory for `compare`); nothing is written without it
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Artifact format
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// TOML file with default values for any flag
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for replications and comparisons
    #[arg(long)]
    pub threads: Option<usize>,
}

impl CommonFlags {
    pub fn overlay(&self, s: &mut Settings) {
        overlay!(s, self, lambda, d, k, xmax, dt, tol, tmax, out, format, threads);
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimFlags {
    /// Number of servers
    #[arg(long)]
    pub n: Option<usize>,
    /// Simulated time per replication
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Fraction of the horizon discarded as warmup
    #[arg(long)]
    pub warmup: Option<f64>,
    /// Base RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of replications
    #[arg(long)]
    pub reps: Option<usize>,
}

impl SimFlags {
    pub fn overlay(&self, s: &mut Settings) {
        overlay!(s, self, n, horizon, warmup, seed, reps);
    }
}

#[derive(Debug, Clone, Args)]
pub struct CompareFlags {
    /// Arrival rates to compare, comma separated
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// LPS slot counts, comma separated
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Also simulate every discipline
    #[arg(long)]
    pub with_sim: bool,
    /// Skip the triplet approximation
    #[arg(long)]
    pub no_triplet: bool,
}

impl CompareFlags {
    pub fn overlay(&self, s: &mut Settings) {
        overlay!(s, self, lambdas, ks);
        if self.with_sim {
            s.with_sim = Some(true);
        }
        if self.no_triplet {
            s.no_triplet = Some(true);
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExactFlags {
    /// Per-class cap of the PS chain
    #[arg(long)]
    pub kcap: Option<usize>,
    /// Central-queue cap of the FCFS chain
    #[arg(long)]
    pub mcap: Option<usize>,
}

impl ExactFlags {
    pub fn overlay(&self, s: &mut Settings) {
        overlay!(s, self, kcap, mcap);
    }
}

/// File values first, then flags on top.
pub fn resolve(common: &CommonFlags, extra: impl FnOnce(&mut Settings)) -> Result<Settings> {
    let mut s = match &common.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    common.overlay(&mut s);
    extra(&mut s);
    Ok(s)
}
