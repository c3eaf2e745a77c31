//! Cross-discipline comparisons and buddy-disappearance curves, emitted as
//! tidy CSV for external plotting.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{format_prob, QueueDist};
use crate::error::{Error, Result};
use crate::exact::fcfs_asymptotic_mean;
use crate::meanfield::mf_fixed_point;
use crate::ode::IntegratorConfig;
use crate::pair_ps::{pair_ps_fixed_point, ps_buddy_rate, PairState};
use crate::params::{Discipline, ModelParams};
use crate::positional::{positional_fixed_point, PositionalState};
use crate::sim::{run_replications, SimConfig};
use crate::triplet::triplet_fixed_point;

/// `x -> h(x)` for `1 <= x <= xmax`, index 0 unused and zero.
pub fn buddy_rate_curve_ps(pi: &PairState) -> Vec<f64> {
    let mut h = vec![0.0; pi.xmax() + 1];
    for (x, v) in h.iter_mut().enumerate().skip(1) {
        *v = ps_buddy_rate(pi, x);
    }
    h
}

/// Probability that the buddy of a replica is in service (position 1),
/// indexed by the replica's position and by its queue length.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalBuddyCurves {
    pub by_position: Vec<f64>,
    pub by_length: Vec<f64>,
}

/// Buddy-in-service curves of an FCFS or LCFS state. Both disciplines serve
/// position 1 only, so the ratios are completion rates of the buddy.
pub fn buddy_rate_curves_positional(s: &PositionalState) -> PositionalBuddyCurves {
    let xmax = s.xmax();
    let m = s.marginals();
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let mut by_position = vec![0.0; xmax + 1];
    let mut by_length = vec![0.0; xmax + 1];
    for i in 1..=xmax {
        let (mut pn, mut pd, mut ln, mut ld) = (0.0, 0.0, 0.0, 0.0);
        for j in 1..=xmax {
            pn += m.m3(i, 1, j);
            pd += m.m2(i, j);
            ln += m.m3(j, 1, i);
            ld += m.m2(j, i);
        }
        by_position[i] = ratio(pn, pd);
        by_length[i] = ratio(ln, ld);
    }
    PositionalBuddyCurves {
        by_position,
        by_length,
    }
}

/// Outcome of one solver run inside a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
    #[serde(skip)]
    pub dist: Option<QueueDist>,
}

impl Cell {
    fn ok(dist: QueueDist, converged: bool) -> Self {
        Cell {
            mean: Some(dist.mean()),
            converged,
            error: None,
            dist: Some(dist),
        }
    }

    fn failed(e: Error) -> Self {
        Cell {
            mean: None,
            converged: false,
            error: Some(e.to_string()),
            dist: None,
        }
    }

    fn from_result(r: Result<(QueueDist, bool)>) -> Self {
        match r {
            Ok((dist, converged)) => Cell::ok(dist, converged),
            Err(e) => Cell::failed(e),
        }
    }
}

/// Simulation setup used by [`compare_disciplines`] when requested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub n: usize,
    pub horizon: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub ks: Vec<usize>,
    pub integrator: IntegratorConfig,
    pub xmax_pair: usize,
    pub xmax_triplet: usize,
    pub xmax_positional: usize,
    pub with_triplet: bool,
    pub sim: Option<SimSettings>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            ks: vec![2],
            integrator: IntegratorConfig::default(),
            xmax_pair: 50,
            xmax_triplet: 30,
            xmax_positional: 40,
            with_triplet: true,
            sim: None,
        }
    }
}

/// All approximations at one arrival rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub lambda: f64,
    pub mean_field: Cell,
    pub pair_ps: Cell,
    pub triplet_ps: Option<Cell>,
    pub pair_fcfs: Cell,
    pub pair_lps: Vec<(usize, Cell)>,
    pub pair_lcfs: Cell,
    /// Simulated (PS, FCFS, LPS(K) for each K, LCFS) means with CI half-widths.
    pub sim: Vec<(String, usize, Cell, Option<f64>)>,
    pub fcfs_asymptotic: Option<f64>,
}

impl ComparisonRow {
    /// Every cell with its label and K (1 where K is meaningless).
    pub fn cells(&self) -> Vec<(String, usize, &Cell)> {
        let mut out = vec![
            ("mf".to_string(), 1, &self.mean_field),
            ("pair-ps".to_string(), 1, &self.pair_ps),
        ];
        if let Some(c) = &self.triplet_ps {
            out.push(("triplet-ps".to_string(), 1, c));
        }
        out.push(("pair-fcfs".to_string(), 1, &self.pair_fcfs));
        for (k, c) in &self.pair_lps {
            out.push(("pair-lps".to_string(), *k, c));
        }
        out.push(("pair-lcfs".to_string(), 1, &self.pair_lcfs));
        for (label, k, c, _) in &self.sim {
            out.push((label.clone(), *k, c));
        }
        out
    }

    /// `mean / mean(pair-fcfs)`; `x / x` is exactly 1 in floating point.
    pub fn ratio_to_fcfs(&self, mean: f64) -> Option<f64> {
        self.pair_fcfs.mean.map(|fcfs| mean / fcfs)
    }
}

#[derive(Debug, Clone, Copy)]
enum Job {
    MeanField,
    PairPs,
    Triplet,
    Fcfs,
    Lps(usize),
    Lcfs,
    Sim(Discipline, usize),
}

fn solve(lambda: f64, job: Job, o: &CompareOptions) -> (Cell, Option<f64>) {
    let cfg = &o.integrator;
    let base = |d: Discipline, xmax: usize| ModelParams::new(lambda, 2, d).with_xmax(xmax);
    let positional =
        |p: ModelParams| positional_fixed_point(&p, cfg).map(|s| (s.dist, s.converged));
    let cell = match job {
        Job::MeanField => {
            Cell::from_result(mf_fixed_point(&base(Discipline::Ps, o.xmax_pair)).map(|d| (d, true)))
        }
        Job::PairPs => Cell::from_result(
            pair_ps_fixed_point(&base(Discipline::Ps, o.xmax_pair), cfg)
                .map(|s| (s.dist, s.converged)),
        ),
        Job::Triplet => Cell::from_result(
            triplet_fixed_point(&base(Discipline::Ps, o.xmax_triplet), cfg)
                .map(|s| (s.dist, s.converged)),
        ),
        Job::Fcfs => Cell::from_result(positional(base(Discipline::Fcfs, o.xmax_positional))),
        Job::Lps(k) => Cell::from_result(positional(
            base(Discipline::Lps, o.xmax_positional).with_k(k),
        )),
        Job::Lcfs => Cell::from_result(positional(base(Discipline::Lcfs, o.xmax_positional))),
        Job::Sim(d, k) => {
            let s = o.sim.expect("simulation jobs need settings");
            let cfg = SimConfig {
                params: base(d, o.xmax_pair).with_k(k),
                n: s.n,
                horizon: s.horizon,
                warmup_fraction: s.warmup_fraction,
                seed: s.seed,
                replications: s.replications,
            };
            return match run_replications(&cfg) {
                Ok(st) => (Cell::ok(st.qdist, true), st.ci_halfwidth),
                Err(e) => (Cell::failed(e), None),
            };
        }
    };
    (cell, None)
}

/// Runs every solver (and optionally the simulator) at each `lambda`.
/// Solver failures are kept in their cell; only invalid input is fatal.
pub fn compare_disciplines(lambdas: &[f64], o: &CompareOptions) -> Result<Vec<ComparisonRow>> {
    for &l in lambdas {
        ModelParams::new(l, 2, Discipline::Ps).validate()?;
    }
    if o.ks.contains(&0) {
        return Err(Error::param("K", "LPS slot counts must be >= 1"));
    }
    o.integrator.validate()?;

    let mut jobs = vec![Job::MeanField, Job::PairPs];
    if o.with_triplet {
        jobs.push(Job::Triplet);
    }
    jobs.push(Job::Fcfs);
    jobs.extend(o.ks.iter().map(|&k| Job::Lps(k)));
    jobs.push(Job::Lcfs);
    if o.sim.is_some() {
        jobs.push(Job::Sim(Discipline::Ps, 1));
        jobs.push(Job::Sim(Discipline::Fcfs, 1));
        jobs.extend(o.ks.iter().map(|&k| Job::Sim(Discipline::Lps, k)));
        jobs.push(Job::Sim(Discipline::Lcfs, 1));
    }
    let tasks: Vec<(f64, Job)> = lambdas
        .iter()
        .flat_map(|&l| jobs.iter().map(move |&j| (l, j)))
        .collect();
    let results: Vec<(Cell, Option<f64>)> =
        tasks.par_iter().map(|&(l, j)| solve(l, j, o)).collect();

    let mut rows = Vec::with_capacity(lambdas.len());
    let mut it = tasks.iter().zip(results);
    for &lambda in lambdas {
        let mut row = ComparisonRow {
            lambda,
            mean_field: Cell::failed(Error::Solve("not run".into())),
            pair_ps: Cell::failed(Error::Solve("not run".into())),
            triplet_ps: None,
            pair_fcfs: Cell::failed(Error::Solve("not run".into())),
            pair_lps: Vec::new(),
            pair_lcfs: Cell::failed(Error::Solve("not run".into())),
            sim: Vec::new(),
            fcfs_asymptotic: fcfs_asymptotic_mean(lambda).ok(),
        };
        for _ in 0..jobs.len() {
            let (&(_, job), (cell, ci)) = it.next().expect("one result per task");
            match job {
                Job::MeanField => row.mean_field = cell,
                Job::PairPs => row.pair_ps = cell,
                Job::Triplet => row.triplet_ps = Some(cell),
                Job::Fcfs => row.pair_fcfs = cell,
                Job::Lps(k) => row.pair_lps.push((k, cell)),
                Job::Lcfs => row.pair_lcfs = cell,
                Job::Sim(d, k) => row.sim.push((format!("sim-{d}"), k, cell, ci)),
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `compare.csv`: `lambda,discipline,K,mean,ratio_to_fcfs`. Failed cells
/// leave `mean` and the ratio empty; the asymptotic FCFS formula appears
/// as discipline `fcfs-asymptotic`.
pub fn write_compare_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "discipline", "K", "mean", "ratio_to_fcfs"])?;
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.10}")).unwrap_or_default();
    for row in rows {
        let mut entries: Vec<(String, usize, Option<f64>)> = row
            .cells()
            .into_iter()
            .map(|(label, k, c)| (label, k, c.mean))
            .collect();
        entries.push(("fcfs-asymptotic".to_string(), 1, row.fcfs_asymptotic));
        for (label, k, mean) in entries {
            let ratio = mean.and_then(|m| row.ratio_to_fcfs(m));
            w.write_record([
                row.lambda.to_string(),
                label,
                k.to_string(),
                fmt(mean),
                fmt(ratio),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `dist.csv`: `lambda,discipline,x,q` for every cell with a distribution.
/// LPS labels carry their K as `pair-lps(K)`.
pub fn write_dist_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "discipline", "x", "q"])?;
    for row in rows {
        for (label, k, cell) in row.cells() {
            let Some(dist) = &cell.dist else { continue };
            let label = if label.ends_with("lps") {
                format!("{label}({k})")
            } else {
                label
            };
            for (x, v) in dist.q().iter().enumerate() {
                w.write_record([
                    row.lambda.to_string(),
                    label.clone(),
                    x.to_string(),
                    format_prob(*v),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One named curve for `buddy.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct BuddyCurve {
    pub discipline: String,
    pub index_kind: String,
    pub rates: Vec<f64>,
}

/// `buddy.csv`: `discipline,index_kind,index,rate` for indices `1..`.
pub fn write_buddy_csv<W: Write>(curves: &[BuddyCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["discipline", "index_kind", "index", "rate"])?;
    for c in curves {
        for (i, r) in c.rates.iter().enumerate().skip(1) {
            w.write_record([
                c.discipline.clone(),
                c.index_kind.clone(),
                i.to_string(),
                format_prob(*r),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::positional::{Kernel, PairIndex};

    #[test]
    fn ps_curve_starts_at_zero_and_is_linear_under_independence() {
        let lambda: f64 = 0.6;
        let q: Vec<f64> = (1..=30).map(|x| (1.0 - lambda) * lambda.powi(x)).collect();
        let pi = PairState::product_form(&q);
        let h = buddy_rate_curve_ps(&pi);
        assert_eq!(h[1], 0.0);
        let slope = h[2];
        for (x, v) in h.iter().enumerate().skip(2) {
            assert!((v - slope * (x - 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn buddies_all_in_service_give_unit_curves() {
        let xmax = 6;
        let mut s = PositionalState::empty(Kernel::Fcfs, xmax);
        // every replica and buddy sits at the head of its queue
        for x2 in 1..=xmax {
            for y2 in 1..=xmax {
                s.set(1, 1, x2, y2, 0.01).unwrap();
            }
        }
        let c = buddy_rate_curves_positional(&s);
        assert_eq!(c.by_position[1], 1.0);
        for x in 1..=xmax {
            assert_eq!(c.by_length[x], 1.0);
        }
        // positions other than 1 carry no mass: 0/0 is guarded to 0
        assert_eq!(c.by_position[2], 0.0);
    }

    #[test]
    fn positional_curves_are_probabilities() {
        let kernel = Kernel::Lcfs;
        let xmax = 8;
        let idx = PairIndex::new(kernel, xmax);
        let m2: Vec<f64> = (0..idx.len()).map(|i| 1.0 / (1 + i) as f64).collect();
        let s = PositionalState::independent(kernel, xmax, &m2).unwrap();
        let c = buddy_rate_curves_positional(&s);
        for v in c.by_position.iter().chain(&c.by_length) {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn fcfs_ratio_is_exactly_one() {
        let rows = compare_disciplines(
            &[0.3],
            &CompareOptions {
                with_triplet: false,
                xmax_pair: 20,
                xmax_positional: 15,
                ..CompareOptions::default()
            },
        )
        .unwrap();
        let row = &rows[0];
        let fcfs = row.pair_fcfs.mean.unwrap();
        assert_eq!(row.ratio_to_fcfs(fcfs), Some(1.0));
        for (label, _, cell) in row.cells() {
            assert!(cell.converged, "{label}");
        }
        let mut buf = Vec::new();
        write_compare_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lambda,discipline,K,mean,ratio_to_fcfs\n"));
        assert!(text.contains("0.3,pair-fcfs,1,"));
        assert!(text.contains("fcfs-asymptotic"));
        let mut buf = Vec::new();
        write_dist_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("pair-lps(2)"));
    }

    #[test]
    fn rejects_bad_lambda() {
        let e = compare_disciplines(&[1.2], &CompareOptions::default()).unwrap_err();
        assert_eq!(e.field(), Some("lambda"));
    }
}
