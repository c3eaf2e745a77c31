//! Simulator behaviour seen through its public interface.

use redq_core::sim::{
    event_trace, live_jobs_after, run_replications, run_simulation, SimConfig, TraceEvent,
};
use redq_core::{Discipline, ModelParams};

fn config(d: Discipline, k: usize) -> SimConfig {
    SimConfig::new(ModelParams::new(0.8, 2, d).with_k(k), 50, 200.0)
}

#[test]
fn same_seed_same_result() {
    let c = config(Discipline::Lcfs, 1)
        .with_replications(3)
        .with_seed(11);
    let a = run_replications(&c).unwrap();
    let b = run_replications(&c).unwrap();
    assert_eq!(a.rep_means, b.rep_means);
    assert_eq!(a.qdist.q(), b.qdist.q());
    let other = run_replications(&c.with_seed(12)).unwrap();
    assert_ne!(a.rep_means, other.rep_means);
}

#[test]
fn lps_one_replays_fcfs() {
    let f = event_trace(&config(Discipline::Fcfs, 1), 5, 20_000).unwrap();
    let l = event_trace(&config(Discipline::Lps, 1), 5, 20_000).unwrap();
    assert_eq!(f, l);
}

#[test]
fn wide_lps_replays_ps() {
    let p = event_trace(&config(Discipline::Ps, 1), 8, 20_000).unwrap();
    let l = event_trace(&config(Discipline::Lps, 10_000), 8, 20_000).unwrap();
    assert_eq!(p, l);
}

#[test]
fn every_live_job_has_d_distinct_replicas() {
    for d in [2, 3] {
        let c = SimConfig::new(ModelParams::new(0.85, d, Discipline::Fcfs), 20, 100.0);
        for job in live_jobs_after(&c, 3, 5_000).unwrap() {
            let mut servers: Vec<usize> = job.replicas.iter().map(|r| r.0).collect();
            servers.sort_unstable();
            servers.dedup();
            assert_eq!(servers.len(), d);
        }
    }
}

#[test]
fn trace_alternates_sensibly() {
    let trace = event_trace(&config(Discipline::Ps, 1), 2, 5_000).unwrap();
    let mut last = 0.0;
    let mut arrivals = 0u64;
    for e in trace {
        let t = match e {
            TraceEvent::Arrival { time, job } => {
                assert_eq!(job, arrivals);
                arrivals += 1;
                time
            }
            TraceEvent::Completion { time, job, .. } => {
                assert!(job < arrivals);
                time
            }
        };
        assert!(t >= last);
        last = t;
    }
}

#[test]
fn distribution_is_normalised() {
    let s = run_simulation(&config(Discipline::Lps, 2), 4).unwrap();
    let total: f64 = s.qdist.q().iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(s.ci_halfwidth.is_none());
    assert_eq!(s.replications, 1);
}

#[test]
fn bad_configs_are_rejected() {
    assert!(run_replications(&config(Discipline::Ps, 1).with_replications(0)).is_err());
    assert!(run_replications(&config(Discipline::Ps, 1).with_warmup(1.0)).is_err());
    let c = SimConfig::new(ModelParams::new(0.8, 3, Discipline::Ps), 2, 10.0);
    assert!(run_replications(&c).is_err());
}
