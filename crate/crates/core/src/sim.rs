//! Discrete-event simulation of n servers with redundancy-d and
//! cancel-on-complete under PS, FCFS, LCFS and LPS(K).
//!
//! Job sizes are exponential with unit mean and every busy server completes
//! work at rate 1 whatever its discipline, so a single global race suffices:
//! the next event comes after Exp(n lambda + B) time, with B busy servers, and
//! is either an arrival or a completion at a uniformly chosen busy server. The
//! discipline only decides which replica of that server finishes.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dist::{format_prob, DistJson, QueueDist};
use crate::error::{Error, Result};
use crate::params::{Discipline, ModelParams};

const NIL: u32 = u32::MAX;

/// Simulation run description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub n: usize,
    pub horizon: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub replications: usize,
}

impl SimConfig {
    pub fn new(params: ModelParams, n: usize, horizon: f64) -> Self {
        SimConfig {
            params,
            n,
            horizon,
            warmup_fraction: 0.3,
            seed: 1,
            replications: 4,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_warmup(mut self, fraction: f64) -> Self {
        self.warmup_fraction = fraction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n < self.params.d {
            return Err(Error::param(
                "n",
                format!(
                    "need n >= d = {} distinct servers, got {}",
                    self.params.d, self.n
                ),
            ));
        }
        if self.n >= NIL as usize {
            return Err(Error::param("n", format!("too many servers: {}", self.n)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::param(
                "horizon",
                format!("must be > 0, got {}", self.horizon),
            ));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::param(
                "warmup",
                format!("must lie in [0, 1), got {}", self.warmup_fraction),
            ));
        }
        if self.replications < 1 {
            return Err(Error::param("replications", "need at least one"));
        }
        Ok(())
    }
}

/// Seed of replication `rep`: the first word of ChaCha stream `rep` keyed by `seed`.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng.next_u64()
}

/// A live job: the replica handles it owns, one per server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobRecord {
    pub id: u64,
    pub replicas: Vec<(usize, Handle)>,
}

/// Stable reference to a replica slot inside a [`ServerQueue`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Handle(u32);

#[derive(Debug, Clone, Copy)]
struct Node {
    job: u32,
    prev: u32,
    next: u32,
}

/// Arrival-ordered replicas of a set of servers, kept as intrusive doubly
/// linked lists over one shared slab so removal by handle is O(1).
#[derive(Debug, Clone)]
pub struct ServerQueue {
    nodes: Vec<Node>,
    free: Vec<u32>,
    head: Vec<u32>,
    tail: Vec<u32>,
    len: Vec<u32>,
}

impl ServerQueue {
    pub fn new(servers: usize) -> Self {
        ServerQueue {
            nodes: Vec::new(),
            free: Vec::new(),
            head: vec![NIL; servers],
            tail: vec![NIL; servers],
            len: vec![0; servers],
        }
    }

    pub fn len(&self, s: usize) -> usize {
        self.len[s] as usize
    }

    pub fn is_empty(&self, s: usize) -> bool {
        self.len[s] == 0
    }

    /// Appends a replica of `job` at the tail of server `s`.
    pub fn push_back(&mut self, s: usize, job: u32) -> Handle {
        let node = Node {
            job,
            prev: self.tail[s],
            next: NIL,
        };
        let h = match self.free.pop() {
            Some(h) => {
                self.nodes[h as usize] = node;
                h
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        };
        match self.tail[s] {
            NIL => self.head[s] = h,
            t => self.nodes[t as usize].next = h,
        }
        self.tail[s] = h;
        self.len[s] += 1;
        Handle(h)
    }

    /// Unlinks the replica `h` of server `s`; the handle becomes invalid.
    pub fn remove(&mut self, s: usize, h: Handle) {
        let Node { prev, next, .. } = self.nodes[h.0 as usize];
        match prev {
            NIL => self.head[s] = next,
            p => self.nodes[p as usize].next = next,
        }
        match next {
            NIL => self.tail[s] = prev,
            n => self.nodes[n as usize].prev = prev,
        }
        self.len[s] -= 1;
        self.free.push(h.0);
    }

    pub fn head(&self, s: usize) -> Option<Handle> {
        (self.head[s] != NIL).then_some(Handle(self.head[s]))
    }

    pub fn tail(&self, s: usize) -> Option<Handle> {
        (self.tail[s] != NIL).then_some(Handle(self.tail[s]))
    }

    /// The `i`-th replica in arrival order (0 is the head).
    pub fn nth(&self, s: usize, i: usize) -> Option<Handle> {
        self.iter_first(s, i + 1).nth(i)
    }

    /// The first `min(k, len)` replicas of server `s` in arrival order.
    pub fn iter_first(&self, s: usize, k: usize) -> impl Iterator<Item = Handle> + '_ {
        let mut cur = self.head[s];
        (0..k).map_while(move |_| {
            if cur == NIL {
                return None;
            }
            let h = cur;
            cur = self.nodes[h as usize].next;
            Some(Handle(h))
        })
    }

    pub fn job(&self, h: Handle) -> u32 {
        self.nodes[h.0 as usize].job
    }
}

/// Servers with at least one replica, sampled uniformly in O(1).
#[derive(Debug, Clone)]
struct BusySet {
    items: Vec<u32>,
    pos: Vec<u32>,
}

impl BusySet {
    fn new(n: usize) -> Self {
        BusySet {
            items: Vec::new(),
            pos: vec![NIL; n],
        }
    }

    fn insert(&mut self, s: usize) {
        self.pos[s] = self.items.len() as u32;
        self.items.push(s as u32);
    }

    fn remove(&mut self, s: usize) {
        let i = self.pos[s] as usize;
        let last = self.items.pop().expect("busy set is not empty");
        if last as usize != s {
            self.items[i] = last;
            self.pos[last as usize] = i as u32;
        }
        self.pos[s] = NIL;
    }
}

/// Time-weighted count of servers per queue length, accumulated lazily:
/// a level is only integrated when its count changes.
#[derive(Debug, Clone)]
struct Occupancy {
    count: Vec<u64>,
    last: Vec<f64>,
    area: Vec<f64>,
    start: f64,
}

impl Occupancy {
    fn new(n: usize, start: f64) -> Self {
        Occupancy {
            count: vec![n as u64],
            last: vec![0.0],
            area: vec![0.0],
            start,
        }
    }

    fn settle(&mut self, x: usize, t: f64) {
        if x >= self.count.len() {
            self.count.resize(x + 1, 0);
            self.last.resize(x + 1, t);
            self.area.resize(x + 1, 0.0);
        }
        if t > self.start {
            let from = self.last[x].max(self.start);
            self.area[x] += self.count[x] as f64 * (t - from);
        }
        self.last[x] = t;
    }

    fn shift(&mut self, from: usize, to: usize, t: f64) {
        self.settle(from, t);
        self.settle(to, t);
        self.count[from] -= 1;
        self.count[to] += 1;
    }

    fn finish(mut self, t: f64, n: usize) -> Vec<f64> {
        for x in 0..self.count.len() {
            self.settle(x, t);
        }
        let norm = n as f64 * (t - self.start);
        self.area.iter().map(|a| a / norm).collect()
    }
}

/// One step of a simulation, for comparing runs event by event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceEvent {
    Arrival { time: f64, job: u64 },
    Completion { time: f64, server: usize, job: u64 },
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    queues: ServerQueue,
    busy: BusySet,
    // replica handles of job slot j at j*d..(j+1)*d, servers alongside
    job_handles: Vec<Handle>,
    job_servers: Vec<u32>,
    job_ids: Vec<u64>,
    free_jobs: Vec<u32>,
    next_id: u64,
    live_jobs: usize,
    live_replicas: usize,
    occ: Occupancy,
    picked: Vec<usize>,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, seed: u64) -> Self {
        let n = cfg.n;
        Sim {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queues: ServerQueue::new(n),
            busy: BusySet::new(n),
            job_handles: Vec::new(),
            job_servers: Vec::new(),
            job_ids: Vec::new(),
            free_jobs: Vec::new(),
            next_id: 0,
            live_jobs: 0,
            live_replicas: 0,
            occ: Occupancy::new(n, cfg.warmup_fraction * cfg.horizon),
            picked: Vec::with_capacity(cfg.params.d),
        }
    }

    fn exp(&mut self, rate: f64) -> f64 {
        // 1 - U lies in (0, 1], so the logarithm is finite
        let u: f64 = self.rng.gen();
        -(1.0 - u).ln() / rate
    }

    /// Runs until `horizon`, feeding every event to `on_event`.
    fn run(&mut self, mut on_event: impl FnMut(TraceEvent) -> bool) {
        let n_lambda = self.cfg.n as f64 * self.cfg.params.lambda;
        let horizon = self.cfg.horizon;
        let mut t = 0.0;
        loop {
            let busy = self.busy.items.len() as f64;
            let rate = n_lambda + busy;
            t += self.exp(rate);
            if t >= horizon {
                break;
            }
            let ev = if self.rng.gen::<f64>() * rate < n_lambda {
                self.arrive(t)
            } else {
                let i = self.rng.gen_range(0..self.busy.items.len());
                let s = self.busy.items[i] as usize;
                self.complete(s, t)
            };
            if !on_event(ev) {
                break;
            }
        }
    }

    fn arrive(&mut self, t: f64) -> TraceEvent {
        let d = self.cfg.params.d;
        let n = self.cfg.n;
        self.picked.clear();
        while self.picked.len() < d {
            let s = self.rng.gen_range(0..n);
            if !self.picked.contains(&s) {
                self.picked.push(s);
            }
        }
        let slot = match self.free_jobs.pop() {
            Some(j) => j,
            None => {
                let j = self.job_ids.len() as u32;
                self.job_ids.push(0);
                self.job_handles.extend(std::iter::repeat_n(Handle(NIL), d));
                self.job_servers.extend(std::iter::repeat_n(NIL, d));
                j
            }
        };
        let id = self.next_id;
        self.next_id += 1;
        self.job_ids[slot as usize] = id;
        for r in 0..d {
            let s = self.picked[r];
            let h = self.queues.push_back(s, slot);
            let len = self.queues.len(s);
            self.occ.shift(len - 1, len, t);
            if len == 1 {
                self.busy.insert(s);
            }
            self.job_handles[slot as usize * d + r] = h;
            self.job_servers[slot as usize * d + r] = s as u32;
        }
        self.live_jobs += 1;
        self.live_replicas += d;
        TraceEvent::Arrival { time: t, job: id }
    }

    /// Replica of server `s` that finishes, by discipline. When only one
    /// replica is eligible no random draw is spent, so LPS(1) and FCFS (and
    /// LPS with K at least the queue length and PS) consume identical streams.
    fn select(&mut self, s: usize) -> Handle {
        let len = self.queues.len(s);
        let p = &self.cfg.params;
        let eligible = match p.discipline {
            Discipline::Fcfs => 1,
            Discipline::Lcfs => {
                return self.queues.tail(s).expect("busy server has a tail");
            }
            Discipline::Ps => len,
            Discipline::Lps => p.k.min(len),
        };
        let i = if eligible == 1 {
            0
        } else {
            self.rng.gen_range(0..eligible)
        };
        self.queues.nth(s, i).expect("index within queue")
    }

    fn complete(&mut self, s: usize, t: f64) -> TraceEvent {
        let d = self.cfg.params.d;
        let h = self.select(s);
        let slot = self.queues.job(h) as usize;
        for r in 0..d {
            let server = self.job_servers[slot * d + r] as usize;
            let handle = self.job_handles[slot * d + r];
            debug_assert_eq!(self.queues.job(handle) as usize, slot);
            self.queues.remove(server, handle);
            self.live_replicas -= 1;
            let len = self.queues.len(server);
            self.occ.shift(len + 1, len, t);
            if len == 0 {
                self.busy.remove(server);
            }
        }
        self.free_jobs.push(slot as u32);
        self.live_jobs -= 1;
        debug_assert_eq!(self.live_replicas, d * self.live_jobs);
        TraceEvent::Completion {
            time: t,
            server: s,
            job: self.job_ids[slot],
        }
    }

    /// Live jobs with their replicas, mainly for inspection in tests.
    fn jobs(&self) -> Vec<JobRecord> {
        let d = self.cfg.params.d;
        let mut free = vec![false; self.job_ids.len()];
        for &j in &self.free_jobs {
            free[j as usize] = true;
        }
        (0..self.job_ids.len())
            .filter(|&j| !free[j])
            .map(|j| JobRecord {
                id: self.job_ids[j],
                replicas: (0..d)
                    .map(|r| {
                        (
                            self.job_servers[j * d + r] as usize,
                            self.job_handles[j * d + r],
                        )
                    })
                    .collect(),
            })
            .collect()
    }
}

/// Aggregated output of one or more replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub qdist: QueueDist,
    pub mean: f64,
    pub rep_means: Vec<f64>,
    /// Student-t 95% half-width across replication means; `None` for one run.
    pub ci_halfwidth: Option<f64>,
    pub replications: usize,
}

impl SimStats {
    fn from_runs(runs: Vec<Vec<f64>>) -> Result<Self> {
        let reps = runs.len();
        let width = runs.iter().map(Vec::len).max().unwrap_or(0).max(2);
        let mut q = vec![0.0; width];
        let mut rep_means = Vec::with_capacity(reps);
        for run in &runs {
            for (x, v) in run.iter().enumerate() {
                q[x] += v / reps as f64;
            }
            rep_means.push(run.iter().enumerate().map(|(x, v)| x as f64 * v).sum());
        }
        let qdist = QueueDist::new(q)?;
        let ci_halfwidth = student_halfwidth(&rep_means);
        Ok(SimStats {
            mean: qdist.mean(),
            qdist,
            rep_means,
            ci_halfwidth,
            replications: reps,
        })
    }

    pub fn to_json(&self, params: &ModelParams) -> SimJson {
        SimJson {
            dist: self.qdist.to_json(params, true),
            ci_halfwidth: self.ci_halfwidth,
            replications: self.replications,
            rep_means: self.rep_means.clone(),
        }
    }

    /// CSV with header `x,q,ci_halfwidth,replications`; the last two columns
    /// repeat on every row (empty half-width for a single replication).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "q", "ci_halfwidth", "replications"])?;
        let ci = self.ci_halfwidth.map(format_prob).unwrap_or_default();
        let reps = self.replications.to_string();
        for (x, v) in self.qdist.q().iter().enumerate() {
            w.write_record([x.to_string(), format_prob(*v), ci.clone(), reps.clone()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// JSON export of [`SimStats`]: the distribution fields plus the CI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimJson {
    #[serde(flatten)]
    pub dist: DistJson,
    pub ci_halfwidth: Option<f64>,
    pub replications: usize,
    pub rep_means: Vec<f64>,
}

fn student_halfwidth(samples: &[f64]) -> Option<f64> {
    let r = samples.len();
    if r < 2 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / r as f64;
    let var = samples.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (r - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Some(t * (var / r as f64).sqrt())
}

fn run_one(cfg: &SimConfig, rep_seed: u64) -> Vec<f64> {
    let mut sim = Sim::new(cfg, rep_seed);
    sim.run(|_| true);
    sim.occ.finish(cfg.horizon, cfg.n)
}

/// A single replication driven by `rep_seed`.
pub fn run_simulation(cfg: &SimConfig, rep_seed: u64) -> Result<SimStats> {
    cfg.validate()?;
    SimStats::from_runs(vec![run_one(cfg, rep_seed)])
}

/// `cfg.replications` independent runs seeded by [`replication_seed`], in
/// parallel on the current rayon pool. Output does not depend on the pool.
pub fn run_replications(cfg: &SimConfig) -> Result<SimStats> {
    cfg.validate()?;
    let runs: Vec<Vec<f64>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_one(cfg, replication_seed(cfg.seed, rep)))
        .collect();
    SimStats::from_runs(runs)
}

/// The first `max_events` events of a replication.
pub fn event_trace(cfg: &SimConfig, rep_seed: u64, max_events: usize) -> Result<Vec<TraceEvent>> {
    cfg.validate()?;
    let mut sim = Sim::new(cfg, rep_seed);
    let mut trace = Vec::with_capacity(max_events);
    sim.run(|ev| {
        trace.push(ev);
        trace.len() < max_events
    });
    Ok(trace)
}

/// Live jobs after the first `events` events, with their replica placement.
pub fn live_jobs_after(cfg: &SimConfig, rep_seed: u64, events: usize) -> Result<Vec<JobRecord>> {
    cfg.validate()?;
    let mut sim = Sim::new(cfg, rep_seed);
    let mut seen = 0;
    sim.run(|_| {
        seen += 1;
        seen < events
    });
    Ok(sim.jobs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(discipline: Discipline, lambda: f64, n: usize, horizon: f64) -> SimConfig {
        SimConfig::new(ModelParams::new(lambda, 2, discipline), n, horizon)
    }

    #[test]
    fn server_queue_links() {
        let mut q = ServerQueue::new(2);
        let a = q.push_back(0, 10);
        let b = q.push_back(0, 11);
        let c = q.push_back(0, 12);
        q.push_back(1, 10);
        assert_eq!(q.len(0), 3);
        assert_eq!(q.head(0), Some(a));
        assert_eq!(q.tail(0), Some(c));
        q.remove(0, b);
        let order: Vec<u32> = q.iter_first(0, 5).map(|h| q.job(h)).collect();
        assert_eq!(order, vec![10, 12]);
        q.remove(0, a);
        assert_eq!(q.head(0), Some(c));
        q.remove(0, c);
        assert!(q.is_empty(0) && q.head(0).is_none() && q.tail(0).is_none());
        // freed slots are reused
        let d = q.push_back(0, 13);
        assert!(d == a || d == b || d == c);
        assert_eq!(q.nth(0, 0), Some(d));
        assert_eq!(q.len(1), 1);
    }

    #[test]
    fn busy_set_swaps() {
        let mut b = BusySet::new(5);
        for s in [3, 1, 4] {
            b.insert(s);
        }
        b.remove(3);
        let mut items = b.items.clone();
        items.sort();
        assert_eq!(items, vec![1, 4]);
        assert_eq!(
            b.pos[4] as usize,
            b.items.iter().position(|&s| s == 4).unwrap()
        );
    }

    #[test]
    fn occupancy_integrates_after_warmup() {
        let mut o = Occupancy::new(2, 1.0);
        o.shift(0, 1, 0.5); // before warmup, ignored
        o.shift(1, 2, 2.0);
        let q = o.finish(3.0, 2);
        // on [1,2]: one idle, one at 1; on [2,3]: one idle, one at 2
        assert!((q[0] - 0.5).abs() < 1e-15);
        assert!((q[1] - 0.25).abs() < 1e-15);
        assert!((q[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_configs() {
        let p = ModelParams::new(0.5, 3, Discipline::Ps);
        let e = SimConfig::new(p, 2, 10.0).validate().unwrap_err();
        assert_eq!(e.field(), Some("n"));
        let c = cfg(Discipline::Ps, 0.5, 10, 0.0);
        assert_eq!(c.validate().unwrap_err().field(), Some("horizon"));
        let c = cfg(Discipline::Ps, 0.5, 10, 10.0).with_warmup(1.0);
        assert_eq!(c.validate().unwrap_err().field(), Some("warmup"));
        let c = cfg(Discipline::Ps, 0.5, 10, 10.0).with_replications(0);
        assert_eq!(c.validate().unwrap_err().field(), Some("replications"));
    }

    #[test]
    fn replicas_sit_on_distinct_servers() {
        for disc in [
            Discipline::Ps,
            Discipline::Fcfs,
            Discipline::Lcfs,
            Discipline::Lps,
        ] {
            let mut p = ModelParams::new(0.8, 3, disc);
            p.k = 2;
            let c = SimConfig::new(p, 6, 1e3);
            let jobs = live_jobs_after(&c, 9, 2000).unwrap();
            assert!(!jobs.is_empty());
            for j in &jobs {
                let mut servers: Vec<usize> = j.replicas.iter().map(|r| r.0).collect();
                servers.sort();
                servers.dedup();
                assert_eq!(servers.len(), 3);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let c = cfg(Discipline::Lps, 0.7, 20, 500.0).with_seed(42);
        let a = run_replications(&c).unwrap();
        let b = run_replications(&c).unwrap();
        assert_eq!(a, b);
        let other = run_replications(&c.with_seed(43)).unwrap();
        assert_ne!(a.mean, other.mean);
    }

    #[test]
    fn single_replication_matches_derived_seed() {
        let c = cfg(Discipline::Fcfs, 0.6, 15, 400.0)
            .with_seed(7)
            .with_replications(1);
        let a = run_replications(&c).unwrap();
        let b = run_simulation(&c, replication_seed(7, 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.ci_halfwidth.is_none());
    }

    #[test]
    fn lps_one_traces_fcfs() {
        let mut c = cfg(Discipline::Fcfs, 0.9, 30, 300.0);
        let fcfs = event_trace(&c, 5, 20_000).unwrap();
        c.params.discipline = Discipline::Lps;
        c.params.k = 1;
        assert_eq!(fcfs, event_trace(&c, 5, 20_000).unwrap());
    }

    #[test]
    fn lps_wide_traces_ps() {
        let mut c = cfg(Discipline::Ps, 0.9, 30, 300.0);
        let ps = event_trace(&c, 5, 20_000).unwrap();
        c.params.discipline = Discipline::Lps;
        c.params.k = 10_000;
        assert_eq!(ps, event_trace(&c, 5, 20_000).unwrap());
    }

    #[test]
    fn output_shapes() {
        let c = cfg(Discipline::Ps, 0.5, 10, 200.0).with_replications(3);
        let s = run_replications(&c).unwrap();
        assert!(s.ci_halfwidth.unwrap() > 0.0);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,q,ci_halfwidth,replications\n"));
        let v = serde_json::to_value(s.to_json(&c.params)).unwrap();
        for key in [
            "lambda",
            "d",
            "discipline",
            "K",
            "mean",
            "q",
            "ci_halfwidth",
            "replications",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn student_interval_known_value() {
        // t_{0.975,3} = 3.182446
        let hw = student_halfwidth(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((hw - 3.182446 * sd / 2.0).abs() < 1e-5);
    }
}
