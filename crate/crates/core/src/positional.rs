//! Positional pair approximations for FCFS, LPS(K) and LCFS servers.
//!
//! A job is typed by `(x1, y1, x2, y2)`: the positions `x1, y1` of its two
//! replicas and the lengths `x2, y2` of the queues holding them. Feasible
//! `(position, length)` pairs are enumerated once, and the state is stored
//! as a symmetric matrix `V[a][b]` over pairs `a = (x1, x2)`, `b = (y1, y2)`.
//!
//! Every transition touches one replica's pair while the other is a
//! spectator, so the derivative has the form `A V + V A^T + lambda u u^T`
//! with a sparse rate matrix `A` rebuilt from the marginals at each call.

use std::io::Write;

use crate::dist::{format_prob, QueueDist};
use crate::error::{Error, Result};
use crate::ode::{clamp_nonnegative, solve_fixed_point, IntegratorConfig, OdeSystem};
use crate::pair_ps::GUARD;
use crate::params::{Discipline, ModelParams};
use crate::solution::Solved;

const NONE: u32 = u32::MAX;

/// Service discipline together with the layout it induces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Fcfs,
    /// Limited processor sharing with `K` service slots.
    Lps(usize),
    Lcfs,
}

impl Kernel {
    pub fn from_params(p: &ModelParams) -> Result<Self> {
        match p.discipline {
            Discipline::Fcfs => Ok(Kernel::Fcfs),
            Discipline::Lcfs => Ok(Kernel::Lcfs),
            Discipline::Lps => Ok(Kernel::Lps(p.k)),
            Discipline::Ps => Err(Error::param(
                "discipline",
                "PS has no positional model; use the pair-PS solver",
            )),
        }
    }

    /// Largest feasible position index for a queue of length `x2`.
    pub fn top(&self, x2: usize) -> usize {
        match *self {
            Kernel::Lps(k) => (x2 + 1).saturating_sub(k).max(1),
            _ => x2,
        }
    }
}

/// Enumeration of feasible `(x1, x2)` pairs with `1 <= x1 <= top(x2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairIndex {
    xmax: usize,
    pairs: Vec<(usize, usize)>,
    /// `lookup[x1 * (xmax + 2) + x2]`, `NONE` when infeasible or out of range.
    lookup: Vec<u32>,
}

impl PairIndex {
    pub fn new(kernel: Kernel, xmax: usize) -> Self {
        let w = xmax + 2;
        let mut lookup = vec![NONE; w * w];
        let mut pairs = Vec::new();
        for x2 in 1..=xmax {
            for x1 in 1..=kernel.top(x2) {
                lookup[x1 * w + x2] = pairs.len() as u32;
                pairs.push((x1, x2));
            }
        }
        PairIndex {
            xmax,
            pairs,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, i: usize) -> (usize, usize) {
        self.pairs[i]
    }

    pub fn find(&self, x1: usize, x2: usize) -> Option<usize> {
        if x1 > self.xmax + 1 || x2 > self.xmax + 1 {
            return None;
        }
        match self.lookup[x1 * (self.xmax + 2) + x2] {
            NONE => None,
            i => Some(i as usize),
        }
    }
}

/// Symmetric job-type tensor for one positional discipline.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalState {
    kernel: Kernel,
    index: PairIndex,
    v: Vec<f64>,
}

impl PositionalState {
    pub fn empty(kernel: Kernel, xmax: usize) -> Self {
        let index = PairIndex::new(kernel, xmax);
        let n = index.len();
        PositionalState {
            kernel,
            index,
            v: vec![0.0; n * n],
        }
    }

    pub fn from_vec(kernel: Kernel, xmax: usize, v: Vec<f64>) -> Result<Self> {
        let mut s = PositionalState::empty(kernel, xmax);
        if v.len() != s.v.len() {
            return Err(Error::param(
                "state",
                format!("expected {} entries", s.v.len()),
            ));
        }
        s.v = v;
        Ok(s)
    }

    /// Independence state `v(a, b) = m2(a) m2(b) / sum m2` from a pair
    /// marginal indexed like [`PairIndex`].
    pub fn independent(kernel: Kernel, xmax: usize, m2: &[f64]) -> Result<Self> {
        let mut s = PositionalState::empty(kernel, xmax);
        let n = s.index.len();
        if m2.len() != n {
            return Err(Error::param("m2", format!("expected {n} entries")));
        }
        let total: f64 = m2.iter().sum();
        if total > 0.0 {
            for a in 0..n {
                for b in 0..n {
                    s.v[a * n + b] = m2[a] * m2[b] / total;
                }
            }
        }
        Ok(s)
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn index(&self) -> &PairIndex {
        &self.index
    }

    pub fn xmax(&self) -> usize {
        self.index.xmax
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    /// `v(x1, y1, x2, y2)`, zero outside the feasibility mask.
    pub fn get(&self, x1: usize, y1: usize, x2: usize, y2: usize) -> f64 {
        match (self.index.find(x1, x2), self.index.find(y1, y2)) {
            (Some(a), Some(b)) => self.v[a * self.index.len() + b],
            _ => 0.0,
        }
    }

    pub fn set(&mut self, x1: usize, y1: usize, x2: usize, y2: usize, value: f64) -> Result<()> {
        match (self.index.find(x1, x2), self.index.find(y1, y2)) {
            (Some(a), Some(b)) => {
                let n = self.index.len();
                self.v[a * n + b] = value;
                Ok(())
            }
            _ => Err(Error::param(
                "state",
                format!("({x1},{y1},{x2},{y2}) is infeasible"),
            )),
        }
    }

    pub fn marginals(&self) -> PositionalMarginals {
        PositionalMarginals::new(self)
    }

    pub fn q(&self) -> Vec<f64> {
        queue_lengths(&self.index, &row_sums(&self.v, self.index.len()))
    }

    pub fn distribution(&self) -> Result<QueueDist> {
        QueueDist::from_positive_part(&self.q()[1..])
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.index.len();
        let mut m = 0.0f64;
        for a in 0..n {
            for b in 0..a {
                m = m.max((self.v[a * n + b] - self.v[b * n + a]).abs());
            }
        }
        m
    }

    /// Writes every feasible entry as CSV with header `x1,y1,x2,y2,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x1", "y1", "x2", "y2", "value"])?;
        let n = self.index.len();
        for a in 0..n {
            let (x1, x2) = self.index.pair(a);
            for b in 0..n {
                let (y1, y2) = self.index.pair(b);
                w.write_record([
                    x1.to_string(),
                    y1.to_string(),
                    x2.to_string(),
                    y2.to_string(),
                    format_prob(self.v[a * n + b]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn row_sums(v: &[f64], n: usize) -> Vec<f64> {
    v.chunks_exact(n).map(|r| r.iter().sum()).collect()
}

/// `q(0..=xmax)` with `q(x) = 2 ql(x) / x`.
fn queue_lengths(index: &PairIndex, m2: &[f64]) -> Vec<f64> {
    let xmax = index.xmax;
    let mut q = vec![0.0; xmax + 1];
    for (a, &(_, x2)) in index.pairs.iter().enumerate() {
        q[x2] += m2[a];
    }
    for (x, v) in q.iter_mut().enumerate().skip(1) {
        *v *= 2.0 / x as f64;
    }
    q[0] = 1.0 - q[1..].iter().sum::<f64>();
    q
}

/// Two- and three-index marginals of a positional state.
#[derive(Debug, Clone)]
pub struct PositionalMarginals {
    xmax: usize,
    /// `m2(x1, x2)` at `x1 * (xmax + 2) + x2`.
    m2: Vec<f64>,
    /// `m3(x1, y1, x2)` at `(x1 * (xmax + 2) + y1) * (xmax + 2) + x2`.
    m3: Vec<f64>,
    /// `pos(x1)`, indexed `0..=xmax + 1`.
    pub pos: Vec<f64>,
    /// `ql(x2)`, indexed `0..=xmax + 1`.
    pub ql: Vec<f64>,
    /// `q(0..=xmax)` from `2 ql(x) / x`.
    pub q: Vec<f64>,
}

impl PositionalMarginals {
    fn new(s: &PositionalState) -> Self {
        let xmax = s.index.xmax;
        let w = xmax + 2;
        let n = s.index.len();
        let mut m2 = vec![0.0; w * w];
        let mut m3 = vec![0.0; w * w * w];
        for a in 0..n {
            let (x1, x2) = s.index.pair(a);
            for b in 0..n {
                let (y1, _) = s.index.pair(b);
                let v = s.v[a * n + b];
                m2[x1 * w + x2] += v;
                m3[(x1 * w + y1) * w + x2] += v;
            }
        }
        let mut pos = vec![0.0; w];
        let mut ql = vec![0.0; w];
        for x1 in 1..=xmax {
            for x2 in 1..=xmax {
                pos[x1] += m2[x1 * w + x2];
                ql[x2] += m2[x1 * w + x2];
            }
        }
        let mut q = vec![0.0; xmax + 1];
        for x in 1..=xmax {
            q[x] = 2.0 * ql[x] / x as f64;
        }
        q[0] = 1.0 - q[1..].iter().sum::<f64>();
        PositionalMarginals {
            xmax,
            m2,
            m3,
            pos,
            ql,
            q,
        }
    }

    pub fn m2(&self, x1: usize, x2: usize) -> f64 {
        let w = self.xmax + 2;
        if x1 >= w || x2 >= w {
            0.0
        } else {
            self.m2[x1 * w + x2]
        }
    }

    pub fn m3(&self, x1: usize, y1: usize, x2: usize) -> f64 {
        let w = self.xmax + 2;
        if x1 >= w || y1 >= w || x2 >= w {
            0.0
        } else {
            self.m3[(x1 * w + y1) * w + x2]
        }
    }

    /// `q(x) = 2 (pos(x) - pos(x + 1))`, valid when positions count from
    /// the head (FCFS) or the back (LCFS) of the queue.
    pub fn q_from_positions(&self, x: usize) -> f64 {
        2.0 * (self.pos[x] - self.pos.get(x + 1).copied().unwrap_or(0.0))
    }
}

/// `kappa(x_a, x_b) = sum_{x' <= x_a} m3(x', 1, x_b) / m2(x', x_b)`; the
/// same partial sum is `phi` for LCFS.
pub fn kappa(s: &PositionalState, xa: usize, xb: usize) -> f64 {
    let m = s.marginals();
    (1..=xa.min(s.xmax()))
        .map(|x| ratio(m.m3(x, 1, xb), m.m2(x, xb)))
        .sum()
}

#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    if den < GUARD {
        0.0
    } else {
        num / den
    }
}

/// `p1(x) = min((x - 1) / x, (K - 1) / K)`: probability that a service
/// completion at a server of length `x` hits another in-service job.
pub fn lps_p1(k: usize, x: usize) -> f64 {
    let a = (x as f64 - 1.0) / x as f64;
    let b = (k as f64 - 1.0) / k as f64;
    a.min(b)
}

/// Buddy-completion rates for LPS(K) at one state.
#[derive(Debug, Clone)]
pub struct LpsRates {
    k: usize,
    xmax: usize,
    /// `r(x', x2)` at `x' * (xmax + 2) + x2`.
    r: Vec<f64>,
}

impl LpsRates {
    pub fn new(s: &PositionalState) -> Result<Self> {
        let k = match s.kernel {
            Kernel::Lps(k) => k,
            _ => return Err(Error::param("discipline", "LPS rates need an LPS state")),
        };
        let xmax = s.xmax();
        let n = s.index.len();
        let m2 = row_sums(&s.v, n);
        let served = served_sums(&s.index, &s.v, s.kernel);
        let w = xmax + 2;
        let mut r = vec![0.0; w * w];
        for a in 0..n {
            let (x1, x2) = s.index.pair(a);
            r[x1 * w + x2] = ratio(served[a], m2[a]);
        }
        Ok(LpsRates { k, xmax, r })
    }

    /// `r(x', x2) = sum_y' v(x', 1, x2, y') / (m2(x', x2) min(K, y'))`.
    pub fn r(&self, xp: usize, x2: usize) -> f64 {
        let w = self.xmax + 2;
        if xp >= w || x2 >= w {
            0.0
        } else {
            self.r[xp * w + x2]
        }
    }

    /// `psi(1, x_b) = min(K, x_b) r(1, x_b)` and
    /// `psi(x_a, x_b) = K r(1, x_b) + sum_{x'=2}^{x_a} r(x', x_b)`.
    pub fn psi(&self, xa: usize, xb: usize) -> f64 {
        if xa == 0 {
            return 0.0;
        }
        if xa == 1 {
            return self.k.min(xb) as f64 * self.r(1, xb);
        }
        self.k as f64 * self.r(1, xb) + (2..=xa).map(|x| self.r(x, xb)).sum::<f64>()
    }

    pub fn p1(&self, x: usize) -> f64 {
        lps_p1(self.k, x)
    }
}

/// `r` for LPS, or `kappa` increments for FCFS/LCFS: the rate at which the
/// buddy of the job in pair `a` completes, via `sum_{b: y1 = 1} v(a, b) w(b)`.
fn served_sums(index: &PairIndex, v: &[f64], kernel: Kernel) -> Vec<f64> {
    let n = index.len();
    let heads: Vec<(usize, f64)> = (0..n)
        .filter(|&b| index.pair(b).0 == 1)
        .map(|b| {
            let y2 = index.pair(b).1;
            let w = match kernel {
                Kernel::Lps(k) => 1.0 / k.min(y2) as f64,
                _ => 1.0,
            };
            (b, w)
        })
        .collect();
    (0..n)
        .map(|a| {
            let row = &v[a * n..(a + 1) * n];
            heads.iter().map(|&(b, w)| row[b] * w).sum()
        })
        .collect()
}

/// One row of the sparse rate matrix.
#[derive(Debug, Clone, Copy, Default)]
struct Row {
    diag: f64,
    src: [u32; 3],
    coef: [f64; 3],
}

/// Precomputed layout plus scratch-free rate assembly.
struct Engine {
    kernel: Kernel,
    lambda: f64,
    index: PairIndex,
}

impl Engine {
    fn src(&self, x1: usize, x2: usize) -> u32 {
        self.index.find(x1, x2).map_or(NONE, |i| i as u32)
    }

    /// Sparse rows and the creation vector `u`.
    fn assemble(&self, v: &[f64]) -> (Vec<Row>, Vec<f64>) {
        let xmax = self.index.xmax;
        let n = self.index.len();
        let w = xmax + 2;
        let lam = self.lambda;
        let m2 = row_sums(v, n);
        let q = queue_lengths(&self.index, &m2);
        let served = served_sums(&self.index, v, self.kernel);
        // ratio table at (x', x2), zero for x2 = xmax + 1
        let mut rt = vec![0.0; w * w];
        for a in 0..n {
            let (x1, x2) = self.index.pair(a);
            rt[x1 * w + x2] = ratio(served[a], m2[a]);
        }
        let rr = |xp: usize, x2: usize| rt[xp * w + x2];
        // cumulative table: kap[x2 * w + xa] = sum_{x' <= xa} rt(x', x2)
        let mut kap = vec![0.0; w * w];
        for x2 in 1..w {
            for xa in 1..w {
                kap[x2 * w + xa] = kap[x2 * w + xa - 1] + rr(xa, x2);
            }
        }
        let kappa = |xa: usize, xb: usize| kap[xb * w + xa.min(w - 1)];
        let psi = |k: usize, xa: usize, xb: usize| -> f64 {
            match xa {
                0 => 0.0,
                1 => k.min(xb) as f64 * rr(1, xb),
                _ => k as f64 * rr(1, xb) + kappa(xa, xb) - rr(1, xb),
            }
        };
        let mut rows = vec![Row::default(); n];
        let mut u = vec![0.0; n];
        for (a, row) in rows.iter_mut().enumerate() {
            let (x1, x2) = self.index.pair(a);
            match self.kernel {
                Kernel::Fcfs | Kernel::Lcfs => {
                    row.diag = -(2.0 * lam + 1.0 + kappa(x2, x2) - rr(x1, x2));
                    row.src[0] = if self.kernel == Kernel::Fcfs {
                        self.src(x1, x2 - 1)
                    } else {
                        self.src(x1 - 1, x2 - 1)
                    };
                    row.coef[0] = 2.0 * lam;
                    row.src[1] = self.src(x1 + 1, x2 + 1);
                    row.coef[1] = 1.0 + kappa(x1, x2 + 1);
                    row.src[2] = self.src(x1, x2 + 1);
                    row.coef[2] = kappa(x2 + 1, x2 + 1) - kappa(x1, x2 + 1);
                    let born = if self.kernel == Kernel::Fcfs {
                        x1 == x2
                    } else {
                        x1 == 1
                    };
                    if born {
                        u[a] = q[x2 - 1];
                    }
                }
                Kernel::Lps(k) => {
                    let top = self.kernel.top(x2);
                    let top_up = self.kernel.top(x2 + 1);
                    row.diag = -(2.0 * lam + 1.0 + psi(k, top, x2) - rr(x1, x2));
                    row.src[0] = self.src(x1, x2 - 1);
                    row.coef[0] = 2.0 * lam;
                    row.src[1] = self.src(x1 + 1, x2 + 1);
                    row.coef[1] = 1.0 + psi(k, x1, x2 + 1);
                    row.src[2] = self.src(x1, x2 + 1);
                    row.coef[2] = if x1 == 1 {
                        lps_p1(k, x2 + 1) + psi(k, top_up, x2 + 1) - rr(1, x2 + 1)
                    } else {
                        psi(k, top_up, x2 + 1) - psi(k, x1, x2 + 1)
                    };
                    if x1 == top {
                        u[a] = q[x2 - 1];
                    }
                }
            }
        }
        (rows, u)
    }

    fn rhs(&self, v: &[f64], out: &mut [f64]) {
        let n = self.index.len();
        let (rows, u) = self.assemble(v);
        // out = A V
        for (a, row) in rows.iter().enumerate() {
            let dst = &mut out[a * n..(a + 1) * n];
            let own = &v[a * n..(a + 1) * n];
            for (d, s) in dst.iter_mut().zip(own) {
                *d = row.diag * s;
            }
            for (&src, &c) in row.src.iter().zip(&row.coef) {
                if src == NONE || c == 0.0 {
                    continue;
                }
                let other = &v[src as usize * n..(src as usize + 1) * n];
                for (d, s) in dst.iter_mut().zip(other) {
                    *d += c * s;
                }
            }
        }
        symmetrize_sum(out, n);
        let born: Vec<usize> = (0..n).filter(|&a| u[a] != 0.0).collect();
        for &a in &born {
            for &b in &born {
                out[a * n + b] += self.lambda * (u[a] * u[b]);
            }
        }
    }
}

/// Replaces `W` by `W + W^T` in place, tile by tile.
fn symmetrize_sum(w: &mut [f64], n: usize) {
    const TILE: usize = 32;
    for ab in (0..n).step_by(TILE) {
        for bb in (ab..n).step_by(TILE) {
            for a in ab..(ab + TILE).min(n) {
                let start = if ab == bb { a } else { bb };
                for b in start..(bb + TILE).min(n) {
                    let s = w[a * n + b] + w[b * n + a];
                    w[a * n + b] = s;
                    w[b * n + a] = s;
                }
            }
        }
    }
}

/// Derivative of the positional ODE for the state's discipline.
pub fn positional_rhs(s: &PositionalState, p: &ModelParams) -> PositionalState {
    let engine = Engine {
        kernel: s.kernel,
        lambda: p.lambda,
        index: s.index.clone(),
    };
    let mut out = vec![0.0; s.v.len()];
    engine.rhs(&s.v, &mut out);
    PositionalState {
        kernel: s.kernel,
        index: s.index.clone(),
        v: out,
    }
}

/// A positional ODE as an [`OdeSystem`].
pub struct Positional {
    engine: Engine,
}

impl Positional {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        if params.d != 2 {
            return Err(Error::param("d", "positional models need d = 2"));
        }
        let kernel = Kernel::from_params(&params)?;
        Ok(Positional {
            engine: Engine {
                kernel,
                lambda: params.lambda,
                index: PairIndex::new(kernel, params.xmax),
            },
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.engine.kernel
    }
}

impl OdeSystem for Positional {
    fn dim(&self) -> usize {
        let n = self.engine.index.len();
        n * n
    }

    fn rhs(&self, state: &[f64], out: &mut [f64]) {
        self.engine.rhs(state, out);
    }

    fn label(&self, i: usize) -> String {
        let n = self.engine.index.len();
        let (x1, x2) = self.engine.index.pair(i / n);
        let (y1, y2) = self.engine.index.pair(i % n);
        format!("v({x1},{y1},{x2},{y2})")
    }

    fn project(&self, state: &mut [f64]) {
        clamp_nonnegative(state);
    }
}

/// Integrates a positional model from the empty system to its fixed point.
pub fn positional_fixed_point(
    p: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<Solved<PositionalState>> {
    let sys = Positional::new(*p)?;
    let fp = solve_fixed_point(&sys, &vec![0.0; sys.dim()], cfg)?;
    let state = PositionalState::from_vec(sys.kernel(), p.xmax, fp.state.clone())?;
    Ok(Solved::new(state.distribution()?, state, &fp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{mf_rhs, MeanFieldState};

    fn params(lambda: f64, disc: Discipline, k: usize, xmax: usize) -> ModelParams {
        ModelParams::new(lambda, 2, disc).with_k(k).with_xmax(xmax)
    }

    fn random_state(kernel: Kernel, xmax: usize, seed: u64) -> PositionalState {
        let mut s = PositionalState::empty(kernel, xmax);
        let n = s.index.len();
        let mut r = seed.wrapping_add(7);
        for a in 0..n {
            for b in a..n {
                r = r
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                let u = (r >> 11) as f64 / (1u64 << 53) as f64;
                let (_, x2) = s.index.pair(a);
                let (_, y2) = s.index.pair(b);
                let v = u * 0.02 / (x2 * x2 * y2 * y2) as f64;
                s.v[a * n + b] = v;
                s.v[b * n + a] = v;
            }
        }
        s
    }

    #[test]
    fn mask_sizes() {
        assert_eq!(PairIndex::new(Kernel::Fcfs, 4).len(), 10);
        assert_eq!(PairIndex::new(Kernel::Lcfs, 4).len(), 10);
        // K = 2: x2 = 1, 2 allow x1 = 1; x2 = 3 allows 1..2; x2 = 4 allows 1..3
        assert_eq!(PairIndex::new(Kernel::Lps(2), 4).len(), 7);
        assert_eq!(PairIndex::new(Kernel::Lps(50), 10).len(), 10);
    }

    #[test]
    fn p1_values() {
        assert_eq!(lps_p1(1, 5), 0.0);
        assert_eq!(lps_p1(2, 5), 0.5);
        assert!((lps_p1(10, 4) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn kappa_edge_cases() {
        let s = random_state(Kernel::Fcfs, 6, 1);
        assert_eq!(kappa(&s, 0, 4), 0.0);
        // every buddy sits at the head: each ratio is one
        let mut t = PositionalState::empty(Kernel::Fcfs, 6);
        for x1 in 1..=4 {
            t.set(x1, 1, 4, 2, 0.01).unwrap();
        }
        for xa in 0..=4 {
            assert!((kappa(&t, xa, 4) - xa as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn kappa_under_independence() {
        let xmax = 8;
        let idx = PairIndex::new(Kernel::Fcfs, xmax);
        let m2: Vec<f64> = (0..idx.len())
            .map(|a| 0.05 / (1 + idx.pair(a).1) as f64)
            .collect();
        let s = PositionalState::independent(Kernel::Fcfs, xmax, &m2).unwrap();
        let m = s.marginals();
        let qbar = 2.0 * s.as_slice().iter().sum::<f64>();
        for xb in 1..=xmax {
            for xa in 0..=xb {
                let want = 2.0 * xa as f64 * m.pos[1] / qbar;
                assert!((kappa(&s, xa, xb) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lps_rates_all_buddies_served_in_length_three() {
        let mut s = PositionalState::empty(Kernel::Lps(2), 6);
        for x2 in 1..=5 {
            s.set(1, 1, x2, 3, 0.01).unwrap();
        }
        s.set(2, 1, 4, 3, 0.02).unwrap();
        let r = LpsRates::new(&s).unwrap();
        assert!((r.r(1, 4) - 0.5).abs() < 1e-15);
        assert!((r.r(2, 4) - 0.5).abs() < 1e-15);
        assert!((r.psi(1, 4) - 1.0).abs() < 1e-15);
        assert!((r.psi(2, 4) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn empty_state_creation_only() {
        for (disc, k) in [
            (Discipline::Fcfs, 1),
            (Discipline::Lcfs, 1),
            (Discipline::Lps, 2),
        ] {
            let p = params(0.9, disc, k, 8);
            let kernel = Kernel::from_params(&p).unwrap();
            let d = positional_rhs(&PositionalState::empty(kernel, 8), &p);
            assert!((d.get(1, 1, 1, 1) - 0.9).abs() < 1e-15);
            let nonzero = d.as_slice().iter().filter(|v| **v != 0.0).count();
            assert_eq!(nonzero, 1, "{disc:?}");
        }
    }

    #[test]
    fn symmetric_in_symmetric_out() {
        for kernel in [Kernel::Fcfs, Kernel::Lcfs, Kernel::Lps(3)] {
            let p = params(0.8, Discipline::Fcfs, 1, 9);
            for seed in 0..5 {
                let d = positional_rhs(&random_state(kernel, 9, seed), &p);
                assert_eq!(d.max_asymmetry(), 0.0);
            }
        }
    }

    #[test]
    fn lps_one_equals_fcfs_kernel() {
        let p = params(0.85, Discipline::Fcfs, 1, 10);
        for seed in 0..20 {
            let a = random_state(Kernel::Fcfs, 10, seed);
            let b = PositionalState::from_vec(Kernel::Lps(1), 10, a.v.clone()).unwrap();
            let da = positional_rhs(&a, &p);
            let db = positional_rhs(&b, &p);
            for (u, v) in da.as_slice().iter().zip(db.as_slice()) {
                assert!((u - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lps_large_k_equals_pair_ps_kernel() {
        use crate::pair_ps::{pair_ps_rhs, PairState};
        let xmax = 9;
        let p = params(0.7, Discipline::Lps, xmax, xmax);
        let s = random_state(Kernel::Lps(xmax), xmax, 3);
        let pi = PairState::from_vec(xmax, s.v.clone()).unwrap();
        let a = positional_rhs(&s, &p);
        let b = pair_ps_rhs(&pi, &p);
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    /// Pair marginal uniform in position with no mass near `xmax`.
    fn uniform_positions(kernel: Kernel, xmax: usize, support: usize) -> (Vec<f64>, Vec<f64>) {
        let idx = PairIndex::new(kernel, xmax);
        let mut q = vec![0.0; xmax];
        for x in 1..=support {
            q[x - 1] = 0.45 * 0.55f64.powi(x as i32) * (1.0 + 0.2 * (x as f64).cos());
        }
        let m2: Vec<f64> = (0..idx.len()).map(|a| q[idx.pair(a).1 - 1] / 2.0).collect();
        (q, m2)
    }

    #[test]
    fn fcfs_collapses_to_mean_field() {
        let xmax = 24;
        let (q, m2) = uniform_positions(Kernel::Fcfs, xmax, 16);
        let s = PositionalState::independent(Kernel::Fcfs, xmax, &m2).unwrap();
        let p = params(0.65, Discipline::Fcfs, 1, xmax);
        let d = positional_rhs(&s, &p);
        let dq = d.marginals();
        let mf = mf_rhs(&MeanFieldState::from_positive_part(&q), &p);
        for x in 1..=14 {
            let got = 2.0 * dq.ql[x] / x as f64;
            assert!(
                (got - mf[x - 1]).abs() < 1e-10,
                "x={x}: {got} vs {}",
                mf[x - 1]
            );
        }
    }

    #[test]
    fn queue_length_two_ways() {
        for kernel in [Kernel::Fcfs, Kernel::Lcfs] {
            let (_, m2) = uniform_positions(kernel, 12, 10);
            let s = PositionalState::independent(kernel, 12, &m2).unwrap();
            let m = s.marginals();
            for x in 1..=12 {
                assert!((m.q_from_positions(x) - m.q[x]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_balance_with_boundary_flux() {
        for kernel in [Kernel::Fcfs, Kernel::Lcfs, Kernel::Lps(2)] {
            let xmax = 10;
            let lam = 0.9;
            let p = params(lam, Discipline::Fcfs, 1, xmax);
            let s = random_state(kernel, xmax, 9);
            let d = positional_rhs(&s, &p);
            let q = s.q();
            let dqbar = 2.0 * d.as_slice().iter().sum::<f64>();
            let expected = 2.0 * lam - 2.0 * (1.0 - q[0]);
            let m = s.marginals();
            let flux = 2.0 * lam * 2.0 * m.ql[xmax] + 2.0 * lam * q[xmax];
            assert!((dqbar - expected).abs() <= 2.0 * flux + 1e-12, "{kernel:?}");
        }
    }
}
