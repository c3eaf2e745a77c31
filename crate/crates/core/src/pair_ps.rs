//! Pair approximation for processor-sharing servers.
//!
//! The state counts jobs by the pair of queue lengths `(x, y)` holding their
//! two replicas, scaled by the number of servers. A job in a queue of length
//! `x` loses a queue-mate whenever the buddy of one of the other `x - 1`
//! replicas completes elsewhere; that rate depends only on `x` through the
//! conditional distribution `pi(y | x)`.

use std::io::Write;

use crate::dist::{format_prob, QueueDist};
use crate::error::{Error, Result};
use crate::ode::{clamp_nonnegative, solve_fixed_point, IntegratorConfig, OdeSystem};
use crate::params::ModelParams;
use crate::solution::Solved;

/// Denominators below this are treated as an empty class.
pub const GUARD: f64 = 1e-14;

/// Symmetric matrix `pi(x, y)` for `1 <= x, y <= xmax`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    xmax: usize,
    pi: Vec<f64>,
}

impl PairState {
    pub fn empty(xmax: usize) -> Self {
        PairState {
            xmax,
            pi: vec![0.0; xmax * xmax],
        }
    }

    pub fn from_vec(xmax: usize, pi: Vec<f64>) -> Result<Self> {
        if pi.len() != xmax * xmax {
            return Err(Error::param(
                "pi",
                format!("expected {} entries", xmax * xmax),
            ));
        }
        Ok(PairState { xmax, pi })
    }

    /// Product-form state `pi(x, y) = pi(x) pi(y) / sum_z pi(z)` built from
    /// the marginal queue-length distribution `q(1..=xmax)`.
    pub fn product_form(q: &[f64]) -> Self {
        let xmax = q.len();
        let marg: Vec<f64> = (1..=xmax).map(|x| x as f64 * q[x - 1] / 2.0).collect();
        let total: f64 = marg.iter().sum();
        let mut s = PairState::empty(xmax);
        if total > 0.0 {
            for x in 1..=xmax {
                for y in 1..=xmax {
                    s.pi[(x - 1) * xmax + y - 1] = marg[x - 1] * marg[y - 1] / total;
                }
            }
        }
        s
    }

    pub fn xmax(&self) -> usize {
        self.xmax
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    /// `pi(x, y)`, zero outside `1..=xmax`.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        view_get(&self.pi, self.xmax, x, y)
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pi[(x - 1) * self.xmax + y - 1] = v;
    }

    /// Row sums `pi(x) = sum_y pi(x, y)`.
    pub fn marginal(&self) -> Vec<f64> {
        marginals(&self.pi, self.xmax)
    }

    /// `q(0..=xmax)` with `q(x) = 2 pi(x) / x` and `q(0) = 1 - sum`.
    pub fn q(&self) -> Vec<f64> {
        queue_lengths(&self.marginal())
    }

    pub fn qbar(&self) -> f64 {
        2.0 * self.pi.iter().sum::<f64>()
    }

    /// Buddy-cancellation rate `h(x)` of a job in a queue of length `x`.
    pub fn buddy_rate(&self, x: usize) -> f64 {
        buddy_rates(&self.pi, self.xmax, &self.marginal())[x]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for x in 1..=self.xmax {
            for y in 1..x {
                m = m.max((self.get(x, y) - self.get(y, x)).abs());
            }
        }
        m
    }

    pub fn distribution(&self) -> Result<QueueDist> {
        QueueDist::from_positive_part(&self.q()[1..])
    }

    /// Writes the matrix as CSV with header `x,y,pi`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "pi"])?;
        for x in 1..=self.xmax {
            for y in 1..=self.xmax {
                w.write_record([x.to_string(), y.to_string(), format_prob(self.get(x, y))])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[inline]
fn view_get(pi: &[f64], xmax: usize, x: usize, y: usize) -> f64 {
    if x == 0 || y == 0 || x > xmax || y > xmax {
        0.0
    } else {
        pi[(x - 1) * xmax + y - 1]
    }
}

fn marginals(pi: &[f64], xmax: usize) -> Vec<f64> {
    pi.chunks_exact(xmax).map(|row| row.iter().sum()).collect()
}

/// `q(0..=xmax)` from the row sums.
fn queue_lengths(marg: &[f64]) -> Vec<f64> {
    let mut q = Vec::with_capacity(marg.len() + 1);
    q.push(0.0);
    q.extend(
        marg.iter()
            .enumerate()
            .map(|(i, m)| 2.0 * m / (i + 1) as f64),
    );
    q[0] = 1.0 - q[1..].iter().sum::<f64>();
    q
}

/// `h(0..=xmax+1)`; entries 0 and `xmax + 1` are zero.
fn buddy_rates(pi: &[f64], xmax: usize, marg: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; xmax + 2];
    for x in 2..=xmax {
        let m = marg[x - 1];
        if m < GUARD {
            continue;
        }
        let row = &pi[(x - 1) * xmax..x * xmax];
        let inv: f64 = row
            .iter()
            .enumerate()
            .map(|(j, v)| v / (j + 1) as f64)
            .sum();
        h[x] = (x - 1) as f64 * inv / m;
    }
    h
}

/// `h(x) = (x - 1) sum_y pi(y | x) / y`, zero for `x = 1` and for empty rows.
pub fn ps_buddy_rate(s: &PairState, x: usize) -> f64 {
    s.buddy_rate(x)
}

fn pair_rhs_into(pi: &[f64], xmax: usize, lambda: f64, out: &mut [f64]) {
    let marg = marginals(pi, xmax);
    let q = queue_lengths(&marg);
    let h = buddy_rates(pi, xmax, &marg);
    let g = |x: usize, y: usize| view_get(pi, xmax, x, y);
    for x in 1..=xmax {
        for y in x..=xmax {
            let xf = x as f64;
            let yf = y as f64;
            let here = g(x, y);
            let v = lambda * q[x - 1] * q[y - 1]
                + 2.0 * lambda * (g(x - 1, y) + g(x, y - 1) - 2.0 * here)
                + g(x + 1, y) * (h[x + 1] + xf / (xf + 1.0))
                + g(x, y + 1) * (h[y + 1] + yf / (yf + 1.0))
                - here * (2.0 + h[x] + h[y]);
            out[(x - 1) * xmax + y - 1] = v;
            out[(y - 1) * xmax + x - 1] = v;
        }
    }
}

/// Derivative of the pair-PS ODE for `d = 2`.
pub fn pair_ps_rhs(s: &PairState, p: &ModelParams) -> PairState {
    let mut out = vec![0.0; s.pi.len()];
    pair_rhs_into(&s.pi, s.xmax, p.lambda, &mut out);
    PairState {
        xmax: s.xmax,
        pi: out,
    }
}

/// The `d = 2` pair-PS ODE as an [`OdeSystem`] over the flattened matrix.
pub struct PairPs {
    params: ModelParams,
}

impl PairPs {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        if params.d != 2 {
            return Err(Error::param("d", "the pair-PS matrix model needs d = 2"));
        }
        Ok(PairPs { params })
    }
}

impl OdeSystem for PairPs {
    fn dim(&self) -> usize {
        self.params.xmax * self.params.xmax
    }

    fn rhs(&self, state: &[f64], out: &mut [f64]) {
        pair_rhs_into(state, self.params.xmax, self.params.lambda, out);
    }

    fn label(&self, index: usize) -> String {
        let n = self.params.xmax;
        format!("pi({},{})", index / n + 1, index % n + 1)
    }

    fn project(&self, state: &mut [f64]) {
        clamp_nonnegative(state);
    }
}

/// Integrates the pair-PS ODE from the empty system to its fixed point.
pub fn pair_ps_fixed_point(p: &ModelParams, cfg: &IntegratorConfig) -> Result<Solved<PairState>> {
    let sys = PairPs::new(*p)?;
    let fp = solve_fixed_point(&sys, &vec![0.0; sys.dim()], cfg)?;
    let state = PairState::from_vec(p.xmax, fp.state.clone())?;
    Ok(Solved::new(state.distribution()?, state, &fp))
}

/// Fully symmetric order-`d` tensor `pi(x_1, ..., x_d)` on `{1..xmax}^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStateD {
    d: usize,
    xmax: usize,
    pi: Vec<f64>,
}

impl PairStateD {
    pub fn empty(d: usize, xmax: usize) -> Self {
        PairStateD {
            d,
            xmax,
            pi: vec![0.0; xmax.pow(d as u32)],
        }
    }

    pub fn from_vec(d: usize, xmax: usize, pi: Vec<f64>) -> Result<Self> {
        if pi.len() != xmax.pow(d as u32) {
            return Err(Error::param(
                "pi",
                format!("expected xmax^d = {} entries", xmax.pow(d as u32)),
            ));
        }
        Ok(PairStateD { d, xmax, pi })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `pi(idx)` for a 1-based multi-index; zero if any entry is out of range.
    pub fn get(&self, idx: &[usize]) -> f64 {
        match flat_index(idx, self.xmax) {
            Some(i) => self.pi[i],
            None => 0.0,
        }
    }

    pub fn q(&self) -> Vec<f64> {
        TensorLayout::new(self.d, self.xmax).q(&self.pi)
    }

    pub fn distribution(&self) -> Result<QueueDist> {
        QueueDist::from_positive_part(&self.q()[1..])
    }

    /// Largest deviation between any entry and its sorted permutation.
    pub fn max_asymmetry(&self) -> f64 {
        let layout = TensorLayout::new(self.d, self.xmax);
        self.pi
            .iter()
            .zip(&layout.canon)
            .map(|(v, &c)| (v - self.pi[c as usize]).abs())
            .fold(0.0, f64::max)
    }
}

fn flat_index(idx: &[usize], xmax: usize) -> Option<usize> {
    let mut flat = 0;
    for &x in idx {
        if x == 0 || x > xmax {
            return None;
        }
        flat = flat * xmax + (x - 1);
    }
    Some(flat)
}

/// Index bookkeeping for the dense order-`d` tensor.
struct TensorLayout {
    d: usize,
    xmax: usize,
    /// `strides[i]` for coordinate `i` (coordinate 0 is most significant).
    strides: Vec<usize>,
    /// Flat index of the sorted permutation of every entry.
    canon: Vec<u32>,
}

impl TensorLayout {
    fn new(d: usize, xmax: usize) -> Self {
        let size = xmax.pow(d as u32);
        let mut strides = vec![1; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * xmax;
        }
        let mut canon = Vec::with_capacity(size);
        let mut digits = vec![0usize; d];
        for flat in 0..size {
            decode(flat, xmax, &mut digits);
            let mut sorted = digits.clone();
            sorted.sort_unstable();
            let c: usize = sorted.iter().zip(&strides).map(|(x, s)| x * s).sum();
            canon.push(c as u32);
        }
        TensorLayout {
            d,
            xmax,
            strides,
            canon,
        }
    }

    /// `pi(x) = sum over the other coordinates`, indexed `x - 1`.
    fn marginal(&self, pi: &[f64]) -> Vec<f64> {
        let block = self.strides[0];
        pi.chunks_exact(block).map(|b| b.iter().sum()).collect()
    }

    fn q(&self, pi: &[f64]) -> Vec<f64> {
        let marg = self.marginal(pi);
        let mut q = vec![0.0; self.xmax + 1];
        for x in 1..=self.xmax {
            q[x] = self.d as f64 * marg[x - 1] / x as f64;
        }
        q[0] = 1.0 - q[1..].iter().sum::<f64>();
        q
    }

    /// `h(0..=xmax+1)` with `h(x) = (x-1)(d-1) sum_y pi(y | x) / y`.
    fn buddy_rates(&self, pi: &[f64], marg: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.xmax + 2];
        let block = self.strides[0];
        let inner = self.strides[1];
        for x in 2..=self.xmax {
            let m = marg[x - 1];
            if m < GUARD {
                continue;
            }
            let b = &pi[(x - 1) * block..x * block];
            let inv: f64 = b
                .chunks_exact(inner)
                .enumerate()
                .map(|(j, c)| c.iter().sum::<f64>() / (j + 1) as f64)
                .sum();
            h[x] = (x - 1) as f64 * (self.d - 1) as f64 * inv / m;
        }
        h
    }
}

fn decode(mut flat: usize, xmax: usize, digits: &mut [usize]) {
    for slot in digits.iter_mut().rev() {
        *slot = flat % xmax;
        flat /= xmax;
    }
}

fn pair_d_rhs_into(layout: &TensorLayout, lambda: f64, pi: &[f64], out: &mut [f64]) {
    let d = layout.d;
    let xmax = layout.xmax;
    let df = d as f64;
    let marg = layout.marginal(pi);
    let q = layout.q(pi);
    let h = layout.buddy_rates(pi, &marg);
    let mut digits = vec![0usize; d];
    for flat in 0..pi.len() {
        if layout.canon[flat] as usize != flat {
            continue;
        }
        decode(flat, xmax, &mut digits);
        let here = pi[flat];
        // digits are 0-based, so x_i = digits[i] + 1 and q(x_i - 1) = q[digits[i]].
        let creation: f64 = digits.iter().map(|&i| q[i]).product();
        let mut from_below = 0.0;
        let mut from_above = 0.0;
        let mut h_sum = 0.0;
        for (i, &di) in digits.iter().enumerate() {
            let x = di + 1;
            let stride = layout.strides[i];
            if di > 0 {
                from_below += pi[flat - stride];
            }
            if x < xmax {
                let xf = x as f64;
                from_above += pi[flat + stride] * (h[x + 1] + xf / (xf + 1.0));
            }
            h_sum += h[x];
        }
        out[flat] = lambda * creation + df * lambda * (from_below - df * here) + from_above
            - here * (df + h_sum);
    }
    for flat in 0..pi.len() {
        let c = layout.canon[flat] as usize;
        if c != flat {
            out[flat] = out[c];
        }
    }
}

/// The order-`d` pair-PS ODE as an [`OdeSystem`].
pub struct PairPsD {
    params: ModelParams,
    layout: TensorLayout,
}

impl PairPsD {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        if params.d < 2 {
            return Err(Error::param("d", "the pair approximation needs d >= 2"));
        }
        let size = (params.xmax as u128).pow(params.d as u32);
        if size > 50_000_000 {
            return Err(Error::StateSpace(format!(
                "xmax^d = {size} tensor entries is too large"
            )));
        }
        Ok(PairPsD {
            layout: TensorLayout::new(params.d, params.xmax),
            params,
        })
    }
}

impl PairPsD {
    /// Euler step below the stability limit of the fastest outflow.
    ///
    /// Since `sum_y pi(y | x) / y <= 1`, `h(x) <= (x - 1)(d - 1)`, so the
    /// total outflow rate of any coordinate is at most
    /// `d^2 lambda + d + d (xmax - 1)(d - 1)`. For `d >= 3` the default step
    /// exceeds `2 / rate` near the truncation and the iteration oscillates.
    pub fn stable_dt(&self) -> f64 {
        let d = self.params.d as f64;
        let rate = d * d * self.params.lambda + d + d * (self.params.xmax as f64 - 1.0) * (d - 1.0);
        1.9 / rate
    }
}

impl OdeSystem for PairPsD {
    fn dim(&self) -> usize {
        self.layout.canon.len()
    }

    fn rhs(&self, state: &[f64], out: &mut [f64]) {
        pair_d_rhs_into(&self.layout, self.params.lambda, state, out);
    }

    fn label(&self, index: usize) -> String {
        let mut digits = vec![0; self.layout.d];
        decode(index, self.layout.xmax, &mut digits);
        let parts: Vec<String> = digits.iter().map(|v| (v + 1).to_string()).collect();
        format!("pi({})", parts.join(","))
    }

    fn project(&self, state: &mut [f64]) {
        clamp_nonnegative(state);
    }
}

/// Derivative of the order-`d` pair-PS ODE.
pub fn pair_ps_rhs_d(s: &PairStateD, p: &ModelParams) -> PairStateD {
    let layout = TensorLayout::new(s.d, s.xmax);
    let mut out = vec![0.0; s.pi.len()];
    pair_d_rhs_into(&layout, p.lambda, &s.pi, &mut out);
    PairStateD {
        d: s.d,
        xmax: s.xmax,
        pi: out,
    }
}

/// Fixed point of the order-`d` model from the empty system.
pub fn pair_ps_d_fixed_point(
    p: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<Solved<PairStateD>> {
    let sys = PairPsD::new(*p)?;
    let cfg = IntegratorConfig {
        dt: cfg.dt.min(sys.stable_dt()),
        ..*cfg
    };
    let fp = solve_fixed_point(&sys, &vec![0.0; sys.dim()], &cfg)?;
    let state = PairStateD::from_vec(p.d, p.xmax, fp.state.clone())?;
    Ok(Solved::new(state.distribution()?, state, &fp))
}
