//! Discipline-independent mean-field approximation.
//!
//! Assumes the queues holding the replicas of a job are independent, so
//! every buddy disappears at rate `(1 - q(0)) / qbar`. The fixed point is
//! known in closed form up to the scalar `qbar`, which is found by
//! bisection on a monotone series equation.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::dist::QueueDist;
use crate::error::{Error, Result};
use crate::ode::{clamp_nonnegative, OdeSystem};
use crate::params::ModelParams;

/// Mean-field state `q(0..=xmax)`; only `x >= 1` is integrated.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    q: Vec<f64>,
}

impl MeanFieldState {
    /// Empty system: `q(0) = 1`.
    pub fn empty(xmax: usize) -> Self {
        let mut q = vec![0.0; xmax + 1];
        q[0] = 1.0;
        MeanFieldState { q }
    }

    /// From the integrated coordinates `q(1..=xmax)`.
    pub fn from_positive_part(rest: &[f64]) -> Self {
        let mut q = Vec::with_capacity(rest.len() + 1);
        q.push(1.0 - rest.iter().sum::<f64>());
        q.extend_from_slice(rest);
        MeanFieldState { q }
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn positive_part(&self) -> &[f64] {
        &self.q[1..]
    }

    pub fn qbar(&self) -> f64 {
        self.q.iter().enumerate().map(|(x, v)| x as f64 * v).sum()
    }
}

/// Derivative of `q(1..=xmax)`; `q(xmax+1)` is taken as zero.
pub fn mf_rhs(s: &MeanFieldState, p: &ModelParams) -> Vec<f64> {
    let mut out = vec![0.0; s.q.len() - 1];
    mf_rhs_into(&s.q[1..], p, &mut out);
    out
}

fn mf_rhs_into(rest: &[f64], p: &ModelParams, out: &mut [f64]) {
    let xmax = rest.len();
    let q = |x: usize| -> f64 {
        match x {
            0 => 1.0 - rest.iter().sum::<f64>(),
            x if x > xmax => 0.0,
            x => rest[x - 1],
        }
    };
    let q0 = q(0);
    let qbar: f64 = rest
        .iter()
        .enumerate()
        .map(|(i, v)| (i + 1) as f64 * v)
        .sum();
    let dl = p.d as f64 * p.lambda;
    // No jobs means no buddies: the cancellation term vanishes.
    let buddy = if qbar > 0.0 {
        (1.0 - q0) * (p.d as f64 - 1.0) / qbar
    } else {
        0.0
    };
    for x in 1..=xmax {
        let xf = x as f64;
        out[x - 1] =
            dl * (q(x - 1) - q(x)) + q(x + 1) - q(x) + buddy * ((xf + 1.0) * q(x + 1) - xf * q(x));
    }
}

/// The mean-field ODE as an [`OdeSystem`] over `q(1..=xmax)`.
pub struct MeanField {
    params: ModelParams,
}

impl MeanField {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(MeanField { params })
    }

    pub fn empty_state(&self) -> Vec<f64> {
        vec![0.0; self.params.xmax]
    }

    pub fn distribution(&self, state: &[f64]) -> Result<QueueDist> {
        QueueDist::from_positive_part(state)
    }
}

impl OdeSystem for MeanField {
    fn dim(&self) -> usize {
        self.params.xmax
    }

    fn rhs(&self, state: &[f64], out: &mut [f64]) {
        mf_rhs_into(state, &self.params, out);
    }

    fn label(&self, index: usize) -> String {
        format!("q({})", index + 1)
    }

    fn project(&self, state: &mut [f64]) {
        clamp_nonnegative(state);
    }
}

const TERM_FLOOR: f64 = 1e-16;

/// `sum_{x>=1} a^x / prod_{l=1..x} (1 + b l)`.
///
/// Returns early (with a partial sum above `stop_above`) once the answer is
/// known to exceed it; terms are positive so partial sums are monotone.
fn product_series(a: f64, b: f64, cap: usize, stop_above: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 0.0;
    for l in 1..=cap {
        term *= a / (1.0 + b * l as f64);
        sum += term;
        if sum > stop_above {
            return Ok(sum);
        }
        // Once the ratio is below one the remaining terms are dominated by a
        // geometric tail, so a tiny term means the sum has converged.
        if term < TERM_FLOOR && a / (1.0 + b * (l + 1) as f64) < 1.0 {
            return Ok(sum);
        }
    }
    Err(Error::SeriesNonConvergence { terms: cap })
}

fn series_cap(p: &ModelParams) -> usize {
    (4 * p.xmax).max(200)
}

/// `sum_{x>=1} (d lambda)^x / prod (1 + lambda (d-1) l / qbar)`, the
/// right-hand side of the fixed-point equation for `qbar`.
pub fn qbar_series(p: &ModelParams, qbar: f64) -> Result<f64> {
    let a = p.d as f64 * p.lambda;
    let b = p.lambda * (p.d as f64 - 1.0) / qbar;
    product_series(a, b, series_cap(p), f64::INFINITY)
}

/// Solves `lambda / (1 - lambda) = qbar_series(qbar)` by bisection.
pub fn mf_qbar(p: &ModelParams) -> Result<f64> {
    p.validate()?;
    let target = p.lambda / (1.0 - p.lambda);
    if p.d == 1 {
        // No buddies: every server is an M/M/1 queue.
        return Ok(target);
    }
    let a = p.d as f64 * p.lambda;
    let cap = series_cap(p);
    let exceeds = |qbar: f64| -> Result<bool> {
        let b = p.lambda * (p.d as f64 - 1.0) / qbar;
        Ok(product_series(a, b, cap, target)? >= target)
    };
    let mut lo = 1e-9;
    let mut hi = 1.0;
    let mut doublings = 0;
    while !exceeds(hi)? {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Bracket(format!(
                "no sign change found up to qbar = {hi} for lambda = {}, d = {}",
                p.lambda, p.d
            )));
        }
    }
    if exceeds(lo)? {
        return Err(Error::Bracket(format!(
            "residual already nonnegative at lower end qbar = {lo}"
        )));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if exceeds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form mean-field fixed point, truncated at `p.xmax` and not
/// renormalized: `q(0) = 1 - lambda` and
/// `q(x) = (1 - lambda) (d lambda)^x / prod (1 + lambda l (d-1) / qbar)`.
pub fn mf_fixed_point(p: &ModelParams) -> Result<QueueDist> {
    let qbar = mf_qbar(p)?;
    let a = p.d as f64 * p.lambda;
    let b = p.lambda * (p.d as f64 - 1.0) / qbar;
    let mut q = Vec::with_capacity(p.xmax + 1);
    q.push(1.0 - p.lambda);
    let mut term = 1.0;
    for l in 1..=p.xmax {
        term *= a / (1.0 + b * l as f64);
        q.push((1.0 - p.lambda) * term);
    }
    QueueDist::new(q)
}

/// Both sides of
/// `sum_{x>=1} a^x / prod (1 + b l) = (a/b)^(-1/b) e^(a/b) gamma_lower(1 + 1/b, a/b)`,
/// the first by direct summation, the second through the regularized lower
/// incomplete gamma function.
pub fn gamma_series_identity(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::param(
            "a,b",
            format!("need a > 0 and b > 0, got a={a}, b={b}"),
        ));
    }
    // The ratio a / (1 + b l) drops below one after about a / b terms.
    let cap = ((a / b).ceil() as usize).saturating_mul(4).max(10_000);
    let series = product_series(a, b, cap, f64::INFINITY)?;
    let s = 1.0 + 1.0 / b;
    let z = a / b;
    let lower = gamma_lr(s, z);
    let gamma = if lower > 0.0 {
        (-(1.0 / b) * z.ln() + z + ln_gamma(s) + lower.ln()).exp()
    } else {
        0.0
    };
    Ok((series, gamma))
}
