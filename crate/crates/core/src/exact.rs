//! Exact stationary distributions for three servers with two replicas per
//! job, and the closed-form FCFS mean used as a large-system reference.

use crate::dist::QueueDist;
use crate::error::{Error, Result};

/// Largest central-queue length solved by enumerating the chain.
pub const MCAP_ENUM_MAX: usize = 12;
/// Largest central-queue length accepted by [`fcfs_n3_stationary`].
pub const MCAP_MAX: usize = 400;
/// Default central-queue truncation; the dropped mass is about `lambda^60`.
pub const MCAP_DEFAULT: usize = 60;
/// Default per-class cap of the PS chain.
pub const KCAP_DEFAULT: usize = 20;
/// Required sup-norm of `pi Q` at the returned stationary vector.
pub const BALANCE_TOL: f64 = 1e-10;

/// Sparse generator stored by destination, for Gauss-Seidel sweeps.
#[derive(Debug, Clone)]
pub struct Ctmc {
    n: usize,
    /// Incoming transitions of state `j` are `src[start[j]..start[j + 1]]`.
    start: Vec<usize>,
    src: Vec<u32>,
    rate: Vec<f64>,
    /// Total outflow rate of each state.
    out: Vec<f64>,
}

impl Ctmc {
    /// Builds the chain from `(from, to, rate)` triples; self-loops and zero
    /// rates are dropped.
    pub fn from_transitions(n: usize, transitions: &[(usize, usize, f64)]) -> Result<Self> {
        let mut count = vec![0usize; n + 1];
        let mut out = vec![0.0; n];
        for &(i, j, r) in transitions {
            if i >= n || j >= n {
                return Err(Error::StateSpace(format!(
                    "transition {i} -> {j} outside {n} states"
                )));
            }
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::param("rate", format!("rate {r} on {i} -> {j}")));
            }
            if i != j && r > 0.0 {
                count[j + 1] += 1;
                out[i] += r;
            }
        }
        for j in 0..n {
            count[j + 1] += count[j];
        }
        let start = count.clone();
        let mut fill = count;
        let mut src = vec![0u32; start[n]];
        let mut rate = vec![0.0; start[n]];
        for &(i, j, r) in transitions {
            if i != j && r > 0.0 {
                src[fill[j]] = i as u32;
                rate[fill[j]] = r;
                fill[j] += 1;
            }
        }
        Ok(Ctmc {
            n,
            start,
            src,
            rate,
            out,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `sup_j |(pi Q)_j|`.
    pub fn balance_residual(&self, pi: &[f64]) -> f64 {
        (0..self.n)
            .map(|j| {
                let inflow: f64 = (self.start[j]..self.start[j + 1])
                    .map(|e| pi[self.src[e] as usize] * self.rate[e])
                    .sum();
                (inflow - pi[j] * self.out[j]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Stationary vector by Gauss-Seidel sweeps on the global balance
    /// equations, renormalized after each sweep.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        if let Some(j) = (0..self.n).find(|&j| self.out[j] <= 0.0) {
            return Err(Error::Solve(format!("state {j} is absorbing")));
        }
        let mut pi = vec![1.0 / self.n as f64; self.n];
        let max_sweeps = 200_000;
        for sweep in 0..max_sweeps {
            let mut change = 0.0f64;
            for j in 0..self.n {
                let inflow: f64 = (self.start[j]..self.start[j + 1])
                    .map(|e| pi[self.src[e] as usize] * self.rate[e])
                    .sum();
                let next = inflow / self.out[j];
                change = change.max((next - pi[j]).abs());
                pi[j] = next;
            }
            let total: f64 = pi.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::Solve("iteration lost all mass".into()));
            }
            for v in pi.iter_mut() {
                *v /= total;
            }
            if change / total < 1e-16
                || (sweep % 20 == 19 && self.balance_residual(&pi) < 1e-3 * BALANCE_TOL)
            {
                break;
            }
        }
        let res = self.balance_residual(&pi);
        if res >= BALANCE_TOL {
            return Err(Error::Solve(format!(
                "balance residual {res:e} after {max_sweeps} sweeps"
            )));
        }
        Ok(pi)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::param(
            "lambda",
            format!("must lie in (0, 1), got {lambda}"),
        ));
    }
    Ok(())
}

/// Per-server queue-length distribution of the three-server PS chain.
///
/// State `(s1, s2, s3)` counts jobs of each class; class `i` occupies
/// servers `i` and `i + 1` (mod 3), so server `i` holds `s_{i-1} + s_i`.
pub fn ps_n3_stationary(lambda: f64, kcap: usize) -> Result<QueueDist> {
    check_lambda(lambda)?;
    if kcap < 5 {
        return Err(Error::param("kcap", format!("must be >= 5, got {kcap}")));
    }
    let w = kcap + 1;
    let n = w * w * w;
    let enc = |s: [usize; 3]| (s[0] * w + s[1]) * w + s[2];
    let share = |a: usize, b: usize| {
        if a + b == 0 {
            0.0
        } else {
            a as f64 / (a + b) as f64
        }
    };
    let mut tr = Vec::with_capacity(n * 6);
    for s0 in 0..w {
        for s1 in 0..w {
            for s2 in 0..w {
                let s = [s0, s1, s2];
                let here = enc(s);
                for i in 0..3 {
                    if s[i] < kcap {
                        let mut t = s;
                        t[i] += 1;
                        tr.push((here, enc(t), lambda));
                    }
                    if s[i] > 0 {
                        let next = s[(i + 1) % 3];
                        let prev = s[(i + 2) % 3];
                        let r = share(s[i], next) + share(s[i], prev);
                        let mut t = s;
                        t[i] -= 1;
                        tr.push((here, enc(t), r));
                    }
                }
            }
        }
    }
    let pi = Ctmc::from_transitions(n, &tr)?.stationary()?;
    let mut q = vec![0.0; 2 * kcap + 1];
    for s0 in 0..w {
        for s1 in 0..w {
            for s2 in 0..w {
                let p = pi[enc([s0, s1, s2])] / 3.0;
                q[s2 + s0] += p;
                q[s0 + s1] += p;
                q[s1 + s2] += p;
            }
        }
    }
    normalized(q)
}

/// Renormalizes away the rounding left by the iterative solve.
fn normalized(mut q: Vec<f64>) -> Result<QueueDist> {
    let total: f64 = q.iter().sum();
    for v in q.iter_mut() {
        *v /= total;
    }
    QueueDist::new(q)
}

/// Per-server queue-length distribution of three FCFS servers, from the
/// central queue of job classes in arrival order, truncated at `mcap` jobs.
///
/// Each server works on the earliest job in the sequence that it hosts, so a
/// job completes at a rate equal to the number of its two servers not
/// claimed by an earlier job. Up to [`MCAP_ENUM_MAX`] the chain is
/// enumerated and solved; beyond that the same truncated chain is evaluated
/// through its product form (see [`fcfs_n3_product_form`]).
pub fn fcfs_n3_stationary(lambda: f64, mcap: usize) -> Result<QueueDist> {
    check_lambda(lambda)?;
    if !(8..=MCAP_MAX).contains(&mcap) {
        return Err(Error::param(
            "mcap",
            format!("must lie in 8..={MCAP_MAX}, got {mcap}"),
        ));
    }
    if mcap > MCAP_ENUM_MAX {
        return fcfs_n3_product_form(lambda, mcap);
    }
    fcfs_n3_chain(lambda, mcap)
}

/// Solves the enumerated central-queue chain (`3^0 + ... + 3^mcap` states).
pub fn fcfs_n3_chain(lambda: f64, mcap: usize) -> Result<QueueDist> {
    check_lambda(lambda)?;
    if !(1..=MCAP_ENUM_MAX).contains(&mcap) {
        return Err(Error::StateSpace(format!(
            "enumeration supports mcap <= {MCAP_ENUM_MAX}, got {mcap}"
        )));
    }
    // sequences of length m occupy offset[m] .. offset[m] + 3^m, with the
    // first job as the most significant base-3 digit
    let mut offset = vec![0usize; mcap + 2];
    let mut pow = vec![1usize; mcap + 1];
    for m in 1..=mcap {
        pow[m] = pow[m - 1] * 3;
    }
    for m in 0..=mcap {
        offset[m + 1] = offset[m] + pow[m];
    }
    let n = offset[mcap + 1];
    let mut tr = Vec::with_capacity(n * 5);
    let mut digits = vec![0usize; mcap];
    for m in 0..=mcap {
        for code in 0..pow[m] {
            let here = offset[m] + code;
            let mut c = code;
            for k in (0..m).rev() {
                digits[k] = c % 3;
                c /= 3;
            }
            if m < mcap {
                for class in 0..3 {
                    tr.push((here, offset[m + 1] + code * 3 + class, lambda));
                }
            }
            let mut claimed = [false; 3];
            for (i, &c) in digits.iter().enumerate().take(m) {
                let (a, b) = (c, (c + 1) % 3);
                let rate = (!claimed[a]) as u8 + (!claimed[b]) as u8;
                if rate > 0 {
                    // remove job i: high part keeps its digits, low part shifts up
                    let low_len = m - 1 - i;
                    let high = code / pow[low_len + 1];
                    let low = code % pow[low_len];
                    let next = offset[m - 1] + high * pow[low_len] + low;
                    tr.push((here, next, rate as f64));
                }
                claimed[a] = true;
                claimed[b] = true;
                if claimed.iter().all(|&c| c) {
                    break;
                }
            }
        }
    }
    let pi = Ctmc::from_transitions(n, &tr)?.stationary()?;
    let mut q = vec![0.0; mcap + 1];
    for m in 0..=mcap {
        for code in 0..pow[m] {
            let p = pi[offset[m] + code] / 3.0;
            let mut load = [0usize; 3];
            let mut c = code;
            for _ in 0..m {
                let class = c % 3;
                c /= 3;
                load[class] += 1;
                load[(class + 1) % 3] += 1;
            }
            for l in load {
                q[l] += p;
            }
        }
    }
    normalized(q)
}

/// Stationary law of the central-queue chain truncated at `mcap` jobs,
/// from its product form.
///
/// The completion rate of the first `i` jobs together is the number of
/// servers they cover, which depends only on the set of classes present, so
/// the chain is an order-independent queue. Such chains satisfy partial
/// balance, and blocking arrivals at `mcap` keeps the untruncated weights
/// `prod_i lambda / mu(c_1..c_i)` on the remaining states. With three servers
/// `mu` is 2 while all jobs share one class and 3 afterwards, so the
/// weights can be summed by class counts instead of enumerating sequences.
pub fn fcfs_n3_product_form(lambda: f64, mcap: usize) -> Result<QueueDist> {
    check_lambda(lambda)?;
    if !(1..=MCAP_MAX).contains(&mcap) {
        return Err(Error::param(
            "mcap",
            format!("must lie in 1..={MCAP_MAX}, got {mcap}"),
        ));
    }
    // Load of server 0. Classes 0 and 2 contain it, class 1 does not.
    // binom[r][j]: weight of tails of length r with j jobs at server 0, where
    // each tail job has weight lambda / 3 and two of the three classes load it.
    let mut binom = vec![vec![0.0; mcap + 1]; mcap + 1];
    binom[0][0] = 1.0;
    for r in 1..=mcap {
        for j in 0..=r {
            let stay = binom[r - 1][j] * lambda / 3.0;
            let grow = if j > 0 {
                binom[r - 1][j - 1] * 2.0 * lambda / 3.0
            } else {
                0.0
            };
            binom[r][j] = stay + grow;
        }
    }
    let mut q = vec![0.0; mcap + 1];
    q[0] = 1.0;
    let loads = |c: usize| (c != 1) as usize;
    for c in 0..3 {
        let mut lead = 1.0;
        for k in 1..=mcap {
            lead *= lambda / 2.0;
            q[k * loads(c)] += lead;
            if k == mcap {
                break;
            }
            for c2 in (0..3).filter(|&c2| c2 != c) {
                let base = k * loads(c) + loads(c2);
                let first = lead * lambda / 3.0;
                for (r, row) in binom.iter().enumerate().take(mcap - k) {
                    for (j, w) in row.iter().enumerate().take(r + 1) {
                        q[base + j] += first * w;
                    }
                }
            }
        }
    }
    normalized(q)
}

/// `2 lambda E[T] = 2 (ln(1 / (1 - lambda)) - lambda) / lambda`.
pub fn fcfs_asymptotic_mean(lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(2.0 * (-(1.0 - lambda).ln() - lambda) / lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn birth_death_chain() {
        // M/M/1 truncated at 30 with rho = 0.5
        let mut tr = Vec::new();
        for i in 0..30 {
            tr.push((i, i + 1, 0.5));
            tr.push((i + 1, i, 1.0));
        }
        let c = Ctmc::from_transitions(31, &tr).unwrap();
        let pi = c.stationary().unwrap();
        let norm = (1.0 - 0.5f64.powi(31)) / 0.5;
        for (k, p) in pi.iter().enumerate() {
            assert!(
                (p - 0.5f64.powi(k as i32) / norm).abs() < 1e-12,
                "{k}: {p} vs {}",
                0.5f64.powi(k as i32) / norm
            );
        }
    }

    #[test]
    fn absorbing_state_is_rejected() {
        let c = Ctmc::from_transitions(2, &[(0, 1, 1.0)]).unwrap();
        assert!(c.stationary().is_err());
    }

    #[test]
    fn asymptotic_mean_values() {
        assert!((fcfs_asymptotic_mean(0.9).unwrap() - 3.1169).abs() < 1e-4);
        assert!((fcfs_asymptotic_mean(0.7).unwrap() - 1.4399).abs() < 1e-4);
        assert!((fcfs_asymptotic_mean(0.5).unwrap() - 0.77259).abs() < 1e-5);
        assert!(fcfs_asymptotic_mean(1.0).is_err());
    }

    #[test]
    fn light_load_is_mostly_empty() {
        let q = ps_n3_stationary(1e-4, 6).unwrap();
        assert!(q.prob(0) > 0.999);
        let q = fcfs_n3_stationary(1e-4, 8).unwrap();
        assert!(q.prob(0) > 0.999);
    }

    #[test]
    fn product_form_matches_enumerated_chain() {
        for (lambda, m) in [(0.5, 9), (0.8, 8)] {
            let a = fcfs_n3_chain(lambda, m).unwrap();
            let b = fcfs_n3_product_form(lambda, m).unwrap();
            for x in 0..=m {
                assert!((a.prob(x) - b.prob(x)).abs() < 1e-10, "x={x}");
            }
        }
    }

    #[test]
    fn rejects_bad_caps() {
        assert!(ps_n3_stationary(0.5, 4).is_err());
        assert!(fcfs_n3_stationary(0.5, 7).is_err());
        assert!(fcfs_n3_stationary(0.5, MCAP_MAX + 1).is_err());
        assert!(fcfs_n3_chain(0.5, MCAP_ENUM_MAX + 1).is_err());
    }
}
