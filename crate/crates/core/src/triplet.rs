//! Triplet approximation for processor-sharing servers with two replicas.
//!
//! Tracks chains `u - v - w` of three servers where `u, v` share one job and
//! `v, w` share another, classified by the degrees `(x, y, z)` of the three
//! servers. Edges between two degree-one servers have no triplet and are kept
//! as the separate scalar `pi(1, 1)`.

use crate::dist::QueueDist;
use crate::error::{Error, Result};
use crate::ode::{clamp_nonnegative, solve_fixed_point, IntegratorConfig, OdeSystem};
use crate::pair_ps::GUARD;
use crate::params::ModelParams;
use crate::solution::Solved;

/// `c(x, y, z)` for `x, z` in `1..=xmax` and `y` in `2..=xmax`, followed by
/// `pi(1, 1)` as the last coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletState {
    xmax: usize,
    data: Vec<f64>,
}

#[inline]
fn idx(xmax: usize, x: usize, y: usize, z: usize) -> usize {
    ((y - 2) * xmax + (x - 1)) * xmax + (z - 1)
}

fn triplet_dim(xmax: usize) -> usize {
    (xmax - 1) * xmax * xmax + 1
}

impl TripletState {
    pub fn empty(xmax: usize) -> Self {
        TripletState {
            xmax,
            data: vec![0.0; triplet_dim(xmax)],
        }
    }

    pub fn from_vec(xmax: usize, data: Vec<f64>) -> Result<Self> {
        if xmax < 2 || data.len() != triplet_dim(xmax) {
            return Err(Error::param("c", "state length does not match xmax"));
        }
        Ok(TripletState { xmax, data })
    }

    /// Builds `c(x, y, z) = (y - 1) pi(x, y) pi(y, z) / pi(y)` from a pair
    /// state, i.e. assumes the two ends are independent given the middle.
    pub fn from_pair_closure(pi: &crate::pair_ps::PairState) -> Self {
        let xmax = pi.xmax();
        let marg = pi.marginal();
        let mut s = TripletState::empty(xmax);
        for y in 2..=xmax {
            let m = marg[y - 1];
            if m < GUARD {
                continue;
            }
            for x in 1..=xmax {
                for z in 1..=xmax {
                    s.data[idx(xmax, x, y, z)] = (y - 1) as f64 * pi.get(x, y) * pi.get(y, z) / m;
                }
            }
        }
        let last = s.data.len() - 1;
        s.data[last] = pi.get(1, 1);
        s
    }

    pub fn xmax(&self) -> usize {
        self.xmax
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `c(x, y, z)`, zero whenever `y < 2` or an index is out of range.
    pub fn c(&self, x: usize, y: usize, z: usize) -> f64 {
        if x == 0 || z == 0 || y < 2 || x > self.xmax || y > self.xmax || z > self.xmax {
            0.0
        } else {
            self.data[idx(self.xmax, x, y, z)]
        }
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = idx(self.xmax, x, y, z);
        self.data[i] = v;
    }

    pub fn pi11(&self) -> f64 {
        self.data[self.data.len() - 1]
    }

    pub fn set_pi11(&mut self, v: f64) {
        let last = self.data.len() - 1;
        self.data[last] = v;
    }

    /// `pi(x, y) = sum_z c(x, y, z) / (y - 1)` for `y >= 2`; `pi(1, 1)` and
    /// `pi(x, 1) = pi(1, x)` otherwise.
    pub fn pi(&self, x: usize, y: usize) -> f64 {
        let t = Tables::new(&self.data, self.xmax);
        match (x, y) {
            (1, 1) => self.pi11(),
            (_, 1) => t.s(1, x) / (x - 1) as f64,
            _ => t.s(x, y) / (y - 1) as f64,
        }
    }

    pub fn q(&self) -> Vec<f64> {
        Tables::new(&self.data, self.xmax).q
    }

    pub fn distribution(&self) -> Result<QueueDist> {
        QueueDist::from_positive_part(&self.q()[1..])
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for y in 2..=self.xmax {
            for x in 1..=self.xmax {
                for z in 1..x {
                    m = m.max((self.c(x, y, z) - self.c(z, y, x)).abs());
                }
            }
        }
        m
    }

    /// `k(y, x) = (x - 1) sum_v c(v | y, x) / v`: buddy-completion rate seen
    /// by an end node of degree `x` whose triplet middle has degree `y`.
    pub fn k(&self, y: usize, x: usize) -> f64 {
        Tables::new(&self.data, self.xmax).k(y, x)
    }

    /// `l(x, y, z) = (y - 2) sum_v c(v | x, y, z) / v`.
    pub fn l(&self, x: usize, y: usize, z: usize) -> f64 {
        Tables::new(&self.data, self.xmax).l(x, y, z)
    }

    /// `m(x, y) = sum_z c(x, y, z) l(x, y, z) / ((y - 2) pi(x, y))` for
    /// `y >= 3`, zero for `y = 2` or an empty pair class.
    pub fn m(&self, x: usize, y: usize) -> f64 {
        if y < 3 {
            return 0.0;
        }
        let t = Tables::new(&self.data, self.xmax);
        let pxy = t.s(x, y) / (y - 1) as f64;
        if pxy < GUARD {
            return 0.0;
        }
        let sum: f64 = (1..=self.xmax)
            .map(|z| self.c(x, y, z) * t.l(x, y, z))
            .sum();
        sum / ((y - 2) as f64 * pxy)
    }
}

/// Partial sums over the last index, shared by every rate.
struct Tables {
    xmax: usize,
    /// `S(e, m) = sum_v c(e, m, v)` at `(m - 2) * xmax + (e - 1)`.
    s: Vec<f64>,
    /// `A(e, m) = sum_v c(e, m, v) / v`, same layout.
    a: Vec<f64>,
    /// `q(0..=xmax)`.
    q: Vec<f64>,
    pi11: f64,
}

impl Tables {
    fn new(data: &[f64], xmax: usize) -> Self {
        let mut s = vec![0.0; (xmax - 1) * xmax];
        let mut a = vec![0.0; (xmax - 1) * xmax];
        let inv: Vec<f64> = (1..=xmax).map(|v| 1.0 / v as f64).collect();
        let body = &data[..data.len() - 1];
        for (row, chunk) in body.chunks_exact(xmax).enumerate() {
            s[row] = chunk.iter().sum();
            a[row] = chunk.iter().zip(&inv).map(|(c, w)| c * w).sum();
        }
        let pi11 = data[data.len() - 1];
        let mut q = vec![0.0; xmax + 1];
        for y in 2..=xmax {
            let tot: f64 = s[(y - 2) * xmax..(y - 1) * xmax].iter().sum();
            q[y] = 2.0 * tot / (y * (y - 1)) as f64;
        }
        q[1] = 2.0 * pi11
            + 2.0
                * (2..=xmax)
                    .map(|x| s[(x - 2) * xmax] / (x - 1) as f64)
                    .sum::<f64>();
        q[0] = 1.0 - q[1..].iter().sum::<f64>();
        Tables {
            xmax,
            s,
            a,
            q,
            pi11,
        }
    }

    #[inline]
    fn s(&self, e: usize, m: usize) -> f64 {
        if m < 2 || m > self.xmax || e == 0 || e > self.xmax {
            0.0
        } else {
            self.s[(m - 2) * self.xmax + e - 1]
        }
    }

    #[inline]
    fn a(&self, e: usize, m: usize) -> f64 {
        if m < 2 || m > self.xmax || e == 0 || e > self.xmax {
            0.0
        } else {
            self.a[(m - 2) * self.xmax + e - 1]
        }
    }

    /// `c(x | y)` for `x, y >= 1`.
    fn cond(&self, x: usize, y: usize) -> f64 {
        if x == 0 || y == 0 || x > self.xmax || y > self.xmax {
            return 0.0;
        }
        let (num, den) = if y >= 2 {
            (2.0 * self.s(x, y), (y * (y - 1)) as f64 * self.q[y])
        } else if x >= 2 {
            (2.0 * self.s(1, x), (x - 1) as f64 * self.q[1])
        } else {
            (2.0 * self.pi11, self.q[1])
        };
        if den < GUARD {
            0.0
        } else {
            num / den
        }
    }

    fn k(&self, y: usize, x: usize) -> f64 {
        let den = self.s(y, x);
        if x < 2 || den < GUARD {
            0.0
        } else {
            (x - 1) as f64 * self.a(y, x) / den
        }
    }

    fn l(&self, x: usize, y: usize, z: usize) -> f64 {
        if y < 3 {
            return 0.0;
        }
        let den = self.s(x, y) + self.s(z, y);
        if den < GUARD {
            0.0
        } else {
            (y - 2) as f64 * (self.a(x, y) + self.a(z, y)) / den
        }
    }
}

/// `c(x | y)`: probability that a random neighbour of a degree-`y` node has
/// degree `x`.
pub fn cond_degree(s: &TripletState, x: usize, y: usize) -> f64 {
    Tables::new(&s.data, s.xmax).cond(x, y)
}

/// `c(v | x, y, z)`: degree of a neighbour of the middle node of an
/// `(x, y, z)` triplet, pooled over both ends.
pub fn cond_degree_triplet(s: &TripletState, v: usize, x: usize, y: usize, z: usize) -> f64 {
    let t = Tables::new(&s.data, s.xmax);
    let den = t.s(x, y) + t.s(z, y);
    if den < GUARD {
        0.0
    } else {
        (s.c(x, y, v) + s.c(v, y, z)) / den
    }
}

fn triplet_rhs_into(data: &[f64], xmax: usize, lambda: f64, out: &mut [f64]) {
    let t = Tables::new(data, xmax);
    let q = &t.q;
    let c = |x: usize, y: usize, z: usize| -> f64 {
        if x == 0 || z == 0 || y < 2 || x > xmax || y > xmax || z > xmax {
            0.0
        } else {
            data[idx(xmax, x, y, z)]
        }
    };
    // k(y, x) for x in 0..=xmax+1, per middle degree y.
    let mut ktab = vec![0.0; (xmax + 1) * (xmax + 2)];
    for y in 2..=xmax {
        for x in 2..=xmax {
            ktab[y * (xmax + 2) + x] = t.k(y, x);
        }
    }
    let k = |y: usize, x: usize| ktab[y * (xmax + 2) + x];
    let mut cond_prev = vec![0.0; xmax + 1];
    for y in 2..=xmax {
        let yf = y as f64;
        for (v, slot) in cond_prev.iter_mut().enumerate().skip(1) {
            *slot = t.cond(v, y - 1);
        }
        let born = lambda * q[y - 1] * (y - 1) as f64;
        for x in 1..=xmax {
            let xf = x as f64;
            for z in x..=xmax {
                let zf = z as f64;
                let here = c(x, y, z);
                let mut v = born * (q[x - 1] * cond_prev[z] + q[z - 1] * cond_prev[x]);
                v += 2.0 * lambda * (c(x - 1, y, z) + c(x, y - 1, z) + c(x, y, z - 1) - 3.0 * here);
                v += c(x + 1, y, z) * xf / (xf + 1.0)
                    + c(x, y + 1, z) * (yf - 1.0) / (yf + 1.0)
                    + c(x, y, z + 1) * zf / (zf + 1.0)
                    - 3.0 * here;
                v -= here * (k(y, x) + k(y, z) + t.l(x, y, z));
                v += c(x + 1, y, z) * k(y, x + 1) + c(x, y, z + 1) * k(y, z + 1);
                if y < xmax {
                    v += c(x, y + 1, z) * t.l(x, y + 1, z);
                }
                out[idx(xmax, x, y, z)] = v;
                out[idx(xmax, z, y, x)] = v;
            }
        }
    }
    let pi11 = t.pi11;
    let from_triplets: f64 = (1..=xmax)
        .map(|x| c(1, 2, x) * (0.5 + 1.0 / x as f64))
        .sum();
    out[out.len() - 1] = lambda * q[0] * q[0] - (2.0 + 4.0 * lambda) * pi11 + 2.0 * from_triplets;
}

/// Derivative of the triplet ODE.
pub fn triplet_rhs(s: &TripletState, p: &ModelParams) -> TripletState {
    let mut out = vec![0.0; s.data.len()];
    triplet_rhs_into(&s.data, s.xmax, p.lambda, &mut out);
    TripletState {
        xmax: s.xmax,
        data: out,
    }
}

/// The triplet ODE as an [`OdeSystem`].
pub struct Triplet {
    params: ModelParams,
}

impl Triplet {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        if params.d != 2 {
            return Err(Error::param("d", "the triplet approximation needs d = 2"));
        }
        Ok(Triplet { params })
    }
}

impl OdeSystem for Triplet {
    fn dim(&self) -> usize {
        triplet_dim(self.params.xmax)
    }

    fn rhs(&self, state: &[f64], out: &mut [f64]) {
        triplet_rhs_into(state, self.params.xmax, self.params.lambda, out);
    }

    fn label(&self, index: usize) -> String {
        let n = self.params.xmax;
        if index + 1 == self.dim() {
            return "pi(1,1)".into();
        }
        let z = index % n + 1;
        let x = (index / n) % n + 1;
        let y = index / (n * n) + 2;
        format!("c({x},{y},{z})")
    }

    fn project(&self, state: &mut [f64]) {
        clamp_nonnegative(state);
    }
}

/// Integrates the triplet ODE from the empty system to its fixed point.
pub fn triplet_fixed_point(
    p: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<Solved<TripletState>> {
    let sys = Triplet::new(*p)?;
    let fp = solve_fixed_point(&sys, &vec![0.0; sys.dim()], cfg)?;
    let state = TripletState::from_vec(p.xmax, fp.state.clone())?;
    Ok(Solved::new(state.distribution()?, state, &fp))
}
