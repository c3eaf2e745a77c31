//! Per-server queue-length distributions and their CSV/JSON forms.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Tolerance on `|sum(q) - 1|` for every emitted distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Tail mass above which a solver flags the truncation as inadequate.
pub const TAIL_WARN: f64 = 1e-8;
/// Width of the window `[xmax - TAIL_WINDOW, xmax]` counted as tail mass.
pub const TAIL_WINDOW: usize = 5;

/// Fraction of servers holding `x` replicas, for `x = 0..=xmax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueDist {
    q: Vec<f64>,
    tail_mass: f64,
}

impl QueueDist {
    /// Builds a distribution, rejecting negative entries and bad normalization.
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.len() < 2 {
            return Err(Error::param("q", "distribution needs at least two entries"));
        }
        if let Some((x, v)) = q
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::param(
                "q",
                format!("q({x}) = {v} is not a probability"),
            ));
        }
        let total: f64 = q.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::param(
                "q",
                format!("distribution sums to {total}, expected 1 within {NORMALIZATION_TOL}"),
            ));
        }
        let start = q.len().saturating_sub(TAIL_WINDOW + 1);
        let tail_mass = q[start..].iter().sum();
        Ok(QueueDist { q, tail_mass })
    }

    /// Builds `q(0) = 1 - sum(rest)` from the entries for `x >= 1`.
    ///
    /// Entries in `[-1e-12, 0)` are Euler noise and are clamped to zero.
    pub fn from_positive_part(rest: &[f64]) -> Result<Self> {
        let mut q = Vec::with_capacity(rest.len() + 1);
        q.push(0.0);
        for &v in rest {
            q.push(if (-1e-12..0.0).contains(&v) { 0.0 } else { v });
        }
        let busy: f64 = q[1..].iter().sum();
        q[0] = 1.0 - busy;
        Self::new(q)
    }

    pub fn point_mass(x: usize, xmax: usize) -> Self {
        let mut q = vec![0.0; xmax + 1];
        q[x] = 1.0;
        Self::new(q).expect("point mass is a distribution")
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// `q(x)`, zero beyond the truncation.
    pub fn prob(&self, x: usize) -> f64 {
        self.q.get(x).copied().unwrap_or(0.0)
    }

    pub fn xmax(&self) -> usize {
        self.q.len() - 1
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// True when the mass near the truncation bound exceeds [`TAIL_WARN`].
    pub fn truncation_warning(&self) -> bool {
        self.tail_mass > TAIL_WARN
    }

    pub fn mean(&self) -> f64 {
        dist_mean(self)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "q"])?;
        for (x, v) in self.q.iter().enumerate() {
            w.write_record([x.to_string(), format_prob(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self, params: &ModelParams, converged: bool) -> DistJson {
        DistJson {
            lambda: params.lambda,
            d: params.d,
            discipline: params.discipline.to_string(),
            k: params.k,
            mean: self.mean(),
            converged,
            tail_mass: self.tail_mass,
            q: self.q.clone(),
        }
    }
}

/// `sum_x x q(x)`.
pub fn dist_mean(dist: &QueueDist) -> f64 {
    dist.q.iter().enumerate().map(|(x, v)| x as f64 * v).sum()
}

/// JSON export of a distribution with its model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistJson {
    pub lambda: f64,
    pub d: usize,
    pub discipline: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub mean: f64,
    pub converged: bool,
    pub tail_mass: f64,
    pub q: Vec<f64>,
}

pub(crate) fn format_prob(v: f64) -> String {
    format!("{v:.12e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Discipline;

    #[test]
    fn point_mass_at_zero_has_zero_mean() {
        let d = QueueDist::point_mass(0, 10);
        assert_eq!(d.mean(), 0.0);
        assert_eq!(d.tail_mass(), 0.0);
    }

    #[test]
    fn geometric_mean() {
        let rho: f64 = 0.5;
        let mut q: Vec<f64> = (0..80).map(|k| (1.0 - rho) * rho.powi(k)).collect();
        let missing = 1.0 - q.iter().sum::<f64>();
        q[0] += missing;
        let d = QueueDist::new(q).unwrap();
        assert!((d.mean() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unnormalized_and_negative() {
        assert!(QueueDist::new(vec![0.5, 0.4]).is_err());
        assert!(QueueDist::new(vec![1.1, -0.1]).is_err());
    }

    #[test]
    fn tail_mass_and_warning() {
        let mut q = vec![0.0; 11];
        q[0] = 1.0 - 1e-6;
        q[8] = 1e-6;
        let d = QueueDist::new(q).unwrap();
        assert!((d.tail_mass() - 1e-6).abs() < 1e-18);
        assert!(d.truncation_warning());
    }

    #[test]
    fn csv_and_json_shape() {
        let d = QueueDist::from_positive_part(&[0.25, 0.25]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,q\n0,"));
        assert_eq!(text.lines().count(), 4);

        let p = ModelParams::new(0.5, 2, Discipline::Ps).with_xmax(2);
        let v: serde_json::Value = serde_json::to_value(d.to_json(&p, true)).unwrap();
        for key in ["lambda", "d", "discipline", "K", "mean", "q"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["mean"].as_f64().unwrap(), 0.75);
    }
}
