//! Model parameters shared by every solver and the simulator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Service discipline used by every server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    /// Processor sharing: every replica in the queue gets an equal share.
    Ps,
    /// First come first served: only the head of the queue is served.
    Fcfs,
    /// Last come first served, preemptive: only the most recent arrival is served.
    Lcfs,
    /// Limited processor sharing: the `k` oldest replicas share the server.
    Lps,
}

impl Discipline {
    pub fn as_str(self) -> &'static str {
        match self {
            Discipline::Ps => "ps",
            Discipline::Fcfs => "fcfs",
            Discipline::Lcfs => "lcfs",
            Discipline::Lps => "lps",
        }
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Discipline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ps" => Ok(Discipline::Ps),
            "fcfs" => Ok(Discipline::Fcfs),
            "lcfs" => Ok(Discipline::Lcfs),
            "lps" => Ok(Discipline::Lps),
            other => Err(Error::param(
                "discipline",
                format!("unknown discipline `{other}` (expected ps, fcfs, lcfs or lps)"),
            )),
        }
    }
}

/// Parameters of a redundancy-d system: per-server arrival rate `lambda`,
/// replication factor `d`, the service discipline, the LPS slot count `k`
/// and the queue-length truncation `xmax` used by the ODE solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub d: usize,
    pub discipline: Discipline,
    #[serde(rename = "K")]
    pub k: usize,
    pub xmax: usize,
}

impl ModelParams {
    /// Parameters with the default truncation for `d` (50 for d <= 2, 30 above).
    pub fn new(lambda: f64, d: usize, discipline: Discipline) -> Self {
        ModelParams {
            lambda,
            d,
            discipline,
            k: 1,
            xmax: default_xmax(d),
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_xmax(mut self, xmax: usize) -> Self {
        self.xmax = xmax;
        self
    }

    /// Checks every invariant; the error names the first violated field.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::param(
                "lambda",
                format!("must satisfy 0 < lambda < 1, got {}", self.lambda),
            ));
        }
        if self.d < 1 {
            return Err(Error::param("d", format!("must be >= 1, got {}", self.d)));
        }
        if self.k < 1 {
            return Err(Error::param("K", format!("must be >= 1, got {}", self.k)));
        }
        if self.xmax < 2 {
            return Err(Error::param(
                "xmax",
                format!("must be >= 2, got {}", self.xmax),
            ));
        }
        Ok(())
    }
}

/// Free-function form of [`ModelParams::validate`].
pub fn validate_params(p: &ModelParams) -> Result<()> {
    p.validate()
}

pub fn default_xmax(d: usize) -> usize {
    if d <= 2 {
        50
    } else {
        30
    }
}
