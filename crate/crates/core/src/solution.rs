use crate::dist::QueueDist;
use crate::ode::FixedPoint;

/// A converged (or abandoned) approximation: the marginal queue-length
/// distribution together with the model's own fixed-point state.
#[derive(Debug, Clone)]
pub struct Solved<S> {
    pub dist: QueueDist,
    pub state: S,
    pub converged: bool,
    pub t_used: f64,
    pub residual: f64,
}

impl<S> Solved<S> {
    pub(crate) fn new(dist: QueueDist, state: S, fp: &FixedPoint) -> Self {
        Solved {
            dist,
            state,
            converged: fp.converged,
            t_used: fp.t_used,
            residual: fp.residual,
        }
    }

    pub fn mean(&self) -> f64 {
        self.dist.mean()
    }

    /// True when the distribution has too much mass near `xmax`.
    pub fn truncation_warning(&self) -> bool {
        self.dist.truncation_warning()
    }
}
