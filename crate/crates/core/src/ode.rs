//! Forward-Euler integration and fixed-point detection over flat state vectors.
//!
//! Every approximation in this crate is an autonomous ODE `ds/dt = f(s)`
//! whose stationary point is the steady-state estimate. The engine knows
//! nothing about the meaning of the coordinates; each model owns its own
//! index layout and exposes it through [`OdeSystem::label`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An autonomous system `ds/dt = rhs(s)`.
///
/// `rhs` must be deterministic. `project` runs after every Euler step and
/// is where models clamp rounding noise (e.g. tiny negative masses).
pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;

    fn rhs(&self, state: &[f64], out: &mut [f64]);

    fn label(&self, index: usize) -> String {
        format!("s[{index}]")
    }

    fn project(&self, _state: &mut [f64]) {}
}

/// Wraps a closure as an [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F> FnSystem<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnSystem { dim, f }
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, state: &[f64], out: &mut [f64]) {
        (self.f)(state, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Euler step.
    pub dt: f64,
    /// Integration horizon.
    pub t_max: f64,
    /// Fixed-point tolerance on the sup-norm of the derivative.
    pub tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 0.05,
            t_max: 1e4,
            tol: 1e-10,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::param(
                "tmax",
                format!("must be > 0, got {}", self.t_max),
            ));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::param(
                "tol",
                format!("must be > 0, got {}", self.tol),
            ));
        }
        Ok(())
    }
}

/// Outcome of [`solve_fixed_point`].
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub state: Vec<f64>,
    pub converged: bool,
    /// Integrated time until convergence (or `t_max`).
    pub t_used: f64,
    /// Sup-norm of the derivative at the returned state.
    pub residual: f64,
}

fn check_dims<S: OdeSystem + ?Sized>(sys: &S, s0: &[f64]) -> Result<()> {
    if s0.len() != sys.dim() {
        return Err(Error::param(
            "state",
            format!(
                "initial state has {} coordinates, system has {}",
                s0.len(),
                sys.dim()
            ),
        ));
    }
    Ok(())
}

/// Applies `s += h * ds`, failing on the first non-finite coordinate.
fn step<S: OdeSystem + ?Sized>(sys: &S, s: &mut [f64], ds: &[f64], h: f64, t: f64) -> Result<()> {
    let mut bad = None;
    for (i, (v, d)) in s.iter_mut().zip(ds).enumerate() {
        *v += h * d;
        if bad.is_none() && !v.is_finite() {
            bad = Some(i);
        }
    }
    if let Some(index) = bad {
        return Err(Error::Divergence {
            time: t,
            index,
            label: sys.label(index),
            value: s[index],
        });
    }
    sys.project(s);
    Ok(())
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| {
        if x.abs() > m || x.is_nan() {
            x.abs()
        } else {
            m
        }
    })
}

/// Advances `s0` to time `t_end` with steps of `cfg.dt`; the last step is
/// shortened to land exactly on `t_end`.
pub fn euler_integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    s0: &[f64],
    cfg: &IntegratorConfig,
    t_end: f64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_dims(sys, s0)?;
    if !(t_end >= 0.0 && t_end <= cfg.t_max) {
        return Err(Error::param(
            "t_end",
            format!("must lie in [0, t_max = {}], got {t_end}", cfg.t_max),
        ));
    }
    let mut s = s0.to_vec();
    let mut ds = vec![0.0; s.len()];
    let full_steps = (t_end / cfg.dt).floor() as u64;
    for k in 0..full_steps {
        sys.rhs(&s, &mut ds);
        step(sys, &mut s, &ds, cfg.dt, (k + 1) as f64 * cfg.dt)?;
    }
    let rest = t_end - full_steps as f64 * cfg.dt;
    if rest > 1e-12 * cfg.dt {
        sys.rhs(&s, &mut ds);
        step(sys, &mut s, &ds, rest, t_end)?;
    }
    Ok(s)
}

/// Integrates from `s0` until `sup |rhs(s)| < cfg.tol` or `cfg.t_max`.
///
/// Running out of time is not an error: the returned `converged` flag is
/// false and the last state is returned.
pub fn solve_fixed_point<S: OdeSystem + ?Sized>(
    sys: &S,
    s0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<FixedPoint> {
    cfg.validate()?;
    check_dims(sys, s0)?;
    let mut s = s0.to_vec();
    let mut ds = vec![0.0; s.len()];
    let max_steps = (cfg.t_max / cfg.dt).ceil() as u64;
    let mut k = 0u64;
    loop {
        sys.rhs(&s, &mut ds);
        let residual = sup_norm(&ds);
        let t = k as f64 * cfg.dt;
        if !residual.is_finite() {
            let index = ds.iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(Error::Divergence {
                time: t,
                index,
                label: sys.label(index),
                value: ds[index],
            });
        }
        if residual < cfg.tol || k >= max_steps {
            return Ok(FixedPoint {
                state: s,
                converged: residual < cfg.tol,
                t_used: t,
                residual,
            });
        }
        step(sys, &mut s, &ds, cfg.dt, t + cfg.dt)?;
        k += 1;
    }
}

/// Clamps negative entries to zero.
pub(crate) fn clamp_nonnegative(state: &mut [f64]) {
    for v in state.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relax(target: f64) -> FnSystem<impl Fn(&[f64], &mut [f64]) + Sync> {
        FnSystem::new(1, move |s: &[f64], out: &mut [f64]| out[0] = target - s[0])
    }

    #[test]
    fn linear_relaxation_reaches_target() {
        let cfg = IntegratorConfig::default();
        let s = euler_integrate(&relax(0.9), &[0.0], &cfg, 200.0).unwrap();
        assert!((s[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_is_identity() {
        let sys = FnSystem::new(3, |_: &[f64], out: &mut [f64]| out.fill(0.0));
        let s0 = [0.3, -1.0, 7.5];
        let s = euler_integrate(&sys, &s0, &IntegratorConfig::default(), 10.0).unwrap();
        assert_eq!(s, s0);
    }

    #[test]
    fn last_step_lands_on_t_end() {
        // ds/dt = 1 integrates exactly, so the final value is the elapsed time.
        let sys = FnSystem::new(1, |_: &[f64], out: &mut [f64]| out[0] = 1.0);
        let cfg = IntegratorConfig {
            dt: 0.3,
            ..Default::default()
        };
        let s = euler_integrate(&sys, &[0.0], &cfg, 1.0).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_of_relaxation() {
        let fp = solve_fixed_point(&relax(0.5), &[0.0], &IntegratorConfig::default()).unwrap();
        assert!(fp.converged);
        assert!((fp.state[0] - 0.5).abs() < 1e-9);
        assert!(fp.residual < 1e-10);
    }

    #[test]
    fn non_convergence_is_flagged_not_raised() {
        let cfg = IntegratorConfig {
            t_max: 1.0,
            ..Default::default()
        };
        let fp = solve_fixed_point(&relax(0.5), &[0.0], &cfg).unwrap();
        assert!(!fp.converged);
        assert!((fp.t_used - 1.0).abs() < 1e-9);
    }

    #[test]
    fn divergence_names_coordinate() {
        let sys = FnSystem::new(2, |s: &[f64], out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = s[1] * s[1] * 1e200;
        });
        let err =
            euler_integrate(&sys, &[0.0, 1.0], &IntegratorConfig::default(), 5.0).unwrap_err();
        match err {
            Error::Divergence { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config_and_dims() {
        let cfg = IntegratorConfig {
            dt: 0.0,
            ..Default::default()
        };
        assert!(euler_integrate(&relax(1.0), &[0.0], &cfg, 1.0).is_err());
        assert!(
            euler_integrate(&relax(1.0), &[0.0, 0.0], &IntegratorConfig::default(), 1.0).is_err()
        );
        let cfg = IntegratorConfig {
            t_max: 1.0,
            ..Default::default()
        };
        assert!(euler_integrate(&relax(1.0), &[0.0], &cfg, 2.0).is_err());
    }

    #[test]
    fn deterministic_trajectories() {
        let sys = FnSystem::new(2, |s: &[f64], out: &mut [f64]| {
            out[0] = (s[1] - s[0]).sin();
            out[1] = 0.3 - s[1] * s[0].cos();
        });
        let cfg = IntegratorConfig::default();
        let a = euler_integrate(&sys, &[0.1, 0.2], &cfg, 50.0).unwrap();
        let b = euler_integrate(&sys, &[0.1, 0.2], &cfg, 50.0).unwrap();
        assert_eq!(a, b);
    }
}
