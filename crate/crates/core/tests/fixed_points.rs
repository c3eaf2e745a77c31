//! Fixed points at moderate load, cheap enough for every test run.

use approx::assert_abs_diff_eq;
use redq_core::meanfield::mf_fixed_point;
use redq_core::pair_ps::pair_ps_fixed_point;
use redq_core::positional::positional_fixed_point;
use redq_core::triplet::triplet_fixed_point;
use redq_core::{Discipline, Error, IntegratorConfig, ModelParams};

fn cfg() -> IntegratorConfig {
    IntegratorConfig::default()
}

#[test]
fn pair_ps_at_half_load() {
    let p = ModelParams::new(0.5, 2, Discipline::Ps).with_xmax(25);
    let s = pair_ps_fixed_point(&p, &cfg()).unwrap();
    assert!(s.converged);
    assert_abs_diff_eq!(s.mean(), 0.78142, epsilon = 2e-3);
    assert_abs_diff_eq!(s.dist.prob(1), 3.0361e-1, epsilon = 5e-4);
    assert_abs_diff_eq!(s.dist.prob(0), 0.5, epsilon = 1e-6);
    assert!(s.state.max_asymmetry() < 1e-12);
}

#[test]
fn triplet_sits_above_pair() {
    let p = ModelParams::new(0.5, 2, Discipline::Ps).with_xmax(15);
    let tri = triplet_fixed_point(&p, &cfg()).unwrap();
    let pair = pair_ps_fixed_point(&p, &cfg()).unwrap();
    assert!(tri.converged);
    assert_abs_diff_eq!(tri.mean(), 0.78149, epsilon = 3e-3);
    assert!(tri.mean() >= pair.mean() - 1e-6);
}

#[test]
fn positional_at_half_load() {
    for (d, mean) in [
        (Discipline::Fcfs, 0.77233),
        (Discipline::Lps, 0.77895),
        (Discipline::Lcfs, 0.78945),
    ] {
        let p = ModelParams::new(0.5, 2, d).with_k(2).with_xmax(16);
        let s = positional_fixed_point(&p, &cfg()).unwrap();
        assert!(s.converged, "{d}");
        assert_abs_diff_eq!(s.mean(), mean, epsilon = 3e-3);
        assert_abs_diff_eq!(s.dist.prob(0), 0.5, epsilon = 1e-5);
    }
}

#[test]
fn mean_field_is_most_optimistic_for_ps() {
    for l in [0.5, 0.7] {
        let p = ModelParams::new(l, 2, Discipline::Ps).with_xmax(30);
        let mf = mf_fixed_point(&p).unwrap();
        let pair = pair_ps_fixed_point(&p, &cfg()).unwrap();
        assert!(mf.mean() < pair.mean());
    }
}

#[test]
fn unstable_load_is_rejected() {
    let p = ModelParams::new(1.0, 2, Discipline::Ps);
    let err = pair_ps_fixed_point(&p, &cfg()).unwrap_err();
    assert!(matches!(
        err,
        Error::InvalidParam {
            field: "lambda",
            ..
        }
    ));
    let p = ModelParams::new(0.5, 2, Discipline::Lps).with_k(0);
    assert!(positional_fixed_point(&p, &cfg()).is_err());
}

#[test]
fn short_horizon_reports_not_converged() {
    let p = ModelParams::new(0.9, 2, Discipline::Ps).with_xmax(30);
    let c = IntegratorConfig {
        t_max: 2.0,
        ..cfg()
    };
    let s = pair_ps_fixed_point(&p, &c).unwrap();
    assert!(!s.converged);
    assert!(s.residual > c.tol);
}
