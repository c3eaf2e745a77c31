//! Three-server exact chains and the asymptotic FCFS formula.

use redq_core::exact::{fcfs_asymptotic_mean, fcfs_n3_stationary, ps_n3_stationary, MCAP_MAX};

#[test]
fn fcfs_chain_table_values() {
    let d = fcfs_n3_stationary(0.5, 40).unwrap();
    assert!((d.mean() - 0.88889).abs() < 5e-6);
    for (x, want) in [(1, 0.275), (2, 0.12875), (3, 0.0561875)] {
        assert!((d.prob(x) - want).abs() < 1e-9, "q({x})");
    }
}

#[test]
fn fcfs_truncation_converges() {
    let a = fcfs_n3_stationary(0.5, 30).unwrap();
    let b = fcfs_n3_stationary(0.5, 60).unwrap();
    assert!((a.mean() - b.mean()).abs() < 1e-6);
    assert!(fcfs_n3_stationary(0.5, MCAP_MAX + 1).is_err());
}

#[test]
fn ps_chain_is_a_distribution() {
    let d = ps_n3_stationary(0.5, 12).unwrap();
    let total: f64 = d.q().iter().sum();
    assert!((total - 1.0).abs() < 1e-10);
    assert!((d.prob(1) - 0.27423).abs() < 5e-4);
    assert!(d.mean() > fcfs_n3_stationary(0.5, 40).unwrap().mean());
}

#[test]
fn asymptotic_formula() {
    assert!((fcfs_asymptotic_mean(0.5).unwrap() - 0.77259).abs() < 5e-5);
    assert!(fcfs_asymptotic_mean(1.0).is_err());
    assert!(fcfs_asymptotic_mean(0.0).is_err());
}
