mod common;

use hdrec_cli::compare::compare_uniform_vs_hybrid;
use hdrec_cli::config::Accounting;

#[test]
fn report_is_deterministic_and_budget_consistent() {
    let mut cfg = common::small();
    cfg.train.epochs = 1;
    cfg.recon.tv_iterations = 5;
    let a = compare_uniform_vs_hybrid(&cfg).unwrap();
    let b = compare_uniform_vs_hybrid(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    let budget = 4.0 * 5000.0 + 44.0 * 100.0;
    assert_eq!(a.split.total_photons, budget);
    assert_eq!(a.split.hybrid_b0_low, 100.0);
    assert!((a.split.uniform_b0 - budget / 48.0).abs() < 1e-9);
    assert_eq!(a.to_csv().lines().count(), 14);
}

#[test]
fn extra_accounting_keeps_every_low_dose_view() {
    let mut cfg = common::small();
    cfg.train.epochs = 1;
    cfg.recon.tv_iterations = 2;
    cfg.compare.accounting = Accounting::Extra;
    let r = compare_uniform_vs_hybrid(&cfg).unwrap();
    let budget = 4.0 * 5000.0 + 48.0 * 100.0;
    assert_eq!(r.split.total_photons, budget);
    assert!((r.split.hybrid_b0_low - 100.0).abs() < 1e-9);
}
