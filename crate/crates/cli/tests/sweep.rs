mod common;

use hdrec_cli::curves::read_points_csv;
use hdrec_cli::sweep::{run_sweep, write_sweep, SweepPlan};

fn plan(pairs: Vec<usize>, b0s: Vec<f64>) -> SweepPlan {
    let mut cfg = common::small();
    cfg.train.epochs = 1;
    cfg.sweep.pair_counts = pairs;
    cfg.sweep.b0_grid = b0s;
    SweepPlan::from_config(&cfg)
}

fn hybrid_budget(n_angles: usize, n_pairs: usize, b0_normal: f64, b0_low: f64) -> f64 {
    n_pairs as f64 * b0_normal + (n_angles - n_pairs) as f64 * b0_low
}

#[test]
fn single_point_grid_gives_hybrid_and_baseline() {
    let p = plan(vec![4], vec![100.0]);
    let out = run_sweep(&p).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    assert_eq!(out.points.len(), 2);
    let hybrid = out.points.iter().find(|q| !q.baseline).unwrap();
    let uniform = out.points.iter().find(|q| q.baseline).unwrap();
    let budget = hybrid_budget(48, 4, 5000.0, 100.0);
    assert_eq!(hybrid.total_photons, budget);
    assert_eq!(uniform.total_photons, budget);
    assert!((uniform.b0_low - budget / 48.0).abs() < 1e-9);
    assert_eq!(uniform.n_pairs, 0);
}

#[test]
fn csv_budgets_recompute_and_are_sorted() {
    let p = plan(vec![2, 4], vec![10.0, 100.0]);
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&p).unwrap();
    write_sweep(&out, dir.path()).unwrap();
    let rows = read_points_csv(&dir.path().join("sweep.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows, out.points);
    for r in rows.iter().filter(|r| !r.baseline) {
        assert_eq!(r.total_photons, hybrid_budget(48, r.n_pairs, 5000.0, r.b0_low));
    }
    for r in rows.iter().filter(|r| r.baseline) {
        assert!((r.total_photons / 48.0 - r.b0_low).abs() < 1e-9);
        assert!(rows.iter().any(|h| !h.baseline && h.n_pairs == 2 && h.total_photons == r.total_photons));
    }
    assert!(rows.windows(2).all(|w| w[0].total_photons <= w[1].total_photons));
    assert!(dir.path().join("sweep.svg").exists());
}

#[test]
fn failing_point_is_recorded_and_sweep_continues() {
    let p = plan(vec![1, 4], vec![100.0]);
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&p).unwrap();
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].n_pairs, 1);
    assert!(out.failures[0].message.starts_with("train:"), "{}", out.failures[0].message);
    assert_eq!(out.points.len(), 2);
    write_sweep(&out, dir.path()).unwrap();
    let failures = std::fs::read_to_string(dir.path().join("sweep_failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 2);
}

#[test]
fn reruns_and_worker_counts_give_identical_csv() {
    let mut p = plan(vec![2, 4], vec![50.0]);
    let csv = |p: &SweepPlan| {
        let dir = tempfile::tempdir().unwrap();
        write_sweep(&run_sweep(p).unwrap(), dir.path()).unwrap();
        std::fs::read(dir.path().join("sweep.csv")).unwrap()
    };
    let a = csv(&p);
    assert_eq!(a, csv(&p));
    p.workers = 2;
    assert_eq!(a, csv(&p));
}
