use hdrec_cli::curves::{emit_curves, points_svg, read_points_csv};
use hdrec_cli::sweep::SweepPoint;
use proptest::prelude::*;

fn point(n_pairs: usize, b0: f64, total: f64, ssim: f64) -> SweepPoint {
    SweepPoint {
        n_pairs,
        b0_low: b0,
        total_photons: total,
        proj_mean_ssim: ssim,
        proj_mean_psnr: 20.0,
        recon_ssim: ssim / 2.0,
        baseline: n_pairs == 0,
    }
}

#[test]
fn one_point_one_marker() {
    let svg = points_svg(&[point(4, 100.0, 55_600.0, 0.7)]);
    assert_eq!(svg.matches("<circle").count(), 1);
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn markers_per_point() {
    let pts = [
        point(0, 154.4, 55_600.0, 0.4),
        point(4, 100.0, 55_600.0, 0.7),
        point(4, 500.0, 198_000.0, 0.8),
    ];
    assert_eq!(points_svg(&pts).matches("<circle").count(), 3);
}

#[test]
fn empty_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_curves(&[], &dir.path().join("c.csv")).is_err());
}

#[test]
fn mismatched_series_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    emit_curves(&[point(4, 100.0, 1e5, 0.5)], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap().replace("hybrid-4,", "hybrid-5,");
    std::fs::write(&path, text).unwrap();
    assert!(read_points_csv(&path).is_err());
}

fn arb_point() -> impl Strategy<Value = SweepPoint> {
    (0usize..300, 1.0f64..1e4, 1e3f64..1e8, 0.0f64..1.0).prop_map(|(n, b, t, s)| point(n, b, t, s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(points in prop::collection::vec(arb_point(), 1..12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        emit_curves(&points, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        prop_assert_eq!(text.lines().count(), points.len() + 1);
        prop_assert_eq!(read_points_csv(&path).unwrap(), points.clone());
        let svg = std::fs::read_to_string(path.with_extension("svg")).unwrap();
        prop_assert_eq!(svg.matches("<circle").count(), points.len());
    }
}
