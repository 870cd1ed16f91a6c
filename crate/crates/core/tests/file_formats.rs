use std::fs;

use hdrec_core::io::{payload_path, read_image, read_phantom, read_stack, write_image, write_phantom, write_stack};
use hdrec_core::{make_disk_pack_phantom, Domain, ParseFailure, ProjectionStack, TomoError, T_MAX};
use ndarray::Array3;
use proptest::prelude::*;

fn angles_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(0u32..100_000, 1..6).prop_map(|set| {
        set.into_iter()
            .map(|k| k as f64 * std::f64::consts::PI / 100_000.0)
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stack_round_trip_is_exact(
        angles in angles_strategy(),
        n_rows in 1usize..3,
        n_det in 1usize..9,
        transmission in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let n = angles.len() * n_rows * n_det;
        let mut state = seed;
        let values: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u = (state >> 40) as f32 / (1u32 << 24) as f32;
                (u * T_MAX as f32) as f64
            })
            .collect();
        let domain = if transmission { Domain::Transmission } else { Domain::LineIntegral };
        let stack = ProjectionStack::new(
            angles.clone(),
            Array3::from_shape_vec((angles.len(), n_rows, n_det), values).unwrap(),
            domain,
        ).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.hdr");
        write_stack(&stack, &path).unwrap();
        let back = read_stack(&path).unwrap();
        prop_assert_eq!(back.domain(), stack.domain());
        prop_assert!(back.angles().iter().zip(stack.angles()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(back.values().iter().zip(stack.values().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(back.values().dim(), stack.values().dim());
    }
}

fn small_stack(domain: Domain, v: f64) -> ProjectionStack {
    ProjectionStack::new(vec![0.0, 1.0], Array3::from_elem((2, 1, 3), v), domain).unwrap()
}

#[test]
fn payload_length_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.hdr");
    write_stack(&small_stack(Domain::LineIntegral, 0.5), &path).unwrap();
    let text = fs::read_to_string(&path).unwrap().replace("n_det=3", "n_det=4");
    fs::write(&path, text).unwrap();
    match read_stack(&path) {
        Err(TomoError::LengthMismatch { expected, actual, .. }) => {
            assert_eq!((expected, actual), (8, 6));
        }
        other => panic!("expected length mismatch, got {other:?}"),
    }
}

#[test]
fn over_range_transmission_is_rejected_on_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.hdr");
    write_stack(&small_stack(Domain::LineIntegral, 2.0), &path).unwrap();
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("domain=LineIntegral", "domain=Transmission");
    fs::write(&path, text).unwrap();
    assert!(matches!(read_stack(&path), Err(TomoError::Invariant(_))));
}

#[test]
fn header_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.hdr");
    write_stack(&small_stack(Domain::LineIntegral, 0.5), &path).unwrap();
    let good = fs::read_to_string(&path).unwrap();

    let kind_of = |text: String| {
        fs::write(&path, text).unwrap();
        match read_stack(&path) {
            Err(TomoError::Parse { kind, .. }) => kind,
            other => panic!("expected parse error, got {other:?}"),
        }
    };
    assert_eq!(kind_of(good.replace("HDREC1", "HDREC9")), ParseFailure::Magic);
    assert_eq!(kind_of(good.replace("LineIntegral", "Counts")), ParseFailure::UnknownDomain);
    assert_eq!(kind_of(good.replace("n_det=3\n", "")), ParseFailure::MissingKey);
    assert_eq!(kind_of(good.replace("n_angles=2", "n_angles=two")), ParseFailure::BadValue);
}

#[test]
fn phantom_and_image_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = make_disk_pack_phantom(32, 32, 4, 0.005, 0.02, 1).unwrap();
    let path = dir.path().join("p.hdr");
    write_phantom(&p, &path).unwrap();
    assert!(payload_path(&path).exists());
    let back = read_phantom(&path).unwrap();
    let f32_exact = p.mu().mapv(|v| v as f32 as f64);
    assert_eq!(back.mu(), &f32_exact);

    let signed = Array3::from_shape_fn((2, 4, 5), |(z, r, c)| (z as f64 - r as f64) * 0.25 + c as f64);
    let ipath = dir.path().join("i.hdr");
    write_image(&signed, &ipath).unwrap();
    assert_eq!(read_image(&ipath).unwrap(), signed);
    assert!(fs::read_to_string(&ipath).unwrap().contains("depth=2"));
}

#[test]
fn clamped_stack_survives_round_trip() {
    let values = Array3::from_shape_fn((2, 1, 4), |(a, _, d)| 0.5 + 0.3 * (a + d) as f64);
    let stack = ProjectionStack::new(vec![0.0, 1.0], values, Domain::Transmission).unwrap();
    assert!(stack.check_persistable().is_err());
    let clamped = stack.clamp_transmission().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.hdr");
    write_stack(&clamped, &path).unwrap();
    let back = read_stack(&path).unwrap();
    assert!(back.values().iter().any(|v| *v > T_MAX));
    write_stack(&back, &path).unwrap();
    assert_eq!(read_stack(&path).unwrap(), back);
}
