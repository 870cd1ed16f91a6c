//! Photon-limited acquisition: Poisson noise on transmission data, hybrid
//! dose schemes (a few normal-dose views among full-view low-dose views) and
//! photon-budget bookkeeping.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ParseFailure, Result, TomoError};
use crate::stack::{Domain, ProjectionStack};

/// Blank-scan factors swept in the dose study.
pub const B0_GRID: [f64; 5] = [10.0, 50.0, 100.0, 500.0, 1000.0];

/// Means below this are sampled by CDF inversion; above, by a rounded
/// normal approximation.
pub const INVERSION_LIMIT: f64 = 30.0;

/// Stream offset separating normal-dose re-noising from low-dose draws.
const NORMAL_STREAM_BASE: u64 = 1 << 32;

/// Poisson sampler over a ChaCha8 counter-mode stream identified by
/// `(seed, stream)`, so every angle can be drawn independently and
/// reproducibly.
pub struct PoissonSampler {
    rng: ChaCha8Rng,
}

impl PoissonSampler {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        PoissonSampler { rng }
    }

    pub fn sample(&mut self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        if lambda < INVERSION_LIMIT {
            let u: f64 = self.rng.gen();
            let mut k = 0u32;
            let mut p = (-lambda).exp();
            let mut cdf = p;
            while u > cdf {
                k += 1;
                p *= lambda / k as f64;
                if p == 0.0 {
                    break;
                }
                cdf += p;
            }
            k as f64
        } else {
            // Box-Muller; 1 - u keeps the logarithm finite.
            let u1 = 1.0 - self.rng.gen::<f64>();
            let u2: f64 = self.rng.gen();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            (lambda + lambda.sqrt() * z).round().max(0.0)
        }
    }
}

fn check_b0(b0: f64) -> Result<()> {
    if !(b0 > 0.0) || !b0.is_finite() {
        return Err(TomoError::Parameter(format!(
            "blank-scan factor must be positive, got {b0}"
        )));
    }
    Ok(())
}

/// Draws `Poisson(b0 * v) / b0` for every value of one projection image.
fn noisy_projection(clean: ndarray::ArrayView2<'_, f64>, b0: f64, sampler: &mut PoissonSampler) -> Array2<f64> {
    clean.mapv(|v| sampler.sample(b0 * v) / b0)
}

/// Low-dose measurement of clean transmission data at `b0` photons per
/// detector pixel. Angle `a` draws from stream `a` of `seed`. The result is
/// not clamped: over-unity values keep the noise statistics intact.
pub fn simulate_low_dose(p_n: &ProjectionStack, b0: f64, seed: u64) -> Result<ProjectionStack> {
    p_n.require(Domain::Transmission)?;
    check_b0(b0)?;
    let mut values = Array3::<f64>::zeros(p_n.values().dim());
    for (a, mut dst) in values.axis_iter_mut(Axis(0)).enumerate() {
        let mut sampler = PoissonSampler::new(seed, a as u64);
        dst.assign(&noisy_projection(p_n.projection(a), b0, &mut sampler));
    }
    p_n.with_values(values, Domain::Transmission)
}

/// Per-angle dose allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionScheme {
    b0_per_angle: Vec<f64>,
    normal_indices: Vec<usize>,
    b0_normal: f64,
    b0_low: f64,
}

impl AcquisitionScheme {
    pub fn new(
        b0_per_angle: Vec<f64>,
        normal_indices: Vec<usize>,
        b0_normal: f64,
        b0_low: f64,
    ) -> Result<Self> {
        check_b0(b0_low)?;
        check_b0(b0_normal)?;
        if b0_normal < b0_low {
            return Err(TomoError::Parameter(format!(
                "normal dose {b0_normal} below low dose {b0_low}"
            )));
        }
        let n = b0_per_angle.len();
        if n == 0 {
            return Err(TomoError::Parameter("scheme has no angles".into()));
        }
        if normal_indices.windows(2).any(|w| w[1] <= w[0])
            || normal_indices.iter().any(|&i| i >= n)
        {
            return Err(TomoError::Invariant(
                "normal indices must be sorted, unique and in range".into(),
            ));
        }
        for (a, &b0) in b0_per_angle.iter().enumerate() {
            let expected = if normal_indices.binary_search(&a).is_ok() {
                b0_normal
            } else {
                b0_low
            };
            if b0 != expected {
                return Err(TomoError::Invariant(format!(
                    "angle {a} has b0 {b0}, expected {expected}"
                )));
            }
        }
        Ok(AcquisitionScheme {
            b0_per_angle,
            normal_indices,
            b0_normal,
            b0_low,
        })
    }

    /// Every angle at the same dose.
    pub fn uniform(n_angles: usize, b0: f64) -> Result<Self> {
        AcquisitionScheme::new(vec![b0; n_angles], Vec::new(), b0, b0)
    }

    pub fn b0_per_angle(&self) -> &[f64] {
        &self.b0_per_angle
    }

    pub fn normal_indices(&self) -> &[usize] {
        &self.normal_indices
    }

    pub fn b0_normal(&self) -> f64 {
        self.b0_normal
    }

    pub fn b0_low(&self) -> f64 {
        self.b0_low
    }

    pub fn n_angles(&self) -> usize {
        self.b0_per_angle.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.normal_indices.len()
    }

    /// CSV `angle_index,b0,paired`, `paired` being 1 at normal indices.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle_index,b0,paired\n");
        for (a, b0) in self.b0_per_angle.iter().enumerate() {
            let paired = self.normal_indices.binary_search(&a).is_ok() as u8;
            out.push_str(&format!("{a},{b0},{paired}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| TomoError::io(path, e))
    }

    /// Reads `angle_index,b0,paired`, or `angle_index,b0` in which case the
    /// angles at the larger dose become the normal indices and a single-dose
    /// file reads back as a uniform scheme.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| TomoError::io(path, e))?;
        let parse_err = |message: String| TomoError::Parse {
            path: path.to_path_buf(),
            kind: ParseFailure::BadValue,
            message,
        };
        let mut lines = text.lines();
        let with_flags = match lines.next().map(str::trim) {
            Some("angle_index,b0,paired") => true,
            Some("angle_index,b0") => false,
            _ => {
                return Err(TomoError::Parse {
                    path: path.to_path_buf(),
                    kind: ParseFailure::Syntax,
                    message: "expected header 'angle_index,b0,paired' or 'angle_index,b0'".into(),
                })
            }
        };
        let mut b0s = Vec::new();
        let mut flagged = Vec::new();
        for (expected, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 + with_flags as usize {
                return Err(parse_err(format!("malformed row '{line}'")));
            }
            let idx: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad angle index '{}'", fields[0])))?;
            if idx != expected {
                return Err(parse_err(format!("row {expected} has angle index {idx}")));
            }
            let b0: f64 = fields[1]
                .parse()
                .map_err(|_| parse_err(format!("bad b0 '{}'", fields[1])))?;
            if with_flags {
                match fields[2] {
                    "1" => flagged.push(idx),
                    "0" => {}
                    other => return Err(parse_err(format!("bad paired flag '{other}'"))),
                }
            }
            b0s.push(b0);
        }
        let hi = b0s.iter().cloned().fold(f64::MIN, f64::max);
        let lo = b0s.iter().cloned().fold(f64::MAX, f64::min);
        let normal = if with_flags {
            flagged
        } else if hi > lo {
            b0s.iter()
                .enumerate()
                .filter(|(_, &b)| b == hi)
                .map(|(a, _)| a)
                .collect()
        } else {
            Vec::new()
        };
        AcquisitionScheme::new(b0s, normal, hi, lo)
    }
}

/// `n_pairs` normal-dose angles at indices `floor(k * n_angles / n_pairs)`,
/// every other angle at `b0_low`. Four pairs over 1500 views land on 0, 45,
/// 90 and 135 degrees. `n_pairs == 0` gives the all-low-dose scheme.
pub fn build_hybrid_scheme(
    n_angles: usize,
    n_pairs: usize,
    b0_normal: f64,
    b0_low: f64,
) -> Result<AcquisitionScheme> {
    if n_angles == 0 {
        return Err(TomoError::Parameter("n_angles must be positive".into()));
    }
    if n_pairs > n_angles {
        return Err(TomoError::Parameter(format!(
            "{n_pairs} pairs requested from {n_angles} angles"
        )));
    }
    let normal: Vec<usize> = (0..n_pairs).map(|k| k * n_angles / n_pairs).collect();
    let mut b0s = vec![b0_low; n_angles];
    for &i in &normal {
        b0s[i] = b0_normal;
    }
    AcquisitionScheme::new(b0s, normal, b0_normal, b0_low)
}

/// Photons per detector pixel summed over every projection of a scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoseBudget {
    pub total_photons: f64,
}

impl DoseBudget {
    /// Budget when each paired angle is exposed twice (a low-dose view that
    /// stays in the full-view stack plus an extra normal-dose view):
    /// `n_pairs * b0_normal + n_angles * b0_low`.
    pub fn with_extra_normal_exposures(
        n_angles: usize,
        n_pairs: usize,
        b0_normal: f64,
        b0_low: f64,
    ) -> DoseBudget {
        DoseBudget {
            total_photons: n_pairs as f64 * b0_normal + n_angles as f64 * b0_low,
        }
    }
}

pub fn total_photons(scheme: &AcquisitionScheme) -> DoseBudget {
    DoseBudget {
        total_photons: scheme.b0_per_angle.iter().sum(),
    }
}

/// Dose per view when `budget` is spread evenly over `n_angles` views.
pub fn uniform_equivalent_b0(budget: DoseBudget, n_angles: usize) -> Result<f64> {
    if n_angles == 0 {
        return Err(TomoError::Parameter("n_angles must be positive".into()));
    }
    Ok(budget.total_photons / n_angles as f64)
}

/// What the normal-dose member of a training pair contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalTarget {
    /// The noiseless projection.
    #[default]
    Clean,
    /// A Poisson draw at the scheme's `b0_normal`.
    Noisy,
}

/// Low-/normal-dose projections at one paired angle.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    pub angle_index: usize,
    pub low: Array2<f64>,
    pub normal: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridAcquisition {
    pub pairs: Vec<ProjectionPair>,
    /// Full-view low-dose stack; paired angles carry the same noise
    /// realization as the `low` member of their pair.
    pub low_dose: ProjectionStack,
}

/// Full-view low-dose acquisition at `b0_low` plus training pairs at the
/// scheme's normal indices. The low-dose stack is identical to
/// `simulate_low_dose(p_n, b0_low, seed)`.
pub fn simulate_hybrid_acquisition(
    p_n: &ProjectionStack,
    scheme: &AcquisitionScheme,
    seed: u64,
    target: NormalTarget,
) -> Result<HybridAcquisition> {
    p_n.require(Domain::Transmission)?;
    if scheme.n_angles() != p_n.n_angles() {
        return Err(TomoError::Parameter(format!(
            "scheme covers {} angles, stack has {}",
            scheme.n_angles(),
            p_n.n_angles()
        )));
    }
    let low_dose = simulate_low_dose(p_n, scheme.b0_low(), seed)?;
    let pairs = scheme
        .normal_indices()
        .iter()
        .map(|&a| {
            let normal = match target {
                NormalTarget::Clean => p_n.projection(a).to_owned(),
                NormalTarget::Noisy => {
                    let mut sampler = PoissonSampler::new(seed, NORMAL_STREAM_BASE + a as u64);
                    noisy_projection(p_n.projection(a), scheme.b0_normal(), &mut sampler)
                }
            };
            ProjectionPair {
                angle_index: a,
                low: low_dose.projection(a).to_owned(),
                normal,
            }
        })
        .collect();
    Ok(HybridAcquisition { pairs, low_dose })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack::uniform_angles;

    fn flat_stack(n_angles: usize, n_det: usize, v: f64) -> ProjectionStack {
        ProjectionStack::new(
            uniform_angles(n_angles),
            Array3::from_elem((n_angles, 1, n_det), v),
            Domain::Transmission,
        )
        .unwrap()
    }

    #[test]
    fn zero_transmission_stays_zero() {
        for &b0 in &B0_GRID {
            let out = simulate_low_dose(&flat_stack(3, 50, 0.0), b0, 11).unwrap();
            assert!(out.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = flat_stack(2, 4, 0.5);
        assert!(matches!(simulate_low_dose(&s, 0.0, 1), Err(TomoError::Parameter(_))));
        assert!(matches!(simulate_low_dose(&s, -5.0, 1), Err(TomoError::Parameter(_))));
        let li = s.with_values(s.values().clone(), Domain::LineIntegral).unwrap();
        assert!(matches!(simulate_low_dose(&li, 10.0, 1), Err(TomoError::Domain { .. })));
    }

    #[test]
    fn moments_at_half_transmission() {
        // Poisson moments: mean b0 v, variance b0 v; divided by b0.
        let s = flat_stack(10, 10_000, 0.5);
        let out = simulate_low_dose(&s, 100.0, 5).unwrap();
        let n = out.values().len() as f64;
        let mean = out.values().sum() / n;
        let var = out.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 0.5).abs() / 0.5 < 0.01, "mean {mean}");
        assert!((var - 0.005).abs() / 0.005 < 0.05, "var {var}");
    }

    #[test]
    fn draws_are_reproducible_and_seed_dependent() {
        let s = flat_stack(4, 64, 0.7);
        let a = simulate_low_dose(&s, 50.0, 1).unwrap();
        let b = simulate_low_dose(&s, 50.0, 1).unwrap();
        let c = simulate_low_dose(&s, 50.0, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn four_pair_angle_layout() {
        let scheme = build_hybrid_scheme(1500, 4, 5000.0, 100.0).unwrap();
        assert_eq!(scheme.normal_indices(), &[0, 375, 750, 1125]);
        let degrees: Vec<f64> = scheme
            .normal_indices()
            .iter()
            .map(|&i| uniform_angles(1500)[i].to_degrees())
            .collect();
        for (d, e) in degrees.iter().zip([0.0, 45.0, 90.0, 135.0]) {
            assert!((d - e).abs() < 1e-9);
        }
        assert_eq!(total_photons(&scheme).total_photons, 169_600.0);
    }

    #[test]
    fn degenerate_schemes() {
        let full = build_hybrid_scheme(1500, 1500, 5000.0, 5000.0).unwrap();
        assert!(full.b0_per_angle().iter().all(|&b| b == 5000.0));
        assert_eq!(full.n_pairs(), 1500);
        assert_eq!(total_photons(&full).total_photons, 7_500_000.0);

        let none = build_hybrid_scheme(360, 0, 5000.0, 100.0).unwrap();
        assert_eq!(total_photons(&none).total_photons, 360.0 * 100.0);

        let single = build_hybrid_scheme(1, 1, 250.0, 250.0).unwrap();
        assert_eq!(total_photons(&single).total_photons, 250.0);

        assert!(matches!(
            build_hybrid_scheme(10, 11, 5000.0, 100.0),
            Err(TomoError::Parameter(_))
        ));
        assert!(build_hybrid_scheme(10, 2, 50.0, 100.0).is_err());
    }

    #[test]
    fn uniform_equivalents() {
        let b = total_photons(&build_hybrid_scheme(1500, 4, 5000.0, 100.0).unwrap());
        let eq = uniform_equivalent_b0(b, 1500).unwrap();
        assert!((eq - 113.066_666_666_666_67).abs() < 1e-9);
        assert!(uniform_equivalent_b0(b, 0).is_err());
    }

    #[test]
    fn extra_exposure_budgets_reproduce_published_per_view_doses() {
        // Glass: 32 pairs at 5000 over 1500 views at 100; shale: 32 pairs at
        // 4000 over 1501 views at 200.
        let glass = DoseBudget::with_extra_normal_exposures(1500, 32, 5000.0, 100.0);
        let shale = DoseBudget::with_extra_normal_exposures(1501, 32, 4000.0, 200.0);
        assert_eq!(uniform_equivalent_b0(glass, 1500).unwrap().floor(), 206.0);
        assert_eq!(uniform_equivalent_b0(shale, 1501).unwrap().floor(), 285.0);
    }

    #[test]
    fn hybrid_pairs_share_noise_with_full_view() {
        let s = flat_stack(1500, 8, 0.6);
        let scheme = build_hybrid_scheme(1500, 4, 5000.0, 100.0).unwrap();
        let h = simulate_hybrid_acquisition(&s, &scheme, 3, NormalTarget::Clean).unwrap();
        assert_eq!(h.pairs.len(), 4);
        assert_eq!(h.low_dose.n_angles(), 1500);
        assert_eq!(h.low_dose, simulate_low_dose(&s, 100.0, 3).unwrap());
        for p in &h.pairs {
            assert_eq!(p.low, h.low_dose.projection(p.angle_index));
            assert_eq!(p.normal, s.projection(p.angle_index));
        }
        let again = simulate_hybrid_acquisition(&s, &scheme, 3, NormalTarget::Clean).unwrap();
        assert_eq!(h, again);
    }

    #[test]
    fn all_pairs_and_noisy_targets() {
        let s = flat_stack(6, 16, 0.4);
        let scheme = build_hybrid_scheme(6, 6, 1000.0, 1000.0).unwrap();
        let h = simulate_hybrid_acquisition(&s, &scheme, 8, NormalTarget::Noisy).unwrap();
        let covered: Vec<usize> = h.pairs.iter().map(|p| p.angle_index).collect();
        assert_eq!(covered, (0..6).collect::<Vec<_>>());
        // Re-noised targets use their own stream.
        assert!(h.pairs.iter().all(|p| p.normal != p.low));
        let wrong = build_hybrid_scheme(5, 1, 1000.0, 100.0).unwrap();
        assert!(simulate_hybrid_acquisition(&s, &wrong, 8, NormalTarget::Clean).is_err());
    }

    #[test]
    fn scheme_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scheme.csv");
        let scheme = build_hybrid_scheme(12, 3, 5000.0, 100.0).unwrap();
        scheme.write_csv(&path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("angle_index,b0,paired\n0,5000,1\n1,100,0\n"));
        assert_eq!(AcquisitionScheme::read_csv(&path).unwrap(), scheme);
        let uni = AcquisitionScheme::uniform(5, 154.5).unwrap();
        uni.write_csv(&path).unwrap();
        assert_eq!(AcquisitionScheme::read_csv(&path).unwrap(), uni);
        let level = build_hybrid_scheme(8, 2, 300.0, 300.0).unwrap();
        level.write_csv(&path).unwrap();
        assert_eq!(AcquisitionScheme::read_csv(&path).unwrap().normal_indices(), &[0, 4]);

        std::fs::write(&path, "angle_index,b0\n0,5000\n1,100\n2,100\n").unwrap();
        let legacy = AcquisitionScheme::read_csv(&path).unwrap();
        assert_eq!(legacy.normal_indices(), &[0]);
        std::fs::write(&path, "angle_index,b0,paired\n0,5000,2\n").unwrap();
        assert!(AcquisitionScheme::read_csv(&path).is_err());
    }
}
