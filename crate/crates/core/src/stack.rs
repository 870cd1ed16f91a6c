use std::f64::consts::PI;

use ndarray::{Array3, ArrayView2, Axis};

use crate::error::{Result, TomoError};

/// Transmission ceiling for persisted stacks. Poisson draws divided by the
/// blank-scan factor can exceed one; values above this are rejected on read.
pub const T_MAX: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    /// I / I0 after attenuation.
    Transmission,
    /// -ln(I / I0), the path integral of attenuation.
    LineIntegral,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Transmission => "Transmission",
            Domain::LineIntegral => "LineIntegral",
        }
    }

    pub fn parse(s: &str) -> Option<Domain> {
        match s {
            "Transmission" => Some(Domain::Transmission),
            "LineIntegral" => Some(Domain::LineIntegral),
            _ => None,
        }
    }
}

/// Angle-indexed projection data, shaped `(n_angles, n_rows, n_det)`.
///
/// Each angle holds a projection image of `n_rows` detector rows (one per
/// object slice) by `n_det` detector bins. A single-slice sinogram is the
/// `n_rows == 1` case.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionStack {
    angles: Vec<f64>,
    values: Array3<f64>,
    domain: Domain,
}

impl ProjectionStack {
    /// Validates angle ordering and that every value is finite and
    /// non-negative for transmission data. Over-unity transmission is allowed
    /// in memory; see [`ProjectionStack::check_persistable`].
    pub fn new(angles: Vec<f64>, values: Array3<f64>, domain: Domain) -> Result<Self> {
        let (n_angles, n_rows, n_det) = values.dim();
        if angles.len() != n_angles {
            return Err(TomoError::Shape(format!(
                "{} angles for {} projections",
                angles.len(),
                n_angles
            )));
        }
        if n_angles == 0 || n_rows == 0 || n_det == 0 {
            return Err(TomoError::Size(format!(
                "empty stack ({n_angles} x {n_rows} x {n_det})"
            )));
        }
        check_angles(&angles)?;
        match domain {
            Domain::Transmission => {
                if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
                    return Err(TomoError::Invariant(format!(
                        "transmission must be finite and >= 0, found {bad}"
                    )));
                }
            }
            Domain::LineIntegral => {
                if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
                    return Err(TomoError::Invariant(format!(
                        "line integrals must be finite, found {bad}"
                    )));
                }
            }
        }
        Ok(ProjectionStack {
            angles,
            values,
            domain,
        })
    }

    /// Stricter file-level invariant: transmission within `[0, T_MAX]`,
    /// line integrals non-negative. Compared at the `f32` precision of the
    /// payload, so a stack clamped to `T_MAX` still passes after a round trip.
    pub fn check_persistable(&self) -> Result<()> {
        match self.domain {
            Domain::Transmission => {
                if let Some(bad) = self.values.iter().find(|v| **v as f32 > T_MAX as f32) {
                    return Err(TomoError::Invariant(format!(
                        "transmission {bad} exceeds T_MAX = {T_MAX}"
                    )));
                }
            }
            Domain::LineIntegral => {
                if let Some(bad) = self.values.iter().find(|v| **v < 0.0) {
                    return Err(TomoError::Invariant(format!(
                        "negative line integral {bad}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn n_angles(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_rows(&self) -> usize {
        self.values.dim().1
    }

    pub fn n_det(&self) -> usize {
        self.values.dim().2
    }

    /// Projection image at one angle, `(n_rows, n_det)`.
    pub fn projection(&self, angle_index: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), angle_index)
    }

    /// Sinogram of one detector row, `(n_angles, n_det)`.
    pub fn sinogram(&self, row: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(1), row)
    }

    pub fn require(&self, domain: Domain) -> Result<()> {
        if self.domain != domain {
            return Err(TomoError::Domain {
                expected: domain,
                actual: self.domain,
            });
        }
        Ok(())
    }

    /// Same geometry, new values and domain.
    pub fn with_values(&self, values: Array3<f64>, domain: Domain) -> Result<Self> {
        if values.dim() != self.values.dim() {
            return Err(TomoError::Shape(format!(
                "expected {:?}, got {:?}",
                self.values.dim(),
                values.dim()
            )));
        }
        ProjectionStack::new(self.angles.clone(), values, domain)
    }

    /// Transmission clamped into `[0, T_MAX]` so it can be written to disk.
    pub fn clamp_transmission(&self) -> Result<Self> {
        self.require(Domain::Transmission)?;
        Ok(ProjectionStack {
            angles: self.angles.clone(),
            values: self.values.mapv(|v| v.clamp(0.0, T_MAX)),
            domain: Domain::Transmission,
        })
    }

    pub fn into_values(self) -> Array3<f64> {
        self.values
    }
}

/// Angles must be strictly increasing within `[0, pi)`.
pub fn check_angles(angles: &[f64]) -> Result<()> {
    for &a in angles {
        if !(0.0..PI).contains(&a) {
            return Err(TomoError::Invariant(format!(
                "angle {a} outside [0, pi)"
            )));
        }
    }
    if let Some(w) = angles.windows(2).find(|w| w[1] <= w[0]) {
        return Err(TomoError::Invariant(format!(
            "angles not strictly increasing: {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// `n` equally spaced angles `k * pi / n`.
pub fn uniform_angles(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 * PI / n as f64).collect()
}
