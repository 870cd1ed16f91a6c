//! Parallel-beam forward model: exact ray/pixel intersection lengths
//! (Siddon traversal) and the Beer-Lambert map between line integrals and
//! transmission.
//!
//! Conventions: pixels have unit size and the grid is centered on the
//! origin with y pointing up (row 0 at the top). The ray for angle `theta`
//! and detector bin `d` is the line `x cos(theta) + y sin(theta) = s` with
//! `s = d + 0.5 - n_det / 2`. The rotation axis runs along the slices, so
//! detector row `r` sees slice `r` only.

use std::f64::consts::SQRT_2;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Result, TomoError};
use crate::phantom::Phantom;
use crate::stack::{check_angles, uniform_angles, Domain, ProjectionStack};

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    angles: Vec<f64>,
    n_det: usize,
}

impl Geometry {
    pub fn new(angles: Vec<f64>, n_det: usize) -> Result<Self> {
        if angles.is_empty() || n_det == 0 {
            return Err(TomoError::Parameter(
                "geometry needs at least one angle and one detector bin".into(),
            ));
        }
        check_angles(&angles)?;
        Ok(Geometry { angles, n_det })
    }

    /// `n_angles` equally spaced views over `[0, pi)`.
    pub fn parallel(n_angles: usize, n_det: usize) -> Result<Self> {
        Geometry::new(uniform_angles(n_angles), n_det)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_det(&self) -> usize {
        self.n_det
    }

    /// Signed detector coordinate of bin `d`.
    #[inline]
    pub fn bin_offset(&self, d: usize) -> f64 {
        d as f64 + 0.5 - self.n_det as f64 / 2.0
    }

    /// Whether every ray through a `width`-wide square is captured.
    pub fn covers(&self, width: usize) -> bool {
        self.n_det as f64 >= width as f64 * SQRT_2
    }
}

/// Walks the ray `x cos(theta) + y sin(theta) = s` through a `height` x
/// `width` pixel grid, calling `visit(flat_index, length)` for each pixel
/// crossed, in order of travel. `flat_index` is `row * width + col`.
pub fn trace_ray(
    width: usize,
    height: usize,
    cos: f64,
    sin: f64,
    s: f64,
    mut visit: impl FnMut(usize, f64),
) {
    let half_w = width as f64 / 2.0;
    let half_h = height as f64 / 2.0;
    // Start point on the ray and unit direction.
    let (px, py) = (s * cos, s * sin);
    let (dx, dy) = (-sin, cos);
    const EPS: f64 = 1e-12;

    let mut t_min = f64::NEG_INFINITY;
    let mut t_max = f64::INFINITY;
    for (p, d, half) in [(px, dx, half_w), (py, dy, half_h)] {
        if d.abs() < EPS {
            if p < -half || p >= half {
                return;
            }
        } else {
            let t0 = (-half - p) / d;
            let t1 = (half - p) / d;
            t_min = t_min.max(t0.min(t1));
            t_max = t_max.min(t0.max(t1));
        }
    }
    if t_max <= t_min {
        return;
    }

    // Pixel containing a point just past the entry.
    let t_probe = t_min + 1e-9 * (t_max - t_min).min(1.0);
    let x0 = px + t_probe * dx + half_w;
    let y0 = py + t_probe * dy + half_h;
    let mut ix = (x0.floor() as isize).clamp(0, width as isize - 1);
    let mut iy = (y0.floor() as isize).clamp(0, height as isize - 1);

    let (step_x, mut t_next_x, dt_x) = axis_walk(dx, px + half_w, ix, EPS);
    let (step_y, mut t_next_y, dt_y) = axis_walk(dy, py + half_h, iy, EPS);

    let mut t = t_min;
    loop {
        let t_next = t_next_x.min(t_next_y).min(t_max);
        let len = t_next - t;
        if len > 0.0 {
            let row = height - 1 - iy as usize;
            visit(row * width + ix as usize, len);
        }
        if t_next >= t_max {
            break;
        }
        t = t_next;
        if t_next_x <= t_next_y {
            ix += step_x;
            t_next_x += dt_x;
        } else {
            iy += step_y;
            t_next_y += dt_y;
        }
        if ix < 0 || iy < 0 || ix >= width as isize || iy >= height as isize {
            break;
        }
    }
}

/// Step direction, parameter of the first boundary crossing, and parameter
/// spacing between crossings along one axis (grid origin at 0).
fn axis_walk(d: f64, p: f64, i: isize, eps: f64) -> (isize, f64, f64) {
    if d > eps {
        (1, ((i + 1) as f64 - p) / d, 1.0 / d)
    } else if d < -eps {
        (-1, (i as f64 - p) / d, -1.0 / d)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

/// Line integrals of one slice for one angle, in detector-bin order.
pub fn project_slice_angle(
    slice: ArrayView2<'_, f64>,
    geometry: &Geometry,
    angle: f64,
    out: &mut [f64],
) {
    let (height, width) = slice.dim();
    let (sin, cos) = angle.sin_cos();
    let flat = slice.as_slice();
    for (d, o) in out.iter_mut().enumerate() {
        let s = geometry.bin_offset(d);
        let mut acc = 0.0;
        match flat {
            Some(mu) => trace_ray(width, height, cos, sin, s, |k, len| acc += mu[k] * len),
            None => trace_ray(width, height, cos, sin, s, |k, len| {
                acc += slice[[k / width, k % width]] * len
            }),
        }
        *o = acc;
    }
}

/// Exact-intersection parallel-beam projection of every slice. The result
/// has one detector row per phantom slice.
pub fn siddon_project(phantom: &Phantom, geometry: &Geometry) -> Result<ProjectionStack> {
    if phantom.width() != phantom.height() {
        return Err(TomoError::Size(format!(
            "projection needs a square phantom, got {}x{}",
            phantom.width(),
            phantom.height()
        )));
    }
    if !geometry.covers(phantom.width()) {
        log::warn!(
            "{} detector bins do not cover the {}-pixel phantom diagonal",
            geometry.n_det(),
            phantom.width()
        );
    }
    let n_rows = phantom.depth();
    let n_det = geometry.n_det();
    let per_angle: Vec<Array2<f64>> = geometry
        .angles()
        .par_iter()
        .map(|&angle| {
            let mut img = Array2::<f64>::zeros((n_rows, n_det));
            for (z, mut row) in img.axis_iter_mut(Axis(0)).enumerate() {
                project_slice_angle(
                    phantom.slice(z),
                    geometry,
                    angle,
                    row.as_slice_mut().expect("standard layout"),
                );
            }
            img
        })
        .collect();
    let mut values = Array3::<f64>::zeros((geometry.n_angles(), n_rows, n_det));
    for (mut dst, src) in values.axis_iter_mut(Axis(0)).zip(per_angle) {
        dst.assign(&src);
    }
    ProjectionStack::new(geometry.angles().to_vec(), values, Domain::LineIntegral)
}

/// Beer-Lambert attenuation with unit blank-scan intensity: `v -> exp(-v)`.
pub fn beer_transmit(stack: &ProjectionStack) -> Result<ProjectionStack> {
    stack.require(Domain::LineIntegral)?;
    stack.with_values(stack.values().mapv(|v| (-v).exp()), Domain::Transmission)
}

/// Inverse of [`beer_transmit`] with a positive floor on the transmission:
/// `v -> -ln(max(v, floor))`. Over-unity transmission from photon noise
/// yields small negative line integrals, which are kept.
pub fn log_normalize(stack: &ProjectionStack, floor: f64) -> Result<ProjectionStack> {
    stack.require(Domain::Transmission)?;
    if !(floor > 0.0) || !floor.is_finite() {
        return Err(TomoError::Parameter(format!(
            "transmission floor must be positive, got {floor}"
        )));
    }
    stack.with_values(
        stack.values().mapv(|v| -(v.max(floor)).ln()),
        Domain::LineIntegral,
    )
}

/// Floor used before the logarithm for data acquired at `b0` photons:
/// half a photon.
pub fn zero_count_floor(b0: f64) -> f64 {
    1.0 / (2.0 * b0)
}
