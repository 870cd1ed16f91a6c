//! Filtered backprojection and a TV-regularized SIRT baseline.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2, Axis, Zip};
use ndarray::parallel::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Result, TomoError};
use crate::forward::{project_slice_angle, trace_ray, Geometry};
use crate::stack::{Domain, ProjectionStack};

/// Smoothing inside the TV gradient magnitude `sqrt(gx^2 + gy^2 + eps)`.
pub const TV_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbpFilter {
    /// Band-limited ramp.
    Ramp,
    /// Ramp apodized by the Parzen window.
    Parzen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconMethod {
    FbpParzen,
    FbpRamp,
    Tv,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconConfig {
    pub method: ReconMethod,
    pub tv_iterations: usize,
    pub tv_weight: f64,
    pub tv_step: f64,
    pub sirt_sweeps_per_iter: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            method: ReconMethod::FbpParzen,
            tv_iterations: 100,
            tv_weight: 1.0,
            tv_step: 1.0,
            sirt_sweeps_per_iter: 1,
        }
    }
}

impl ReconConfig {
    pub fn tv() -> Self {
        ReconConfig {
            method: ReconMethod::Tv,
            ..ReconConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tv_iterations == 0 {
            return Err(TomoError::Parameter("tv_iterations must be >= 1".into()));
        }
        if !(self.tv_weight >= 0.0) {
            return Err(TomoError::Parameter("tv_weight must be >= 0".into()));
        }
        if !(self.tv_step > 0.0) {
            return Err(TomoError::Parameter("tv_step must be > 0".into()));
        }
        if self.sirt_sweeps_per_iter == 0 {
            return Err(TomoError::Parameter(
                "sirt_sweeps_per_iter must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Parzen (de la Vallee Poussin) window at normalized frequency `f` in
/// `[0, 1]` of Nyquist.
pub fn parzen_weight(f: f64) -> f64 {
    let q = f.abs();
    if q <= 0.5 {
        1.0 - 6.0 * q * q + 6.0 * q * q * q
    } else if q <= 1.0 {
        2.0 * (1.0 - q).powi(3)
    } else {
        0.0
    }
}

/// `n` window samples at `f = i / (n - 1)`.
pub fn parzen_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(TomoError::Parameter(format!(
            "Parzen window needs at least 2 samples, got {n}"
        )));
    }
    Ok((0..n)
        .map(|i| parzen_weight(i as f64 / (n - 1) as f64))
        .collect())
}

/// Frequency response of the projection filter for an FFT of length `len`.
///
/// The ramp is the DFT of the sampled band-limited ramp kernel
/// (`1/4` at 0, `-1/(pi n)^2` at odd `n`), which equals `|f|` up to the
/// correct DC term.
pub fn filter_response(len: usize, filter: FbpFilter) -> Vec<f64> {
    let mut kernel = vec![Complex::new(0.0, 0.0); len];
    kernel[0].re = 0.25;
    for n in (1..len / 2).step_by(2) {
        let v = -1.0 / (PI * n as f64).powi(2);
        kernel[n].re = v;
        kernel[len - n].re = v;
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut kernel);
    let half = (len / 2) as f64;
    kernel
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let ramp = c.re;
            match filter {
                FbpFilter::Ramp => ramp,
                FbpFilter::Parzen => {
                    let fk = k.min(len - k) as f64 / half;
                    ramp * parzen_weight(fk)
                }
            }
        })
        .collect()
}

/// Filters each row of `sino` (angles x bins), zero padded to the next power
/// of two at least twice the detector width.
pub fn filter_sinogram(sino: ArrayView2<'_, f64>, filter: FbpFilter) -> Array2<f64> {
    let (n_angles, n_det) = sino.dim();
    let len = (2 * n_det).next_power_of_two();
    let response = filter_response(len, filter);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut out = Array2::<f64>::zeros((n_angles, n_det));
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for (src, mut dst) in sino.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(src.iter()) {
            b.re = v;
        }
        fwd.process(&mut buf);
        for (b, &h) in buf.iter_mut().zip(&response) {
            *b *= h;
        }
        inv.process(&mut buf);
        for (d, b) in dst.iter_mut().zip(&buf) {
            *d = b.re / len as f64;
        }
    }
    out
}

/// Linear-interpolation backprojection onto a `size` x `size` grid, scaled by
/// `pi / n_angles`. Views are accumulated in increasing angle order whatever
/// their order in `angles`, so relabeling the views leaves the result
/// bit-identical.
pub fn backproject(angles: &[f64], filtered: ArrayView2<'_, f64>, size: usize) -> Array2<f64> {
    let (n_angles, n_det) = filtered.dim();
    assert_eq!(angles.len(), n_angles, "one angle per filtered row");
    let mut order: Vec<usize> = (0..n_angles).collect();
    order.sort_by(|&a, &b| angles[a].total_cmp(&angles[b]));
    let trig: Vec<(f64, f64, usize)> = order
        .iter()
        .map(|&a| {
            let (s, c) = angles[a].sin_cos();
            (c, s, a)
        })
        .collect();
    let offset = n_det as f64 / 2.0 - 0.5;
    let half = size as f64 / 2.0;
    let scale = PI / n_angles as f64;

    let mut image = Array2::<f64>::zeros((size, size));
    image
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(row, mut line)| {
            let y = half - (row as f64 + 0.5);
            for (col, px) in line.iter_mut().enumerate() {
                let x = col as f64 + 0.5 - half;
                let mut acc = 0.0;
                for &(c, s, a) in &trig {
                    let u = x * c + y * s + offset;
                    let i0 = u.floor();
                    let frac = u - i0;
                    let i0 = i0 as isize;
                    let q = filtered.row(a);
                    let at = |i: isize| {
                        if i >= 0 && (i as usize) < n_det {
                            q[i as usize]
                        } else {
                            0.0
                        }
                    };
                    acc += (1.0 - frac) * at(i0) + frac * at(i0 + 1);
                }
                *px = acc * scale;
            }
        });
    image
}

/// FBP of a single sinogram given as `(angles, rows)` in any order.
pub fn fbp_slice(
    angles: &[f64],
    sino: ArrayView2<'_, f64>,
    size: usize,
    filter: FbpFilter,
) -> Array2<f64> {
    backproject(angles, filter_sinogram(sino, filter).view(), size)
}

/// Reconstructs every detector row of a line-integral stack into a
/// `size` x `size` slice. Output is `(n_rows, size, size)`.
pub fn fbp_reconstruct(
    stack: &ProjectionStack,
    size: usize,
    filter: FbpFilter,
) -> Result<Array3<f64>> {
    stack.require(Domain::LineIntegral)?;
    let mut out = Array3::<f64>::zeros((stack.n_rows(), size, size));
    for (r, mut dst) in out.axis_iter_mut(Axis(0)).enumerate() {
        dst.assign(&fbp_slice(stack.angles(), stack.sinogram(r), size, filter));
    }
    Ok(out)
}

/// Ray-driven system matrix applied on the fly, with the SIRT row and column
/// normalizers precomputed.
pub struct SirtOperator {
    size: usize,
    geometry: Geometry,
    inv_row_sums: Array2<f64>,
    inv_col_sums: Array2<f64>,
}

impl SirtOperator {
    pub fn new(geometry: Geometry, size: usize) -> Self {
        let mut op = SirtOperator {
            size,
            geometry,
            inv_row_sums: Array2::zeros((0, 0)),
            inv_col_sums: Array2::zeros((0, 0)),
        };
        let row_sums = op.forward(&Array2::from_elem((size, size), 1.0));
        let col_sums = op.adjoint(&Array2::from_elem(
            (op.geometry.n_angles(), op.geometry.n_det()),
            1.0,
        ));
        let invert = |v: f64| if v > 0.0 { 1.0 / v } else { 0.0 };
        op.inv_row_sums = row_sums.mapv(invert);
        op.inv_col_sums = col_sums.mapv(invert);
        op
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `A x`, shaped `(n_angles, n_det)`.
    pub fn forward(&self, image: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.geometry.n_angles(), self.geometry.n_det()));
        for (a, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            project_slice_angle(
                image.view(),
                &self.geometry,
                self.geometry.angles()[a],
                row.as_slice_mut().expect("standard layout"),
            );
        }
        out
    }

    /// `A^T r`, the exact adjoint of [`SirtOperator::forward`].
    pub fn adjoint(&self, residual: &Array2<f64>) -> Array2<f64> {
        let n = self.size;
        let mut flat = vec![0.0; n * n];
        for (a, &angle) in self.geometry.angles().iter().enumerate() {
            let (sin, cos) = angle.sin_cos();
            for d in 0..self.geometry.n_det() {
                let r = residual[[a, d]];
                if r == 0.0 {
                    continue;
                }
                let s = self.geometry.bin_offset(d);
                trace_ray(n, n, cos, sin, s, |k, len| flat[k] += r * len);
            }
        }
        Array2::from_shape_vec((n, n), flat).expect("square image")
    }

    /// One SIRT update `x + C A^T R (p - A x)`.
    pub fn sirt_step(&self, image: &Array2<f64>, sino: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut residual = self.forward(image);
        Zip::from(&mut residual)
            .and(&sino)
            .and(&self.inv_row_sums)
            .for_each(|r, &p, &w| *r = (p - *r) * w);
        let mut update = self.adjoint(&residual);
        Zip::from(&mut update)
            .and(image)
            .and(&self.inv_col_sums)
            .for_each(|u, &x, &c| *u = x + c * *u);
        update
    }

    /// `||A x - p||_2`.
    pub fn residual_norm(&self, image: &Array2<f64>, sino: ArrayView2<'_, f64>) -> f64 {
        let ax = self.forward(image);
        Zip::from(&ax)
            .and(&sino)
            .fold(0.0, |acc, &a, &p| acc + (a - p) * (a - p))
            .sqrt()
    }
}

/// Gradient of the smoothed isotropic total variation
/// `sum sqrt(gx^2 + gy^2 + eps)` with forward differences and a zero
/// difference across the border.
pub fn tv_gradient(image: &Array2<f64>, eps: f64) -> Array2<f64> {
    let (h, w) = image.dim();
    let mut grad = Array2::<f64>::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let v = image[[i, j]];
            let gx = if j + 1 < w { image[[i, j + 1]] - v } else { 0.0 };
            let gy = if i + 1 < h { image[[i + 1, j]] - v } else { 0.0 };
            let norm = (gx * gx + gy * gy + eps).sqrt();
            grad[[i, j]] -= (gx + gy) / norm;
            if j + 1 < w {
                grad[[i, j + 1]] += gx / norm;
            }
            if i + 1 < h {
                grad[[i + 1, j]] += gy / norm;
            }
        }
    }
    grad
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvLogEntry {
    pub iter: usize,
    pub residual: f64,
    pub tv_value: f64,
}

/// CSV `iter,residual,tv_value`.
pub fn tv_log_csv(log: &[TvLogEntry]) -> String {
    let mut out = String::from("iter,residual,tv_value\n");
    for e in log {
        out.push_str(&format!("{},{},{}\n", e.iter, e.residual, e.tv_value));
    }
    out
}

pub fn write_tv_log(log: &[TvLogEntry], path: &Path) -> Result<()> {
    fs::write(path, tv_log_csv(log)).map_err(|e| TomoError::io(path, e))
}

/// TV-regularized SIRT on one sinogram, starting from zero.
///
/// Each iteration runs `sirt_sweeps_per_iter` SIRT updates, then one descent
/// step on the smoothed TV. The TV step is
/// `tv_step * tv_weight * |d| * g / |g|`, where `d` is the change made by the
/// SIRT sweeps and `g` the TV gradient, which keeps the regularization in
/// proportion to the data update whatever the attenuation scale. The image is
/// then clipped to be non-negative.
pub fn tv_reconstruct_slice(
    op: &SirtOperator,
    sino: ArrayView2<'_, f64>,
    config: &ReconConfig,
) -> Result<(Array2<f64>, Vec<TvLogEntry>)> {
    config.validate()?;
    let n = op.size();
    let mut x = Array2::<f64>::zeros((n, n));
    let mut log = Vec::with_capacity(config.tv_iterations);
    let mut growth_streak = 0;
    for iter in 0..config.tv_iterations {
        let before = x.clone();
        for _ in 0..config.sirt_sweeps_per_iter {
            x = op.sirt_step(&x, sino);
        }
        if config.tv_weight > 0.0 {
            let data_step = (&x - &before).mapv(|v| v * v).sum().sqrt();
            let grad = tv_gradient(&x, TV_EPSILON);
            let gnorm = grad.mapv(|v| v * v).sum().sqrt();
            if gnorm > 0.0 {
                let scale = config.tv_step * config.tv_weight * data_step / gnorm;
                x.zip_mut_with(&grad, |v, &g| *v -= scale * g);
            }
        }
        x.mapv_inplace(|v| v.max(0.0));

        let residual = op.residual_norm(&x, sino);
        if let Some(prev) = log.last().map(|e: &TvLogEntry| e.residual) {
            if residual > prev {
                growth_streak += 1;
            } else {
                growth_streak = 0;
            }
        }
        log.push(TvLogEntry {
            iter,
            residual,
            tv_value: crate::metrics::total_variation(x.view()),
        });
        if growth_streak >= 3 {
            return Err(TomoError::Divergence { iteration: iter });
        }
    }
    Ok((x, log))
}

/// Output of [`tv_reconstruct`]: `(n_rows, size, size)` and one residual log
/// per detector row.
#[derive(Debug, Clone)]
pub struct TvReconstruction {
    pub image: Array3<f64>,
    pub logs: Vec<Vec<TvLogEntry>>,
}

pub fn tv_reconstruct(
    stack: &ProjectionStack,
    size: usize,
    config: &ReconConfig,
) -> Result<TvReconstruction> {
    stack.require(Domain::LineIntegral)?;
    if config.method != ReconMethod::Tv {
        return Err(TomoError::Parameter(format!(
            "tv_reconstruct called with method {:?}",
            config.method
        )));
    }
    config.validate()?;
    let geometry = Geometry::new(stack.angles().to_vec(), stack.n_det())?;
    let op = SirtOperator::new(geometry, size);
    let mut image = Array3::<f64>::zeros((stack.n_rows(), size, size));
    let mut logs = Vec::with_capacity(stack.n_rows());
    for (r, mut dst) in image.axis_iter_mut(Axis(0)).enumerate() {
        let (slice, log) = tv_reconstruct_slice(&op, stack.sinogram(r), config)?;
        dst.assign(&slice);
        logs.push(log);
    }
    Ok(TvReconstruction { image, logs })
}

/// Dispatches on `config.method`.
pub fn reconstruct(stack: &ProjectionStack, size: usize, config: &ReconConfig) -> Result<Array3<f64>> {
    match config.method {
        ReconMethod::FbpParzen => fbp_reconstruct(stack, size, FbpFilter::Parzen),
        ReconMethod::FbpRamp => fbp_reconstruct(stack, size, FbpFilter::Ramp),
        ReconMethod::Tv => Ok(tv_reconstruct(stack, size, config)?.image),
    }
}
