//! SSIM and PSNR.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5), `K1 = 0.01`, `K2 = 0.03`,
//! evaluated at every position where the window fits inside the image and
//! averaged. Images narrower than the window along an axis use the largest
//! odd window that fits there.

use ndarray::{Array2, Array3, ArrayView2, Axis, Zip};

use crate::error::{Result, TomoError};
use crate::report::{QualityItem, QualityReport};
use crate::stack::ProjectionStack;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 200.0;

fn check_pair(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, data_range: f64) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(TomoError::Shape(format!(
            "image shapes differ: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    if a.is_empty() {
        return Err(TomoError::Shape("empty image".into()));
    }
    if !(data_range > 0.0) || !data_range.is_finite() {
        return Err(TomoError::Parameter(format!(
            "data_range must be positive, got {data_range}"
        )));
    }
    Ok(())
}

/// Window length used along an axis of length `n`.
pub fn window_len(n: usize) -> usize {
    let w = SSIM_WINDOW.min(n);
    if w % 2 == 0 {
        w - 1
    } else {
        w
    }
}

/// Normalized Gaussian taps of odd length `len`.
pub fn gaussian_taps(len: usize) -> Vec<f64> {
    let c = (len / 2) as f64;
    let taps: Vec<f64> = (0..len)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable valid-mode filtering.
fn filter_valid(img: &Array2<f64>, wy: &[f64], wx: &[f64]) -> Array2<f64> {
    let (h, w) = img.dim();
    let (oh, ow) = (h + 1 - wy.len(), w + 1 - wx.len());
    let mut rows = Array2::<f64>::zeros((h, ow));
    for i in 0..h {
        for j in 0..ow {
            let mut acc = 0.0;
            for (k, &t) in wx.iter().enumerate() {
                acc += t * img[[i, j + k]];
            }
            rows[[i, j]] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((oh, ow));
    for i in 0..oh {
        for j in 0..ow {
            let mut acc = 0.0;
            for (k, &t) in wy.iter().enumerate() {
                acc += t * rows[[i + k, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Local SSIM at every valid window position. Entry `(i, j)` belongs to the
/// window centered on pixel `(i + wy / 2, j + wx / 2)`.
pub fn ssim_map(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, data_range: f64) -> Result<Array2<f64>> {
    check_pair(a, b, data_range)?;
    let (h, w) = a.dim();
    let wy = gaussian_taps(window_len(h));
    let wx = gaussian_taps(window_len(w));
    let a = a.to_owned();
    let b = b.to_owned();
    let mu_a = filter_valid(&a, &wy, &wx);
    let mu_b = filter_valid(&b, &wy, &wx);
    let aa = filter_valid(&(&a * &a), &wy, &wx);
    let bb = filter_valid(&(&b * &b), &wy, &wx);
    let ab = filter_valid(&(&a * &b), &wy, &wx);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let mut map = Array2::<f64>::zeros(mu_a.dim());
    Zip::from(&mut map)
        .and(&mu_a)
        .and(&mu_b)
        .and(&aa)
        .and(&bb)
        .and(&ab)
        .for_each(|m, &ma, &mb, &saa, &sbb, &sab| {
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            *m = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        });
    Ok(map)
}

/// Mean SSIM over all valid window positions.
pub fn ssim(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, data_range: f64) -> Result<f64> {
    let map = ssim_map(a, b, data_range)?;
    Ok(map.mean().expect("non-empty map"))
}

/// Mean SSIM over window positions centered inside the inscribed circle.
pub fn ssim_in_disk(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, data_range: f64) -> Result<f64> {
    let map = ssim_map(a, b, data_range)?;
    let (h, w) = a.dim();
    let (oy, ox) = (window_len(h) / 2, window_len(w) / 2);
    let radius = h.min(w) as f64 / 2.0;
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((i, j), &v) in map.indexed_iter() {
        let (x, y) = crate::phantom::pixel_center(i + oy, j + ox, h, w);
        if x * x + y * y <= radius * radius {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        return Err(TomoError::Shape("no window centered inside the disk".into()));
    }
    Ok(sum / count as f64)
}

pub fn mse(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(TomoError::Shape(format!(
            "image shapes differ: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let n = a.len() as f64;
    Ok(Zip::from(&a).and(&b).fold(0.0, |acc, &x, &y| acc + (x - y) * (x - y)) / n)
}

/// `20 log10(range) - 10 log10(mse)`, or [`PSNR_CAP_DB`] when the images
/// are identical.
pub fn psnr(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, data_range: f64) -> Result<f64> {
    check_pair(a, b, data_range)?;
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(20.0 * data_range.log10() - 10.0 * m.log10())
}

/// Per-angle SSIM/PSNR between two stacks' projection images.
pub fn stack_report(a: &ProjectionStack, b: &ProjectionStack, data_range: f64) -> Result<QualityReport> {
    if a.values().dim() != b.values().dim() {
        return Err(TomoError::Shape(format!(
            "stack shapes differ: {:?} vs {:?}",
            a.values().dim(),
            b.values().dim()
        )));
    }
    let items = (0..a.n_angles())
        .map(|k| {
            Ok(QualityItem {
                index: k,
                ssim: ssim(a.projection(k), b.projection(k), data_range)?,
                psnr: psnr(a.projection(k), b.projection(k), data_range)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QualityReport::from_items(items))
}

/// Dynamic range of a reference image, the data range used for
/// reconstructions.
pub fn reference_range(reference: &Array3<f64>) -> f64 {
    let max = reference.iter().cloned().fold(f64::MIN, f64::max);
    let min = reference.iter().cloned().fold(f64::MAX, f64::min);
    max - min
}

/// Per-slice inscribed-circle SSIM of a reconstruction against the phantom,
/// using the phantom's overall range.
pub fn volume_report(recon: &Array3<f64>, reference: &Array3<f64>) -> Result<QualityReport> {
    if recon.dim() != reference.dim() {
        return Err(TomoError::Shape(format!(
            "volume shapes differ: {:?} vs {:?}",
            recon.dim(),
            reference.dim()
        )));
    }
    let range = reference_range(reference);
    let items = recon
        .axis_iter(Axis(0))
        .zip(reference.axis_iter(Axis(0)))
        .enumerate()
        .map(|(k, (r, f))| {
            Ok(QualityItem {
                index: k,
                ssim: ssim_in_disk(r, f, range)?,
                psnr: psnr(r, f, range)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QualityReport::from_items(items))
}

/// Isotropic total variation with forward differences.
pub fn total_variation(img: ArrayView2<'_, f64>) -> f64 {
    let (h, w) = img.dim();
    let mut tv = 0.0;
    for i in 0..h {
        for j in 0..w {
            let v = img[[i, j]];
            let gx = if j + 1 < w { img[[i, j + 1]] - v } else { 0.0 };
            let gy = if i + 1 < h { img[[i + 1, j]] - v } else { 0.0 };
            tv += (gx * gx + gy * gy).sqrt();
        }
    }
    tv
}
