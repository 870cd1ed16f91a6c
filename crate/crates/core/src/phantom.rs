//! Attenuation maps used as ground truth for the projection experiments.
//!
//! A [`Phantom`] is a stack of `depth` square-or-rectangular slices. Plain 2D
//! phantoms have `depth == 1`; the sphere pack is a genuine slab whose slices
//! become the detector rows of each projection image.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TomoError};

pub const MIN_PHANTOM_SIDE: usize = 8;
pub const MIN_SHEPP_LOGAN_SIDE: usize = 32;
pub const SHEPP_LOGAN_PEAK: f64 = 0.02;

/// Linear attenuation per pixel-length, indexed `(slice, row, column)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    mu: Array3<f64>,
}

impl Phantom {
    pub fn new(mu: Array3<f64>) -> Result<Self> {
        let (depth, height, width) = mu.dim();
        if width < MIN_PHANTOM_SIDE || height < MIN_PHANTOM_SIDE {
            return Err(TomoError::Size(format!(
                "phantom must be at least {MIN_PHANTOM_SIDE}x{MIN_PHANTOM_SIDE}, got {width}x{height}"
            )));
        }
        if depth == 0 {
            return Err(TomoError::Size("phantom needs at least one slice".into()));
        }
        if let Some(bad) = mu.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(TomoError::Invariant(format!(
                "attenuation must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Phantom { mu })
    }

    pub fn from_slice(mu: Array2<f64>) -> Result<Self> {
        Phantom::new(mu.insert_axis(Axis(0)))
    }

    pub fn width(&self) -> usize {
        self.mu.dim().2
    }

    pub fn height(&self) -> usize {
        self.mu.dim().1
    }

    pub fn depth(&self) -> usize {
        self.mu.dim().0
    }

    pub fn mu(&self) -> &Array3<f64> {
        &self.mu
    }

    pub fn slice(&self, z: usize) -> ArrayView2<'_, f64> {
        self.mu.index_axis(Axis(0), z)
    }

    pub fn into_inner(self) -> Array3<f64> {
        self.mu
    }
}

/// Centered coordinates of a pixel center, in pixel units, y pointing up.
#[inline]
pub(crate) fn pixel_center(row: usize, col: usize, height: usize, width: usize) -> (f64, f64) {
    let x = col as f64 + 0.5 - width as f64 / 2.0;
    let y = height as f64 / 2.0 - (row as f64 + 0.5);
    (x, y)
}

#[derive(Debug, Clone, Copy)]
struct Disk {
    x: f64,
    y: f64,
    r: f64,
}

/// Non-overlapping disks of attenuation `mu_disk` in a matrix disk of
/// `mu_matrix` filling the inscribed circle. Pixels are assigned by their
/// center.
pub fn make_disk_pack_phantom(
    width: usize,
    height: usize,
    n_disks: usize,
    mu_matrix: f64,
    mu_disk: f64,
    seed: u64,
) -> Result<Phantom> {
    check_mu(mu_matrix, "mu_matrix")?;
    check_mu(mu_disk, "mu_disk")?;
    if width < MIN_PHANTOM_SIDE || height < MIN_PHANTOM_SIDE {
        return Err(TomoError::Size(format!(
            "phantom must be at least {MIN_PHANTOM_SIDE}x{MIN_PHANTOM_SIDE}, got {width}x{height}"
        )));
    }
    let radius = width.min(height) as f64 / 2.0;
    let r_min = (radius / 16.0).max(1.5);
    let r_max = (radius / 6.0).max(r_min);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut disks: Vec<Disk> = Vec::with_capacity(n_disks);
    let budget = 10 * n_disks;
    let mut attempts = 0;
    while disks.len() < n_disks {
        if attempts == budget {
            return Err(TomoError::Placement {
                placed: disks.len(),
                requested: n_disks,
            });
        }
        attempts += 1;
        let r = rng.gen_range(r_min..=r_max);
        let (x, y) = sample_in_disk(&mut rng, radius - r);
        let clear = disks
            .iter()
            .all(|d| (d.x - x).hypot(d.y - y) >= d.r + r);
        if clear {
            disks.push(Disk { x, y, r });
        }
    }

    let mut mu = Array2::<f64>::zeros((height, width));
    for ((row, col), v) in mu.indexed_iter_mut() {
        let (x, y) = pixel_center(row, col, height, width);
        if x * x + y * y > radius * radius {
            continue;
        }
        *v = if disks
            .iter()
            .any(|d| (x - d.x).powi(2) + (y - d.y).powi(2) <= d.r * d.r)
        {
            mu_disk
        } else {
            mu_matrix
        };
    }
    Phantom::from_slice(mu)
}

#[derive(Debug, Clone, Copy)]
struct Sphere {
    x: f64,
    y: f64,
    z: f64,
    r: f64,
}

/// Slab of `depth` slices cut from a cylinder of matrix material (radius
/// = half the side) holding non-overlapping spheres. Each slice is a disk
/// pack; the projection of the slab at one angle is a 2D image with
/// overlapping sphere shadows.
pub fn make_sphere_pack(
    size: usize,
    depth: usize,
    n_spheres: usize,
    mu_matrix: f64,
    mu_sphere: f64,
    seed: u64,
) -> Result<Phantom> {
    check_mu(mu_matrix, "mu_matrix")?;
    check_mu(mu_sphere, "mu_sphere")?;
    if size < MIN_PHANTOM_SIDE || depth == 0 {
        return Err(TomoError::Size(format!(
            "sphere pack needs side >= {MIN_PHANTOM_SIDE} and depth >= 1, got {size}x{depth}"
        )));
    }
    let radius = size as f64 / 2.0;
    let r_min = (radius / 10.0).max(1.5);
    let r_max = (radius / 4.0).max(r_min);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spheres: Vec<Sphere> = Vec::with_capacity(n_spheres);
    let budget = 10 * n_spheres;
    let mut attempts = 0;
    while spheres.len() < n_spheres {
        if attempts == budget {
            return Err(TomoError::Placement {
                placed: spheres.len(),
                requested: n_spheres,
            });
        }
        attempts += 1;
        let r = rng.gen_range(r_min..=r_max);
        let (x, y) = sample_in_disk(&mut rng, radius - r);
        // Spheres may be cut by the slab faces.
        let z = rng.gen_range(-0.5 * r..=depth as f64 + 0.5 * r);
        let clear = spheres.iter().all(|s| {
            let d2 = (s.x - x).powi(2) + (s.y - y).powi(2) + (s.z - z).powi(2);
            d2 >= (s.r + r).powi(2)
        });
        if clear {
            spheres.push(Sphere { x, y, z, r });
        }
    }

    let mut mu = Array3::<f64>::zeros((depth, size, size));
    for ((slice, row, col), v) in mu.indexed_iter_mut() {
        let (x, y) = pixel_center(row, col, size, size);
        if x * x + y * y > radius * radius {
            continue;
        }
        let z = slice as f64 + 0.5;
        *v = if spheres.iter().any(|s| {
            (x - s.x).powi(2) + (y - s.y).powi(2) + (z - s.z).powi(2) <= s.r * s.r
        }) {
            mu_sphere
        } else {
            mu_matrix
        };
    }
    Phantom::new(mu)
}

/// Modified (high-contrast) Shepp-Logan ellipses:
/// `(intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)`
/// on the normalized square `[-1, 1]^2`.
pub const SHEPP_LOGAN_ELLIPSES: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Ten-ellipse Shepp-Logan head, square, rescaled so the brightest pixel is
/// exactly [`SHEPP_LOGAN_PEAK`].
pub fn make_shepp_logan(width: usize) -> Result<Phantom> {
    if width < MIN_SHEPP_LOGAN_SIDE {
        return Err(TomoError::Size(format!(
            "Shepp-Logan needs width >= {MIN_SHEPP_LOGAN_SIDE}, got {width}"
        )));
    }
    let n = width as f64;
    let mut raw = Array2::<f64>::zeros((width, width));
    for ((row, col), v) in raw.indexed_iter_mut() {
        let x = (2 * col + 1) as f64 / n - 1.0;
        let y = 1.0 - (2 * row + 1) as f64 / n;
        *v = shepp_logan_value(x, y);
    }
    let peak = raw.iter().cloned().fold(f64::MIN, f64::max);
    let mu = raw.mapv(|v| (v / peak).max(0.0) * SHEPP_LOGAN_PEAK);
    Phantom::from_slice(mu)
}

fn shepp_logan_value(x: f64, y: f64) -> f64 {
    let mut value = 0.0;
    for &[intensity, a, b, x0, y0, phi] in &SHEPP_LOGAN_ELLIPSES {
        // sin taken from |phi| so mirrored ellipses evaluate bit-identically.
        let angle = phi.abs().to_radians();
        let (sin, cos) = angle.sin_cos();
        let sin = if phi < 0.0 { -sin } else { sin };
        let dx = x - x0;
        let dy = y - y0;
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
            value += intensity;
        }
    }
    value
}

/// Uniform disk of the given radius centered on the slice, no matrix. Edge
/// pixels hold the covered area fraction (16x16 supersampling) so line
/// integrals track the analytic chord.
pub fn make_uniform_disk(size: usize, radius: f64, mu: f64) -> Result<Phantom> {
    check_mu(mu, "mu")?;
    const SUB: usize = 16;
    let mut img = Array2::<f64>::zeros((size, size));
    for ((row, col), v) in img.indexed_iter_mut() {
        let (x, y) = pixel_center(row, col, size, size);
        let reach = radius + std::f64::consts::FRAC_1_SQRT_2;
        if x * x + y * y > reach * reach {
            continue;
        }
        let mut inside = 0usize;
        for sy in 0..SUB {
            for sx in 0..SUB {
                let px = x - 0.5 + (sx as f64 + 0.5) / SUB as f64;
                let py = y - 0.5 + (sy as f64 + 0.5) / SUB as f64;
                if px * px + py * py <= radius * radius {
                    inside += 1;
                }
            }
        }
        *v = mu * inside as f64 / (SUB * SUB) as f64;
    }
    Phantom::from_slice(img)
}

fn sample_in_disk(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    let radius = radius.max(0.0);
    let rho = radius * rng.gen::<f64>().sqrt();
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    (rho * theta.cos(), rho * theta.sin())
}

fn check_mu(mu: f64, name: &str) -> Result<()> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(TomoError::Parameter(format!(
            "{name} must be finite and >= 0, got {mu}"
        )));
    }
    Ok(())
}
