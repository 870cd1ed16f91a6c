//! The pipeline stages. Subcommands run one stage on files in a run
//! directory; `run_pipeline` chains them in memory and produces the same
//! files.

use hdrec_core::recon::reconstruct as reconstruct_volume;
use hdrec_core::{
    beer_transmit, build_hybrid_scheme, log_normalize, make_disk_pack_phantom, make_shepp_logan,
    make_sphere_pack, siddon_project, simulate_hybrid_acquisition, stack_report, zero_count_floor,
    AcquisitionScheme, Domain, Geometry, Phantom, ProjectionPair, ProjectionStack, QualityReport,
    ReconConfig, TomoError,
};
use hdrec_core::metrics::volume_report;
use hdrec_denoiser::train::derive_seed;
use ndarray::{Array3, Axis};

use crate::config::{DoseConfig, GeometryConfig, PhantomConfig, PhantomKind};

pub type StageResult<T> = hdrec_core::Result<T>;

/// File names inside a run directory.
pub mod files {
    pub const PHANTOM: &str = "phantom.hdr";
    pub const CLEAN: &str = "clean.hdr";
    pub const SCHEME: &str = "scheme.csv";
    pub const LOW_DOSE: &str = "low_dose.hdr";
    pub const NORMAL: &str = "normal.hdr";
    pub const MODEL: &str = "model.hdr";
    pub const HISTORY: &str = "history.csv";
    pub const DENOISED: &str = "denoised.hdr";
    pub const RECON: &str = "recon.hdr";
    pub const PROJ_QUALITY: &str = "proj_quality.csv";
    pub const RECON_QUALITY: &str = "recon_quality.csv";
    pub const MANIFEST: &str = "manifest.csv";
    pub const CONFIG: &str = "config.toml";
}

/// Per-stage seeds derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub phantom: u64,
    pub simulate: u64,
    pub model: u64,
    pub train: u64,
    /// Uniform-dose acquisitions compared against a hybrid one.
    pub uniform: u64,
}

impl Seeds {
    pub fn new(master: u64) -> Self {
        Seeds {
            phantom: derive_seed(master, 0),
            simulate: derive_seed(master, 1),
            model: derive_seed(master, 2),
            train: derive_seed(master, 3),
            uniform: derive_seed(master, 4),
        }
    }
}

pub fn make_phantom(cfg: &PhantomConfig, seed: u64) -> StageResult<Phantom> {
    if cfg.depth == 0 {
        return Err(TomoError::Size("phantom depth must be >= 1".into()));
    }
    match cfg.kind {
        PhantomKind::DiskPack if cfg.depth == 1 => {
            make_disk_pack_phantom(cfg.size, cfg.size, cfg.n_disks, cfg.mu_matrix, cfg.mu_disk, seed)
        }
        PhantomKind::DiskPack => {
            make_sphere_pack(cfg.size, cfg.depth, cfg.n_disks, cfg.mu_matrix, cfg.mu_disk, seed)
        }
        PhantomKind::SheppLogan => {
            let slice = make_shepp_logan(cfg.size)?;
            let slice = slice.mu().index_axis(Axis(0), 0);
            let mut mu = Array3::zeros((cfg.depth, cfg.size, cfg.size));
            for mut z in mu.axis_iter_mut(Axis(0)) {
                z.assign(&slice);
            }
            Phantom::new(mu)
        }
    }
}

/// Clean transmission projections `exp(-Ax)`.
pub fn project(phantom: &Phantom, geometry: &GeometryConfig) -> StageResult<ProjectionStack> {
    let g = Geometry::parallel(geometry.n_angles, geometry.n_det)?;
    beer_transmit(&siddon_project(phantom, &g)?)
}

/// Output of the acquisition stage, clamped to `[0, T_MAX]` as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub scheme: AcquisitionScheme,
    /// Full-view low-dose stack.
    pub low_dose: ProjectionStack,
    /// Normal-dose members of the training pairs, one per paired angle.
    pub normal: ProjectionStack,
}

impl Simulated {
    pub fn pairs(&self) -> StageResult<Vec<ProjectionPair>> {
        training_pairs(&self.low_dose, &self.normal, &self.scheme)
    }
}

pub fn simulate(clean: &ProjectionStack, dose: &DoseConfig, seed: u64) -> StageResult<Simulated> {
    let scheme = build_hybrid_scheme(clean.n_angles(), dose.n_pairs, dose.b0_normal, dose.b0_low)?;
    simulate_scheme(clean, scheme, dose.normal_target.into(), seed)
}

pub fn simulate_scheme(
    clean: &ProjectionStack,
    scheme: AcquisitionScheme,
    target: hdrec_core::NormalTarget,
    seed: u64,
) -> StageResult<Simulated> {
    let acq = simulate_hybrid_acquisition(clean, &scheme, seed, target)?;
    let low_dose = acq.low_dose.clamp_transmission()?;
    let angles: Vec<f64> = scheme
        .normal_indices()
        .iter()
        .map(|&a| clean.angles()[a])
        .collect();
    let mut values = Array3::zeros((angles.len(), clean.n_rows(), clean.n_det()));
    for (mut dst, pair) in values.axis_iter_mut(Axis(0)).zip(&acq.pairs) {
        dst.assign(&pair.normal);
    }
    let normal = ProjectionStack::new(angles, values, Domain::Transmission)?.clamp_transmission()?;
    Ok(Simulated {
        scheme,
        low_dose,
        normal,
    })
}

/// Pairs the normal-dose views with the low-dose views at the scheme's
/// normal indices.
pub fn training_pairs(
    low_dose: &ProjectionStack,
    normal: &ProjectionStack,
    scheme: &AcquisitionScheme,
) -> StageResult<Vec<ProjectionPair>> {
    if scheme.n_angles() != low_dose.n_angles() || scheme.n_pairs() != normal.n_angles() {
        return Err(TomoError::Shape(format!(
            "scheme ({} angles, {} pairs) does not match low-dose ({}) and normal ({}) stacks",
            scheme.n_angles(),
            scheme.n_pairs(),
            low_dose.n_angles(),
            normal.n_angles()
        )));
    }
    Ok(scheme
        .normal_indices()
        .iter()
        .enumerate()
        .map(|(k, &a)| ProjectionPair {
            angle_index: a,
            low: low_dose.projection(a).to_owned(),
            normal: normal.projection(k).to_owned(),
        })
        .collect())
}

/// Log-normalizes a transmission stack with the zero-count floor of `b0`
/// and reconstructs `size x size` slices.
pub fn reconstruct(
    transmission: &ProjectionStack,
    size: usize,
    recon: &ReconConfig,
    b0: f64,
) -> StageResult<Array3<f64>> {
    let lines = log_normalize(transmission, zero_count_floor(b0))?;
    reconstruct_volume(&lines, size, recon)
}

/// Projection-domain report against the clean stack (data range 1).
pub fn projection_quality(stack: &ProjectionStack, clean: &ProjectionStack) -> StageResult<QualityReport> {
    stack_report(stack, clean, 1.0)
}

/// Per-slice inscribed-circle report against the phantom.
pub fn recon_quality(recon: &Array3<f64>, phantom: &Phantom) -> StageResult<QualityReport> {
    volume_report(recon, phantom.mu())
}
