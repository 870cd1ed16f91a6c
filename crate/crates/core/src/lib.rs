//! Building blocks for hybrid-dose tomography experiments: phantoms,
//! parallel-beam projection, photon-noise simulation, reconstruction and
//! image quality metrics.

pub mod dose;
pub mod error;
pub mod forward;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod recon;
pub mod report;
pub mod stack;

pub use dose::{
    build_hybrid_scheme, simulate_hybrid_acquisition, simulate_low_dose, total_photons,
    uniform_equivalent_b0, AcquisitionScheme, DoseBudget, HybridAcquisition, NormalTarget,
    PoissonSampler, ProjectionPair,
};
pub use error::{ParseFailure, Result, TomoError};
pub use forward::{beer_transmit, log_normalize, siddon_project, zero_count_floor, Geometry};
pub use metrics::{psnr, ssim, ssim_in_disk, stack_report};
pub use phantom::{make_disk_pack_phantom, make_shepp_logan, make_sphere_pack, Phantom};
pub use recon::{fbp_reconstruct, tv_reconstruct, FbpFilter, ReconConfig, ReconMethod};
pub use report::{QualityItem, QualityReport};
pub use stack::{Domain, ProjectionStack, T_MAX};
