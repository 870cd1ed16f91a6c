//! Uniform versus hybrid allocation of one photon budget.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hdrec_core::{
    build_hybrid_scheme, simulate_low_dose, total_photons, uniform_equivalent_b0, DoseBudget, ReconConfig, ReconMethod, TomoError,
};
use hdrec_denoiser::{denoise_stack, train};
use log::info;

use crate::config::{Accounting, RunConfig};
use crate::error::{Result, StageExt};
use crate::stages::{self, Seeds};

/// How a budget is spent under each allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoseSplit {
    pub total_photons: f64,
    pub uniform_b0: f64,
    pub hybrid_b0_low: f64,
}

/// Splits `budget` between `n_pairs` normal-dose views at `b0_normal` and
/// low-dose views, and evenly over all views.
pub fn split_budget(
    budget: DoseBudget,
    n_angles: usize,
    n_pairs: usize,
    b0_normal: f64,
    accounting: Accounting,
) -> hdrec_core::Result<DoseSplit> {
    let uniform_b0 = uniform_equivalent_b0(budget, n_angles)?;
    let remaining = budget.total_photons - n_pairs as f64 * b0_normal;
    let low_views = match accounting {
        Accounting::Replace => n_angles.saturating_sub(n_pairs),
        Accounting::Extra => n_angles,
    };
    let hybrid_b0_low = remaining / low_views as f64;
    if n_pairs > n_angles || low_views == 0 || !(hybrid_b0_low > 0.0) {
        return Err(TomoError::Parameter(format!(
            "budget {} cannot pay for {n_pairs} views at b0 {b0_normal} plus low-dose views over {n_angles} angles",
            budget.total_photons
        )));
    }
    Ok(DoseSplit {
        total_photons: budget.total_photons,
        uniform_b0,
        hybrid_b0_low,
    })
}

/// Budget of the `[dose]` scheme, or `[compare] total_photons` when set.
pub fn configured_budget(cfg: &RunConfig) -> hdrec_core::Result<DoseBudget> {
    if let Some(t) = cfg.compare.total_photons {
        return Ok(DoseBudget { total_photons: t });
    }
    let d = &cfg.dose;
    Ok(match cfg.compare.accounting {
        Accounting::Replace => {
            total_photons(&build_hybrid_scheme(cfg.geometry.n_angles, d.n_pairs, d.b0_normal, d.b0_low)?)
        }
        Accounting::Extra => {
            DoseBudget::with_extra_normal_exposures(cfg.geometry.n_angles, d.n_pairs, d.b0_normal, d.b0_low)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub split: DoseSplit,
    pub n_pairs: usize,
    /// Mean projection SSIM / PSNR against the clean stack.
    pub proj_ssim_uniform: f64,
    pub proj_psnr_uniform: f64,
    pub proj_ssim_hybrid_low: f64,
    pub proj_psnr_hybrid_low: f64,
    pub proj_ssim_hybrid_denoised: f64,
    pub proj_psnr_hybrid_denoised: f64,
    /// Mean inscribed-circle reconstruction SSIM against the phantom.
    pub recon_ssim_uniform_fbp: f64,
    pub recon_ssim_uniform_tv: f64,
    pub recon_ssim_hybrid_fbp: f64,
}

impl CompareReport {
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("total_photons", self.split.total_photons),
            ("n_pairs", self.n_pairs as f64),
            ("uniform_b0", self.split.uniform_b0),
            ("hybrid_b0_low", self.split.hybrid_b0_low),
            ("proj_ssim_uniform", self.proj_ssim_uniform),
            ("proj_psnr_uniform", self.proj_psnr_uniform),
            ("proj_ssim_hybrid_low", self.proj_ssim_hybrid_low),
            ("proj_psnr_hybrid_low", self.proj_psnr_hybrid_low),
            ("proj_ssim_hybrid_denoised", self.proj_ssim_hybrid_denoised),
            ("proj_psnr_hybrid_denoised", self.proj_psnr_hybrid_denoised),
            ("recon_ssim_uniform_fbp", self.recon_ssim_uniform_fbp),
            ("recon_ssim_uniform_tv", self.recon_ssim_uniform_tv),
            ("recon_ssim_hybrid_fbp", self.recon_ssim_hybrid_fbp),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,value\n");
        for (k, v) in self.rows() {
            writeln!(out, "{k},{v}").unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| TomoError::io(path, e).into())
    }
}

/// Reconstructs (a) the uniform acquisition with FBP, (b) the same data
/// with TV and (c) the denoised hybrid acquisition with FBP, all at the
/// budget of `cfg`. FBP uses the Parzen filter; TV uses the `[recon]`
/// TV settings.
pub fn compare_uniform_vs_hybrid(cfg: &RunConfig) -> Result<CompareReport> {
    let budget = configured_budget(cfg).stage("compare")?;
    let n_angles = cfg.geometry.n_angles;
    let split = split_budget(budget, n_angles, cfg.dose.n_pairs, cfg.dose.b0_normal, cfg.compare.accounting)
        .stage("compare")?;
    let seeds = Seeds::new(cfg.seed);
    let phantom = stages::make_phantom(&cfg.phantom, seeds.phantom).stage("phantom")?;
    let clean = stages::project(&phantom, &cfg.geometry).stage("project")?;
    let size = phantom.width();
    let fbp = ReconConfig::default();
    let tv = ReconConfig {
        method: ReconMethod::Tv,
        ..cfg.recon.recon_config()
    };

    let uniform = simulate_low_dose(&clean, split.uniform_b0, seeds.uniform)
        .and_then(|s| s.clamp_transmission())
        .stage("simulate")?;
    let scheme = build_hybrid_scheme(n_angles, cfg.dose.n_pairs, cfg.dose.b0_normal, split.hybrid_b0_low)
        .stage("simulate")?;
    let sim = stages::simulate_scheme(&clean, scheme, cfg.dose.normal_target.into(), seeds.simulate)
        .stage("simulate")?;
    let outcome = train(
        &sim.pairs().stage("train")?,
        &cfg.model.denoiser(seeds.model),
        &cfg.train.train_config(seeds.train),
    )
    .stage("train")?;
    info!("compare: trained, best epoch {}", outcome.best_epoch);
    let denoised = denoise_stack(&outcome.weights, &sim.low_dose, &(&cfg.tiles).into()).stage("denoise")?;

    let pq = |s| stages::projection_quality(s, &clean).stage("metrics");
    let (pu, pl, pd) = (pq(&uniform)?, pq(&sim.low_dose)?, pq(&denoised)?);
    let rq = |stack, recon: &ReconConfig, b0| -> Result<f64> {
        let image = stages::reconstruct(stack, size, recon, b0).stage("reconstruct")?;
        Ok(stages::recon_quality(&image, &phantom).stage("metrics")?.mean_ssim)
    };
    let recon_ssim_uniform_fbp = rq(&uniform, &fbp, split.uniform_b0)?;
    let recon_ssim_hybrid_fbp = rq(&denoised, &fbp, split.hybrid_b0_low)?;
    let recon_ssim_uniform_tv = rq(&uniform, &tv, split.uniform_b0)?;
    Ok(CompareReport {
        split,
        n_pairs: cfg.dose.n_pairs,
        proj_ssim_uniform: pu.mean_ssim,
        proj_psnr_uniform: pu.mean_psnr,
        proj_ssim_hybrid_low: pl.mean_ssim,
        proj_psnr_hybrid_low: pl.mean_psnr,
        proj_ssim_hybrid_denoised: pd.mean_ssim,
        proj_psnr_hybrid_denoised: pd.mean_psnr,
        recon_ssim_uniform_fbp,
        recon_ssim_uniform_tv,
        recon_ssim_hybrid_fbp,
    })
}
