use std::fs;
use std::path::Path;
use std::time::Instant;

use hdrec_core::io::{read_image, read_phantom, read_stack, write_image, write_phantom, write_stack};
use hdrec_core::{AcquisitionScheme, Phantom, ProjectionStack, QualityReport, TomoError};
use hdrec_denoiser::{denoise_stack, load_weights, save_weights, train, write_history, EpochRecord, TrainOutcome};
use log::info;
use ndarray::Array3;

use crate::config::RunConfig;
use crate::error::{Result, StageExt};
use crate::manifest::Manifest;
use crate::stages::{self, files, Seeds, Simulated};

/// Everything a pipeline run produced, as re-read from disk.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub phantom: Phantom,
    pub clean: ProjectionStack,
    pub low_dose: ProjectionStack,
    pub denoised: ProjectionStack,
    pub recon: Array3<f64>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Denoised projections against the clean stack.
    pub proj_quality: QualityReport,
    /// Raw low-dose projections against the clean stack.
    pub low_quality: QualityReport,
    pub recon_quality: QualityReport,
    pub manifest: Manifest,
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| TomoError::io(dir, e).into())
}

pub fn save_simulated(sim: &Simulated, dir: &Path) -> hdrec_core::Result<()> {
    sim.scheme.write_csv(&dir.join(files::SCHEME))?;
    write_stack(&sim.low_dose, &dir.join(files::LOW_DOSE))?;
    write_stack(&sim.normal, &dir.join(files::NORMAL))
}

pub fn load_simulated(dir: &Path) -> hdrec_core::Result<Simulated> {
    Ok(Simulated {
        scheme: AcquisitionScheme::read_csv(&dir.join(files::SCHEME))?,
        low_dose: read_stack(&dir.join(files::LOW_DOSE))?,
        normal: read_stack(&dir.join(files::NORMAL))?,
    })
}

pub fn save_training(outcome: &TrainOutcome, dir: &Path) -> hdrec_core::Result<()> {
    save_weights(&outcome.weights, &dir.join(files::MODEL))?;
    write_history(&outcome.history, &dir.join(files::HISTORY))
}

/// Phantom, projection, hybrid acquisition, training, denoising and
/// reconstruction, persisting each artifact under `out_dir`. Every stage
/// consumes the previous artifact as read back from disk, so the result is
/// identical to running the subcommands one after another.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<PipelineOutput> {
    ensure_dir(out_dir)?;
    fs::write(out_dir.join(files::CONFIG), cfg.to_toml())
        .map_err(|e| TomoError::io(out_dir.join(files::CONFIG), e))?;
    let seeds = Seeds::new(cfg.seed);
    let at = |f: &str| out_dir.join(f);
    let t0 = Instant::now();

    let phantom = stages::make_phantom(&cfg.phantom, seeds.phantom).stage("phantom")?;
    write_phantom(&phantom, &at(files::PHANTOM)).stage("phantom")?;
    let phantom = read_phantom(&at(files::PHANTOM)).stage("phantom")?;

    let clean = stages::project(&phantom, &cfg.geometry).stage("project")?;
    write_stack(&clean, &at(files::CLEAN)).stage("project")?;
    let clean = read_stack(&at(files::CLEAN)).stage("project")?;
    info!("projected {} angles in {:?}", clean.n_angles(), t0.elapsed());

    let sim = stages::simulate(&clean, &cfg.dose, seeds.simulate).stage("simulate")?;
    save_simulated(&sim, out_dir).stage("simulate")?;
    let sim = load_simulated(out_dir).stage("simulate")?;

    let pairs = sim.pairs().stage("train")?;
    let denoiser = cfg.model.denoiser(seeds.model);
    let outcome = train(&pairs, &denoiser, &cfg.train.train_config(seeds.train)).stage("train")?;
    save_training(&outcome, out_dir).stage("train")?;
    let weights = load_weights(&at(files::MODEL)).stage("train")?;
    info!("trained {} epochs in {:?}", outcome.history.len(), t0.elapsed());

    let denoised = denoise_stack(&weights, &sim.low_dose, &(&cfg.tiles).into()).stage("denoise")?;
    write_stack(&denoised, &at(files::DENOISED)).stage("denoise")?;
    let denoised = read_stack(&at(files::DENOISED)).stage("denoise")?;

    let recon = stages::reconstruct(&denoised, phantom.width(), &cfg.recon.recon_config(), cfg.dose.b0_low)
        .stage("reconstruct")?;
    write_image(&recon, &at(files::RECON)).stage("reconstruct")?;
    let recon = read_image(&at(files::RECON)).stage("reconstruct")?;
    info!("reconstructed in {:?}", t0.elapsed());

    let proj_quality = stages::projection_quality(&denoised, &clean).stage("metrics")?;
    let low_quality = stages::projection_quality(&sim.low_dose, &clean).stage("metrics")?;
    let recon_quality = stages::recon_quality(&recon, &phantom).stage("metrics")?;
    proj_quality.write_csv(&at(files::PROJ_QUALITY)).stage("metrics")?;
    recon_quality.write_csv(&at(files::RECON_QUALITY)).stage("metrics")?;

    let mut manifest = Manifest::default();
    for (artifact, file) in [
        ("phantom", files::PHANTOM),
        ("clean", files::CLEAN),
        ("scheme", files::SCHEME),
        ("low_dose", files::LOW_DOSE),
        ("model", files::MODEL),
        ("denoised", files::DENOISED),
        ("recon", files::RECON),
    ] {
        manifest.add(out_dir, artifact, file)?;
    }
    manifest.write(&at(files::MANIFEST))?;

    Ok(PipelineOutput {
        phantom,
        clean,
        low_dose: sim.low_dose,
        denoised,
        recon,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        proj_quality,
        low_quality,
        recon_quality,
        manifest,
    })
}
