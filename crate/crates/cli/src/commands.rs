use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hdrec_core::io::{read_image, read_phantom, read_stack, write_image, write_phantom, write_stack};
use hdrec_core::AcquisitionScheme;
use hdrec_denoiser::{denoise_stack, load_weights, train};

use crate::compare::compare_uniform_vs_hybrid;
use crate::config::RunConfig;
use crate::error::{Result, StageExt};
use crate::pipeline::{ensure_dir, load_simulated, run_pipeline, save_simulated, save_training};
use crate::stages::{self, files, Seeds};
use crate::sweep::{run_sweep, write_sweep, SweepPlan};

#[derive(Debug, Parser)]
#[command(name = "hdrec", version, about = "Hybrid-dose tomography: simulate, denoise, reconstruct, compare")]
pub struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory that receives the artifacts.
    #[arg(long, global = true, default_value = "hdrec-out")]
    pub out_dir: PathBuf,
    /// Directory holding the stage inputs; defaults to the output directory.
    #[arg(long, global = true)]
    pub in_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the phantom.
    Phantom,
    /// Clean transmission projections of the phantom.
    Project,
    /// Hybrid acquisition: scheme, full-view low-dose stack, normal-dose views.
    Simulate,
    /// Train the denoiser on the paired views.
    Train,
    /// Denoise the full-view low-dose stack.
    Denoise,
    /// Reconstruct a transmission stack.
    Reconstruct {
        /// Stack to reconstruct, relative to the input directory.
        #[arg(long, default_value = files::DENOISED)]
        input: String,
    },
    /// Quality reports of whatever stacks and reconstructions exist.
    Metrics,
    /// Every stage in order, with a manifest of artifact hashes.
    Run,
    /// Hybrid points over pair counts and b0, plus uniform baselines.
    Sweep,
    /// Uniform versus hybrid allocation of the same photon budget.
    Compare,
}

struct Context {
    cfg: RunConfig,
    seeds: Seeds,
    out: PathBuf,
    input: PathBuf,
}

impl Context {
    fn out(&self, f: &str) -> PathBuf {
        self.out.join(f)
    }

    fn input(&self, f: &str) -> PathBuf {
        self.input.join(f)
    }
}

fn b0_floor(ctx: &Context) -> Result<f64> {
    let scheme = ctx.input(files::SCHEME);
    if scheme.exists() {
        Ok(AcquisitionScheme::read_csv(&scheme)?.b0_low())
    } else {
        Ok(ctx.cfg.dose.b0_low)
    }
}

fn report(label: &str, r: &hdrec_core::QualityReport) {
    println!(
        "{label}: mean ssim {:.4} (sd {:.4}), mean psnr {:.2} dB over {} items",
        r.mean_ssim,
        r.std_ssim,
        r.mean_psnr,
        r.per_item.len()
    );
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    ensure_dir(&cli.out_dir)?;
    let ctx = Context {
        seeds: Seeds::new(cfg.seed),
        cfg,
        input: cli.in_dir.clone().unwrap_or_else(|| cli.out_dir.clone()),
        out: cli.out_dir.clone(),
    };
    let cfg = &ctx.cfg;
    match cli.command {
        Command::Phantom => {
            let p = stages::make_phantom(&cfg.phantom, ctx.seeds.phantom).stage("phantom")?;
            write_phantom(&p, &ctx.out(files::PHANTOM)).stage("phantom")?;
        }
        Command::Project => {
            let p = read_phantom(&ctx.input(files::PHANTOM)).stage("project")?;
            let clean = stages::project(&p, &cfg.geometry).stage("project")?;
            write_stack(&clean, &ctx.out(files::CLEAN)).stage("project")?;
        }
        Command::Simulate => {
            let clean = read_stack(&ctx.input(files::CLEAN)).stage("simulate")?;
            let sim = stages::simulate(&clean, &cfg.dose, ctx.seeds.simulate).stage("simulate")?;
            save_simulated(&sim, &ctx.out).stage("simulate")?;
        }
        Command::Train => {
            let sim = load_simulated(&ctx.input).stage("train")?;
            let outcome = train(
                &sim.pairs().stage("train")?,
                &cfg.model.denoiser(ctx.seeds.model),
                &cfg.train.train_config(ctx.seeds.train),
            )
            .stage("train")?;
            save_training(&outcome, &ctx.out).stage("train")?;
            println!("best epoch {} of {}", outcome.best_epoch, outcome.history.len());
        }
        Command::Denoise => {
            let weights = load_weights(&ctx.input(files::MODEL)).stage("denoise")?;
            let low = read_stack(&ctx.input(files::LOW_DOSE)).stage("denoise")?;
            let d = denoise_stack(&weights, &low, &(&cfg.tiles).into()).stage("denoise")?;
            write_stack(&d, &ctx.out(files::DENOISED)).stage("denoise")?;
        }
        Command::Reconstruct { input } => {
            let stack = read_stack(&ctx.input(&input)).stage("reconstruct")?;
            let size = reconstruction_size(&ctx)?;
            let image = stages::reconstruct(&stack, size, &cfg.recon.recon_config(), b0_floor(&ctx)?)
                .stage("reconstruct")?;
            write_image(&image, &ctx.out(files::RECON)).stage("reconstruct")?;
        }
        Command::Metrics => metrics(&ctx)?,
        Command::Run => {
            let out = run_pipeline(cfg, &ctx.out)?;
            report("low-dose projections", &out.low_quality);
            report("denoised projections", &out.proj_quality);
            report("reconstruction", &out.recon_quality);
        }
        Command::Sweep => {
            let outcome = run_sweep(&SweepPlan::from_config(cfg))?;
            write_sweep(&outcome, &ctx.out)?;
            println!(
                "{} points, {} failures -> {}",
                outcome.points.len(),
                outcome.failures.len(),
                ctx.out("sweep.csv").display()
            );
        }
        Command::Compare => {
            let r = compare_uniform_vs_hybrid(cfg)?;
            r.write_csv(&ctx.out("compare.csv"))?;
            print!("{}", r.to_csv());
        }
    }
    Ok(())
}

/// Slice size of the phantom when one is at hand, else the configured size.
fn reconstruction_size(ctx: &Context) -> Result<usize> {
    let path = ctx.input(files::PHANTOM);
    if path.exists() {
        Ok(read_image(&path)?.dim().2)
    } else {
        Ok(ctx.cfg.phantom.size)
    }
}

fn metrics(ctx: &Context) -> Result<()> {
    let have = |f: &str| -> Option<PathBuf> { Some(ctx.input(f)).filter(|p| p.exists()) };
    let mut wrote = false;
    if let Some(clean_path) = have(files::CLEAN) {
        let clean = read_stack(&clean_path).stage("metrics")?;
        for (file, label, out) in [
            (files::LOW_DOSE, "low-dose projections", "low_quality.csv"),
            (files::DENOISED, "denoised projections", files::PROJ_QUALITY),
        ] {
            if let Some(path) = have(file) {
                let r = stages::projection_quality(&read_stack(&path).stage("metrics")?, &clean).stage("metrics")?;
                r.write_csv(&ctx.out(out)).stage("metrics")?;
                report(label, &r);
                wrote = true;
            }
        }
    }
    if let (Some(p), Some(r)) = (have(files::PHANTOM), have(files::RECON)) {
        let phantom = read_phantom(&p).stage("metrics")?;
        let q = stages::recon_quality(&read_image(&r).stage("metrics")?, &phantom).stage("metrics")?;
        q.write_csv(&ctx.out(files::RECON_QUALITY)).stage("metrics")?;
        report("reconstruction", &q);
        wrote = true;
    }
    if !wrote {
        return Err(crate::error::CliError::Config(format!(
            "nothing to evaluate in {}",
            display(&ctx.input)
        )));
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
