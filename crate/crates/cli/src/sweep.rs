use std::path::Path;

use hdrec_core::{
    build_hybrid_scheme, simulate_low_dose, total_photons, uniform_equivalent_b0, NormalTarget,
    Phantom, ProjectionStack, ReconConfig, TomoError,
};
use hdrec_denoiser::train::derive_seed;
use hdrec_denoiser::{denoise_stack, train, DenoiserConfig, TileConfig, TrainConfig};
use log::{info, warn};
use rayon::prelude::*;

use crate::config::{GeometryConfig, PhantomConfig, RunConfig};
use crate::curves::{emit_curves, write_failures};
use crate::error::{CliError, Result, StageExt};
use crate::stages::{self, Seeds};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub phantom: PhantomConfig,
    pub geometry: GeometryConfig,
    pub pair_counts: Vec<usize>,
    pub b0_grid: Vec<f64>,
    pub b0_normal: f64,
    pub normal_target: NormalTarget,
    pub model: crate::config::ModelConfig,
    pub train: crate::config::TrainSection,
    pub tiles: TileConfig,
    pub recon: ReconConfig,
    pub seed: u64,
    pub workers: usize,
}

impl SweepPlan {
    pub fn from_config(cfg: &RunConfig) -> Self {
        SweepPlan {
            phantom: cfg.phantom.clone(),
            geometry: cfg.geometry.clone(),
            pair_counts: cfg.sweep.pair_counts.clone(),
            b0_grid: cfg.sweep.b0_grid.clone(),
            b0_normal: cfg.dose.b0_normal,
            normal_target: cfg.dose.normal_target.into(),
            model: cfg.model.clone(),
            train: cfg.train.clone(),
            tiles: (&cfg.tiles).into(),
            recon: cfg.recon.recon_config(),
            seed: cfg.seed,
            workers: cfg.sweep.workers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pair_counts.is_empty() || self.b0_grid.is_empty() {
            return Err(CliError::Config("sweep needs at least one pair count and one b0".into()));
        }
        if self.workers == 0 {
            return Err(CliError::Config("sweep.workers must be >= 1".into()));
        }
        if let Some(b) = self.b0_grid.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(CliError::Config(format!("b0 values must be positive, got {b}")));
        }
        Ok(())
    }

    /// Hybrid jobs in (pair count, b0) order, then one uniform baseline per
    /// b0 sharing the budget of the first pair count.
    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs: Vec<Job> = self
            .pair_counts
            .iter()
            .flat_map(|&n| self.b0_grid.iter().map(move |&b0| Job::Hybrid { n_pairs: n, b0_low: b0 }))
            .collect();
        jobs.extend(self.b0_grid.iter().map(|&b0| Job::Uniform {
            partner_pairs: self.pair_counts[0],
            partner_b0: b0,
        }));
        jobs
    }

    fn partner_budget(&self, n_pairs: usize, b0_low: f64) -> hdrec_core::Result<f64> {
        let scheme = build_hybrid_scheme(self.geometry.n_angles, n_pairs, self.b0_normal, b0_low)?;
        Ok(total_photons(&scheme).total_photons)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Job {
    Hybrid { n_pairs: usize, b0_low: f64 },
    Uniform { partner_pairs: usize, partner_b0: f64 },
}

impl Job {
    fn describe(&self) -> (String, usize, f64) {
        match *self {
            Job::Hybrid { n_pairs, b0_low } => (format!("hybrid-{n_pairs}"), n_pairs, b0_low),
            Job::Uniform { partner_pairs, partner_b0 } => (format!("uniform@{partner_pairs}"), partner_pairs, partner_b0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Normal-dose pairs; 0 for uniform baselines.
    pub n_pairs: usize,
    /// Low-dose b0 of the scheme, or the uniform b0 for baselines.
    pub b0_low: f64,
    pub total_photons: f64,
    /// Denoised (hybrid) or raw (uniform) projections against the clean
    /// stack.
    pub proj_mean_ssim: f64,
    pub proj_mean_psnr: f64,
    pub recon_ssim: f64,
    pub baseline: bool,
}

impl SweepPoint {
    pub fn series(&self) -> String {
        if self.baseline {
            "uniform".into()
        } else {
            format!("hybrid-{}", self.n_pairs)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub job: String,
    pub n_pairs: usize,
    pub b0_low: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// Sorted by total photons, then series, then b0.
    pub points: Vec<SweepPoint>,
    pub failures: Vec<SweepFailure>,
}

struct Shared {
    phantom: Phantom,
    clean: ProjectionStack,
}

fn run_job(plan: &SweepPlan, shared: &Shared, index: usize, job: Job) -> Result<SweepPoint> {
    let seeds = Seeds::new(derive_seed(plan.seed, 1 + index as u64));
    let size = shared.phantom.width();
    match job {
        Job::Hybrid { n_pairs, b0_low } => {
            let scheme = build_hybrid_scheme(plan.geometry.n_angles, n_pairs, plan.b0_normal, b0_low)
                .stage("simulate")?;
            let budget = total_photons(&scheme).total_photons;
            let sim = stages::simulate_scheme(&shared.clean, scheme, plan.normal_target, seeds.simulate)
                .stage("simulate")?;
            let pairs = sim.pairs().stage("train")?;
            let denoiser: DenoiserConfig = plan.model.denoiser(seeds.model);
            let tcfg: TrainConfig = plan.train.train_config(seeds.train);
            let outcome = train(&pairs, &denoiser, &tcfg).stage("train")?;
            let denoised = denoise_stack(&outcome.weights, &sim.low_dose, &plan.tiles).stage("denoise")?;
            let proj = stages::projection_quality(&denoised, &shared.clean).stage("metrics")?;
            let recon = stages::reconstruct(&denoised, size, &plan.recon, b0_low).stage("reconstruct")?;
            let rq = stages::recon_quality(&recon, &shared.phantom).stage("metrics")?;
            Ok(SweepPoint {
                n_pairs,
                b0_low,
                total_photons: budget,
                proj_mean_ssim: proj.mean_ssim,
                proj_mean_psnr: proj.mean_psnr,
                recon_ssim: rq.mean_ssim,
                baseline: false,
            })
        }
        Job::Uniform { partner_pairs, partner_b0 } => {
            let budget = plan.partner_budget(partner_pairs, partner_b0).stage("simulate")?;
            let b0 = uniform_equivalent_b0(hdrec_core::DoseBudget { total_photons: budget }, plan.geometry.n_angles)
                .stage("simulate")?;
            let low = simulate_low_dose(&shared.clean, b0, seeds.simulate)
                .and_then(|s| s.clamp_transmission())
                .stage("simulate")?;
            let proj = stages::projection_quality(&low, &shared.clean).stage("metrics")?;
            let recon = stages::reconstruct(&low, size, &plan.recon, b0).stage("reconstruct")?;
            let rq = stages::recon_quality(&recon, &shared.phantom).stage("metrics")?;
            Ok(SweepPoint {
                n_pairs: 0,
                b0_low: b0,
                total_photons: budget,
                proj_mean_ssim: proj.mean_ssim,
                proj_mean_psnr: proj.mean_psnr,
                recon_ssim: rq.mean_ssim,
                baseline: true,
            })
        }
    }
}

/// Evaluates every point of the plan. A failing point is recorded in
/// `failures` and the sweep continues.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepOutcome> {
    plan.validate()?;
    let seeds = Seeds::new(plan.seed);
    let phantom = stages::make_phantom(&plan.phantom, seeds.phantom).stage("phantom")?;
    let clean = stages::project(&phantom, &plan.geometry).stage("project")?;
    let shared = Shared { phantom, clean };
    let jobs = plan.jobs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<SweepPoint>> = pool.install(|| {
        jobs.par_iter()
            .enumerate()
            .map(|(i, &job)| {
                let r = run_job(plan, &shared, i, job);
                let (name, _, b0) = job.describe();
                match &r {
                    Ok(p) => info!("{name} b0={b0}: proj ssim {:.4}, recon ssim {:.4}", p.proj_mean_ssim, p.recon_ssim),
                    Err(e) => warn!("{name} b0={b0} failed: {e}"),
                }
                r
            })
            .collect()
    });

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(p) => points.push(p),
            Err(e) => {
                let (name, n_pairs, b0_low) = job.describe();
                failures.push(SweepFailure {
                    job: name,
                    n_pairs,
                    b0_low,
                    message: e.to_string(),
                });
            }
        }
    }
    sort_points(&mut points);
    Ok(SweepOutcome { points, failures })
}

pub fn sort_points(points: &mut [SweepPoint]) {
    points.sort_by(|a, b| {
        a.total_photons
            .total_cmp(&b.total_photons)
            .then_with(|| a.series().cmp(&b.series()))
            .then_with(|| a.b0_low.total_cmp(&b.b0_low))
    });
}

/// Writes `sweep.csv`, `sweep.svg` and, when points failed,
/// `sweep_failures.csv`.
pub fn write_sweep(outcome: &SweepOutcome, dir: &Path) -> Result<()> {
    crate::pipeline::ensure_dir(dir)?;
    if outcome.points.is_empty() {
        write_failures(&outcome.failures, &dir.join("sweep_failures.csv"))?;
        return Err(TomoError::Parameter("every sweep point failed".into()).into());
    }
    emit_curves(&outcome.points, &dir.join("sweep.csv"))?;
    if !outcome.failures.is_empty() {
        write_failures(&outcome.failures, &dir.join("sweep_failures.csv"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(pairs: Vec<usize>, b0s: Vec<f64>) -> SweepPlan {
        let mut cfg = RunConfig::default();
        cfg.sweep.pair_counts = pairs;
        cfg.sweep.b0_grid = b0s;
        SweepPlan::from_config(&cfg)
    }

    #[test]
    fn default_grid_counts() {
        let p = plan(vec![4, 32, 128, 256], hdrec_core::dose::B0_GRID.to_vec());
        let jobs = p.jobs();
        let hybrid = jobs.iter().filter(|j| matches!(j, Job::Hybrid { .. })).count();
        assert_eq!((hybrid, jobs.len() - hybrid), (20, 5));
        assert_eq!(plan(vec![4], vec![100.0]).jobs().len(), 2);
    }

    #[test]
    fn baseline_budget_matches_partner() {
        let p = plan(vec![4], vec![100.0]);
        let b = p.partner_budget(4, 100.0).unwrap();
        assert_eq!(b, 4.0 * 5000.0 + 356.0 * 100.0);
    }

    #[test]
    fn empty_grids_rejected() {
        assert!(plan(vec![], vec![10.0]).validate().is_err());
        assert!(plan(vec![4], vec![]).validate().is_err());
        assert!(plan(vec![4], vec![-1.0]).validate().is_err());
    }

    #[test]
    fn sorting_is_total() {
        let pt = |n, b0: f64, t, baseline| SweepPoint {
            n_pairs: n,
            b0_low: b0,
            total_photons: t,
            proj_mean_ssim: 0.0,
            proj_mean_psnr: 0.0,
            recon_ssim: 0.0,
            baseline,
        };
        let mut v = vec![pt(0, 2.0, 10.0, true), pt(4, 1.0, 10.0, false), pt(4, 1.0, 5.0, false)];
        sort_points(&mut v);
        assert_eq!(v[0].total_photons, 5.0);
        assert_eq!(v[1].series(), "hybrid-4");
        assert_eq!(v[2].series(), "uniform");
    }
}
