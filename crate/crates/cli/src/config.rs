//! Run configuration, read from a TOML file. Every key is optional; missing
//! keys take the desk-scale defaults below.

use std::path::Path;

use hdrec_core::dose::B0_GRID;
use hdrec_core::{NormalTarget, ReconConfig, ReconMethod};
use hdrec_denoiser::{DenoiserConfig, TileConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub phantom: PhantomConfig,
    pub geometry: GeometryConfig,
    pub dose: DoseConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub tiles: TileSection,
    pub recon: ReconSection,
    pub sweep: SweepSection,
    pub compare: CompareSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    /// Disks in a matrix disk; with `depth > 1` a slab of a sphere pack,
    /// every slice of which is a disk pack.
    DiskPack,
    /// The same Shepp-Logan slice repeated `depth` times.
    SheppLogan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub kind: PhantomKind,
    pub size: usize,
    pub depth: usize,
    pub n_disks: usize,
    pub mu_matrix: f64,
    pub mu_disk: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            kind: PhantomKind::DiskPack,
            size: 128,
            depth: 64,
            n_disks: 40,
            mu_matrix: 0.005,
            mu_disk: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub n_angles: usize,
    pub n_det: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            n_angles: 360,
            n_det: 184,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    #[default]
    Clean,
    Noisy,
}

impl From<TargetKind> for NormalTarget {
    fn from(k: TargetKind) -> Self {
        match k {
            TargetKind::Clean => NormalTarget::Clean,
            TargetKind::Noisy => NormalTarget::Noisy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoseConfig {
    pub n_pairs: usize,
    pub b0_normal: f64,
    pub b0_low: f64,
    pub normal_target: TargetKind,
}

impl Default for DoseConfig {
    fn default() -> Self {
        DoseConfig {
            n_pairs: 4,
            b0_normal: 5000.0,
            b0_low: 100.0,
            normal_target: TargetKind::Clean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_scales: usize,
    pub base_channels: usize,
    pub residual_units_per_stage: usize,
    pub kernel: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_scales: 3,
            base_channels: 8,
            residual_units_per_stage: 1,
            kernel: 3,
        }
    }
}

impl ModelConfig {
    pub fn denoiser(&self, seed: u64) -> DenoiserConfig {
        DenoiserConfig {
            n_scales: self.n_scales,
            base_channels: self.base_channels,
            residual_units_per_stage: self.residual_units_per_stage,
            kernel: self.kernel,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub patches_per_pair: usize,
    pub epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub split_fraction: f64,
    pub feature_seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: 1e-3,
            batch_size: 16,
            patch_size: 32,
            patches_per_pair: 16,
            epochs: 100,
            alpha: 1.0,
            beta: 0.1,
            split_fraction: 0.8,
            feature_seed: 0,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            patch_size: self.patch_size,
            patches_per_pair: self.patches_per_pair,
            epochs: self.epochs,
            alpha: self.alpha,
            beta: self.beta,
            split_fraction: self.split_fraction,
            seed,
            feature_seed: self.feature_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileSection {
    pub tile: usize,
    pub stride: usize,
}

impl Default for TileSection {
    fn default() -> Self {
        TileSection { tile: 64, stride: 32 }
    }
}

impl From<&TileSection> for TileConfig {
    fn from(t: &TileSection) -> Self {
        TileConfig {
            tile: t.tile,
            stride: t.stride,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    #[default]
    FbpParzen,
    FbpRamp,
    Tv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    pub method: MethodKind,
    pub tv_iterations: usize,
    pub tv_weight: f64,
    pub tv_step: f64,
    pub sirt_sweeps_per_iter: usize,
}

impl Default for ReconSection {
    fn default() -> Self {
        let d = ReconConfig::default();
        ReconSection {
            method: MethodKind::FbpParzen,
            tv_iterations: d.tv_iterations,
            tv_weight: d.tv_weight,
            tv_step: d.tv_step,
            sirt_sweeps_per_iter: d.sirt_sweeps_per_iter,
        }
    }
}

impl ReconSection {
    pub fn recon_config(&self) -> ReconConfig {
        ReconConfig {
            method: match self.method {
                MethodKind::FbpParzen => ReconMethod::FbpParzen,
                MethodKind::FbpRamp => ReconMethod::FbpRamp,
                MethodKind::Tv => ReconMethod::Tv,
            },
            tv_iterations: self.tv_iterations,
            tv_weight: self.tv_weight,
            tv_step: self.tv_step,
            sirt_sweeps_per_iter: self.sirt_sweeps_per_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub pair_counts: Vec<usize>,
    pub b0_grid: Vec<f64>,
    /// Points evaluated concurrently.
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            pair_counts: vec![4, 32, 128, 256],
            b0_grid: B0_GRID.to_vec(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accounting {
    /// Paired views replace low-dose views: `n_pairs * b0_normal +
    /// (n_angles - n_pairs) * b0_low`.
    #[default]
    Replace,
    /// Paired views are extra exposures: `n_pairs * b0_normal + n_angles *
    /// b0_low`.
    Extra,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    /// Photon budget; defaults to the budget of the `[dose]` scheme.
    pub total_photons: Option<f64>,
    pub accounting: Accounting,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.seed = 9;
        cfg.recon.method = MethodKind::Tv;
        cfg.compare.total_photons = Some(1e5);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_sections_and_unknown_keys() {
        let cfg = RunConfig::from_toml("[dose]\nb0_low = 50.0\n[recon]\nmethod = \"fbp_ramp\"\n").unwrap();
        assert_eq!(cfg.dose.b0_low, 50.0);
        assert_eq!(cfg.dose.n_pairs, 4);
        assert_eq!(cfg.recon.recon_config().method, ReconMethod::FbpRamp);
        let err = RunConfig::from_toml("[dose]\nb0_lo = 50.0\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
