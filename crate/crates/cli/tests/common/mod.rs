#![allow(dead_code)]

use hdrec_cli::config::{GeometryConfig, ModelConfig, TileSection};
use hdrec_cli::RunConfig;

/// 32x32x8 sphere-pack slab, 48 angles, a two-scale network and a few
/// epochs: every stage runs in well under a second.
pub fn small() -> RunConfig {
    let mut c = RunConfig::default();
    c.phantom.size = 32;
    c.phantom.depth = 8;
    c.phantom.n_disks = 6;
    c.geometry = GeometryConfig { n_angles: 48, n_det: 48 };
    c.model = ModelConfig { n_scales: 2, base_channels: 4, residual_units_per_stage: 1, kernel: 3 };
    c.train.patch_size = 8;
    c.train.patches_per_pair = 4;
    c.train.batch_size = 8;
    c.train.epochs = 3;
    c.tiles = TileSection { tile: 16, stride: 8 };
    c.sweep.pair_counts = vec![4];
    c.sweep.b0_grid = vec![100.0];
    c
}
