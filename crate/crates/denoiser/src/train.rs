use std::fs;
use std::path::Path;

use hdrec_core::{ProjectionPair, Result, TomoError};
use log::info;
use ndarray::{s, Array2, ArrayD};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::loss::{build_featnet, total_loss, total_loss_grad, FeatureNet, LossReport};
use crate::model::{backward, build_model, forward, forward_tape, DenoiserConfig, ModelWeights};
use crate::tape::Params;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub patches_per_pair: usize,
    pub epochs: usize,
    /// Weight of the l1 term.
    pub alpha: f64,
    /// Weight of the feature-space term.
    pub beta: f64,
    pub split_fraction: f64,
    pub seed: u64,
    /// Seed of the frozen feature extractor.
    pub feature_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 16,
            patch_size: 128,
            patches_per_pair: 64,
            epochs: 50,
            alpha: 1.0,
            beta: 0.1,
            split_fraction: 0.8,
            seed: 0,
            feature_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TomoError::Parameter(m));
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction must be in (0, 1), got {}", self.split_fraction));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.patch_size == 0 || self.epochs == 0 {
            return bad("batch_size, patch_size and epochs must be >= 1".into());
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad(format!("alpha and beta must be >= 0, got {} and {}", self.alpha, self.beta));
        }
        Ok(())
    }
}

/// Aligned low/normal crops from one training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pair: usize,
    pub row: usize,
    pub col: usize,
    pub low: Array2<f64>,
    pub normal: Array2<f64>,
}

/// `count_per_pair` square crops per pair at uniformly drawn offsets, the
/// same offset for both members.
pub fn extract_patches(
    pairs: &[ProjectionPair],
    patch: usize,
    count_per_pair: usize,
    seed: u64,
) -> Result<Vec<Patch>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(pairs.len() * count_per_pair);
    for (p, pair) in pairs.iter().enumerate() {
        if pair.low.dim() != pair.normal.dim() {
            return Err(TomoError::Shape(format!(
                "pair {p}: low {:?} vs normal {:?}",
                pair.low.dim(),
                pair.normal.dim()
            )));
        }
        let (h, w) = pair.low.dim();
        if h < patch || w < patch {
            return Err(TomoError::Size(format!(
                "pair {p}: projection {h}x{w} is smaller than the {patch}x{patch} patch"
            )));
        }
        for _ in 0..count_per_pair {
            let row = rng.gen_range(0..=h - patch);
            let col = rng.gen_range(0..=w - patch);
            let window = s![row..row + patch, col..col + patch];
            out.push(Patch {
                pair: p,
                row,
                col,
                low: pair.low.slice(window).to_owned(),
                normal: pair.normal.slice(window).to_owned(),
            });
        }
    }
    Ok(out)
}

/// Training pair count: `floor(fraction * n)`, leaving at least one pair
/// for validation.
pub fn split_count(n_pairs: usize, fraction: f64) -> Result<usize> {
    if n_pairs < 2 {
        return Err(TomoError::Parameter(format!(
            "training needs at least 2 pairs, got {n_pairs}"
        )));
    }
    let n = (fraction * n_pairs as f64).floor() as usize;
    Ok(n.clamp(1, n_pairs - 1))
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Params,
    v: Params,
}

impl Adam {
    pub fn new(params: &Params) -> Self {
        let zeros: Params = params
            .iter()
            .map(|(k, v)| (k.clone(), ArrayD::zeros(v.raw_dim())))
            .collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (name, p) in params.iter_mut() {
            let g = &grads[name];
            let m = self.m.get_mut(name).expect("moment");
            let v = self.v.get_mut(name).expect("moment");
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossReport,
    pub val: LossReport,
}

pub const HISTORY_HEADER: &str = "epoch,train_l1,train_perc,train_total,val_l1,val_perc,val_total";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch, r.train.l1, r.train.perceptual, r.train.total, r.val.l1, r.val.perceptual, r.val.total
        ));
    }
    out
}

pub fn write_history(history: &[EpochRecord], path: &Path) -> Result<()> {
    fs::write(path, history_csv(history)).map_err(|e| TomoError::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path).map_err(|e| TomoError::io(path, e))?;
    let err = |m: String| TomoError::Parse {
        path: path.to_path_buf(),
        kind: hdrec_core::ParseFailure::Syntax,
        message: m,
    };
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(err(format!("expected header '{HISTORY_HEADER}'")));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(err(format!("malformed row '{line}'")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number '{s}'")));
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| err(format!("bad epoch '{}'", f[0])))?,
                train: LossReport { l1: num(f[1])?, perceptual: num(f[2])?, total: num(f[3])? },
                val: LossReport { l1: num(f[4])?, perceptual: num(f[5])?, total: num(f[6])? },
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the epoch with the lowest validation loss.
    pub weights: ModelWeights,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

fn evaluate(weights: &ModelWeights, patches: &[Patch], cfg: &TrainConfig, featnet: &FeatureNet) -> Result<LossReport> {
    let reports = patches
        .iter()
        .map(|p| {
            let pred = forward(weights, p.low.view())?;
            total_loss(pred.view(), p.normal.view(), cfg.alpha, cfg.beta, featnet)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossReport::mean(&reports))
}

/// Adam on mini-batches of fresh random patches each epoch. The first
/// `split_count` pairs train, the rest validate on a fixed patch set.
pub fn train(
    pairs: &[ProjectionPair],
    denoiser: &DenoiserConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    denoiser.validate()?;
    let m = denoiser.size_multiple().max(4);
    if cfg.patch_size % m != 0 {
        return Err(TomoError::Parameter(format!(
            "patch_size {} must be a multiple of {m}",
            cfg.patch_size
        )));
    }
    let n_train = split_count(pairs.len(), cfg.split_fraction)?;
    let (train_pairs, val_pairs) = pairs.split_at(n_train);
    let featnet = build_featnet(cfg.feature_seed);
    let val_patches = extract_patches(
        val_pairs,
        cfg.patch_size,
        cfg.patches_per_pair.max(1),
        derive_seed(cfg.seed, u64::MAX),
    )?;

    let mut weights = build_model(denoiser)?;
    let mut adam = Adam::new(weights.params());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX - 1));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelWeights)> = None;

    for epoch in 0..cfg.epochs {
        let patches = extract_patches(
            train_pairs,
            cfg.patch_size,
            cfg.patches_per_pair,
            derive_seed(cfg.seed, epoch as u64),
        )?;
        let mut order: Vec<usize> = (0..patches.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut reports = Vec::with_capacity(patches.len());
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Option<Params> = None;
            for &i in chunk {
                let p = &patches[i];
                let (tape, out) = forward_tape(&weights, p.low.view())?;
                let (h, w) = p.low.dim();
                let pred = tape
                    .value(out)
                    .view()
                    .into_shape_with_order((h, w))
                    .expect("single channel");
                let (report, g_out) =
                    total_loss_grad(pred, p.normal.view(), cfg.alpha, cfg.beta, &featnet)?;
                if !report.is_finite() {
                    return Err(TomoError::NonFiniteLoss { epoch, batch });
                }
                reports.push(report);
                let (g, _) = backward(&weights, &tape, out, &g_out);
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => {
                        for (name, a) in acc.iter_mut() {
                            *a += &g[name];
                        }
                    }
                }
            }
            if let Some(mut g) = grads {
                let scale = 1.0 / chunk.len() as f64;
                for a in g.values_mut() {
                    a.mapv_inplace(|v| v * scale);
                }
                adam.update(weights.params_mut(), &g, cfg.learning_rate);
            }
        }
        let train_report = LossReport::mean(&reports);
        let val_report = evaluate(&weights, &val_patches, cfg, &featnet)?;
        if !val_report.is_finite() {
            return Err(TomoError::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        info!(
            "epoch {epoch}: train {:.6} val {:.6}",
            train_report.total, val_report.total
        );
        history.push(EpochRecord {
            epoch,
            train: train_report,
            val: val_report,
        });
        if best.as_ref().is_none_or(|(loss, _, _)| val_report.total < *loss) {
            best = Some((val_report.total, epoch, weights.clone()));
        }
    }
    let (_, best_epoch, weights) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        weights,
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(h: usize, w: usize, k: usize) -> ProjectionPair {
        ProjectionPair {
            angle_index: k,
            low: Array2::from_shape_fn((h, w), |(i, j)| (i * w + j + k) as f64),
            normal: Array2::from_shape_fn((h, w), |(i, j)| -((i * w + j + k) as f64)),
        }
    }

    #[test]
    fn split_rule() {
        assert_eq!(split_count(4, 0.8).unwrap(), 3);
        assert_eq!(split_count(2, 0.8).unwrap(), 1);
        assert_eq!(split_count(10, 0.8).unwrap(), 8);
        assert_eq!(split_count(32, 0.8).unwrap(), 25);
        assert!(split_count(1, 0.8).is_err());
    }

    #[test]
    fn patches_are_aligned() {
        let pairs = vec![pair(20, 30, 0), pair(20, 30, 1)];
        let patches = extract_patches(&pairs, 8, 5, 1).unwrap();
        assert_eq!(patches.len(), 10);
        for p in &patches {
            assert_eq!(p.low, -&p.normal);
            assert_eq!(p.low[[0, 0]], (p.row * 30 + p.col + pairs[p.pair].angle_index) as f64);
        }
        assert!(extract_patches(&pairs, 8, 0, 1).unwrap().is_empty());
        assert!(matches!(extract_patches(&pairs, 21, 1, 1), Err(TomoError::Size(_))));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = Params::new();
        p.insert("w".into(), ArrayD::from_elem(vec![3], 1.0));
        let mut g = Params::new();
        g.insert("w".into(), ArrayD::from_shape_vec(vec![3], vec![2.0, -0.5, 0.0]).unwrap());
        let mut adam = Adam::new(&p);
        adam.update(&mut p, &g, 0.1);
        let w = &p["w"];
        assert!((w[[0]] - 0.9).abs() < 1e-6);
        assert!((w[[1]] - 1.1).abs() < 1e-6);
        assert_eq!(w[[2]], 1.0);
    }

    #[test]
    fn history_round_trip() {
        let h = vec![EpochRecord {
            epoch: 0,
            train: LossReport::combine(0.5, 0.25, 1.0, 0.1),
            val: LossReport::combine(0.125, 1e-9, 1.0, 0.1),
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history(&h, &path).unwrap();
        assert_eq!(read_history(&path).unwrap(), h);
    }
}
