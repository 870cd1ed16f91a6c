use hdrec_core::{Result, TomoError};
use ndarray::{Array2, Array3, ArrayD, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tape::{Params, Tape, Var};

/// Output channels of the four feature layers.
pub const FEATURE_CHANNELS: [usize; 4] = [16, 32, 64, 64];

/// Frozen random convolutional feature extractor: four 3x3 convolutions with
/// tanh, 2x2 average pooling after the second and fourth. Maps an
/// `H x W` image to `64 x H/4 x W/4` features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNet {
    params: Params,
}

pub fn build_featnet(seed: u64) -> FeatureNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::new();
    let mut c_in = 1;
    for (i, &c) in FEATURE_CHANNELS.iter().enumerate() {
        let fan_in = (c_in * 9) as f64;
        let bound = (3.0 / fan_in).sqrt();
        let w = ArrayD::from_shape_simple_fn(vec![c, c_in, 3, 3], || rng.gen_range(-bound..bound));
        params.insert(format!("feat{i}.weight"), w);
        params.insert(format!("feat{i}.bias"), ArrayD::zeros(vec![c]));
        c_in = c;
    }
    FeatureNet { params }
}

impl FeatureNet {
    pub fn params(&self) -> &Params {
        &self.params
    }

    fn tape(&self, image: ArrayView2<'_, f64>) -> Result<(Tape, Var)> {
        let (h, w) = image.dim();
        if h < 4 || w < 4 || h % 4 != 0 || w % 4 != 0 {
            return Err(TomoError::Shape(format!(
                "feature extractor needs sides divisible by 4, got {h}x{w}"
            )));
        }
        let input = image.to_owned().into_shape_with_order((1, h, w)).expect("single channel");
        let (mut tape, mut x) = Tape::new(input);
        for i in 0..FEATURE_CHANNELS.len() {
            x = tape.conv(&self.params, x, &format!("feat{i}"), 1, 1);
            x = tape.tanh(x);
            if i == 1 || i == 3 {
                x = tape.pool(x);
            }
        }
        Ok((tape, x))
    }

    pub fn features(&self, image: ArrayView2<'_, f64>) -> Result<Array3<f64>> {
        let (tape, out) = self.tape(image)?;
        Ok(tape.into_value(out))
    }
}

fn check_same(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(TomoError::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(TomoError::Shape("empty image".into()));
    }
    Ok(())
}

/// Mean absolute difference.
pub fn l1_loss(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    check_same(pred, target)?;
    let n = pred.len() as f64;
    Ok(ndarray::Zip::from(&pred)
        .and(&target)
        .fold(0.0, |acc, &p, &t| acc + (t - p).abs())
        / n)
}

/// Subgradient of [`l1_loss`] with respect to `pred` (zero at ties).
pub fn l1_grad(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_same(pred, target)?;
    let n = pred.len() as f64;
    let mut g = Array2::<f64>::zeros(pred.dim());
    ndarray::Zip::from(&mut g)
        .and(&pred)
        .and(&target)
        .for_each(|g, &p, &t| {
            *g = if p > t {
                1.0 / n
            } else if p < t {
                -1.0 / n
            } else {
                0.0
            }
        });
    Ok(g)
}

/// Mean squared feature difference `|F(pred) - F(target)|^2 / (C H W)`
/// over the feature map.
pub fn perceptual_loss(
    pred: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    featnet: &FeatureNet,
) -> Result<f64> {
    check_same(pred, target)?;
    let fp = featnet.features(pred)?;
    let ft = featnet.features(target)?;
    Ok((&fp - &ft).mapv(|d| d * d).sum() / fp.len() as f64)
}

/// [`perceptual_loss`] and its gradient with respect to `pred`.
pub fn perceptual_grad(
    pred: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    featnet: &FeatureNet,
) -> Result<(f64, Array2<f64>)> {
    check_same(pred, target)?;
    let (tape, out) = featnet.tape(pred)?;
    let ft = featnet.features(target)?;
    let diff = tape.value(out) - &ft;
    let n = diff.len() as f64;
    let value = diff.mapv(|d| d * d).sum() / n;
    let (_, dx) = tape.backward(&featnet.params, out, diff * (2.0 / n), false);
    Ok((value, dx.into_shape_with_order(pred.dim()).expect("single channel")))
}

/// Loss terms of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub l1: f64,
    pub perceptual: f64,
    pub total: f64,
}

impl LossReport {
    pub fn combine(l1: f64, perceptual: f64, alpha: f64, beta: f64) -> Self {
        LossReport {
            l1,
            perceptual,
            total: alpha * l1 + beta * perceptual,
        }
    }

    /// Component-wise mean of a set of reports.
    pub fn mean(reports: &[LossReport]) -> Self {
        let n = reports.len().max(1) as f64;
        LossReport {
            l1: reports.iter().map(|r| r.l1).sum::<f64>() / n,
            perceptual: reports.iter().map(|r| r.perceptual).sum::<f64>() / n,
            total: reports.iter().map(|r| r.total).sum::<f64>() / n,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l1.is_finite() && self.perceptual.is_finite() && self.total.is_finite()
    }
}

fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(TomoError::Parameter(format!(
            "loss weights must be >= 0, got alpha={alpha} beta={beta}"
        )));
    }
    Ok(())
}

/// `alpha * l1 + beta * perceptual`.
pub fn total_loss(
    pred: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    alpha: f64,
    beta: f64,
    featnet: &FeatureNet,
) -> Result<LossReport> {
    check_weights(alpha, beta)?;
    Ok(LossReport::combine(
        l1_loss(pred, target)?,
        perceptual_loss(pred, target, featnet)?,
        alpha,
        beta,
    ))
}

/// [`total_loss`] with its gradient with respect to `pred`.
pub fn total_loss_grad(
    pred: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    alpha: f64,
    beta: f64,
    featnet: &FeatureNet,
) -> Result<(LossReport, Array2<f64>)> {
    check_weights(alpha, beta)?;
    let l1 = l1_loss(pred, target)?;
    let (perc, g_perc) = perceptual_grad(pred, target, featnet)?;
    let grad = l1_grad(pred, target)? * alpha + g_perc * beta;
    Ok((LossReport::combine(l1, perc, alpha, beta), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(i, j)| (i * n + j) as f64 / (n * n) as f64)
    }

    #[test]
    fn l1_examples() {
        let a = ramp(8);
        assert_eq!(l1_loss(a.view(), a.view()).unwrap(), 0.0);
        let b = &a + 0.25;
        assert!((l1_loss(a.view(), b.view()).unwrap() - 0.25).abs() < 1e-15);
        assert!(l1_loss(a.view(), ramp(4).view()).is_err());
    }

    #[test]
    fn featnet_shapes_and_determinism() {
        let f = build_featnet(3);
        assert_eq!(f, build_featnet(3));
        let feats = f.features(ramp(16).view()).unwrap();
        assert_eq!(feats.dim(), (64, 4, 4));
        assert!(f.features(ramp(18).view()).is_err());
    }

    #[test]
    fn perceptual_examples() {
        let f = build_featnet(1);
        let a = ramp(16);
        assert_eq!(perceptual_loss(a.view(), a.view(), &f).unwrap(), 0.0);
        let half = &a * 0.5;
        assert!(perceptual_loss(a.view(), half.view(), &f).unwrap() > 0.0);
        let ab = perceptual_loss(a.view(), half.view(), &f).unwrap();
        let ba = perceptual_loss(half.view(), a.view(), &f).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn total_combines_parts() {
        let f = build_featnet(1);
        let a = ramp(16);
        let b = a.mapv(|v| (v * 7.0).sin());
        let r = total_loss(a.view(), b.view(), 1.0, 0.0, &f).unwrap();
        assert_eq!(r.total, r.l1);
        let z = total_loss(a.view(), b.view(), 0.0, 0.0, &f).unwrap();
        assert_eq!(z.total, 0.0);
        assert!(total_loss(a.view(), b.view(), -1.0, 0.0, &f).is_err());
    }
}
