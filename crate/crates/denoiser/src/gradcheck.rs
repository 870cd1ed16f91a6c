//! Central finite-difference checks of the analytic gradients.

use hdrec_core::Result;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::loss::{perceptual_grad, perceptual_loss, total_loss, total_loss_grad, FeatureNet};
use crate::model::{backward, forward, forward_tape, parameter_shapes, DenoiserConfig, ModelWeights};
use crate::tape::Params;

/// Weights for gradient checks: He-uniform on every layer and uniform
/// `[-0.1, 0.1]` biases. The training init keeps residual branches and the
/// head nearly silent, which pushes upstream gradients down to where central
/// differences are dominated by roundoff.
pub fn probe_model(cfg: &DenoiserConfig) -> Result<ModelWeights> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = Params::new();
    for (name, shape) in parameter_shapes(cfg) {
        let bound = if shape.len() == 1 {
            0.1
        } else {
            let fan_in = if name.starts_with("up") { shape[0] } else { shape[1..].iter().product() };
            (6.0 / fan_in as f64).sqrt()
        };
        let values = ndarray::ArrayD::from_shape_simple_fn(shape, || rng.gen_range(-bound..bound));
        params.insert(name, values);
    }
    ModelWeights::from_params(*cfg, params)
}

/// Worst relative disagreement over one gradient array.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every entry.
pub fn central_differences(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|, floor)` where `floor` is `1e-3` of the
/// array's largest analytic magnitude (and at least `1e-12`), so entries that
/// are numerically zero next to the rest of the array do not dominate.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Checks every parameter array and the input gradient of
/// `alpha * l1 + beta * perceptual` evaluated on the network output.
pub fn check_model(
    weights: &ModelWeights,
    input: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    alpha: f64,
    beta: f64,
    featnet: &FeatureNet,
    h: f64,
) -> Result<Vec<GradCheck>> {
    let loss_of = |w: &ModelWeights, x: ArrayView2<'_, f64>| -> f64 {
        let y = forward(w, x).expect("checked shape");
        total_loss(y.view(), target, alpha, beta, featnet)
            .expect("checked shape")
            .total
    };
    let (tape, out) = forward_tape(weights, input)?;
    let pred = tape
        .value(out)
        .view()
        .into_shape_with_order(input.dim())
        .expect("single channel")
        .to_owned();
    let (_, g_out) = total_loss_grad(pred.view(), target, alpha, beta, featnet)?;
    let (pgrads, dx) = backward(weights, &tape, out, &g_out);

    let mut checks = Vec::new();
    for (name, analytic) in &pgrads {
        let base = weights.params()[name].iter().cloned().collect::<Vec<_>>();
        let numeric = central_differences(&base, h, |probe| {
            let mut w = weights.clone();
            let target = w.params_mut().get_mut(name).expect("parameter");
            for (dst, &v) in target.iter_mut().zip(probe) {
                *dst = v;
            }
            loss_of(&w, input)
        });
        let analytic: Vec<f64> = analytic.iter().cloned().collect();
        checks.push(GradCheck {
            name: name.clone(),
            entries: analytic.len(),
            max_rel_error: max_relative_error(&analytic, &numeric),
        });
    }
    let x0: Vec<f64> = input.iter().cloned().collect();
    let numeric = central_differences(&x0, h, |probe| {
        let x = Array2::from_shape_vec(input.dim(), probe.to_vec()).expect("same shape");
        loss_of(weights, x.view())
    });
    let analytic: Vec<f64> = dx.iter().cloned().collect();
    checks.push(GradCheck {
        name: "input".into(),
        entries: analytic.len(),
        max_rel_error: max_relative_error(&analytic, &numeric),
    });
    Ok(checks)
}

/// Checks the gradient of the perceptual loss with respect to `pred`.
pub fn check_perceptual(
    pred: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    featnet: &FeatureNet,
    h: f64,
) -> Result<GradCheck> {
    let (_, g) = perceptual_grad(pred, target, featnet)?;
    let x0: Vec<f64> = pred.iter().cloned().collect();
    let numeric = central_differences(&x0, h, |probe| {
        let x = Array2::from_shape_vec(pred.dim(), probe.to_vec()).expect("same shape");
        perceptual_loss(x.view(), target, featnet).expect("checked shape")
    });
    let analytic: Vec<f64> = g.iter().cloned().collect();
    Ok(GradCheck {
        name: "perceptual".into(),
        entries: analytic.len(),
        max_rel_error: max_relative_error(&analytic, &numeric),
    })
}

/// Checks the gradient of the l1 loss with respect to `pred`.
pub fn check_l1(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>, h: f64) -> Result<GradCheck> {
    let g = crate::loss::l1_grad(pred, target)?;
    let x0: Vec<f64> = pred.iter().cloned().collect();
    let numeric = central_differences(&x0, h, |probe| {
        let x = Array2::from_shape_vec(pred.dim(), probe.to_vec()).expect("same shape");
        crate::loss::l1_loss(x.view(), target).expect("checked shape")
    });
    let analytic: Vec<f64> = g.iter().cloned().collect();
    Ok(GradCheck {
        name: "l1".into(),
        entries: analytic.len(),
        max_rel_error: max_relative_error(&analytic, &numeric),
    })
}
