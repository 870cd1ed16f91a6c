use hdrec_core::{Result, TomoError};
use indexmap::IndexMap;
use ndarray::{Array2, Array3, ArrayD, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::tape::{Params, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserConfig {
    /// Encoder stages; the input is halved `n_scales - 1` times.
    pub n_scales: usize,
    pub base_channels: usize,
    pub residual_units_per_stage: usize,
    pub kernel: usize,
    pub seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            n_scales: 4,
            base_channels: 32,
            residual_units_per_stage: 2,
            kernel: 3,
            seed: 0,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_scales < 2 {
            return Err(TomoError::Parameter(format!(
                "n_scales must be >= 2, got {}",
                self.n_scales
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(TomoError::Parameter(format!(
                "kernel must be odd, got {}",
                self.kernel
            )));
        }
        if self.base_channels == 0 || self.residual_units_per_stage == 0 {
            return Err(TomoError::Parameter(
                "base_channels and residual_units_per_stage must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Image sides must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.n_scales - 1)
    }

    pub fn channels(&self, stage: usize) -> usize {
        self.base_channels << stage
    }

    /// SHA-256 over the canonical `key=value;` rendering of every field.
    pub fn fingerprint(&self) -> String {
        let canonical = format!(
            "n_scales={};base_channels={};residual_units_per_stage={};kernel={};seed={};",
            self.n_scales, self.base_channels, self.residual_units_per_stage, self.kernel, self.seed
        );
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerKind {
    Conv,
    ConvT,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LayerSpec {
    name: String,
    kind: LayerKind,
    c_in: usize,
    c_out: usize,
    k: usize,
}

fn unit_specs(prefix: &str, c_in: usize, c: usize, k: usize, out: &mut Vec<LayerSpec>) {
    let conv = |name: String, c_in, c_out, k| LayerSpec {
        name,
        kind: LayerKind::Conv,
        c_in,
        c_out,
        k,
    };
    out.push(conv(format!("{prefix}.conv1"), c_in, c, k));
    out.push(conv(format!("{prefix}.conv2"), c, c, k));
    if c_in != c {
        out.push(conv(format!("{prefix}.proj"), c_in, c, 1));
    }
}

fn layer_specs(cfg: &DenoiserConfig) -> Vec<LayerSpec> {
    let k = cfg.kernel;
    let mut specs = Vec::new();
    for s in 0..cfg.n_scales {
        let c = cfg.channels(s);
        let mut c_in = if s == 0 { 1 } else { c };
        if s > 0 {
            specs.push(LayerSpec {
                name: format!("down{s}"),
                kind: LayerKind::Conv,
                c_in: cfg.channels(s - 1),
                c_out: c,
                k,
            });
        }
        for u in 0..cfg.residual_units_per_stage {
            unit_specs(&format!("enc{s}.unit{u}"), c_in, c, k, &mut specs);
            c_in = c;
        }
    }
    for s in (0..cfg.n_scales - 1).rev() {
        let c = cfg.channels(s);
        specs.push(LayerSpec {
            name: format!("up{s}"),
            kind: LayerKind::ConvT,
            c_in: cfg.channels(s + 1),
            c_out: c,
            k: 2,
        });
        let mut c_in = 2 * c;
        for u in 0..cfg.residual_units_per_stage {
            unit_specs(&format!("dec{s}.unit{u}"), c_in, c, k, &mut specs);
            c_in = c;
        }
    }
    specs.push(LayerSpec {
        name: "head".into(),
        kind: LayerKind::Conv,
        c_in: cfg.channels(0),
        c_out: 1,
        k: 1,
    });
    specs
}

impl LayerSpec {
    fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv => vec![self.c_out, self.c_in, self.k, self.k],
            LayerKind::ConvT => vec![self.c_in, self.c_out, 2, 2],
        }
    }

    /// Uniform init bound. Layers feeding an activation use the He bound
    /// `sqrt(6 / fan_in)`; the last convolution of each residual branch and
    /// the head use a tenth of the variance-preserving `sqrt(3 / fan_in)`,
    /// so every unit and the whole network start close to the identity.
    fn init_bound(&self) -> f64 {
        let fan_in = self.fan_in() as f64;
        if self.name.ends_with(".conv2") || self.name.ends_with(".proj") || self.name == "head" {
            0.1 * (3.0 / fan_in).sqrt()
        } else {
            (6.0 / fan_in).sqrt()
        }
    }

    fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.c_in * self.k * self.k,
            LayerKind::ConvT => self.c_in,
        }
    }
}

/// Every parameter of the network in evaluation order, with its shape.
pub fn parameter_shapes(cfg: &DenoiserConfig) -> Vec<(String, Vec<usize>)> {
    layer_specs(cfg)
        .into_iter()
        .flat_map(|spec| {
            let bias = vec![spec.c_out];
            [
                (format!("{}.weight", spec.name), spec.weight_shape()),
                (format!("{}.bias", spec.name), bias),
            ]
        })
        .collect()
}

/// Named parameters of a residual U-Net plus the configuration they were
/// built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    config: DenoiserConfig,
    fingerprint: String,
    params: Params,
}

impl ModelWeights {
    /// Wraps loaded parameters after checking names, shapes and finiteness
    /// against `config`.
    pub fn from_params(config: DenoiserConfig, params: Params) -> Result<Self> {
        config.validate()?;
        let expected = parameter_shapes(&config);
        if expected.len() != params.len() {
            return Err(TomoError::Shape(format!(
                "expected {} parameter arrays, got {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), (got_name, got)) in expected.iter().zip(params.iter()) {
            if name != got_name || got.shape() != shape.as_slice() {
                return Err(TomoError::Shape(format!(
                    "parameter {got_name} {:?} does not match {name} {shape:?}",
                    got.shape()
                )));
            }
            if got.iter().any(|v| !v.is_finite()) {
                return Err(TomoError::Invariant(format!("{name} has non-finite values")));
            }
        }
        Ok(ModelWeights {
            fingerprint: config.fingerprint(),
            config,
            params,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(|a| a.len()).sum()
    }

    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.params
            .iter()
            .map(|(k, v)| (k.clone(), v.shape().to_vec()))
            .collect()
    }
}

/// Seeded fan-in-scaled uniform weights (see `LayerSpec::init_bound`), zero
/// biases.
pub fn build_model(config: &DenoiserConfig) -> Result<ModelWeights> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = IndexMap::new();
    for spec in layer_specs(config) {
        let bound = spec.init_bound();
        let w = ArrayD::from_shape_simple_fn(spec.weight_shape(), || rng.gen_range(-bound..bound));
        params.insert(format!("{}.weight", spec.name), w);
        params.insert(format!("{}.bias", spec.name), ArrayD::zeros(vec![spec.c_out]));
    }
    ModelWeights::from_params(*config, params)
}

fn residual_unit(tape: &mut Tape, p: &Params, x: Var, prefix: &str, project: bool, pad: usize) -> Var {
    let h = tape.conv(p, x, &format!("{prefix}.conv1"), 1, pad);
    let h = tape.leaky(h);
    let h = tape.conv(p, h, &format!("{prefix}.conv2"), 1, pad);
    let skip = if project {
        tape.conv(p, x, &format!("{prefix}.proj"), 1, 0)
    } else {
        x
    };
    tape.add(h, skip)
}

fn check_input(cfg: &DenoiserConfig, h: usize, w: usize) -> Result<()> {
    let m = cfg.size_multiple();
    if h == 0 || w == 0 || h % m != 0 || w % m != 0 {
        return Err(TomoError::Shape(format!(
            "input {h}x{w}: both sides must be non-zero multiples of {m}"
        )));
    }
    Ok(())
}

/// Records a full forward pass; returns the tape and the output handle.
pub fn forward_tape(weights: &ModelWeights, image: ArrayView2<'_, f64>) -> Result<(Tape, Var)> {
    let cfg = &weights.config;
    let (h, w) = image.dim();
    check_input(cfg, h, w)?;
    let p = &weights.params;
    let pad = cfg.kernel / 2;
    let input = image.to_owned().into_shape_with_order((1, h, w)).expect("single channel");
    let (mut tape, x0) = Tape::new(input);

    let mut skips = Vec::with_capacity(cfg.n_scales);
    let mut x = x0;
    for s in 0..cfg.n_scales {
        let mut project = s == 0 && cfg.channels(0) != 1;
        if s > 0 {
            x = tape.conv(p, x, &format!("down{s}"), 2, pad);
            x = tape.leaky(x);
        }
        for u in 0..cfg.residual_units_per_stage {
            x = residual_unit(&mut tape, p, x, &format!("enc{s}.unit{u}"), project, pad);
            project = false;
        }
        skips.push(x);
    }
    for s in (0..cfg.n_scales - 1).rev() {
        x = tape.conv_t(p, x, &format!("up{s}"));
        x = tape.leaky(x);
        x = tape.concat(x, skips[s]);
        for u in 0..cfg.residual_units_per_stage {
            x = residual_unit(&mut tape, p, x, &format!("dec{s}.unit{u}"), u == 0, pad);
        }
    }
    let head = tape.conv(p, x, "head", 1, 0);
    let out = tape.add(head, x0);
    Ok((tape, out))
}

/// Denoises one single-channel image whose sides are multiples of
/// [`DenoiserConfig::size_multiple`].
pub fn forward(weights: &ModelWeights, image: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (tape, out) = forward_tape(weights, image)?;
    let (h, w) = image.dim();
    Ok(tape
        .into_value(out)
        .into_shape_with_order((h, w))
        .expect("single channel output"))
}

/// Parameter gradients and input gradient of a scalar whose gradient with
/// respect to the network output is `grad_out`.
pub fn backward(
    weights: &ModelWeights,
    tape: &Tape,
    out: Var,
    grad_out: &Array2<f64>,
) -> (Params, Array2<f64>) {
    let (h, w) = grad_out.dim();
    let g: Array3<f64> = grad_out.to_owned().into_shape_with_order((1, h, w)).expect("single channel");
    let (pg, dx) = tape.backward(&weights.params, out, g, true);
    let mut ordered = Params::new();
    for (name, value) in weights.params.iter() {
        let grad = pg
            .get(name)
            .cloned()
            .unwrap_or_else(|| ArrayD::zeros(value.raw_dim()));
        ordered.insert(name.clone(), grad);
    }
    (ordered, dx.into_shape_with_order((h, w)).expect("single channel"))
}
