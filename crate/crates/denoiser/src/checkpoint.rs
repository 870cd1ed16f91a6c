//! Weight checkpoints: a `key=value` header (`magic=HDRECW`, the
//! configuration, its fingerprint and one `layer=<name>:<shape>:<offset>`
//! line per parameter array, offsets in bytes) plus an `f32` payload.

use std::path::Path;

use hdrec_core::io::{payload_path, read_f32_payload, write_f32_payload, write_header, Header};
use hdrec_core::{ParseFailure, Result};
use ndarray::ArrayD;

use crate::model::{parameter_shapes, DenoiserConfig, ModelWeights};
use crate::tape::Params;

pub const WEIGHTS_MAGIC: &str = "HDRECW";

pub fn save_weights(weights: &ModelWeights, path: &Path) -> Result<()> {
    let cfg = weights.config();
    let mut lines = vec![
        ("magic", WEIGHTS_MAGIC.to_string()),
        ("n_scales", cfg.n_scales.to_string()),
        ("base_channels", cfg.base_channels.to_string()),
        ("residual_units_per_stage", cfg.residual_units_per_stage.to_string()),
        ("kernel", cfg.kernel.to_string()),
        ("seed", cfg.seed.to_string()),
        ("fingerprint", weights.fingerprint().to_string()),
    ];
    let mut offset = 0usize;
    for (name, array) in weights.params() {
        let shape = array
            .shape()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        lines.push(("layer", format!("{name}:{shape}:{offset}")));
        offset += array.len() * 4;
    }
    write_header(path, &lines)?;
    write_f32_payload(
        &payload_path(path),
        weights.params().values().flat_map(|a| a.iter()),
    )
}

pub fn load_weights(path: &Path) -> Result<ModelWeights> {
    let header = Header::read(path)?;
    header.expect_magic(WEIGHTS_MAGIC)?;
    let seed_raw = header.require("seed")?;
    let config = DenoiserConfig {
        n_scales: header.usize("n_scales")?,
        base_channels: header.usize("base_channels")?,
        residual_units_per_stage: header.usize("residual_units_per_stage")?,
        kernel: header.usize("kernel")?,
        seed: seed_raw.parse().map_err(|_| {
            header.error(ParseFailure::BadValue, format!("seed={seed_raw} is not an integer"))
        })?,
    };
    config
        .validate()
        .map_err(|e| header.error(ParseFailure::BadValue, e.to_string()))?;
    if header.require("fingerprint")? != config.fingerprint() {
        return Err(header.error(
            ParseFailure::BadValue,
            "fingerprint does not match the configuration".into(),
        ));
    }

    let expected = parameter_shapes(&config);
    let manifest: Vec<&str> = header
        .entries()
        .iter()
        .filter(|(k, _)| k == "layer")
        .map(|(_, v)| v.as_str())
        .collect();
    if manifest.len() != expected.len() {
        return Err(header.error(
            ParseFailure::BadValue,
            format!("{} layers listed, configuration has {}", manifest.len(), expected.len()),
        ));
    }
    let mut offset = 0usize;
    for (entry, (name, shape)) in manifest.iter().zip(&expected) {
        let shape_text = shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        let want = format!("{name}:{shape_text}:{offset}");
        if *entry != want {
            return Err(header.error(
                ParseFailure::BadValue,
                format!("layer entry '{entry}', expected '{want}'"),
            ));
        }
        offset += shape.iter().product::<usize>() * 4;
    }

    let values = read_f32_payload(&payload_path(path), offset / 4)?;
    let mut params = Params::new();
    let mut start = 0;
    for (name, shape) in expected {
        let len: usize = shape.iter().product();
        let array = ArrayD::from_shape_vec(shape, values[start..start + len].to_vec())
            .expect("length from shape");
        params.insert(name, array);
        start += len;
    }
    ModelWeights::from_params(config, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_model;

    #[test]
    fn round_trip_to_f32() {
        let cfg = DenoiserConfig {
            n_scales: 2,
            base_channels: 3,
            residual_units_per_stage: 1,
            kernel: 3,
            seed: 4,
        };
        let m = build_model(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.hdr");
        save_weights(&m, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.config(), m.config());
        for ((n1, a), (n2, b)) in m.params().iter().zip(back.params()) {
            assert_eq!(n1, n2);
            assert_eq!(a.mapv(|v| v as f32 as f64), *b);
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("magic=HDRECW\n"));
        assert!(text.contains("layer=enc0.unit0.conv1.weight:3x1x3x3:0\n"));
        assert!(text.contains("layer=enc0.unit0.conv1.bias:3:108\n"));

        let tampered = text.replace("seed=4", "seed=5");
        std::fs::write(&path, tampered).unwrap();
        assert!(load_weights(&path).is_err());
    }
}
