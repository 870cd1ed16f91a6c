//! On-disk formats: a UTF-8 `key=value` header next to a payload of
//! little-endian `f32` values (`<name>.raw` beside `<name>.hdr`).
//!
//! Stacks use `magic=HDREC1` with `domain`, `n_angles`, `n_det` and
//! comma-separated `angles`; images use `magic=HDRECP` with `width` and
//! `height`. Multi-row stacks and multi-slice images add `n_rows` /
//! `depth`, omitted when equal to one.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;

use crate::error::{ParseFailure, Result, TomoError};
use crate::phantom::Phantom;
use crate::stack::{Domain, ProjectionStack};

pub const STACK_MAGIC: &str = "HDREC1";
pub const IMAGE_MAGIC: &str = "HDRECP";

/// Path of the binary payload that accompanies a header file.
pub fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

/// Parsed `key=value` header, in file order.
#[derive(Debug, Clone, Default)]
pub struct Header {
    path: PathBuf,
    entries: Vec<(String, String)>,
}

impl Header {
    pub fn parse(path: &Path, text: &str) -> Result<Header> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| TomoError::Parse {
                path: path.to_path_buf(),
                kind: ParseFailure::Syntax,
                message: format!("line {} has no '='", lineno + 1),
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Header {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn read(path: &Path) -> Result<Header> {
        let text = fs::read_to_string(path).map_err(|e| TomoError::io(path, e))?;
        Header::parse(path, &text)
    }

    /// All entries in file order, including repeated keys.
    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| self.error(
            ParseFailure::MissingKey,
            format!("missing key '{key}'"),
        ))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| {
            self.error(ParseFailure::BadValue, format!("{key}={raw} is not a count"))
        })
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(_) => self.usize(key),
        }
    }

    pub fn expect_magic(&self, magic: &str) -> Result<()> {
        match self.get("magic") {
            Some(m) if m == magic => Ok(()),
            Some(m) => Err(self.error(
                ParseFailure::Magic,
                format!("expected magic {magic}, found {m}"),
            )),
            None => Err(self.error(ParseFailure::Magic, "missing magic".into())),
        }
    }

    pub fn error(&self, kind: ParseFailure, message: String) -> TomoError {
        TomoError::Parse {
            path: self.path.clone(),
            kind,
            message,
        }
    }
}

pub fn write_f32_payload<'a>(path: &Path, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    let bytes: Vec<u8> = values
        .into_iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    fs::write(path, bytes).map_err(|e| TomoError::io(path, e))
}

pub fn read_f32_payload(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| TomoError::io(path, e))?;
    if bytes.len() % 4 != 0 || bytes.len() / 4 != expected {
        return Err(TomoError::LengthMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() / 4,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub fn write_header(path: &Path, lines: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in lines {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| TomoError::io(path, e))
}

/// Writes header and payload. Values are stored as `f32`; the stack must
/// satisfy the file-level invariants (`T_MAX` for transmission).
pub fn write_stack(stack: &ProjectionStack, path: &Path) -> Result<()> {
    stack.check_persistable()?;
    let angles = stack
        .angles()
        .iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let mut lines = vec![
        ("magic", STACK_MAGIC.to_string()),
        ("domain", stack.domain().as_str().to_string()),
        ("n_angles", stack.n_angles().to_string()),
        ("n_det", stack.n_det().to_string()),
    ];
    if stack.n_rows() != 1 {
        lines.push(("n_rows", stack.n_rows().to_string()));
    }
    lines.push(("angles", angles));
    write_header(path, &lines)?;
    write_f32_payload(&payload_path(path), stack.values().iter())
}

pub fn read_stack(path: &Path) -> Result<ProjectionStack> {
    let header = Header::read(path)?;
    header.expect_magic(STACK_MAGIC)?;
    let domain_raw = header.require("domain")?;
    let domain = Domain::parse(domain_raw).ok_or_else(|| {
        header.error(
            ParseFailure::UnknownDomain,
            format!("unknown domain '{domain_raw}'"),
        )
    })?;
    let n_angles = header.usize("n_angles")?;
    let n_det = header.usize("n_det")?;
    let n_rows = header.usize_or("n_rows", 1)?;
    let angles_raw = header.require("angles")?;
    let angles = angles_raw
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| header.error(ParseFailure::BadValue, format!("angles: {e}")))?;
    if angles.len() != n_angles {
        return Err(header.error(
            ParseFailure::BadValue,
            format!("{} angles listed, n_angles={n_angles}", angles.len()),
        ));
    }
    let values = read_f32_payload(&payload_path(path), n_angles * n_rows * n_det)?;
    let values = Array3::from_shape_vec((n_angles, n_rows, n_det), values)
        .expect("length checked against header");
    let stack = ProjectionStack::new(angles, values, domain)?;
    stack.check_persistable()?;
    Ok(stack)
}

/// Writes any image volume `(depth, height, width)`, including signed
/// reconstructions.
pub fn write_image(image: &Array3<f64>, path: &Path) -> Result<()> {
    let (depth, height, width) = image.dim();
    let mut lines = vec![
        ("magic", IMAGE_MAGIC.to_string()),
        ("width", width.to_string()),
        ("height", height.to_string()),
    ];
    if depth != 1 {
        lines.push(("depth", depth.to_string()));
    }
    write_header(path, &lines)?;
    write_f32_payload(&payload_path(path), image.iter())
}

pub fn read_image(path: &Path) -> Result<Array3<f64>> {
    let header = Header::read(path)?;
    header.expect_magic(IMAGE_MAGIC)?;
    let width = header.usize("width")?;
    let height = header.usize("height")?;
    let depth = header.usize_or("depth", 1)?;
    let values = read_f32_payload(&payload_path(path), depth * height * width)?;
    Ok(Array3::from_shape_vec((depth, height, width), values).expect("length checked"))
}

pub fn write_phantom(phantom: &Phantom, path: &Path) -> Result<()> {
    write_image(phantom.mu(), path)
}

pub fn read_phantom(path: &Path) -> Result<Phantom> {
    Phantom::new(read_image(path)?)
}
