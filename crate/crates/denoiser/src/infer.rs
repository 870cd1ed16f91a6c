use hdrec_core::{Domain, ProjectionStack, Result, TomoError, T_MAX};
use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;

use crate::model::{forward, ModelWeights};

/// Overlapping-tile layout for whole-projection inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    pub tile: usize,
    pub stride: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig {
            tile: 128,
            stride: 64,
        }
    }
}

impl TileConfig {
    pub fn validate(&self, multiple: usize) -> Result<()> {
        if self.stride == 0 || self.stride > self.tile || self.tile % multiple != 0 {
            return Err(TomoError::Parameter(format!(
                "tile {} / stride {}: need 0 < stride <= tile and tile a multiple of {multiple}",
                self.tile, self.stride
            )));
        }
        Ok(())
    }

    /// Padded length and tile origins along an axis of length `len`.
    pub fn layout(&self, len: usize) -> (usize, Vec<usize>) {
        let steps = len.saturating_sub(self.tile).div_ceil(self.stride);
        let padded = self.tile + steps * self.stride;
        (padded, (0..=steps).map(|k| k * self.stride).collect())
    }
}

/// Triangular taps `1 - |2 (i + 0.5) / n - 1|`, positive everywhere.
pub fn triangle(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 1.0 - ((2 * i + 1) as f64 / n as f64 - 1.0).abs())
        .collect()
}

/// Separable triangular tile weight.
pub fn blend_window(tile: usize) -> Array2<f64> {
    let t = triangle(tile);
    Array2::from_shape_fn((tile, tile), |(i, j)| t[i] * t[j])
}

fn weight_sum(padded: (usize, usize), rows: &[usize], cols: &[usize], window: &Array2<f64>) -> Array2<f64> {
    let tile = window.dim().0;
    let mut sum = Array2::<f64>::zeros(padded);
    for &r in rows {
        for &c in cols {
            let mut dst = sum.slice_mut(s![r..r + tile, c..c + tile]);
            dst += window;
        }
    }
    sum
}

/// Sum over tiles of each tile's normalized blending weight, per pixel of an
/// `h x w` image. Equal to one wherever the layout covers the image.
pub fn blend_coverage(h: usize, w: usize, tiles: &TileConfig) -> Array2<f64> {
    let (ph, rows) = tiles.layout(h);
    let (pw, cols) = tiles.layout(w);
    let window = blend_window(tiles.tile);
    let total = weight_sum((ph, pw), &rows, &cols, &window);
    let mut coverage = Array2::<f64>::zeros((ph, pw));
    for &r in &rows {
        for &c in &cols {
            let region = s![r..r + tiles.tile, c..c + tiles.tile];
            let mut dst = coverage.slice_mut(region);
            dst += &(&window / &total.slice(region));
        }
    }
    coverage.slice(s![..h, ..w]).to_owned()
}

/// Mirror index for padding past the end of an axis of length `n`.
fn mirror(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let k = i % period;
    if k < n {
        k
    } else {
        period - k
    }
}

/// Denoises an image of any size by blending overlapping tiles of a
/// mirror-padded copy.
pub fn denoise_image(weights: &ModelWeights, image: ArrayView2<'_, f64>, tiles: &TileConfig) -> Result<Array2<f64>> {
    tiles.validate(weights.config().size_multiple())?;
    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return Err(TomoError::Shape("empty projection".into()));
    }
    let (ph, rows) = tiles.layout(h);
    let (pw, cols) = tiles.layout(w);
    let padded = Array2::from_shape_fn((ph, pw), |(i, j)| image[[mirror(i, h), mirror(j, w)]]);
    let window = blend_window(tiles.tile);
    let mut acc = Array2::<f64>::zeros((ph, pw));
    for &r in &rows {
        for &c in &cols {
            let region = s![r..r + tiles.tile, c..c + tiles.tile];
            let out = forward(weights, padded.slice(region))?;
            let mut dst = acc.slice_mut(region);
            dst += &(&out * &window);
        }
    }
    let total = weight_sum((ph, pw), &rows, &cols, &window);
    Ok((&acc / &total).slice(s![..h, ..w]).to_owned())
}

/// Denoises every projection of a transmission stack; output clamped to
/// `[0, T_MAX]`.
pub fn denoise_stack(weights: &ModelWeights, p_l: &ProjectionStack, tiles: &TileConfig) -> Result<ProjectionStack> {
    p_l.require(Domain::Transmission)?;
    let outputs = (0..p_l.n_angles())
        .into_par_iter()
        .map(|a| denoise_image(weights, p_l.projection(a), tiles))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Array3::<f64>::zeros(p_l.values().dim());
    for (mut dst, out) in values.axis_iter_mut(Axis(0)).zip(outputs) {
        dst.assign(&out.mapv(|v| v.clamp(0.0, T_MAX)));
    }
    p_l.with_values(values, Domain::Transmission)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_covers_axis() {
        let t = TileConfig::default();
        assert_eq!(t.layout(100), (128, vec![0]));
        assert_eq!(t.layout(128), (128, vec![0]));
        assert_eq!(t.layout(184), (192, vec![0, 64]));
        assert_eq!(t.layout(256), (256, vec![0, 64, 128]));
    }

    #[test]
    fn coverage_is_one() {
        for (h, w) in [(64, 184), (128, 128), (300, 77)] {
            let c = blend_coverage(h, w, &TileConfig::default());
            assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn mirror_indexing() {
        let got: Vec<usize> = (0..9).map(|i| mirror(i, 4)).collect();
        assert_eq!(got, vec![0, 1, 2, 3, 2, 1, 0, 1, 2]);
    }
}
