//! Single-image reverse-mode evaluation of small convolutional graphs.
//!
//! Activations are `(channels, height, width)` arrays. Parameters live in a
//! [`Params`] map keyed `<layer>.weight` / `<layer>.bias`; convolution
//! weights are `(out, in, k, k)`, transposed-convolution weights
//! `(in, out, 2, 2)`.

use indexmap::IndexMap;
use ndarray::{Array1, Array2, Array3, ArrayD, ArrayView2, ArrayView3, Axis, Ix2};

pub type Params = IndexMap<String, ArrayD<f64>>;

/// Handle to a value recorded on a [`Tape`].
pub type Var = usize;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone)]
enum Node {
    Input,
    Conv {
        x: Var,
        layer: String,
        stride: usize,
        pad: usize,
    },
    ConvT {
        x: Var,
        layer: String,
    },
    Leaky {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    Pool {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
}

/// Forward evaluation record. Every recorded value is kept for the
/// backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<Array3<f64>>,
}

fn weight<'a>(params: &'a Params, layer: &str) -> &'a ArrayD<f64> {
    params
        .get(&format!("{layer}.weight"))
        .unwrap_or_else(|| panic!("missing parameter {layer}.weight"))
}

fn bias<'a>(params: &'a Params, layer: &str) -> &'a ArrayD<f64> {
    params
        .get(&format!("{layer}.bias"))
        .unwrap_or_else(|| panic!("missing parameter {layer}.bias"))
}

fn out_len(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

/// Range of output positions whose input tap `o * stride + tap - pad` lies
/// inside `0..n`.
fn valid_range(n: usize, out: usize, tap: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if tap >= pad { 0 } else { (pad - tap).div_ceil(stride) };
    let hi = if n + pad > tap {
        ((n + pad - tap - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn im2col(x: ArrayView3<'_, f64>, k: usize, stride: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let (ho, wo) = (out_len(h, k, stride, pad), out_len(w, k, stride, pad));
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut cols = Array2::<f64>::zeros((c * k * k, ho * wo));
    let cs = cols.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        for ky in 0..k {
            let (oy_lo, oy_hi) = valid_range(h, ho, ky, stride, pad);
            for kx in 0..k {
                let (ox_lo, ox_hi) = valid_range(w, wo, kx, stride, pad);
                let row = ((ci * k + ky) * k + kx) * ho * wo;
                for oy in oy_lo..oy_hi {
                    let iy = oy * stride + ky - pad;
                    let src = (ci * h + iy) * w;
                    let dst = row + oy * wo;
                    for ox in ox_lo..ox_hi {
                        cs[dst + ox] = xs[src + ox * stride + kx - pad];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    cols: &Array2<f64>,
    (c, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
) -> Array3<f64> {
    let (ho, wo) = (out_len(h, k, stride, pad), out_len(w, k, stride, pad));
    let cols = cols.as_standard_layout();
    let cs = cols.as_slice().expect("standard layout");
    let mut x = Array3::<f64>::zeros((c, h, w));
    let xs = x.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        for ky in 0..k {
            let (oy_lo, oy_hi) = valid_range(h, ho, ky, stride, pad);
            for kx in 0..k {
                let (ox_lo, ox_hi) = valid_range(w, wo, kx, stride, pad);
                let row = ((ci * k + ky) * k + kx) * ho * wo;
                for oy in oy_lo..oy_hi {
                    let iy = oy * stride + ky - pad;
                    let dst = (ci * h + iy) * w;
                    let src = row + oy * wo;
                    for ox in ox_lo..ox_hi {
                        xs[dst + ox * stride + kx - pad] += cs[src + ox];
                    }
                }
            }
        }
    }
    x
}

fn as_matrix(a: &ArrayD<f64>, rows: usize) -> ArrayView2<'_, f64> {
    let cols = a.len() / rows;
    a.view()
        .into_shape_with_order((rows, cols))
        .expect("contiguous parameter")
        .into_dimensionality::<Ix2>()
        .expect("2d view")
}

fn conv_forward(params: &Params, layer: &str, x: &Array3<f64>, stride: usize, pad: usize) -> Array3<f64> {
    let w = weight(params, layer);
    let b = bias(params, layer);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let (_, h, wd) = x.dim();
    let (ho, wo) = (out_len(h, k, stride, pad), out_len(wd, k, stride, pad));
    let cols = im2col(x.view(), k, stride, pad);
    let mut y = as_matrix(w, cout).dot(&cols);
    for (mut row, &bv) in y.axis_iter_mut(Axis(0)).zip(b.iter()) {
        row += bv;
    }
    y.into_shape_with_order((cout, ho, wo)).expect("conv output")
}

fn conv_t_forward(params: &Params, layer: &str, x: &Array3<f64>) -> Array3<f64> {
    let w = weight(params, layer);
    let b = bias(params, layer);
    let (cin, cout) = (w.shape()[0], w.shape()[1]);
    let (_, h, wd) = x.dim();
    let xm = x.as_standard_layout().into_owned();
    let xm = xm.into_shape_with_order((cin, h * wd)).expect("input matrix");
    let z = as_matrix(w, cin).t().dot(&xm);
    let mut y = Array3::<f64>::zeros((cout, 2 * h, 2 * wd));
    for co in 0..cout {
        for di in 0..2 {
            for dj in 0..2 {
                let zr = z.row((co * 2 + di) * 2 + dj);
                for i in 0..h {
                    for j in 0..wd {
                        y[[co, 2 * i + di, 2 * j + dj]] = zr[i * wd + j] + b[co];
                    }
                }
            }
        }
    }
    y
}

impl Tape {
    pub fn new(input: Array3<f64>) -> (Tape, Var) {
        (
            Tape {
                nodes: vec![Node::Input],
                values: vec![input],
            },
            0,
        )
    }

    pub fn value(&self, v: Var) -> &Array3<f64> {
        &self.values[v]
    }

    pub fn into_value(mut self, v: Var) -> Array3<f64> {
        self.values.swap_remove(v)
    }

    fn push(&mut self, node: Node, value: Array3<f64>) -> Var {
        self.nodes.push(node);
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn conv(&mut self, params: &Params, x: Var, layer: &str, stride: usize, pad: usize) -> Var {
        let y = conv_forward(params, layer, &self.values[x], stride, pad);
        self.push(
            Node::Conv {
                x,
                layer: layer.to_string(),
                stride,
                pad,
            },
            y,
        )
    }

    /// 2x2 transposed convolution with stride 2.
    pub fn conv_t(&mut self, params: &Params, x: Var, layer: &str) -> Var {
        let y = conv_t_forward(params, layer, &self.values[x]);
        self.push(
            Node::ConvT {
                x,
                layer: layer.to_string(),
            },
            y,
        )
    }

    pub fn leaky(&mut self, x: Var) -> Var {
        let y = self.values[x].mapv(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v });
        self.push(Node::Leaky { x }, y)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.values[x].mapv(f64::tanh);
        self.push(Node::Tanh { x }, y)
    }

    /// 2x2 average pooling; odd trailing rows or columns are dropped.
    pub fn pool(&mut self, x: Var) -> Var {
        let v = &self.values[x];
        let (c, h, w) = v.dim();
        let y = Array3::from_shape_fn((c, h / 2, w / 2), |(ch, i, j)| {
            0.25 * (v[[ch, 2 * i, 2 * j]]
                + v[[ch, 2 * i, 2 * j + 1]]
                + v[[ch, 2 * i + 1, 2 * j]]
                + v[[ch, 2 * i + 1, 2 * j + 1]])
        });
        self.push(Node::Pool { x }, y)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = &self.values[a] + &self.values[b];
        self.push(Node::Add { a, b }, y)
    }

    /// Channel concatenation `[a; b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let y = ndarray::concatenate(Axis(0), &[self.values[a].view(), self.values[b].view()])
            .expect("matching spatial size");
        self.push(Node::Concat { a, b }, y)
    }

    /// Propagates `grad_out` (the gradient of a scalar with respect to
    /// value `out`) back to the input and, if `want_params`, to every
    /// parameter used.
    pub fn backward(
        &self,
        params: &Params,
        out: Var,
        grad_out: Array3<f64>,
        want_params: bool,
    ) -> (Params, Array3<f64>) {
        let mut grads: Vec<Option<Array3<f64>>> = vec![None; self.values.len()];
        grads[out] = Some(grad_out);
        let mut pgrads = Params::new();

        fn accumulate(slot: &mut Option<Array3<f64>>, g: Array3<f64>) {
            match slot {
                Some(acc) => *acc += &g,
                None => *slot = Some(g),
            }
        }
        fn accumulate_param(map: &mut Params, name: String, g: ArrayD<f64>) {
            match map.get_mut(&name) {
                Some(acc) => *acc += &g,
                None => {
                    map.insert(name, g);
                }
            }
        }

        for idx in (0..self.nodes.len()).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx] {
                Node::Input => {
                    grads[idx] = Some(dy);
                }
                Node::Conv {
                    x,
                    layer,
                    stride,
                    pad,
                } => {
                    let w = weight(params, layer);
                    let (cout, k) = (w.shape()[0], w.shape()[2]);
                    let xv = &self.values[*x];
                    let (_, ho, wo) = dy.dim();
                    let dym = dy
                        .as_standard_layout()
                        .into_owned()
                        .into_shape_with_order((cout, ho * wo))
                        .expect("grad matrix");
                    if want_params {
                        let cols = im2col(xv.view(), k, *stride, *pad);
                        let dw = dym.dot(&cols.t());
                        let dw = dw.into_shape_with_order(w.raw_dim()).expect("weight shape");
                        let db: Array1<f64> = dym.sum_axis(Axis(1));
                        accumulate_param(&mut pgrads, format!("{layer}.weight"), dw);
                        accumulate_param(&mut pgrads, format!("{layer}.bias"), db.into_dyn());
                    }
                    let dcols = as_matrix(w, cout).t().dot(&dym);
                    let dx = col2im(&dcols, xv.dim(), k, *stride, *pad);
                    accumulate(&mut grads[*x], dx);
                }
                Node::ConvT { x, layer } => {
                    let w = weight(params, layer);
                    let (cin, cout) = (w.shape()[0], w.shape()[1]);
                    let (_, h, wd) = self.values[*x].dim();
                    let mut dz = Array2::<f64>::zeros((cout * 4, h * wd));
                    for co in 0..cout {
                        for di in 0..2 {
                            for dj in 0..2 {
                                let mut zr = dz.row_mut((co * 2 + di) * 2 + dj);
                                for i in 0..h {
                                    for j in 0..wd {
                                        zr[i * wd + j] = dy[[co, 2 * i + di, 2 * j + dj]];
                                    }
                                }
                            }
                        }
                    }
                    if want_params {
                        let xm = self.values[*x]
                            .as_standard_layout()
                            .into_owned()
                            .into_shape_with_order((cin, h * wd))
                            .expect("input matrix");
                        let dw = xm.dot(&dz.t()).into_shape_with_order(w.raw_dim()).expect("weight shape");
                        let db: Array1<f64> = dy.sum_axis(Axis(2)).sum_axis(Axis(1));
                        accumulate_param(&mut pgrads, format!("{layer}.weight"), dw);
                        accumulate_param(&mut pgrads, format!("{layer}.bias"), db.into_dyn());
                    }
                    let dx = as_matrix(w, cin)
                        .dot(&dz)
                        .into_shape_with_order((cin, h, wd))
                        .expect("input shape");
                    accumulate(&mut grads[*x], dx);
                }
                Node::Leaky { x } => {
                    let mut dx = dy;
                    dx.zip_mut_with(&self.values[*x], |g, &v| {
                        if v <= 0.0 {
                            *g *= LEAKY_SLOPE
                        }
                    });
                    accumulate(&mut grads[*x], dx);
                }
                Node::Tanh { x } => {
                    let mut dx = dy;
                    dx.zip_mut_with(&self.values[idx], |g, &y| *g *= 1.0 - y * y);
                    accumulate(&mut grads[*x], dx);
                }
                Node::Pool { x } => {
                    let mut dx = Array3::<f64>::zeros(self.values[*x].dim());
                    for ((ch, i, j), &g) in dy.indexed_iter() {
                        for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            dx[[ch, 2 * i + di, 2 * j + dj]] = 0.25 * g;
                        }
                    }
                    accumulate(&mut grads[*x], dx);
                }
                Node::Add { a, b } => {
                    accumulate(&mut grads[*b], dy.clone());
                    accumulate(&mut grads[*a], dy);
                }
                Node::Concat { a, b } => {
                    let ca = self.values[*a].dim().0;
                    let (ga, gb) = dy.view().split_at(Axis(0), ca);
                    accumulate(&mut grads[*b], gb.to_owned());
                    accumulate(&mut grads[*a], ga.to_owned());
                }
            }
        }
        let dx = grads[0]
            .take()
            .unwrap_or_else(|| Array3::zeros(self.values[0].dim()));
        (pgrads, dx)
    }
}
