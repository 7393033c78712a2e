//! Layer kinds and their forward/backward kernels.
//!
//! Image tensors are `[batch, height, width, channels]`. Parameter layouts
//! (row-major):
//!
//! | layer              | weight                         | bias        |
//! |--------------------|--------------------------------|-------------|
//! | `dense`            | `[inputs, units]`              | `[units]`   |
//! | `conv2d`           | `[3, 3, in_channels, filters]` | `[filters]` |
//! | `conv_transpose2d` | `[3, 3, in_channels, filters]` | `[filters]` |
//!
//! Convolutions use a 3x3 kernel, stride 1 and zero "same" padding.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NnError, Result, Tensor};

pub const KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { units: usize },
    Conv2d { filters: usize },
    ConvTranspose2d { filters: usize },
    #[serde(rename = "maxpool2x2")]
    MaxPool2x2,
    #[serde(rename = "upsample2x2")]
    Upsample2x2,
    Dropout { rate: f64 },
    Relu,
    Softmax,
    Flatten,
    Reshape { shape: Vec<usize> },
}

/// Per-layer data the backward pass needs besides the layer input.
#[derive(Debug, Clone)]
pub(crate) enum Aux {
    None,
    Mask(Vec<f64>),
    Argmax(Vec<usize>),
    Output(Tensor),
}

fn mismatch(context: &'static str, expected: &[usize], got: &[usize]) -> NnError {
    NnError::ShapeMismatch {
        context,
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}

fn image_dims(shape: &[usize], context: &'static str) -> Result<(usize, usize, usize)> {
    match shape {
        [h, w, c] => Ok((*h, *w, *c)),
        _ => Err(mismatch(context, &[0, 0, 0], shape)),
    }
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::ConvTranspose2d { .. } => "conv_transpose2d",
            LayerSpec::MaxPool2x2 => "maxpool2x2",
            LayerSpec::Upsample2x2 => "upsample2x2",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Relu => "relu",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Reshape { .. } => "reshape",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            LayerSpec::Dense { units } => match input {
                [_] if *units > 0 => Ok(vec![*units]),
                _ => Err(mismatch("dense input", &[0], input)),
            },
            LayerSpec::Conv2d { filters } | LayerSpec::ConvTranspose2d { filters } => {
                let (h, w, _) = image_dims(input, "convolution input")?;
                if *filters == 0 {
                    return Err(NnError::InvalidConfig("convolution needs filters > 0".into()));
                }
                Ok(vec![h, w, *filters])
            }
            LayerSpec::MaxPool2x2 => {
                let (h, w, c) = image_dims(input, "maxpool input")?;
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(mismatch("maxpool needs even height and width", &[h + h % 2, w + w % 2, c], input));
                }
                Ok(vec![h / 2, w / 2, c])
            }
            LayerSpec::Upsample2x2 => {
                let (h, w, c) = image_dims(input, "upsample input")?;
                Ok(vec![2 * h, 2 * w, c])
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(NnError::InvalidConfig(format!("dropout rate {rate} not in [0, 1)")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Softmax => match input {
                [_] => Ok(input.to_vec()),
                _ => Err(mismatch("softmax input", &[0], input)),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape { shape } => {
                let a: usize = input.iter().product();
                let b: usize = shape.iter().product();
                if a != b {
                    return Err(mismatch("reshape", shape, input));
                }
                Ok(shape.clone())
            }
        }
    }

    pub fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match self {
            LayerSpec::Dense { units } => vec![vec![input[0], *units], vec![*units]],
            LayerSpec::Conv2d { filters } | LayerSpec::ConvTranspose2d { filters } => {
                vec![vec![KERNEL, KERNEL, input[2], *filters], vec![*filters]]
            }
            _ => Vec::new(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub(crate) fn init_params(&self, input: &[usize], rng: &mut ChaCha8Rng) -> Vec<Tensor> {
        let shapes = self.param_shapes(input);
        if shapes.is_empty() {
            return Vec::new();
        }
        let (fan_in, fan_out) = match self {
            LayerSpec::Dense { units } => (input[0], *units),
            LayerSpec::Conv2d { filters } | LayerSpec::ConvTranspose2d { filters } => {
                (KERNEL * KERNEL * input[2], KERNEL * KERNEL * filters)
            }
            _ => unreachable!("parameterless layer"),
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut w = Tensor::zeros(&shapes[0]);
        for v in &mut w.data {
            *v = rng.random_range(-limit..limit);
        }
        vec![w, Tensor::zeros(&shapes[1])]
    }

    pub(crate) fn forward(
        &self,
        params: &[Tensor],
        x: &Tensor,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, Aux)> {
        let n = x.batch();
        let out_item = self.output_shape(&x.shape[1..])?;
        let mut out_shape = vec![n];
        out_shape.extend_from_slice(&out_item);

        match self {
            LayerSpec::Dense { units } => {
                let inputs = x.item_len();
                let (w, b) = (&params[0].data, &params[1].data);
                let mut y = vec![0.0; n * units];
                for (xr, yr) in x.data.chunks_exact(inputs).zip(y.chunks_exact_mut(*units)) {
                    yr.copy_from_slice(b);
                    for (i, &a) in xr.iter().enumerate() {
                        if a != 0.0 {
                            axpy(a, &w[i * units..(i + 1) * units], yr);
                        }
                    }
                }
                Ok((Tensor { shape: out_shape, data: y }, Aux::None))
            }
            LayerSpec::Conv2d { filters } | LayerSpec::ConvTranspose2d { filters } => {
                let transpose = matches!(self, LayerSpec::ConvTranspose2d { .. });
                let (h, w, cin) = image_dims(&x.shape[1..], "convolution input")?;
                let geom = ConvGeom { n, h, w, cin, cout: *filters, transpose };
                let mut y = vec![0.0; n * h * w * filters];
                for px in y.chunks_exact_mut(*filters) {
                    px.copy_from_slice(&params[1].data);
                }
                geom.forward(&x.data, &params[0].data, &mut y);
                Ok((Tensor { shape: out_shape, data: y }, Aux::None))
            }
            LayerSpec::MaxPool2x2 => {
                let (h, w, c) = image_dims(&x.shape[1..], "maxpool input")?;
                let (oh, ow) = (h / 2, w / 2);
                let mut y = vec![0.0; n * oh * ow * c];
                let mut arg = vec![0usize; y.len()];
                for b in 0..n {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for ch in 0..c {
                                let mut best = usize::MAX;
                                let mut best_v = f64::NEG_INFINITY;
                                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                    let idx = ((b * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                                    if best == usize::MAX || x.data[idx] > best_v {
                                        best = idx;
                                        best_v = x.data[idx];
                                    }
                                }
                                let o = ((b * oh + oy) * ow + ox) * c + ch;
                                y[o] = best_v;
                                arg[o] = best;
                            }
                        }
                    }
                }
                Ok((Tensor { shape: out_shape, data: y }, Aux::Argmax(arg)))
            }
            LayerSpec::Upsample2x2 => {
                let (h, w, c) = image_dims(&x.shape[1..], "upsample input")?;
                let (oh, ow) = (2 * h, 2 * w);
                let mut y = vec![0.0; n * oh * ow * c];
                for b in 0..n {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let src = ((b * h + oy / 2) * w + ox / 2) * c;
                            let dst = ((b * oh + oy) * ow + ox) * c;
                            y[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
                        }
                    }
                }
                Ok((Tensor { shape: out_shape, data: y }, Aux::None))
            }
            LayerSpec::Dropout { rate } => match rng {
                Some(rng) if *rate > 0.0 => {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> = (0..x.len())
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    let data = x.data.iter().zip(&mask).map(|(a, m)| a * m).collect();
                    Ok((Tensor { shape: out_shape, data }, Aux::Mask(mask)))
                }
                _ => Ok((Tensor { shape: out_shape, data: x.data.clone() }, Aux::None)),
            },
            LayerSpec::Relu => {
                let data = x.data.iter().map(|v| v.max(0.0)).collect();
                Ok((Tensor { shape: out_shape, data }, Aux::None))
            }
            LayerSpec::Softmax => {
                let k = x.item_len();
                let mut data = x.data.clone();
                for row in data.chunks_exact_mut(k) {
                    softmax_in_place(row);
                }
                let y = Tensor { shape: out_shape, data };
                Ok((y.clone(), Aux::Output(y)))
            }
            LayerSpec::Flatten | LayerSpec::Reshape { .. } => {
                Ok((Tensor { shape: out_shape, data: x.data.clone() }, Aux::None))
            }
        }
    }

    /// Returns the gradient with respect to the layer input and the
    /// gradients of the layer parameters.
    pub(crate) fn backward(
        &self,
        params: &[Tensor],
        x: &Tensor,
        aux: &Aux,
        grad: &Tensor,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        let n = x.batch();
        match self {
            LayerSpec::Dense { units } => {
                let inputs = x.item_len();
                let w = &params[0].data;
                let mut dw = vec![0.0; inputs * units];
                let mut db = vec![0.0; *units];
                let mut dx = vec![0.0; n * inputs];
                for b in 0..n {
                    let g = &grad.data[b * units..(b + 1) * units];
                    let xr = &x.data[b * inputs..(b + 1) * inputs];
                    axpy(1.0, g, &mut db);
                    let dxr = &mut dx[b * inputs..(b + 1) * inputs];
                    for i in 0..inputs {
                        let wr = &w[i * units..(i + 1) * units];
                        dxr[i] = dot(wr, g);
                        if xr[i] != 0.0 {
                            axpy(xr[i], g, &mut dw[i * units..(i + 1) * units]);
                        }
                    }
                }
                Ok((
                    Tensor { shape: x.shape.clone(), data: dx },
                    vec![
                        Tensor { shape: params[0].shape.clone(), data: dw },
                        Tensor { shape: params[1].shape.clone(), data: db },
                    ],
                ))
            }
            LayerSpec::Conv2d { filters } | LayerSpec::ConvTranspose2d { filters } => {
                let transpose = matches!(self, LayerSpec::ConvTranspose2d { .. });
                let (h, w, cin) = image_dims(&x.shape[1..], "convolution input")?;
                let geom = ConvGeom { n, h, w, cin, cout: *filters, transpose };
                let mut dk = vec![0.0; params[0].len()];
                let mut db = vec![0.0; *filters];
                let mut dx = vec![0.0; x.len()];
                for px in grad.data.chunks_exact(*filters) {
                    axpy(1.0, px, &mut db);
                }
                geom.backward(&x.data, &params[0].data, &grad.data, &mut dx, &mut dk);
                Ok((
                    Tensor { shape: x.shape.clone(), data: dx },
                    vec![
                        Tensor { shape: params[0].shape.clone(), data: dk },
                        Tensor { shape: params[1].shape.clone(), data: db },
                    ],
                ))
            }
            LayerSpec::MaxPool2x2 => {
                let Aux::Argmax(arg) = aux else {
                    unreachable!("maxpool forward stores argmax")
                };
                let mut dx = vec![0.0; x.len()];
                for (g, &i) in grad.data.iter().zip(arg) {
                    dx[i] += g;
                }
                Ok((Tensor { shape: x.shape.clone(), data: dx }, Vec::new()))
            }
            LayerSpec::Upsample2x2 => {
                let (h, w, c) = image_dims(&x.shape[1..], "upsample input")?;
                let (oh, ow) = (2 * h, 2 * w);
                let mut dx = vec![0.0; x.len()];
                for b in 0..n {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let dst = ((b * h + oy / 2) * w + ox / 2) * c;
                            let src = ((b * oh + oy) * ow + ox) * c;
                            axpy(1.0, &grad.data[src..src + c], &mut dx[dst..dst + c]);
                        }
                    }
                }
                Ok((Tensor { shape: x.shape.clone(), data: dx }, Vec::new()))
            }
            LayerSpec::Dropout { .. } => {
                let data = match aux {
                    Aux::Mask(mask) => grad.data.iter().zip(mask).map(|(g, m)| g * m).collect(),
                    _ => grad.data.clone(),
                };
                Ok((Tensor { shape: x.shape.clone(), data }, Vec::new()))
            }
            LayerSpec::Relu => {
                let data = grad
                    .data
                    .iter()
                    .zip(&x.data)
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                Ok((Tensor { shape: x.shape.clone(), data }, Vec::new()))
            }
            LayerSpec::Softmax => {
                let Aux::Output(p) = aux else {
                    unreachable!("softmax forward stores its output")
                };
                let k = x.item_len();
                let mut dx = vec![0.0; x.len()];
                for ((pr, gr), dr) in p
                    .data
                    .chunks_exact(k)
                    .zip(grad.data.chunks_exact(k))
                    .zip(dx.chunks_exact_mut(k))
                {
                    let s = dot(pr, gr);
                    for j in 0..k {
                        dr[j] = pr[j] * (gr[j] - s);
                    }
                }
                Ok((Tensor { shape: x.shape.clone(), data: dx }, Vec::new()))
            }
            LayerSpec::Flatten | LayerSpec::Reshape { .. } => Ok((
                Tensor { shape: x.shape.clone(), data: grad.data.clone() },
                Vec::new(),
            )),
        }
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * i + k] * b[4 * i + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// 3x3 same-padded convolution over NHWC data.
///
/// The plain convolution gathers: `out[y, x] += in[y + dy - 1, x + dx - 1] * K[dy, dx]`.
/// The transposed convolution scatters with the same offsets, which makes it
/// the exact adjoint of the plain one for a shared kernel.
struct ConvGeom {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    transpose: bool,
}

impl ConvGeom {
    /// Calls `f(src_pixel, dst_pixel, tap)` for every valid kernel tap, where
    /// pixels are flat `(batch, y, x)` indices and `tap = dy * 3 + dx`.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (h, w) = (self.h as isize, self.w as isize);
        for b in 0..self.n {
            let base = b * self.h * self.w;
            for y in 0..h {
                for x in 0..w {
                    let here = base + (y * w + x) as usize;
                    for dy in 0..KERNEL as isize {
                        let yy = y + dy - 1;
                        if yy < 0 || yy >= h {
                            continue;
                        }
                        for dx in 0..KERNEL as isize {
                            let xx = x + dx - 1;
                            if xx < 0 || xx >= w {
                                continue;
                            }
                            let there = base + (yy * w + xx) as usize;
                            let tap = (dy * KERNEL as isize + dx) as usize;
                            if self.transpose {
                                f(here, there, tap);
                            } else {
                                f(there, here, tap);
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, x: &[f64], k: &[f64], y: &mut [f64]) {
        let (cin, cout) = (self.cin, self.cout);
        self.for_each_tap(|src, dst, tap| {
            let out = &mut y[dst * cout..(dst + 1) * cout];
            for c in 0..cin {
                let a = x[src * cin + c];
                if a != 0.0 {
                    let kr = &k[(tap * cin + c) * cout..(tap * cin + c + 1) * cout];
                    axpy(a, kr, out);
                }
            }
        });
    }

    fn backward(&self, x: &[f64], k: &[f64], g: &[f64], dx: &mut [f64], dk: &mut [f64]) {
        let (cin, cout) = (self.cin, self.cout);
        self.for_each_tap(|src, dst, tap| {
            let gr = &g[dst * cout..(dst + 1) * cout];
            for c in 0..cin {
                let row = (tap * cin + c) * cout..(tap * cin + c + 1) * cout;
                dx[src * cin + c] += dot(&k[row.clone()], gr);
                let a = x[src * cin + c];
                if a != 0.0 {
                    axpy(a, gr, &mut dk[row]);
                }
            }
        });
    }
}
