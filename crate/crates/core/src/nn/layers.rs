//! Layers with hand-derived backward passes.
//!
//! Layers act on a single example. Rank-2 activations are laid out as
//! rows × time; dense layers read any activation as a flat vector.

use rand::Rng;

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{DsfError, Result};
use crate::rng::DetRng;

/// Floor applied before the logarithm activation.
pub const LOG_FLOOR: f64 = 1e-6;

/// Forward-pass mode. Dropout draws its mask from the training stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut DetRng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    /// `y = W x + b`, `W` is out × in.
    Dense { weight: ParamId, bias: ParamId, in_dim: usize, out_dim: usize },
    /// Per-channel valid convolution with filters shared across channels.
    /// `[C, T] → [F·C, T−K+1]`, output row `f·C + c`.
    TemporalConv { weight: ParamId, bias: ParamId, n_filters: usize, kernel: usize },
    /// Affine map across rows at every time step, `[M, T] → [N, T]`.
    SpatialConv { weight: ParamId, bias: ParamId, in_rows: usize, out_rows: usize },
    Square,
    /// `log(max(x, LOG_FLOOR))`.
    Log,
    /// Average pooling along time, `[R, T] → [R, (T−w)/s + 1]`.
    AvgPool { width: usize, stride: usize },
    /// Inverted dropout; identity in eval mode.
    Dropout { rate: f64 },
    Sigmoid,
}

/// What a layer keeps from its forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    input: Tensor,
    // Dropout keep-mask scaled by 1/(1−rate), or the sigmoid output.
    aux: Vec<f64>,
}

fn shape_err(layer: &str, got: &[usize]) -> DsfError {
    DsfError::Shape(format!("{layer}: unexpected input shape {got:?}"))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Layer {
    pub fn forward(&self, ps: &ParamStore, x: &Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, Cache)> {
        let mut aux = Vec::new();
        let out = match *self {
            Layer::Dense { weight, bias, in_dim, out_dim } => {
                if x.len() != in_dim {
                    return Err(shape_err("dense", x.shape()));
                }
                let w = ps.value(weight);
                let b = ps.value(bias);
                let xs = x.data();
                let y = (0..out_dim)
                    .map(|o| b[o] + w[o * in_dim..(o + 1) * in_dim].iter().zip(xs).map(|(a, v)| a * v).sum::<f64>())
                    .collect();
                Tensor::from_vec(&[out_dim], y)?
            }
            Layer::TemporalConv { weight, bias, n_filters, kernel } => {
                let (c, t) = x.dims2()?;
                if t < kernel {
                    return Err(DsfError::Shape(format!("temporal conv: T={t} shorter than kernel {kernel}")));
                }
                let tout = t - kernel + 1;
                let w = ps.value(weight);
                let b = ps.value(bias);
                let xs = x.data();
                let mut y = vec![0.0; n_filters * c * tout];
                for f in 0..n_filters {
                    let wf = &w[f * kernel..(f + 1) * kernel];
                    for ch in 0..c {
                        let xr = &xs[ch * t..(ch + 1) * t];
                        let yr = &mut y[(f * c + ch) * tout..(f * c + ch + 1) * tout];
                        yr.fill(b[f]);
                        for (k, &wk) in wf.iter().enumerate() {
                            for (yo, &xv) in yr.iter_mut().zip(&xr[k..k + tout]) {
                                *yo += wk * xv;
                            }
                        }
                    }
                }
                Tensor::from_vec(&[n_filters * c, tout], y)?
            }
            Layer::SpatialConv { weight, bias, in_rows, out_rows } => {
                let (m, t) = x.dims2()?;
                if m != in_rows {
                    return Err(shape_err("spatial conv", x.shape()));
                }
                let w = ps.value(weight);
                let b = ps.value(bias);
                let xs = x.data();
                let mut y = vec![0.0; out_rows * t];
                for o in 0..out_rows {
                    let yr = &mut y[o * t..(o + 1) * t];
                    yr.fill(b[o]);
                    for i in 0..in_rows {
                        let a = w[o * in_rows + i];
                        for (yo, &xv) in yr.iter_mut().zip(&xs[i * t..(i + 1) * t]) {
                            *yo += a * xv;
                        }
                    }
                }
                Tensor::from_vec(&[out_rows, t], y)?
            }
            Layer::Square => map(x, |v| v * v),
            Layer::Log => map(x, |v| v.max(LOG_FLOOR).ln()),
            Layer::AvgPool { width, stride } => {
                let (r, t) = x.dims2()?;
                if t < width || stride == 0 {
                    return Err(DsfError::Shape(format!("pooling: T={t} shorter than window {width}")));
                }
                let p = (t - width) / stride + 1;
                let xs = x.data();
                let inv = 1.0 / width as f64;
                let mut y = vec![0.0; r * p];
                for row in 0..r {
                    let xr = &xs[row * t..(row + 1) * t];
                    for j in 0..p {
                        y[row * p + j] = xr[j * stride..j * stride + width].iter().sum::<f64>() * inv;
                    }
                }
                Tensor::from_vec(&[r, p], y)?
            }
            Layer::Dropout { rate } => match mode {
                Mode::Eval => x.clone(),
                Mode::Train(rng) => {
                    let keep = 1.0 / (1.0 - rate);
                    aux = (0..x.len()).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
                    let y = x.data().iter().zip(&aux).map(|(v, m)| v * m).collect();
                    Tensor::from_vec(x.shape(), y)?
                }
            },
            Layer::Sigmoid => {
                let y = map(x, sigmoid);
                aux = y.data().to_vec();
                y
            }
        };
        Ok((out, Cache { input: x.clone(), aux }))
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, ps: &ParamStore, cache: &Cache, dy: &Tensor, grads: &mut Grads) -> Result<Tensor> {
        let x = &cache.input;
        let dx = match *self {
            Layer::Dense { weight, bias, in_dim, out_dim } => {
                let w = ps.value(weight);
                let xs = x.data();
                let g = dy.data();
                {
                    let gw = grads.get_mut(weight);
                    for o in 0..out_dim {
                        for (gwi, &xv) in gw[o * in_dim..(o + 1) * in_dim].iter_mut().zip(xs) {
                            *gwi += g[o] * xv;
                        }
                    }
                }
                for (gb, &go) in grads.get_mut(bias).iter_mut().zip(g) {
                    *gb += go;
                }
                let mut dx = vec![0.0; in_dim];
                for o in 0..out_dim {
                    for (d, &a) in dx.iter_mut().zip(&w[o * in_dim..(o + 1) * in_dim]) {
                        *d += g[o] * a;
                    }
                }
                Tensor::from_vec(x.shape(), dx)?
            }
            Layer::TemporalConv { weight, bias, n_filters, kernel } => {
                let (c, t) = x.dims2()?;
                let tout = t - kernel + 1;
                let w = ps.value(weight);
                let xs = x.data();
                let g = dy.data();
                let mut dx = vec![0.0; c * t];
                let mut gw = vec![0.0; n_filters * kernel];
                let mut gb = vec![0.0; n_filters];
                for f in 0..n_filters {
                    for ch in 0..c {
                        let gr = &g[(f * c + ch) * tout..(f * c + ch + 1) * tout];
                        let xr = &xs[ch * t..(ch + 1) * t];
                        gb[f] += gr.iter().sum::<f64>();
                        for k in 0..kernel {
                            gw[f * kernel + k] += gr.iter().zip(&xr[k..k + tout]).map(|(a, b)| a * b).sum::<f64>();
                            let wk = w[f * kernel + k];
                            for (d, &gv) in dx[ch * t + k..ch * t + k + tout].iter_mut().zip(gr) {
                                *d += wk * gv;
                            }
                        }
                    }
                }
                add_into(grads.get_mut(weight), &gw);
                add_into(grads.get_mut(bias), &gb);
                Tensor::from_vec(x.shape(), dx)?
            }
            Layer::SpatialConv { weight, bias, in_rows, out_rows } => {
                let (_, t) = x.dims2()?;
                let w = ps.value(weight);
                let xs = x.data();
                let g = dy.data();
                let mut dx = vec![0.0; in_rows * t];
                let mut gw = vec![0.0; out_rows * in_rows];
                let mut gb = vec![0.0; out_rows];
                for o in 0..out_rows {
                    let gr = &g[o * t..(o + 1) * t];
                    gb[o] = gr.iter().sum();
                    for i in 0..in_rows {
                        let xr = &xs[i * t..(i + 1) * t];
                        gw[o * in_rows + i] = gr.iter().zip(xr).map(|(a, b)| a * b).sum();
                        let a = w[o * in_rows + i];
                        for (d, &gv) in dx[i * t..(i + 1) * t].iter_mut().zip(gr) {
                            *d += a * gv;
                        }
                    }
                }
                add_into(grads.get_mut(weight), &gw);
                add_into(grads.get_mut(bias), &gb);
                Tensor::from_vec(x.shape(), dx)?
            }
            Layer::Square => zip_map(x, dy, |v, g| 2.0 * v * g)?,
            Layer::Log => zip_map(x, dy, |v, g| if v > LOG_FLOOR { g / v } else { 0.0 })?,
            Layer::AvgPool { width, stride } => {
                let (r, t) = x.dims2()?;
                let (_, p) = dy.dims2()?;
                let inv = 1.0 / width as f64;
                let g = dy.data();
                let mut dx = vec![0.0; r * t];
                for row in 0..r {
                    for j in 0..p {
                        let gv = g[row * p + j] * inv;
                        for d in &mut dx[row * t + j * stride..row * t + j * stride + width] {
                            *d += gv;
                        }
                    }
                }
                Tensor::from_vec(x.shape(), dx)?
            }
            Layer::Dropout { .. } => {
                if cache.aux.is_empty() {
                    dy.clone()
                } else {
                    Tensor::from_vec(x.shape(), dy.data().iter().zip(&cache.aux).map(|(g, m)| g * m).collect())?
                }
            }
            Layer::Sigmoid => {
                Tensor::from_vec(x.shape(), dy.data().iter().zip(&cache.aux).map(|(g, s)| g * s * (1.0 - s)).collect())?
            }
        };
        Ok(dx)
    }
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_vec(x.shape(), x.data().iter().map(|&v| f(v)).collect()).expect("same shape")
}

fn zip_map(x: &Tensor, g: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if x.len() != g.len() {
        return Err(DsfError::Shape(format!("gradient shape {:?} vs input {:?}", g.shape(), x.shape())));
    }
    Tensor::from_vec(x.shape(), x.data().iter().zip(g.data()).map(|(&a, &b)| f(a, b)).collect())
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Layers applied in order.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, Vec<Cache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(ps, &cur, mode)?;
            caches.push(cache);
            cur = y;
        }
        Ok((cur, caches))
    }

    pub fn backward(&self, ps: &ParamStore, caches: &[Cache], dy: &Tensor, grads: &mut Grads) -> Result<Tensor> {
        let mut g = dy.clone();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            g = layer.backward(ps, cache, &g, grads)?;
        }
        Ok(g)
    }
}
