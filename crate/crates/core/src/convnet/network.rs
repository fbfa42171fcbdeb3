//! Forward and backward passes for one example at a time.

use std::collections::BTreeMap;

use rand::Rng;

use super::params::ModelParams;
use super::spec::{LayerSpec, NetworkSpec, Shape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    /// Flat input index of the winning element of each pooled output.
    PoolArgmax(Vec<usize>),
    /// Per-unit scale (0 or 1/(1−rate)).
    DropoutMask(Vec<f64>),
}

/// Activations saved by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer.
    inputs: Vec<Vec<f64>>,
    aux: Vec<Aux>,
}

/// Parameter gradients keyed by tensor name, plus the input gradient.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub params: BTreeMap<String, Vec<f64>>,
    pub input: Option<Vec<f64>>,
}

impl Gradients {
    /// Adds `other` into `self` element-wise.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (name, g) in &other.params {
            match self.params.get_mut(name) {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                None => {
                    self.params.insert(name.clone(), g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.params.values_mut() {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }
}

struct LayerInfo {
    spec: LayerSpec,
    input: Shape,
    output: Shape,
    /// `convK` / `fcK` for parameterized layers.
    param_prefix: Option<String>,
}

/// A validated network topology.
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<LayerInfo>,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network").field("spec", &self.spec).finish()
    }
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let outputs = spec.shapes()?;
        let inputs = spec.input_shapes()?;
        let mut prefixes: BTreeMap<usize, String> = BTreeMap::new();
        for p in spec.param_specs()? {
            let prefix = p
                .name
                .rsplit_once('.')
                .map(|(a, _)| a.to_string())
                .unwrap_or_default();
            prefixes.insert(p.layer, prefix);
        }
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, &l)| LayerInfo {
                spec: l,
                input: inputs[i],
                output: outputs[i],
                param_prefix: prefixes.get(&i).cloned(),
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_len(&self) -> usize {
        self.spec.input.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input_len(), |l| l.output.len())
    }

    fn weights<'p>(&self, params: &'p ModelParams, i: usize) -> Result<(&'p [f64], &'p [f64])> {
        let prefix = self.layers[i]
            .param_prefix
            .as_ref()
            .expect("parameterized layer");
        let w = params.get(&format!("{prefix}.weight"))?;
        let b = params.get(&format!("{prefix}.bias"))?;
        Ok((&w.data, &b.data))
    }

    /// Runs the network on one example. Dropout draws from `rng` only in
    /// training mode.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        params: &ModelParams,
        input: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "network input: expected {} values ({:?}), got {}",
                self.input_len(),
                self.spec.input,
                input.len()
            )));
        }
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            aux: Vec::with_capacity(self.layers.len()),
        };
        let mut x = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, aux) = match layer.spec {
                LayerSpec::Conv3x3 { .. } => {
                    let (w, b) = self.weights(params, i)?;
                    check_len(w, layer.output.channels * layer.input.channels * 9, i)?;
                    (conv_forward(&x, w, b, layer.input, layer.output), Aux::None)
                }
                LayerSpec::Dense { units } => {
                    let (w, b) = self.weights(params, i)?;
                    check_len(w, units * layer.input.len(), i)?;
                    (dense_forward(&x, w, b), Aux::None)
                }
                LayerSpec::Relu => (x.iter().map(|&v| v.max(0.0)).collect(), Aux::None),
                LayerSpec::Maxpool2x2 => {
                    let (y, idx) = pool_forward(&x, layer.input, layer.output);
                    (y, Aux::PoolArgmax(idx))
                }
                LayerSpec::Dropout { rate } => {
                    if mode == Mode::Train && rate > 0.0 {
                        let keep = 1.0 / (1.0 - rate);
                        let mask: Vec<f64> = (0..x.len())
                            .map(|_| {
                                if rng.random::<f64>() < rate {
                                    0.0
                                } else {
                                    keep
                                }
                            })
                            .collect();
                        let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
                        (y, Aux::DropoutMask(mask))
                    } else {
                        (x.clone(), Aux::None)
                    }
                }
                LayerSpec::Flatten => (x.clone(), Aux::None),
            };
            cache.inputs.push(x);
            cache.aux.push(aux);
            x = y;
        }
        Ok((x, cache))
    }

    /// Logits in inference mode.
    pub fn predict_logits(&self, params: &ModelParams, input: &[f64]) -> Result<Vec<f64>> {
        let mut no_rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        Ok(self.forward(params, input, Mode::Inference, &mut no_rng)?.0)
    }

    /// Backpropagates `grad_out` (gradient of the loss w.r.t. the logits).
    ///
    /// Frozen tensors get no entry. Propagation stops below the lowest
    /// trainable layer unless `want_input_grad` is set.
    pub fn backward(
        &self,
        params: &ModelParams,
        cache: &ForwardCache,
        grad_out: &[f64],
        want_input_grad: bool,
    ) -> Result<Gradients> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Data(format!(
                "forward cache has {} layers, network has {}",
                cache.inputs.len(),
                self.layers.len()
            )));
        }
        if grad_out.len() != self.n_outputs() {
            return Err(Error::Shape(format!(
                "output gradient: expected {} values, got {}",
                self.n_outputs(),
                grad_out.len()
            )));
        }
        let trainable = |i: usize| -> Result<bool> {
            match &self.layers[i].param_prefix {
                None => Ok(false),
                Some(p) => Ok(!params.get(&format!("{p}.weight"))?.frozen
                    || !params.get(&format!("{p}.bias"))?.frozen),
            }
        };
        let lowest = if want_input_grad {
            Some(0)
        } else {
            let mut lowest = None;
            for i in 0..self.layers.len() {
                if trainable(i)? {
                    lowest = Some(i);
                    break;
                }
            }
            lowest
        };
        let mut grads = Gradients::default();
        let Some(lowest) = lowest else {
            return Ok(grads);
        };

        let mut g = grad_out.to_vec();
        for i in (lowest..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let x = &cache.inputs[i];
            if x.len() != layer.input.len() {
                return Err(Error::Data(format!(
                    "forward cache does not match layer {i}"
                )));
            }
            let need_dx = i > lowest || want_input_grad;
            g = match (&layer.spec, &cache.aux[i]) {
                (LayerSpec::Conv3x3 { .. }, _) => {
                    let (w, _) = self.weights(params, i)?;
                    let (dw, db, dx) = conv_backward(x, w, &g, layer.input, layer.output, need_dx);
                    self.store_param_grads(params, i, dw, db, &mut grads)?;
                    dx
                }
                (LayerSpec::Dense { .. }, _) => {
                    let (w, _) = self.weights(params, i)?;
                    let (dw, db, dx) = dense_backward(x, w, &g, need_dx);
                    self.store_param_grads(params, i, dw, db, &mut grads)?;
                    dx
                }
                (LayerSpec::Relu, _) => x
                    .iter()
                    .zip(&g)
                    .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                    .collect(),
                (LayerSpec::Maxpool2x2, Aux::PoolArgmax(idx)) => {
                    let mut dx = vec![0.0; x.len()];
                    for (&src, &gv) in idx.iter().zip(&g) {
                        dx[src] += gv;
                    }
                    dx
                }
                (LayerSpec::Dropout { .. }, Aux::DropoutMask(mask)) => {
                    g.iter().zip(mask).map(|(a, m)| a * m).collect()
                }
                (LayerSpec::Dropout { .. } | LayerSpec::Flatten, Aux::None) => g,
                _ => {
                    return Err(Error::Data(format!(
                        "forward cache does not match layer {i}"
                    )))
                }
            };
        }
        if want_input_grad {
            grads.input = Some(g);
        }
        Ok(grads)
    }

    fn store_param_grads(
        &self,
        params: &ModelParams,
        i: usize,
        dw: Vec<f64>,
        db: Vec<f64>,
        grads: &mut Gradients,
    ) -> Result<()> {
        let prefix = self.layers[i]
            .param_prefix
            .as_ref()
            .expect("parameterized layer");
        for (suffix, g) in [("weight", dw), ("bias", db)] {
            let name = format!("{prefix}.{suffix}");
            if !params.get(&name)?.frozen {
                grads.params.insert(name, g);
            }
        }
        Ok(())
    }
}

fn check_len(w: &[f64], expected: usize, layer: usize) -> Result<()> {
    if w.len() != expected {
        return Err(Error::Shape(format!(
            "layer {layer}: weight tensor has {} values, expected {expected}",
            w.len()
        )));
    }
    Ok(())
}

/// Patch matrix of a 3×3, pad-1 convolution: one row of `c·9` values per
/// output pixel, ordered `(channel, ky, kx)` to match the weight layout.
fn im2col(x: &[f64], inp: Shape) -> Vec<f64> {
    let (c_in, h, w) = (inp.channels, inp.height, inp.width);
    let k = c_in * 9;
    let mut cols = vec![0.0; h * w * k];
    for r in 0..h {
        for col in 0..w {
            let row = &mut cols[(r * w + col) * k..(r * w + col + 1) * k];
            for c in 0..c_in {
                let plane = &x[c * h * w..(c + 1) * h * w];
                for ky in 0..3 {
                    let yy = r + ky;
                    if yy == 0 || yy > h {
                        continue;
                    }
                    for kx in 0..3 {
                        let xx = col + kx;
                        if xx == 0 || xx > w {
                            continue;
                        }
                        row[c * 9 + ky * 3 + kx] = plane[(yy - 1) * w + xx - 1];
                    }
                }
            }
        }
    }
    cols
}

/// Scatters patch-matrix gradients back onto the input (inverse of [`im2col`]).
fn col2im(dcols: &[f64], inp: Shape) -> Vec<f64> {
    let (c_in, h, w) = (inp.channels, inp.height, inp.width);
    let k = c_in * 9;
    let mut dx = vec![0.0; inp.len()];
    for r in 0..h {
        for col in 0..w {
            let row = &dcols[(r * w + col) * k..(r * w + col + 1) * k];
            for c in 0..c_in {
                let plane = &mut dx[c * h * w..(c + 1) * h * w];
                for ky in 0..3 {
                    let yy = r + ky;
                    if yy == 0 || yy > h {
                        continue;
                    }
                    for kx in 0..3 {
                        let xx = col + kx;
                        if xx == 0 || xx > w {
                            continue;
                        }
                        plane[(yy - 1) * w + xx - 1] += row[c * 9 + ky * 3 + kx];
                    }
                }
            }
        }
    }
    dx
}

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a4, b4) = (a[..n].chunks_exact(4), b[..n].chunks_exact(4));
    let tail: f64 = a4
        .remainder()
        .iter()
        .zip(b4.remainder())
        .map(|(x, y)| x * y)
        .sum();
    let mut acc = [0.0; 4];
    for (x, y) in a4.zip(b4) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn conv_forward(x: &[f64], w: &[f64], b: &[f64], inp: Shape, out: Shape) -> Vec<f64> {
    let pixels = inp.height * inp.width;
    let k = inp.channels * 9;
    let cols = im2col(x, inp);
    let mut y = vec![0.0; out.len()];
    for o in 0..out.channels {
        let wo = &w[o * k..(o + 1) * k];
        for (p, yv) in y[o * pixels..(o + 1) * pixels].iter_mut().enumerate() {
            *yv = b[o] + dot(wo, &cols[p * k..(p + 1) * k]);
        }
    }
    y
}

fn conv_backward(
    x: &[f64],
    w: &[f64],
    g: &[f64],
    inp: Shape,
    out: Shape,
    need_dx: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let pixels = inp.height * inp.width;
    let k = inp.channels * 9;
    let cols = im2col(x, inp);
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; out.channels];
    let mut dcols = if need_dx {
        vec![0.0; cols.len()]
    } else {
        Vec::new()
    };
    for o in 0..out.channels {
        let go = &g[o * pixels..(o + 1) * pixels];
        db[o] = go.iter().sum();
        let dwo = &mut dw[o * k..(o + 1) * k];
        let wo = &w[o * k..(o + 1) * k];
        for (p, &gv) in go.iter().enumerate() {
            if gv == 0.0 {
                continue;
            }
            for (d, &c) in dwo.iter_mut().zip(&cols[p * k..(p + 1) * k]) {
                *d += gv * c;
            }
            if need_dx {
                for (d, &wv) in dcols[p * k..(p + 1) * k].iter_mut().zip(wo) {
                    *d += gv * wv;
                }
            }
        }
    }
    let dx = if need_dx {
        col2im(&dcols, inp)
    } else {
        Vec::new()
    };
    (dw, db, dx)
}

fn dense_forward(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bo)| bo + dot(&w[o * n_in..(o + 1) * n_in], x))
        .collect()
}

fn dense_backward(
    x: &[f64],
    w: &[f64],
    g: &[f64],
    need_dx: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n_in = x.len();
    let mut dw = vec![0.0; w.len()];
    let mut dx = if need_dx { vec![0.0; n_in] } else { Vec::new() };
    for (o, &go) in g.iter().enumerate() {
        let row = o * n_in..(o + 1) * n_in;
        for (d, &xv) in dw[row.clone()].iter_mut().zip(x) {
            *d = go * xv;
        }
        if need_dx && go != 0.0 {
            for (d, &wv) in dx.iter_mut().zip(&w[row]) {
                *d += go * wv;
            }
        }
    }
    (dw, g.to_vec(), dx)
}

fn pool_forward(x: &[f64], inp: Shape, out: Shape) -> (Vec<f64>, Vec<usize>) {
    let mut y = Vec::with_capacity(out.len());
    let mut idx = Vec::with_capacity(out.len());
    for c in 0..out.channels {
        for r in 0..out.height {
            for col in 0..out.width {
                let mut best_i = c * inp.height * inp.width + 2 * r * inp.width + 2 * col;
                let mut best = x[best_i];
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let i = c * inp.height * inp.width + (2 * r + dr) * inp.width + 2 * col + dc;
                    // Strict comparison: ties stay with the first element.
                    if x[i] > best {
                        best = x[i];
                        best_i = i;
                    }
                }
                y.push(best);
                idx.push(best_i);
            }
        }
    }
    (y, idx)
}

/// `−log softmax(logits)[class]`, max-subtracted for stability.
pub fn loss_xent(logits: &[f64], class_index: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[class_index]
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Gradient of [`loss_xent`] w.r.t. the logits: `softmax − one_hot`.
pub fn xent_grad(logits: &[f64], class_index: usize) -> Vec<f64> {
    let mut p = softmax(logits);
    p[class_index] -= 1.0;
    p
}
