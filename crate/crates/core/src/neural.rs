//! Dense f64 tensors and the layers of the feature encoder and its heads, each
//! with a hand-written backward pass; losses, ADAM, and a central-difference
//! gradient checker.
//!
//! Layers do not own their weights. A layer records slot indices into the
//! `values` of a [`ParamGroup`], and backward passes accumulate into the
//! matching `grads`. Everything operates on one sample at a time; batch losses
//! are means, so per-sample gradients are scaled by `1 / batch` by the caller.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::rng::Rng;
use crate::{Error, Result};

pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch(format!("zero dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment buffers plus the bias-correction step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn for_values(values: &[Tensor]) -> Self {
        Self {
            m: values.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            v: values.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            step: 0,
        }
    }
}

/// Bias-corrected ADAM update of `values` in place.
pub fn adam_update(
    values: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for (i, p) in values.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        for (mk, &gk) in m.iter_mut().zip(g) {
            *mk = cfg.beta1 * *mk + (1.0 - cfg.beta1) * gk;
        }
        let v = state.v[i].data_mut();
        for (vk, &gk) in v.iter_mut().zip(g) {
            *vk = cfg.beta2 * *vk + (1.0 - cfg.beta2) * gk * gk;
        }
        let (m, v) = (state.m[i].data(), state.v[i].data());
        for ((pk, &mk), &vk) in p.data_mut().iter_mut().zip(m).zip(v) {
            *pk -= lr * (mk / c1) / (math::sqrt(vk / c2) + cfg.epsilon);
        }
        p.check_finite("parameter after ADAM step")?;
    }
    Ok(())
}

/// Named parameters of one network part with gradient and ADAM buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroup {
    pub prefix: String,
    pub names: Vec<String>,
    pub values: Vec<Tensor>,
    pub grads: Vec<Tensor>,
    pub adam: AdamState,
}

impl ParamGroup {
    pub fn new(prefix: &str) -> Self {
        Self {
            prefix: prefix.into(),
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            adam: AdamState::for_values(&[]),
        }
    }

    /// Registers a parameter and returns its slot; the stored name is
    /// `prefix.local`.
    pub fn add(&mut self, local: &str, value: Tensor) -> usize {
        self.names.push(format!("{}.{local}", self.prefix));
        self.grads.push(Tensor::zeros(value.shape()));
        self.adam.m.push(Tensor::zeros(value.shape()));
        self.adam.v.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn scale_grad(&mut self, s: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn adam_step(&mut self, lr: f64, cfg: &AdamConfig) -> Result<()> {
        adam_update(&mut self.values, &self.grads, &mut self.adam, lr, cfg)
    }
}

pub fn adam_step(group: &mut ParamGroup, lr: f64, cfg: &AdamConfig) -> Result<()> {
    group.adam_step(lr, cfg)
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let a = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.range(-a, a);
    }
    t
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => math::tanh(z),
            Activation::Sigmoid => math::sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer `y = act(x W + b)` with `W` stored `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub weight: usize,
    pub bias: usize,
}

impl Dense {
    pub fn init(
        group: &mut ParamGroup,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let w = xavier_uniform(&[in_dim, out_dim], in_dim, out_dim, rng);
        let weight = group.add(&format!("{name}.weight"), w);
        let bias = group.add(&format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Self { in_dim, out_dim, activation, weight, bias }
    }

    pub fn forward(&self, params: &[Tensor], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let w = params[self.weight].data();
        let mut y = params[self.bias].data().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                math::axpy(xi, &w[i * self.out_dim..(i + 1) * self.out_dim], &mut y);
            }
        }
        for v in &mut y {
            *v = self.activation.apply(*v);
        }
        y
    }

    /// Accumulates parameter gradients given the forward input `x`, output
    /// `y` and upstream `dy`; returns `dx`.
    pub fn backward(&self, params: &[Tensor], grads: &mut [Tensor], x: &[f64], y: &[f64], dy: &[f64]) -> Vec<f64> {
        let dz: Vec<f64> = dy
            .iter()
            .zip(y)
            .map(|(&g, &yk)| g * self.activation.derivative_from_output(yk))
            .collect();
        let out = self.out_dim;
        {
            let dw = grads[self.weight].data_mut();
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    math::axpy(xi, &dz, &mut dw[i * out..(i + 1) * out]);
                }
            }
        }
        math::axpy(1.0, &dz, grads[self.bias].data_mut());
        let w = params[self.weight].data();
        (0..self.in_dim).map(|i| math::dot(&w[i * out..(i + 1) * out], &dz)).collect()
    }
}

/// Batched dense layer over `x: [B, in]`.
pub fn dense(x: &Tensor, layer: &Dense, params: &[Tensor]) -> Result<Tensor> {
    match x.shape() {
        [b, d] if *d == layer.in_dim => {
            let data = x.data().chunks(*d).flat_map(|row| layer.forward(params, row)).collect();
            Tensor::new(vec![*b, layer.out_dim], data)
        }
        s => Err(Error::ShapeMismatch(format!("dense expects [B, {}], got {s:?}", layer.in_dim))),
    }
}

/// 3x3 stride-1 zero-padded convolution, ReLU, then 2x2 max pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dBlock {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: usize,
    pub bias: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvCache {
    pub height: usize,
    pub width: usize,
    cols: Vec<f64>,
    /// ReLU output before pooling, `[C_out, H, W]`.
    pub activated: Vec<f64>,
    /// Flat index into `activated` chosen by each pooling window.
    pub argmax: Vec<u32>,
}

const TAPS: usize = 9;

fn im2col(x: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut cols = vec![0.0; channels * TAPS * hw];
    for c in 0..channels {
        let plane = &x[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((c * TAPS) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y + ky;
                    if sy < 1 || sy > h {
                        continue;
                    }
                    let src = &plane[(sy - 1) * w..sy * w];
                    let dst = &mut row[y * w..(y + 1) * w];
                    // dst[x] = src[x + kx - 1] where in range
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut x = vec![0.0; channels * hw];
    for c in 0..channels {
        let plane = &mut x[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((c * TAPS) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y + ky;
                    if sy < 1 || sy > h {
                        continue;
                    }
                    let dst = &mut plane[(sy - 1) * w..sy * w];
                    let src = &row[y * w..(y + 1) * w];
                    match kx {
                        0 => math::axpy(1.0, &src[1..], &mut dst[..w - 1]),
                        1 => math::axpy(1.0, src, dst),
                        _ => math::axpy(1.0, &src[..w - 1], &mut dst[1..]),
                    }
                }
            }
        }
    }
    x
}

/// Pre-activation output of a 3x3 stride-1 zero-padded convolution.
/// `weight` is `[C_out, C_in * 9]` with taps in `(ky, kx)` row-major order.
pub fn conv3x3(x: &[f64], in_channels: usize, h: usize, w: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let cols = im2col(x, in_channels, h, w);
    conv_from_cols(&cols, in_channels, h * w, weight, bias)
}

fn conv_from_cols(cols: &[f64], in_channels: usize, hw: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let k = in_channels * TAPS;
    let out_channels = bias.len();
    let mut out = vec![0.0; out_channels * hw];
    for co in 0..out_channels {
        let dst = &mut out[co * hw..(co + 1) * hw];
        dst.iter_mut().for_each(|v| *v = bias[co]);
        for (j, &wv) in weight[co * k..(co + 1) * k].iter().enumerate() {
            math::axpy(wv, &cols[j * hw..(j + 1) * hw], dst);
        }
    }
    out
}

impl Conv2dBlock {
    pub fn init(group: &mut ParamGroup, name: &str, in_channels: usize, out_channels: usize, rng: &mut Rng) -> Self {
        let w = xavier_uniform(
            &[out_channels, in_channels * TAPS],
            in_channels * TAPS,
            out_channels * TAPS,
            rng,
        );
        let weight = group.add(&format!("{name}.weight"), w);
        let bias = group.add(&format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        Self { in_channels, out_channels, weight, bias }
    }

    /// Output spatial size for an `h x w` input.
    pub fn output_size(h: usize, w: usize) -> (usize, usize) {
        (h / 2, w / 2)
    }

    pub fn forward(&self, params: &[Tensor], x: &[f64], h: usize, w: usize) -> Result<(Vec<f64>, ConvCache)> {
        if h < 2 || w < 2 || x.len() != self.in_channels * h * w {
            return Err(Error::ShapeMismatch(format!(
                "conv block expects {}x{h}x{w} (h, w >= 2), got {} values",
                self.in_channels,
                x.len()
            )));
        }
        let hw = h * w;
        let cols = im2col(x, self.in_channels, h, w);
        let mut activated = conv_from_cols(
            &cols,
            self.in_channels,
            hw,
            params[self.weight].data(),
            params[self.bias].data(),
        );
        activated.iter_mut().for_each(|v| *v = v.max(0.0));
        let (oh, ow) = Self::output_size(h, w);
        let mut pooled = vec![0.0; self.out_channels * oh * ow];
        let mut argmax = vec![0u32; pooled.len()];
        for c in 0..self.out_channels {
            for y in 0..oh {
                for xo in 0..ow {
                    let base = c * hw + 2 * y * w + 2 * xo;
                    let mut best = base;
                    for idx in [base + 1, base + w, base + w + 1] {
                        if activated[idx] > activated[best] {
                            best = idx;
                        }
                    }
                    let o = (c * oh + y) * ow + xo;
                    pooled[o] = activated[best];
                    argmax[o] = best as u32;
                }
            }
        }
        Ok((pooled, ConvCache { height: h, width: w, cols, activated, argmax }))
    }

    /// Accumulates parameter gradients; returns the input gradient when
    /// `want_dx` is set.
    pub fn backward(
        &self,
        params: &[Tensor],
        grads: &mut [Tensor],
        cache: &ConvCache,
        dy: &[f64],
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let hw = cache.height * cache.width;
        let mut dpre = vec![0.0; self.out_channels * hw];
        for (o, &g) in dy.iter().enumerate() {
            let idx = cache.argmax[o] as usize;
            if cache.activated[idx] > 0.0 {
                dpre[idx] += g;
            }
        }
        let k = self.in_channels * TAPS;
        {
            let dw = grads[self.weight].data_mut();
            for co in 0..self.out_channels {
                let d = &dpre[co * hw..(co + 1) * hw];
                if d.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for j in 0..k {
                    dw[co * k + j] += math::dot(d, &cache.cols[j * hw..(j + 1) * hw]);
                }
            }
        }
        {
            let db = grads[self.bias].data_mut();
            for co in 0..self.out_channels {
                db[co] += dpre[co * hw..(co + 1) * hw].iter().sum::<f64>();
            }
        }
        if !want_dx {
            return None;
        }
        let w = params[self.weight].data();
        let mut dcols = vec![0.0; k * hw];
        for co in 0..self.out_channels {
            let d = &dpre[co * hw..(co + 1) * hw];
            for j in 0..k {
                let wv = w[co * k + j];
                if wv != 0.0 {
                    math::axpy(wv, d, &mut dcols[j * hw..(j + 1) * hw]);
                }
            }
        }
        Some(col2im(&dcols, self.in_channels, cache.height, cache.width))
    }
}

impl ConvCache {
    /// Appends the ReLU mask and pooling choices, which pin down the locally
    /// linear region the block operates in.
    pub fn kink_pattern(&self, out: &mut Vec<u32>) {
        out.extend(self.activated.iter().map(|&v| (v > 0.0) as u32));
        out.extend_from_slice(&self.argmax);
    }
}

/// Batched conv block over `x: [B, C, H, W]`.
pub fn conv2d_block(x: &Tensor, block: &Conv2dBlock, params: &[Tensor]) -> Result<Tensor> {
    match x.shape() {
        &[b, c, h, w] if c == block.in_channels => {
            let (oh, ow) = Conv2dBlock::output_size(h, w);
            let mut data = Vec::with_capacity(b * block.out_channels * oh * ow);
            for sample in x.data().chunks(c * h * w) {
                data.extend(block.forward(params, sample, h, w)?.0);
            }
            Tensor::new(vec![b, block.out_channels, oh, ow], data)
        }
        s => Err(Error::ShapeMismatch(format!(
            "conv block expects [B, {}, H, W], got {s:?}",
            block.in_channels
        ))),
    }
}

/// Single-layer LSTM. Gate blocks in the 4H axis are ordered input, forget,
/// cell candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    pub input_dim: usize,
    pub units: usize,
    pub w_ih: usize,
    pub w_hh: usize,
    pub bias: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmCache {
    pub steps: usize,
    xs: Vec<f64>,
    /// `h_0..h_T`, `(T + 1) * H`.
    hs: Vec<f64>,
    cs: Vec<f64>,
    /// Activated gates per step, `T * 4H`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl Lstm {
    pub fn init(group: &mut ParamGroup, name: &str, input_dim: usize, units: usize, rng: &mut Rng) -> Self {
        let g = 4 * units;
        let w_ih = group.add(&format!("{name}.w_ih"), xavier_uniform(&[input_dim, g], input_dim, g, rng));
        let w_hh = group.add(&format!("{name}.w_hh"), xavier_uniform(&[units, g], units, g, rng));
        let mut b = Tensor::zeros(&[g]);
        b.data_mut()[units..2 * units].iter_mut().for_each(|v| *v = 1.0);
        let bias = group.add(&format!("{name}.bias"), b);
        Self { input_dim, units, w_ih, w_hh, bias }
    }

    /// Runs the recurrence over `seq` (`T * D`, step-major) from zero state
    /// and returns the final hidden state.
    pub fn forward(&self, params: &[Tensor], seq: &[f64]) -> Result<(Vec<f64>, LstmCache)> {
        let (d, h) = (self.input_dim, self.units);
        if seq.is_empty() || seq.len() % d != 0 {
            return Err(Error::ShapeMismatch(format!(
                "LSTM expects T x {d} values with T >= 1, got {}",
                seq.len()
            )));
        }
        let steps = seq.len() / d;
        let (w_ih, w_hh, b) = (params[self.w_ih].data(), params[self.w_hh].data(), params[self.bias].data());
        let g4 = 4 * h;
        let mut hs = vec![0.0; (steps + 1) * h];
        let mut cs = vec![0.0; (steps + 1) * h];
        let mut gates = vec![0.0; steps * g4];
        let mut tanh_c = vec![0.0; steps * h];
        for t in 0..steps {
            let x = &seq[t * d..(t + 1) * d];
            let z = &mut gates[t * g4..(t + 1) * g4];
            z.copy_from_slice(b);
            for (k, &xk) in x.iter().enumerate() {
                if xk != 0.0 {
                    math::axpy(xk, &w_ih[k * g4..(k + 1) * g4], z);
                }
            }
            for j in 0..h {
                let hj = hs[t * h + j];
                if hj != 0.0 {
                    math::axpy(hj, &w_hh[j * g4..(j + 1) * g4], z);
                }
            }
            for j in 0..h {
                let i = math::sigmoid(z[j]);
                let f = math::sigmoid(z[h + j]);
                let g = math::tanh(z[2 * h + j]);
                let o = math::sigmoid(z[3 * h + j]);
                z[j] = i;
                z[h + j] = f;
                z[2 * h + j] = g;
                z[3 * h + j] = o;
                let c = f * cs[t * h + j] + i * g;
                cs[(t + 1) * h + j] = c;
                let tc = math::tanh(c);
                tanh_c[t * h + j] = tc;
                hs[(t + 1) * h + j] = o * tc;
            }
        }
        let last = hs[steps * h..].to_vec();
        Ok((last, LstmCache { steps, xs: seq.to_vec(), hs, cs, gates, tanh_c }))
    }

    pub fn backward(
        &self,
        params: &[Tensor],
        grads: &mut [Tensor],
        cache: &LstmCache,
        dh_last: &[f64],
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let (d, h) = (self.input_dim, self.units);
        let g4 = 4 * h;
        let (w_ih, w_hh) = (params[self.w_ih].data(), params[self.w_hh].data());
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; g4];
        let mut dxs = if want_dx { vec![0.0; cache.steps * d] } else { Vec::new() };
        for t in (0..cache.steps).rev() {
            let gt = &cache.gates[t * g4..(t + 1) * g4];
            let c_prev = &cache.cs[t * h..(t + 1) * h];
            for j in 0..h {
                let (i, f, g, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                let tc = cache.tanh_c[t * h + j];
                let d_o = dh[j] * tc;
                let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
                dz[j] = dcj * g * i * (1.0 - i);
                dz[h + j] = dcj * c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dcj * i * (1.0 - g * g);
                dz[3 * h + j] = d_o * o * (1.0 - o);
                dc[j] = dcj * f;
            }
            math::axpy(1.0, &dz, grads[self.bias].data_mut());
            let x = &cache.xs[t * d..(t + 1) * d];
            {
                let dw = grads[self.w_ih].data_mut();
                for (k, &xk) in x.iter().enumerate() {
                    if xk != 0.0 {
                        math::axpy(xk, &dz, &mut dw[k * g4..(k + 1) * g4]);
                    }
                }
            }
            let h_prev = &cache.hs[t * h..(t + 1) * h];
            {
                let dw = grads[self.w_hh].data_mut();
                for (j, &hj) in h_prev.iter().enumerate() {
                    if hj != 0.0 {
                        math::axpy(hj, &dz, &mut dw[j * g4..(j + 1) * g4]);
                    }
                }
            }
            if want_dx {
                for k in 0..d {
                    dxs[t * d + k] = math::dot(&w_ih[k * g4..(k + 1) * g4], &dz);
                }
            }
            for j in 0..h {
                dh[j] = math::dot(&w_hh[j * g4..(j + 1) * g4], &dz);
            }
        }
        want_dx.then_some(dxs)
    }
}

/// Batched LSTM over `seq: [T, B, D]`, returning final states `[B, H]`.
pub fn lstm_forward(seq: &Tensor, lstm: &Lstm, params: &[Tensor]) -> Result<Tensor> {
    match seq.shape() {
        &[t, b, d] if d == lstm.input_dim => {
            let mut out = Vec::with_capacity(b * lstm.units);
            for s in 0..b {
                let mut steps = Vec::with_capacity(t * d);
                for k in 0..t {
                    steps.extend_from_slice(&seq.data()[(k * b + s) * d..(k * b + s + 1) * d]);
                }
                out.extend(lstm.forward(params, &steps)?.0);
            }
            Tensor::new(vec![b, lstm.units], out)
        }
        s => Err(Error::ShapeMismatch(format!("LSTM expects [T, B, {}], got {s:?}", lstm.input_dim))),
    }
}

/// `-mean(t ln p + (1 - t) ln(1 - p))` with `p` clamped to `[eps, 1 - eps]`.
pub fn bce_loss(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            -(t * math::ln(p) + (1.0 - t) * math::ln(1.0 - p))
        })
        .sum::<f64>()
        / n
}

/// Derivative of [`bce_loss`] with respect to each prediction; zero where the
/// clamp is active.
pub fn bce_grad(pred: &[f64], target: &[f64]) -> Vec<f64> {
    let n = pred.len().max(1) as f64;
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| {
            if p <= BCE_EPSILON || p >= 1.0 - BCE_EPSILON {
                0.0
            } else {
                (p - t) / (p * (1.0 - p)) / n
            }
        })
        .collect()
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t)).sum::<f64>() / n
}

pub fn mse_grad(pred: &[f64], target: &[f64]) -> Vec<f64> {
    let n = pred.len().max(1) as f64;
    pred.iter().zip(target).map(|(&p, &t)| 2.0 * (p - t) / n).collect()
}

/// Channel plan, input size and temporal stage of a feature encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSpec {
    pub input_size: usize,
    pub channels: Vec<usize>,
    pub temporal: TemporalSpec,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TemporalSpec {
    /// Width columns of the last feature map become LSTM steps.
    Lstm { units: usize },
    /// Flattened feature map through a ReLU dense layer.
    Dense { units: usize },
}

impl EncoderSpec {
    pub fn output_dim(&self) -> usize {
        match self.temporal {
            TemporalSpec::Lstm { units } | TemporalSpec::Dense { units } => units,
        }
    }

    /// `(channels, height, width)` of the last conv map.
    pub fn map_shape(&self) -> (usize, usize, usize) {
        let mut s = self.input_size;
        for _ in &self.channels {
            s /= 2;
        }
        (*self.channels.last().unwrap_or(&1), s, s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Temporal {
    Lstm(Lstm),
    Dense(Dense),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub spec: EncoderSpec,
    pub blocks: Vec<Conv2dBlock>,
    pub temporal: Temporal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderCache {
    pub convs: Vec<ConvCache>,
    /// Input of the temporal stage: LSTM steps or the flattened map.
    temporal_input: Vec<f64>,
    lstm: Option<LstmCache>,
    pub features: Vec<f64>,
}

impl Encoder {
    pub fn init(spec: &EncoderSpec, group: &mut ParamGroup, rng: &mut Rng) -> Result<Self> {
        if spec.channels.is_empty() || spec.output_dim() == 0 {
            return Err(Error::InvalidConfig("encoder needs at least one block and one unit".into()));
        }
        let mut s = spec.input_size;
        for _ in &spec.channels {
            if s < 2 {
                return Err(Error::InvalidConfig(format!(
                    "input size {} too small for {} blocks",
                    spec.input_size,
                    spec.channels.len()
                )));
            }
            s /= 2;
        }
        let mut blocks = Vec::new();
        let mut cin = 1;
        for (i, &c) in spec.channels.iter().enumerate() {
            blocks.push(Conv2dBlock::init(group, &format!("conv{i}"), cin, c, rng));
            cin = c;
        }
        let (c, hf, wt) = spec.map_shape();
        let temporal = match spec.temporal {
            TemporalSpec::Lstm { units } => Temporal::Lstm(Lstm::init(group, "lstm", c * hf, units, rng)),
            TemporalSpec::Dense { units } => {
                Temporal::Dense(Dense::init(group, "fc", c * hf * wt, units, Activation::Relu, rng))
            }
        };
        Ok(Self { spec: spec.clone(), blocks, temporal })
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    /// Encodes one `input_size x input_size` image (row = frequency,
    /// column = time).
    pub fn forward(&self, params: &[Tensor], x: &[f64]) -> Result<(Vec<f64>, EncoderCache)> {
        let n = self.spec.input_size;
        if x.len() != n * n {
            return Err(Error::ShapeMismatch(format!("encoder expects {n}x{n} input, got {} values", x.len())));
        }
        let mut convs = Vec::with_capacity(self.blocks.len());
        let mut map = x.to_vec();
        let (mut h, mut w) = (n, n);
        for block in &self.blocks {
            let (out, cache) = block.forward(params, &map, h, w)?;
            convs.push(cache);
            map = out;
            (h, w) = Conv2dBlock::output_size(h, w);
        }
        let (c, hf, wt) = (self.spec.map_shape().0, h, w);
        match &self.temporal {
            Temporal::Lstm(lstm) => {
                let d = c * hf;
                let mut seq = vec![0.0; wt * d];
                for t in 0..wt {
                    for ch in 0..c {
                        for y in 0..hf {
                            seq[t * d + ch * hf + y] = map[(ch * hf + y) * wt + t];
                        }
                    }
                }
                let (features, cache) = lstm.forward(params, &seq)?;
                Ok((features.clone(), EncoderCache { convs, temporal_input: seq, lstm: Some(cache), features }))
            }
            Temporal::Dense(fc) => {
                let features = fc.forward(params, &map);
                Ok((features.clone(), EncoderCache { convs, temporal_input: map, lstm: None, features }))
            }
        }
    }

    pub fn features(&self, params: &[Tensor], x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(params, x)?.0)
    }

    pub fn backward(
        &self,
        params: &[Tensor],
        grads: &mut [Tensor],
        cache: &EncoderCache,
        dfeat: &[f64],
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let (c, hf, wt) = self.spec.map_shape();
        let dmap = match &self.temporal {
            Temporal::Lstm(lstm) => {
                let lc = cache.lstm.as_ref().expect("LSTM cache");
                let dseq = lstm.backward(params, grads, lc, dfeat, true).unwrap_or_default();
                let d = c * hf;
                let mut dmap = vec![0.0; c * hf * wt];
                for t in 0..wt {
                    for ch in 0..c {
                        for y in 0..hf {
                            dmap[(ch * hf + y) * wt + t] = dseq[t * d + ch * hf + y];
                        }
                    }
                }
                dmap
            }
            Temporal::Dense(fc) => fc.backward(params, grads, &cache.temporal_input, &cache.features, dfeat),
        };
        let mut d = dmap;
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let need = want_dx || i > 0;
            match block.backward(params, grads, &cache.convs[i], &d, need) {
                Some(dx) => d = dx,
                None => return None,
            }
        }
        Some(d)
    }

    pub fn kink_pattern(&self, cache: &EncoderCache, out: &mut Vec<u32>) {
        for c in &cache.convs {
            c.kink_pattern(out);
        }
        if let Temporal::Dense(_) = self.temporal {
            out.extend(cache.features.iter().map(|&v| (v > 0.0) as u32));
        }
    }
}

/// Two-layer head `in -> hidden (ReLU) -> 1 (activation)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub hidden: Dense,
    pub output: Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadCache {
    pub hidden: Vec<f64>,
    pub output: f64,
}

impl Head {
    pub fn init(group: &mut ParamGroup, in_dim: usize, hidden: usize, activation: Activation, rng: &mut Rng) -> Self {
        Self {
            hidden: Dense::init(group, "fc0", in_dim, hidden, Activation::Relu, rng),
            output: Dense::init(group, "fc1", hidden, 1, activation, rng),
        }
    }

    pub fn forward(&self, params: &[Tensor], feat: &[f64]) -> HeadCache {
        let hidden = self.hidden.forward(params, feat);
        let output = self.output.forward(params, &hidden)[0];
        HeadCache { hidden, output }
    }

    /// Accumulates head gradients for upstream `dout`; returns `d feat`.
    pub fn backward(&self, params: &[Tensor], grads: &mut [Tensor], feat: &[f64], cache: &HeadCache, dout: f64) -> Vec<f64> {
        let dh = self.output.backward(params, grads, &cache.hidden, &[cache.output], &[dout]);
        self.hidden.backward(params, grads, feat, &cache.hidden, &dh)
    }

    pub fn kink_pattern(&self, cache: &HeadCache, out: &mut Vec<u32>) {
        out.extend(cache.hidden.iter().map(|&v| (v > 0.0) as u32));
    }
}

/// A scalar function of a list of tensors with an analytic gradient.
pub trait Differentiable {
    /// Objective value; appends a description of the piecewise-linear
    /// region (ReLU masks, pooling choices) to `kinks`.
    fn loss(&self, values: &[Tensor], kinks: &mut Vec<u32>) -> f64;
    fn gradient(&self, values: &[Tensor]) -> Vec<Tensor>;
}

/// Denominator floor guarding `0 / 0` when both gradients vanish.
pub const GRADCHECK_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates probed per tensor; larger tensors are subsampled.
    pub max_probes_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-4, tolerance: 1e-4, max_probes_per_tensor: 64, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<(usize, usize)>,
    pub probes: usize,
    /// Probes skipped because `theta +- h` crosses a kink.
    pub skipped: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.probes > 0 && self.max_rel_error <= self.tolerance
    }
}

/// Compares the analytic gradient with central differences at `values`.
pub fn grad_check(f: &dyn Differentiable, values: &[Tensor], cfg: &GradCheckConfig) -> GradCheckReport {
    let analytic = f.gradient(values);
    let mut base_kinks = Vec::new();
    f.loss(values, &mut base_kinks);
    let mut rng = Rng::new(cfg.seed);
    let mut work = values.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        probes: 0,
        skipped: 0,
        tolerance: cfg.tolerance,
    };
    let mut kinks = Vec::with_capacity(base_kinks.len());
    for ti in 0..values.len() {
        let n = values[ti].len();
        let coords: Vec<usize> = if n <= cfg.max_probes_per_tensor {
            (0..n).collect()
        } else {
            let mut all: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut all);
            all.truncate(cfg.max_probes_per_tensor);
            all
        };
        for k in coords {
            let orig = values[ti].data()[k];
            work[ti].data_mut()[k] = orig + cfg.step;
            kinks.clear();
            let lp = f.loss(&work, &mut kinks);
            let same_p = kinks == base_kinks;
            work[ti].data_mut()[k] = orig - cfg.step;
            kinks.clear();
            let lm = f.loss(&work, &mut kinks);
            let same_m = kinks == base_kinks;
            work[ti].data_mut()[k] = orig;
            if !(same_p && same_m) {
                report.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * cfg.step);
            let err = relative_error(analytic[ti].data()[k], numeric);
            report.probes += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((ti, k));
            }
        }
    }
    report
}

/// Small randomized instances of each layer and loss for gradient checking.
/// Every fragment's last tensor is its input, so input gradients are checked
/// alongside parameter gradients.
pub mod fragments {
    use super::*;

    fn normal_tensor(shape: &[usize], rng: &mut Rng, scale: f64) -> Tensor {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = scale * rng.normal();
        }
        t
    }

    fn project(y: &[f64], r: &[f64]) -> f64 {
        y.iter().zip(r).map(|(a, b)| a * b).sum()
    }

    fn input_grad(shape: &[usize], dx: Vec<f64>) -> Tensor {
        Tensor::new(shape.to_vec(), dx).expect("input gradient shape")
    }

    /// `sum(r * act(x W + b))`.
    pub struct DenseFragment {
        pub layer: Dense,
        pub projection: Vec<f64>,
    }

    impl DenseFragment {
        /// For ReLU the instance is resampled until every pre-activation is
        /// farther than `10 h` from the kink.
        pub fn random(seed: u64, in_dim: usize, out_dim: usize, activation: Activation, step: f64) -> (Self, Vec<Tensor>) {
            let mut rng = Rng::new(seed);
            loop {
                let mut g = ParamGroup::new("dense");
                let layer = Dense::init(&mut g, "fc", in_dim, out_dim, activation, &mut rng);
                let mut values = g.values;
                values[layer.bias] = normal_tensor(&[out_dim], &mut rng, 0.5);
                values.push(normal_tensor(&[in_dim], &mut rng, 1.0));
                let projection = (0..out_dim).map(|_| rng.normal()).collect();
                let frag = Self { layer, projection };
                if activation != Activation::Relu || frag.min_abs_pre(&values) > 10.0 * step {
                    return (frag, values);
                }
            }
        }

        fn min_abs_pre(&self, values: &[Tensor]) -> f64 {
            let lin = Dense { activation: Activation::Identity, ..self.layer.clone() };
            lin.forward(values, values.last().unwrap().data())
                .iter()
                .fold(f64::INFINITY, |m, v| m.min(v.abs()))
        }
    }

    impl Differentiable for DenseFragment {
        fn loss(&self, values: &[Tensor], kinks: &mut Vec<u32>) -> f64 {
            let y = self.layer.forward(values, values.last().unwrap().data());
            if self.layer.activation == Activation::Relu {
                kinks.extend(y.iter().map(|&v| (v > 0.0) as u32));
            }
            project(&y, &self.projection)
        }

        fn gradient(&self, values: &[Tensor]) -> Vec<Tensor> {
            let x = values.last().unwrap();
            let y = self.layer.forward(values, x.data());
            let mut grads: Vec<Tensor> = values.iter().map(|t| Tensor::zeros(t.shape())).collect();
            let dx = self.layer.backward(values, &mut grads, x.data(), &y, &self.projection);
            *grads.last_mut().unwrap() = input_grad(x.shape(), dx);
            grads
        }
    }

    pub struct ConvFragment {
        pub block: Conv2dBlock,
        pub height: usize,
        pub width: usize,
        pub projection: Vec<f64>,
    }

    impl ConvFragment {
        pub fn random(seed: u64, cin: usize, cout: usize, h: usize, w: usize) -> (Self, Vec<Tensor>) {
            let mut rng = Rng::new(seed);
            let mut g = ParamGroup::new("conv");
            let block = Conv2dBlock::init(&mut g, "conv0", cin, cout, &mut rng);
            let mut values = g.values;
            values[block.bias] = normal_tensor(&[cout], &mut rng, 0.1);
            values.push(normal_tensor(&[cin, h, w], &mut rng, 1.0));
            let projection = (0..cout * (h / 2) * (w / 2)).map(|_| rng.normal()).collect();
            (Self { block, height: h, width: w, projection }, values)
        }
    }

    impl Differentiable for ConvFragment {
        fn loss(&self, values: &[Tensor], kinks: &mut Vec<u32>) -> f64 {
            let (y, cache) = self
                .block
                .forward(values, values.last().unwrap().data(), self.height, self.width)
                .expect("fragment shapes");
            cache.kink_pattern(kinks);
            project(&y, &self.projection)
        }

        fn gradient(&self, values: &[Tensor]) -> Vec<Tensor> {
            let x = values.last().unwrap();
            let (_, cache) = self.block.forward(values, x.data(), self.height, self.width).expect("fragment shapes");
            let mut grads: Vec<Tensor> = values.iter().map(|t| Tensor::zeros(t.shape())).collect();
            let dx = self.block.backward(values, &mut grads, &cache, &self.projection, true).unwrap();
            *grads.last_mut().unwrap() = input_grad(x.shape(), dx);
            grads
        }
    }

    pub struct LstmFragment {
        pub lstm: Lstm,
        pub projection: Vec<f64>,
    }

    impl LstmFragment {
        pub fn random(seed: u64, input_dim: usize, units: usize, steps: usize) -> (Self, Vec<Tensor>) {
            let mut rng = Rng::new(seed);
            let mut g = ParamGroup::new("lstm");
            let lstm = Lstm::init(&mut g, "lstm", input_dim, units, &mut rng);
            let mut values = g.values;
            values.push(normal_tensor(&[steps, input_dim], &mut rng, 1.0));
            let projection = (0..units).map(|_| rng.normal()).collect();
            (Self { lstm, projection }, values)
        }
    }

    impl Differentiable for LstmFragment {
        fn loss(&self, values: &[Tensor], _kinks: &mut Vec<u32>) -> f64 {
            let (h, _) = self.lstm.forward(values, values.last().unwrap().data()).expect("fragment shapes");
            project(&h, &self.projection)
        }

        fn gradient(&self, values: &[Tensor]) -> Vec<Tensor> {
            let x = values.last().unwrap();
            let (_, cache) = self.lstm.forward(values, x.data()).expect("fragment shapes");
            let mut grads: Vec<Tensor> = values.iter().map(|t| Tensor::zeros(t.shape())).collect();
            let dx = self.lstm.backward(values, &mut grads, &cache, &self.projection, true).unwrap();
            *grads.last_mut().unwrap() = input_grad(x.shape(), dx);
            grads
        }
    }

    /// BCE of sigmoid probabilities; the checked input is the logit vector.
    pub struct BceFragment {
        pub target: Vec<f64>,
    }

    impl BceFragment {
        pub fn random(seed: u64, n: usize) -> (Self, Vec<Tensor>) {
            let mut rng = Rng::new(seed);
            let target = (0..n).map(|_| (rng.below(2)) as f64).collect();
            (Self { target }, vec![normal_tensor(&[n], &mut rng, 2.0)])
        }
    }

    impl Differentiable for BceFragment {
        fn loss(&self, values: &[Tensor], _kinks: &mut Vec<u32>) -> f64 {
            let p: Vec<f64> = values[0].data().iter().map(|&z| math::sigmoid(z)).collect();
            bce_loss(&p, &self.target)
        }

        fn gradient(&self, values: &[Tensor]) -> Vec<Tensor> {
            let p: Vec<f64> = values[0].data().iter().map(|&z| math::sigmoid(z)).collect();
            let dp = bce_grad(&p, &self.target);
            let dz = dp.iter().zip(&p).map(|(g, p)| g * p * (1.0 - p)).collect();
            vec![input_grad(values[0].shape(), dz)]
        }
    }

    pub struct MseFragment {
        pub target: Vec<f64>,
    }

    impl MseFragment {
        pub fn random(seed: u64, n: usize) -> (Self, Vec<Tensor>) {
            let mut rng = Rng::new(seed);
            let target = (0..n).map(|_| rng.normal()).collect();
            (Self { target }, vec![normal_tensor(&[n], &mut rng, 1.0)])
        }
    }

    impl Differentiable for MseFragment {
        fn loss(&self, values: &[Tensor], _kinks: &mut Vec<u32>) -> f64 {
            mse_loss(values[0].data(), &self.target)
        }

        fn gradient(&self, values: &[Tensor]) -> Vec<Tensor> {
            vec![input_grad(values[0].shape(), mse_grad(values[0].data(), &self.target))]
        }
    }

    /// Conv blocks plus LSTM, followed by a random projection of the features.
    pub struct EncoderFragment {
        pub encoder: Encoder,
        pub projection: Vec<f64>,
    }

    impl EncoderFragment {
        pub fn random(seed: u64, spec: &EncoderSpec) -> (Self, Vec<Tensor>) {
            let mut rng = Rng::new(seed);
            let mut g = ParamGroup::new("encoder");
            let encoder = Encoder::init(spec, &mut g, &mut rng).expect("valid fragment spec");
            let mut values = g.values;
            for b in &encoder.blocks {
                values[b.bias] = normal_tensor(values[b.bias].shape(), &mut rng, 0.1);
            }
            let n = spec.input_size;
            values.push(normal_tensor(&[n, n], &mut rng, 1.0));
            let projection = (0..spec.output_dim()).map(|_| rng.normal()).collect();
            (Self { encoder, projection }, values)
        }

        /// Two blocks on a 16x16 input feeding a 4-unit LSTM.
        pub fn tiny_spec() -> EncoderSpec {
            EncoderSpec { input_size: 16, channels: vec![2, 3], temporal: TemporalSpec::Lstm { units: 4 } }
        }
    }

    impl Differentiable for EncoderFragment {
        fn loss(&self, values: &[Tensor], kinks: &mut Vec<u32>) -> f64 {
            let (f, cache) = self.encoder.forward(values, values.last().unwrap().data()).expect("fragment shapes");
            self.encoder.kink_pattern(&cache, kinks);
            project(&f, &self.projection)
        }

        fn gradient(&self, values: &[Tensor]) -> Vec<Tensor> {
            let x = values.last().unwrap();
            let (_, cache) = self.encoder.forward(values, x.data()).expect("fragment shapes");
            let mut grads: Vec<Tensor> = values.iter().map(|t| Tensor::zeros(t.shape())).collect();
            let dx = self.encoder.backward(values, &mut grads, &cache, &self.projection, true).unwrap();
            *grads.last_mut().unwrap() = input_grad(x.shape(), dx);
            grads
        }
    }

    /// Runs every fragment kind for `seeds` seeds and returns
    /// `(name, worst report)` per kind.
    pub fn check_all(seeds: u64, cfg: &GradCheckConfig) -> Vec<(&'static str, GradCheckReport)> {
        let mut out: Vec<(&'static str, GradCheckReport)> = Vec::new();
        let mut record = |name: &'static str, r: GradCheckReport| {
            match out.iter_mut().find(|(n, _)| *n == name) {
                Some((_, worst)) => {
                    if r.max_rel_error > worst.max_rel_error || !r.passed() {
                        let (probes, skipped) = (worst.probes + r.probes, worst.skipped + r.skipped);
                        *worst = GradCheckReport { probes, skipped, ..r };
                    } else {
                        worst.probes += r.probes;
                        worst.skipped += r.skipped;
                    }
                }
                None => out.push((name, r)),
            }
        };
        for s in 0..seeds {
            let c = GradCheckConfig { seed: s, ..*cfg };
            let (f, v) = DenseFragment::random(s, 4, 3, Activation::Identity, cfg.step);
            record("dense", grad_check(&f, &v, &c));
            let (f, v) = DenseFragment::random(s, 4, 3, Activation::Relu, cfg.step);
            record("dense_relu", grad_check(&f, &v, &c));
            let (f, v) = DenseFragment::random(s, 4, 3, Activation::Tanh, cfg.step);
            record("dense_tanh", grad_check(&f, &v, &c));
            let (f, v) = DenseFragment::random(s, 4, 3, Activation::Sigmoid, cfg.step);
            record("dense_sigmoid", grad_check(&f, &v, &c));
            let (f, v) = ConvFragment::random(s, 2, 3, 6, 6);
            record("conv_block", grad_check(&f, &v, &c));
            let (f, v) = LstmFragment::random(s, 3, 2, 4);
            record("lstm", grad_check(&f, &v, &c));
            let (f, v) = BceFragment::random(s, 8);
            record("bce_loss", grad_check(&f, &v, &c));
            let (f, v) = MseFragment::random(s, 8);
            record("mse_loss", grad_check(&f, &v, &c));
            let (f, v) = EncoderFragment::random(s, &EncoderFragment::tiny_spec());
            record("encoder", grad_check(&f, &v, &c));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::fragments::*;
    use super::*;

    fn group_with(name: &str, shape: &[usize], data: Vec<f64>) -> (ParamGroup, usize) {
        let mut g = ParamGroup::new("t");
        let slot = g.add(name, Tensor::new(shape.to_vec(), data).unwrap());
        (g, slot)
    }

    #[test]
    fn tensor_rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
        let t = Tensor::new(vec![1], vec![f64::NAN]).unwrap();
        assert!(matches!(t.check_finite("x"), Err(Error::NonFinite(_))));
    }

    #[test]
    fn identity_dense_is_identity() {
        let mut g = ParamGroup::new("d");
        let mut rng = Rng::new(0);
        let layer = Dense::init(&mut g, "fc", 3, 3, Activation::Identity, &mut rng);
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        g.values[layer.weight] = Tensor::new(vec![3, 3], eye).unwrap();
        let x = [0.3, -1.2, 4.0];
        assert_eq!(layer.forward(&g.values, &x), x.to_vec());
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        let batch = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = dense(&batch, &layer, &g.values).unwrap();
        assert_eq!(y.data(), batch.data());
        assert!(dense(&Tensor::zeros(&[2, 4]), &layer, &g.values).is_err());
    }

    #[test]
    fn conv_of_ones_counts_in_bounds_taps() {
        // 2x2 all-ones input, all-ones kernel: every output sees the 4 taps
        // that remain inside the padded image.
        let out = conv3x3(&[1.0; 4], 1, 2, 2, &[1.0; 9], &[0.0]);
        let mut oracle = [0.0; 4];
        for (i, o) in oracle.iter_mut().enumerate() {
            let (y, x) = ((i / 2) as i64, (i % 2) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if (0..2).contains(&(y + dy)) && (0..2).contains(&(x + dx)) {
                        *o += 1.0;
                    }
                }
            }
        }
        assert_eq!(out, oracle.to_vec());
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = Rng::new(3);
        let (cin, cout, h, w) = (2, 3, 5, 4);
        let x: Vec<f64> = (0..cin * h * w).map(|_| rng.normal()).collect();
        let wts: Vec<f64> = (0..cout * cin * 9).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..cout).map(|_| rng.normal()).collect();
        let out = conv3x3(&x, cin, h, w, &wts, &b);
        for co in 0..cout {
            for y in 0..h as i64 {
                for xx in 0..w as i64 {
                    let mut s = b[co];
                    for ci in 0..cin {
                        for ky in 0..3i64 {
                            for kx in 0..3i64 {
                                let (sy, sx) = (y + ky - 1, xx + kx - 1);
                                if sy >= 0 && sy < h as i64 && sx >= 0 && sx < w as i64 {
                                    s += wts[co * cin * 9 + ci * 9 + (ky * 3 + kx) as usize]
                                        * x[ci * h * w + (sy as usize) * w + sx as usize];
                                }
                            }
                        }
                    }
                    let got = out[co * h * w + y as usize * w + xx as usize];
                    assert!((got - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn four_blocks_reduce_224_to_14() {
        let mut g = ParamGroup::new("e");
        let mut rng = Rng::new(1);
        let mut x = Tensor::zeros(&[1, 1, 224, 224]);
        let mut cin = 1;
        for (i, c) in [16, 32, 64, 128].into_iter().enumerate() {
            let block = Conv2dBlock::init(&mut g, &format!("conv{i}"), cin, c, &mut rng);
            x = conv2d_block(&x, &block, &g.values).unwrap();
            cin = c;
        }
        assert_eq!(x.shape(), &[1, 128, 14, 14]);
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_lstm_stays_zero() {
        let mut g = ParamGroup::new("l");
        let mut rng = Rng::new(2);
        let lstm = Lstm::init(&mut g, "lstm", 3, 2, &mut rng);
        for v in &mut g.values {
            v.fill(0.0);
        }
        let seq: Vec<f64> = (0..12).map(|i| i as f64 - 5.0).collect();
        let (h, _) = lstm.forward(&g.values, &seq).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
        assert!(lstm.forward(&g.values, &[]).is_err());
    }

    #[test]
    fn single_step_lstm_is_one_cell() {
        let mut g = ParamGroup::new("l");
        let mut rng = Rng::new(5);
        let lstm = Lstm::init(&mut g, "lstm", 2, 1, &mut rng);
        let x = [0.7, -0.4];
        let (h, _) = lstm.forward(&g.values, &x).unwrap();
        let (wih, b) = (g.values[lstm.w_ih].data(), g.values[lstm.bias].data());
        let z: Vec<f64> = (0..4).map(|k| b[k] + x[0] * wih[k] + x[1] * wih[4 + k]).collect();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let c = sig(z[0]) * z[2].tanh();
        assert!((h[0] - sig(z[3]) * c.tanh()).abs() < 1e-12);
    }

    #[test]
    fn batched_lstm_matches_per_sample() {
        let mut g = ParamGroup::new("l");
        let mut rng = Rng::new(9);
        let lstm = Lstm::init(&mut g, "lstm", 2, 3, &mut rng);
        let (t, b) = (4, 2);
        let seq: Vec<f64> = (0..t * b * 2).map(|_| rng.normal()).collect();
        let out = lstm_forward(&Tensor::new(vec![t, b, 2], seq.clone()).unwrap(), &lstm, &g.values).unwrap();
        for s in 0..b {
            let steps: Vec<f64> = (0..t).flat_map(|k| seq[(k * b + s) * 2..(k * b + s + 1) * 2].to_vec()).collect();
            assert_eq!(&out.data()[s * 3..(s + 1) * 3], lstm.forward(&g.values, &steps).unwrap().0.as_slice());
        }
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(&[0.5; 6], &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]) - core::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(&[1.0, 0.0], &[1.0, 0.0]) < 1e-6);
        let oracle = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((bce_loss(&[0.9, 0.2], &[1.0, 0.0]) - oracle).abs() < 1e-12);
    }

    #[test]
    fn mse_values() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(mse_loss(&[1.0, 3.0], &[0.0, 0.0]), 5.0);
        let (p, t) = ([0.3, -1.0, 2.0], [1.0, 0.5, 2.5]);
        let g = mse_grad(&p, &t);
        for k in 0..3 {
            let h = 1e-6;
            let mut a = p;
            a[k] += h;
            let mut b = p;
            b[k] -= h;
            let fd = (mse_loss(&a, &t) - mse_loss(&b, &t)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8);
            assert!((g[k] - 2.0 * (p[k] - t[k]) / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let (mut g, slot) = group_with("x", &[3], vec![1.0, 2.0, 3.0]);
        g.grads[slot] = Tensor::new(vec![3], vec![0.5, -20.0, 0.0]).unwrap();
        g.adam_step(0.01, &AdamConfig::default()).unwrap();
        let v = g.values[slot].data();
        assert!((v[0] - 0.99).abs() < 1e-6);
        assert!((v[1] - 2.01).abs() < 1e-6);
        assert_eq!(v[2], 3.0);
        assert_eq!(g.adam.m[slot].data()[2], 0.0);
        assert_eq!(g.adam.step, 1);
    }

    #[test]
    fn adam_minimizes_quadratic_like_scalar_recurrence() {
        let (mut g, slot) = group_with("x", &[1], vec![0.0]);
        let cfg = AdamConfig::default();
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let grad = 2.0 * (g.values[slot].data()[0] - 3.0);
            g.grads[slot].data_mut()[0] = grad;
            g.adam_step(0.1, &cfg).unwrap();
            let gs = 2.0 * (x - 3.0);
            m = 0.9 * m + 0.1 * gs;
            v = 0.999 * v + 0.001 * gs * gs;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        let got = g.values[slot].data()[0];
        assert!((got - x).abs() < 1e-9);
        assert!((got - 3.0).abs() < 0.5);
    }

    #[test]
    fn linear_layer_gradcheck_is_tight() {
        for s in 0..20 {
            let (f, v) = DenseFragment::random(s, 4, 3, Activation::Identity, 1e-4);
            let r = grad_check(&f, &v, &GradCheckConfig::default());
            assert!(r.max_rel_error < 1e-6, "seed {s}: {r:?}");
        }
    }

    #[test]
    fn relu_dense_respects_margin() {
        let (f, v) = DenseFragment::random(4, 4, 3, Activation::Relu, 1e-4);
        let lin = Dense { activation: Activation::Identity, ..f.layer.clone() };
        let pre = lin.forward(&v, v.last().unwrap().data());
        assert!(pre.iter().all(|p| p.abs() > 1e-3));
    }

    #[test]
    fn every_fragment_passes_gradcheck() {
        let cfg = GradCheckConfig::default();
        for (name, r) in check_all(20, &cfg) {
            assert!(r.passed(), "{name}: {r:?}");
        }
    }

    #[test]
    fn group_names_are_prefixed() {
        let mut g = ParamGroup::new("encoder");
        let mut rng = Rng::new(0);
        Encoder::init(&EncoderFragment::tiny_spec(), &mut g, &mut rng).unwrap();
        assert!(g.names.iter().all(|n| n.starts_with("encoder.")));
        assert_eq!(g.find("encoder.lstm.w_ih"), Some(4));
        let lstm_bias = &g.values[g.find("encoder.lstm.bias").unwrap()];
        assert_eq!(&lstm_bias.data()[4..8], &[1.0; 4]);
    }
}
