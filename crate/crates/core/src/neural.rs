//! Learned configuration: a critic network regressing link outcomes from
//! (environment, configuration) features, and a generator network mapping
//! environment features to a configuration, trained through the frozen
//! critic.
//!
//! Environment features are the per-element cascade terms seen through the
//! MRC combiner. For transmit antenna `t` and element `i`:
//!
//! ```text
//! c_t     = vᴴ h_d[:, t]               direct SI
//! r_{i,t} = (vᴴ g2r[:, i]) g1[i, t]    reflected SI via element i
//! h_t     = h_fb[t]                    direct downlink
//! d_{i,t} = g2t[i] g1[i, t]            transmitted downlink via element i
//! ```
//!
//! so the SI amplitude is `Σ_t w_t (c_t + Σ_i r_{i,t} Γ_r,i)` and the
//! downlink amplitude is `Σ_t w_t (h_t + Σ_i d_{i,t} Γ_t,i)`. Each of the four
//! blocks is stored as interleaved (re, im) pairs divided by the block's RMS
//! magnitude over the training set.
//!
//! Configuration features, per element: `2ψ/π`, `cos θ_r`, `sin θ_r`,
//! `cos θ_t`, `sin θ_t`; then `w / √p_fd` as (re, im) pairs.
//!
//! The critic additionally sees interaction terms built from both: the
//! direct SI `Σ_t c_t w_t`, the direct downlink `Σ_t h_t w_t`, and per
//! element `Γ_r,i Σ_t r_{i,t} w_t` and `Γ_t,i Σ_t d_{i,t} w_t`, with
//! `β_r = cos ψ`, `β_t = sin ψ` in both modes. The SI and downlink
//! amplitudes are sums of these terms.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::channel::{gen_channels, ChannelSet, ScenarioSpec};
use crate::error::{Error, Result};
use crate::fdlink::{evaluate, mrc_combiner, LinkConfig};
use crate::numerics::{dot_h, mix_seed, CMatrix, Rng, C64, ZERO};
use crate::optim::{random_config, softplus_hinge, Objective, HINGE_SHARPNESS};
use crate::starris::{project, StarConfig, StarMode};

/// Values per element in the configuration encoding and the generator's raw
/// output.
pub const PER_ELEMENT: usize = 5;

const CHUNK: usize = 16;
const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output.
    fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Model(format!("unknown activation '{other}'"))),
        }
    }
}

/// Dense layer; `w` is `n_out × n_in` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub act: Activation,
}

impl Layer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|j| {
                let row = &self.w[j * self.n_in..(j + 1) * self.n_in];
                let z = row.iter().zip(x).fold(self.b[j], |acc, (a, b)| acc + a * b);
                self.act.apply(z)
            })
            .collect()
    }
}

/// Multilayer perceptron with a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Random initialization: Glorot-uniform for tanh and linear layers,
    /// He-uniform for rectifier layers, zero biases.
    pub fn new(dims: &[usize], hidden: Activation, rng: &mut Rng) -> Result<Mlp> {
        let mut net = Mlp::zeros(dims, hidden)?;
        for layer in &mut net.layers {
            let bound = match layer.act {
                Activation::Relu => (6.0 / layer.n_in as f64).sqrt(),
                _ => (6.0 / (layer.n_in + layer.n_out) as f64).sqrt(),
            };
            for w in &mut layer.w {
                *w = rng.uniform_range(-bound, bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize], hidden: Activation) -> Result<Mlp> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Dimension(format!("invalid layer dims {dims:?}")));
        }
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, d)| Layer {
                n_in: d[0],
                n_out: d[1],
                w: vec![0.0; d[0] * d[1]],
                b: vec![0.0; d[1]],
                act: if k + 1 == n { Activation::Linear } else { hidden },
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.n_out));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    /// # Panics
    /// If `x` does not match the input dimension.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "mlp input length");
        self.layers.iter().fold(x.to_vec(), |h, l| l.forward(&h))
    }

    /// Every layer's output, preceded by the input.
    pub fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(x.len(), self.input_dim(), "mlp input length");
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_vec());
        for l in &self.layers {
            let next = l.forward(trace.last().unwrap());
            trace.push(next);
        }
        trace
    }

    /// Back-propagates `upstream = ∂L/∂output` through a recorded trace,
    /// adding parameter gradients into `grads` when given. Returns `∂L/∂x`.
    pub fn backward(&self, trace: &[Vec<f64>], upstream: &[f64], mut grads: Option<&mut Grads>) -> Vec<f64> {
        assert_eq!(upstream.len(), self.output_dim(), "upstream length");
        let mut delta = upstream.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let out = &trace[k + 1];
            let inp = &trace[k];
            for (d, &y) in delta.iter_mut().zip(out) {
                *d *= layer.act.deriv_from_output(y);
            }
            if let Some(g) = grads.as_deref_mut() {
                for (j, &d) in delta.iter().enumerate() {
                    g.b[k][j] += d;
                    if d != 0.0 {
                        let row = &mut g.w[k][j * layer.n_in..(j + 1) * layer.n_in];
                        for (gw, &x) in row.iter_mut().zip(inp) {
                            *gw += d * x;
                        }
                    }
                }
            }
            let mut next = vec![0.0; layer.n_in];
            for (j, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &layer.w[j * layer.n_in..(j + 1) * layer.n_in];
                    for (n, &w) in next.iter_mut().zip(row) {
                        *n += w * d;
                    }
                }
            }
            delta = next;
        }
        delta
    }

    /// Gradients of `upstream · f(x)` with respect to all parameters and `x`.
    pub fn grad(&self, x: &[f64], upstream: &[f64]) -> (Grads, Vec<f64>) {
        let trace = self.forward_trace(x);
        let mut g = Grads::zeros_like(self);
        let dx = self.backward(&trace, upstream, Some(&mut g));
        (g, dx)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter count");
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            for w in l.w.iter_mut().chain(l.b.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|x| x.is_finite()))
    }
}

/// Parameter gradients shaped like an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Grads {
        Grads {
            w: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.w.iter_mut().zip(&other.w).chain(self.b.iter_mut().zip(&other.b)) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.w.iter_mut().chain(self.b.iter_mut()) {
            for x in v {
                *x *= s;
            }
        }
    }

    /// Same ordering as [`Mlp::params`].
    pub fn flat(&self) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|&x| x == 0.0)
    }
}

/// Adam with the usual bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
        }
    }

    /// Descends along `g`.
    pub fn step(&mut self, net: &mut Mlp, g: &Grads) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let params = layer
                .w
                .iter_mut()
                .zip(&g.w[k])
                .zip(self.m.w[k].iter_mut().zip(self.v.w[k].iter_mut()));
            let biases = layer
                .b
                .iter_mut()
                .zip(&g.b[k])
                .zip(self.m.b[k].iter_mut().zip(self.v.b[k].iter_mut()));
            for ((p, &gi), (m, v)) in params.chain(biases) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Layout and normalization of network inputs and critic labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCodec {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_elems: usize,
    pub mode: StarMode,
    pub phase_levels: usize,
    pub p_fd: f64,
    /// RMS magnitude of the c, r, h and d blocks.
    pub env_scales: [f64; 4],
    /// Mean and standard deviation of `[rate_dl, resid_si_db]`.
    pub label_mean: [f64; 2],
    pub label_std: [f64; 2],
}

/// Raw cascade terms `(c, r, h, d)` of one environment.
struct Cascade {
    c: Vec<C64>,
    r: Vec<C64>,
    h: Vec<C64>,
    d: Vec<C64>,
}

fn cascade(ch: &ChannelSet) -> Result<Cascade> {
    let v = mrc_combiner(ch)?;
    let v = v.as_slice();
    let (n_tx, m) = (ch.n_tx(), ch.n_elems());
    let c = (0..n_tx).map(|t| dot_h(v, &ch.h_d.col_vec(t))).collect();
    let vg: Vec<C64> = (0..m).map(|i| dot_h(v, &ch.g2r.col_vec(i))).collect();
    let mut r = Vec::with_capacity(m * n_tx);
    let mut d = Vec::with_capacity(m * n_tx);
    for i in 0..m {
        for t in 0..n_tx {
            r.push(vg[i] * ch.g1[(i, t)]);
            d.push(ch.g2t[(0, i)] * ch.g1[(i, t)]);
        }
    }
    let h = (0..n_tx).map(|t| ch.h_fb[(0, t)]).collect();
    Ok(Cascade { c, r, h, d })
}

fn rms(z: &[C64]) -> f64 {
    if z.is_empty() {
        0.0
    } else {
        (z.iter().map(|x| x.norm_sqr()).sum::<f64>() / z.len() as f64).sqrt()
    }
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count().max(1) as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

impl FeatureCodec {
    /// Unit scales; call [`FeatureCodec::fit`] before training.
    pub fn new(spec: &ScenarioSpec) -> FeatureCodec {
        FeatureCodec {
            n_tx: spec.n_tx,
            n_rx: spec.n_rx,
            n_elems: spec.n_elems,
            mode: spec.mode,
            phase_levels: spec.phase_levels,
            p_fd: spec.p_fd,
            env_scales: [1.0; 4],
            label_mean: [0.0; 2],
            label_std: [1.0; 2],
        }
    }

    /// Fits block scales and label statistics on the given samples.
    pub fn fit(spec: &ScenarioSpec, samples: &[Sample]) -> Result<FeatureCodec> {
        let mut codec = FeatureCodec::new(spec);
        let mut blocks: [Vec<C64>; 4] = Default::default();
        for s in samples {
            let cs = cascade(&s.ch)?;
            blocks[0].extend(cs.c);
            blocks[1].extend(cs.r);
            blocks[2].extend(cs.h);
            blocks[3].extend(cs.d);
        }
        for (k, b) in blocks.iter().enumerate() {
            let r = rms(b);
            codec.env_scales[k] = if r > 0.0 && r.is_finite() { r } else { 1.0 };
        }
        for k in 0..2 {
            let (m, s) = mean_std(samples.iter().map(move |x| x.labels[k]));
            codec.label_mean[k] = m;
            codec.label_std[k] = s;
        }
        Ok(codec)
    }

    pub fn env_dim(&self) -> usize {
        4 * self.n_tx * (self.n_elems + 1)
    }

    pub fn config_dim(&self) -> usize {
        PER_ELEMENT * self.n_elems + 2 * self.n_tx
    }

    pub fn interaction_dim(&self) -> usize {
        4 * (self.n_elems + 1)
    }

    pub fn critic_input_dim(&self) -> usize {
        self.env_dim() + self.config_dim() + self.interaction_dim()
    }

    /// Critic input from environment and (hard or soft) config features.
    pub fn critic_input(&self, env: &[f64], cfg: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.critic_input_dim());
        x.extend_from_slice(env);
        x.extend_from_slice(cfg);
        x.extend(self.interaction(env, cfg));
        x
    }

    /// Gradient with respect to the config features, given the gradient
    /// with respect to the whole critic input.
    pub fn critic_input_backward(&self, env: &[f64], cfg: &[f64], up: &[f64]) -> Vec<f64> {
        let split = env.len() + cfg.len();
        let mut g = up[env.len()..split].to_vec();
        for (a, b) in g.iter_mut().zip(self.interaction_backward(env, cfg, &up[split..])) {
            *a += b;
        }
        g
    }

    fn env_blocks(&self, env: &[f64]) -> [Vec<C64>; 4] {
        let pairs = |from: usize, n: usize| -> Vec<C64> {
            (0..n)
                .map(|k| C64::new(env[from + 2 * k], env[from + 2 * k + 1]))
                .collect()
        };
        let (n, m) = (self.n_tx, self.n_elems);
        [
            pairs(0, n),
            pairs(2 * n, m * n),
            pairs(2 * n * (m + 1), n),
            pairs(2 * n * (m + 2), m * n),
        ]
    }

    fn beam_of(&self, cfg: &[f64]) -> Vec<C64> {
        let off = PER_ELEMENT * self.n_elems;
        (0..self.n_tx)
            .map(|t| C64::new(cfg[off + 2 * t], cfg[off + 2 * t + 1]))
            .collect()
    }

    pub fn interaction(&self, env: &[f64], cfg: &[f64]) -> Vec<f64> {
        let [c, r, h, d] = self.env_blocks(env);
        let w = self.beam_of(cfg);
        let n = self.n_tx;
        let dotw = |v: &[C64]| v.iter().zip(&w).map(|(a, b)| a * b).sum::<C64>();
        let mut out = Vec::with_capacity(self.interaction_dim());
        for z in [dotw(&c), dotw(&h)] {
            out.extend([z.re, z.im]);
        }
        let mut refl = Vec::with_capacity(2 * self.n_elems);
        let mut trans = Vec::with_capacity(2 * self.n_elems);
        for (i, e) in cfg[..PER_ELEMENT * self.n_elems].chunks(PER_ELEMENT).enumerate() {
            let (bt, br) = (FRAC_PI_2 * e[0]).sin_cos();
            let a = dotw(&r[i * n..(i + 1) * n]) * C64::new(e[1], e[2]) * br;
            let b = dotw(&d[i * n..(i + 1) * n]) * C64::new(e[3], e[4]) * bt;
            refl.extend([a.re, a.im]);
            trans.extend([b.re, b.im]);
        }
        out.extend(refl);
        out.extend(trans);
        out
    }

    /// Vector-Jacobian product of [`FeatureCodec::interaction`] with
    /// respect to the config features.
    pub fn interaction_backward(&self, env: &[f64], cfg: &[f64], up: &[f64]) -> Vec<f64> {
        let [c, r, h, d] = self.env_blocks(env);
        let w = self.beam_of(cfg);
        let (n, m) = (self.n_tx, self.n_elems);
        let gz = |k: usize| C64::new(up[2 * k], up[2 * k + 1]);
        let mut out = vec![0.0; cfg.len()];
        let mut gw = vec![ZERO; n];
        // For z = u·v, the gradient with respect to u is g·conj(v).
        for (k, block) in [(0, &c), (1, &h)] {
            for t in 0..n {
                gw[t] += gz(k) * block[t].conj();
            }
        }
        for (i, e) in cfg[..PER_ELEMENT * m].chunks(PER_ELEMENT).enumerate() {
            let (st, ct) = (FRAC_PI_2 * e[0]).sin_cos();
            let o = PER_ELEMENT * i;
            for (g, taps, beta, dbeta, ph, col) in [
                (
                    gz(2 + i),
                    &r[i * n..(i + 1) * n],
                    ct,
                    -FRAC_PI_2 * st,
                    C64::new(e[1], e[2]),
                    1,
                ),
                (
                    gz(2 + m + i),
                    &d[i * n..(i + 1) * n],
                    st,
                    FRAC_PI_2 * ct,
                    C64::new(e[3], e[4]),
                    3,
                ),
            ] {
                let sum: C64 = taps.iter().zip(&w).map(|(a, b)| a * b).sum();
                let gph = g * (sum * beta).conj();
                out[o + col] += gph.re;
                out[o + col + 1] += gph.im;
                out[o] += (g.conj() * sum * ph).re * dbeta;
                let gsum = g * (ph * beta).conj();
                for t in 0..n {
                    gw[t] += gsum * taps[t].conj();
                }
            }
        }
        let off = PER_ELEMENT * m;
        for t in 0..n {
            out[off + 2 * t] += gw[t].re;
            out[off + 2 * t + 1] += gw[t].im;
        }
        out
    }

    /// Generator output length (same layout as the config features).
    pub fn raw_dim(&self) -> usize {
        self.config_dim()
    }

    fn check(&self, ch: &ChannelSet) -> Result<()> {
        if ch.n_tx() != self.n_tx || ch.n_rx() != self.n_rx || ch.n_elems() != self.n_elems {
            return Err(Error::Dimension(format!(
                "codec expects n_tx={}, n_rx={}, M={}; channels have {}, {}, {}",
                self.n_tx,
                self.n_rx,
                self.n_elems,
                ch.n_tx(),
                ch.n_rx(),
                ch.n_elems()
            )));
        }
        Ok(())
    }

    pub fn env_features(&self, ch: &ChannelSet) -> Result<Vec<f64>> {
        self.check(ch)?;
        let cs = cascade(ch)?;
        let mut out = Vec::with_capacity(self.env_dim());
        for (block, &scale) in [&cs.c, &cs.r, &cs.h, &cs.d].into_iter().zip(&self.env_scales) {
            for z in block {
                out.push(z.re / scale);
                out.push(z.im / scale);
            }
        }
        Ok(out)
    }

    pub fn config_features(&self, cfg: &StarConfig, link: &LinkConfig) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.config_dim());
        for i in 0..cfg.len() {
            let (sr, cr) = cfg.theta_r[i].sin_cos();
            let (st, ct) = cfg.theta_t[i].sin_cos();
            out.extend([cfg.psi[i] / FRAC_PI_2, cr, sr, ct, st]);
        }
        let scale = self.p_fd.sqrt();
        for z in link.w.as_slice() {
            out.push(z.re / scale);
            out.push(z.im / scale);
        }
        out
    }

    /// Hard projection of a config-feature (or raw generator) vector whose
    /// amplitude entries are already in `[0, 1]`.
    pub fn decode_config(&self, feats: &[f64], ch: &ChannelSet) -> Result<(StarConfig, LinkConfig)> {
        let m = self.n_elems;
        let mut psi = Vec::with_capacity(m);
        let mut tr = Vec::with_capacity(m);
        let mut tt = Vec::with_capacity(m);
        for e in feats[..PER_ELEMENT * m].chunks(PER_ELEMENT) {
            psi.push(e[0].clamp(0.0, 1.0) * FRAC_PI_2);
            tr.push(e[2].atan2(e[1]));
            tt.push(e[4].atan2(e[3]));
        }
        let cfg = project(&psi, &tr, &tt, self.mode, self.phase_levels)?;
        let w = normalized_beam(&feats[PER_ELEMENT * m..], self.p_fd);
        let v = mrc_combiner(ch)?;
        Ok((cfg, LinkConfig { w, v }))
    }

    /// Config features of the hard projection of `feats`.
    pub fn harden(&self, feats: &[f64]) -> Result<Vec<f64>> {
        let m = self.n_elems;
        let mut psi = Vec::with_capacity(m);
        let mut tr = Vec::with_capacity(m);
        let mut tt = Vec::with_capacity(m);
        for e in feats[..PER_ELEMENT * m].chunks(PER_ELEMENT) {
            psi.push(e[0].clamp(0.0, 1.0) * FRAC_PI_2);
            tr.push(e[2].atan2(e[1]));
            tt.push(e[4].atan2(e[3]));
        }
        let cfg = project(&psi, &tr, &tt, self.mode, self.phase_levels)?;
        let link = LinkConfig {
            w: normalized_beam(&feats[PER_ELEMENT * m..], self.p_fd),
            v: CMatrix::zeros(self.n_rx, 1),
        };
        Ok(self.config_features(&cfg, &link))
    }

    pub fn normalize_labels(&self, y: [f64; 2]) -> [f64; 2] {
        [
            (y[0] - self.label_mean[0]) / self.label_std[0],
            (y[1] - self.label_mean[1]) / self.label_std[1],
        ]
    }

    pub fn denormalize_labels(&self, y: &[f64]) -> [f64; 2] {
        [
            y[0] * self.label_std[0] + self.label_mean[0],
            y[1] * self.label_std[1] + self.label_mean[1],
        ]
    }
}

/// `√p · u / ‖u‖` from interleaved (re, im) pairs; the first basis vector if
/// `u` is zero or not finite.
fn normalized_beam(raw: &[f64], p: f64) -> CMatrix {
    let z: Vec<C64> = raw.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
    let n = z.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let col: Vec<C64> = if n > 0.0 && n.is_finite() {
        z.iter().map(|x| x * (p.sqrt() / n)).collect()
    } else {
        let mut e = vec![ZERO; z.len()];
        e[0] = C64::new(p.sqrt(), 0.0);
        e
    };
    CMatrix::column(&col)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Differentiable map from generator output to config features: amplitude
/// through a logistic, phase pairs and the beam normalized to unit length.
pub fn soft_features(raw: &[f64], n_elems: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    for e in raw[..PER_ELEMENT * n_elems].chunks(PER_ELEMENT) {
        out.push(sigmoid(e[0]));
        for pair in e[1..].chunks(2) {
            let r = (pair[0] * pair[0] + pair[1] * pair[1] + NORM_EPS).sqrt();
            out.push(pair[0] / r);
            out.push(pair[1] / r);
        }
    }
    let w = &raw[PER_ELEMENT * n_elems..];
    let n = (w.iter().map(|x| x * x).sum::<f64>() + NORM_EPS).sqrt();
    out.extend(w.iter().map(|x| x / n));
    out
}

/// Vector-Jacobian product of [`soft_features`].
pub fn soft_features_backward(raw: &[f64], n_elems: usize, upstream: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let split = PER_ELEMENT * n_elems;
    for (e, g) in raw[..split]
        .chunks(PER_ELEMENT)
        .zip(upstream[..split].chunks(PER_ELEMENT))
    {
        let s = sigmoid(e[0]);
        out.push(g[0] * s * (1.0 - s));
        for (pair, gp) in e[1..].chunks(2).zip(g[1..].chunks(2)) {
            let (x, y) = (pair[0], pair[1]);
            let r2 = x * x + y * y + NORM_EPS;
            let r3 = r2 * r2.sqrt();
            let dcx = (r2 - x * x) / r3;
            let dxy = -x * y / r3;
            let dsy = (r2 - y * y) / r3;
            out.push(gp[0] * dcx + gp[1] * dxy);
            out.push(gp[0] * dxy + gp[1] * dsy);
        }
    }
    let w = &raw[split..];
    let g = &upstream[split..];
    let n = (w.iter().map(|x| x * x).sum::<f64>() + NORM_EPS).sqrt();
    let fg: f64 = w.iter().zip(g).map(|(x, gi)| x / n * gi).sum();
    out.extend(w.iter().zip(g).map(|(x, gi)| (gi - x / n * fg) / n));
    out
}

/// One labelled draw.
#[derive(Clone, Debug)]
pub struct Sample {
    pub ch: ChannelSet,
    pub cfg: StarConfig,
    pub link: LinkConfig,
    /// `[rate_dl, resid_si_db]`.
    pub labels: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub family: ScenarioSpec,
    pub seed: u64,
    pub samples: Vec<Sample>,
}

fn random_beam(rng: &mut Rng, n_tx: usize, p: f64) -> CMatrix {
    let raw: Vec<f64> = (0..2 * n_tx).map(|_| rng.normal()).collect();
    normalized_beam(&raw, p)
}

fn draw_sample(family: &ScenarioSpec, seed: u64) -> Result<Sample> {
    let mut rng = Rng::new(seed);
    let ch = gen_channels(family, &mut rng)?;
    let cfg = random_config(&mut rng, family.n_elems, family.mode, family.phase_levels);
    let w = random_beam(&mut rng, family.n_tx, family.p_fd);
    let link = LinkConfig {
        w,
        v: mrc_combiner(&ch)?,
    };
    let m = evaluate(family, &ch, &cfg, &link)?;
    Ok(Sample {
        ch,
        cfg,
        link,
        labels: [m.rate_dl, m.resid_si_db],
    })
}

/// `n` independent (environment, uniformly drawn projected config, random
/// full-power beam) samples. Sample `i` depends only on `(seed, i)`.
pub fn sample_dataset(family: &ScenarioSpec, n: usize, rng: &mut Rng) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    family.validate()?;
    let seed = rng.next_u64();
    let samples = (0..n as u64)
        .into_par_iter()
        .map(|i| draw_sample(family, mix_seed(seed, &[i])))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        family: family.clone(),
        seed,
        samples,
    })
}

/// Environments only, for generator training.
pub fn sample_environments(family: &ScenarioSpec, n: usize, rng: &mut Rng) -> Result<Vec<ChannelSet>> {
    let seed = rng.next_u64();
    (0..n as u64)
        .into_par_iter()
        .map(|i| gen_channels(family, &mut Rng::new(mix_seed(seed, &[i]))))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHyper {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    /// Fraction of the dataset held out for validation (critic only).
    pub val_frac: f64,
    /// Penalty weight of the generator loss.
    pub lambda: f64,
    /// Generator only: evaluate the critic at the hard-projected config and
    /// pass gradients through the soft projection.
    pub straight_through: bool,
    /// Generator only, MS: weight of the penalty `4 s (1 − s)` pushing each
    /// soft role assignment toward 0 or 1.
    pub binarize: f64,
    /// Generator only: the constraint is tightened by this much (dB for the
    /// SI budget, bps/Hz for the rate floor) to absorb critic error.
    pub margin: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            hidden: vec![128, 128],
            epochs: 200,
            lr: 1e-3,
            batch: 64,
            seed: 0,
            val_frac: 0.1,
            lambda: 10.0,
            straight_through: false,
            binarize: 0.0,
            margin: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Loss over the training set before the first update.
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
    /// Critic: mean squared error (normalized labels) on the held-out part.
    /// Generator: mean loss over its environment pool after training.
    pub final_val_loss: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
    /// Generator: true validation score after each epoch, if validated.
    pub val_scores: Vec<f64>,
    /// Generator: epoch whose weights were kept.
    pub best_epoch: usize,
}

/// Sums per-sample losses and gradients over `idx` in fixed-size chunks, so
/// the result does not depend on the thread count.
fn accumulate<F>(net: &Mlp, idx: &[usize], f: F) -> (Grads, f64)
where
    F: Fn(usize, &mut Grads) -> f64 + Sync,
{
    let parts: Vec<(Grads, f64)> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = Grads::zeros_like(net);
            let loss = chunk.iter().map(|&i| f(i, &mut g)).sum::<f64>();
            (g, loss)
        })
        .collect();
    let mut total = Grads::zeros_like(net);
    let mut loss = 0.0;
    for (g, l) in &parts {
        total.add_assign(g);
        loss += l;
    }
    (total, loss)
}

fn mse_terms(net: &Mlp, x: &[f64], y: &[f64; 2], grads: Option<&mut Grads>) -> f64 {
    let trace = net.forward_trace(x);
    let out = trace.last().unwrap();
    let diff = [out[0] - y[0], out[1] - y[1]];
    if let Some(g) = grads {
        net.backward(&trace, &diff.map(|d| d), Some(g));
    }
    0.5 * (diff[0] * diff[0] + diff[1] * diff[1])
}

/// Mean squared error per label on the given rows.
fn mse(net: &Mlp, xs: &[Vec<f64>], ys: &[[f64; 2]]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let total: f64 = xs
        .par_iter()
        .zip(ys)
        .map(|(x, y)| mse_terms(net, x, y, None))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / xs.len() as f64
}

fn check_hyper(h: &TrainHyper) -> Result<()> {
    if h.epochs == 0 || h.batch == 0 || !(h.lr > 0.0) || !(0.0..1.0).contains(&h.val_frac) {
        return Err(Error::Config(format!("invalid training settings {h:?}")));
    }
    Ok(())
}

/// Fits the critic by mean squared error on normalized labels. The last
/// `val_frac` of the dataset is held out.
pub fn train_critic(codec: &FeatureCodec, data: &Dataset, hyper: &TrainHyper) -> Result<(Mlp, TrainReport)> {
    check_hyper(hyper)?;
    let n = data.samples.len();
    if n == 0 {
        return Err(Error::Config("empty dataset".into()));
    }
    let n_val = ((n as f64) * hyper.val_frac).floor() as usize;
    let n_train = n - n_val;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for s in &data.samples {
        let env = codec.env_features(&s.ch)?;
        xs.push(codec.critic_input(&env, &codec.config_features(&s.cfg, &s.link)));
        ys.push(codec.normalize_labels(s.labels));
    }
    let mut dims = vec![codec.critic_input_dim()];
    dims.extend(&hyper.hidden);
    dims.push(2);
    let mut rng = Rng::new(hyper.seed);
    let mut net = Mlp::new(&dims, Activation::Relu, &mut rng)?;
    let mut adam = Adam::new(&net, hyper.lr);
    let mut report = TrainReport {
        initial_loss: mse(&net, &xs[..n_train], &ys[..n_train]),
        n_train,
        n_val,
        seed: hyper.seed,
        ..Default::default()
    };
    let mut order: Vec<usize> = (0..n_train).collect();
    for epoch in 0..hyper.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch) {
            let (mut g, loss) = accumulate(&net, batch, |i, g| mse_terms(&net, &xs[i], &ys[i], Some(g)));
            g.scale(1.0 / batch.len() as f64);
            adam.step(&mut net, &g);
            epoch_loss += loss;
        }
        let epoch_loss = epoch_loss / n_train as f64;
        report.epoch_losses.push(epoch_loss);
        if !epoch_loss.is_finite() || !net.is_finite() {
            return Err(Error::Divergence {
                epoch,
                report: Box::new(report),
            });
        }
    }
    report.final_val_loss = if n_val > 0 {
        mse(&net, &xs[n_train..], &ys[n_train..])
    } else {
        mse(&net, &xs, &ys)
    };
    Ok((net, report))
}

fn hinge_grad(x: f64) -> f64 {
    sigmoid(HINGE_SHARPNESS * x)
}

/// Generator loss on predicted `[rate_dl, resid_si_db]` and its gradient.
pub fn generator_loss(objective: &Objective, lambda: f64, pred: [f64; 2]) -> (f64, [f64; 2]) {
    let [rate, resid] = pred;
    match *objective {
        Objective::MaxRateSubjectToSi { epsilon_db } => {
            let x = resid - epsilon_db;
            (-rate + lambda * softplus_hinge(x), [-1.0, lambda * hinge_grad(x)])
        }
        Objective::MinSiSubjectToRate { r_min } => {
            let x = r_min - rate;
            (resid + lambda * softplus_hinge(x), [-lambda * hinge_grad(x), 1.0])
        }
    }
}

/// Loss of one environment through generator and frozen critic, adding the
/// generator's parameter gradients into `grads` when given.
fn generator_terms(
    gen: &Mlp,
    critic: &Mlp,
    codec: &FeatureCodec,
    objective: &Objective,
    hyper: &TrainHyper,
    env: &[f64],
    grads: Option<&mut Grads>,
) -> f64 {
    let g_trace = gen.forward_trace(env);
    let raw = g_trace.last().unwrap();
    let soft = soft_features(raw, codec.n_elems);
    let soft = if hyper.straight_through {
        codec.harden(&soft).expect("soft features have the codec layout")
    } else {
        soft
    };
    let x = codec.critic_input(env, &soft);
    let c_trace = critic.forward_trace(&x);
    let pred = codec.denormalize_labels(c_trace.last().unwrap());
    let (mut loss, dpred) = generator_loss(objective, hyper.lambda, pred);
    let mu = if codec.mode == StarMode::Ms {
        hyper.binarize
    } else {
        0.0
    };
    for e in raw[..PER_ELEMENT * codec.n_elems].chunks(PER_ELEMENT) {
        let s = sigmoid(e[0]);
        loss += mu * 4.0 * s * (1.0 - s);
    }
    if let Some(g) = grads {
        let up = [dpred[0] * codec.label_std[0], dpred[1] * codec.label_std[1]];
        let dx = critic.backward(&c_trace, &up, None);
        let dsoft = codec.critic_input_backward(env, &soft, &dx);
        let mut draw = soft_features_backward(raw, codec.n_elems, &dsoft);
        if mu != 0.0 {
            for k in (0..codec.n_elems).map(|i| PER_ELEMENT * i) {
                let s = sigmoid(raw[k]);
                draw[k] += mu * 4.0 * (1.0 - 2.0 * s) * s * (1.0 - s);
            }
        }
        gen.backward(&g_trace, &draw, Some(g));
    }
    loss
}

/// Objective with its constraint tightened by `margin`.
pub fn tightened(objective: Objective, margin: f64) -> Objective {
    match objective {
        Objective::MaxRateSubjectToSi { epsilon_db } => Objective::MaxRateSubjectToSi {
            epsilon_db: epsilon_db - margin,
        },
        Objective::MinSiSubjectToRate { r_min } => Objective::MinSiSubjectToRate {
            r_min: (r_min + margin).max(0.0),
        },
    }
}

/// Held-out environments on which the generator's hard-projected output is
/// scored with the true link model after every epoch; the best epoch's
/// weights are kept.
#[derive(Clone, Copy, Debug)]
pub struct GenValidation<'a> {
    pub family: &'a ScenarioSpec,
    pub envs: &'a [ChannelSet],
}

/// Mean [`Objective::score`] of the generator's configs on `envs`.
pub fn generator_true_score(
    gen: &Mlp,
    codec: &FeatureCodec,
    family: &ScenarioSpec,
    envs: &[ChannelSet],
    objective: &Objective,
) -> Result<f64> {
    let scores = envs
        .par_iter()
        .map(|ch| {
            let (cfg, link) = infer_config(gen, codec, ch)?;
            Ok(objective.score(&evaluate(family, ch, &cfg, &link)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len().max(1) as f64)
}

/// Trains the generator through the frozen critic on a pool of
/// environments; only generator weights change. The loss uses `objective`
/// tightened by `hyper.margin`; validation, when given, scores the untightened
/// objective.
pub fn train_generator(
    critic: &Mlp,
    codec: &FeatureCodec,
    envs: &[ChannelSet],
    objective: Objective,
    hyper: &TrainHyper,
    validation: Option<GenValidation<'_>>,
) -> Result<(Mlp, TrainReport)> {
    check_hyper(hyper)?;
    objective.validate()?;
    let true_objective = objective;
    let objective = tightened(objective, hyper.margin);
    if critic.input_dim() != codec.critic_input_dim() || critic.output_dim() != 2 {
        return Err(Error::Dimension(format!(
            "critic dims {:?} do not match codec input {}",
            critic.dims(),
            codec.critic_input_dim()
        )));
    }
    if envs.is_empty() {
        return Err(Error::Config("no training environments".into()));
    }
    let feats = envs.iter().map(|c| codec.env_features(c)).collect::<Result<Vec<_>>>()?;
    let mut dims = vec![codec.env_dim()];
    dims.extend(&hyper.hidden);
    dims.push(codec.raw_dim());
    let mut rng = Rng::new(hyper.seed);
    let mut gen = Mlp::new(&dims, Activation::Tanh, &mut rng)?;
    let mut adam = Adam::new(&gen, hyper.lr);
    let pool_loss = |gen: &Mlp| -> f64 {
        let idx: Vec<usize> = (0..feats.len()).collect();
        accumulate(gen, &idx, |i, _| {
            generator_terms(gen, critic, codec, &objective, hyper, &feats[i], None)
        })
        .1 / feats.len() as f64
    };
    let mut report = TrainReport {
        initial_loss: pool_loss(&gen),
        n_train: feats.len(),
        seed: hyper.seed,
        ..Default::default()
    };
    let mut order: Vec<usize> = (0..feats.len()).collect();
    let mut best: Option<(f64, Mlp)> = None;
    for epoch in 0..hyper.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch) {
            let (mut g, loss) = accumulate(&gen, batch, |i, g| {
                generator_terms(&gen, critic, codec, &objective, hyper, &feats[i], Some(g))
            });
            g.scale(1.0 / batch.len() as f64);
            adam.step(&mut gen, &g);
            epoch_loss += loss;
        }
        let epoch_loss = epoch_loss / feats.len() as f64;
        report.epoch_losses.push(epoch_loss);
        if !epoch_loss.is_finite() || !gen.is_finite() {
            return Err(Error::Divergence {
                epoch,
                report: Box::new(report),
            });
        }
        if let Some(val) = &validation {
            let score = generator_true_score(&gen, codec, val.family, val.envs, &true_objective)?;
            report.val_scores.push(score);
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, gen.clone()));
                report.best_epoch = epoch;
            }
        }
    }
    if let Some((_, b)) = best {
        gen = b;
    } else {
        report.best_epoch = hyper.epochs - 1;
    }
    report.final_val_loss = pool_loss(&gen);
    Ok((gen, report))
}

/// Critic prediction `[rate_dl, resid_si_db]` for an explicit config.
pub fn critic_predict(
    critic: &Mlp,
    codec: &FeatureCodec,
    ch: &ChannelSet,
    cfg: &StarConfig,
    link: &LinkConfig,
) -> Result<[f64; 2]> {
    let env = codec.env_features(ch)?;
    let x = codec.critic_input(&env, &codec.config_features(cfg, link));
    Ok(codec.denormalize_labels(&critic.forward(&x)))
}

/// One generator pass followed by hard projection: config onto the mode and
/// phase grid, beam to full power, combiner MRC.
pub fn infer_config(gen: &Mlp, codec: &FeatureCodec, ch: &ChannelSet) -> Result<(StarConfig, LinkConfig)> {
    let env = codec.env_features(ch)?;
    let raw = gen.forward(&env);
    let feats = soft_features(&raw, codec.n_elems);
    codec.decode_config(&feats, ch)
}

/// Generator, critic and codec, saved together.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub codec: FeatureCodec,
    pub objective: Objective,
    pub generator: Mlp,
    pub critic: Mlp,
}

pub const MODEL_MAGIC: &str = "starfd-model";
pub const MODEL_VERSION: u32 = 1;

fn write_floats(out: &mut String, tag: &str, xs: &[f64]) {
    out.push_str(tag);
    for x in xs {
        let _ = write!(out, " {x:?}");
    }
    out.push('\n');
}

fn write_net(out: &mut String, name: &str, net: &Mlp) {
    let _ = writeln!(out, "net {name} {}", net.layers.len());
    for l in &net.layers {
        let _ = writeln!(out, "layer {} {} {}", l.n_in, l.n_out, l.act.tag());
        write_floats(out, "w", &l.w);
        write_floats(out, "b", &l.b);
    }
}

impl ModelBundle {
    /// Line-oriented text format:
    ///
    /// ```text
    /// starfd-model 1
    /// codec <n_tx> <n_rx> <M> <ES|MS> <L> <p_fd>
    /// env_scales <4 values>
    /// labels <mean_rate> <std_rate> <mean_si_db> <std_si_db>
    /// objective <maxrate:eps | minsi:r>
    /// net generator <layers>
    /// layer <n_in> <n_out> <tanh|relu|linear>
    /// w <n_out·n_in values, row-major>
    /// b <n_out values>
    /// ...
    /// net critic <layers>
    /// ...
    /// end
    /// ```
    ///
    /// Floats use the shortest representation that reads back exactly.
    pub fn to_text(&self) -> String {
        let c = &self.codec;
        let mut out = format!("{MODEL_MAGIC} {MODEL_VERSION}\n");
        let _ = writeln!(
            out,
            "codec {} {} {} {} {} {:?}",
            c.n_tx, c.n_rx, c.n_elems, c.mode, c.phase_levels, c.p_fd
        );
        write_floats(&mut out, "env_scales", &c.env_scales);
        write_floats(
            &mut out,
            "labels",
            &[c.label_mean[0], c.label_std[0], c.label_mean[1], c.label_std[1]],
        );
        let _ = writeln!(out, "objective {}", self.objective);
        write_net(&mut out, "generator", &self.generator);
        write_net(&mut out, "critic", &self.critic);
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<ModelBundle> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            lines
                .next()
                .map(|(n, l)| (n + 1, l.split_whitespace().collect()))
                .ok_or_else(|| Error::Model(format!("unexpected end of file, expected {what}")))
        };
        let bad = |line: usize, msg: &str| Error::Model(format!("line {line}: {msg}"));

        let (ln, head) = next("header")?;
        if head.first() != Some(&MODEL_MAGIC) {
            return Err(bad(ln, "not a model file"));
        }
        let version: u32 = head
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, "missing version"))?;
        if version != MODEL_VERSION {
            return Err(bad(ln, &format!("unsupported version {version}")));
        }

        let (ln, c) = next("codec")?;
        if c.len() != 7 || c[0] != "codec" {
            return Err(bad(ln, "malformed codec line"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad(ln, "bad integer"));
        let mut codec = FeatureCodec {
            n_tx: num(c[1])?,
            n_rx: num(c[2])?,
            n_elems: num(c[3])?,
            mode: c[4].parse().map_err(|_| bad(ln, "bad mode"))?,
            phase_levels: num(c[5])?,
            p_fd: c[6].parse().map_err(|_| bad(ln, "bad power"))?,
            env_scales: [1.0; 4],
            label_mean: [0.0; 2],
            label_std: [1.0; 2],
        };

        let floats = |ln: usize, tok: &[&str], tag: &str, n: usize| -> Result<Vec<f64>> {
            if tok.first() != Some(&tag) || tok.len() != n + 1 {
                return Err(bad(ln, &format!("expected '{tag}' with {n} values")));
            }
            tok[1..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| bad(ln, "bad number")))
                .collect()
        };
        let (ln, t) = next("env_scales")?;
        let s = floats(ln, &t, "env_scales", 4)?;
        codec.env_scales.copy_from_slice(&s);
        let (ln, t) = next("labels")?;
        let s = floats(ln, &t, "labels", 4)?;
        codec.label_mean = [s[0], s[2]];
        codec.label_std = [s[1], s[3]];

        let (ln, t) = next("objective")?;
        if t.len() != 2 || t[0] != "objective" {
            return Err(bad(ln, "malformed objective line"));
        }
        let objective: Objective = t[1].parse().map_err(|e: Error| bad(ln, &e.to_string()))?;

        let mut nets = Vec::new();
        for name in ["generator", "critic"] {
            let (ln, t) = next("net")?;
            if t.len() != 3 || t[0] != "net" || t[1] != name {
                return Err(bad(ln, &format!("expected 'net {name} <layers>'")));
            }
            let n_layers: usize = t[2].parse().map_err(|_| bad(ln, "bad layer count"))?;
            let mut layers = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                let (ln, t) = next("layer")?;
                if t.len() != 4 || t[0] != "layer" {
                    return Err(bad(ln, "malformed layer line"));
                }
                let n_in: usize = t[1].parse().map_err(|_| bad(ln, "bad n_in"))?;
                let n_out: usize = t[2].parse().map_err(|_| bad(ln, "bad n_out"))?;
                let act = Activation::from_tag(t[3])?;
                let (lw, tw) = next("weights")?;
                let w = floats(lw, &tw, "w", n_in * n_out)?;
                let (lb, tb) = next("biases")?;
                let b = floats(lb, &tb, "b", n_out)?;
                if let Some(prev) = layers.last().map(|l: &Layer| l.n_out) {
                    if prev != n_in {
                        return Err(bad(ln, "layer dims not conformable"));
                    }
                }
                layers.push(Layer { n_in, n_out, w, b, act });
            }
            if layers.is_empty() {
                return Err(bad(ln, "network without layers"));
            }
            let net = Mlp { layers };
            if !net.is_finite() {
                return Err(bad(ln, "non-finite weights"));
            }
            nets.push(net);
        }
        let (ln, t) = next("end")?;
        if t != ["end"] {
            return Err(bad(ln, "expected 'end'"));
        }
        let critic = nets.pop().unwrap();
        let generator = nets.pop().unwrap();
        if generator.input_dim() != codec.env_dim() || generator.output_dim() != codec.raw_dim() {
            return Err(Error::Model("generator dims do not match codec".into()));
        }
        if critic.input_dim() != codec.critic_input_dim() || critic.output_dim() != 2 {
            return Err(Error::Model("critic dims do not match codec".into()));
        }
        Ok(ModelBundle {
            codec,
            objective,
            generator,
            critic,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<ModelBundle> {
        ModelBundle::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn infer(&self, ch: &ChannelSet) -> Result<(StarConfig, LinkConfig)> {
        infer_config(&self.generator, &self.codec, ch)
    }
}

/// Sizes for [`train_pipeline`].
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineSizes {
    pub samples: usize,
    pub environments: usize,
    pub val_environments: usize,
    pub critic: TrainHyper,
    pub generator: TrainHyper,
}

impl Default for PipelineSizes {
    fn default() -> Self {
        PipelineSizes {
            samples: 20_000,
            environments: 4_000,
            val_environments: 200,
            critic: TrainHyper {
                epochs: 100,
                ..TrainHyper::default()
            },
            generator: TrainHyper::default(),
        }
    }
}

/// Dataset, codec fit, critic, then generator; everything seeded from
/// `seed`.
pub fn train_pipeline(
    family: &ScenarioSpec,
    objective: Objective,
    sizes: &PipelineSizes,
    seed: u64,
) -> Result<(ModelBundle, TrainReport, TrainReport)> {
    let mut rng = Rng::derive(seed, &[0]);
    let data = sample_dataset(family, sizes.samples, &mut rng)?;
    let n_fit = data.samples.len() - (data.samples.len() as f64 * sizes.critic.val_frac).floor() as usize;
    let codec = FeatureCodec::fit(family, &data.samples[..n_fit])?;
    let critic_hyper = TrainHyper {
        seed: mix_seed(seed, &[1]),
        ..sizes.critic.clone()
    };
    let (critic, crep) = train_critic(&codec, &data, &critic_hyper)?;
    let envs = sample_environments(family, sizes.environments, &mut Rng::derive(seed, &[2]))?;
    let gen_hyper = TrainHyper {
        seed: mix_seed(seed, &[3]),
        ..sizes.generator.clone()
    };
    let val_envs = sample_environments(family, sizes.val_environments, &mut Rng::derive(seed, &[4]))?;
    let validation = (!val_envs.is_empty()).then_some(GenValidation {
        family,
        envs: &val_envs,
    });
    let (generator, grep) = train_generator(&critic, &codec, &envs, objective, &gen_hyper, validation)?;
    Ok((
        ModelBundle {
            codec,
            objective,
            generator,
            critic,
        },
        crep,
        grep,
    ))
}
