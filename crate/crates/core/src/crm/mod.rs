//! Forward pass of the controllable receptive module.
//!
//! One convolution kernel is shared by `n` branches that differ only in
//! dilation. Each branch is normalized (inference mode) and passed through
//! GELU; the branches are concatenated into `n·C` channels, a per-channel
//! sigmoid gate is computed from them with a grouped 1×1 convolution, the
//! gated features are projected back to `C` channels and added to the input.
//!
//! Tensors are `C×H×W`, row-major: element `(c, y, x)` lives at
//! `(c * H + y) * W + x`.

pub mod reference;
mod selfcheck;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;

pub use selfcheck::{run_selfcheck, CheckResult, SelfCheckOptions, SelfCheckReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!("tensor dims {c}x{h}x{w} must be >= 1")));
        }
        if data.len() != c * h * w {
            return Err(Error::Shape(format!(
                "{} values for a {c}x{h}x{w} tensor",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("tensor holds non-finite values".into()));
        }
        Ok(Self { c, h, w, data })
    }

    pub fn random(c: usize, h: usize, w: usize, rng: &mut DetRng) -> Self {
        let data = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { c, h, w, data }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    fn plane(&self, c: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.data[c * n..(c + 1) * n]
    }

    fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.h * self.w;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn map(mut self, f: impl Fn(f64) -> f64) -> Self {
        self.data.iter_mut().for_each(|v| *v = f(*v));
        self
    }

    /// Stacks tensors of equal spatial size along channels.
    pub fn concat(parts: &[Tensor3]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Shape("nothing to concat".into()))?;
        if parts.iter().any(|p| (p.h, p.w) != (first.h, first.w)) {
            return Err(Error::Shape("concat of mismatched spatial sizes".into()));
        }
        let c = parts.iter().map(|p| p.c).sum();
        let data = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        Ok(Self {
            c,
            h: first.h,
            w: first.w,
            data,
        })
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// `k×k` convolution weights, `[out][in][ky][kx]`, plus per-output bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvWeights {
    pub out_channels: usize,
    pub in_channels: usize,
    pub k: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvWeights {
    pub fn zeros(out_channels: usize, in_channels: usize, k: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            k,
            weights: vec![0.0; out_channels * in_channels * k * k],
            bias: vec![0.0; out_channels],
        }
    }

    /// Centre tap 1 on the diagonal: the identity map for any dilation.
    pub fn identity(channels: usize, k: usize) -> Self {
        let mut w = Self::zeros(channels, channels, k);
        let c = k / 2;
        for i in 0..channels {
            let idx = w.index(i, i, c, c);
            w.weights[idx] = 1.0;
        }
        w
    }

    #[inline]
    pub fn index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.k + ky) * self.k + kx
    }

    fn validate(&self) -> Result<()> {
        if self.k.is_multiple_of(2) {
            return Err(Error::Shape(format!("kernel size {} must be odd", self.k)));
        }
        if self.weights.len() != self.out_channels * self.in_channels * self.k * self.k
            || self.bias.len() != self.out_channels
        {
            return Err(Error::Shape("conv weight/bias lengths disagree with dims".into()));
        }
        Ok(())
    }
}

/// Inference-mode batch normalization with fixed statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    1e-5
}

impl BatchNorm {
    /// Mean 0, variance 1, unit scale, zero shift and `eps = 0`, so the map
    /// is exactly the identity.
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            eps: 0.0,
        }
    }

    fn random(channels: usize, rng: &mut DetRng) -> Self {
        let mut v = |lo: f64, hi: f64| -> Vec<f64> { (0..channels).map(|_| rng.random_range(lo..hi)).collect() };
        Self {
            mean: v(-0.5, 0.5),
            var: v(0.5, 2.0),
            gamma: v(0.5, 1.5),
            beta: v(-0.3, 0.3),
            eps: default_eps(),
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn validate(&self, channels: usize) -> Result<()> {
        if [self.mean.len(), self.var.len(), self.gamma.len(), self.beta.len()]
            .iter()
            .any(|&n| n != channels)
        {
            return Err(Error::Shape(format!("batch norm expects {channels} channels")));
        }
        if self.var.iter().any(|&v| v <= 0.0) || self.eps < 0.0 {
            return Err(Error::Shape("batch norm variance must be > 0".into()));
        }
        Ok(())
    }

    pub fn apply(&self, x: &Tensor3) -> Result<Tensor3> {
        self.validate(x.c)?;
        let mut out = x.clone();
        for c in 0..x.c {
            let inv = 1.0 / (self.var[c] + self.eps).sqrt();
            let (m, g, b) = (self.mean[c], self.gamma[c], self.beta[c]);
            out.plane_mut(c)
                .iter_mut()
                .for_each(|v| *v = (*v - m) * inv * g + b);
        }
        Ok(out)
    }
}

/// 1×1 convolution with `groups == channels`: one weight per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupedPointwise {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Dense 1×1 convolution, `weights[out][in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pointwise {
    pub out_channels: usize,
    pub in_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Shallow stages: k = 5, d = 1, 2, 3.
    Global,
    /// Intermediate stages: k = 3, d = 1, 2, 3.
    Block,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrmConfig {
    pub k: usize,
    pub dilations: Vec<usize>,
    /// One normalization shared by all branches instead of one per branch.
    #[serde(default)]
    pub shared_branch_norm: bool,
}

impl CrmConfig {
    pub fn preset(p: Preset) -> Self {
        let k = match p {
            Preset::Global => 5,
            Preset::Block => 3,
        };
        Self {
            k,
            dilations: vec![1, 2, 3],
            shared_branch_norm: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_multiple_of(2) {
            return Err(Error::Shape(format!("kernel size {} must be odd", self.k)));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::Shape("dilations must be positive and non-empty".into()));
        }
        let mut d = self.dilations.clone();
        d.sort_unstable();
        d.dedup();
        if d.len() != self.dilations.len() {
            return Err(Error::Shape("dilations must be distinct".into()));
        }
        Ok(())
    }

    pub fn branches(&self) -> usize {
        self.dilations.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrmParams {
    pub channels: usize,
    /// Kernel shared by every dilation branch, `C→C`.
    pub shared_conv: ConvWeights,
    /// One entry per branch, or a single entry when shared.
    pub branch_norms: Vec<BatchNorm>,
    pub gate: GroupedPointwise,
    pub gate_norm: BatchNorm,
    /// `nC→C` projection.
    pub out_proj: Pointwise,
    pub out_norm: BatchNorm,
}

impl CrmParams {
    pub fn random(channels: usize, cfg: &CrmConfig, rng: &mut DetRng) -> Self {
        let n = cfg.branches();
        let nc = n * channels;
        let scale = 1.0 / ((channels * cfg.k * cfg.k) as f64).sqrt();
        let mut vals = |len: usize, s: f64| -> Vec<f64> {
            (0..len).map(|_| rng.random_range(-s..s)).collect()
        };
        let shared_conv = ConvWeights {
            out_channels: channels,
            in_channels: channels,
            k: cfg.k,
            weights: vals(channels * channels * cfg.k * cfg.k, scale),
            bias: vals(channels, 0.1),
        };
        let gate = GroupedPointwise {
            weights: vals(nc, 1.5),
            bias: vals(nc, 0.2),
        };
        let out_proj = Pointwise {
            out_channels: channels,
            in_channels: nc,
            weights: vals(channels * nc, 1.0 / (nc as f64).sqrt()),
            bias: vals(channels, 0.1),
        };
        let norm_count = if cfg.shared_branch_norm { 1 } else { n };
        let branch_norms = (0..norm_count).map(|_| BatchNorm::random(channels, rng)).collect();
        Self {
            channels,
            shared_conv,
            branch_norms,
            gate,
            gate_norm: BatchNorm::random(nc, rng),
            out_proj,
            out_norm: BatchNorm::random(channels, rng),
        }
    }

    pub fn validate(&self, cfg: &CrmConfig) -> Result<()> {
        cfg.validate()?;
        let c = self.channels;
        let nc = cfg.branches() * c;
        self.shared_conv.validate()?;
        if self.shared_conv.k != cfg.k
            || self.shared_conv.in_channels != c
            || self.shared_conv.out_channels != c
        {
            return Err(Error::Shape(format!(
                "shared conv must be {c}x{c}x{k}x{k}",
                k = cfg.k
            )));
        }
        let want_norms = if cfg.shared_branch_norm { 1 } else { cfg.branches() };
        if self.branch_norms.len() != want_norms {
            return Err(Error::Shape(format!(
                "{} branch norms, expected {want_norms}",
                self.branch_norms.len()
            )));
        }
        for bn in &self.branch_norms {
            bn.validate(c)?;
        }
        if self.gate.weights.len() != nc || self.gate.bias.len() != nc {
            return Err(Error::Shape(format!("gate must have {nc} channels")));
        }
        self.gate_norm.validate(nc)?;
        let p = &self.out_proj;
        if p.in_channels != nc || p.out_channels != c || p.weights.len() != c * nc || p.bias.len() != c {
            return Err(Error::Shape(format!("output projection must map {nc} -> {c}")));
        }
        self.out_norm.validate(c)
    }

    fn branch_norm(&self, i: usize) -> &BatchNorm {
        &self.branch_norms[i.min(self.branch_norms.len() - 1)]
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Logistic sigmoid kept strictly inside (0, 1).
pub fn sigmoid(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Same-size dilated cross-correlation with zero padding `d·(k−1)/2`.
pub fn dilated_conv(x: &Tensor3, conv: &ConvWeights, d: usize) -> Result<Tensor3> {
    conv.validate()?;
    dilated_conv_padded(x, conv, d, d * (conv.k - 1) / 2)
}

fn dilated_conv_padded(x: &Tensor3, conv: &ConvWeights, d: usize, pad: usize) -> Result<Tensor3> {
    if x.c != conv.in_channels {
        return Err(Error::Shape(format!(
            "input has {} channels, kernel expects {}",
            x.c, conv.in_channels
        )));
    }
    if d == 0 {
        return Err(Error::Shape("dilation must be >= 1".into()));
    }
    let (h, w) = (x.h as isize, x.w as isize);
    let mut out = Tensor3::zeros(conv.out_channels, x.h, x.w);
    for o in 0..conv.out_channels {
        out.plane_mut(o).fill(conv.bias[o]);
        for i in 0..conv.in_channels {
            let src = x.plane(i);
            for ky in 0..conv.k {
                let dy = (ky * d) as isize - pad as isize;
                for kx in 0..conv.k {
                    let wv = conv.weights[conv.index(o, i, ky, kx)];
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = (kx * d) as isize - pad as isize;
                    let y_lo = (-dy).max(0);
                    let y_hi = (h - dy).min(h);
                    let x_lo = (-dx).max(0);
                    let x_hi = (w - dx).min(w);
                    let dst = out.plane_mut(o);
                    for y in y_lo..y_hi {
                        let srow = ((y + dy) * w) as usize;
                        let drow = (y * w) as usize;
                        for xx in x_lo..x_hi {
                            dst[drow + xx as usize] += wv * src[srow + (xx + dx) as usize];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `GELU(BN(conv(x, w, d)))` for one dilation branch.
pub fn branch_forward(x: &Tensor3, params: &CrmParams, branch: usize, d: usize) -> Result<Tensor3> {
    branch_forward_padded(x, params, branch, d, d * (params.shared_conv.k - 1) / 2)
}

fn branch_forward_padded(
    x: &Tensor3,
    params: &CrmParams,
    branch: usize,
    d: usize,
    pad: usize,
) -> Result<Tensor3> {
    let conv = dilated_conv_padded(x, &params.shared_conv, d, pad)?;
    Ok(params.branch_norm(branch).apply(&conv)?.map(gelu))
}

/// `σ(GELU(BN(gate(f_hat))))`; channel `j` of the mask depends only on
/// channel `j` of `f_hat`.
pub fn gate_mask(f_hat: &Tensor3, params: &CrmParams) -> Result<Tensor3> {
    let g = &params.gate;
    if f_hat.c != g.weights.len() || g.bias.len() != g.weights.len() {
        return Err(Error::Shape(format!(
            "gate expects {} channels, got {}",
            g.weights.len(),
            f_hat.c
        )));
    }
    let mut pre = f_hat.clone();
    for c in 0..pre.c {
        let (wv, b) = (g.weights[c], g.bias[c]);
        pre.plane_mut(c).iter_mut().for_each(|v| *v = wv * *v + b);
    }
    Ok(params.gate_norm.apply(&pre)?.map(|v| sigmoid(gelu(v))))
}

fn pointwise(x: &Tensor3, p: &Pointwise) -> Result<Tensor3> {
    if x.c != p.in_channels {
        return Err(Error::Shape(format!(
            "projection expects {} channels, got {}",
            p.in_channels, x.c
        )));
    }
    let mut out = Tensor3::zeros(p.out_channels, x.h, x.w);
    for o in 0..p.out_channels {
        let dst = out.plane_mut(o);
        dst.fill(p.bias[o]);
        for i in 0..p.in_channels {
            let wv = p.weights[o * p.in_channels + i];
            for (dv, sv) in dst.iter_mut().zip(x.plane(i)) {
                *dv += wv * sv;
            }
        }
    }
    Ok(out)
}

/// Full module: `x + GELU(BN(proj(M ⊙ F̂)))`.
pub fn crm_forward(x: &Tensor3, params: &CrmParams, cfg: &CrmConfig) -> Result<Tensor3> {
    forward_with_pad_skew(x, params, cfg, 0)
}

pub(crate) fn forward_with_pad_skew(
    x: &Tensor3,
    params: &CrmParams,
    cfg: &CrmConfig,
    pad_skew: usize,
) -> Result<Tensor3> {
    params.validate(cfg)?;
    if x.c != params.channels {
        return Err(Error::Shape(format!(
            "input has {} channels, module expects {}",
            x.c, params.channels
        )));
    }
    let branches = cfg
        .dilations
        .iter()
        .enumerate()
        .map(|(i, &d)| branch_forward_padded(x, params, i, d, d * (cfg.k - 1) / 2 + pad_skew))
        .collect::<Result<Vec<_>>>()?;
    let f_hat = Tensor3::concat(&branches)?;
    let mask = gate_mask(&f_hat, params)?;
    let mut gated = f_hat;
    for (v, m) in gated.data.iter_mut().zip(&mask.data) {
        *v *= m;
    }
    let proj = params.out_norm.apply(&pointwise(&gated, &params.out_proj)?)?.map(gelu);
    let mut out = x.clone();
    for (o, p) in out.data.iter_mut().zip(&proj.data) {
        *o += p;
    }
    Ok(out)
}
