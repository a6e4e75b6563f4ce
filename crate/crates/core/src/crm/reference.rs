//! Straight-line per-output-element evaluation of the module, used by the
//! self-check as a reference for the optimized path in the parent module.
//! Deliberately naive: every output value is computed from scratch.

use super::{CrmConfig, CrmParams, Tensor3};

fn bn(v: f64, mean: f64, var: f64, gamma: f64, beta: f64, eps: f64) -> f64 {
    (v - mean) / (var + eps).sqrt() * gamma + beta
}

fn gelu(v: f64) -> f64 {
    v * 0.5 * (1.0 + libm::erf(v / 2f64.sqrt()))
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Value of branch `b` (dilation `d`) at `(c, y, x)`.
fn branch_value(x: &Tensor3, p: &CrmParams, cfg: &CrmConfig, b: usize, c: usize, y: usize, xx: usize) -> f64 {
    let k = cfg.k;
    let d = cfg.dilations[b];
    let pad = (d * (k - 1) / 2) as isize;
    let mut acc = p.shared_conv.bias[c];
    for ci in 0..x.c {
        for ky in 0..k {
            for kx in 0..k {
                let sy = y as isize + (ky * d) as isize - pad;
                let sx = xx as isize + (kx * d) as isize - pad;
                if sy < 0 || sx < 0 || sy >= x.h as isize || sx >= x.w as isize {
                    continue;
                }
                let wv = p.shared_conv.weights[((c * x.c + ci) * k + ky) * k + kx];
                acc += wv * x.at(ci, sy as usize, sx as usize);
            }
        }
    }
    let n = &p.branch_norms[if cfg.shared_branch_norm { 0 } else { b }];
    gelu(bn(acc, n.mean[c], n.var[c], n.gamma[c], n.beta[c], n.eps))
}

/// Reference forward pass.
pub fn crm_forward(x: &Tensor3, p: &CrmParams, cfg: &CrmConfig) -> Tensor3 {
    let c_in = x.c;
    let n = cfg.dilations.len();
    let nc = n * c_in;

    // F̂ laid out as [branch][channel] along the concatenated axis.
    let mut f_hat = vec![0.0; nc * x.h * x.w];
    for b in 0..n {
        for c in 0..c_in {
            for y in 0..x.h {
                for xx in 0..x.w {
                    f_hat[((b * c_in + c) * x.h + y) * x.w + xx] = branch_value(x, p, cfg, b, c, y, xx);
                }
            }
        }
    }

    let mut out = x.clone();
    for co in 0..c_in {
        for y in 0..x.h {
            for xx in 0..x.w {
                let mut acc = p.out_proj.bias[co];
                for j in 0..nc {
                    let f = f_hat[(j * x.h + y) * x.w + xx];
                    let g = p.gate.weights[j] * f + p.gate.bias[j];
                    let gn = &p.gate_norm;
                    let m = sigmoid(gelu(bn(g, gn.mean[j], gn.var[j], gn.gamma[j], gn.beta[j], gn.eps)));
                    acc += p.out_proj.weights[co * nc + j] * (m * f);
                }
                let on = &p.out_norm;
                let z = gelu(bn(acc, on.mean[co], on.var[co], on.gamma[co], on.beta[co], on.eps));
                let idx = (co * x.h + y) * x.w + xx;
                out.data[idx] = x.data[idx] + z;
            }
        }
    }
    out
}
