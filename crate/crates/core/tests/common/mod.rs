//! Independent oracles and fixtures shared by the integration tests.
//!
//! Everything here is written from the definitions, deliberately without
//! reusing the library's internals.
#![allow(dead_code)]

use docsynth::crm::{CrmConfig, CrmParams, Tensor3};
use docsynth::layout::{Candidate, GridCell, Layout, PageSpec, PlacedElement};
use docsynth::pool::{make_synthetic_pool, ElementId, ElementPool, SyntheticPoolSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 12 categories × 25 elements, seed 0.
pub fn reference_pool() -> ElementPool {
    make_synthetic_pool(&SyntheticPoolSpec::new(12, 25, 0)).unwrap()
}

pub fn elem(id: u32, x: u32, y: u32, w: u32, h: u32) -> PlacedElement {
    PlacedElement {
        element_id: ElementId(id),
        category: "c".into(),
        x,
        y,
        w,
        h,
        scale: 1.0,
    }
}

pub fn cand(id: u32, w: u32, h: u32) -> Candidate {
    Candidate {
        id: ElementId(id),
        category: "c".into(),
        w,
        h,
    }
}

fn interiors_intersect(ax: i64, ay: i64, aw: i64, ah: i64, b: &PlacedElement) -> bool {
    let (bx, by, bw, bh) = (b.x as i64, b.y as i64, b.w as i64, b.h as i64);
    ax < bx + bw && bx < ax + aw && ay < by + bh && by < ay + ah
}

/// Every rectangle over the grid lines, shrunk by `gutter`, that has
/// positive area and touches no placed element's interior.
pub fn oracle_mesh(layout: &Layout, gutter: u32) -> Vec<GridCell> {
    let p = &layout.page;
    let mut vs = vec![p.margin_px, p.width_px - p.margin_px];
    let mut hs = vec![p.margin_px, p.height_px - p.margin_px];
    for e in &layout.placed {
        vs.extend([e.x, e.x + e.w]);
        hs.extend([e.y, e.y + e.h]);
    }
    vs.sort();
    vs.dedup();
    hs.sort();
    hs.dedup();
    let g = gutter as i64;
    let mut out = Vec::new();
    for (i, &va) in vs.iter().enumerate() {
        for &vb in &vs[i + 1..] {
            for (k, &ha) in hs.iter().enumerate() {
                for &hb in &hs[k + 1..] {
                    let (x0, x1) = (va as i64 + g, vb as i64 - g);
                    let (y0, y1) = (ha as i64 + g, hb as i64 - g);
                    if x1 <= x0 || y1 <= y0 {
                        continue;
                    }
                    if layout
                        .placed
                        .iter()
                        .any(|e| interiors_intersect(x0, y0, x1 - x0, y1 - y0, e))
                    {
                        continue;
                    }
                    out.push(GridCell {
                        x: x0 as u32,
                        y: y0 as u32,
                        w: (x1 - x0) as u32,
                        h: (y1 - y0) as u32,
                    });
                }
            }
        }
    }
    out
}

/// Exhaustive best pair: max fill rate, then smaller cell area, then lower
/// candidate id, then cell `(y, x, w, h)`.
pub fn oracle_best_fit(cands: &[Candidate], cells: &[GridCell]) -> Option<(ElementId, GridCell, f64)> {
    let mut best: Option<(ElementId, GridCell, f64)> = None;
    for c in cands {
        for cell in cells {
            if c.w > cell.w || c.h > cell.h {
                continue;
            }
            let fr = (c.w as u64 * c.h as u64) as f64 / (cell.w as u64 * cell.h as u64) as f64;
            let better = match &best {
                None => true,
                Some((bid, bcell, bfr)) => {
                    let a = cell.w as u64 * cell.h as u64;
                    let ba = bcell.w as u64 * bcell.h as u64;
                    if fr != *bfr {
                        fr > *bfr
                    } else if a != ba {
                        a < ba
                    } else if c.id != *bid {
                        c.id < *bid
                    } else {
                        (cell.y, cell.x, cell.w, cell.h) < (bcell.y, bcell.x, bcell.w, bcell.h)
                    }
                }
            };
            if better {
                best = Some((c.id, *cell, fr));
            }
        }
    }
    best
}

/// Random non-overlapping layout of up to `max_placed` elements on a small
/// page, with sizes on a coarse lattice so that ties are common.
pub fn random_partial_layout(r: &mut ChaCha8Rng, max_placed: usize) -> Layout {
    let page = PageSpec {
        width_px: r.random_range(120..=260),
        height_px: r.random_range(120..=260),
        margin_px: r.random_range(0..=12),
    };
    let mut layout = Layout::empty(page, 0);
    let target = r.random_range(1..=max_placed);
    let mut attempts = 0;
    while layout.placed.len() < target && attempts < 200 {
        attempts += 1;
        let w = 10 * r.random_range(1..=8);
        let h = 10 * r.random_range(1..=8);
        if w > page.interior_width() || h > page.interior_height() {
            continue;
        }
        let x = page.margin_px + r.random_range(0..=page.interior_width() - w);
        let y = page.margin_px + r.random_range(0..=page.interior_height() - h);
        let e = elem(layout.placed.len() as u32 + 1000, x, y, w, h);
        if layout.placed.iter().all(|o| o.overlap_area(&e) == 0) {
            layout.placed.push(e);
        }
    }
    layout
}

pub fn random_candidates(r: &mut ChaCha8Rng, max: usize) -> Vec<Candidate> {
    let n = r.random_range(1..=max);
    let mut ids: Vec<u32> = (0..50).collect();
    // Shuffled ids so candidate order and id order differ.
    for i in (1..ids.len()).rev() {
        ids.swap(i, r.random_range(0..=i));
    }
    (0..n)
        .map(|i| cand(ids[i], 10 * r.random_range(1..=10), 10 * r.random_range(1..=10)))
        .collect()
}

/// Align sum transcribed from the definition: per element, the minimum over
/// the six channels of `-ln(1 - Δ)`, Δ the smallest normalized gap to any
/// other element in that channel, clamped to `[0, 1 - 1e-6]`.
pub fn formula_align_sum(layout: &Layout) -> f64 {
    let n = layout.placed.len();
    if n < 2 {
        return 0.0;
    }
    let pw = layout.page.width_px as f64;
    let ph = layout.page.height_px as f64;
    let feats: Vec<[f64; 6]> = layout
        .placed
        .iter()
        .map(|e| {
            let l = e.x as f64 / pw;
            let r = (e.x + e.w) as f64 / pw;
            let t = e.y as f64 / ph;
            let b = (e.y + e.h) as f64 / ph;
            [l, (l + r) / 2.0, r, t, (t + b) / 2.0, b]
        })
        .collect();
    let mut total = 0.0;
    for i in 0..n {
        let mut per_channel = Vec::new();
        for (k, &own) in feats[i].iter().enumerate() {
            let mut delta = f64::MAX;
            for (j, other) in feats.iter().enumerate() {
                if j != i {
                    delta = delta.min((own - other[k]).abs());
                }
            }
            let delta = delta.clamp(0.0, 1.0 - 1e-6);
            per_channel.push(-(1.0 - delta).ln());
        }
        total += per_channel.into_iter().fold(f64::MAX, f64::min);
    }
    total
}

pub fn formula_density(layout: &Layout) -> f64 {
    let sum: f64 = layout.placed.iter().map(|e| e.w as f64 * e.h as f64).sum();
    sum / (layout.page.width_px as f64 * layout.page.height_px as f64)
}

/// Random layout of 1..=max elements anywhere on a random page (overlaps
/// allowed).
pub fn random_small_layout(r: &mut ChaCha8Rng, max: usize) -> Layout {
    let page = PageSpec {
        width_px: r.random_range(200..=1600),
        height_px: r.random_range(200..=1600),
        margin_px: r.random_range(0..=20),
    };
    let mut layout = Layout::empty(page, 0);
    for id in 0..r.random_range(1..=max as u32) {
        let w = r.random_range(1..=page.interior_width());
        let h = r.random_range(1..=page.interior_height());
        let x = page.margin_px + r.random_range(0..=page.interior_width() - w);
        let y = page.margin_px + r.random_range(0..=page.interior_height() - h);
        layout.placed.push(elem(id, x, y, w, h));
    }
    layout
}

/// `erf(x) = 2/√π · e^{-x²} · Σ 2ⁿ x^{2n+1} / (1·3·…·(2n+1))`. Every term
/// is positive, so the sum carries no cancellation error.
pub fn oracle_erf(x: f64) -> f64 {
    if x.abs() > 6.0 {
        return x.signum();
    }
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term.abs() > sum.abs() * 1e-18 {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 / std::f64::consts::PI.sqrt() * (-x2).exp() * sum
}

pub fn oracle_gelu(v: f64) -> f64 {
    0.5 * v * (1.0 + oracle_erf(v / 2f64.sqrt()))
}

fn oracle_sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Straight-line forward pass written against the parameter layout:
/// shared dilated conv per branch (zero padding keeping size), per-branch
/// (or shared) BN and GELU, concatenation, grouped 1×1 gate with BN, GELU
/// and sigmoid, gating, 1×1 projection, BN, GELU and the residual add.
/// Returns the output and the gate mask.
pub fn oracle_crm(x: &Tensor3, p: &CrmParams, cfg: &CrmConfig) -> (Tensor3, Vec<f64>) {
    let (c, h, w) = (x.c, x.h, x.w);
    let k = cfg.k;
    let n = cfg.dilations.len();
    let idx = |ch: usize, yy: usize, xx: usize| (ch * h + yy) * w + xx;

    // Zero-padded copy per dilation, then a plain valid correlation.
    let mut fhat = vec![0.0; n * c * h * w];
    for (b, &d) in cfg.dilations.iter().enumerate() {
        let pad = d * (k - 1) / 2;
        let (hp, wp) = (h + 2 * pad, w + 2 * pad);
        let mut padded = vec![0.0; c * hp * wp];
        for ch in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    padded[(ch * hp + yy + pad) * wp + xx + pad] = x.data[idx(ch, yy, xx)];
                }
            }
        }
        let norm = if cfg.shared_branch_norm { &p.branch_norms[0] } else { &p.branch_norms[b] };
        for o in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    let mut s = p.shared_conv.bias[o];
                    for i in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let wt = p.shared_conv.weights[((o * c + i) * k + ky) * k + kx];
                                s += wt * padded[(i * hp + yy + ky * d) * wp + xx + kx * d];
                            }
                        }
                    }
                    let z = (s - norm.mean[o]) / (norm.var[o] + norm.eps).sqrt() * norm.gamma[o]
                        + norm.beta[o];
                    fhat[((b * c + o) * h + yy) * w + xx] = oracle_gelu(z);
                }
            }
        }
    }

    let nc = n * c;
    let gn = &p.gate_norm;
    let mut mask = vec![0.0; nc * h * w];
    for j in 0..nc {
        for q in 0..h * w {
            let v = p.gate.weights[j] * fhat[j * h * w + q] + p.gate.bias[j];
            let z = (v - gn.mean[j]) / (gn.var[j] + gn.eps).sqrt() * gn.gamma[j] + gn.beta[j];
            mask[j * h * w + q] = oracle_sigmoid(oracle_gelu(z));
        }
    }

    let on = &p.out_norm;
    let mut out = x.data.clone();
    for o in 0..c {
        for q in 0..h * w {
            let mut s = p.out_proj.bias[o];
            for j in 0..nc {
                s += p.out_proj.weights[o * nc + j] * mask[j * h * w + q] * fhat[j * h * w + q];
            }
            let z = (s - on.mean[o]) / (on.var[o] + on.eps).sqrt() * on.gamma[o] + on.beta[o];
            out[o * h * w + q] += oracle_gelu(z);
        }
    }
    (Tensor3::from_vec(c, h, w, out).unwrap(), mask)
}

pub fn rel_diff(a: &Tensor3, b: &Tensor3) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let num = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.data.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    num / den
}
