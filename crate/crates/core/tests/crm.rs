mod common;

use common::*;
use docsynth::crm::{
    branch_forward, crm_forward, dilated_conv, gate_mask, gelu, reference, run_selfcheck, BatchNorm,
    ConvWeights, CrmConfig, CrmParams, Pointwise, Preset, SelfCheckOptions, Tensor3,
};
use rand::Rng;

/// Six nested loops over an explicitly zero-padded input.
fn naive_conv(x: &Tensor3, w: &ConvWeights, d: usize) -> Tensor3 {
    let (c, h, wd, k) = (x.c, x.h, x.w, w.k);
    let p = d * (k - 1) / 2;
    let padded = |ch: usize, yy: isize, xx: isize| -> f64 {
        if yy < 0 || xx < 0 || yy >= h as isize || xx >= wd as isize {
            0.0
        } else {
            x.at(ch, yy as usize, xx as usize)
        }
    };
    let mut out = vec![0.0; w.out_channels * h * wd];
    for o in 0..w.out_channels {
        for yy in 0..h {
            for xx in 0..wd {
                let mut s = w.bias[o];
                for i in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = yy as isize + (ky * d) as isize - p as isize;
                            let sx = xx as isize + (kx * d) as isize - p as isize;
                            s += w.weights[w.index(o, i, ky, kx)] * padded(i, sy, sx);
                        }
                    }
                }
                out[(o * h + yy) * wd + xx] = s;
            }
        }
    }
    Tensor3::from_vec(w.out_channels, h, wd, out).unwrap()
}

fn random_conv(c: usize, k: usize, r: &mut rand_chacha::ChaCha8Rng) -> ConvWeights {
    let mut w = ConvWeights::zeros(c, c, k);
    w.weights.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
    w.bias.iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5));
    w
}

#[test]
fn oracle_erf_agrees_with_known_values() {
    for (x, want) in [
        (0.25, 0.2763263901682369),
        (0.5, 0.5204998778130465),
        (1.0, 0.8427007929497149),
        (2.0, 0.9953222650189527),
        (3.5, 0.9999992569016276),
    ] {
        assert!((oracle_erf(x) - want).abs() <= 1e-15, "erf({x})");
        assert_eq!(oracle_erf(-x), -oracle_erf(x));
    }
    for i in -600..600 {
        let x = f64::from(i) / 100.0;
        assert!((oracle_erf(x) - libm::erf(x)).abs() <= 1e-14, "x = {x}");
    }
}

#[test]
fn small_dilated_conv_matches_naive_loops() {
    let mut r = rng(31);
    let x = Tensor3::random(1, 5, 5, &mut r);
    let w = random_conv(1, 3, &mut r);
    let got = dilated_conv(&x, &w, 2).unwrap();
    assert!(got.max_abs_diff(&naive_conv(&x, &w, 2)) <= 1e-12);
}

#[test]
fn identity_kernel_and_zero_input() {
    let mut r = rng(32);
    let x = Tensor3::random(3, 6, 7, &mut r);
    for d in 1..4 {
        assert_eq!(dilated_conv(&x, &ConvWeights::identity(3, 5), d).unwrap(), x);
    }
    let zero = Tensor3::zeros(2, 4, 4);
    let w = ConvWeights {
        bias: vec![0.0; 2],
        ..random_conv(2, 3, &mut r)
    };
    assert_eq!(dilated_conv(&zero, &w, 3).unwrap(), zero);
    assert!(dilated_conv(&x, &random_conv(2, 3, &mut r), 1).is_err());
}

#[test]
fn branches_share_kernel_but_differ() {
    let mut r = rng(33);
    let cfg = CrmConfig {
        k: 3,
        dilations: vec![1, 3],
        shared_branch_norm: false,
    };
    let p = CrmParams::random(4, &cfg, &mut r);
    let x = Tensor3::random(4, 8, 8, &mut r);
    let b1 = branch_forward(&x, &p, 0, 1).unwrap();
    let b3 = branch_forward(&x, &p, 1, 3).unwrap();
    assert!(b1.max_abs_diff(&b3) > 1e-3);
    for (b, d, out) in [(0, 1, &b1), (1, 3, &b3)] {
        let want = p.branch_norms[b].apply(&naive_conv(&x, &p.shared_conv, d)).unwrap().map(oracle_gelu);
        let dev = rel_diff(out, &want);
        assert!(dev <= 1e-12, "branch {b}: {dev:e}");
    }
}

#[test]
fn identity_norm_and_kernel_give_gelu() {
    let mut r = rng(34);
    let cfg = CrmConfig::preset(Preset::Block);
    let mut p = CrmParams::random(3, &cfg, &mut r);
    p.shared_conv = ConvWeights::identity(3, 3);
    p.branch_norms = vec![BatchNorm::identity(3); 3];
    let x = Tensor3::random(3, 5, 5, &mut r);
    let f = branch_forward(&x, &p, 2, 3).unwrap();
    for (a, b) in f.data.iter().zip(&x.data) {
        assert!((a - gelu(*b)).abs() <= 1e-15);
    }
    assert_eq!(gelu(0.0), 0.0);
}

#[test]
fn gate_is_half_with_zero_weights_and_local_per_channel() {
    let mut r = rng(35);
    let cfg = CrmConfig::preset(Preset::Block);
    let mut p = CrmParams::random(2, &cfg, &mut r);
    let f_hat = Tensor3::random(6, 4, 5, &mut r);

    let m = gate_mask(&f_hat, &p).unwrap();
    assert!(m.data.iter().all(|&v| v > 0.0 && v < 1.0));

    // Perturb one channel; only that channel of the mask moves.
    let mut bumped = f_hat.clone();
    let j = 4;
    for v in &mut bumped.data[j * 20..(j + 1) * 20] {
        *v += 0.7;
    }
    let m2 = gate_mask(&bumped, &p).unwrap();
    for ch in 0..6 {
        let same = m.data[ch * 20..(ch + 1) * 20] == m2.data[ch * 20..(ch + 1) * 20];
        assert_eq!(same, ch != j, "channel {ch}");
    }

    p.gate.weights.iter_mut().for_each(|w| *w = 0.0);
    p.gate.bias.iter_mut().for_each(|b| *b = 0.0);
    p.gate_norm = BatchNorm::identity(6);
    let half = gate_mask(&f_hat, &p).unwrap();
    assert!(half.data.iter().all(|&v| v == 0.5));
    assert!(gate_mask(&Tensor3::zeros(5, 2, 2), &p).is_err());
}

#[test]
fn zero_output_path_is_identity() {
    let mut r = rng(36);
    for preset in [Preset::Global, Preset::Block] {
        let cfg = CrmConfig::preset(preset);
        let mut p = CrmParams::random(4, &cfg, &mut r);
        p.out_proj = Pointwise {
            weights: vec![0.0; p.out_proj.weights.len()],
            bias: vec![0.0; 4],
            ..p.out_proj
        };
        p.out_norm = BatchNorm::identity(4);
        let x = Tensor3::random(4, 6, 5, &mut r);
        assert_eq!(crm_forward(&x, &p, &cfg).unwrap(), x);
    }
}

#[test]
fn shapes_are_preserved() {
    let mut r = rng(37);
    let cfg = CrmConfig::preset(Preset::Global);
    let p = CrmParams::random(8, &cfg, &mut r);
    let x = Tensor3::random(8, 16, 16, &mut r);
    assert_eq!(crm_forward(&x, &p, &cfg).unwrap().shape(), (8, 16, 16));
}

#[test]
fn forward_matches_independent_oracle() {
    let mut r = rng(38);
    let block = CrmConfig::preset(Preset::Block);
    let p = CrmParams::random(4, &block, &mut r);
    let x = Tensor3::random(4, 7, 9, &mut r);
    let (want, _) = oracle_crm(&x, &p, &block);
    assert!(rel_diff(&crm_forward(&x, &p, &block).unwrap(), &want) <= 1e-10);

    for preset in [Preset::Global, Preset::Block] {
        for shared in [false, true] {
            let cfg = CrmConfig {
                shared_branch_norm: shared,
                ..CrmConfig::preset(preset)
            };
            for _ in 0..10 {
                let c = r.random_range(1..=5);
                let x = Tensor3::random(c, r.random_range(1..=9), r.random_range(1..=9), &mut r);
                let p = CrmParams::random(c, &cfg, &mut r);
                let (want, mask) = oracle_crm(&x, &p, &cfg);
                let got = crm_forward(&x, &p, &cfg).unwrap();
                assert!(rel_diff(&got, &want) <= 1e-10);
                assert!(rel_diff(&reference::crm_forward(&x, &p, &cfg), &want) <= 1e-10);
                assert!(mask.iter().all(|&m| m > 0.0 && m < 1.0));
            }
        }
    }
}

#[test]
fn selfcheck_passes_and_catches_padding_fault() {
    let ok = run_selfcheck(&SelfCheckOptions {
        cases: 5,
        ..SelfCheckOptions::default()
    })
    .unwrap();
    assert!(ok.passed(), "{:?}", ok.checks);
    let bad = run_selfcheck(&SelfCheckOptions {
        cases: 5,
        inject_padding_fault: true,
        ..SelfCheckOptions::default()
    })
    .unwrap();
    assert!(!bad.passed());
}

#[test]
fn params_validate_and_serialize() {
    let mut r = rng(39);
    let cfg = CrmConfig::preset(Preset::Global);
    let p = CrmParams::random(3, &cfg, &mut r);
    p.validate(&cfg).unwrap();
    let back: CrmParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
    assert_eq!(back, p);
    assert!(p.validate(&CrmConfig::preset(Preset::Block)).is_err());
}
