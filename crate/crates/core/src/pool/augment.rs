//! Augmentation pipeline for rare categories.
//!
//! Stages run in a fixed order: flip, brightness/contrast, crop, edge
//! extraction, elastic distortion with additive noise. Each stage's random
//! draws are resolved into a concrete [`AugOp`] first and the raster is then
//! produced by [`replay_ops`], so a record's lineage always reproduces it.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ElementId, ElementPool, ElementRecord, Provenance, Raster};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, DetRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Categories with fewer records than this are padded.
    pub min_count: usize,
    /// Applied independently to the horizontal and vertical flip.
    pub p_flip: f64,
    pub p_bc: f64,
    pub p_crop: f64,
    pub p_edge: f64,
    /// Kept area fraction of a crop, `[low, high]`.
    pub crop_area_range: [f64; 2],
    /// Relative brightness/contrast range (±).
    pub bc_delta: f64,
    pub elastic_alpha: f64,
    pub elastic_sigma: f64,
    /// Noise std on a [0, 1] intensity scale.
    pub noise_std: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            min_count: 100,
            p_flip: 0.5,
            p_bc: 0.5,
            p_crop: 0.7,
            p_edge: 0.2,
            crop_area_range: [0.5, 0.9],
            bc_delta: 0.2,
            elastic_alpha: 8.0,
            elastic_sigma: 4.0,
            noise_std: 0.02,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_flip", self.p_flip),
            ("p_bc", self.p_bc),
            ("p_crop", self.p_crop),
            ("p_edge", self.p_edge),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        let [lo, hi] = self.crop_area_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!(
                "crop_area_range [{lo}, {hi}] must satisfy 0 < low <= high <= 1"
            )));
        }
        if !(self.bc_delta >= 0.0 && self.bc_delta < 1.0) {
            return Err(Error::Config("bc_delta must lie in [0, 1)".into()));
        }
        if self.elastic_alpha < 0.0 || self.elastic_sigma <= 0.0 || self.noise_std < 0.0 {
            return Err(Error::Config(
                "elastic_alpha and noise_std must be >= 0, elastic_sigma > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One resolved augmentation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugOp {
    FlipHorizontal,
    FlipVertical,
    /// `out = (v - 127.5) * contrast + 127.5 + 255 * brightness`
    BrightnessContrast { contrast: f64, brightness: f64 },
    Crop { x: u32, y: u32, w: u32, h: u32 },
    Edges,
    /// Displacement and noise fields are drawn from `seed`.
    ElasticNoise {
        seed: u64,
        alpha: f64,
        sigma: f64,
        noise_std: f64,
    },
}

/// Draws the op list for a raster of the given size.
pub fn sample_ops(width: u32, height: u32, cfg: &AugmentConfig, rng: &mut DetRng) -> Vec<AugOp> {
    let mut ops = Vec::new();
    let (w, h) = (width, height);
    if rng.random_bool(cfg.p_flip) {
        ops.push(AugOp::FlipHorizontal);
    }
    if rng.random_bool(cfg.p_flip) {
        ops.push(AugOp::FlipVertical);
    }
    if rng.random_bool(cfg.p_bc) {
        let d = cfg.bc_delta;
        ops.push(AugOp::BrightnessContrast {
            contrast: rng.random_range(1.0 - d..=1.0 + d),
            brightness: rng.random_range(-d..=d),
        });
    }
    if rng.random_bool(cfg.p_crop) {
        let [lo, hi] = cfg.crop_area_range;
        let target = rng.random_range(lo..=hi);
        if let Some((cw, ch)) = crop_dims(w, h, target, lo, hi) {
            let x = rng.random_range(0..=w - cw);
            let y = rng.random_range(0..=h - ch);
            ops.push(AugOp::Crop { x, y, w: cw, h: ch });
        }
    }
    if rng.random_bool(cfg.p_edge) {
        ops.push(AugOp::Edges);
    }
    if cfg.elastic_alpha > 0.0 || cfg.noise_std > 0.0 {
        ops.push(AugOp::ElasticNoise {
            seed: rng.random(),
            alpha: cfg.elastic_alpha,
            sigma: cfg.elastic_sigma,
            noise_std: cfg.noise_std,
        });
    }
    ops
}

/// Integer crop size closest to `target` area fraction that keeps the aspect
/// ratio as well as rounding allows and whose realized fraction lies in
/// `[lo, hi]`. Thin rasters fall back to any in-range size. `None` only when
/// no integer size lands in range.
fn crop_dims(w: u32, h: u32, target: f64, lo: f64, hi: f64) -> Option<(u32, u32)> {
    let s = target.sqrt();
    let total = f64::from(w) * f64::from(h);
    let ws = f64::from(w) * s;
    let hs = f64::from(h) * s;
    let mut best: Option<(f64, (u32, u32))> = None;
    for cw in [ws.floor(), ws.ceil()] {
        for ch in [hs.floor(), hs.ceil()] {
            let cw = (cw as u32).clamp(1, w);
            let ch = (ch as u32).clamp(1, h);
            let frac = f64::from(cw) * f64::from(ch) / total;
            if frac < lo || frac > hi {
                continue;
            }
            let err = (frac - target).abs();
            if best.is_none_or(|(e, _)| err < e) {
                best = Some((err, (cw, ch)));
            }
        }
    }
    best.map(|(_, d)| d).or_else(|| crop_dims_any(w, h, target, lo, hi))
}

/// Exhaustive fallback: closest in-range fraction, then closest aspect ratio.
fn crop_dims_any(w: u32, h: u32, target: f64, lo: f64, hi: f64) -> Option<(u32, u32)> {
    let total = f64::from(w) * f64::from(h);
    let aspect = f64::from(w) / f64::from(h);
    let mut best: Option<((f64, f64), (u32, u32))> = None;
    for cw in 1..=w {
        let ideal = (target * total / f64::from(cw)).round() as u32;
        for ch in [ideal.saturating_sub(1), ideal, ideal + 1] {
            if ch == 0 || ch > h {
                continue;
            }
            let frac = f64::from(cw) * f64::from(ch) / total;
            if frac < lo || frac > hi {
                continue;
            }
            let key = ((frac - target).abs(), (f64::from(cw) / f64::from(ch) / aspect).ln().abs());
            if best.is_none_or(|(k, _)| key < k) {
                best = Some((key, (cw, ch)));
            }
        }
    }
    best.map(|(_, d)| d)
}

/// Applies `ops` to `raster` in order.
pub fn replay_ops(raster: &Raster, ops: &[AugOp]) -> Raster {
    let mut img = raster.clone();
    for op in ops {
        img = match *op {
            AugOp::FlipHorizontal => image::imageops::flip_horizontal(&img),
            AugOp::FlipVertical => image::imageops::flip_vertical(&img),
            AugOp::BrightnessContrast {
                contrast,
                brightness,
            } => brightness_contrast(&img, contrast, brightness),
            AugOp::Crop { x, y, w, h } => image::imageops::crop_imm(&img, x, y, w, h).to_image(),
            AugOp::Edges => sobel_edges(&img),
            AugOp::ElasticNoise {
                seed,
                alpha,
                sigma,
                noise_std,
            } => elastic_noise(&img, seed, alpha, sigma, noise_std),
        };
    }
    img
}

/// Produces an augmented copy of `elem` with id `new_id`; all randomness
/// comes from `seed`, which is recorded in the lineage.
pub fn apply_augmentation(
    elem: &ElementRecord,
    cfg: &AugmentConfig,
    new_id: ElementId,
    seed: u64,
) -> Result<ElementRecord> {
    let mut rng = rng_from_seed(seed);
    let ops = sample_ops(elem.width(), elem.height(), cfg, &mut rng);
    let raster = replay_ops(elem.raster(), &ops);
    ElementRecord::new(
        new_id,
        elem.category.clone(),
        raster,
        Provenance::Augmented {
            parent: elem.id,
            ops,
            seed,
        },
    )
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AugmentReport {
    /// Augmented records added per category.
    pub added: BTreeMap<String, usize>,
    /// Rare categories with no originals to augment from.
    pub empty_categories: Vec<String>,
}

/// Pads every category holding fewer than `cfg.min_count` records with
/// augmented copies of its originals (round-robin over parents). New ids
/// continue after the pool's largest id in category order; each record's
/// stream is seeded by `(master_seed, new id)`.
pub fn augment_rare_categories(
    pool: &ElementPool,
    cfg: &AugmentConfig,
    master_seed: u64,
) -> Result<(ElementPool, AugmentReport)> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::Pool("cannot augment an empty pool".into()));
    }
    let mut next_id = pool.max_id().map_or(0, |id| id.0 + 1);
    let mut jobs: Vec<(&ElementRecord, ElementId)> = Vec::new();
    let mut report = AugmentReport::default();
    for (name, recs) in pool.categories() {
        if recs.len() >= cfg.min_count {
            continue;
        }
        let parents: Vec<&ElementRecord> = recs
            .iter()
            .filter(|r| !r.provenance.is_augmented())
            .collect();
        if parents.is_empty() {
            log::warn!("category {name:?} has no originals; left as is");
            report.empty_categories.push(name.clone());
            continue;
        }
        let deficit = cfg.min_count - recs.len();
        for k in 0..deficit {
            jobs.push((parents[k % parents.len()], ElementId(next_id)));
            next_id = next_id
                .checked_add(1)
                .ok_or_else(|| Error::Pool("element id space exhausted".into()))?;
        }
        report.added.insert(name.clone(), deficit);
    }
    let extra = jobs
        .par_iter()
        .map(|(parent, id)| apply_augmentation(parent, cfg, *id, derive_seed(master_seed, u64::from(id.0))))
        .collect::<Result<Vec<_>>>()?;
    let mut out = pool.clone();
    out.extend(extra)?;
    Ok((out, report))
}

fn brightness_contrast(img: &Raster, contrast: f64, brightness: f64) -> Raster {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in p.0.iter_mut() {
            let v = (f64::from(*c) - 127.5) * contrast + 127.5 + 255.0 * brightness;
            *c = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

fn luma(img: &Raster) -> Vec<f64> {
    img.pixels()
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect()
}

/// Raw Sobel gradient magnitude of the luma channel with replicated borders,
/// row-major.
pub fn sobel_magnitude(img: &Raster) -> Vec<f64> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let g = luma(img);
    let at = |x: i64, y: i64| -> f64 {
        let xc = x.clamp(0, w - 1);
        let yc = y.clamp(0, h - 1);
        g[(yc * w + xc) as usize]
    };
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            out.push(gx.hypot(gy));
        }
    }
    out
}

/// Sobel edge map scaled so the strongest response is 255, replicated to
/// all three channels. Flat images map to all zeros.
pub fn sobel_edges(img: &Raster) -> Raster {
    let mag = sobel_magnitude(img);
    let peak = mag.iter().copied().fold(0.0_f64, f64::max);
    let mut out = Raster::new(img.width(), img.height());
    for (p, m) in out.pixels_mut().zip(mag) {
        let v = if peak > 0.0 {
            (m / peak * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        };
        p.0 = [v, v, v];
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn blur(field: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in kernel.iter().enumerate() {
                let xx = (x as i64 + i as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * field[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in kernel.iter().enumerate() {
                let yy = (y as i64 + i as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn elastic_noise(img: &Raster, seed: u64, alpha: f64, sigma: f64, noise_std: f64) -> Raster {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut rng = rng_from_seed(seed);
    let mut out = img.clone();

    if alpha > 0.0 {
        let kernel = gaussian_kernel(sigma);
        let mut field = || {
            let raw: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
            blur(&raw, w, h, &kernel)
        };
        let dx = field();
        let dy = field();
        let sample = |x: f64, y: f64, c: usize| -> f64 {
            let x = x.clamp(0.0, (w - 1) as f64);
            let y = y.clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            let p = |xx: usize, yy: usize| f64::from(img.get_pixel(xx as u32, yy as u32)[c]);
            let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
            let bot = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
            top * (1.0 - fy) + bot * fy
        };
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let sx = x as f64 + alpha * dx[i];
                let sy = y as f64 + alpha * dy[i];
                let px = out.get_pixel_mut(x as u32, y as u32);
                for c in 0..3 {
                    px[c] = sample(sx, sy, c).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }

    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std * 255.0).expect("finite std");
        for p in out.pixels_mut() {
            for c in p.0.iter_mut() {
                let v = f64::from(*c) + normal.sample(&mut rng);
                *c = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn gradient(w: u32, h: u32) -> Raster {
        Raster::from_fn(w, h, |x, y| Rgb([(x * 7 % 256) as u8, (y * 13 % 256) as u8, ((x + y) % 256) as u8]))
    }

    fn only(cfg_mut: impl FnOnce(&mut AugmentConfig)) -> AugmentConfig {
        let mut cfg = AugmentConfig {
            p_flip: 0.0,
            p_bc: 0.0,
            p_crop: 0.0,
            p_edge: 0.0,
            elastic_alpha: 0.0,
            noise_std: 0.0,
            ..AugmentConfig::default()
        };
        cfg_mut(&mut cfg);
        cfg
    }

    #[test]
    fn defaults_match_pipeline_constants() {
        let c = AugmentConfig::default();
        assert_eq!(c.min_count, 100);
        assert_eq!((c.p_flip, c.p_bc, c.p_crop, c.p_edge), (0.5, 0.5, 0.7, 0.2));
        assert_eq!(c.crop_area_range, [0.5, 0.9]);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(only(|c| c.p_crop = 1.5).validate().is_err());
        assert!(only(|c| c.crop_area_range = [0.9, 0.5]).validate().is_err());
        assert!(only(|c| c.crop_area_range = [0.0, 0.5]).validate().is_err());
    }

    #[test]
    fn double_horizontal_flip_is_identity() {
        let img = gradient(17, 9);
        let twice = replay_ops(&img, &[AugOp::FlipHorizontal, AugOp::FlipHorizontal]);
        assert_eq!(twice, img);
        let once = replay_ops(&img, &[AugOp::FlipHorizontal]);
        assert_ne!(once, img);
    }

    #[test]
    fn forced_crop_area_in_range() {
        let cfg = only(|c| c.p_crop = 1.0);
        for seed in 0..200 {
            let mut rng = rng_from_seed(seed);
            let (w, h) = (5 + (seed as u32 % 90), 4 + (seed as u32 * 7 % 60));
            let ops = sample_ops(w, h, &cfg, &mut rng);
            let [AugOp::Crop { w: cw, h: ch, x, y }] = ops[..] else {
                panic!("expected a single crop for {w}x{h}, got {ops:?}");
            };
            let frac = f64::from(cw * ch) / f64::from(w * h);
            assert!((0.5..=0.9).contains(&frac), "{w}x{h} -> {cw}x{ch} ({frac})");
            assert!(x + cw <= w && y + ch <= h);
        }
    }

    #[test]
    fn one_pixel_raster_survives_every_stage() {
        let cfg = AugmentConfig {
            p_flip: 1.0,
            p_bc: 1.0,
            p_crop: 1.0,
            p_edge: 1.0,
            ..AugmentConfig::default()
        };
        let img = Raster::from_pixel(1, 1, Rgb([10, 20, 30]));
        let mut rng = rng_from_seed(3);
        let ops = sample_ops(1, 1, &cfg, &mut rng);
        assert!(!ops.iter().any(|o| matches!(o, AugOp::Crop { .. })));
        let out = replay_ops(&img, &ops);
        assert_eq!(out.dimensions(), (1, 1));
    }

    #[test]
    fn brightness_contrast_keeps_dimensions() {
        let img = gradient(11, 6);
        let out = replay_ops(
            &img,
            &[AugOp::BrightnessContrast {
                contrast: 1.2,
                brightness: -0.2,
            }],
        );
        assert_eq!(out.dimensions(), img.dimensions());
    }

    #[test]
    fn edges_of_constant_image_are_zero() {
        let img = Raster::from_pixel(8, 5, Rgb([200, 100, 50]));
        assert!(sobel_edges(&img).pixels().all(|p| p.0 == [0, 0, 0]));
    }

    #[test]
    fn vertical_step_peaks_at_step() {
        let img = Raster::from_fn(10, 6, |x, _| if x < 5 { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) });
        let mag = sobel_magnitude(&img);
        let peak = mag.iter().copied().fold(0.0, f64::max);
        for y in 0..6 {
            for x in 0..10 {
                let m = mag[y * 10 + x];
                if x == 4 || x == 5 {
                    assert_eq!(m, peak);
                } else {
                    assert_eq!(m, 0.0);
                }
            }
        }
        assert_eq!(sobel_edges(&img).get_pixel(4, 2).0, [255, 255, 255]);
    }

    #[test]
    fn ramp_matches_sliding_window_oracle() {
        // Independent oracle: explicit 3x3 kernels on a replicate-padded copy.
        let img = Raster::from_fn(5, 5, |x, y| {
            let v = (x * 40 + y * 15) as u8;
            Rgb([v, v, v])
        });
        let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
        let ky = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
        let mut padded = [[0.0f64; 7]; 7];
        for (py, row) in padded.iter_mut().enumerate() {
            for (px, v) in row.iter_mut().enumerate() {
                let sx = (px as i32 - 1).clamp(0, 4) as u32;
                let sy = (py as i32 - 1).clamp(0, 4) as u32;
                *v = f64::from(img.get_pixel(sx, sy)[0]);
            }
        }
        let mag = sobel_magnitude(&img);
        for y in 0..5 {
            for x in 0..5 {
                let (mut gx, mut gy) = (0.0, 0.0);
                for j in 0..3 {
                    for i in 0..3 {
                        gx += kx[j][i] * padded[y + j][x + i];
                        gy += ky[j][i] * padded[y + j][x + i];
                    }
                }
                let expect = (gx * gx + gy * gy).sqrt();
                assert!((mag[y * 5 + x] - expect).abs() < 1e-9, "({x},{y})");
            }
        }
    }

    #[test]
    fn lineage_replay_reproduces_raster() {
        let parent = ElementRecord::new(
            ElementId(3),
            "t",
            gradient(40, 30),
            Provenance::Source {
                page: "p".into(),
                bbox: [0, 0, 40, 30],
            },
        )
        .unwrap();
        let cfg = AugmentConfig::default();
        for seed in 0..20 {
            let child = apply_augmentation(&parent, &cfg, ElementId(99), seed).unwrap();
            let Provenance::Augmented { parent: pid, ops, seed: s } = &child.provenance else {
                panic!("missing lineage");
            };
            assert_eq!(*pid, ElementId(3));
            assert_eq!(*s, seed);
            assert!(!ops.is_empty());
            assert_eq!(&replay_ops(parent.raster(), ops), child.raster());
        }
    }
}
