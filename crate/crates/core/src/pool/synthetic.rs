//! Procedural element pool for self-contained runs and tests.
//!
//! Categories cycle through three looks (text-like line blocks, ruled
//! tables, shaded figures) with a per-category tint so that crops of
//! different categories are visually distinct.

use image::Rgb;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ElementId, ElementPool, ElementRecord, Provenance, Raster};
use crate::error::{Error, Result};
use crate::layout::PageSpec;
use crate::rng::{derive_seed, rng_from_seed, DetRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Text,
    Table,
    Figure,
}

const NAMES: [(&str, ElementKind); 12] = [
    ("paragraph", ElementKind::Text),
    ("table", ElementKind::Table),
    ("figure", ElementKind::Figure),
    ("title", ElementKind::Text),
    ("code_block", ElementKind::Table),
    ("chart", ElementKind::Figure),
    ("list", ElementKind::Text),
    ("form", ElementKind::Table),
    ("photo", ElementKind::Figure),
    ("caption", ElementKind::Text),
    ("sidebar", ElementKind::Table),
    ("formula", ElementKind::Figure),
];

fn category(index: usize) -> (String, ElementKind) {
    match NAMES.get(index) {
        Some((n, k)) => (n.to_string(), *k),
        None => (
            format!("category_{index:03}"),
            NAMES[index % NAMES.len()].1,
        ),
    }
}

/// Element size distribution, in pixels (inclusive ranges).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeProfile {
    Fixed { w: u32, h: u32 },
    Range { w: [u32; 2], h: [u32; 2] },
    /// Kind-dependent document-like sizes: mostly small text blocks with a
    /// heavy tail of large tables and figures.
    Mixed,
}

impl SizeProfile {
    fn ranges(&self, kind: ElementKind) -> ([u32; 2], [u32; 2]) {
        match *self {
            SizeProfile::Fixed { w, h } => ([w, w], [h, h]),
            SizeProfile::Range { w, h } => (w, h),
            SizeProfile::Mixed => match kind {
                ElementKind::Text => ([140, 480], [24, 110]),
                ElementKind::Table => ([280, 700], [110, 380]),
                ElementKind::Figure => ([180, 560], [140, 440]),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPoolSpec {
    pub categories: usize,
    pub per_category: usize,
    pub sizes: SizeProfile,
    pub seed: u64,
    pub page: PageSpec,
}

impl SyntheticPoolSpec {
    pub fn new(categories: usize, per_category: usize, seed: u64) -> Self {
        Self {
            categories,
            per_category,
            sizes: SizeProfile::Mixed,
            seed,
            page: PageSpec::default(),
        }
    }
}

/// Builds a deterministic pool; ids run `0..categories*per_category` in
/// category-major order.
pub fn make_synthetic_pool(spec: &SyntheticPoolSpec) -> Result<ElementPool> {
    if spec.categories == 0 || spec.per_category == 0 {
        return Err(Error::Config("synthetic pool counts must be >= 1".into()));
    }
    spec.page.validate()?;
    let (iw, ih) = (spec.page.interior_width(), spec.page.interior_height());
    let mut records = Vec::with_capacity(spec.categories * spec.per_category);
    let mut names = Vec::with_capacity(spec.categories);
    for ci in 0..spec.categories {
        let (name, kind) = category(ci);
        let (wr, hr) = spec.sizes.ranges(kind);
        if wr[0] == 0 || hr[0] == 0 || wr[0] > wr[1] || hr[0] > hr[1] {
            return Err(Error::Config(format!("invalid size range {wr:?} x {hr:?}")));
        }
        if wr[1] > iw || hr[1] > ih {
            return Err(Error::Config(format!(
                "size range {wr:?} x {hr:?} exceeds page interior {iw}x{ih}"
            )));
        }
        let tint = tint(ci, spec.categories);
        for k in 0..spec.per_category {
            let id = ElementId(u32::try_from(ci * spec.per_category + k).map_err(|_| {
                Error::Config("synthetic pool too large for 32-bit ids".into())
            })?);
            let seed = derive_seed(spec.seed, u64::from(id.0));
            let mut rng = rng_from_seed(seed);
            let w = rng.random_range(wr[0]..=wr[1]);
            let h = rng.random_range(hr[0]..=hr[1]);
            let raster = draw(kind, w, h, tint, &mut rng);
            records.push(ElementRecord::new(
                id,
                name.clone(),
                raster,
                Provenance::Synthetic { seed, kind },
            )?);
        }
        names.push(name);
    }
    ElementPool::from_records(records, names, Some(spec.page))
}

fn tint(index: usize, count: usize) -> [f64; 3] {
    let hue = index as f64 / count.max(1) as f64 * 6.0;
    let x = 1.0 - ((hue % 2.0) - 1.0).abs();
    let (r, g, b) = match hue as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r, g, b]
}

fn shade(tint: [f64; 3], strength: f64, base: f64) -> Rgb<u8> {
    let ch = |t: f64| (base * (1.0 - strength * (1.0 - t))).round().clamp(0.0, 255.0) as u8;
    Rgb([ch(tint[0]), ch(tint[1]), ch(tint[2])])
}

fn draw(kind: ElementKind, w: u32, h: u32, tint: [f64; 3], rng: &mut DetRng) -> Raster {
    let background = shade(tint, 0.08, 250.0);
    let ink = shade(tint, 0.6, 60.0);
    let mut img = Raster::from_pixel(w, h, background);
    match kind {
        ElementKind::Text => {
            let line_h = rng.random_range(12..=20u32);
            let mut y = line_h / 3;
            while y + line_h / 2 <= h {
                let len = if y + 2 * line_h > h {
                    rng.random_range(w / 3..=w.max(1))
                } else {
                    w - rng.random_range(0..=w / 10)
                };
                for yy in y..(y + line_h / 2).min(h) {
                    for xx in 0..len.min(w) {
                        img.put_pixel(xx, yy, ink);
                    }
                }
                y += line_h;
            }
        }
        ElementKind::Table => {
            let cols = rng.random_range(2..=6u32);
            let row_h = rng.random_range(18..=36u32);
            let header = shade(tint, 0.35, 200.0);
            for yy in 0..row_h.min(h) {
                for xx in 0..w {
                    img.put_pixel(xx, yy, header);
                }
            }
            for yy in (0..h).step_by(row_h as usize) {
                for xx in 0..w {
                    img.put_pixel(xx, yy, ink);
                }
            }
            for c in 0..=cols {
                let xx = (c * (w - 1)) / cols;
                for yy in 0..h {
                    img.put_pixel(xx, yy, ink);
                }
            }
        }
        ElementKind::Figure => {
            let fx = rng.random_range(0.2..0.8);
            let fy = rng.random_range(0.2..0.8);
            let rad = rng.random_range(0.15..0.4) * f64::from(w.min(h));
            let (cx, cy) = (fx * f64::from(w), fy * f64::from(h));
            for (x, y, p) in img.enumerate_pixels_mut() {
                let t = f64::from(y) / f64::from(h.max(1));
                *p = shade(tint, 0.2 + 0.5 * t, 235.0);
                let (dx, dy) = (f64::from(x) - cx, f64::from(y) - cy);
                if dx * dx + dy * dy <= rad * rad {
                    *p = ink;
                }
            }
        }
    }
    img
}
