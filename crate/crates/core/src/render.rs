//! Page compositing and annotation/debug export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::Rgb;

use crate::coco::{CocoAnnotation, CocoCategory, CocoDataset, CocoImage};
use crate::error::{Error, Result};
use crate::layout::{GridCell, Layout};
use crate::pool::{ElementPool, Raster};

pub struct RenderedPage<'a> {
    pub raster: Raster,
    pub layout: &'a Layout,
}

impl RenderedPage<'_> {
    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.raster.save(path).map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })
    }
}

/// Resizes with exact area averaging when shrinking an axis and nearest
/// neighbour when enlarging it. Separable: rows first, then columns, in
/// f64 with a single rounding at the end.
pub fn resize(src: &Raster, w: u32, h: u32) -> Raster {
    if src.dimensions() == (w, h) {
        return src.clone();
    }
    let (sw, sh) = src.dimensions();
    let xs = axis_weights(sw, w);
    let ys = axis_weights(sh, h);
    let (sw, w) = (sw as usize, w as usize);
    let raw = src.as_raw();

    // Horizontal pass: sh rows of w normalized pixels.
    let mut tmp = vec![0.0f64; sh as usize * w * 3];
    for y in 0..sh as usize {
        let row = &raw[y * sw * 3..(y + 1) * sw * 3];
        for (ox, taps) in xs.iter().enumerate() {
            let total: f64 = taps.iter().map(|t| t.1).sum();
            let dst = &mut tmp[(y * w + ox) * 3..(y * w + ox) * 3 + 3];
            for &(sx, wx) in taps {
                let p = &row[sx as usize * 3..sx as usize * 3 + 3];
                for c in 0..3 {
                    dst[c] += wx * f64::from(p[c]);
                }
            }
            dst.iter_mut().for_each(|v| *v /= total);
        }
    }

    let mut out = vec![0u8; w * h as usize * 3];
    for (oy, taps) in ys.iter().enumerate() {
        let total: f64 = taps.iter().map(|t| t.1).sum();
        for ox in 0..w {
            let mut acc = [0.0f64; 3];
            for &(sy, wy) in taps {
                let p = &tmp[(sy as usize * w + ox) * 3..(sy as usize * w + ox) * 3 + 3];
                for c in 0..3 {
                    acc[c] += wy * p[c];
                }
            }
            for c in 0..3 {
                out[(oy * w + ox) * 3 + c] = (acc[c] / total).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Raster::from_raw(w as u32, h, out).expect("buffer matches dimensions")
}

/// Source taps and weights for each output index along one axis.
fn axis_weights(src: u32, dst: u32) -> Vec<Vec<(u32, f64)>> {
    let (s, d) = (u64::from(src), u64::from(dst));
    (0..d)
        .map(|o| {
            if d >= s {
                return vec![(((o * s) / d) as u32, 1.0)];
            }
            // Output pixel o covers source span [o*s/d, (o+1)*s/d); work in
            // units of 1/d to stay exact.
            let (lo, hi) = (o * s, (o + 1) * s);
            let mut taps = Vec::new();
            let mut i = lo / d;
            while i * d < hi {
                let a = lo.max(i * d);
                let b = hi.min((i + 1) * d);
                taps.push((i as u32, (b - a) as f64));
                i += 1;
            }
            taps
        })
        .collect()
}

/// Pastes every placed element, resized to its placed size, onto a white
/// page in placement order.
pub fn compose_page<'a>(layout: &'a Layout, pool: &ElementPool) -> Result<RenderedPage<'a>> {
    let page = &layout.page;
    let mut raster = Raster::from_pixel(page.width_px, page.height_px, Rgb([255, 255, 255]));
    for p in &layout.placed {
        let rec = pool
            .get(p.element_id)
            .ok_or(Error::UnknownElement(p.element_id.0))?;
        let scaled = resize(rec.raster(), p.w, p.h);
        image::imageops::replace(&mut raster, &scaled, i64::from(p.x), i64::from(p.y));
    }
    Ok(RenderedPage { raster, layout })
}

pub fn page_file_name(index: usize) -> String {
    format!("page_{index:06}.png")
}

/// Builds the COCO document for `layouts`. Image `i` is `page_{i:06}.png`
/// with id `i + 1`; annotation ids run from 1 in layout order; category ids
/// follow the order of `categories`, starting at 1.
pub fn coco_dataset(layouts: &[Layout], categories: &[String]) -> Result<CocoDataset> {
    let cat_ids: BTreeMap<&str, u64> = categories
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i as u64 + 1))
        .collect();
    let mut ds = CocoDataset {
        categories: categories
            .iter()
            .enumerate()
            .map(|(i, n)| CocoCategory {
                id: i as u64 + 1,
                name: n.clone(),
            })
            .collect(),
        ..CocoDataset::default()
    };
    let mut ann_id = 1u64;
    for (i, l) in layouts.iter().enumerate() {
        let image_id = i as u64 + 1;
        ds.images.push(CocoImage {
            id: image_id,
            file_name: page_file_name(i),
            width: l.page.width_px,
            height: l.page.height_px,
        });
        for p in &l.placed {
            let category_id = *cat_ids.get(p.category.as_str()).ok_or_else(|| {
                Error::Pool(format!("category {:?} missing from vocabulary", p.category))
            })?;
            ds.annotations.push(CocoAnnotation {
                id: ann_id,
                image_id,
                category_id,
                bbox: [
                    f64::from(p.x),
                    f64::from(p.y),
                    f64::from(p.w),
                    f64::from(p.h),
                ],
                area: p.area() as f64,
                iscrowd: 0,
            });
            ann_id += 1;
        }
    }
    Ok(ds)
}

pub fn export_coco(layouts: &[Layout], categories: &[String], out_path: &Path) -> Result<()> {
    let ds = coco_dataset(layouts, categories)?;
    let mut text = serde_json::to_string_pretty(&ds).map_err(|e| Error::json(out_path, e))?;
    text.push('\n');
    fs::write(out_path, text).map_err(|e| Error::io(out_path, e))
}

fn category_color(name: &str) -> String {
    // FNV-1a over the name picks a stable hue.
    let mut h: u32 = 0x811c_9dc5;
    for b in name.bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    format!("hsl({}, 65%, 45%)", h % 360)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// SVG with one `class="element"` rect per placed element and, when given,
/// one dashed `class="cell"` rect per mesh cell.
pub fn svg_debug(layout: &Layout, cells: Option<&[GridCell]>) -> String {
    let page = &layout.page;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = page.width_px,
        h = page.height_px
    );
    let _ = writeln!(
        s,
        r#"  <rect class="page" x="0" y="0" width="{}" height="{}" fill="white" stroke="black"/>"#,
        page.width_px, page.height_px
    );
    for c in cells.unwrap_or_default() {
        let _ = writeln!(
            s,
            r#"  <rect class="cell" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="gray" stroke-dasharray="6 4"/>"#,
            c.x, c.y, c.w, c.h
        );
    }
    for p in &layout.placed {
        let color = category_color(&p.category);
        let _ = writeln!(
            s,
            r#"  <rect class="element" x="{}" y="{}" width="{}" height="{}" fill="{color}" fill-opacity="0.25" stroke="{color}"/>"#,
            p.x, p.y, p.w, p.h
        );
        let _ = writeln!(
            s,
            r#"  <text x="{}" y="{}" font-size="14" fill="{color}">{} #{}</text>"#,
            p.x + 4,
            p.y + 16,
            escape(&p.category),
            p.element_id
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn export_svg_debug(layout: &Layout, cells: Option<&[GridCell]>, out_path: &Path) -> Result<()> {
    fs::write(out_path, svg_debug(layout, cells)).map_err(|e| Error::io(out_path, e))
}
