use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ElementId, ElementPool, ElementRecord, Provenance, Raster};
use crate::coco::CocoDataset;
use crate::error::{Error, Result};
use crate::layout::PageSpec;

/// Result of ingesting a COCO manifest.
#[derive(Debug)]
pub struct LoadedPool {
    pub pool: ElementPool,
    /// Annotations dropped because their bbox left the image or was empty.
    pub skipped_annotations: usize,
}

/// Loads a COCO manifest; image `file_name`s resolve against the manifest's
/// directory.
pub fn load_pool(manifest_path: &Path) -> Result<LoadedPool> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    load_pool_with_images(manifest_path, dir)
}

pub fn load_pool_with_images(manifest_path: &Path, image_dir: &Path) -> Result<LoadedPool> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: CocoDataset =
        serde_json::from_str(&text).map_err(|e| Error::json(manifest_path, e))?;

    let cat_names: HashMap<u64, &str> = manifest
        .categories
        .iter()
        .map(|c| (c.id, c.name.as_str()))
        .collect();
    let mut by_image: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, ann) in manifest.annotations.iter().enumerate() {
        by_image.entry(ann.image_id).or_default().push(i);
    }

    let mut records = Vec::new();
    let mut skipped = 0usize;
    let mut page_sizes: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut next_id = 0u32;
    for img_meta in &manifest.images {
        let Some(anns) = by_image.get(&img_meta.id) else {
            continue;
        };
        let path: PathBuf = image_dir.join(&img_meta.file_name);
        let page = image::open(&path)
            .map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?
            .to_rgb8();
        let mut kept_any = false;
        for &ai in anns {
            let ann = &manifest.annotations[ai];
            let Some(name) = cat_names.get(&ann.category_id) else {
                return Err(Error::Pool(format!(
                    "annotation {} references unknown category {}",
                    ann.id, ann.category_id
                )));
            };
            let Some(bbox) = pixel_bbox(ann.bbox, page.width(), page.height()) else {
                skipped += 1;
                continue;
            };
            let crop = image::imageops::crop_imm(&page, bbox[0], bbox[1], bbox[2], bbox[3]).to_image();
            records.push(ElementRecord::new(
                ElementId(next_id),
                *name,
                crop,
                Provenance::Source {
                    page: img_meta.file_name.clone(),
                    bbox,
                },
            )?);
            next_id += 1;
            kept_any = true;
        }
        if kept_any {
            *page_sizes.entry(page.dimensions()).or_default() += 1;
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} annotations with out-of-bounds or empty bboxes");
    }
    if records.is_empty() {
        return Err(Error::Pool(format!(
            "{} yielded no usable elements",
            manifest_path.display()
        )));
    }
    let hint = page_sizes
        .iter()
        .max_by_key(|(dims, n)| (**n, std::cmp::Reverse(**dims)))
        .map(|(&(w, h), _)| PageSpec::with_size(w, h))
        .filter(|p| p.validate().is_ok());
    let pool = ElementPool::from_records(
        records,
        manifest.categories.iter().map(|c| c.name.clone()),
        hint,
    )?;
    Ok(LoadedPool {
        pool,
        skipped_annotations: skipped,
    })
}

/// Rounds a float `[x, y, w, h]` box to pixels; `None` if it leaves the
/// image or is empty.
fn pixel_bbox(b: [f64; 4], img_w: u32, img_h: u32) -> Option<[u32; 4]> {
    if b.iter().any(|v| !v.is_finite()) || b[0] < 0.0 || b[1] < 0.0 {
        return None;
    }
    let x0 = b[0].round();
    let y0 = b[1].round();
    let x1 = (b[0] + b[2]).round();
    let y1 = (b[1] + b[3]).round();
    if x1 > f64::from(img_w) || y1 > f64::from(img_h) || x1 <= x0 || y1 <= y0 {
        return None;
    }
    Some([x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32])
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolIndex {
    page_spec_hint: Option<PageSpec>,
    categories: Vec<String>,
    elements: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexEntry {
    id: ElementId,
    category: String,
    width: u32,
    height: u32,
    file: String,
    provenance: Provenance,
}

pub const POOL_INDEX: &str = "pool.json";

impl ElementPool {
    /// Writes `pool.json` plus one PNG per element under `elements/`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let elem_dir = dir.join("elements");
        fs::create_dir_all(&elem_dir).map_err(|e| Error::io(&elem_dir, e))?;
        let mut entries = Vec::with_capacity(self.len());
        for rec in self.records() {
            let file = format!("elements/{:06}.png", rec.id.0);
            let path = dir.join(&file);
            rec.raster().save(&path).map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?;
            entries.push(IndexEntry {
                id: rec.id,
                category: rec.category.clone(),
                width: rec.width(),
                height: rec.height(),
                file,
                provenance: rec.provenance.clone(),
            });
        }
        let index = PoolIndex {
            page_spec_hint: self.page_spec_hint,
            categories: self.category_names().map(str::to_owned).collect(),
            elements: entries,
        };
        let path = dir.join(POOL_INDEX);
        let text = serde_json::to_string_pretty(&index).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Reads a directory written by [`ElementPool::save`].
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let path = dir.join(POOL_INDEX);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: PoolIndex = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let mut records = Vec::with_capacity(index.elements.len());
        for e in index.elements {
            let img_path = dir.join(&e.file);
            let raster: Raster = image::open(&img_path)
                .map_err(|source| Error::Image {
                    path: img_path.clone(),
                    source,
                })?
                .to_rgb8();
            if raster.dimensions() != (e.width, e.height) {
                return Err(Error::Pool(format!(
                    "{}: raster is {:?}, index says {}x{}",
                    img_path.display(),
                    raster.dimensions(),
                    e.width,
                    e.height
                )));
            }
            records.push(ElementRecord::new(e.id, e.category, raster, e.provenance)?);
        }
        ElementPool::from_records(records, index.categories, index.page_spec_hint)
    }
}
