//! Category-indexed pool of cropped document elements.
//!
//! A pool is built once (from a COCO manifest, a saved pool directory, or the
//! procedural generator), optionally enlarged with augmented copies of rare
//! categories, and then shared read-only by layout generation and rendering.

mod augment;
mod io;
mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::PageSpec;

pub use augment::{
    apply_augmentation, augment_rare_categories, replay_ops, sample_ops, sobel_edges,
    sobel_magnitude, AugOp, AugmentConfig, AugmentReport,
};
pub use io::{load_pool, load_pool_with_images, LoadedPool};
pub use synthetic::{make_synthetic_pool, ElementKind, SizeProfile, SyntheticPoolSpec};

/// RGB pixel buffer of an element.
pub type Raster = image::RgbImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub u32);

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Where an element came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    /// Cropped from a seed page; bbox is `[x, y, w, h]` in source pixels.
    Source { page: String, bbox: [u32; 4] },
    /// Drawn by the procedural generator.
    Synthetic { seed: u64, kind: ElementKind },
    /// Derived from `parent` by replaying `ops` in order.
    Augmented {
        parent: ElementId,
        ops: Vec<AugOp>,
        seed: u64,
    },
}

impl Provenance {
    pub fn is_augmented(&self) -> bool {
        matches!(self, Provenance::Augmented { .. })
    }
}

#[derive(Clone, Debug)]
pub struct ElementRecord {
    pub id: ElementId,
    pub category: String,
    raster: Arc<Raster>,
    pub provenance: Provenance,
}

impl ElementRecord {
    pub fn new(
        id: ElementId,
        category: impl Into<String>,
        raster: Raster,
        provenance: Provenance,
    ) -> Result<Self> {
        if raster.width() == 0 || raster.height() == 0 {
            return Err(Error::Pool(format!("element {id} has an empty raster")));
        }
        Ok(Self {
            id,
            category: category.into(),
            raster: Arc::new(raster),
            provenance,
        })
    }

    pub fn width(&self) -> u32 {
        self.raster.width()
    }

    pub fn height(&self) -> u32 {
        self.raster.height()
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }
}

/// Element pool keyed by category name.
#[derive(Clone, Debug, Default)]
pub struct ElementPool {
    categories: BTreeMap<String, Vec<ElementRecord>>,
    index: HashMap<ElementId, (String, usize)>,
    pub page_spec_hint: Option<PageSpec>,
}

impl ElementPool {
    /// Builds a pool, keeping `extra_categories` as keys even when they hold
    /// no records.
    pub fn from_records<I, S>(
        records: Vec<ElementRecord>,
        extra_categories: I,
        page_spec_hint: Option<PageSpec>,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut categories: BTreeMap<String, Vec<ElementRecord>> = BTreeMap::new();
        for name in extra_categories {
            categories.entry(name.into()).or_default();
        }
        for rec in records {
            categories.entry(rec.category.clone()).or_default().push(rec);
        }
        for recs in categories.values_mut() {
            recs.sort_by_key(|r| r.id);
        }
        let mut pool = Self {
            categories,
            index: HashMap::new(),
            page_spec_hint,
        };
        pool.reindex()?;
        Ok(pool)
    }

    fn reindex(&mut self) -> Result<()> {
        self.index.clear();
        for (name, recs) in &self.categories {
            for (pos, rec) in recs.iter().enumerate() {
                if self.index.insert(rec.id, (name.clone(), pos)).is_some() {
                    return Err(Error::Pool(format!("duplicate element id {}", rec.id)));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, id: ElementId) -> Option<&ElementRecord> {
        let (cat, pos) = self.index.get(&id)?;
        self.categories.get(cat).map(|recs| &recs[*pos])
    }

    pub fn category_names(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    pub fn category(&self, name: &str) -> Option<&[ElementRecord]> {
        self.categories.get(name).map(Vec::as_slice)
    }

    pub fn categories(&self) -> &BTreeMap<String, Vec<ElementRecord>> {
        &self.categories
    }

    /// Record counts per category (empty categories included).
    pub fn counts(&self) -> BTreeMap<String, usize> {
        self.categories
            .iter()
            .map(|(k, v)| (k.clone(), v.len()))
            .collect()
    }

    /// All records in ascending id order.
    pub fn records(&self) -> Vec<&ElementRecord> {
        let mut all: Vec<&ElementRecord> = self.categories.values().flatten().collect();
        all.sort_by_key(|r| r.id);
        all
    }

    pub fn max_id(&self) -> Option<ElementId> {
        self.index.keys().max().copied()
    }

    pub(crate) fn extend(&mut self, extra: Vec<ElementRecord>) -> Result<()> {
        for rec in extra {
            self.categories
                .entry(rec.category.clone())
                .or_default()
                .push(rec);
        }
        for recs in self.categories.values_mut() {
            recs.sort_by_key(|r| r.id);
        }
        self.reindex()
    }
}
