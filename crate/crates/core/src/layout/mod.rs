//! Layout synthesis: page geometry, placed elements, the mesh-candidate
//! best-fit engine and the random-arrangement baseline.

mod engine;
mod mesh;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{ElementId, ElementPool, ElementRecord};

pub use engine::{
    apply_central_scaling, generate_dataset, generate_layout, generate_random_layout, place,
    sample_candidate_set, seed_layout,
};
pub use mesh::{best_fit_search, build_meshgrid, fill_rate, BestFit};

/// Page geometry in pixels. Elements live in the interior, i.e. the page
/// minus `margin_px` on every side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageSpec {
    pub width_px: u32,
    pub height_px: u32,
    pub margin_px: u32,
}

impl Default for PageSpec {
    /// A4 at 150 DPI.
    fn default() -> Self {
        Self {
            width_px: 1240,
            height_px: 1754,
            margin_px: 24,
        }
    }
}

impl PageSpec {
    pub fn with_size(width_px: u32, height_px: u32) -> Self {
        Self {
            width_px,
            height_px,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m2 = u64::from(self.margin_px) * 2;
        if u64::from(self.width_px) <= m2 || u64::from(self.height_px) <= m2 {
            return Err(Error::Config(format!(
                "page {}x{} leaves no interior with margin {}",
                self.width_px, self.height_px, self.margin_px
            )));
        }
        Ok(())
    }

    pub fn interior_width(&self) -> u32 {
        self.width_px - 2 * self.margin_px
    }

    pub fn interior_height(&self) -> u32 {
        self.height_px - 2 * self.margin_px
    }

    pub fn interior_area(&self) -> u64 {
        u64::from(self.interior_width()) * u64::from(self.interior_height())
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width_px) * u64::from(self.height_px)
    }

    /// Whether a `w`×`h` box fits the interior unscaled.
    pub fn fits(&self, w: u32, h: u32) -> bool {
        w <= self.interior_width() && h <= self.interior_height()
    }
}

/// Engine knobs. Defaults: at most 15 elements per page, matching stops
/// below a fill rate of 1e-4, and at most 5 small elements per page.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub n_max: usize,
    pub fr_thr: f64,
    pub mini_num: usize,
    /// Elements with area below this fraction of the page interior are small.
    pub small_area_frac: f64,
    pub candidate_set_size: usize,
    /// Number of area strata used by candidate sampling.
    pub strata: usize,
    pub scale_range: [f64; 2],
    /// Shrink applied to every side of a mesh cell.
    pub gutter_px: u32,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_max: 15,
            fr_thr: 1e-4,
            mini_num: 5,
            small_area_frac: 0.02,
            candidate_set_size: 30,
            strata: 3,
            scale_range: [0.85, 1.0],
            gutter_px: 6,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fr_thr > 0.0 && self.fr_thr <= 1.0) {
            return Err(Error::Config(format!("fr_thr {} not in (0, 1]", self.fr_thr)));
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!(
                "scale_range [{lo}, {hi}] must satisfy 0 < low <= high <= 1"
            )));
        }
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be >= 1".into()));
        }
        if self.candidate_set_size == 0 || self.strata == 0 {
            return Err(Error::Config(
                "candidate_set_size and strata must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.small_area_frac) {
            return Err(Error::Config("small_area_frac must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn is_small(&self, page: &PageSpec, w: u32, h: u32) -> bool {
        ((u64::from(w) * u64::from(h)) as f64) < self.small_area_frac * page.interior_area() as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    BestFit,
    Random,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bestfit" => Ok(Method::BestFit),
            "random" => Ok(Method::Random),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::BestFit => "bestfit",
            Method::Random => "random",
        })
    }
}

/// Size and identity of an element considered for placement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub id: ElementId,
    pub category: String,
    pub w: u32,
    pub h: u32,
}

impl Candidate {
    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }
}

impl From<&ElementRecord> for Candidate {
    fn from(r: &ElementRecord) -> Self {
        Self {
            id: r.id,
            category: r.category.clone(),
            w: r.width(),
            h: r.height(),
        }
    }
}

/// Axis-aligned empty rectangle of the current layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl GridCell {
    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacedElement {
    pub element_id: ElementId,
    pub category: String,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub scale: f64,
}

impl PlacedElement {
    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    /// Area of the intersection of the two boxes' interiors.
    pub fn overlap_area(&self, other: &PlacedElement) -> u64 {
        let ix = (self.x + self.w).min(other.x + other.w).saturating_sub(self.x.max(other.x));
        let iy = (self.y + self.h).min(other.y + other.h).saturating_sub(self.y.max(other.y));
        u64::from(ix) * u64::from(iy)
    }

    pub fn within_interior(&self, page: &PageSpec) -> bool {
        let m = page.margin_px;
        self.w >= 1
            && self.h >= 1
            && self.x >= m
            && self.y >= m
            && u64::from(self.x) + u64::from(self.w) <= u64::from(page.width_px - m)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(page.height_px - m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub page: PageSpec,
    pub seed: u64,
    pub placed: Vec<PlacedElement>,
}

impl Layout {
    pub fn empty(page: PageSpec, seed: u64) -> Self {
        Self {
            page,
            seed,
            placed: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("layout serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::json(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Checks the hard guarantees of a best-fit layout: interior bounds,
    /// pairwise zero overlap, the element budget and the small-element cap
    /// (smallness judged on the pool element's unscaled size).
    pub fn check_bestfit_invariants(&self, pool: &ElementPool, cfg: &EngineConfig) -> Result<()> {
        if self.placed.len() > cfg.n_max {
            return Err(Error::Layout(format!(
                "{} elements exceed n_max {}",
                self.placed.len(),
                cfg.n_max
            )));
        }
        let mut small = 0usize;
        for (i, p) in self.placed.iter().enumerate() {
            if !p.within_interior(&self.page) {
                return Err(Error::Layout(format!("element {} leaves the page interior", p.element_id)));
            }
            let rec = pool.get(p.element_id).ok_or(Error::UnknownElement(p.element_id.0))?;
            if cfg.is_small(&self.page, rec.width(), rec.height()) {
                small += 1;
            }
            for q in &self.placed[i + 1..] {
                if p.overlap_area(q) > 0 {
                    return Err(Error::Layout(format!(
                        "elements {} and {} overlap",
                        p.element_id, q.element_id
                    )));
                }
            }
        }
        if small > cfg.mini_num {
            return Err(Error::Layout(format!(
                "{small} small elements exceed mini_num {}",
                cfg.mini_num
            )));
        }
        Ok(())
    }
}
